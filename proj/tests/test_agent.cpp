#include <catch2/catch.hpp>

#include <cmath>

#include "guesslab/agent.hpp"
#include "guesslab/grad_check.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/world.hpp"

using namespace guesslab;
using namespace guesslab::agent;
using lingo::Answer;
using lingo::Dialogue;
using lingo::Turn;
using lingo::Vocabulary;
using world::Scene;
using world::SceneObject;

namespace {

lingo::Taxonomy tax() { return lingo::Taxonomy::desk_default(); }

Vocabulary toy_vocab() {
    Dialogue d;
    for (const char* q : {"is it a cat ?", "is it a car ?", "is it red ?", "is it white ?",
                          "is it on the left ?", "is it on the right ?"})
        d.turns.push_back(Turn{q, Answer::Yes});
    return lingo::build_vocab({d});
}

Scene toy_scene(std::size_t feature_dim) {
    Scene s;
    s.id = 0;
    SceneObject a;
    a.id = 0;
    a.category = "cat";
    a.super_category = "animal";
    a.color = "white";
    a.bbox = {5.0, 40.0, 20.0, 20.0};
    SceneObject b;
    b.id = 1;
    b.category = "car";
    b.super_category = "vehicle";
    b.color = "red";
    b.bbox = {70.0, 40.0, 25.0, 30.0};
    s.objects = {a, b};
    Rng rng(99);
    s.features = Tensor({feature_dim});
    for (std::size_t i = 0; i < feature_dim; ++i) s.features[i] = rng.uniform(-0.5, 0.5);
    return s;
}

AgentDims tiny_dims(const Vocabulary& vocab) {
    AgentDims d;
    d.vocab = vocab.size();
    d.n_categories = 12;
    d.token_embed = 5;
    d.lstm_e = 7;
    d.state = 6;
    d.feature = 4;
    d.category_embed = 5;
    d.guesser_hidden = 6;
    return d;
}

Dialogue toy_dialogue() {
    Dialogue d;
    d.id = 0;
    d.scene_id = 0;
    d.target_id = 0;
    d.turns.push_back(Turn{"is it a cat ?", Answer::Yes});
    d.turns.push_back(Turn{"is it white ?", Answer::Yes});
    d.status = lingo::Status::Success;
    d.guess_id = 0;
    return d;
}

}  // namespace

TEST_CASE("encoder state basics", "[agent]") {
    Vocabulary vocab = toy_vocab();
    AgentDims dims = tiny_dims(vocab);
    Scene scene = toy_scene(dims.feature);

    SECTION("all-zero parameters give a zero state") {
        QuestionerModel m(Mode::Joint, dims, 3);
        for (auto* s : m.all_stores())
            for (auto& p : s->params()) p.value.fill(0.0);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        run.feed(lingo::tokenize_ids("is it a cat ? <yes>", vocab));
        auto h = run.encode_state();
        for (double v : h) CHECK(v == 0.0);
    }

    SECTION("initial state is tanh(W.[0; I])") {
        QuestionerModel m(Mode::Joint, dims, 4);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        auto h0 = run.encode_state();
        // independent recomputation: LSTM_e hidden is zero before any token
        std::vector<double> z(dims.lstm_e + dims.feature, 0.0);
        for (std::size_t i = 0; i < dims.feature; ++i) z[dims.lstm_e + i] = scene.features[i];
        Tensor ref = affine_tanh(Tensor({z.size()}, z), *m.enc.W, *m.enc.b);
        REQUIRE(h0.size() == ref.size());
        for (std::size_t i = 0; i < h0.size(); ++i) CHECK(h0[i] == Approx(ref[i]).margin(1e-12));
    }

    SECTION("identical token streams give identical state sequences") {
        QuestionerModel m(Mode::Joint, dims, 5);
        auto play = [&] {
            EncoderRun run(m.enc, scene.features.data(), dims.feature);
            std::vector<std::vector<double>> states;
            states.push_back(run.encode_state());
            run.feed(lingo::tokenize_ids("is it a cat ? <yes>", vocab));
            states.push_back(run.encode_state());
            run.feed(lingo::tokenize_ids("is it red ? <no>", vocab));
            states.push_back(run.encode_state());
            return states;
        };
        auto s1 = play();
        auto s2 = play();
        REQUIRE(s1.size() == s2.size());
        for (std::size_t t = 0; t < s1.size(); ++t)
            for (std::size_t i = 0; i < s1[t].size(); ++i) CHECK(s1[t][i] == s2[t][i]);
    }

    SECTION("state entries stay inside (-1, 1)") {
        QuestionerModel m(Mode::Joint, dims, 6);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        run.feed(lingo::tokenize_ids("is it a cat ? <yes> is it red ? <no>", vocab));
        auto h = run.encode_state();
        for (double v : h) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
    }

    SECTION("out-of-vocab token id is a domain error") {
        QuestionerModel m(Mode::Joint, dims, 6);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        REQUIRE_THROWS_AS(run.feed(dims.vocab + 5), DomainError);
    }
}

TEST_CASE("question decoding", "[agent]") {
    Vocabulary vocab = toy_vocab();
    AgentDims dims = tiny_dims(vocab);
    Scene scene = toy_scene(dims.feature);

    SECTION("greedy decoding is deterministic") {
        QuestionerModel m(Mode::Joint, dims, 7);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        auto h = run.encode_state();
        auto q1 = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 0.0, nullptr);
        auto q2 = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 0.0, nullptr);
        CHECK(q1 == q2);
        CHECK(q1.back() == Vocabulary::kQMark);
    }

    SECTION("temperature zero equals greedy even with an rng") {
        QuestionerModel m(Mode::Joint, dims, 8);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        auto h = run.encode_state();
        Rng rng(5);
        auto greedy = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 0.0, nullptr);
        auto sampled = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 0.0, &rng);
        CHECK(greedy == sampled);
    }

    SECTION("length cap forces a terminal question mark") {
        QuestionerModel m(Mode::Joint, dims, 9);
        // Rig the projection: uniform logits except a strong bias against "?"
        // and for the first real token.
        for (auto& p : m.qgen_store.params()) p.value.fill(0.0);
        m.qgen.proj_b->value[Vocabulary::kQMark] = -10.0;
        m.qgen.proj_b->value[Vocabulary::kReservedCount] = 1.0;
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        auto h = run.encode_state();
        auto q = m.qgen.decode(h, scene.features.data(), dims.feature, 3, 0.0, nullptr);
        REQUIRE(q.size() == 4);  // 3 emitted tokens + forced "?"
        CHECK(q[0] == Vocabulary::kReservedCount);
        CHECK(q[3] == Vocabulary::kQMark);
    }

    SECTION("sampling is reproducible given the rng stream") {
        QuestionerModel m(Mode::Joint, dims, 10);
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        auto h = run.encode_state();
        Rng r1(11), r2(11);
        auto a = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 1.0, &r1);
        auto b = m.qgen.decode(h, scene.features.data(), dims.feature, 12, 1.0, &r2);
        CHECK(a == b);
    }
}

TEST_CASE("qgen teacher-forced loss", "[agent]") {
    Vocabulary vocab = toy_vocab();
    AgentDims dims = tiny_dims(vocab);
    Scene scene = toy_scene(dims.feature);
    Dialogue gold = toy_dialogue();
    const auto taxonomy = tax();

    SECTION("uniform model loss is tokens * ln(vocab)") {
        QuestionerModel m(Mode::Joint, dims, 11);
        for (auto& p : m.qgen_store.params()) p.value.fill(0.0);
        for (auto& p : m.enc_store.params()) p.value.fill(0.0);
        DialogueLossOptions opts;
        opts.guesser = false;
        auto res = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        // 5 + 4 question tokens, each uniform over the full vocab
        CHECK(res.qgen_tokens == 9);
        CHECK(res.qgen_loss ==
              Approx(9.0 * std::log(static_cast<double>(vocab.size()))).epsilon(1e-12));
    }

    SECTION("a model saturated on the gold token has (near) zero loss") {
        QuestionerModel m(Mode::Joint, dims, 12);
        for (auto& p : m.qgen_store.params()) p.value.fill(0.0);
        for (auto& p : m.enc_store.params()) p.value.fill(0.0);
        m.qgen.proj_b->value[Vocabulary::kQMark] = 50.0;
        Dialogue one;
        one.scene_id = 0;
        one.target_id = 0;
        one.turns.push_back(Turn{"?", Answer::No});
        DialogueLossOptions opts;
        opts.guesser = false;
        auto res = dialogue_losses(m, one, scene, taxonomy, vocab, opts);
        CHECK(res.qgen_loss <= 1e-12);
    }

    SECTION("loss equals the sum of independently computed per-token nll values") {
        QuestionerModel m(Mode::Joint, dims, 13);
        DialogueLossOptions opts;
        opts.guesser = false;
        auto res = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);

        // Independent recomputation straight from the tapes' probabilities.
        double manual = 0.0;
        EncoderRun run(m.enc, scene.features.data(), dims.feature);
        for (const auto& turn : gold.turns) {
            auto h = run.encode_state();
            QgenView::TurnTape tape;
            auto qids = lingo::tokenize_ids(turn.question, vocab);
            m.qgen.turn_loss(h, scene.features.data(), dims.feature, qids, tape);
            for (std::size_t i = 0; i < tape.target_ids.size(); ++i)
                manual += nll(tape.probs[i][tape.target_ids[i]]);
            auto ids = qids;
            ids.push_back(lingo::answer_token_id(turn.answer));
            run.feed(ids);
        }
        CHECK(res.qgen_loss == Approx(manual).epsilon(1e-12));
    }

    SECTION("one Adam step on the same example reduces the loss") {
        QuestionerModel m(Mode::Joint, dims, 14);
        DialogueLossOptions opts;
        opts.guesser = false;
        opts.with_grad = true;
        auto before = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        for (auto* s : m.stores_for(true, false)) adam_step(*s, 1e-3);
        opts.with_grad = false;
        auto after = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(after.qgen_loss < before.qgen_loss);
    }
}

TEST_CASE("guesser distribution", "[agent]") {
    Vocabulary vocab = toy_vocab();
    AgentDims dims = tiny_dims(vocab);
    Scene scene = toy_scene(dims.feature);
    const auto taxonomy = tax();

    SECTION("probabilities come from softmax of dot products") {
        QuestionerModel m(Mode::Joint, dims, 15);
        std::vector<double> h(dims.state);
        Rng rng(3);
        for (auto& v : h) v = rng.uniform(-1.0, 1.0);
        GuesserView::Tape tape;
        auto probs = m.guesser.forward(h, scene, taxonomy, tape);

        // independent recomputation from the recorded object representations
        std::vector<double> scores;
        for (const auto& r : tape.r) {
            double s = 0.0;
            for (std::size_t k = 0; k < h.size(); ++k) s += h[k] * r[k];
            scores.push_back(s);
        }
        Tensor ref = softmax(Tensor::row(scores));
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.size(); ++j) {
            CHECK(probs[j] == Approx(ref[j]).margin(1e-12));
            sum += probs[j];
        }
        CHECK(sum == Approx(1.0).margin(1e-9));
    }

    SECTION("zero state gives the uniform distribution") {
        QuestionerModel m(Mode::Joint, dims, 16);
        std::vector<double> h(dims.state, 0.0);
        GuesserView::Tape tape;
        auto probs = m.guesser.forward(h, scene, taxonomy, tape);
        for (double p : probs) CHECK(p == Approx(0.5).margin(1e-12));
    }

    SECTION("positive scaling of the state preserves the argmax") {
        QuestionerModel m(Mode::Joint, dims, 17);
        std::vector<double> h(dims.state);
        Rng rng(4);
        for (auto& v : h) v = rng.uniform(-1.0, 1.0);
        GuesserView::Tape t1, t2;
        auto p1 = m.guesser.forward(h, scene, taxonomy, t1);
        for (auto& v : h) v *= 3.5;
        auto p2 = m.guesser.forward(h, scene, taxonomy, t2);
        const auto argmax = [](const std::vector<double>& p) {
            return std::distance(p.begin(), std::max_element(p.begin(), p.end()));
        };
        CHECK(argmax(p1) == argmax(p2));
    }

    SECTION("fewer than two objects is a domain error") {
        QuestionerModel m(Mode::Joint, dims, 18);
        Scene solo = scene;
        solo.objects.resize(1);
        std::vector<double> h(dims.state, 0.1);
        GuesserView::Tape tape;
        REQUIRE_THROWS_AS(m.guesser.forward(h, solo, taxonomy, tape), DomainError);
    }

    SECTION("uniform over k objects costs ln k") {
        QuestionerModel m(Mode::Joint, dims, 19);
        Dialogue gold = toy_dialogue();
        for (auto* s : m.all_stores())
            for (auto& p : s->params()) p.value.fill(0.0);
        DialogueLossOptions opts;
        opts.qgen = false;
        auto res = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(res.guesser_loss == Approx(std::log(2.0)).epsilon(1e-12));
    }

    SECTION("missing target is a lookup error") {
        QuestionerModel m(Mode::Joint, dims, 20);
        Dialogue gold = toy_dialogue();
        gold.target_id = 77;
        DialogueLossOptions opts;
        opts.qgen = false;
        REQUIRE_THROWS_AS(dialogue_losses(m, gold, scene, taxonomy, vocab, opts), LookupError);
    }
}

TEST_CASE("composite gradients through the shared encoder", "[agent]") {
    Vocabulary vocab = toy_vocab();
    const auto taxonomy = tax();
    const double kScale = 1e-3;

    auto one_seed = [&](uint64_t seed, bool with_qgen, bool with_guesser) {
        AgentDims dims = tiny_dims(vocab);
        QuestionerModel m(Mode::Joint, dims, seed);
        Scene scene = toy_scene(dims.feature);
        Dialogue gold = toy_dialogue();
        auto loss = [&](bool with_grad) {
            DialogueLossOptions opts;
            opts.qgen = with_qgen;
            opts.guesser = with_guesser;
            opts.with_grad = with_grad;
            opts.qgen_scale = kScale;
            opts.guesser_scale = kScale;
            auto res = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
            return kScale * (res.qgen_loss + res.guesser_loss);
        };
        return grad_check(m.all_stores(), loss);
    };

    SECTION("qgen loss through the encoder") {
        double worst = 0.0;
        for (uint64_t seed = 1; seed <= 3; ++seed)
            worst = std::max(worst, one_seed(seed, true, false));
        CHECK(worst <= 1e-4);
    }

    SECTION("guesser loss through the encoder") {
        double worst = 0.0;
        for (uint64_t seed = 4; seed <= 6; ++seed)
            worst = std::max(worst, one_seed(seed, false, true));
        CHECK(worst <= 1e-4);
    }

    SECTION("joint multi-task loss") {
        double worst = 0.0;
        for (uint64_t seed = 7; seed <= 9; ++seed)
            worst = std::max(worst, one_seed(seed, true, true));
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("multi-task sharing and decoupled isolation", "[agent]") {
    Vocabulary vocab = toy_vocab();
    AgentDims dims = tiny_dims(vocab);
    Scene scene = toy_scene(dims.feature);
    Dialogue gold = toy_dialogue();
    const auto taxonomy = tax();

    auto grad_norm = [](const ParamStore& s) {
        double acc = 0.0;
        for (const auto& p : s.params())
            for (std::size_t i = 0; i < p.grad.size(); ++i) acc += p.grad[i] * p.grad[i];
        return std::sqrt(acc);
    };

    SECTION("joint: both losses reach the shared encoder") {
        QuestionerModel m(Mode::Joint, dims, 31);
        DialogueLossOptions opts;
        opts.with_grad = true;

        opts.qgen = true;
        opts.guesser = false;
        dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(grad_norm(m.enc_store) > 0.0);
        CHECK(grad_norm(m.qgen_store) > 0.0);
        CHECK(grad_norm(m.guesser_store) == 0.0);
        for (auto* s : m.all_stores()) s->zero_grads();

        opts.qgen = false;
        opts.guesser = true;
        dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(grad_norm(m.enc_store) > 0.0);
        CHECK(grad_norm(m.qgen_store) == 0.0);
        CHECK(grad_norm(m.guesser_store) > 0.0);
    }

    SECTION("decoupled: each loss touches only its own encoder") {
        QuestionerModel m(Mode::Decoupled, dims, 32);
        DialogueLossOptions opts;
        opts.with_grad = true;

        opts.qgen = true;
        opts.guesser = false;
        dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(grad_norm(m.enc_store) > 0.0);
        CHECK(grad_norm(m.enc_g_store) == 0.0);
        for (auto* s : m.all_stores()) s->zero_grads();

        opts.qgen = false;
        opts.guesser = true;
        dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
        CHECK(grad_norm(m.enc_store) == 0.0);
        CHECK(grad_norm(m.enc_g_store) > 0.0);
        CHECK(grad_norm(m.qgen_store) == 0.0);
    }

    SECTION("decoupled gradients also match finite differences") {
        const double kScale = 1e-3;
        QuestionerModel m(Mode::Decoupled, dims, 33);
        auto loss = [&](bool with_grad) {
            DialogueLossOptions opts;
            opts.with_grad = with_grad;
            opts.qgen_scale = kScale;
            opts.guesser_scale = kScale;
            auto res = dialogue_losses(m, gold, scene, taxonomy, vocab, opts);
            return kScale * (res.qgen_loss + res.guesser_loss);
        };
        CHECK(grad_check(m.all_stores(), loss) <= 1e-4);
    }
}
