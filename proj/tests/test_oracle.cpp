#include <catch2/catch.hpp>

#include "guesslab/grad_check.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/oracle.hpp"
#include "guesslab/world.hpp"

using namespace guesslab;
using namespace guesslab::oracle;
using lingo::Answer;
using lingo::Dialogue;
using lingo::Vocabulary;
using world::FeatureProjector;
using world::Scene;
using world::SceneObject;

namespace {

Scene small_scene() {
    Scene s;
    s.id = 0;
    SceneObject a;
    a.id = 0;
    a.category = "cat";
    a.super_category = "animal";
    a.color = "white";
    a.bbox = {5.0, 40.0, 20.0, 20.0};  // center (15, 50): left zone
    SceneObject b;
    b.id = 1;
    b.category = "car";
    b.super_category = "vehicle";
    b.color = "red";
    b.bbox = {70.0, 40.0, 20.0, 20.0};  // center (80, 50): right zone
    s.objects = {a, b};
    return s;
}

Vocabulary desk_vocab() {
    Dialogue d;
    for (const char* q :
         {"is it a cat ?", "is it a car ?", "is it an animal ?", "is it a vehicle ?",
          "is it white ?", "is it red ?", "is it on the left ?", "is it on the right ?",
          "is it at the top ?", "is it at the bottom ?", "is it in the middle ?", "is it big ?",
          "is it small ?"})
        d.turns.push_back(lingo::Turn{q, Answer::Yes});
    return lingo::build_vocab({d});
}

}  // namespace

TEST_CASE("rule oracle answers from predicates", "[oracle]") {
    const auto tax = lingo::Taxonomy::desk_default();
    Scene s = small_scene();

    CHECK(rule_answer(s, 0, "is it a cat ?", tax) == Answer::Yes);
    CHECK(rule_answer(s, 1, "is it a cat ?", tax) == Answer::No);
    CHECK(rule_answer(s, 0, "is it on the right ?", tax) == Answer::No);
    CHECK(rule_answer(s, 0, "is it on the left ?", tax) == Answer::Yes);
    CHECK(rule_answer(s, 0, "<unk> <unk> ?", tax) == Answer::No);
    CHECK(rule_answer(s, 0, "", tax) == Answer::No);
    CHECK(rule_answer(s, 1, "is it a vehicle ?", tax) == Answer::Yes);
    REQUIRE_THROWS_AS(rule_answer(s, 9, "is it a cat ?", tax), LookupError);
}

TEST_CASE("neural oracle forward properties", "[oracle]") {
    const auto tax = lingo::Taxonomy::desk_default();
    Vocabulary vocab = desk_vocab();
    OracleDims dims;
    dims.vocab = vocab.size();
    dims.n_categories = tax.categories().size();

    SECTION("zeroed output layer gives the uniform answer distribution") {
        ParamStore store(9);
        OracleModel m = OracleModel::build(store, dims);
        m.mlp.W2->value.fill(0.0);
        m.mlp.b2->value.fill(0.0);
        Scene s = small_scene();
        auto ex = make_qa_example(s, 0, "is it a cat ?", Answer::Yes, tax, vocab);
        OracleModel::Tape tape;
        auto probs = m.forward(ex.category_index, ex.spatial8, ex.question_ids, tape);
        CHECK(probs[0] == Approx(0.5).margin(1e-12));
        CHECK(probs[1] == Approx(0.5).margin(1e-12));
    }

    SECTION("purity: identical inputs give identical outputs") {
        ParamStore store(10);
        OracleModel m = OracleModel::build(store, dims);
        Scene s = small_scene();
        auto ex = make_qa_example(s, 1, "is it red ?", Answer::Yes, tax, vocab);
        OracleModel::Tape t1, t2;
        auto p1 = m.forward(ex.category_index, ex.spatial8, ex.question_ids, t1);
        auto p2 = m.forward(ex.category_index, ex.spatial8, ex.question_ids, t2);
        CHECK(p1[0] == p2[0]);
        CHECK(p1[1] == p2[1]);
    }

    SECTION("empty question is a domain error") {
        ParamStore store(11);
        OracleModel m = OracleModel::build(store, dims);
        OracleModel::Tape tape;
        REQUIRE_THROWS_AS(m.forward(0, Tensor::zeros({8}), {}, tape), DomainError);
    }
}

TEST_CASE("neural oracle gradients match finite differences", "[oracle]") {
    const auto tax = lingo::Taxonomy::desk_default();
    Vocabulary vocab = desk_vocab();

    // The checked function is a scaled QA loss: scaling keeps the central
    // difference quotient above the 64-bit rounding floor for coordinates
    // whose true gradient is ~1e-8, while exercising the same backward path.
    const double kScale = 1e-3;

    const double worst = grad_check_many(10, [&](uint64_t seed) {
        OracleDims dims;
        dims.vocab = vocab.size();
        dims.n_categories = tax.categories().size();
        dims.token_embed = 5;
        dims.category_embed = 4;
        dims.lstm_hidden = 6;
        dims.mlp_hidden = 5;
        ParamStore store(seed);
        OracleModel m = OracleModel::build(store, dims);
        Scene s = small_scene();
        std::vector<QaExample> examples;
        for (int target : {0, 1})
            for (const char* q : {"is it a cat ?", "is it on the left ?", "is it white ?"})
                examples.push_back(
                    make_qa_example(s, target, q, rule_answer(s, target, q, tax), tax, vocab));
        auto loss = [&](bool with_grad) {
            double L = 0.0;
            for (const auto& ex : examples) {
                OracleModel::Tape tape;
                auto probs = m.forward(ex.category_index, ex.spatial8, ex.question_ids, tape);
                L += kScale * nll(probs[ex.answer == Answer::Yes ? 0 : 1]);
                if (with_grad) m.backward(tape, ex.answer, kScale);
            }
            return L;
        };
        return grad_check(store, loss);
    });
    CHECK(worst <= 1e-4);
}

TEST_CASE("oracle training", "[oracle]") {
    const auto tax = lingo::Taxonomy::desk_default();
    Vocabulary vocab = desk_vocab();
    OracleDims dims;
    dims.vocab = vocab.size();
    dims.n_categories = tax.categories().size();
    dims.token_embed = 8;
    dims.category_embed = 8;
    dims.lstm_hidden = 12;
    dims.mlp_hidden = 12;

    SECTION("memorizes a single pair") {
        ParamStore store(21);
        OracleModel m = OracleModel::build(store, dims);
        Scene s = small_scene();
        std::vector<QaExample> data = {
            make_qa_example(s, 0, "is it a cat ?", Answer::Yes, tax, vocab)};
        auto curve = train_oracle(store, m, data, 200, 1e-2, 8, 77);
        CHECK(curve.back().accuracy == 1.0);
    }

    SECTION("frozen seed reproduces the curve") {
        Scene s = small_scene();
        auto run = [&] {
            ParamStore store(22);
            OracleModel m = OracleModel::build(store, dims);
            std::vector<QaExample> data;
            for (const char* q : {"is it a cat ?", "is it red ?", "is it on the left ?"})
                for (int target : {0, 1})
                    data.push_back(make_qa_example(
                        s, target, q, rule_answer(s, target, q, tax), tax, vocab));
            return train_oracle(store, m, data, 20, 1e-2, 4, 99);
        };
        auto c1 = run();
        auto c2 = run();
        REQUIRE(c1.size() == c2.size());
        for (std::size_t i = 0; i < c1.size(); ++i) {
            CHECK(c1[i].loss == c2[i].loss);
            CHECK(c1[i].accuracy == c2[i].accuracy);
        }
    }

    SECTION("empty training set is an error") {
        ParamStore store(23);
        OracleModel m = OracleModel::build(store, dims);
        REQUIRE_THROWS_AS(train_oracle(store, m, {}, 1, 1e-3, 4, 1), DataError);
    }

    SECTION("learns the grammar on a small synthetic set") {
        const FeatureProjector proj(tax, 16, 5);
        OracleDims big = dims;
        big.token_embed = 12;
        big.category_embed = 12;
        big.lstm_hidden = 24;
        big.mlp_hidden = 24;
        ParamStore store(24);
        OracleModel m = OracleModel::build(store, big);
        Rng world_rng(71);
        Rng pick_rng(72);
        std::vector<QaExample> train_set, held_out;
        for (int t = 0; t < 400; ++t) {
            Scene scene = world::generate_scene(tax, proj, t, world_rng, 42);
            const int target = scene.objects[pick_rng.below(scene.objects.size())].id;
            Rng script_rng(1000 + t);
            auto d = lingo::script_gold_dialogue(scene, target, 8, tax, script_rng, 0.35);
            for (const auto& turn : d.turns) {
                auto ex = make_qa_example(scene, target, turn.question, turn.answer, tax, vocab);
                (t < 320 ? train_set : held_out).push_back(std::move(ex));
            }
        }
        auto curve = train_oracle(store, m, train_set, 60, 5e-3, 64, 7);

        // 5-epoch moving average of the loss is non-increasing up to
        // minibatch wobble (1% allowance).
        for (std::size_t i = 5; i + 5 <= curve.size(); ++i) {
            double prev = 0.0, cur = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                prev += curve[i - 1 + k - 4].loss;
                cur += curve[i + k - 4].loss;
            }
            CHECK(cur <= prev * 1.01);
        }

        std::size_t correct = 0;
        for (const auto& ex : held_out)
            if (predict(m, ex) == ex.answer) ++correct;
        CHECK(static_cast<double>(correct) / held_out.size() > 0.8);
    }
}
