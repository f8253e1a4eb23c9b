#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "guesslab/lingo.hpp"
#include "guesslab/lstm.hpp"
#include "guesslab/ops.hpp"
#include "guesslab/param.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/world.hpp"

namespace guesslab::agent {

using lingo::Dialogue;
using lingo::Taxonomy;
using lingo::Vocabulary;
using world::Scene;

struct AgentDims {
    std::size_t vocab = 0;
    std::size_t n_categories = 0;
    std::size_t token_embed = 32;
    std::size_t lstm_e = 128;
    std::size_t state = 64;  // h_t; also LSTM_q hidden (h_t initializes it)
    std::size_t feature = 64;
    std::size_t category_embed = 32;
    std::size_t guesser_hidden = 64;
    int max_question_len = 12;

    static AgentDims desk(std::size_t vocab, std::size_t n_categories) {
        AgentDims d;
        d.vocab = vocab;
        d.n_categories = n_categories;
        return d;
    }

    // Paper-scale preset: LSTM_e 1024, h_t 512, features 2048 (W: 512 x 3072).
    static AgentDims paper(std::size_t vocab, std::size_t n_categories) {
        AgentDims d;
        d.vocab = vocab;
        d.n_categories = n_categories;
        d.token_embed = 512;
        d.lstm_e = 1024;
        d.state = 512;
        d.feature = 2048;
        d.category_embed = 256;
        d.guesser_hidden = 512;
        return d;
    }
};

// ---------------------------------------------------------------------------
// Encoder: token embeddings + LSTM_e + fused tanh state.

struct EncoderView {
    Param* tok = nullptr;
    LstmCell lstm;
    Param* W = nullptr;  // (lstm_e + feature, state)
    Param* b = nullptr;

    static EncoderView build(ParamStore& store, const std::string& prefix, const AgentDims& d) {
        EncoderView v;
        v.tok = &store.add_matrix(prefix + ".tok", d.vocab, d.token_embed, d.token_embed);
        v.lstm = LstmCell::build(store, prefix + ".lstm", d.token_embed, d.lstm_e);
        v.W = &store.add_matrix(prefix + ".W", d.lstm_e + d.feature, d.state,
                                d.lstm_e + d.feature);
        v.b = &store.add_zeros(prefix + ".b", {d.state});
        return v;
    }

    static EncoderView resolve(ParamStore& store, const std::string& prefix) {
        EncoderView v;
        v.tok = &store.get(prefix + ".tok");
        v.lstm = LstmCell::resolve(store, prefix + ".lstm");
        v.W = &store.get(prefix + ".W");
        v.b = &store.get(prefix + ".b");
        return v;
    }
};

// One game's pass through the encoder: a growing token stream with state taps
// at turn boundaries. LSTM_e state persists across turns within the game.
class EncoderRun {
public:
    EncoderRun(const EncoderView& enc, const double* features, std::size_t feature_dim)
        : enc_(&enc),
          features_(features),
          feature_dim_(feature_dim),
          h_(enc.lstm.hidden_dim, 0.0),
          c_(enc.lstm.hidden_dim, 0.0) {}

    void feed(std::size_t token_id) {
        if (token_id >= enc_->tok->value.dim(0))
            throw DomainError("encoder token id " + std::to_string(token_id) +
                              " out of vocab range");
        steps_.emplace_back();
        token_ids_.push_back(token_id);
        const double* x = embedding_row(*enc_->tok, token_id);
        enc_->lstm.step_forward(x, h_.data(), c_.data(), steps_.back());
        h_ = steps_.back().h;
        c_ = steps_.back().c;
    }

    void feed(const std::vector<std::size_t>& token_ids) {
        for (std::size_t id : token_ids) feed(id);
    }

    // h_t = tanh(W . [LSTM_e hidden; I]); records a tap for the backward pass.
    std::vector<double> encode_state() {
        taps_.emplace_back();
        Tap& tap = taps_.back();
        tap.steps_before = steps_.size();
        std::vector<double> z(enc_->lstm.hidden_dim + feature_dim_);
        std::copy(h_.begin(), h_.end(), z.begin());
        std::copy(features_, features_ + feature_dim_, z.begin() + enc_->lstm.hidden_dim);
        affine_tanh_forward(*enc_->W, *enc_->b, z.data(), z.size(), tap.fuse);
        return tap.fuse.y;
    }

    std::size_t tap_count() const { return taps_.size(); }
    const std::vector<double>& tap_state(std::size_t i) const { return taps_[i].fuse.y; }

    // dtaps[i] is dL/dh_t for tap i (may be empty when unused). Accumulates
    // parameter gradients for the whole unrolled stream.
    void backward(const std::vector<std::vector<double>>& dtaps) {
        const std::size_t H = enc_->lstm.hidden_dim;
        std::vector<std::vector<double>> inject(steps_.size() + 1);
        for (std::size_t i = 0; i < taps_.size(); ++i) {
            if (i >= dtaps.size() || dtaps[i].empty()) continue;
            const Tap& tap = taps_[i];
            std::vector<double> dz(H + feature_dim_, 0.0);
            affine_tanh_backward(*enc_->W, *enc_->b, tap.fuse, dtaps[i].data(), dz.data());
            // feature gradient (dz tail) has no trainable producer; dropped.
            if (inject[tap.steps_before].empty()) inject[tap.steps_before].assign(H, 0.0);
            for (std::size_t k = 0; k < H; ++k) inject[tap.steps_before][k] += dz[k];
        }
        std::vector<double> dh(H, 0.0), dc(H, 0.0);
        if (!inject[steps_.size()].empty())
            add_inplace(dh.data(), inject[steps_.size()].data(), H);
        for (std::size_t t = steps_.size(); t-- > 0;) {
            std::vector<double> dx(enc_->lstm.input_dim, 0.0);
            std::vector<double> dh_prev(H, 0.0), dc_prev(H, 0.0);
            enc_->lstm.step_backward(steps_[t], dh.data(), dc.data(), dx.data(), dh_prev.data(),
                                     dc_prev.data());
            embedding_backward(*enc_->tok, token_ids_[t], dx.data());
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
            if (!inject[t].empty()) add_inplace(dh.data(), inject[t].data(), H);
        }
        // gradient into the all-zero initial state is discarded
    }

    const double* features() const { return features_; }
    std::size_t feature_dim() const { return feature_dim_; }

private:
    struct Tap {
        std::size_t steps_before = 0;
        AffineTanhCache fuse;
    };

    const EncoderView* enc_;
    const double* features_;
    std::size_t feature_dim_;
    std::vector<std::size_t> token_ids_;
    std::vector<LstmCell::StepCache> steps_;
    std::vector<double> h_, c_;
    std::vector<Tap> taps_;
};

// ---------------------------------------------------------------------------
// QGen: LSTM_q seeded from h_t; input per step is [embed(w_prev); I].

struct QgenView {
    Param* tok = nullptr;
    LstmCell lstm;
    Param* proj_W = nullptr;  // (state, vocab)
    Param* proj_b = nullptr;

    static QgenView build(ParamStore& store, const AgentDims& d) {
        QgenView v;
        v.tok = &store.add_matrix("qgen.tok", d.vocab, d.token_embed, d.token_embed);
        v.lstm = LstmCell::build(store, "qgen.lstm", d.token_embed + d.feature, d.state);
        v.proj_W = &store.add_matrix("qgen.proj_W", d.state, d.vocab, d.state);
        v.proj_b = &store.add_zeros("qgen.proj_b", {d.vocab});
        return v;
    }

    static QgenView resolve(ParamStore& store) {
        QgenView v;
        v.tok = &store.get("qgen.tok");
        v.lstm = LstmCell::resolve(store, "qgen.lstm");
        v.proj_W = &store.get("qgen.proj_W");
        v.proj_b = &store.get("qgen.proj_b");
        return v;
    }

    struct TurnTape {
        std::vector<std::size_t> input_ids;   // w_{i-1} per step (starts with <start>)
        std::vector<std::size_t> target_ids;  // gold w_i per step
        std::vector<LstmCell::StepCache> steps;
        std::vector<LinearCache> proj_caches;
        std::vector<std::vector<double>> probs;
    };

    // Teacher-forced NLL of one gold question given h_t. Probabilities are
    // over the full vocabulary.
    double turn_loss(const std::vector<double>& h_t, const double* features,
                     std::size_t feature_dim, const std::vector<std::size_t>& gold_question,
                     TurnTape& tape) const {
        const std::size_t H = lstm.hidden_dim;
        const std::size_t V = proj_W->value.dim(1);
        std::vector<double> h = h_t;
        std::vector<double> c(H, 0.0);
        double loss = 0.0;
        std::size_t prev = Vocabulary::kStart;
        for (std::size_t i = 0; i < gold_question.size(); ++i) {
            const std::size_t target = gold_question[i];
            if (target >= V)
                throw DomainError("qgen target id " + std::to_string(target) + " out of range");
            tape.input_ids.push_back(prev);
            tape.target_ids.push_back(target);
            std::vector<double> x(lstm.input_dim);
            const double* e = embedding_row(*tok, prev);
            std::copy(e, e + tok->value.dim(1), x.begin());
            std::copy(features, features + feature_dim, x.begin() + tok->value.dim(1));
            tape.steps.emplace_back();
            lstm.step_forward(x.data(), h.data(), c.data(), tape.steps.back());
            h = tape.steps.back().h;
            c = tape.steps.back().c;

            std::vector<double> logits(V);
            tape.proj_caches.emplace_back();
            linear_forward(*proj_W, *proj_b, h.data(), H, logits.data(), tape.proj_caches.back());
            tape.probs.emplace_back(V);
            softmax_into(logits.data(), tape.probs.back().data(), V);
            loss += nll(tape.probs.back()[target]);
            prev = target;
        }
        return loss;
    }

    // Accumulates scaled gradients; dh_t receives the gradient into the
    // initial hidden state (i.e. into the encoder tap).
    void turn_backward(const TurnTape& tape, double scale, double* dh_t) const {
        const std::size_t H = lstm.hidden_dim;
        const std::size_t V = proj_W->value.dim(1);
        const std::size_t steps = tape.steps.size();
        std::vector<double> dh(H, 0.0), dc(H, 0.0);
        for (std::size_t t = steps; t-- > 0;) {
            std::vector<double> dlogits(V, 0.0);
            softmax_nll_backward(tape.probs[t].data(), V, tape.target_ids[t], scale,
                                 dlogits.data());
            linear_backward(*proj_W, *proj_b, tape.proj_caches[t], dlogits.data(), dh.data());
            std::vector<double> dx(lstm.input_dim, 0.0);
            std::vector<double> dh_prev(H, 0.0), dc_prev(H, 0.0);
            lstm.step_backward(tape.steps[t], dh.data(), dc.data(), dx.data(), dh_prev.data(),
                               dc_prev.data());
            embedding_backward(*tok, tape.input_ids[t], dx.data());
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
        if (dh_t) add_inplace(dh_t, dh.data(), H);
    }

    // Reserved control tokens other than "?" are masked during decoding.
    static bool decodable(std::size_t id) {
        return id == Vocabulary::kQMark || id >= Vocabulary::kReservedCount;
    }

    // Greedy (temperature == 0) or temperature sampling until "?" or the
    // length cap; a forced "?" is appended when the cap is hit.
    std::vector<std::size_t> decode(const std::vector<double>& h_t, const double* features,
                                    std::size_t feature_dim, int max_len, double temperature,
                                    Rng* rng) const {
        const std::size_t H = lstm.hidden_dim;
        const std::size_t V = proj_W->value.dim(1);
        std::vector<double> h = h_t;
        std::vector<double> c(H, 0.0);
        std::vector<std::size_t> out;
        std::size_t prev = Vocabulary::kStart;
        for (int i = 0; i < max_len; ++i) {
            std::vector<double> x(lstm.input_dim);
            const double* e = embedding_row(*tok, prev);
            std::copy(e, e + tok->value.dim(1), x.begin());
            std::copy(features, features + feature_dim, x.begin() + tok->value.dim(1));
            LstmCell::StepCache cache;
            lstm.step_forward(x.data(), h.data(), c.data(), cache);
            h = cache.h;
            c = cache.c;
            std::vector<double> logits(V);
            LinearCache lc;
            linear_forward(*proj_W, *proj_b, h.data(), H, logits.data(), lc);
            for (std::size_t v = 0; v < V; ++v)
                if (!decodable(v)) logits[v] = -1e30;

            std::size_t chosen = 0;
            if (temperature <= 0.0 || rng == nullptr) {
                chosen = 0;
                for (std::size_t v = 1; v < V; ++v)
                    if (logits[v] > logits[chosen]) chosen = v;
            } else {
                std::vector<double> probs(V);
                for (auto& l : logits) l /= temperature;
                softmax_into(logits.data(), probs.data(), V);
                double u = rng->uniform();
                double acc = 0.0;
                chosen = V;
                for (std::size_t v = 0; v < V; ++v) {
                    acc += probs[v];
                    if (u < acc && decodable(v)) {
                        chosen = v;
                        break;
                    }
                }
                if (chosen == V) {  // rounding fallback: last decodable id
                    chosen = V - 1;
                    while (!decodable(chosen) && chosen > 0) --chosen;
                }
            }
            out.push_back(chosen);
            if (chosen == Vocabulary::kQMark) return out;
            prev = chosen;
        }
        out.push_back(Vocabulary::kQMark);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Guesser: object MLP embeddings r_j scored against h_t by dot product.

struct GuesserView {
    Param* cat = nullptr;
    Mlp2 mlp;  // [category_embed + 8] -> hidden -> state

    static GuesserView build(ParamStore& store, const AgentDims& d) {
        GuesserView v;
        v.cat = &store.add_matrix("guesser.cat", d.n_categories, d.category_embed,
                                  d.category_embed);
        v.mlp = Mlp2::build(store, "guesser.mlp", d.category_embed + 8, d.guesser_hidden,
                            d.state);
        return v;
    }

    static GuesserView resolve(ParamStore& store) {
        GuesserView v;
        v.cat = &store.get("guesser.cat");
        v.mlp = Mlp2::resolve(store, "guesser.mlp");
        return v;
    }

    struct Tape {
        std::vector<std::size_t> cat_indices;
        std::vector<std::vector<double>> mlp_ins;
        std::vector<Mlp2::Cache> mlp_caches;
        std::vector<std::vector<double>> r;  // object representations
        std::vector<double> h;
        std::vector<double> probs;
    };

    // p(o_j) = softmax_j(h_t . r_j) over the scene's objects, in scene order.
    std::vector<double> forward(const std::vector<double>& h_t, const Scene& scene,
                                const Taxonomy& taxonomy, Tape& tape) const {
        if (scene.objects.size() < 2)
            throw DomainError("guess needs at least 2 candidate objects, got " +
                              std::to_string(scene.objects.size()));
        const std::size_t state = mlp.out_dim();
        tape.h = h_t;
        std::vector<double> scores;
        for (const auto& obj : scene.objects) {
            const std::size_t ci = taxonomy.category_index(obj.category);
            Tensor sp = world::spatial_encode(obj, taxonomy.canvas());
            std::vector<double> in;
            const double* ce = embedding_row(*cat, ci);
            in.insert(in.end(), ce, ce + cat->value.dim(1));
            in.insert(in.end(), sp.data(), sp.data() + 8);
            tape.cat_indices.push_back(ci);
            tape.mlp_caches.emplace_back();
            std::vector<double> r(state);
            mlp.forward(in.data(), r.data(), tape.mlp_caches.back());
            double score = 0.0;
            for (std::size_t k = 0; k < state; ++k) score += h_t[k] * r[k];
            scores.push_back(score);
            tape.mlp_ins.push_back(std::move(in));
            tape.r.push_back(std::move(r));
        }
        tape.probs.resize(scores.size());
        softmax_into(scores.data(), tape.probs.data(), scores.size());
        return tape.probs;
    }

    // Backward of scale * NLL(target object); dh_t accumulates the gradient
    // into the dialogue state.
    void backward(const Tape& tape, std::size_t target_pos, double scale, double* dh_t) const {
        const std::size_t n = tape.probs.size();
        const std::size_t state = mlp.out_dim();
        std::vector<double> dscore(n, 0.0);
        softmax_nll_backward(tape.probs.data(), n, target_pos, scale, dscore.data());
        for (std::size_t j = 0; j < n; ++j) {
            if (dscore[j] == 0.0) continue;
            std::vector<double> dr(state);
            for (std::size_t k = 0; k < state; ++k) {
                dr[k] = dscore[j] * tape.h[k];
                if (dh_t) dh_t[k] += dscore[j] * tape.r[j][k];
            }
            std::vector<double> din(tape.mlp_ins[j].size(), 0.0);
            mlp.backward(tape.mlp_caches[j], dr.data(), din.data());
            embedding_backward(*cat, tape.cat_indices[j], din.data());
        }
    }
};

// ---------------------------------------------------------------------------
// The Questioner agent: shared (joint) or per-head (decoupled) encoders.

enum class Mode { Joint, Decoupled };

inline const char* mode_name(Mode m) { return m == Mode::Joint ? "joint" : "decoupled"; }

struct QuestionerModel {
    Mode mode = Mode::Joint;
    AgentDims dims;
    ParamStore enc_store;    // joint: the shared encoder; decoupled: QGen's encoder
    ParamStore enc_g_store;  // decoupled only: Guesser's encoder
    ParamStore qgen_store;
    ParamStore guesser_store;
    EncoderView enc;
    EncoderView enc_g;
    QgenView qgen;
    GuesserView guesser;

    QuestionerModel(Mode mode_, const AgentDims& dims_, uint64_t seed)
        : mode(mode_),
          dims(dims_),
          enc_store(fnv1a_u64(seed, fnv1a("agent.enc"))),
          enc_g_store(fnv1a_u64(seed, fnv1a("agent.enc_g"))),
          qgen_store(fnv1a_u64(seed, fnv1a("agent.qgen"))),
          guesser_store(fnv1a_u64(seed, fnv1a("agent.guesser"))) {
        if (dims.vocab == 0 || dims.n_categories == 0)
            throw ConfigError("agent dims need vocab and category counts");
        enc = EncoderView::build(enc_store, "enc", dims);
        if (mode == Mode::Decoupled) enc_g = EncoderView::build(enc_g_store, "enc", dims);
        qgen = QgenView::build(qgen_store, dims);
        guesser = GuesserView::build(guesser_store, dims);
    }

    QuestionerModel(const QuestionerModel&) = delete;
    QuestionerModel& operator=(const QuestionerModel&) = delete;

    // Encoder feeding the QGen head.
    const EncoderView& encoder_q() const { return enc; }
    // Encoder feeding the Guesser head (the same one in joint mode).
    const EncoderView& encoder_g() const { return mode == Mode::Joint ? enc : enc_g; }

    std::vector<ParamStore*> all_stores() {
        std::vector<ParamStore*> out{&enc_store, &qgen_store, &guesser_store};
        if (mode == Mode::Decoupled) out.insert(out.begin() + 1, &enc_g_store);
        return out;
    }

    // Stores touched when updating the given heads.
    std::vector<ParamStore*> stores_for(bool update_qgen, bool update_guesser) {
        std::vector<ParamStore*> out;
        if (mode == Mode::Joint) {
            if (update_qgen || update_guesser) out.push_back(&enc_store);
        } else {
            if (update_qgen) out.push_back(&enc_store);
            if (update_guesser) out.push_back(&enc_g_store);
        }
        if (update_qgen) out.push_back(&qgen_store);
        if (update_guesser) out.push_back(&guesser_store);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Whole-dialogue losses (teacher forcing), Eq.-faithful composition:
// per turn t, h_t is computed from the gold history qa_{1:t-1} and feeds the
// question NLL; the final state feeds the guesser NLL.

struct DialogueLossOptions {
    bool qgen = true;
    bool guesser = true;
    bool with_grad = false;
    double qgen_scale = 1.0;
    double guesser_scale = 1.0;
    // Scale on the L_Q gradient entering the encoder through h_t. QGen's own
    // parameters always receive the full gradient; this only rebalances the
    // multi-task pull on the shared encoder.
    double qgen_state_scale = 1.0;
};

struct DialogueLossResult {
    double qgen_loss = 0.0;       // summed over question tokens
    double guesser_loss = 0.0;    // NLL of the target
    std::size_t qgen_tokens = 0;  // token count behind qgen_loss
};

namespace detail {

inline std::size_t target_position(const Scene& scene, int target_id) {
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
        if (scene.objects[i].id == target_id) return i;
    throw LookupError("target object " + std::to_string(target_id) + " not in scene " +
                      std::to_string(scene.id));
}

}  // namespace detail

inline DialogueLossResult dialogue_losses(QuestionerModel& model, const Dialogue& dialogue,
                                          const Scene& scene, const Taxonomy& taxonomy,
                                          const Vocabulary& vocab,
                                          const DialogueLossOptions& opts) {
    DialogueLossResult result;
    const double* I = scene.features.data();
    const std::size_t fdim = scene.features.size();

    // Tokenized turns: question tokens then the answer token, one stream.
    std::vector<std::vector<std::size_t>> turn_tokens;
    for (const auto& turn : dialogue.turns) {
        auto ids = lingo::tokenize_ids(turn.question, vocab);
        ids.push_back(lingo::answer_token_id(turn.answer));
        turn_tokens.push_back(std::move(ids));
    }

    const bool joint = model.mode == Mode::Joint;

    std::optional<EncoderRun> run_q;
    std::optional<EncoderRun> run_g;  // decoupled-mode guesser encoder
    if (opts.qgen || joint) run_q.emplace(model.encoder_q(), I, fdim);
    if (opts.guesser && !joint) run_g.emplace(model.encoder_g(), I, fdim);

    std::vector<QgenView::TurnTape> qgen_tapes;
    if (opts.qgen) {
        for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
            const auto& h_t = run_q->encode_state();
            qgen_tapes.emplace_back();
            std::vector<std::size_t> question_ids =
                lingo::tokenize_ids(dialogue.turns[t].question, vocab);
            result.qgen_loss +=
                model.qgen.turn_loss(h_t, I, fdim, question_ids, qgen_tapes.back());
            result.qgen_tokens += question_ids.size();
            run_q->feed(turn_tokens[t]);
        }
    } else if (joint && opts.guesser) {
        for (const auto& ids : turn_tokens) run_q->feed(ids);
    }

    GuesserView::Tape guess_tape;
    std::size_t target_pos = 0;
    if (opts.guesser) {
        EncoderRun& grun = joint ? *run_q : *run_g;
        if (!joint)
            for (const auto& ids : turn_tokens) grun.feed(ids);
        const auto& h_final = grun.encode_state();
        target_pos = detail::target_position(scene, dialogue.target_id);
        auto probs = model.guesser.forward(h_final, scene, taxonomy, guess_tape);
        result.guesser_loss = nll(probs[target_pos]);
    }

    if (!opts.with_grad) return result;

    // Backward. Taps on run_q: one per qgen turn, plus the final guesser tap
    // in joint mode.
    if (opts.qgen || joint) {
        std::vector<std::vector<double>> dtaps(run_q->tap_count());
        if (opts.qgen) {
            for (std::size_t t = 0; t < qgen_tapes.size(); ++t) {
                std::vector<double> dh(model.dims.state, 0.0);
                model.qgen.turn_backward(qgen_tapes[t], opts.qgen_scale, dh.data());
                dtaps[t].assign(model.dims.state, 0.0);
                for (std::size_t k = 0; k < dh.size(); ++k)
                    dtaps[t][k] = opts.qgen_state_scale * dh[k];
            }
        }
        if (opts.guesser && joint) {
            auto& dfinal = dtaps[run_q->tap_count() - 1];
            if (dfinal.empty()) dfinal.assign(model.dims.state, 0.0);
            model.guesser.backward(guess_tape, target_pos, opts.guesser_scale, dfinal.data());
        }
        run_q->backward(dtaps);
    }
    if (opts.guesser && !joint) {
        std::vector<std::vector<double>> dtaps(1);
        dtaps[0].assign(model.dims.state, 0.0);
        model.guesser.backward(guess_tape, target_pos, opts.guesser_scale, dtaps[0].data());
        run_g->backward(dtaps);
    }
    return result;
}

}  // namespace guesslab::agent
