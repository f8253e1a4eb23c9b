#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "guesslab/lingo.hpp"
#include "guesslab/lstm.hpp"
#include "guesslab/ops.hpp"
#include "guesslab/param.hpp"
#include "guesslab/world.hpp"

namespace guesslab::oracle {

using lingo::Answer;
using lingo::Taxonomy;
using lingo::Vocabulary;
using world::Scene;
using world::SceneObject;

// ---------------------------------------------------------------------------
// Rule-based oracle: exact answers over the closed template grammar.
// Unparseable questions are answered no (closed-world reading).

inline Answer rule_answer(const Scene& scene, int target_id, const std::vector<std::string>& tokens,
                          const Taxonomy& taxonomy) {
    const SceneObject& target = scene.object_by_id(target_id);
    auto binding = lingo::parse_question(tokens, taxonomy);
    if (!binding) return Answer::No;
    return lingo::predicate_holds(*binding, target, taxonomy) ? Answer::Yes : Answer::No;
}

inline Answer rule_answer(const Scene& scene, int target_id, const std::string& question,
                          const Taxonomy& taxonomy) {
    return rule_answer(scene, target_id, lingo::tokenize(question), taxonomy);
}

// ---------------------------------------------------------------------------
// Learned oracle: [category embedding ++ spatial(8) ++ question LSTM] -> MLP -> 2 logits.

struct OracleDims {
    std::size_t vocab = 0;
    std::size_t n_categories = 0;
    std::size_t token_embed = 24;
    std::size_t category_embed = 24;
    std::size_t lstm_hidden = 48;
    std::size_t mlp_hidden = 48;
};

// Output convention: logit/probability index 0 = yes, 1 = no.
struct OracleModel {
    OracleDims dims;
    Param* token_table = nullptr;
    Param* category_table = nullptr;
    LstmCell lstm;
    Mlp2 mlp;

    static OracleModel build(ParamStore& store, const OracleDims& dims) {
        OracleModel m;
        m.dims = dims;
        m.token_table =
            &store.add_matrix("oracle.tok", dims.vocab, dims.token_embed, dims.token_embed);
        m.category_table = &store.add_matrix("oracle.cat", dims.n_categories, dims.category_embed,
                                             dims.category_embed);
        m.lstm = LstmCell::build(store, "oracle.lstm", dims.token_embed, dims.lstm_hidden);
        m.mlp = Mlp2::build(store, "oracle.mlp", dims.category_embed + 8 + dims.lstm_hidden,
                            dims.mlp_hidden, 2);
        return m;
    }

    static OracleModel resolve(ParamStore& store, const OracleDims& dims) {
        OracleModel m;
        m.dims = dims;
        m.token_table = &store.get("oracle.tok");
        m.category_table = &store.get("oracle.cat");
        m.lstm = LstmCell::resolve(store, "oracle.lstm");
        m.mlp = Mlp2::resolve(store, "oracle.mlp");
        return m;
    }

    struct Tape {
        std::vector<std::size_t> token_ids;
        std::vector<LstmCell::StepCache> lstm_steps;
        std::size_t category_index = 0;
        std::vector<double> spatial;
        std::vector<double> mlp_in;
        Mlp2::Cache mlp_cache;
        std::vector<double> probs;
    };

    // Returns p(yes), p(no). Question must be nonempty.
    std::vector<double> forward(std::size_t category_index, const Tensor& spatial8,
                                const std::vector<std::size_t>& question_ids, Tape& tape) const {
        if (question_ids.empty()) throw DomainError("neural_answer: empty question");
        tape.token_ids = question_ids;
        tape.category_index = category_index;
        tape.spatial.assign(spatial8.data(), spatial8.data() + 8);

        const std::size_t H = dims.lstm_hidden;
        std::vector<double> h(H, 0.0), c(H, 0.0);
        tape.lstm_steps.resize(question_ids.size());
        for (std::size_t t = 0; t < question_ids.size(); ++t) {
            const double* x = embedding_row(*token_table, question_ids[t]);
            lstm.step_forward(x, h.data(), c.data(), tape.lstm_steps[t]);
            h = tape.lstm_steps[t].h;
            c = tape.lstm_steps[t].c;
        }

        tape.mlp_in.clear();
        const double* cat = embedding_row(*category_table, category_index);
        tape.mlp_in.insert(tape.mlp_in.end(), cat, cat + dims.category_embed);
        tape.mlp_in.insert(tape.mlp_in.end(), tape.spatial.begin(), tape.spatial.end());
        tape.mlp_in.insert(tape.mlp_in.end(), h.begin(), h.end());

        std::vector<double> logits(2);
        mlp.forward(tape.mlp_in.data(), logits.data(), tape.mlp_cache);
        tape.probs.resize(2);
        softmax_into(logits.data(), tape.probs.data(), 2);
        return tape.probs;
    }

    // Accumulates gradients of scale * NLL(answer) into the store.
    void backward(const Tape& tape, Answer truth, double scale) const {
        const std::size_t truth_idx = (truth == Answer::Yes) ? 0 : 1;
        std::vector<double> dlogits(2, 0.0);
        softmax_nll_backward(tape.probs.data(), 2, truth_idx, scale, dlogits.data());

        std::vector<double> dmlp_in(tape.mlp_in.size(), 0.0);
        mlp.backward(tape.mlp_cache, dlogits.data(), dmlp_in.data());

        embedding_backward(*category_table, tape.category_index, dmlp_in.data());

        const std::size_t H = dims.lstm_hidden;
        std::vector<double> dh(dmlp_in.begin() + dims.category_embed + 8, dmlp_in.end());
        std::vector<double> dc(H, 0.0);
        for (std::size_t t = tape.lstm_steps.size(); t-- > 0;) {
            std::vector<double> dx(dims.token_embed, 0.0);
            std::vector<double> dh_prev(H, 0.0), dc_prev(H, 0.0);
            lstm.step_backward(tape.lstm_steps[t], dh.data(), dc.data(), dx.data(),
                               dh_prev.data(), dc_prev.data());
            embedding_backward(*token_table, tape.token_ids[t], dx.data());
            dh = std::move(dh_prev);
            dc = std::move(dc_prev);
        }
    }
};

// One training example for the learned oracle.
struct QaExample {
    std::size_t category_index = 0;
    Tensor spatial8;
    std::vector<std::size_t> question_ids;
    Answer answer = Answer::No;
};

inline QaExample make_qa_example(const Scene& scene, int target_id, const std::string& question,
                                 Answer answer, const Taxonomy& taxonomy,
                                 const Vocabulary& vocab) {
    const SceneObject& target = scene.object_by_id(target_id);
    QaExample ex;
    ex.category_index = taxonomy.category_index(target.category);
    ex.spatial8 = world::spatial_encode(target, taxonomy.canvas());
    ex.question_ids = lingo::tokenize_ids(question, vocab);
    ex.answer = answer;
    return ex;
}

inline Answer predict(const OracleModel& model, const QaExample& ex) {
    OracleModel::Tape tape;
    auto probs = model.forward(ex.category_index, ex.spatial8, ex.question_ids, tape);
    return probs[0] >= probs[1] ? Answer::Yes : Answer::No;
}

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Plain supervised training: Adam on the answer NLL, batch-averaged gradients,
// deterministic given the seed. Returns the per-epoch curve on the train set.
inline std::vector<EpochStats> train_oracle(ParamStore& store, OracleModel& model,
                                            const std::vector<QaExample>& examples, int epochs,
                                            double lr, std::size_t batch_size, uint64_t seed) {
    if (examples.empty()) throw DataError("train_oracle: empty training set");
    std::vector<EpochStats> curve;
    Rng shuffle_rng = derive_stream(seed, "oracle.shuffle");
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t done = 0;
        while (done < order.size()) {
            const std::size_t batch_end = std::min(done + batch_size, order.size());
            const double scale = 1.0 / static_cast<double>(batch_end - done);
            for (std::size_t k = done; k < batch_end; ++k) {
                const QaExample& ex = examples[order[k]];
                OracleModel::Tape tape;
                auto probs = model.forward(ex.category_index, ex.spatial8, ex.question_ids, tape);
                const std::size_t truth_idx = (ex.answer == Answer::Yes) ? 0 : 1;
                loss_sum += nll(probs[truth_idx]);
                const Answer pred = probs[0] >= probs[1] ? Answer::Yes : Answer::No;
                if (pred == ex.answer) ++correct;
                model.backward(tape, ex.answer, scale);
            }
            clip_global_norm({&store}, 5.0);
            adam_step(store, lr);
            done = batch_end;
        }
        curve.push_back(EpochStats{loss_sum / static_cast<double>(order.size()),
                                   static_cast<double>(correct) /
                                       static_cast<double>(order.size())});
    }
    return curve;
}

}  // namespace guesslab::oracle
