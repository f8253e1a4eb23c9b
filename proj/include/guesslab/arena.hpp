#pragma once

#include <algorithm>
#include <optional>
#include <thread>
#include <vector>

#include "guesslab/agent.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/oracle.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/world.hpp"

namespace guesslab::arena {

using agent::EncoderRun;
using agent::Mode;
using agent::QuestionerModel;
using lingo::Answer;
using lingo::Dialogue;
using lingo::Taxonomy;
using lingo::Turn;
using lingo::Vocabulary;
using world::Scene;

enum class OracleKind { Rule, Neural };

inline const char* oracle_kind_name(OracleKind k) {
    return k == OracleKind::Rule ? "rule" : "neural";
}

enum class DecodeMode { Greedy, Sample };

inline const char* decode_mode_name(DecodeMode m) {
    return m == DecodeMode::Greedy ? "greedy" : "sample";
}

struct GameConfig {
    int question_budget = 5;  // 5Q / 8Q setups
    DecodeMode decode = DecodeMode::Greedy;
    double temperature = 1.0;  // sampling only
    OracleKind oracle = OracleKind::Neural;
    uint64_t seed = 0;
};

// Answerer handle: the exact rule oracle or a trained model.
struct OracleRef {
    OracleKind kind = OracleKind::Rule;
    const oracle::OracleModel* model = nullptr;  // required for Neural

    Answer answer(const Scene& scene, int target_id, const std::vector<std::string>& tokens,
                  const Taxonomy& taxonomy, const Vocabulary& vocab) const {
        if (kind == OracleKind::Rule) return oracle::rule_answer(scene, target_id, tokens, taxonomy);
        const auto& target = scene.object_by_id(target_id);
        oracle::OracleModel::Tape tape;
        auto probs = model->forward(taxonomy.category_index(target.category),
                                    world::spatial_encode(target, taxonomy.canvas()),
                                    vocab.encode(tokens), tape);
        return probs[0] >= probs[1] ? Answer::Yes : Answer::No;
    }
};

struct GameResult {
    Dialogue dialogue;
    std::vector<double> guess_probs;  // over scene objects, scene order
    bool success = false;
};

// One full fixed-budget game: budget question rounds, then a single guess.
inline GameResult play_game(QuestionerModel& model, const OracleRef& oracle_ref,
                            const Scene& scene, int target_id, const GameConfig& cfg,
                            const Taxonomy& taxonomy, const Vocabulary& vocab, Rng& rng) {
    if (!scene.has_object(target_id))
        throw LookupError("target object " + std::to_string(target_id) + " not in scene " +
                          std::to_string(scene.id));
    const double* I = scene.features.data();
    const std::size_t fdim = scene.features.size();
    const bool joint = model.mode == Mode::Joint;

    GameResult result;
    result.dialogue.scene_id = scene.id;
    result.dialogue.target_id = target_id;

    EncoderRun run_q(model.encoder_q(), I, fdim);
    std::optional<EncoderRun> run_g;
    if (!joint) run_g.emplace(model.encoder_g(), I, fdim);

    const double temperature = (cfg.decode == DecodeMode::Greedy) ? 0.0 : cfg.temperature;
    for (int turn = 0; turn < cfg.question_budget; ++turn) {
        auto h = run_q.encode_state();
        auto qids = model.qgen.decode(h, I, fdim, model.dims.max_question_len, temperature,
                                      temperature > 0.0 ? &rng : nullptr);
        std::vector<std::string> tokens;
        tokens.reserve(qids.size());
        for (std::size_t id : qids) tokens.push_back(vocab.token(id));
        const Answer a = oracle_ref.answer(scene, target_id, tokens, taxonomy, vocab);
        result.dialogue.turns.push_back(Turn{lingo::join_tokens(tokens), a});
        auto fed = qids;
        fed.push_back(lingo::answer_token_id(a));
        run_q.feed(fed);
        if (run_g) run_g->feed(fed);
    }

    auto h_final = (joint ? run_q : *run_g).encode_state();
    agent::GuesserView::Tape tape;
    result.guess_probs = model.guesser.forward(h_final, scene, taxonomy, tape);
    std::size_t best = 0;
    for (std::size_t j = 1; j < result.guess_probs.size(); ++j)
        if (result.guess_probs[j] > result.guess_probs[best]) best = j;
    const int guess_id = scene.objects[best].id;
    result.dialogue.guess_id = guess_id;
    result.success = (guess_id == target_id);
    result.dialogue.status = result.success ? lingo::Status::Success : lingo::Status::Failure;
    return result;
}

struct GameSpec {
    const Scene* scene = nullptr;
    int target_id = 0;
};

struct EvalSummary {
    double accuracy = 0.0;
    std::size_t n_games = 0;
    std::vector<GameResult> games;
};

// Batch evaluation over frozen parameters. Each game draws its own RNG stream
// derived from (seed, game index), so results do not depend on the worker
// split.
inline EvalSummary evaluate(QuestionerModel& model, const OracleRef& oracle_ref,
                            const std::vector<GameSpec>& games, const GameConfig& cfg,
                            const Taxonomy& taxonomy, const Vocabulary& vocab, int workers = 1) {
    if (games.empty()) throw DataError("evaluate: empty game list");
    EvalSummary summary;
    summary.n_games = games.size();
    summary.games.resize(games.size());

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Rng rng = derive_stream(cfg.seed, "arena.game", i);
            summary.games[i] =
                play_game(model, oracle_ref, *games[i].scene, games[i].target_id, cfg, taxonomy,
                          vocab, rng);
            summary.games[i].dialogue.id = static_cast<int>(i);
        }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        run_range(0, games.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (games.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t lo = std::min(games.size(), w * chunk);
            const std::size_t hi = std::min(games.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }

    std::size_t wins = 0;
    for (const auto& g : summary.games) wins += g.success ? 1 : 0;
    summary.accuracy = static_cast<double>(wins) / static_cast<double>(games.size());
    return summary;
}

// Uniform-guess floor.
inline double random_baseline(const std::vector<GameSpec>& games, Rng& rng) {
    if (games.empty()) throw DataError("random_baseline: empty game list");
    std::size_t wins = 0;
    for (const auto& g : games) {
        const auto& objs = g.scene->objects;
        if (objs[rng.below(objs.size())].id == g.target_id) ++wins;
    }
    return static_cast<double>(wins) / static_cast<double>(games.size());
}

}  // namespace guesslab::arena
