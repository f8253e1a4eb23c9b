#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "guesslab/agent.hpp"
#include "guesslab/arena.hpp"
#include "guesslab/error.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/param.hpp"
#include "guesslab/rng.hpp"

namespace guesslab::trainer {

using agent::DialogueLossOptions;
using agent::Mode;
using agent::QuestionerModel;
using lingo::Dialogue;
using lingo::Taxonomy;
using lingo::Vocabulary;
using world::Scene;

enum class Regime { SL, CL, Decoupled };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::SL: return "sl";
        case Regime::CL: return "cl";
        case Regime::Decoupled: return "decoupled";
    }
    return "";
}

enum class DataSource { Gold, SelfPlay };

struct EpochPlan {
    int epoch = 1;  // 1-based
    bool update_qgen = false;
    bool update_guesser = false;
    DataSource source = DataSource::Gold;
};

// Supervised multi-task schedule: QGen trains every epoch on gold data; the
// Guesser joins on every n-th epoch.
inline std::vector<EpochPlan> plan_sl(int n, int epochs) {
    if (n < 1) throw ConfigError("plan_sl: n must be >= 1");
    if (epochs < 1) throw ConfigError("plan_sl: epochs must be >= 1");
    std::vector<EpochPlan> plans;
    for (int e = 1; e <= epochs; ++e)
        plans.push_back(EpochPlan{e, true, e % n == 0, DataSource::Gold});
    return plans;
}

// Cooperative schedule: QGen re-grounds on gold data at every n-th epoch; all
// other epochs train the Guesser on freshly generated self-play games.
inline std::vector<EpochPlan> plan_cl(int n, int epochs) {
    if (n < 2) throw ConfigError("plan_cl: n must be >= 2 (n=1 would never train the guesser)");
    if (epochs < 1) throw ConfigError("plan_cl: epochs must be >= 1");
    std::vector<EpochPlan> plans;
    for (int e = 1; e <= epochs; ++e) {
        const bool qgen_epoch = e % n == 0;
        plans.push_back(EpochPlan{e, qgen_epoch, !qgen_epoch,
                                  qgen_epoch ? DataSource::Gold : DataSource::SelfPlay});
    }
    return plans;
}

// ---------------------------------------------------------------------------
// Parameter snapshots (best-checkpoint retention)

struct ModelSnapshot {
    // one entry per store, full Param state
    std::vector<std::vector<Param>> stores;
};

inline ModelSnapshot take_snapshot(QuestionerModel& model) {
    ModelSnapshot snap;
    for (auto* s : model.all_stores()) {
        std::vector<Param> copy(s->params().begin(), s->params().end());
        snap.stores.push_back(std::move(copy));
    }
    return snap;
}

inline void apply_snapshot(QuestionerModel& model, const ModelSnapshot& snap) {
    auto stores = model.all_stores();
    if (stores.size() != snap.stores.size()) throw ConfigError("snapshot/model store mismatch");
    for (std::size_t i = 0; i < stores.size(); ++i) {
        auto& params = stores[i]->params();
        if (params.size() != snap.stores[i].size())
            throw ConfigError("snapshot/model param count mismatch");
        std::size_t k = 0;
        for (auto& p : params) {
            p.value = snap.stores[i][k].value;
            p.adam_m = snap.stores[i][k].adam_m;
            p.adam_v = snap.stores[i][k].adam_v;
            p.step_count = snap.stores[i][k].step_count;
            ++k;
        }
    }
}

// ---------------------------------------------------------------------------
// Training driver

struct TrainSpec {
    Regime regime = Regime::SL;
    int n = 7;
    int epochs = 35;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    int epoch_games = 0;  // 0 => full corpus pass per epoch
    double guesser_weight = 1.0;     // relative weight of L_G against L_Q
    double qgen_encoder_scale = 1.0; // L_Q gradient scale at the h_t interface
    double grad_clip = 5.0;
    int lr_decay_epoch = 0;       // 0 disables the late-phase decay
    double lr_decay_factor = 1.0;
    double selfplay_temperature = 1.0;
    uint64_t seed = 1;
    int workers = 1;
};

struct EpochRow {
    int epoch = 0;
    std::string regime;
    std::string head;
    double train_loss = 0.0;   // combined objective per game
    double qgen_loss = 0.0;    // per-game L_Q (when trained)
    double guesser_loss = 0.0; // per-game L_G (when trained)
    double val_success = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> rows;
    int best_epoch = 0;
    double best_val = -1.0;
    bool aborted = false;
    std::string diagnostic;
    ModelSnapshot last_snapshot;                      // state after the final epoch
    std::vector<std::vector<Dialogue>> selfplay_logs; // per-epoch, CL only (empty rows for gold epochs)
};

struct TrainData {
    const Taxonomy* taxonomy = nullptr;
    const Vocabulary* vocab = nullptr;
    std::map<int, const Scene*> scenes;        // every referenced scene id
    std::vector<Dialogue> gold;                // training gold dialogues
    std::vector<const Scene*> train_scenes;    // self-play pool (CL)
    std::vector<arena::GameSpec> val_games;    // validation set for selection
    arena::OracleRef oracle_ref;               // answers validation + self-play games
    arena::GameConfig val_cfg;                 // greedy decoding for selection

    const Scene& scene_for(const Dialogue& d) const {
        auto it = scenes.find(d.scene_id);
        if (it == scenes.end())
            throw LookupError("scene " + std::to_string(d.scene_id) + " not loaded");
        return *it->second;
    }
};

namespace detail {

// Deterministic rotation through a seed-shuffled corpus: epoch e consumes the
// next `count` indices, wrapping around, so every game is visited.
class CorpusRotation {
public:
    CorpusRotation(std::size_t size, uint64_t seed) : order_(size) {
        for (std::size_t i = 0; i < size; ++i) order_[i] = i;
        Rng rng = derive_stream(seed, "trainer.corpus_order");
        for (std::size_t i = size; i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
    }

    std::vector<std::size_t> next(std::size_t count) {
        std::vector<std::size_t> out;
        if (order_.empty()) return out;
        count = count == 0 ? order_.size() : std::min(count, order_.size());
        out.reserve(count);
        for (std::size_t k = 0; k < count; ++k) {
            out.push_back(order_[cursor_]);
            cursor_ = (cursor_ + 1) % order_.size();
        }
        return out;
    }

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

struct EpochLoss {
    double total = 0.0;
    double qgen = 0.0;
    double guesser = 0.0;
    std::size_t games = 0;
    double mean() const { return games ? total / static_cast<double>(games) : 0.0; }
    double mean_qgen() const { return games ? qgen / static_cast<double>(games) : 0.0; }
    double mean_guesser() const { return games ? guesser / static_cast<double>(games) : 0.0; }
};

// One pass of minibatch training over the given dialogues.
inline EpochLoss train_on_dialogues(QuestionerModel& model, const TrainData& data,
                                    const std::vector<const Dialogue*>& dialogues,
                                    bool update_qgen, bool update_guesser,
                                    const TrainSpec& spec, double lr) {
    EpochLoss stats;
    auto stores = model.stores_for(update_qgen, update_guesser);
    std::size_t done = 0;
    while (done < dialogues.size()) {
        const std::size_t end = std::min(done + spec.batch_size, dialogues.size());
        const double inv_batch = 1.0 / static_cast<double>(end - done);
        for (auto* s : stores) s->zero_grads();
        for (std::size_t k = done; k < end; ++k) {
            const Dialogue& d = *dialogues[k];
            DialogueLossOptions opts;
            opts.qgen = update_qgen;
            opts.guesser = update_guesser;
            opts.with_grad = true;
            opts.qgen_scale = inv_batch;
            opts.guesser_scale = inv_batch * spec.guesser_weight;
            opts.qgen_state_scale = spec.qgen_encoder_scale;
            auto res =
                agent::dialogue_losses(model, d, data.scene_for(d), *data.taxonomy,
                                       *data.vocab, opts);
            const double game_loss = res.qgen_loss + spec.guesser_weight * res.guesser_loss;
            if (!std::isfinite(game_loss))
                throw NumericError("non-finite loss on game " + std::to_string(d.id));
            stats.total += game_loss;
            stats.qgen += res.qgen_loss;
            stats.guesser += res.guesser_loss;
            ++stats.games;
        }
        clip_global_norm(stores, spec.grad_clip);
        for (auto* s : stores) adam_step(*s, lr);
        done = end;
    }
    return stats;
}

inline std::vector<Dialogue> generate_selfplay(QuestionerModel& model, const TrainData& data,
                                               int count, int epoch, const TrainSpec& spec,
                                               int question_budget) {
    std::vector<Dialogue> out;
    out.reserve(count);
    Rng pick = derive_stream(spec.seed, "trainer.selfplay.pick",
                             static_cast<uint64_t>(epoch));
    arena::GameConfig cfg;
    cfg.question_budget = question_budget;
    cfg.decode = arena::DecodeMode::Sample;
    cfg.temperature = spec.selfplay_temperature;
    cfg.oracle = data.oracle_ref.kind;
    for (int i = 0; i < count; ++i) {
        const Scene& scene = *data.train_scenes[pick.below(data.train_scenes.size())];
        const int target = scene.objects[pick.below(scene.objects.size())].id;
        Rng game_rng = derive_stream(spec.seed, "trainer.selfplay.game",
                                     static_cast<uint64_t>(epoch) * 1000003ull +
                                         static_cast<uint64_t>(i));
        auto result = arena::play_game(model, data.oracle_ref, scene, target, cfg,
                                       *data.taxonomy, *data.vocab, game_rng);
        result.dialogue.id = i;
        out.push_back(std::move(result.dialogue));
    }
    return out;
}

}  // namespace detail

// Runs a schedule of epoch plans. The model is left at the best-on-validation
// state; the final state rides along in the result.
inline TrainResult run_schedule(QuestionerModel& model, const TrainData& data,
                                const std::vector<EpochPlan>& plans, const TrainSpec& spec,
                                int selfplay_budget = 5) {
    if (data.gold.empty()) throw ConfigError("training corpus is empty");
    TrainResult result;
    detail::CorpusRotation rotation(data.gold.size(), spec.seed);
    ModelSnapshot best = take_snapshot(model);

    for (const auto& plan : plans) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRow row;
        row.epoch = plan.epoch;
        row.regime = regime_name(spec.regime == Regime::Decoupled ? Regime::Decoupled
                                 : plan.source == DataSource::SelfPlay ? Regime::CL
                                                                       : spec.regime);
        row.head = plan.update_qgen && plan.update_guesser ? "qgen+guesser"
                   : plan.update_qgen                      ? "qgen"
                                                           : "guesser";
        const double lr = (spec.lr_decay_epoch > 0 && plan.epoch > spec.lr_decay_epoch)
                              ? spec.lr * spec.lr_decay_factor
                              : spec.lr;
        try {
            detail::EpochLoss stats;
            if (plan.source == DataSource::Gold) {
                const auto indices = rotation.next(static_cast<std::size_t>(
                    spec.epoch_games <= 0 ? 0 : spec.epoch_games));
                std::vector<const Dialogue*> batch;
                batch.reserve(indices.size());
                for (auto i : indices) batch.push_back(&data.gold[i]);
                stats = detail::train_on_dialogues(model, data, batch, plan.update_qgen,
                                                   plan.update_guesser, spec, lr);
                result.selfplay_logs.emplace_back();  // keep epoch indexing aligned
            } else {
                auto generated = detail::generate_selfplay(
                    model, data,
                    spec.epoch_games <= 0 ? static_cast<int>(data.gold.size())
                                          : spec.epoch_games,
                    plan.epoch, spec, selfplay_budget);
                std::vector<const Dialogue*> batch;
                batch.reserve(generated.size());
                for (const auto& d : generated) batch.push_back(&d);
                stats = detail::train_on_dialogues(model, data, batch, plan.update_qgen,
                                                   plan.update_guesser, spec, lr);
                result.selfplay_logs.push_back(std::move(generated));
            }
            row.train_loss = stats.mean();
            row.qgen_loss = stats.mean_qgen();
            row.guesser_loss = stats.mean_guesser();
        } catch (const NumericError& e) {
            result.aborted = true;
            result.diagnostic = std::string("epoch ") + std::to_string(plan.epoch) + ": " +
                                e.what() + "; restored best checkpoint";
            apply_snapshot(model, best);
            break;
        }

        auto eval = arena::evaluate(model, data.oracle_ref, data.val_games, data.val_cfg,
                                    *data.taxonomy, *data.vocab, spec.workers);
        row.val_success = eval.accuracy;
        row.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        result.rows.push_back(row);

        if (row.val_success > result.best_val) {
            result.best_val = row.val_success;
            result.best_epoch = plan.epoch;
            best = take_snapshot(model);
        }
    }

    result.last_snapshot = take_snapshot(model);
    apply_snapshot(model, best);
    if (result.best_val < 0.0) result.best_val = 0.0;
    return result;
}

// Supervised multi-task (modulo-n) on gold dialogues.
inline TrainResult run_sl(QuestionerModel& model, const TrainData& data, TrainSpec spec) {
    if (model.mode != Mode::Joint) throw ConfigError("run_sl needs a joint-mode agent");
    spec.regime = Regime::SL;
    return run_schedule(model, data, plan_sl(spec.n, spec.epochs), spec);
}

// Decoupled baseline: identical schedule and data order, separate encoders.
inline TrainResult run_decoupled(QuestionerModel& model, const TrainData& data, TrainSpec spec) {
    if (model.mode != Mode::Decoupled) throw ConfigError("run_decoupled needs decoupled mode");
    spec.regime = Regime::Decoupled;
    return run_schedule(model, data, plan_sl(spec.n, spec.epochs), spec);
}

// Cooperative learning on top of an SL-trained agent.
inline TrainResult run_cl(QuestionerModel& model, const TrainData& data, TrainSpec spec,
                          int selfplay_budget) {
    if (model.mode != Mode::Joint) throw ConfigError("run_cl needs a joint-mode agent");
    spec.regime = Regime::CL;
    if (spec.epochs == 0) {
        TrainResult noop;
        noop.last_snapshot = take_snapshot(model);
        return noop;
    }
    return run_schedule(model, data, plan_cl(spec.n, spec.epochs), spec, selfplay_budget);
}

}  // namespace guesslab::trainer
