#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "guesslab/agent.hpp"
#include "guesslab/arena.hpp"
#include "guesslab/config.hpp"
#include "guesslab/io.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/metrics.hpp"
#include "guesslab/oracle.hpp"
#include "guesslab/trainer.hpp"
#include "guesslab/world.hpp"

namespace guesslab::lab {

using config::ExperimentConfig;
using lingo::Dialogue;
using lingo::Vocabulary;
using world::Scene;

// ---------------------------------------------------------------------------
// World generation: scenes, scene splits, scripted gold dialogues, vocab.

struct WorldArtifacts {
    std::vector<Scene> scenes;  // indexed by scene id
    std::vector<int> train_scene_ids, val_scene_ids, test_scene_ids;
    std::vector<Dialogue> train_gold, val_gold, test_gold;
    Vocabulary vocab;

    std::map<int, const Scene*> scene_index() const {
        std::map<int, const Scene*> idx;
        for (const auto& s : scenes) idx[s.id] = &s;
        return idx;
    }

    std::vector<const Scene*> scenes_of(const std::vector<int>& ids) const {
        std::vector<const Scene*> out;
        out.reserve(ids.size());
        for (int id : ids) out.push_back(&scenes[static_cast<std::size_t>(id)]);
        return out;
    }
};

inline world::FeatureProjector make_projector(const ExperimentConfig& cfg) {
    return world::FeatureProjector(cfg.taxonomy, cfg.world.feature_dim, cfg.seed);
}

inline WorldArtifacts generate_world(const ExperimentConfig& cfg) {
    WorldArtifacts art;
    const auto projector = make_projector(cfg);

    Rng scene_rng = derive_stream(cfg.seed, "world.scenes");
    art.scenes.reserve(cfg.world.n_scenes);
    for (int id = 0; id < cfg.world.n_scenes; ++id) {
        art.scenes.push_back(world::generate_scene(cfg.taxonomy, projector, id, scene_rng,
                                                   cfg.seed, cfg.world.min_objects,
                                                   cfg.world.max_objects,
                                                   cfg.world.category_cluster_prob));
    }

    // Scene-level split: test scenes are unseen during training.
    std::vector<int> order(cfg.world.n_scenes);
    for (int i = 0; i < cfg.world.n_scenes; ++i) order[i] = i;
    Rng split_rng = derive_stream(cfg.seed, "world.split");
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.below(i)]);
    const auto n_train = static_cast<std::size_t>(cfg.world.n_scenes * cfg.split.train_pct / 100.0);
    const auto n_val = static_cast<std::size_t>(cfg.world.n_scenes * cfg.split.val_pct / 100.0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < n_train)
            art.train_scene_ids.push_back(order[i]);
        else if (i < n_train + n_val)
            art.val_scene_ids.push_back(order[i]);
        else
            art.test_scene_ids.push_back(order[i]);
    }
    std::sort(art.train_scene_ids.begin(), art.train_scene_ids.end());
    std::sort(art.val_scene_ids.begin(), art.val_scene_ids.end());
    std::sort(art.test_scene_ids.begin(), art.test_scene_ids.end());

    auto script_split = [&](const std::vector<int>& ids, std::vector<Dialogue>& out) {
        int game_id = 0;
        for (int scene_id : ids) {
            const Scene& scene = art.scenes[static_cast<std::size_t>(scene_id)];
            Rng rng = derive_stream(cfg.seed, "lingo.gold", static_cast<uint64_t>(scene_id));
            for (int g = 0; g < cfg.world.games_per_scene; ++g) {
                const int target = scene.objects[rng.below(scene.objects.size())].id;
                Dialogue d = lingo::script_gold_dialogue(scene, target, cfg.world.gold_budget,
                                                         cfg.taxonomy, rng,
                                                         cfg.world.distractor_prob);
                d.id = game_id++;
                out.push_back(std::move(d));
            }
        }
    };
    script_split(art.train_scene_ids, art.train_gold);
    script_split(art.val_scene_ids, art.val_gold);
    script_split(art.test_scene_ids, art.test_gold);

    art.vocab = lingo::build_vocab(art.train_gold);
    return art;
}

inline void save_world(const std::string& dir, const WorldArtifacts& art,
                       const ExperimentConfig& cfg) {
    const uint64_t digest = cfg.digest();
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::write_scenes(dir + "/scenes.jsonl", art.scenes, cfg.taxonomy.canvas(), digest);
    io::write_games(dir + "/gold_train.jsonl", art.train_gold, digest);
    io::write_games(dir + "/gold_val.jsonl", art.val_gold, digest);
    io::write_games(dir + "/gold_test.jsonl", art.test_gold, digest);
    io::json vocab_json = art.vocab.to_json();
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(digest));
    vocab_json["config_digest"] = hex;
    io::write_file(dir + "/vocab.json", vocab_json.dump(2) + "\n");
    io::json splits = {{"train_scene_ids", art.train_scene_ids},
                       {"val_scene_ids", art.val_scene_ids},
                       {"test_scene_ids", art.test_scene_ids},
                       {"config_digest", hex}};
    io::write_file(dir + "/splits.json", splits.dump(2) + "\n");
    io::write_file(dir + "/config.json", cfg.to_json().dump(2) + "\n");
}

inline WorldArtifacts load_world(const std::string& dir, const ExperimentConfig& cfg) {
    WorldArtifacts art;
    art.scenes = io::read_scenes(dir + "/scenes.jsonl");
    // Features are not serialized: recompute them from the experiment seed.
    const auto projector = make_projector(cfg);
    for (auto& scene : art.scenes) {
        Rng noise = derive_stream(cfg.seed, "world.feature_noise",
                                  static_cast<uint64_t>(scene.id));
        scene.features = projector.features(cfg.taxonomy, scene, noise);
    }
    const auto splits = io::json::parse(io::read_file(dir + "/splits.json"));
    art.train_scene_ids = splits.at("train_scene_ids").get<std::vector<int>>();
    art.val_scene_ids = splits.at("val_scene_ids").get<std::vector<int>>();
    art.test_scene_ids = splits.at("test_scene_ids").get<std::vector<int>>();
    art.train_gold = io::read_games(dir + "/gold_train.jsonl");
    art.val_gold = io::read_games(dir + "/gold_val.jsonl");
    art.test_gold = io::read_games(dir + "/gold_test.jsonl");
    art.vocab = Vocabulary::from_json(io::json::parse(io::read_file(dir + "/vocab.json")));
    return art;
}

// ---------------------------------------------------------------------------
// Learned oracle on top of the gold QA pairs.

struct OracleArtifacts {
    ParamStore store;
    oracle::OracleModel model;
    std::vector<oracle::EpochStats> curve;

    explicit OracleArtifacts(uint64_t seed) : store(seed) {}
};

inline oracle::OracleDims oracle_dims(const ExperimentConfig& cfg, const Vocabulary& vocab) {
    oracle::OracleDims d;
    d.vocab = vocab.size();
    d.n_categories = cfg.taxonomy.categories().size();
    d.token_embed = cfg.oracle.token_embed;
    d.category_embed = cfg.oracle.category_embed;
    d.lstm_hidden = cfg.oracle.lstm_hidden;
    d.mlp_hidden = cfg.oracle.mlp_hidden;
    return d;
}

inline std::vector<oracle::QaExample> qa_dataset(const std::vector<Dialogue>& gold,
                                                 const std::map<int, const Scene*>& scenes,
                                                 const ExperimentConfig& cfg,
                                                 const Vocabulary& vocab,
                                                 int cap = 0) {
    std::vector<oracle::QaExample> out;
    for (const auto& d : gold) {
        const Scene& scene = *scenes.at(d.scene_id);
        for (const auto& turn : d.turns) {
            out.push_back(oracle::make_qa_example(scene, d.target_id, turn.question, turn.answer,
                                                  cfg.taxonomy, vocab));
            if (cap > 0 && out.size() >= static_cast<std::size_t>(cap)) return out;
        }
    }
    return out;
}

inline OracleArtifacts train_oracle_on_world(const ExperimentConfig& cfg,
                                             const WorldArtifacts& art) {
    OracleArtifacts o(fnv1a_u64(cfg.seed, fnv1a("oracle.init")));
    o.model = oracle::OracleModel::build(o.store, oracle_dims(cfg, art.vocab));
    const auto scenes = art.scene_index();
    const auto data = qa_dataset(art.train_gold, scenes, cfg, art.vocab,
                                 cfg.oracle.max_train_pairs);
    o.curve = oracle::train_oracle(o.store, o.model, data, cfg.oracle.epochs, cfg.oracle.lr,
                                   cfg.oracle.batch_size, cfg.seed);
    return o;
}

inline void save_oracle(const std::string& path, const OracleArtifacts& o,
                        const ExperimentConfig& cfg) {
    io::json meta{{"kind", "oracle"}};
    io::save_checkpoint(path, {{"oracle", &o.store}}, cfg.digest(), meta);
}

inline OracleArtifacts load_oracle(const std::string& path, const ExperimentConfig& cfg,
                                   const Vocabulary& vocab) {
    OracleArtifacts o(fnv1a_u64(cfg.seed, fnv1a("oracle.init")));
    o.model = oracle::OracleModel::build(o.store, oracle_dims(cfg, vocab));
    io::load_checkpoint(path, {{"oracle", &o.store}});
    return o;
}

// ---------------------------------------------------------------------------
// Agent checkpoints

inline agent::AgentDims agent_dims(const ExperimentConfig& cfg, const Vocabulary& vocab) {
    agent::AgentDims d = cfg.agent_dims;
    d.vocab = vocab.size();
    d.n_categories = cfg.taxonomy.categories().size();
    return d;
}

inline void save_agent(const std::string& path, agent::QuestionerModel& model,
                       const ExperimentConfig& cfg, const io::json& extra = io::json::object()) {
    std::vector<std::pair<std::string, const ParamStore*>> stores;
    stores.emplace_back("enc", &model.enc_store);
    if (model.mode == agent::Mode::Decoupled) stores.emplace_back("enc_g", &model.enc_g_store);
    stores.emplace_back("qgen", &model.qgen_store);
    stores.emplace_back("guesser", &model.guesser_store);
    io::json meta{{"kind", "agent"},
                  {"mode", agent::mode_name(model.mode)},
                  {"dims",
                   {{"vocab", model.dims.vocab},
                    {"n_categories", model.dims.n_categories},
                    {"token_embed", model.dims.token_embed},
                    {"lstm_e", model.dims.lstm_e},
                    {"state", model.dims.state},
                    {"feature", model.dims.feature},
                    {"category_embed", model.dims.category_embed},
                    {"guesser_hidden", model.dims.guesser_hidden},
                    {"max_question_len", model.dims.max_question_len}}}};
    for (auto& [k, v] : extra.items()) meta[k] = v;
    io::save_checkpoint(path, stores, cfg.digest(), meta);
}

inline std::unique_ptr<agent::QuestionerModel> load_agent(const std::string& path) {
    const auto header = io::inspect_checkpoint(path);
    const auto& meta = header.at("meta");
    if (meta.value("kind", "") != "agent") throw DataError(path + ": not an agent checkpoint");
    const auto& dj = meta.at("dims");
    agent::AgentDims dims;
    dims.vocab = dj.at("vocab").get<std::size_t>();
    dims.n_categories = dj.at("n_categories").get<std::size_t>();
    dims.token_embed = dj.at("token_embed").get<std::size_t>();
    dims.lstm_e = dj.at("lstm_e").get<std::size_t>();
    dims.state = dj.at("state").get<std::size_t>();
    dims.feature = dj.at("feature").get<std::size_t>();
    dims.category_embed = dj.at("category_embed").get<std::size_t>();
    dims.guesser_hidden = dj.at("guesser_hidden").get<std::size_t>();
    dims.max_question_len = dj.at("max_question_len").get<int>();
    const agent::Mode mode = meta.at("mode").get<std::string>() == "decoupled"
                                 ? agent::Mode::Decoupled
                                 : agent::Mode::Joint;
    auto model = std::make_unique<agent::QuestionerModel>(mode, dims, /*seed=*/0);
    std::vector<std::pair<std::string, ParamStore*>> stores;
    stores.emplace_back("enc", &model->enc_store);
    if (mode == agent::Mode::Decoupled) stores.emplace_back("enc_g", &model->enc_g_store);
    stores.emplace_back("qgen", &model->qgen_store);
    stores.emplace_back("guesser", &model->guesser_store);
    io::load_checkpoint(path, stores);
    return model;
}

// ---------------------------------------------------------------------------
// Trainer wiring

inline std::vector<arena::GameSpec> game_specs(const std::vector<Dialogue>& gold,
                                               const std::map<int, const Scene*>& scenes) {
    std::vector<arena::GameSpec> out;
    out.reserve(gold.size());
    for (const auto& d : gold) out.push_back(arena::GameSpec{scenes.at(d.scene_id), d.target_id});
    return out;
}

// Deterministic subsample for per-epoch validation.
inline std::vector<arena::GameSpec> subsample_games(const std::vector<arena::GameSpec>& all,
                                                    int cap, uint64_t seed) {
    if (cap <= 0 || static_cast<std::size_t>(cap) >= all.size()) return all;
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = derive_stream(seed, "lab.val_subsample");
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<arena::GameSpec> out;
    out.reserve(cap);
    for (int i = 0; i < cap; ++i) out.push_back(all[order[static_cast<std::size_t>(i)]]);
    return out;
}

struct TrainerBundle {
    trainer::TrainData data;
    trainer::TrainSpec spec;
};

// Shared assembly: gold corpus, validation subsample, oracle handle, spec.
inline TrainerBundle make_trainer_bundle(const ExperimentConfig& cfg, const WorldArtifacts& art,
                                         const std::map<int, const Scene*>& scenes,
                                         const arena::OracleRef& oracle_ref,
                                         const config::ScheduleConfig& sched) {
    TrainerBundle b;
    b.data.taxonomy = &cfg.taxonomy;
    b.data.vocab = &art.vocab;
    b.data.scenes = scenes;
    b.data.gold = art.train_gold;
    b.data.train_scenes = art.scenes_of(art.train_scene_ids);
    b.data.val_games = subsample_games(game_specs(art.val_gold, scenes), sched.val_games,
                                       cfg.seed);
    b.data.oracle_ref = oracle_ref;
    b.data.val_cfg.question_budget = cfg.eval.question_budget;
    b.data.val_cfg.decode = arena::DecodeMode::Greedy;
    b.data.val_cfg.oracle = oracle_ref.kind;
    b.data.val_cfg.seed = cfg.seed;

    b.spec.n = sched.n;
    b.spec.epochs = sched.epochs;
    b.spec.batch_size = sched.batch_size;
    b.spec.lr = sched.lr;
    b.spec.epoch_games = sched.epoch_games;
    b.spec.selfplay_temperature = cfg.eval.temperature;
    b.spec.seed = cfg.seed;
    b.spec.workers = cfg.workers;
    return b;
}

inline std::string curves_csv(const std::vector<trainer::EpochRow>& rows, uint64_t digest) {
    io::CsvWriter csv({"epoch", "regime", "head", "train_loss", "val_success", "wall_ms",
                       "config_digest"});
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(digest));
    for (const auto& r : rows) {
        csv.row({std::to_string(r.epoch), r.regime, r.head, io::CsvWriter::num(r.train_loss),
                 io::CsvWriter::num(r.val_success), io::CsvWriter::num(r.wall_ms), hex});
    }
    return csv.str();
}

}  // namespace guesslab::lab
