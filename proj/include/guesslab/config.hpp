#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "guesslab/agent.hpp"
#include "guesslab/arena.hpp"
#include "guesslab/error.hpp"
#include "guesslab/oracle.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/world.hpp"

namespace guesslab::config {

using json = nlohmann::ordered_json;

struct WorldConfig {
    int n_scenes = 4200;
    int min_objects = 3;
    int max_objects = 8;
    std::size_t feature_dim = 64;
    int games_per_scene = 2;       // gold dialogues sampled per scene
    int gold_budget = 8;           // question cap for the scripted dialogues
    double distractor_prob = 0.35;
    double category_cluster_prob = 0.5;  // same-category repeats within a scene
};

struct SplitConfig {
    double train_pct = 70.0;
    double val_pct = 15.0;
    double test_pct = 15.0;
};

struct OracleConfig {
    std::size_t token_embed = 24;
    std::size_t category_embed = 24;
    std::size_t lstm_hidden = 48;
    std::size_t mlp_hidden = 48;
    int epochs = 40;
    double lr = 5e-3;
    std::size_t batch_size = 64;
    int max_train_pairs = 12000;
};

struct ScheduleConfig {
    int n = 7;              // modulo period
    int epochs = 35;
    std::size_t batch_size = 64;
    double lr = 1e-3;
    int epoch_games = 1536;  // games visited per epoch (deterministic rotation)
    int val_games = 256;     // validation subsample for model selection
};

struct EvalConfig {
    int question_budget = 5;
    std::string decode = "greedy";
    std::string oracle = "neural";
    double temperature = 1.0;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    std::string preset = "desk";  // desk | paper
    world::Taxonomy taxonomy = world::Taxonomy::desk_default();
    WorldConfig world;
    SplitConfig split;
    OracleConfig oracle;
    agent::AgentDims agent_dims;  // vocab/n_categories filled at model build time
    ScheduleConfig sl;            // modulo-n supervised phase
    ScheduleConfig cl;            // cooperative phase
    EvalConfig eval;
    std::string out_dir = "out";
    int workers = 1;

    static ExperimentConfig desk() {
        ExperimentConfig c;
        c.preset = "desk";
        c.agent_dims = agent::AgentDims{};
        c.agent_dims.token_embed = 32;
        c.agent_dims.lstm_e = 128;
        c.agent_dims.state = 64;
        c.agent_dims.feature = 64;
        c.agent_dims.category_embed = 32;
        c.agent_dims.guesser_hidden = 64;
        c.sl = ScheduleConfig{7, 35, 64, 1e-3, 1536, 256};
        c.cl = ScheduleConfig{5, 100, 64, 1e-3, 512, 256};
        return c;
    }

    // Paper-scale preset: full dims and pass-through epochs; not sized for a
    // laptop run.
    static ExperimentConfig paper() {
        ExperimentConfig c;
        c.preset = "paper";
        c.world.n_scenes = 66000;
        c.world.feature_dim = 2048;
        c.world.games_per_scene = 2;
        c.agent_dims = agent::AgentDims::paper(0, 0);
        c.oracle.token_embed = 512;
        c.oracle.category_embed = 512;
        c.oracle.lstm_hidden = 512;
        c.oracle.mlp_hidden = 512;
        c.sl = ScheduleConfig{7, 100, 1024, 1e-4, 0, 0};  // 0 => full pass / full split
        c.cl = ScheduleConfig{5, 100, 256, 1e-4, 0, 0};
        c.eval.question_budget = 5;
        return c;
    }

    json to_json() const {
        json j;
        j["seed"] = seed;
        j["preset"] = preset;
        j["taxonomy"] = taxonomy.to_json();
        j["world"] = {{"n_scenes", world.n_scenes},
                      {"min_objects", world.min_objects},
                      {"max_objects", world.max_objects},
                      {"feature_dim", world.feature_dim},
                      {"games_per_scene", world.games_per_scene},
                      {"gold_budget", world.gold_budget},
                      {"distractor_prob", world.distractor_prob},
                      {"category_cluster_prob", world.category_cluster_prob}};
        j["split"] = {{"train_pct", split.train_pct},
                      {"val_pct", split.val_pct},
                      {"test_pct", split.test_pct}};
        j["oracle"] = {{"token_embed", oracle.token_embed},
                       {"category_embed", oracle.category_embed},
                       {"lstm_hidden", oracle.lstm_hidden},
                       {"mlp_hidden", oracle.mlp_hidden},
                       {"epochs", oracle.epochs},
                       {"lr", oracle.lr},
                       {"batch_size", oracle.batch_size},
                       {"max_train_pairs", oracle.max_train_pairs}};
        j["agent"] = {{"token_embed", agent_dims.token_embed},
                      {"lstm_e", agent_dims.lstm_e},
                      {"state", agent_dims.state},
                      {"feature", agent_dims.feature},
                      {"category_embed", agent_dims.category_embed},
                      {"guesser_hidden", agent_dims.guesser_hidden},
                      {"max_question_len", agent_dims.max_question_len}};
        auto sched = [](const ScheduleConfig& s) {
            return json{{"n", s.n},           {"epochs", s.epochs},
                        {"batch_size", s.batch_size}, {"lr", s.lr},
                        {"epoch_games", s.epoch_games}, {"val_games", s.val_games}};
        };
        j["sl"] = sched(sl);
        j["cl"] = sched(cl);
        j["eval"] = {{"question_budget", eval.question_budget},
                     {"decode", eval.decode},
                     {"oracle", eval.oracle},
                     {"temperature", eval.temperature}};
        j["out_dir"] = out_dir;
        j["workers"] = workers;
        return j;
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c = desk();
        if (j.contains("preset") && j.at("preset").get<std::string>() == "paper")
            c = paper();
        c.seed = j.value("seed", c.seed);
        c.preset = j.value("preset", c.preset);
        if (j.contains("taxonomy")) c.taxonomy = world::Taxonomy::from_json(j.at("taxonomy"));
        if (j.contains("world")) {
            const auto& w = j.at("world");
            c.world.n_scenes = w.value("n_scenes", c.world.n_scenes);
            c.world.min_objects = w.value("min_objects", c.world.min_objects);
            c.world.max_objects = w.value("max_objects", c.world.max_objects);
            c.world.feature_dim = w.value("feature_dim", c.world.feature_dim);
            c.world.games_per_scene = w.value("games_per_scene", c.world.games_per_scene);
            c.world.gold_budget = w.value("gold_budget", c.world.gold_budget);
            c.world.distractor_prob = w.value("distractor_prob", c.world.distractor_prob);
            c.world.category_cluster_prob =
                w.value("category_cluster_prob", c.world.category_cluster_prob);
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            c.split.train_pct = s.value("train_pct", c.split.train_pct);
            c.split.val_pct = s.value("val_pct", c.split.val_pct);
            c.split.test_pct = s.value("test_pct", c.split.test_pct);
        }
        if (j.contains("oracle")) {
            const auto& o = j.at("oracle");
            c.oracle.token_embed = o.value("token_embed", c.oracle.token_embed);
            c.oracle.category_embed = o.value("category_embed", c.oracle.category_embed);
            c.oracle.lstm_hidden = o.value("lstm_hidden", c.oracle.lstm_hidden);
            c.oracle.mlp_hidden = o.value("mlp_hidden", c.oracle.mlp_hidden);
            c.oracle.epochs = o.value("epochs", c.oracle.epochs);
            c.oracle.lr = o.value("lr", c.oracle.lr);
            c.oracle.batch_size = o.value("batch_size", c.oracle.batch_size);
            c.oracle.max_train_pairs = o.value("max_train_pairs", c.oracle.max_train_pairs);
        }
        if (j.contains("agent")) {
            const auto& a = j.at("agent");
            c.agent_dims.token_embed = a.value("token_embed", c.agent_dims.token_embed);
            c.agent_dims.lstm_e = a.value("lstm_e", c.agent_dims.lstm_e);
            c.agent_dims.state = a.value("state", c.agent_dims.state);
            c.agent_dims.feature = a.value("feature", c.agent_dims.feature);
            c.agent_dims.category_embed = a.value("category_embed", c.agent_dims.category_embed);
            c.agent_dims.guesser_hidden = a.value("guesser_hidden", c.agent_dims.guesser_hidden);
            c.agent_dims.max_question_len =
                a.value("max_question_len", c.agent_dims.max_question_len);
        }
        auto sched = [](const json& s, ScheduleConfig base) {
            base.n = s.value("n", base.n);
            base.epochs = s.value("epochs", base.epochs);
            base.batch_size = s.value("batch_size", base.batch_size);
            base.lr = s.value("lr", base.lr);
            base.epoch_games = s.value("epoch_games", base.epoch_games);
            base.val_games = s.value("val_games", base.val_games);
            return base;
        };
        if (j.contains("sl")) c.sl = sched(j.at("sl"), c.sl);
        if (j.contains("cl")) c.cl = sched(j.at("cl"), c.cl);
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            c.eval.question_budget = e.value("question_budget", c.eval.question_budget);
            c.eval.decode = e.value("decode", c.eval.decode);
            c.eval.oracle = e.value("oracle", c.eval.oracle);
            c.eval.temperature = e.value("temperature", c.eval.temperature);
        }
        c.out_dir = j.value("out_dir", c.out_dir);
        c.workers = j.value("workers", c.workers);
        c.validate();
        return c;
    }

    void validate() const {
        const double total = split.train_pct + split.val_pct + split.test_pct;
        if (std::abs(total - 100.0) > 1e-9)
            throw ConfigError("splits must sum to 100%, got " + std::to_string(total));
        if (world.max_objects < world.min_objects)
            throw ConfigError("world.max_objects < world.min_objects");
        if (world.feature_dim != agent_dims.feature)
            throw ConfigError("agent.feature must equal world.feature_dim");
        if (sl.n < 1) throw ConfigError("sl.n must be >= 1");
        if (cl.n < 2) throw ConfigError("cl.n must be >= 2 (n=1 would never train the guesser)");
        if (eval.decode != "greedy" && eval.decode != "sample")
            throw ConfigError("eval.decode must be greedy or sample");
        if (eval.oracle != "rule" && eval.oracle != "neural")
            throw ConfigError("eval.oracle must be rule or neural");
    }

    uint64_t digest() const { return fnv1a(to_json().dump()); }

    arena::OracleKind oracle_kind() const {
        return eval.oracle == "rule" ? arena::OracleKind::Rule : arena::OracleKind::Neural;
    }

    arena::DecodeMode decode_mode() const {
        return eval.decode == "greedy" ? arena::DecodeMode::Greedy : arena::DecodeMode::Sample;
    }
};

}  // namespace guesslab::config
