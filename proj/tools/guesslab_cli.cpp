// guesslab command line: world generation, training, evaluation, analysis.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "guesslab/config.hpp"
#include "guesslab/io.hpp"
#include "guesslab/lab.hpp"
#include "guesslab/metrics.hpp"
#include "guesslab/trainer.hpp"

namespace fs = std::filesystem;
using namespace guesslab;
using config::ExperimentConfig;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
};

// Precedence: built-in desk defaults < --config file < explicit flags.
ExperimentConfig load_config(const GlobalOpts& g) {
    ExperimentConfig cfg = ExperimentConfig::desk();
    if (!g.config_path.empty())
        cfg = ExperimentConfig::from_json(io::json::parse(io::read_file(g.config_path)));
    if (g.seed) cfg.seed = *g.seed;
    if (g.out_dir) cfg.out_dir = *g.out_dir;
    if (g.workers) cfg.workers = *g.workers;
    cfg.validate();
    return cfg;
}

// Output root: $GUESSLAB_OUT when set, else the working directory.
std::string resolve_out(const std::string& dir) {
    fs::path p(dir);
    if (p.is_absolute()) return p.string();
    const char* root = std::getenv("GUESSLAB_OUT");
    if (root && *root) return (fs::path(root) / p).string();
    return p.string();
}

std::string world_dir(const ExperimentConfig& cfg) {
    return resolve_out(cfg.out_dir) + "/world";
}

arena::OracleRef make_oracle_ref(const ExperimentConfig& cfg,
                                 std::optional<lab::OracleArtifacts>& storage,
                                 const std::string& oracle_ckpt,
                                 const lingo::Vocabulary& vocab, arena::OracleKind kind) {
    arena::OracleRef ref;
    ref.kind = kind;
    if (kind == arena::OracleKind::Neural) {
        if (oracle_ckpt.empty())
            throw ConfigError("neural oracle requested but --oracle-checkpoint is missing");
        if (!fs::exists(oracle_ckpt))
            throw ConfigError("oracle checkpoint not found: " + oracle_ckpt +
                              " (run: guesslab train --regime oracle)");
        storage.emplace(lab::load_oracle(oracle_ckpt, cfg, vocab));
        ref.model = &storage->model;
    }
    return ref;
}

void write_selfplay_logs(const std::string& dir, const trainer::TrainResult& result,
                         uint64_t digest) {
    for (std::size_t e = 0; e < result.selfplay_logs.size(); ++e) {
        if (result.selfplay_logs[e].empty()) continue;
        char name[64];
        std::snprintf(name, sizeof(name), "epoch_%04zu.jsonl", e + 1);
        io::write_games(dir + "/" + name, result.selfplay_logs[e], digest);
    }
}

int cmd_gen_world(const GlobalOpts& g, bool force) {
    ExperimentConfig cfg = load_config(g);
    const std::string dir = world_dir(cfg);
    if (fs::exists(dir + "/scenes.jsonl") && !force)
        throw ConfigError("world already exists at " + dir + " (use --force to regenerate)");
    auto art = lab::generate_world(cfg);
    lab::save_world(dir, art, cfg);
    std::printf("world: %zu scenes -> %s\n", art.scenes.size(), dir.c_str());
    std::printf("gold games: train %zu, val %zu, test %zu; vocab %zu tokens\n",
                art.train_gold.size(), art.val_gold.size(), art.test_gold.size(),
                art.vocab.size());
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& regime, const std::string& from_ckpt,
              const std::string& oracle_ckpt_flag) {
    ExperimentConfig cfg = load_config(g);
    const std::string wdir = world_dir(cfg);
    if (!fs::exists(wdir + "/scenes.jsonl"))
        throw ConfigError("world not found at " + wdir + " (run: guesslab gen-world)");
    auto art = lab::load_world(wdir, cfg);
    auto scenes = art.scene_index();
    const uint64_t digest = cfg.digest();
    const std::string out_root = resolve_out(cfg.out_dir);

    if (regime == "oracle") {
        auto o = lab::train_oracle_on_world(cfg, art);
        const std::string dir = out_root + "/oracle";
        fs::create_directories(dir);
        lab::save_oracle(dir + "/oracle.ckpt", o, cfg);
        io::CsvWriter csv({"epoch", "train_loss", "train_accuracy", "config_digest"});
        char hex[20];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(digest));
        for (std::size_t e = 0; e < o.curve.size(); ++e)
            csv.row({std::to_string(e + 1), io::CsvWriter::num(o.curve[e].loss),
                     io::CsvWriter::num(o.curve[e].accuracy), hex});
        io::write_file(dir + "/curve.csv", csv.str());
        std::printf("oracle trained: final train accuracy %.4f\n", o.curve.back().accuracy);
        std::printf("best checkpoint: %s\n", (dir + "/oracle.ckpt").c_str());
        return 0;
    }

    const std::string oracle_ckpt =
        oracle_ckpt_flag.empty() ? out_root + "/oracle/oracle.ckpt" : oracle_ckpt_flag;
    std::optional<lab::OracleArtifacts> oracle_storage;
    auto oracle_ref =
        make_oracle_ref(cfg, oracle_storage, oracle_ckpt, art.vocab, cfg.oracle_kind());

    const std::string run_dir =
        out_root + "/runs/" + regime + "-seed" + std::to_string(cfg.seed);
    fs::create_directories(run_dir);

    trainer::TrainResult result;
    std::unique_ptr<agent::QuestionerModel> model;
    if (regime == "sl" || regime == "decoupled") {
        const auto mode =
            regime == "sl" ? agent::Mode::Joint : agent::Mode::Decoupled;
        model = std::make_unique<agent::QuestionerModel>(mode, lab::agent_dims(cfg, art.vocab),
                                                         cfg.seed);
        auto bundle = lab::make_trainer_bundle(cfg, art, scenes, oracle_ref, cfg.sl);
        result = regime == "sl" ? trainer::run_sl(*model, bundle.data, bundle.spec)
                                : trainer::run_decoupled(*model, bundle.data, bundle.spec);
    } else if (regime == "cl") {
        if (from_ckpt.empty())
            throw ConfigError("cl training starts from an SL checkpoint: pass --from-checkpoint");
        if (!fs::exists(from_ckpt))
            throw ConfigError("checkpoint not found: " + from_ckpt);
        model = lab::load_agent(from_ckpt);
        if (model->mode != agent::Mode::Joint)
            throw ConfigError("cl training needs a joint-mode checkpoint");
        auto bundle = lab::make_trainer_bundle(cfg, art, scenes, oracle_ref, cfg.cl);
        result = trainer::run_cl(*model, bundle.data, bundle.spec, cfg.eval.question_budget);
        write_selfplay_logs(run_dir + "/selfplay", result, digest);
        auto lexicon = metrics::KeywordLexicon::desk_default(cfg.taxonomy);
        auto reference = metrics::type_distribution(art.train_gold, lexicon);
        std::vector<std::pair<int, metrics::MetricsReport>> per_epoch;
        for (std::size_t e = 0; e < result.selfplay_logs.size(); ++e) {
            if (result.selfplay_logs[e].empty()) continue;
            per_epoch.emplace_back(static_cast<int>(e) + 1,
                                   metrics::compute_report(result.selfplay_logs[e], lexicon,
                                                           &reference));
        }
        io::write_file(run_dir + "/metrics_trace.csv", metrics::trace_epochs_csv(per_epoch));
    } else {
        throw ConfigError("unknown regime: " + regime);
    }

    io::write_file(run_dir + "/curves.csv", lab::curves_csv(result.rows, digest));
    // model holds the best-on-validation state; the last epoch rides in the result
    lab::save_agent(run_dir + "/best.ckpt", *model, cfg,
                    {{"phase", regime},
                     {"best_epoch", result.best_epoch},
                     {"best_val_success", result.best_val}});
    trainer::apply_snapshot(*model, result.last_snapshot);
    lab::save_agent(run_dir + "/last.ckpt", *model, cfg, {{"phase", regime + "/last"}});

    if (result.aborted) {
        std::fprintf(stderr, "training aborted: %s\n", result.diagnostic.c_str());
        std::printf("last-good checkpoint: %s\n", (run_dir + "/best.ckpt").c_str());
        return 4;
    }
    std::printf("best epoch %d, validation success %.4f\n", result.best_epoch, result.best_val);
    std::printf("best checkpoint: %s\n", (run_dir + "/best.ckpt").c_str());
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::vector<std::string>& checkpoints,
             const std::string& split, std::vector<int> budgets, const std::string& decode,
             const std::string& oracle_kind_flag, const std::string& oracle_ckpt_flag,
             const std::string& tag) {
    ExperimentConfig cfg = load_config(g);
    const std::string wdir = world_dir(cfg);
    if (!fs::exists(wdir + "/scenes.jsonl"))
        throw ConfigError("world not found at " + wdir + " (run: guesslab gen-world)");
    auto art = lab::load_world(wdir, cfg);
    auto scenes = art.scene_index();

    const std::vector<lingo::Dialogue>* gold = nullptr;
    if (split == "train")
        gold = &art.train_gold;
    else if (split == "val")
        gold = &art.val_gold;
    else if (split == "test")
        gold = &art.test_gold;
    else
        throw ConfigError("unknown split: " + split);
    auto specs = lab::game_specs(*gold, scenes);

    if (!oracle_kind_flag.empty()) cfg.eval.oracle = oracle_kind_flag;
    if (!decode.empty()) cfg.eval.decode = decode;
    cfg.validate();
    const std::string out_root = resolve_out(cfg.out_dir);
    const std::string oracle_ckpt =
        oracle_ckpt_flag.empty() ? out_root + "/oracle/oracle.ckpt" : oracle_ckpt_flag;
    std::optional<lab::OracleArtifacts> oracle_storage;
    auto oracle_ref =
        make_oracle_ref(cfg, oracle_storage, oracle_ckpt, art.vocab, cfg.oracle_kind());

    if (budgets.empty()) budgets = {cfg.eval.question_budget};
    const std::string dir =
        out_root + "/eval/" + (tag.empty() ? split : tag);
    fs::create_directories(dir);

    io::json summary;
    summary["split"] = split;
    summary["n_games"] = specs.size();
    summary["decode"] = cfg.eval.decode;
    summary["oracle"] = cfg.eval.oracle;
    summary["seed"] = cfg.seed;
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(cfg.digest()));
    summary["config_digest"] = hex;

    io::json by_budget = io::json::object();
    for (int budget : budgets) {
        arena::GameConfig gc;
        gc.question_budget = budget;
        gc.decode = cfg.decode_mode();
        gc.temperature = cfg.eval.temperature;
        gc.oracle = cfg.oracle_kind();
        gc.seed = cfg.seed;

        std::vector<double> accs;
        io::json runs = io::json::array();
        for (std::size_t ci = 0; ci < checkpoints.size(); ++ci) {
            auto model = lab::load_agent(checkpoints[ci]);
            auto res = arena::evaluate(*model, oracle_ref, specs, gc, cfg.taxonomy, art.vocab,
                                       cfg.workers);
            accs.push_back(res.accuracy);
            runs.push_back(io::json{{"checkpoint", checkpoints[ci]},
                                    {"accuracy", res.accuracy},
                                    {"n_games", res.n_games}});
            std::vector<lingo::Dialogue> games;
            games.reserve(res.games.size());
            for (auto& gr : res.games) games.push_back(gr.dialogue);
            char name[64];
            std::snprintf(name, sizeof(name), "games_%dq_run%zu.jsonl", budget, ci);
            io::write_games(dir + "/" + name, games, cfg.digest());
            std::printf("budget %dQ, checkpoint %s: accuracy %.4f\n", budget,
                        checkpoints[ci].c_str(), res.accuracy);
        }
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double stddev = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
        by_budget[std::to_string(budget)] = io::json{
            {"runs", runs}, {"mean_accuracy", mean}, {"stddev_accuracy", stddev}};
        std::printf("budget %dQ: accuracy %.4f +- %.4f over %zu run(s)\n", budget, mean, stddev,
                    accs.size());
    }
    summary["budgets"] = by_budget;
    io::write_file(dir + "/summary.json", summary.dump(2) + "\n");
    std::printf("summary: %s\n", (dir + "/summary.json").c_str());
    return 0;
}

int cmd_analyze(const GlobalOpts& g, const std::vector<std::string>& log_files,
                const std::string& lexicon_file, const std::string& reference_logs,
                const std::string& reference_dist_file, const std::string& out_prefix,
                bool trace) {
    ExperimentConfig cfg = load_config(g);
    auto lexicon = lexicon_file.empty()
                       ? metrics::KeywordLexicon::desk_default(cfg.taxonomy)
                       : metrics::KeywordLexicon::from_json(
                             io::json::parse(io::read_file(lexicon_file)));

    std::optional<metrics::TypeDistribution> reference;
    if (!reference_dist_file.empty()) {
        reference = metrics::type_distribution_from_weights(
            io::json::parse(io::read_file(reference_dist_file)));
    } else if (!reference_logs.empty()) {
        auto ref_games = io::read_games(reference_logs);
        reference = metrics::type_distribution(ref_games, lexicon);
    } else {
        std::printf("note: no --reference given; KL to reference is omitted\n");
    }

    const std::string prefix =
        out_prefix.empty() ? resolve_out(cfg.out_dir) + "/analysis/report" : resolve_out(out_prefix);
    if (fs::path(prefix).has_parent_path())
        fs::create_directories(fs::path(prefix).parent_path());

    if (trace) {
        std::vector<metrics::MetricsReport> per_epoch;
        for (const auto& f : log_files) {
            auto games = io::read_games(f);
            per_epoch.push_back(metrics::compute_report(games, lexicon,
                                                        reference ? &*reference : nullptr));
        }
        io::write_file(prefix + "_trace.csv", metrics::trace_epochs_csv(per_epoch));
        std::printf("trace: %s\n", (prefix + "_trace.csv").c_str());
        return 0;
    }

    std::vector<lingo::Dialogue> games;
    for (const auto& f : log_files) {
        auto batch = io::read_games(f);
        games.insert(games.end(), batch.begin(), batch.end());
    }
    auto report = metrics::compute_report(games, lexicon, reference ? &*reference : nullptr);
    io::json j = report.to_json();
    char hex[20];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(cfg.digest()));
    j["config_digest"] = hex;
    io::write_file(prefix + ".json", j.dump(2) + "\n");
    io::write_file(prefix + ".txt", report.to_table());
    std::fputs(report.to_table().c_str(), stdout);
    std::printf("report: %s\n", (prefix + ".json").c_str());
    return 0;
}

int cmd_inspect(const std::string& path) {
    auto info = io::inspect_checkpoint(path);
    std::printf("version: %u\n", info.at("version").get<unsigned>());
    std::printf("config digest: %s\n", info.at("config_digest").get<std::string>().c_str());
    std::printf("meta: %s\n", info.at("meta").dump().c_str());
    std::printf("%-28s %-6s %-16s %s\n", "name", "dtype", "shape", "elements");
    std::size_t total = 0;
    for (const auto& rec : info.at("params")) {
        std::string shape = "[";
        for (std::size_t i = 0; i < rec.at("shape").size(); ++i)
            shape += (i ? "x" : "") + std::to_string(rec.at("shape").at(i).get<std::size_t>());
        shape += "]";
        std::printf("%-28s %-6s %-16s %zu\n", rec.at("name").get<std::string>().c_str(),
                    rec.at("dtype").get<std::string>().c_str(), shape.c_str(),
                    rec.at("elements").get<std::size_t>());
        total += rec.at("elements").get<std::size_t>();
    }
    std::printf("total parameters: %zu\n", total);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"guesslab: a referential guessing-game dialogue laboratory"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config json");
    uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override config seed");
    std::string out_val;
    auto* out_opt = app.add_option("--out", out_val, "override output directory");
    int workers_val = 1;
    auto* workers_opt = app.add_option("--workers", workers_val, "parallel game simulation");

    auto* gen = app.add_subcommand("gen-world", "generate scenes, gold dialogues, vocab, splits");
    bool force = false;
    gen->add_flag("--force", force, "overwrite an existing world");

    auto* train = app.add_subcommand("train", "train oracle/sl/cl/decoupled");
    std::string regime = "sl";
    train->add_option("--regime", regime, "oracle | sl | cl | decoupled")->required();
    std::string from_ckpt;
    train->add_option("--from-checkpoint", from_ckpt, "SL checkpoint to start CL from");
    std::string train_oracle_ckpt;
    train->add_option("--oracle-checkpoint", train_oracle_ckpt,
                      "oracle checkpoint (default <out>/oracle/oracle.ckpt)");

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on a split");
    std::vector<std::string> checkpoints;
    eval->add_option("--checkpoint", checkpoints, "agent checkpoint(s)")->required();
    std::string split = "test";
    eval->add_option("--split", split, "train | val | test");
    std::vector<int> budgets;
    eval->add_option("--budget", budgets, "question budget(s), e.g. 5 8");
    std::string decode;
    eval->add_option("--decode", decode, "greedy | sample");
    std::string eval_oracle;
    eval->add_option("--oracle", eval_oracle, "rule | neural");
    std::string eval_oracle_ckpt;
    eval->add_option("--oracle-checkpoint", eval_oracle_ckpt, "oracle checkpoint");
    std::string eval_tag;
    eval->add_option("--tag", eval_tag, "output subdirectory name");

    auto* analyze = app.add_subcommand("analyze", "linguistic analysis of game logs");
    std::vector<std::string> logs;
    analyze->add_option("--logs", logs, "game log file(s), concatenated in order")->required();
    std::string lexicon_file;
    analyze->add_option("--lexicon", lexicon_file, "keyword lexicon json");
    std::string reference_logs;
    analyze->add_option("--reference", reference_logs, "reference game log for KL");
    std::string reference_dist_file;
    analyze->add_option("--reference-dist", reference_dist_file,
                        "reference class-weight json for KL");
    std::string out_prefix;
    analyze->add_option("--report", out_prefix, "output path prefix");
    bool trace = false;
    analyze->add_flag("--trace", trace, "treat each log file as one epoch; emit a trace csv");

    auto* inspect = app.add_subcommand("inspect-checkpoint", "print header and tensor inventory");
    std::string inspect_path;
    inspect->add_option("--checkpoint", inspect_path, "checkpoint file")->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();
    CLI11_PARSE(app, argc, argv);
    if (*seed_opt) g.seed = seed_val;
    if (*out_opt) g.out_dir = out_val;
    if (*workers_opt) g.workers = workers_val;

    try {
        if (gen->parsed()) return cmd_gen_world(g, force);
        if (train->parsed()) return cmd_train(g, regime, from_ckpt, train_oracle_ckpt);
        if (eval->parsed())
            return cmd_eval(g, checkpoints, split, budgets, decode, eval_oracle,
                            eval_oracle_ckpt, eval_tag);
        if (analyze->parsed())
            return cmd_analyze(g, logs, lexicon_file, reference_logs, reference_dist_file,
                               out_prefix, trace);
        if (inspect->parsed()) return cmd_inspect(inspect_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 4;
    }
    return 0;
}
