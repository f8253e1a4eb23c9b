// Minimal end-to-end demo: build a tiny world, train the oracle briefly,
// imitate the gold script for a few epochs, then play and print one game.

#include <cstdio>

#include "guesslab/lab.hpp"

using namespace guesslab;

int main() {
    auto cfg = config::ExperimentConfig::desk();
    cfg.seed = 7;
    cfg.world.n_scenes = 300;
    cfg.world.games_per_scene = 1;
    cfg.world.feature_dim = 16;
    cfg.agent_dims.feature = 16;
    cfg.agent_dims.token_embed = 12;
    cfg.agent_dims.lstm_e = 24;
    cfg.agent_dims.state = 16;
    cfg.agent_dims.category_embed = 12;
    cfg.agent_dims.guesser_hidden = 16;
    cfg.oracle.epochs = 10;
    cfg.sl = config::ScheduleConfig{1, 8, 32, 2e-3, 200, 60};

    std::printf("generating %d scenes...\n", cfg.world.n_scenes);
    auto art = lab::generate_world(cfg);
    auto scenes = art.scene_index();

    std::printf("training the answerer...\n");
    auto orc = lab::train_oracle_on_world(cfg, art);
    arena::OracleRef oracle_ref;
    oracle_ref.kind = arena::OracleKind::Neural;
    oracle_ref.model = &orc.model;

    std::printf("supervised imitation for %d epochs...\n", cfg.sl.epochs);
    agent::QuestionerModel model(agent::Mode::Joint, lab::agent_dims(cfg, art.vocab), cfg.seed);
    auto bundle = lab::make_trainer_bundle(cfg, art, scenes, oracle_ref, cfg.sl);
    bundle.spec.guesser_weight = 10.0;
    auto result = trainer::run_sl(model, bundle.data, bundle.spec);
    std::printf("best validation success %.3f\n\n", result.best_val);

    const auto& game = bundle.data.val_games.front();
    arena::GameConfig gc;
    gc.question_budget = 5;
    gc.oracle = arena::OracleKind::Neural;
    Rng rng(1);
    auto res = arena::play_game(model, oracle_ref, *game.scene, game.target_id, gc,
                                cfg.taxonomy, art.vocab, rng);

    const auto& target = game.scene->object_by_id(game.target_id);
    std::printf("scene %d, target: %s %s\n", game.scene->id, target.color.c_str(),
                target.category.c_str());
    for (const auto& obj : game.scene->objects)
        std::printf("  candidate %d: %s %s\n", obj.id, obj.color.c_str(),
                    obj.category.c_str());
    std::printf("\n");
    for (const auto& turn : res.dialogue.turns)
        std::printf("  Q: %-32s A: %s\n", turn.question.c_str(),
                    lingo::answer_name(turn.answer));
    std::printf("\nguess: object %d -> %s\n", *res.dialogue.guess_id,
                res.success ? "success" : "failure");
    return 0;
}
