#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "mmloc/errors.hpp"
#include "mmloc/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct CommonOpts {
    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override{0};
    bool has_seed{false};
    int jobs{1};
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON")->required();
    cmd->add_option("--out", opts.out_override, "override the config's output directory");
    cmd->add_option("--seed", opts.seed_override, "override the config's base seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--jobs", opts.jobs, "worker threads for parallel stages")
        ->check(CLI::PositiveNumber);
}

mmloc::ExperimentConfig load_cfg(CLI::App* cmd, const CommonOpts& opts) {
    mmloc::ExperimentConfig cfg = mmloc::load_experiment_config(opts.config_path);
    if (!opts.out_override.empty()) cfg.output_dir = opts.out_override;
    if (cmd->count("--seed") > 0) cfg.seed = opts.seed_override;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi tiny-NN indoor mmWave localization toolkit"};
    app.require_subcommand(1);

    CommonOpts opts;
    CLI::App* generate = app.add_subcommand("generate", "scene, measurements, and track");
    CLI::App* bootstrap = app.add_subcommand("bootstrap", "self-supervised labels and stats");
    CLI::App* train_cmd = app.add_subcommand("train", "per-section tiny NNs and the pooled baseline");
    CLI::App* evaluate = app.add_subcommand("evaluate", "run both switching schemes and the baselines");
    CLI::App* compare = app.add_subcommand("compare", "method comparison table from a saved report");
    CLI::App* pipeline = app.add_subcommand("pipeline", "all stages end to end");
    for (CLI::App* cmd : {generate, bootstrap, train_cmd, evaluate, compare, pipeline})
        add_common(cmd, opts);

    CLI11_PARSE(app, argc, argv);
    CLI::App* cmd = app.get_subcommands().front();

    try {
        const mmloc::ExperimentConfig cfg = load_cfg(cmd, opts);
        const std::string name = cmd->get_name();
        try {
            if (name == "generate") {
                const mmloc::Scene scene = mmloc::build_scene(cfg.scene);
                const mmloc::GenerateOutput gen = mmloc::stage_generate(cfg, scene);
                mmloc::save_generate(cfg, scene, gen);
                std::printf("generate: %zu sections, %zu-point track -> %s\n",
                            scene.sections.size(), gen.track.trajectory.points.size(),
                            cfg.output_dir.c_str());
            } else if (name == "bootstrap") {
                const mmloc::Scene scene = mmloc::build_scene(cfg.scene);
                const mmloc::GenerateOutput gen = mmloc::load_generate(cfg, scene);
                mmloc::save_bootstrap(cfg, mmloc::stage_bootstrap(cfg, scene, gen, opts.jobs));
                std::printf("bootstrap: labels and stats written to %s\n", cfg.output_dir.c_str());
            } else if (name == "train") {
                const mmloc::Scene scene = mmloc::build_scene(cfg.scene);
                const mmloc::GenerateOutput gen = mmloc::load_generate(cfg, scene);
                const mmloc::BootstrapOutput boot = mmloc::load_bootstrap(cfg, scene);
                mmloc::save_train(cfg, mmloc::stage_train(cfg, scene, gen, boot, opts.jobs));
                std::printf("train: checkpoints written to %s\n", cfg.output_dir.c_str());
            } else if (name == "evaluate") {
                const mmloc::Scene scene = mmloc::build_scene(cfg.scene);
                const mmloc::GenerateOutput gen = mmloc::load_generate(cfg, scene);
                const mmloc::BootstrapOutput boot = mmloc::load_bootstrap(cfg, scene);
                const mmloc::TrainOutput trained = mmloc::load_train(cfg, scene);
                const mmloc::EvaluationReport report =
                    mmloc::stage_evaluate(cfg, scene, gen, boot, trained, opts.jobs);
                mmloc::save_report(cfg, report);
                for (const mmloc::MethodReport& m : report.methods)
                    std::printf("%-14s mean %.3f m, <=1 m %.1f%%\n", m.name.c_str(), m.mean_error,
                                100.0 * m.frac_leq_1m);
            } else if (name == "compare") {
                for (const mmloc::CompareRow& r : mmloc::stage_compare(cfg))
                    std::printf("%-14s mean %.3f m, <=1 m %.1f%%\n", r.method.c_str(), r.mean_error,
                                100.0 * r.frac_leq_1m);
            } else if (name == "pipeline") {
                const mmloc::EvaluationReport report = mmloc::run_pipeline(cfg, opts.jobs);
                for (const mmloc::MethodReport& m : report.methods)
                    std::printf("%-14s mean %.3f m, <=1 m %.1f%%\n", m.name.c_str(), m.mean_error,
                                100.0 * m.frac_leq_1m);
            }
        } catch (const mmloc::ConfigError&) {
            throw;
        } catch (const mmloc::StageFailureError& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kExitStage;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error in '%s': %s\n", name.c_str(), e.what());
            return kExitStage;
        }
    } catch (const mmloc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitStage;
    }
    return kExitOk;
}
