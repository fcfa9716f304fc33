#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "mmloc/errors.hpp"
#include "mmloc/harness.hpp"

using namespace mmloc;
namespace fs = std::filesystem;

namespace {

// Small two-section box scene that runs the full pipeline in seconds.
ExperimentConfig small_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.scene.room_vertices = {{0, 0}, {10, 0}, {10, 8}, {0, 8}};
    cfg.scene.aps = {{1.0, 1.0}, {9.0, 7.0}, {5.0, 0.8}};
    cfg.scene.sections = {Section{0, {{0, 0}, {6, 8}}}, Section{1, {{4, 0}, {10, 8}}}};
    cfg.scene.waypoints = {{1, 6.5}, {1, 1.5}, {9, 1.5}, {9, 6.5}};
    cfg.noise_sigma_deg = 5.0;
    cfg.seed = 4242;
    cfg.n_train = 30;

    MlpConfig nn;
    nn.kappa = 0.5;
    nn.dropout_p = 0.05;
    nn.learning_rate = 0.005;
    nn.batch_fraction = 0.5;
    nn.epochs = 40;
    nn.seed = 0;
    cfg.nn = {nn, nn};
    cfg.single_nn = nn;

    cfg.track_speed = 1.0;
    cfg.track_dt = 1.0;
    cfg.localize.grid_pitch = 0.5;
    cfg.corruption.enabled = true;
    cfg.corruption.std_m = 0.2;
    cfg.output_dir = out_dir;
    return cfg;
}

std::string fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::map<std::string, std::string> read_dir(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        out[entry.path().filename().string()] = std::move(data);
    }
    return out;
}

const char* kJsonConfig = R"json({
  "scene": {
    "room_vertices": [[0,0],[10,0],[10,8],[0,8]],
    "aps": [[1,1],[9,7]],
    "sections": [
      {"id": 0, "min": [0,0], "max": [6,8]},
      {"id": 1, "min": [4,0], "max": [10,8]}
    ],
    "waypoints": [[1,6.5],[1,1.5],[9,1.5]]
  },
  "noise": {"sigma_deg": 4.0},
  "seed": 99,
  "training": {
    "n_per_section": 25,
    "nn": [
      {"kappa": 0.9, "dropout_p": 0.1, "learning_rate": 0.003, "batch_fraction": 0.5, "epochs": 10},
      {"kappa": 0.8, "dropout_p": 0.05, "learning_rate": 0.004, "batch_fraction": 0.5, "epochs": 10}
    ],
    "single_nn": {"kappa": 0.9, "epochs": 10}
  },
  "track": {"speed": 1.0, "dt": 1.0},
  "bootstrap": {"grid_pitch": 0.5, "corruption": {"enabled": false}},
  "kf": {"process_noise_q": 0.4, "obs_noise_mode": "fixed", "obs_noise_fixed": 0.2},
  "switching": {"eta": 2.0, "zeta": 1.0, "tie_tolerance": 0.3, "cooldown": 2},
  "baselines": {"single_nn": true, "bootstrap": true},
  "output_dir": "unused"
})json";

}  // namespace

TEST_CASE("error cdf summary") {
    const ErrorCdf cdf = error_cdf({0.5, 1.5});
    CHECK(cdf.frac_leq_1m == doctest::Approx(0.5));
    CHECK(cdf.mean == doctest::Approx(1.0));

    const ErrorCdf zeros = error_cdf({0.0, 0.0, 0.0});
    CHECK(zeros.frac_leq_1m == doctest::Approx(1.0));
    CHECK(zeros.mean == doctest::Approx(0.0));

    // sorted, bounded, non-decreasing
    const ErrorCdf c = error_cdf({2.0, 0.1, 1.2, 0.7});
    for (std::size_t i = 1; i < c.sorted_errors.size(); ++i)
        CHECK(c.sorted_errors[i] >= c.sorted_errors[i - 1]);
    CHECK(c.fraction_leq(-1.0) == 0.0);
    CHECK(c.fraction_leq(10.0) == 1.0);
    CHECK_THROWS_AS(error_cdf({}), InsufficientDataError);
}

TEST_CASE("config json parses into the experiment config") {
    const ExperimentConfig cfg = parse_experiment_config(kJsonConfig);
    CHECK(cfg.scene.sections.size() == 2);
    CHECK(cfg.noise_sigma_deg == doctest::Approx(4.0));
    CHECK(cfg.seed == 99);
    CHECK(cfg.n_train == 25);
    CHECK(cfg.nn[0].kappa == doctest::Approx(0.9));
    CHECK(cfg.nn[1].learning_rate == doctest::Approx(0.004));
    CHECK(cfg.kf.obs_noise_mode == ObsNoiseMode::Fixed);
    CHECK(cfg.kf.obs_noise_fixed == doctest::Approx(0.2));
    CHECK(cfg.switching.cooldown == 2);
    CHECK_FALSE(cfg.corruption.enabled);
}

TEST_CASE("config errors are reported as such") {
    CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("{}"), ConfigError);
    // section ids must be dense and ordered
    std::string bad = kJsonConfig;
    const auto pos = bad.find("\"id\": 1");
    bad.replace(pos, 7, "\"id\": 3");
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("scene fingerprint tracks the scene") {
    const ExperimentConfig cfg = small_config("unused");
    const Scene a = build_scene(cfg.scene);
    const Scene b = build_scene(cfg.scene);
    CHECK(a.fingerprint == b.fingerprint);
    CHECK(a.n_slots == cfg.scene.aps.size() * 5);

    SceneConfig moved = cfg.scene;
    moved.aps[0].x += 0.25;
    CHECK(build_scene(moved).fingerprint != a.fingerprint);
}

TEST_CASE("pipeline is deterministic and parallelism-invariant") {
    const std::string dir_a = fresh_dir("mmloc_pipe_a");
    const std::string dir_b = fresh_dir("mmloc_pipe_b");
    const std::string dir_c = fresh_dir("mmloc_pipe_c");

    ExperimentConfig cfg = small_config(dir_a);
    const EvaluationReport ra = run_pipeline(cfg, 1);
    cfg.output_dir = dir_b;
    run_pipeline(cfg, 1);
    cfg.output_dir = dir_c;
    run_pipeline(cfg, 3);

    const auto fa = read_dir(dir_a);
    const auto fb = read_dir(dir_b);
    const auto fc = read_dir(dir_c);
    REQUIRE(!fa.empty());
    CHECK(fa == fb);
    CHECK(fa == fc);

    // report invariants
    REQUIRE(ra.methods.size() == 4);
    const std::size_t n_track = ra.methods.front().errors.size();
    for (const MethodReport& m : ra.methods) {
        CHECK(m.errors.size() == n_track);
        for (double e : m.errors) CHECK(e >= 0.0);
    }

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}

TEST_CASE("artifacts round-trip through their files") {
    const std::string dir = fresh_dir("mmloc_roundtrip");
    const ExperimentConfig cfg = small_config(dir);
    const Scene scene = build_scene(cfg.scene);

    const GenerateOutput gen = stage_generate(cfg, scene);
    save_generate(cfg, scene, gen);
    const GenerateOutput gen2 = load_generate(cfg, scene);
    REQUIRE(gen2.sections.size() == gen.sections.size());
    for (std::size_t m = 0; m < gen.sections.size(); ++m) {
        const auto& a = gen.sections[m];
        const auto& b = gen2.sections[m];
        REQUIRE(a.locations.size() == b.locations.size());
        for (std::size_t i = 0; i < a.locations.size(); ++i) {
            CHECK(a.locations[i].x == b.locations[i].x);
            CHECK(a.locations[i].y == b.locations[i].y);
            REQUIRE(a.adoa[i].size() == b.adoa[i].size());
            for (std::size_t k = 0; k < a.adoa[i].size(); ++k) {
                CHECK(a.adoa[i].values[k] == b.adoa[i].values[k]);
                CHECK(a.adoa[i].mask[k] == b.adoa[i].mask[k]);
            }
        }
    }
    REQUIRE(gen2.track.trajectory.points.size() == gen.track.trajectory.points.size());
    for (std::size_t i = 0; i < gen.track.trajectory.points.size(); ++i) {
        CHECK(gen2.track.trajectory.points[i].position.x ==
              gen.track.trajectory.points[i].position.x);
    }

    const BootstrapOutput boot = stage_bootstrap(cfg, scene, gen, 2);
    save_bootstrap(cfg, boot);
    const BootstrapOutput boot2 = load_bootstrap(cfg, scene);
    REQUIRE(boot2.label_sets.size() == boot.label_sets.size());
    for (std::size_t m = 0; m < boot.label_sets.size(); ++m) {
        REQUIRE(boot2.label_sets[m].labels.size() == boot.label_sets[m].labels.size());
        for (std::size_t i = 0; i < boot.label_sets[m].labels.size(); ++i) {
            CHECK(boot2.label_sets[m].labels[i].position.x ==
                  boot.label_sets[m].labels[i].position.x);
            CHECK(boot2.label_sets[m].labels[i].point_index ==
                  boot.label_sets[m].labels[i].point_index);
        }
        CHECK((boot2.stats[m].mu.array() == boot.stats[m].mu.array()).all());
        CHECK((boot2.stats[m].sigma.array() == boot.stats[m].sigma.array()).all());
    }

    const TrainOutput trained = stage_train(cfg, scene, gen, boot, 2);
    save_train(cfg, trained);
    const TrainOutput trained2 = load_train(cfg, scene);
    REQUIRE(trained2.models.size() == trained.models.size());
    for (std::size_t m = 0; m < trained.models.size(); ++m) {
        for (int l = 0; l < 4; ++l) {
            CHECK((trained2.models[m].weights()[static_cast<std::size_t>(l)].array() ==
                   trained.models[m].weights()[static_cast<std::size_t>(l)].array())
                      .all());
        }
        CHECK(trained2.reports[m].final_mse == trained.reports[m].final_mse);
    }
    REQUIRE(trained2.single_model.has_value());

    const EvaluationReport report = stage_evaluate(cfg, scene, gen, boot, trained, 2);
    save_report(cfg, report);
    const EvaluationReport report2 = load_report(cfg);
    CHECK(report2.initial_model == report.initial_model);
    REQUIRE(report2.methods.size() == report.methods.size());
    for (std::size_t i = 0; i < report.methods.size(); ++i) {
        CHECK(report2.methods[i].name == report.methods[i].name);
        CHECK(report2.methods[i].mean_error == report.methods[i].mean_error);
        REQUIRE(report2.methods[i].errors.size() == report.methods[i].errors.size());
        for (std::size_t k = 0; k < report.methods[i].errors.size(); ++k)
            CHECK(report2.methods[i].errors[k] == report.methods[i].errors[k]);
    }
    CHECK(report2.kf_events.size() == report.kf_events.size());

    const auto rows = stage_compare(cfg);
    CHECK(rows.size() == 4);
    CHECK(rows[0].method == "bootstrap");
    CHECK(rows[1].method == "single_nn");
    CHECK(rows[2].method == "multi_nn_kf");
    CHECK(rows[3].method == "multi_nn_odd");

    fs::remove_all(dir);
}

TEST_CASE("a single-section bank matches the pooled single model") {
    const std::string dir = fresh_dir("mmloc_single_section");
    ExperimentConfig cfg = small_config(dir);
    cfg.scene.sections = {Section{0, {{0, 0}, {10, 8}}}};
    cfg.nn.resize(1);
    cfg.nn[0].seed = 777;       // same explicit seed so the pooled model
    cfg.single_nn = cfg.nn[0];  // trains identically on identical data
    cfg.scene.waypoints = {{1, 6.5}, {1, 1.5}, {9, 1.5}};

    const EvaluationReport report = run_pipeline(cfg, 2);
    CHECK(report.kf_events.empty());
    CHECK(report.odd_events.empty());

    const MethodReport* single = report.find("single_nn");
    const MethodReport* kf = report.find("multi_nn_kf");
    REQUIRE(single != nullptr);
    REQUIRE(kf != nullptr);
    REQUIRE(single->errors.size() == kf->errors.size());
    for (std::size_t i = 0; i < single->errors.size(); ++i)
        CHECK(single->errors[i] == kf->errors[i]);

    fs::remove_all(dir);
}

TEST_CASE("compare without artifacts is a stage dependency error") {
    const std::string dir = fresh_dir("mmloc_empty_out");
    ExperimentConfig cfg = small_config(dir);
    CHECK_THROWS_AS(stage_compare(cfg), StageDependencyError);
    CHECK_THROWS_AS(load_generate(cfg, build_scene(cfg.scene)), StageDependencyError);
    fs::remove_all(dir);
}

TEST_CASE("mismatched checkpoints are rejected") {
    const std::string dir = fresh_dir("mmloc_mismatch");
    ExperimentConfig cfg = small_config(dir);
    const Scene scene = build_scene(cfg.scene);
    const GenerateOutput gen = stage_generate(cfg, scene);
    const BootstrapOutput boot = stage_bootstrap(cfg, scene, gen, 2);
    const TrainOutput trained = stage_train(cfg, scene, gen, boot, 2);
    save_train(cfg, trained);

    SceneConfig moved = cfg.scene;
    moved.aps[0].x += 0.5;
    const Scene other = build_scene(moved);
    CHECK_THROWS_AS(load_train(cfg, other), ConfigError);
    fs::remove_all(dir);
}
