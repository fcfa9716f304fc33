#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmloc/bootstrap.hpp"
#include "mmloc/geometry.hpp"
#include "mmloc/measurements.hpp"
#include "mmloc/switching.hpp"
#include "mmloc/tinynn.hpp"
#include "mmloc/tracking.hpp"
#include "mmloc/trajectory.hpp"

namespace mmloc {

struct SceneConfig {
    std::vector<Point2> room_vertices;
    std::vector<Point2> aps;
    std::vector<Section> sections;
    std::vector<Point2> waypoints;
};

struct CorruptionConfig {
    bool enabled{true};
    double std_m{0.3};
    bool apply_to_baseline{true};
};

// How the KF observation noise V is chosen: from the trained models' final
// MSE (per-axis variance = scale * mse / 2) or as a fixed isotropic value.
enum class ObsNoiseMode { TrainingMse, Fixed };

struct KfSetup {
    double process_noise_q{0.5};
    ObsNoiseMode obs_noise_mode{ObsNoiseMode::TrainingMse};
    double obs_noise_scale{1.0};
    double obs_noise_fixed{0.25};  // m^2 per axis when mode == Fixed
};

struct ExperimentConfig {
    SceneConfig scene;
    double noise_sigma_deg{5.0};
    std::uint64_t seed{1};
    int n_train{800};
    std::vector<MlpConfig> nn;  // one per section; n_input filled from the scene
    MlpConfig single_nn;
    double track_speed{1.0};
    double track_dt{1.0};
    double speed_jitter_std{0.0};
    LocalizeOptions localize;
    CorruptionConfig corruption;
    KfSetup kf;
    SwitchConfig switching;
    bool baseline_single_nn{true};
    bool baseline_bootstrap{true};
    std::string output_dir{"out"};

    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

struct Scene {
    RoomPolygon room;
    std::vector<Point2> aps;
    std::vector<Section> sections;
    std::vector<Anchor> anchors;
    std::size_t n_slots{0};  // NN input width = anchor count
    std::string fingerprint;
};

Scene build_scene(const SceneConfig& cfg);

struct SectionMeasurements {
    int section_id{0};
    std::vector<Point2> locations;  // ground truth, simulation-only
    std::vector<AoaSet> true_aoas;
    std::vector<AoaSet> noisy_aoas;
    std::vector<AdoaVector> adoa;
};

struct TrackData {
    Trajectory trajectory;
    std::vector<AoaSet> true_aoas;
    std::vector<AoaSet> noisy_aoas;
    std::vector<AdoaVector> adoa;
};

struct GenerateOutput {
    std::vector<SectionMeasurements> sections;
    TrackData track;
};

struct BootstrapOutput {
    std::vector<LabelSet> label_sets;  // positions already include corruption
    std::vector<LabelStats> stats;
};

struct TrainOutput {
    std::vector<MlpModel> models;
    std::vector<TrainReport> reports;
    std::optional<MlpModel> single_model;
    TrainReport single_report;
};

struct MethodReport {
    std::string name;
    std::vector<double> errors;  // per track location, meters
    double mean_error{0.0};
    double frac_leq_1m{0.0};
};

struct EvaluationReport {
    std::vector<MethodReport> methods;
    std::vector<SwitchEvent> kf_events;
    std::vector<SwitchEvent> odd_events;
    int initial_model{0};
    Eigen::Matrix2d obs_noise_v_used{Eigen::Matrix2d::Identity()};

    // In-memory extras, not part of the persisted report.
    RunResult kf_run;
    RunResult odd_run;

    const MethodReport* find(const std::string& name) const;
};

struct ErrorCdf {
    std::vector<double> sorted_errors;
    double mean{0.0};
    double frac_leq_1m{0.0};

    double fraction_leq(double x) const;
};

ErrorCdf error_cdf(const std::vector<double>& errors);

GenerateOutput stage_generate(const ExperimentConfig& cfg, const Scene& scene);
BootstrapOutput stage_bootstrap(const ExperimentConfig& cfg, const Scene& scene,
                                const GenerateOutput& gen, int jobs = 1);
TrainOutput stage_train(const ExperimentConfig& cfg, const Scene& scene,
                        const GenerateOutput& gen, const BootstrapOutput& boot, int jobs = 1);
EvaluationReport stage_evaluate(const ExperimentConfig& cfg, const Scene& scene,
                                const GenerateOutput& gen, const BootstrapOutput& boot,
                                const TrainOutput& train, int jobs = 1);

void save_generate(const ExperimentConfig& cfg, const Scene& scene, const GenerateOutput& gen);
GenerateOutput load_generate(const ExperimentConfig& cfg, const Scene& scene);
void save_bootstrap(const ExperimentConfig& cfg, const BootstrapOutput& boot);
BootstrapOutput load_bootstrap(const ExperimentConfig& cfg, const Scene& scene);
void save_train(const ExperimentConfig& cfg, const TrainOutput& train);
TrainOutput load_train(const ExperimentConfig& cfg, const Scene& scene);
void save_report(const ExperimentConfig& cfg, const EvaluationReport& report);
EvaluationReport load_report(const ExperimentConfig& cfg);

struct CompareRow {
    std::string method;
    double mean_error{0.0};
    double frac_leq_1m{0.0};
};

// Builds the 4-method comparison from a persisted report, writing
// compare.csv next to it.
std::vector<CompareRow> stage_compare(const ExperimentConfig& cfg);

// All stages in order, persisting every artifact under cfg.output_dir.
EvaluationReport run_pipeline(const ExperimentConfig& cfg, int jobs = 1);

// Deterministic sub-seeds for the pipeline's independent noise streams.
enum class SeedStream : std::uint64_t {
    TrainingLocations = 1,
    TrainingNoise = 2,
    TrackNoise = 3,
    LabelCorruption = 4,
    BaselineCorruption = 5,
    NnInit = 6,
};
std::uint64_t stream_seed(std::uint64_t base, SeedStream stream, std::uint64_t index = 0);

}  // namespace mmloc
