#pragma once

#include <optional>
#include <vector>

#include "mmloc/bootstrap.hpp"
#include "mmloc/measurements.hpp"
#include "mmloc/tinynn.hpp"
#include "mmloc/tracking.hpp"

namespace mmloc {

// M per-section models with the label statistics that trained them.
// Index m is the section identity throughout.
struct ModelBank {
    std::vector<MlpModel> models;
    std::vector<LabelStats> stats;
    std::vector<Section> sections;

    std::size_t size() const { return models.size(); }
    void validate() const;
};

struct SwitchConfig {
    double eta{2.0};            // NIS trigger threshold
    double zeta{1.0};           // ODD jump threshold, meters
    double tie_tolerance{0.5};  // near-tie slack on the Mahalanobis argmin
    int cooldown{3};            // steps with triggers suppressed after a model change
    double p_inflation{4.0};    // covariance inflation applied at a model change
    int initial_model{0};
};

enum class SwitchTrigger { KfBeta, OddJump };

struct SwitchEvent {
    int step{0};
    int from{0};
    int to{0};  // equals `from` when the decision re-confirms the current model
    SwitchTrigger trigger{SwitchTrigger::KfBeta};
    std::vector<double> metrics;  // per-model delta (KF) or rho (ODD)

    bool changed() const { return to != from; }
};

// Lowest index wins exact ties.
int argmin_metric(const std::vector<double>& metrics);

struct KfStepResult {
    Point2 estimate{};
    KalmanState state{};
    int active_model{0};
    InnovationRecord record{};
    std::optional<SwitchEvent> event;
};

// One tracked step: NN estimate, KF predict+update, and when the NIS
// exceeds eta the argmin-delta re-decision (re-updating from the same
// prediction with the winning model's estimate).
KfStepResult kf_switch_step(const ModelBank& bank, int active, const KalmanState& state,
                            const AdoaVector& adoa, const KfConfig& kf_cfg,
                            const SwitchConfig& cfg, int step, int cooldown_remaining);

struct OddStepResult {
    Point2 estimate{};
    int active_model{0};
    double jump{0.0};
    std::optional<SwitchEvent> event;
};

// One ODD step: when the estimate jumps more than zeta from the previous
// one, pick the model whose estimate is most in-distribution; near-ties go
// to the estimate closest to the previous one.
OddStepResult odd_switch_step(const ModelBank& bank, int active, const Point2& prev_estimate,
                              const AdoaVector& adoa, const SwitchConfig& cfg, int step,
                              int cooldown_remaining);

enum class Scheme { Kf, Odd };

struct RunResult {
    std::vector<Point2> estimates;
    std::vector<int> active_model;        // model used at each step
    std::vector<SwitchEvent> events;      // actual model changes only
    std::vector<InnovationRecord> kf_records;  // KF scheme only, steps 1..
    std::vector<KalmanState> kf_states;        // posterior per record
    std::vector<double> odd_jumps;             // ODD scheme only
};

RunResult run_track(const ModelBank& bank, const std::vector<AdoaVector>& track_adoa,
                    Scheme scheme, const KfConfig& kf_cfg, const SwitchConfig& cfg);

// Recomputes the estimate sequence from the initial model and the event list
// alone; bit-identical to the run that produced the events.
std::vector<Point2> replay_estimates(const ModelBank& bank,
                                     const std::vector<AdoaVector>& track_adoa, int initial_model,
                                     const std::vector<SwitchEvent>& events);

}  // namespace mmloc
