#include "mmloc/switching.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "mmloc/errors.hpp"

namespace mmloc {

namespace {

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<Point2> all_model_estimates(const ModelBank& bank, const AdoaVector& adoa) {
    const Eigen::VectorXd input = to_eigen(encode_input(adoa));
    std::vector<Point2> out;
    out.reserve(bank.size());
    for (const MlpModel& m : bank.models) out.push_back(forward(m, input));
    return out;
}

}  // namespace

void ModelBank::validate() const {
    if (models.empty()) throw ConfigError("model bank is empty");
    if (models.size() != stats.size() || models.size() != sections.size())
        throw ConfigError("model bank models/stats/sections sizes disagree");
}

int argmin_metric(const std::vector<double>& metrics) {
    if (metrics.empty()) throw ConfigError("argmin over an empty metric table");
    int best = 0;
    for (int i = 1; i < static_cast<int>(metrics.size()); ++i) {
        if (metrics[static_cast<std::size_t>(i)] < metrics[static_cast<std::size_t>(best)]) best = i;
    }
    return best;
}

KfStepResult kf_switch_step(const ModelBank& bank, int active, const KalmanState& state,
                            const AdoaVector& adoa, const KfConfig& kf_cfg,
                            const SwitchConfig& cfg, int step, int cooldown_remaining) {
    bank.validate();
    const Eigen::VectorXd input = to_eigen(encode_input(adoa));
    const Point2 x_active = forward(bank.models[static_cast<std::size_t>(active)], input);

    const KalmanState pred = predict(state, kf_cfg);
    auto [updated, rec] = update(pred, x_active, kf_cfg);

    KfStepResult result;
    result.estimate = x_active;
    result.state = updated;
    result.active_model = active;
    result.record = rec;

    if (rec.beta > cfg.eta && cooldown_remaining <= 0) {
        const Eigen::Vector2d pred_pos = kf_observation() * pred.s;
        std::vector<Point2> est = all_model_estimates(bank, adoa);
        std::vector<double> deltas(bank.size());
        for (std::size_t m = 0; m < bank.size(); ++m) {
            deltas[m] = std::hypot(pred_pos(0) - est[m].x, pred_pos(1) - est[m].y);
        }
        const int winner = argmin_metric(deltas);

        // Re-update from the same prediction with the winner's estimate.
        auto [re_updated, re_rec] = update(pred, est[static_cast<std::size_t>(winner)], kf_cfg);
        result.estimate = est[static_cast<std::size_t>(winner)];
        result.state = re_updated;
        result.record = re_rec;
        result.active_model = winner;
        if (winner != active) result.state.P *= cfg.p_inflation;

        SwitchEvent ev;
        ev.step = step;
        ev.from = active;
        ev.to = winner;
        ev.trigger = SwitchTrigger::KfBeta;
        ev.metrics = std::move(deltas);
        result.event = std::move(ev);
    }
    return result;
}

OddStepResult odd_switch_step(const ModelBank& bank, int active, const Point2& prev_estimate,
                              const AdoaVector& adoa, const SwitchConfig& cfg, int step,
                              int cooldown_remaining) {
    bank.validate();
    const Eigen::VectorXd input = to_eigen(encode_input(adoa));
    const Point2 x_active = forward(bank.models[static_cast<std::size_t>(active)], input);

    OddStepResult result;
    result.estimate = x_active;
    result.active_model = active;
    result.jump = distance(x_active, prev_estimate);

    if (result.jump > cfg.zeta && cooldown_remaining <= 0) {
        std::vector<Point2> est = all_model_estimates(bank, adoa);
        std::vector<double> rhos(bank.size());
        for (std::size_t m = 0; m < bank.size(); ++m) {
            rhos[m] = mahalanobis(est[m], bank.stats[m]);
        }
        int winner = argmin_metric(rhos);

        // Near-ties go to the estimate nearest the previous one.
        double best_dist = std::numeric_limits<double>::infinity();
        int tie_winner = winner;
        bool tie = false;
        for (std::size_t m = 0; m < bank.size(); ++m) {
            if (rhos[m] - rhos[static_cast<std::size_t>(winner)] < cfg.tie_tolerance) {
                if (static_cast<int>(m) != winner) tie = true;
                const double d = distance(est[m], prev_estimate);
                if (d < best_dist) {
                    best_dist = d;
                    tie_winner = static_cast<int>(m);
                }
            }
        }
        if (tie) winner = tie_winner;

        result.estimate = est[static_cast<std::size_t>(winner)];
        result.active_model = winner;

        SwitchEvent ev;
        ev.step = step;
        ev.from = active;
        ev.to = winner;
        ev.trigger = SwitchTrigger::OddJump;
        ev.metrics = std::move(rhos);
        result.event = std::move(ev);
    }
    return result;
}

RunResult run_track(const ModelBank& bank, const std::vector<AdoaVector>& track_adoa,
                    Scheme scheme, const KfConfig& kf_cfg, const SwitchConfig& cfg) {
    bank.validate();
    if (track_adoa.empty()) throw InsufficientDataError("run_track needs a non-empty sequence");
    if (cfg.initial_model < 0 || cfg.initial_model >= static_cast<int>(bank.size()))
        throw ConfigError("initial model index out of range");

    RunResult run;
    run.estimates.reserve(track_adoa.size());
    run.active_model.reserve(track_adoa.size());

    int active = cfg.initial_model;
    int cooldown = 0;

    // First step always uses the initial model; the KF has no prediction yet.
    const Eigen::VectorXd first_input = to_eigen(encode_input(track_adoa.front()));
    const Point2 first = forward(bank.models[static_cast<std::size_t>(active)], first_input);
    run.estimates.push_back(first);
    run.active_model.push_back(active);

    KalmanState state = kf_init(first);
    Point2 prev = first;

    for (std::size_t k = 1; k < track_adoa.size(); ++k) {
        const int step = static_cast<int>(k);
        bool changed = false;
        if (scheme == Scheme::Kf) {
            KfStepResult r =
                kf_switch_step(bank, active, state, track_adoa[k], kf_cfg, cfg, step, cooldown);
            state = r.state;
            run.kf_records.push_back(r.record);
            run.kf_states.push_back(r.state);
            if (r.event && r.event->changed()) {
                changed = true;
                run.events.push_back(*r.event);
            }
            active = r.active_model;
            run.estimates.push_back(r.estimate);
            prev = r.estimate;
        } else {
            OddStepResult r = odd_switch_step(bank, active, prev, track_adoa[k], cfg, step, cooldown);
            run.odd_jumps.push_back(r.jump);
            if (r.event && r.event->changed()) {
                changed = true;
                run.events.push_back(*r.event);
            }
            active = r.active_model;
            run.estimates.push_back(r.estimate);
            prev = r.estimate;
        }
        run.active_model.push_back(active);
        if (changed) {
            cooldown = cfg.cooldown;
        } else if (cooldown > 0) {
            --cooldown;
        }
    }
    return run;
}

std::vector<Point2> replay_estimates(const ModelBank& bank,
                                     const std::vector<AdoaVector>& track_adoa, int initial_model,
                                     const std::vector<SwitchEvent>& events) {
    bank.validate();
    std::vector<Point2> out;
    out.reserve(track_adoa.size());
    int active = initial_model;
    std::size_t next_event = 0;
    for (std::size_t k = 0; k < track_adoa.size(); ++k) {
        if (next_event < events.size() &&
            events[next_event].step == static_cast<int>(k)) {
            active = events[next_event].to;
            ++next_event;
        }
        const Eigen::VectorXd input = to_eigen(encode_input(track_adoa[k]));
        out.push_back(forward(bank.models[static_cast<std::size_t>(active)], input));
    }
    return out;
}

}  // namespace mmloc
