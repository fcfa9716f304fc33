#include "mmloc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mmloc/errors.hpp"

namespace mmloc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string path_join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StageDependencyError("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StageDependencyError("missing artifact: " + path);
    return in;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

double to_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + static_cast<std::size_t>(threads) - 1) /
                              static_cast<std::size_t>(threads);
    for (int t = 0; t < threads; ++t) {
        const std::size_t begin = static_cast<std::size_t>(t) * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&fn, begin, end]() {
            for (std::size_t i = begin; i < end; ++i) fn(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

Point2 parse_point(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("point must be a [x, y] array");
    return Point2{j.at(0).get<double>(), j.at(1).get<double>()};
}

std::vector<Point2> parse_points(const json& j) {
    std::vector<Point2> out;
    for (const auto& p : j) out.push_back(parse_point(p));
    return out;
}

MlpConfig parse_mlp_config(const json& j, const MlpConfig& defaults) {
    MlpConfig c = defaults;
    if (j.contains("kappa")) c.kappa = j.at("kappa").get<double>();
    if (j.contains("dropout_p")) c.dropout_p = j.at("dropout_p").get<double>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_fraction")) c.batch_fraction = j.at("batch_fraction").get<double>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("early_stop_delta")) c.early_stop_delta = j.at("early_stop_delta").get<double>();
    if (j.contains("early_stop_window")) c.early_stop_window = j.at("early_stop_window").get<int>();
    return c;
}

const char* trigger_name(SwitchTrigger t) {
    return t == SwitchTrigger::KfBeta ? "kf-beta" : "odd-jump";
}

SwitchTrigger trigger_from_name(const std::string& s) {
    if (s == "kf-beta") return SwitchTrigger::KfBeta;
    if (s == "odd-jump") return SwitchTrigger::OddJump;
    throw ConfigError("unknown switch trigger '" + s + "'");
}

void write_adoa_csv(const std::string& path, const std::vector<AdoaVector>& rows,
                    std::size_t n_slots) {
    auto out = open_out(path);
    out << "loc_index,ref_anchor";
    for (std::size_t i = 0; i < n_slots; ++i) out << ",v" << i;
    for (std::size_t i = 0; i < n_slots; ++i) out << ",m" << i;
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << r << ',' << rows[r].reference_anchor;
        for (std::size_t i = 0; i < n_slots; ++i) out << ',' << fmt(rows[r].values[i]);
        for (std::size_t i = 0; i < n_slots; ++i) out << ',' << int(rows[r].mask[i]);
        out << '\n';
    }
}

std::vector<AdoaVector> read_adoa_csv(const std::string& path, std::size_t n_slots) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<AdoaVector> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 2 + 2 * n_slots)
            throw StageDependencyError("malformed ADoA row in " + path);
        AdoaVector v;
        v.reference_anchor = std::stoi(f[1]);
        v.values.resize(n_slots);
        v.mask.resize(n_slots);
        for (std::size_t i = 0; i < n_slots; ++i) {
            v.values[i] = to_double(f[2 + i]);
            v.mask[i] = static_cast<std::uint8_t>(std::stoi(f[2 + n_slots + i]));
        }
        validate_adoa(v);
        rows.push_back(std::move(v));
    }
    return rows;
}

void write_measurements_csv(const std::string& path, const std::vector<AoaSet>& true_aoas,
                            const std::vector<AoaSet>& noisy_aoas) {
    auto out = open_out(path);
    out << "loc_index,anchor_id,true_aoa,noisy_aoa\n";
    for (std::size_t r = 0; r < true_aoas.size(); ++r) {
        const AoaSet& t = true_aoas[r];
        const AoaSet& n = noisy_aoas[r];
        for (std::size_t i = 0; i < t.entries.size(); ++i) {
            out << r << ',' << t.entries[i].anchor_id << ',' << fmt(t.entries[i].angle) << ','
                << fmt(n.entries[i].angle) << '\n';
        }
    }
}

void read_measurements_csv(const std::string& path, std::vector<AoaSet>& true_aoas,
                           std::vector<AoaSet>& noisy_aoas) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 4) throw StageDependencyError("malformed measurement row in " + path);
        const std::size_t loc = static_cast<std::size_t>(std::stoul(f[0]));
        if (loc >= true_aoas.size()) {
            true_aoas.resize(loc + 1);
            noisy_aoas.resize(loc + 1);
        }
        const int id = std::stoi(f[1]);
        true_aoas[loc].entries.push_back(AoaEntry{id, to_double(f[2])});
        noisy_aoas[loc].entries.push_back(AoaEntry{id, to_double(f[3])});
    }
}

void write_locations_csv(const std::string& path, const std::vector<Point2>& pts) {
    auto out = open_out(path);
    out << "index,x,y\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        out << i << ',' << fmt(pts[i].x) << ',' << fmt(pts[i].y) << '\n';
}

std::vector<Point2> read_locations_csv(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);
    std::vector<Point2> pts;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3) throw StageDependencyError("malformed location row in " + path);
        pts.push_back(Point2{to_double(f[1]), to_double(f[2])});
    }
    return pts;
}

json events_to_json(const std::vector<SwitchEvent>& events) {
    json arr = json::array();
    for (const SwitchEvent& e : events) {
        json je;
        je["step"] = e.step;
        je["from"] = e.from;
        je["to"] = e.to;
        je["trigger"] = trigger_name(e.trigger);
        je["metrics"] = e.metrics;
        arr.push_back(std::move(je));
    }
    return arr;
}

std::vector<SwitchEvent> events_from_json(const json& arr) {
    std::vector<SwitchEvent> out;
    for (const auto& je : arr) {
        SwitchEvent e;
        e.step = je.at("step").get<int>();
        e.from = je.at("from").get<int>();
        e.to = je.at("to").get<int>();
        e.trigger = trigger_from_name(je.at("trigger").get<std::string>());
        e.metrics = je.at("metrics").get<std::vector<double>>();
        out.push_back(std::move(e));
    }
    return out;
}

void write_events_csv(const std::string& path, const std::vector<SwitchEvent>& events,
                      std::size_t n_models) {
    auto out = open_out(path);
    out << "step,trigger,from,to,changed";
    for (std::size_t m = 0; m < n_models; ++m) out << ",metric_" << m;
    out << '\n';
    for (const SwitchEvent& e : events) {
        out << e.step << ',' << trigger_name(e.trigger) << ',' << e.from << ',' << e.to << ','
            << int(e.changed());
        for (double v : e.metrics) out << ',' << fmt(v);
        out << '\n';
    }
}

void write_estimates_csv(const std::string& path, const RunResult& run) {
    auto out = open_out(path);
    out << "step,x_hat,y_hat,active_model\n";
    for (std::size_t k = 0; k < run.estimates.size(); ++k) {
        out << k << ',' << fmt(run.estimates[k].x) << ',' << fmt(run.estimates[k].y) << ','
            << run.active_model[k] << '\n';
    }
}

void write_kf_trace_csv(const std::string& path, const RunResult& run) {
    auto out = open_out(path);
    out << "step,s_x,s_vx,s_y,s_vy,pred_x,pred_y,meas_x,meas_y,beta,delta\n";
    for (std::size_t i = 0; i < run.kf_records.size(); ++i) {
        const std::size_t k = i + 1;  // records start at step 1
        const InnovationRecord& r = run.kf_records[i];
        const KalmanState& st = run.kf_states[i];
        const Point2& meas = run.estimates[k];
        const double pred_x = meas.x - r.y_hat(0);
        const double pred_y = meas.y - r.y_hat(1);
        out << k << ',' << fmt(st.s(0)) << ',' << fmt(st.s(1)) << ',' << fmt(st.s(2)) << ','
            << fmt(st.s(3)) << ',' << fmt(pred_x) << ',' << fmt(pred_y) << ',' << fmt(meas.x)
            << ',' << fmt(meas.y) << ',' << fmt(r.beta) << ',' << fmt(r.delta) << '\n';
    }
}

std::vector<double> errors_against_truth(const std::vector<Point2>& estimates,
                                         const Trajectory& truth) {
    if (estimates.size() != truth.points.size())
        throw StageDependencyError("estimate count does not match the track");
    std::vector<double> errors(estimates.size());
    for (std::size_t i = 0; i < estimates.size(); ++i)
        errors[i] = distance(estimates[i], truth.points[i].position);
    return errors;
}

MethodReport make_method_report(std::string name, std::vector<double> errors) {
    MethodReport r;
    r.name = std::move(name);
    const ErrorCdf cdf = error_cdf(errors);
    r.errors = std::move(errors);
    r.mean_error = cdf.mean;
    r.frac_leq_1m = cdf.frac_leq_1m;
    return r;
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t base, SeedStream stream, std::uint64_t index) {
    return mix_seed(base, static_cast<std::uint64_t>(stream) * 1000003ULL + index);
}

void ExperimentConfig::validate() const {
    if (scene.room_vertices.size() < 3) throw ConfigError("scene needs >= 3 room vertices");
    if (scene.aps.empty()) throw ConfigError("scene needs at least one AP");
    if (scene.sections.empty()) throw ConfigError("scene needs at least one section");
    for (std::size_t i = 0; i < scene.sections.size(); ++i) {
        if (scene.sections[i].id != static_cast<int>(i))
            throw ConfigError("section ids must be dense 0..M-1 in order");
        const Rect& b = scene.sections[i].bounds;
        if (!(b.max.x > b.min.x && b.max.y > b.min.y))
            throw ConfigError("section " + std::to_string(i) + " has empty bounds");
    }
    if (scene.waypoints.empty()) throw ConfigError("scene needs track waypoints");
    if (nn.size() != scene.sections.size())
        throw ConfigError("need one NN config per section (got " + std::to_string(nn.size()) +
                          " for " + std::to_string(scene.sections.size()) + " sections)");
    if (n_train < 1) throw ConfigError("n_train must be >= 1");
    if (noise_sigma_deg < 0.0) throw ConfigError("noise sigma must be >= 0");
    if (track_speed <= 0.0 || track_dt <= 0.0) throw ConfigError("track speed and dt must be positive");
    if (switching.eta <= 0.0 || switching.zeta <= 0.0)
        throw ConfigError("switching thresholds must be positive");
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    try {
        ExperimentConfig cfg;
        const json& scene = j.at("scene");
        cfg.scene.room_vertices = parse_points(scene.at("room_vertices"));
        cfg.scene.aps = parse_points(scene.at("aps"));
        for (const auto& js : scene.at("sections")) {
            Section s;
            s.id = js.at("id").get<int>();
            s.bounds.min = parse_point(js.at("min"));
            s.bounds.max = parse_point(js.at("max"));
            cfg.scene.sections.push_back(s);
        }
        cfg.scene.waypoints = parse_points(scene.at("waypoints"));

        if (j.contains("noise")) cfg.noise_sigma_deg = j.at("noise").at("sigma_deg").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();

        const json& training = j.at("training");
        cfg.n_train = training.at("n_per_section").get<int>();
        MlpConfig defaults;
        defaults.seed = 0;  // 0 = derive from the base seed
        if (training.contains("nn")) {
            for (const auto& jn : training.at("nn"))
                cfg.nn.push_back(parse_mlp_config(jn, defaults));
        }
        while (cfg.nn.size() < cfg.scene.sections.size()) cfg.nn.push_back(defaults);
        cfg.single_nn = training.contains("single_nn")
                            ? parse_mlp_config(training.at("single_nn"), defaults)
                            : defaults;

        if (j.contains("track")) {
            const json& t = j.at("track");
            if (t.contains("speed")) cfg.track_speed = t.at("speed").get<double>();
            if (t.contains("dt")) cfg.track_dt = t.at("dt").get<double>();
            if (t.contains("speed_jitter_std"))
                cfg.speed_jitter_std = t.at("speed_jitter_std").get<double>();
        }
        if (j.contains("bootstrap")) {
            const json& b = j.at("bootstrap");
            if (b.contains("grid_pitch")) cfg.localize.grid_pitch = b.at("grid_pitch").get<double>();
            if (b.contains("refine_tol")) cfg.localize.refine_tol = b.at("refine_tol").get<double>();
            if (b.contains("corruption")) {
                const json& c = b.at("corruption");
                if (c.contains("enabled")) cfg.corruption.enabled = c.at("enabled").get<bool>();
                if (c.contains("std")) cfg.corruption.std_m = c.at("std").get<double>();
                if (c.contains("apply_to_baseline"))
                    cfg.corruption.apply_to_baseline = c.at("apply_to_baseline").get<bool>();
            }
        }
        if (j.contains("kf")) {
            const json& k = j.at("kf");
            if (k.contains("process_noise_q"))
                cfg.kf.process_noise_q = k.at("process_noise_q").get<double>();
            if (k.contains("obs_noise_mode")) {
                const std::string mode = k.at("obs_noise_mode").get<std::string>();
                if (mode == "training-mse") cfg.kf.obs_noise_mode = ObsNoiseMode::TrainingMse;
                else if (mode == "fixed") cfg.kf.obs_noise_mode = ObsNoiseMode::Fixed;
                else throw ConfigError("obs_noise_mode must be 'training-mse' or 'fixed'");
            }
            if (k.contains("obs_noise_scale"))
                cfg.kf.obs_noise_scale = k.at("obs_noise_scale").get<double>();
            if (k.contains("obs_noise_fixed"))
                cfg.kf.obs_noise_fixed = k.at("obs_noise_fixed").get<double>();
        }
        if (j.contains("switching")) {
            const json& s = j.at("switching");
            if (s.contains("eta")) cfg.switching.eta = s.at("eta").get<double>();
            if (s.contains("zeta")) cfg.switching.zeta = s.at("zeta").get<double>();
            if (s.contains("tie_tolerance"))
                cfg.switching.tie_tolerance = s.at("tie_tolerance").get<double>();
            if (s.contains("cooldown")) cfg.switching.cooldown = s.at("cooldown").get<int>();
            if (s.contains("p_inflation"))
                cfg.switching.p_inflation = s.at("p_inflation").get<double>();
        }
        if (j.contains("baselines")) {
            const json& b = j.at("baselines");
            if (b.contains("single_nn")) cfg.baseline_single_nn = b.at("single_nn").get<bool>();
            if (b.contains("bootstrap")) cfg.baseline_bootstrap = b.at("bootstrap").get<bool>();
        }
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

Scene build_scene(const SceneConfig& cfg) {
    Scene scene{RoomPolygon(cfg.room_vertices), cfg.aps, cfg.sections, {}, 0, {}};
    scene.anchors = generate_virtual_anchors(scene.room, scene.aps);
    scene.n_slots = scene.anchors.size();

    std::string canon;
    canon += "slots=" + std::to_string(scene.n_slots) + ";";
    for (const Anchor& a : scene.anchors) {
        canon += std::to_string(a.id) + (a.kind == AnchorKind::Physical ? "P" : "V") +
                 std::to_string(a.parent_ap) + "w" +
                 (a.mirror_wall ? std::to_string(*a.mirror_wall) : std::string("-")) + "@" +
                 fmt(a.position.x) + "," + fmt(a.position.y) + ";";
    }
    for (const Section& s : scene.sections) {
        canon += "S" + std::to_string(s.id) + "[" + fmt(s.bounds.min.x) + "," +
                 fmt(s.bounds.min.y) + "," + fmt(s.bounds.max.x) + "," + fmt(s.bounds.max.y) + "];";
    }
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canon)));
    scene.fingerprint = hex;
    return scene;
}

ErrorCdf error_cdf(const std::vector<double>& errors) {
    if (errors.empty()) throw InsufficientDataError("error CDF needs at least one sample");
    ErrorCdf cdf;
    cdf.sorted_errors = errors;
    std::sort(cdf.sorted_errors.begin(), cdf.sorted_errors.end());
    double sum = 0.0;
    for (double e : cdf.sorted_errors) sum += e;
    cdf.mean = sum / static_cast<double>(cdf.sorted_errors.size());
    cdf.frac_leq_1m = cdf.fraction_leq(1.0);
    return cdf;
}

double ErrorCdf::fraction_leq(double x) const {
    const auto it = std::upper_bound(sorted_errors.begin(), sorted_errors.end(), x);
    return static_cast<double>(std::distance(sorted_errors.begin(), it)) /
           static_cast<double>(sorted_errors.size());
}

const MethodReport* EvaluationReport::find(const std::string& name) const {
    for (const MethodReport& m : methods) {
        if (m.name == name) return &m;
    }
    return nullptr;
}

GenerateOutput stage_generate(const ExperimentConfig& cfg, const Scene& scene) {
    GenerateOutput gen;
    const NoiseConfig noise{deg2rad(cfg.noise_sigma_deg), 0};

    for (std::size_t m = 0; m < scene.sections.size(); ++m) {
        SectionMeasurements sm;
        sm.section_id = scene.sections[m].id;
        std::mt19937_64 rng_loc(stream_seed(cfg.seed, SeedStream::TrainingLocations, m));
        sm.locations =
            generate_training_locations(scene.sections[m], scene.room, cfg.n_train, rng_loc);
        std::mt19937_64 rng_noise(stream_seed(cfg.seed, SeedStream::TrainingNoise, m));
        for (const Point2& p : sm.locations) {
            const AoaSet truth = make_aoa_set(visible_anchors(scene.room, scene.anchors, p));
            const AoaSet noisy = perturb_aoa(truth, noise, rng_noise);
            sm.true_aoas.push_back(truth);
            sm.noisy_aoas.push_back(noisy);
            sm.adoa.push_back(compute_adoa(noisy, scene.n_slots));
        }
        gen.sections.push_back(std::move(sm));
    }

    gen.track.trajectory =
        generate_test_track(cfg.scene.waypoints, cfg.track_speed, cfg.track_dt, scene.room,
                            cfg.speed_jitter_std, stream_seed(cfg.seed, SeedStream::TrackNoise, 1));
    std::mt19937_64 rng_track(stream_seed(cfg.seed, SeedStream::TrackNoise, 0));
    for (const TrackSample& s : gen.track.trajectory.points) {
        const AoaSet truth = make_aoa_set(visible_anchors(scene.room, scene.anchors, s.position));
        const AoaSet noisy = perturb_aoa(truth, noise, rng_track);
        gen.track.true_aoas.push_back(truth);
        gen.track.noisy_aoas.push_back(noisy);
        gen.track.adoa.push_back(compute_adoa(noisy, scene.n_slots));
    }
    return gen;
}

BootstrapOutput stage_bootstrap(const ExperimentConfig& cfg, const Scene& scene,
                                const GenerateOutput& gen, int jobs) {
    BootstrapOutput boot;
    for (const SectionMeasurements& sm : gen.sections) {
        LabelSet set = build_label_set(sm.section_id, sm.adoa, scene.anchors, scene.room,
                                       cfg.localize, jobs);
        if (cfg.corruption.enabled && cfg.corruption.std_m > 0.0) {
            std::mt19937_64 rng(stream_seed(cfg.seed, SeedStream::LabelCorruption,
                                            static_cast<std::uint64_t>(sm.section_id)));
            std::normal_distribution<double> noise(0.0, cfg.corruption.std_m);
            for (Label& l : set.labels) {
                l.position.x += noise(rng);
                l.position.y += noise(rng);
            }
        }
        boot.stats.push_back(compute_label_stats(set));
        boot.label_sets.push_back(std::move(set));
    }
    return boot;
}

TrainOutput stage_train(const ExperimentConfig& cfg, const Scene& scene,
                        const GenerateOutput& gen, const BootstrapOutput& boot, int jobs) {
    const std::size_t n_sections = scene.sections.size();
    TrainOutput out;
    out.models.resize(n_sections);
    out.reports.resize(n_sections);

    const auto make_samples = [&](std::size_t m) {
        std::vector<TrainSample> samples;
        const LabelSet& ls = boot.label_sets[m];
        const SectionMeasurements& sm = gen.sections[m];
        samples.reserve(ls.labels.size());
        for (const Label& l : ls.labels) {
            const std::vector<double> enc =
                encode_input(sm.adoa[static_cast<std::size_t>(l.point_index)]);
            TrainSample s;
            s.input = Eigen::Map<const Eigen::VectorXd>(enc.data(),
                                                        static_cast<Eigen::Index>(enc.size()));
            s.label = l.position;
            samples.push_back(std::move(s));
        }
        return samples;
    };

    const bool with_single = cfg.baseline_single_nn;
    const std::size_t n_tasks = n_sections + (with_single ? 1 : 0);

    parallel_for(n_tasks, jobs, [&](std::size_t task) {
        if (task < n_sections) {
            MlpConfig mc = cfg.nn[task];
            mc.n_input = static_cast<int>(scene.n_slots);
            if (mc.seed == 0) mc.seed = stream_seed(cfg.seed, SeedStream::NnInit, task);
            MlpModel model = MlpModel::create(mc);
            model.set_scene_fingerprint(scene.fingerprint);
            const std::vector<TrainSample> samples = make_samples(task);
            out.reports[task] = train(model, samples, mc);
            out.models[task] = std::move(model);
        } else {
            MlpConfig mc = cfg.single_nn;
            mc.n_input = static_cast<int>(scene.n_slots);
            if (mc.seed == 0) mc.seed = stream_seed(cfg.seed, SeedStream::NnInit, 100);
            MlpModel model = MlpModel::create(mc);
            model.set_scene_fingerprint(scene.fingerprint);
            std::vector<TrainSample> pooled;
            for (std::size_t m = 0; m < n_sections; ++m) {
                std::vector<TrainSample> s = make_samples(m);
                pooled.insert(pooled.end(), std::make_move_iterator(s.begin()),
                              std::make_move_iterator(s.end()));
            }
            out.single_report = train(model, pooled, mc);
            out.single_model = std::move(model);
        }
    });
    return out;
}

EvaluationReport stage_evaluate(const ExperimentConfig& cfg, const Scene& scene,
                                const GenerateOutput& gen, const BootstrapOutput& boot,
                                const TrainOutput& train_out, int jobs) {
    for (const MlpModel& m : train_out.models) {
        if (m.scene_fingerprint() != scene.fingerprint)
            throw ConfigError("model fingerprint does not match the scene");
    }

    ModelBank bank{train_out.models, boot.stats, scene.sections};
    bank.validate();

    EvaluationReport report;

    // Observation noise for the KF.
    Eigen::Matrix2d v = Eigen::Matrix2d::Identity();
    if (cfg.kf.obs_noise_mode == ObsNoiseMode::TrainingMse) {
        double mse = 0.0;
        for (const TrainReport& r : train_out.reports) mse += r.final_mse;
        mse /= static_cast<double>(train_out.reports.size());
        v *= cfg.kf.obs_noise_scale * mse / 2.0;
    } else {
        v *= cfg.kf.obs_noise_fixed;
    }
    report.obs_noise_v_used = v;
    const KfConfig kf_cfg{cfg.track_dt, cfg.kf.process_noise_q, v};

    // Initial model: label mean nearest to a one-shot bootstrap fix of the
    // first track point.
    const LocalizeResult first_fix =
        adoa_localize(gen.track.adoa.front(), scene.anchors, scene.room, cfg.localize);
    int initial = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < boot.stats.size(); ++m) {
        const double d = std::hypot(first_fix.position.x - boot.stats[m].mu(0),
                                    first_fix.position.y - boot.stats[m].mu(1));
        if (d < best) {
            best = d;
            initial = static_cast<int>(m);
        }
    }
    report.initial_model = initial;

    SwitchConfig sw = cfg.switching;
    sw.initial_model = initial;

    report.kf_run = run_track(bank, gen.track.adoa, Scheme::Kf, kf_cfg, sw);
    report.odd_run = run_track(bank, gen.track.adoa, Scheme::Odd, kf_cfg, sw);
    report.kf_events = report.kf_run.events;
    report.odd_events = report.odd_run.events;

    if (cfg.baseline_bootstrap) {
        std::vector<Point2> fixes(gen.track.adoa.size());
        parallel_for(gen.track.adoa.size(), jobs, [&](std::size_t i) {
            fixes[i] = adoa_localize(gen.track.adoa[i], scene.anchors, scene.room, cfg.localize)
                           .position;
        });
        if (cfg.corruption.enabled && cfg.corruption.apply_to_baseline &&
            cfg.corruption.std_m > 0.0) {
            std::mt19937_64 rng(stream_seed(cfg.seed, SeedStream::BaselineCorruption, 0));
            std::normal_distribution<double> noise(0.0, cfg.corruption.std_m);
            for (Point2& p : fixes) {
                p.x += noise(rng);
                p.y += noise(rng);
            }
        }
        report.methods.push_back(make_method_report(
            "bootstrap", errors_against_truth(fixes, gen.track.trajectory)));
    }

    if (cfg.baseline_single_nn && train_out.single_model.has_value()) {
        if (train_out.single_model->scene_fingerprint() != scene.fingerprint)
            throw ConfigError("single-NN fingerprint does not match the scene");
        std::vector<Point2> est;
        est.reserve(gen.track.adoa.size());
        for (const AdoaVector& a : gen.track.adoa) {
            const std::vector<double> enc = encode_input(a);
            est.push_back(forward(*train_out.single_model,
                                  Eigen::Map<const Eigen::VectorXd>(
                                      enc.data(), static_cast<Eigen::Index>(enc.size()))));
        }
        report.methods.push_back(make_method_report(
            "single_nn", errors_against_truth(est, gen.track.trajectory)));
    }

    report.methods.push_back(make_method_report(
        "multi_nn_kf", errors_against_truth(report.kf_run.estimates, gen.track.trajectory)));
    report.methods.push_back(make_method_report(
        "multi_nn_odd", errors_against_truth(report.odd_run.estimates, gen.track.trajectory)));
    return report;
}

void save_generate(const ExperimentConfig& cfg, const Scene& scene, const GenerateOutput& gen) {
    fs::create_directories(cfg.output_dir);
    for (const SectionMeasurements& sm : gen.sections) {
        const std::string sid = std::to_string(sm.section_id);
        write_locations_csv(path_join(cfg.output_dir, "training_locations_s" + sid + ".csv"),
                            sm.locations);
        write_measurements_csv(path_join(cfg.output_dir, "measurements_s" + sid + ".csv"),
                               sm.true_aoas, sm.noisy_aoas);
        write_adoa_csv(path_join(cfg.output_dir, "adoa_s" + sid + ".csv"), sm.adoa, scene.n_slots);
    }

    auto track = open_out(path_join(cfg.output_dir, "track.csv"));
    track << "index,t,x,y";
    for (const Section& s : scene.sections) track << ",in_s" << s.id;
    track << '\n';
    for (std::size_t i = 0; i < gen.track.trajectory.points.size(); ++i) {
        const TrackSample& ts = gen.track.trajectory.points[i];
        track << i << ',' << fmt(ts.t) << ',' << fmt(ts.position.x) << ',' << fmt(ts.position.y);
        for (const Section& s : scene.sections) track << ',' << int(s.bounds.contains(ts.position));
        track << '\n';
    }
    track.close();

    write_measurements_csv(path_join(cfg.output_dir, "track_measurements.csv"),
                           gen.track.true_aoas, gen.track.noisy_aoas);
    write_adoa_csv(path_join(cfg.output_dir, "adoa_track.csv"), gen.track.adoa, scene.n_slots);
}

GenerateOutput load_generate(const ExperimentConfig& cfg, const Scene& scene) {
    GenerateOutput gen;
    for (const Section& s : scene.sections) {
        const std::string sid = std::to_string(s.id);
        SectionMeasurements sm;
        sm.section_id = s.id;
        sm.locations =
            read_locations_csv(path_join(cfg.output_dir, "training_locations_s" + sid + ".csv"));
        read_measurements_csv(path_join(cfg.output_dir, "measurements_s" + sid + ".csv"),
                              sm.true_aoas, sm.noisy_aoas);
        sm.adoa = read_adoa_csv(path_join(cfg.output_dir, "adoa_s" + sid + ".csv"), scene.n_slots);
        gen.sections.push_back(std::move(sm));
    }

    auto in = open_in(path_join(cfg.output_dir, "track.csv"));
    std::string line;
    std::getline(in, line);
    gen.track.trajectory.dt = cfg.track_dt;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() < 4) throw StageDependencyError("malformed track row");
        gen.track.trajectory.points.push_back(
            TrackSample{to_double(f[1]), Point2{to_double(f[2]), to_double(f[3])}});
    }
    read_measurements_csv(path_join(cfg.output_dir, "track_measurements.csv"),
                          gen.track.true_aoas, gen.track.noisy_aoas);
    gen.track.adoa = read_adoa_csv(path_join(cfg.output_dir, "adoa_track.csv"), scene.n_slots);
    return gen;
}

void save_bootstrap(const ExperimentConfig& cfg, const BootstrapOutput& boot) {
    fs::create_directories(cfg.output_dir);
    json stats = json::array();
    for (std::size_t m = 0; m < boot.label_sets.size(); ++m) {
        const LabelSet& ls = boot.label_sets[m];
        const std::string sid = std::to_string(ls.section_id);
        auto out = open_out(path_join(cfg.output_dir, "labels_s" + sid + ".csv"));
        out << "section_id,point_index,x,y,residual,degraded\n";
        for (const Label& l : ls.labels) {
            out << ls.section_id << ',' << l.point_index << ',' << fmt(l.position.x) << ','
                << fmt(l.position.y) << ',' << fmt(l.residual) << ",0\n";
        }
        const LabelStats& st = boot.stats[m];
        json js;
        js["id"] = ls.section_id;
        js["dropped"] = ls.dropped;
        js["n_labels"] = ls.labels.size();
        js["mu"] = {st.mu(0), st.mu(1)};
        js["sigma"] = {{st.sigma(0, 0), st.sigma(0, 1)}, {st.sigma(1, 0), st.sigma(1, 1)}};
        stats.push_back(std::move(js));
    }
    json root;
    root["sections"] = std::move(stats);
    auto out = open_out(path_join(cfg.output_dir, "label_stats.json"));
    out << root.dump(1) << '\n';
}

BootstrapOutput load_bootstrap(const ExperimentConfig& cfg, const Scene& scene) {
    BootstrapOutput boot;
    auto stats_in = open_in(path_join(cfg.output_dir, "label_stats.json"));
    json root;
    stats_in >> root;

    for (const Section& s : scene.sections) {
        const std::string sid = std::to_string(s.id);
        LabelSet ls;
        ls.section_id = s.id;
        auto in = open_in(path_join(cfg.output_dir, "labels_s" + sid + ".csv"));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split_csv(line);
            if (f.size() != 6) throw StageDependencyError("malformed label row");
            ls.labels.push_back(Label{Point2{to_double(f[2]), to_double(f[3])}, to_double(f[4]),
                                      std::stoi(f[1])});
        }

        bool found = false;
        for (const auto& js : root.at("sections")) {
            if (js.at("id").get<int>() != s.id) continue;
            ls.dropped = js.at("dropped").get<int>();
            LabelStats st;
            st.mu << js.at("mu").at(0).get<double>(), js.at("mu").at(1).get<double>();
            st.sigma << js.at("sigma").at(0).at(0).get<double>(),
                js.at("sigma").at(0).at(1).get<double>(), js.at("sigma").at(1).at(0).get<double>(),
                js.at("sigma").at(1).at(1).get<double>();
            boot.stats.push_back(st);
            found = true;
            break;
        }
        if (!found)
            throw StageDependencyError("label_stats.json lacks section " + sid);
        boot.label_sets.push_back(std::move(ls));
    }
    return boot;
}

void save_train(const ExperimentConfig& cfg, const TrainOutput& train_out) {
    fs::create_directories(cfg.output_dir);
    json reports = json::array();
    for (std::size_t m = 0; m < train_out.models.size(); ++m) {
        save_model(train_out.models[m],
                   path_join(cfg.output_dir, "model_s" + std::to_string(m) + ".json"));
        json jr;
        jr["model"] = "s" + std::to_string(m);
        jr["final_mse"] = train_out.reports[m].final_mse;
        jr["epochs_run"] = train_out.reports[m].epochs_run;
        jr["epoch_mse"] = train_out.reports[m].epoch_mse;
        reports.push_back(std::move(jr));
    }
    if (train_out.single_model.has_value()) {
        save_model(*train_out.single_model, path_join(cfg.output_dir, "model_single.json"));
        json jr;
        jr["model"] = "single";
        jr["final_mse"] = train_out.single_report.final_mse;
        jr["epochs_run"] = train_out.single_report.epochs_run;
        jr["epoch_mse"] = train_out.single_report.epoch_mse;
        reports.push_back(std::move(jr));
    }
    json root;
    root["reports"] = std::move(reports);
    auto out = open_out(path_join(cfg.output_dir, "train_reports.json"));
    out << root.dump(1) << '\n';
}

TrainOutput load_train(const ExperimentConfig& cfg, const Scene& scene) {
    TrainOutput out;
    auto reports_in = open_in(path_join(cfg.output_dir, "train_reports.json"));
    json root;
    reports_in >> root;

    for (std::size_t m = 0; m < scene.sections.size(); ++m) {
        MlpModel model =
            load_model(path_join(cfg.output_dir, "model_s" + std::to_string(m) + ".json"));
        if (model.scene_fingerprint() != scene.fingerprint)
            throw ConfigError("model_s" + std::to_string(m) +
                              " was trained on a different scene");
        out.models.push_back(std::move(model));
    }
    out.reports.resize(scene.sections.size());
    for (const auto& jr : root.at("reports")) {
        TrainReport r;
        r.final_mse = jr.at("final_mse").get<double>();
        r.epochs_run = jr.at("epochs_run").get<int>();
        r.epoch_mse = jr.at("epoch_mse").get<std::vector<double>>();
        const std::string which = jr.at("model").get<std::string>();
        if (which == "single") {
            out.single_report = std::move(r);
        } else {
            const std::size_t idx = static_cast<std::size_t>(std::stoul(which.substr(1)));
            if (idx < out.reports.size()) out.reports[idx] = std::move(r);
        }
    }
    const std::string single_path = path_join(cfg.output_dir, "model_single.json");
    if (fs::exists(single_path)) {
        MlpModel model = load_model(single_path);
        if (model.scene_fingerprint() != scene.fingerprint)
            throw ConfigError("model_single was trained on a different scene");
        out.single_model = std::move(model);
    }
    return out;
}

void save_report(const ExperimentConfig& cfg, const EvaluationReport& report) {
    fs::create_directories(cfg.output_dir);
    json root;
    root["initial_model"] = report.initial_model;
    root["obs_noise_v"] = {{report.obs_noise_v_used(0, 0), report.obs_noise_v_used(0, 1)},
                           {report.obs_noise_v_used(1, 0), report.obs_noise_v_used(1, 1)}};
    json methods = json::array();
    for (const MethodReport& m : report.methods) {
        json jm;
        jm["name"] = m.name;
        jm["mean_error"] = m.mean_error;
        jm["frac_leq_1m"] = m.frac_leq_1m;
        jm["errors"] = m.errors;
        methods.push_back(std::move(jm));
    }
    root["methods"] = std::move(methods);
    root["kf_events"] = events_to_json(report.kf_events);
    root["odd_events"] = events_to_json(report.odd_events);
    auto out = open_out(path_join(cfg.output_dir, "report.json"));
    out << root.dump(1) << '\n';

    std::size_t n_models = 0;
    if (!report.kf_events.empty()) n_models = report.kf_events.front().metrics.size();
    else if (!report.odd_events.empty()) n_models = report.odd_events.front().metrics.size();
    write_events_csv(path_join(cfg.output_dir, "events_kf.csv"), report.kf_events, n_models);
    write_events_csv(path_join(cfg.output_dir, "events_odd.csv"), report.odd_events, n_models);
    if (!report.kf_run.estimates.empty()) {
        write_estimates_csv(path_join(cfg.output_dir, "estimates_kf.csv"), report.kf_run);
        write_kf_trace_csv(path_join(cfg.output_dir, "kf_trace.csv"), report.kf_run);
    }
    if (!report.odd_run.estimates.empty())
        write_estimates_csv(path_join(cfg.output_dir, "estimates_odd.csv"), report.odd_run);
}

EvaluationReport load_report(const ExperimentConfig& cfg) {
    auto in = open_in(path_join(cfg.output_dir, "report.json"));
    json root;
    in >> root;
    EvaluationReport report;
    report.initial_model = root.at("initial_model").get<int>();
    report.obs_noise_v_used << root.at("obs_noise_v").at(0).at(0).get<double>(),
        root.at("obs_noise_v").at(0).at(1).get<double>(),
        root.at("obs_noise_v").at(1).at(0).get<double>(),
        root.at("obs_noise_v").at(1).at(1).get<double>();
    for (const auto& jm : root.at("methods")) {
        MethodReport m;
        m.name = jm.at("name").get<std::string>();
        m.mean_error = jm.at("mean_error").get<double>();
        m.frac_leq_1m = jm.at("frac_leq_1m").get<double>();
        m.errors = jm.at("errors").get<std::vector<double>>();
        report.methods.push_back(std::move(m));
    }
    report.kf_events = events_from_json(root.at("kf_events"));
    report.odd_events = events_from_json(root.at("odd_events"));
    return report;
}

std::vector<CompareRow> stage_compare(const ExperimentConfig& cfg) {
    const EvaluationReport report = load_report(cfg);
    const char* order[] = {"bootstrap", "single_nn", "multi_nn_kf", "multi_nn_odd"};
    std::vector<CompareRow> rows;
    for (const char* name : order) {
        const MethodReport* m = report.find(name);
        if (!m) continue;
        rows.push_back(CompareRow{m->name, m->mean_error, m->frac_leq_1m});
    }
    auto out = open_out(path_join(cfg.output_dir, "compare.csv"));
    out << "method,mean_error,frac_leq_1m\n";
    for (const CompareRow& r : rows)
        out << r.method << ',' << fmt(r.mean_error) << ',' << fmt(r.frac_leq_1m) << '\n';
    return rows;
}

EvaluationReport run_pipeline(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    const auto guard = [](const char* stage, auto&& fn) {
        try {
            return fn();
        } catch (const std::exception& e) {
            throw StageFailureError(stage, e.what());
        }
    };

    const Scene scene = guard("generate", [&] { return build_scene(cfg.scene); });
    const GenerateOutput gen = guard("generate", [&] {
        GenerateOutput g = stage_generate(cfg, scene);
        save_generate(cfg, scene, g);
        return g;
    });
    const BootstrapOutput boot = guard("bootstrap", [&] {
        BootstrapOutput b = stage_bootstrap(cfg, scene, gen, jobs);
        save_bootstrap(cfg, b);
        return b;
    });
    const TrainOutput trained = guard("train", [&] {
        TrainOutput t = stage_train(cfg, scene, gen, boot, jobs);
        save_train(cfg, t);
        return t;
    });
    EvaluationReport report = guard("evaluate", [&] {
        EvaluationReport r = stage_evaluate(cfg, scene, gen, boot, trained, jobs);
        save_report(cfg, r);
        return r;
    });
    guard("compare", [&] { return stage_compare(cfg); });
    return report;
}

}  // namespace mmloc
