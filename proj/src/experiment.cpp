#include "teleop/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "teleop/parallel.hpp"

namespace teleop {

using nlohmann::json;

namespace {

json curve_to_json(const FractionCurve& curve) {
    json arr = json::array();
    for (const auto& [f, e] : curve.knots()) arr.push_back({f, e});
    return arr;
}

FractionCurve curve_from_json(const json& arr) {
    std::vector<std::pair<double, double>> knots;
    for (const auto& pair : arr) knots.emplace_back(pair.at(0), pair.at(1));
    return FractionCurve(std::move(knots));
}

void deep_merge(json& base, const json& overrides) {
    if (!overrides.is_object() || !base.is_object()) {
        base = overrides;
        return;
    }
    for (const auto& [key, value] : overrides.items()) {
        if (base.contains(key) && base[key].is_object() && value.is_object()) {
            deep_merge(base[key], value);
        } else {
            base[key] = value;
        }
    }
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["dataset"] = {{"n_per_class", c.dataset.n_per_class},
                    {"n_classes", c.dataset.n_classes},
                    {"noise_scale", c.dataset.noise_scale},
                    {"slot_duration_s", c.dataset.slot_duration_s}};
    j["channel"] = {{"large_scale_gain", c.channel.large_scale_gain},
                    {"small_scale_gain", c.channel.small_scale_gain},
                    {"transmit_power_w", c.channel.transmit_power_w},
                    {"noise_psd_w_per_hz", c.channel.noise_psd_w_per_hz},
                    {"bandwidth_hz", c.channel.bandwidth_hz},
                    {"tx_duration_s", c.channel.tx_duration_s}};
    j["reliability"] = {{"decoding_error", c.reliability.decoding_error},
                        {"queuing_violation", c.reliability.queuing_violation}};
    j["task"] = {{"operator_coeff", c.operator_coeff},
                 {"completion_requirement", c.completion_requirement},
                 {"detect_fail_prob", c.detect_fail_prob},
                 {"bits_per_slot", c.bits_per_slot},
                 {"use_finite_blocklength", c.use_finite_blocklength},
                 {"label", c.task_label}};
    j["curves"] = {{"intent_error", curve_to_json(c.intent_curve)},
                   {"traj_error", curve_to_json(c.traj_curve)},
                   {"intent_refresh_prob", c.intent_refresh_prob}};
    j["env"] = {{"sweep_total_slots", c.sweep_total_slots},
                {"dqn_total_slots", c.dqn_total_slots}};
    j["classifier"] = {{"conv_layers", c.classifier.conv_layers},
                       {"conv_channels", c.classifier.conv_channels},
                       {"kernel_width", c.classifier.kernel_width},
                       {"dense_widths", c.classifier.dense_widths},
                       {"batch_size", c.classifier.batch_size},
                       {"patience", c.classifier.patience},
                       {"max_epochs", c.classifier.max_epochs},
                       {"learning_rate", c.classifier.learning_rate},
                       {"resample_len", c.classifier.resample_len},
                       {"min_fraction", c.classifier.min_fraction}};
    j["predictor"] = {{"cells", c.predictor.cells},
                      {"batch_size", c.predictor.batch_size},
                      {"max_epochs", c.predictor.max_epochs},
                      {"patience", c.predictor.patience},
                      {"learning_rate", c.predictor.learning_rate},
                      {"kernel_width", c.predictor.kernel_width},
                      {"window_len", c.predictor.window_len},
                      {"horizon_len", c.predictor.horizon_len},
                      {"fractions", c.predictor_fractions},
                      {"rrmse_threshold_pct", c.rrmse_threshold_pct},
                      {"curve_fractions", c.curve_fractions}};
    j["dqn"] = {{"discount", c.dqn.discount},
                {"eps_start", c.dqn.eps_start},
                {"eps_end", c.dqn.eps_end},
                {"eps_decay_frac", c.dqn.eps_decay_frac},
                {"batch_size", c.dqn.batch_size},
                {"target_sync_period", c.dqn.target_sync_period},
                {"buffer_capacity", c.dqn.buffer_capacity},
                {"min_buffer_fill", c.dqn.min_buffer_fill},
                {"total_steps", c.dqn.total_steps},
                {"learning_rate", c.dqn.learning_rate},
                {"hidden", c.dqn.hidden},
                {"ma_window_episodes", c.dqn.ma_window_episodes},
                {"log_period_steps", c.dqn.log_period_steps}};
    j["sweeps"] = {{"pt_grid", c.pt_grid},
                   {"loss_grid", c.loss_grid},
                   {"rho_grid", c.rho_grid},
                   {"episodes", c.sweep_episodes},
                   {"pt_fixed", c.sweep_pt_fixed},
                   {"workers", c.workers}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.seed = j.at("seed");
    const auto& ds = j.at("dataset");
    c.dataset.n_per_class = ds.at("n_per_class");
    c.dataset.n_classes = ds.at("n_classes");
    c.dataset.noise_scale = ds.at("noise_scale");
    c.dataset.slot_duration_s = ds.at("slot_duration_s");
    const auto& ch = j.at("channel");
    c.channel.large_scale_gain = ch.at("large_scale_gain");
    c.channel.small_scale_gain = ch.at("small_scale_gain");
    c.channel.transmit_power_w = ch.at("transmit_power_w");
    c.channel.noise_psd_w_per_hz = ch.at("noise_psd_w_per_hz");
    c.channel.bandwidth_hz = ch.at("bandwidth_hz");
    c.channel.tx_duration_s = ch.at("tx_duration_s");
    const auto& rel = j.at("reliability");
    c.reliability.decoding_error = rel.at("decoding_error");
    c.reliability.queuing_violation = rel.at("queuing_violation");
    const auto& task = j.at("task");
    c.operator_coeff = task.at("operator_coeff");
    c.completion_requirement = task.at("completion_requirement");
    c.detect_fail_prob = task.at("detect_fail_prob");
    c.bits_per_slot = task.at("bits_per_slot");
    c.use_finite_blocklength = task.at("use_finite_blocklength");
    c.task_label = task.at("label");
    const auto& curves = j.at("curves");
    c.intent_curve = curve_from_json(curves.at("intent_error"));
    c.traj_curve = curve_from_json(curves.at("traj_error"));
    c.intent_refresh_prob = curves.at("intent_refresh_prob");
    const auto& env = j.at("env");
    c.sweep_total_slots = env.at("sweep_total_slots");
    c.dqn_total_slots = env.at("dqn_total_slots");
    const auto& clf = j.at("classifier");
    c.classifier.conv_layers = clf.at("conv_layers");
    c.classifier.conv_channels = clf.at("conv_channels");
    c.classifier.kernel_width = clf.at("kernel_width");
    c.classifier.dense_widths = clf.at("dense_widths").get<std::vector<int>>();
    c.classifier.batch_size = clf.at("batch_size");
    c.classifier.patience = clf.at("patience");
    c.classifier.max_epochs = clf.at("max_epochs");
    c.classifier.learning_rate = clf.at("learning_rate");
    c.classifier.resample_len = clf.at("resample_len");
    c.classifier.min_fraction = clf.at("min_fraction");
    const auto& pred = j.at("predictor");
    c.predictor.cells = pred.at("cells");
    c.predictor.batch_size = pred.at("batch_size");
    c.predictor.max_epochs = pred.at("max_epochs");
    c.predictor.patience = pred.at("patience");
    c.predictor.learning_rate = pred.at("learning_rate");
    c.predictor.kernel_width = pred.at("kernel_width");
    c.predictor.window_len = pred.at("window_len");
    c.predictor.horizon_len = pred.at("horizon_len");
    c.predictor_fractions = pred.at("fractions").get<std::vector<double>>();
    c.rrmse_threshold_pct = pred.at("rrmse_threshold_pct");
    c.curve_fractions = pred.at("curve_fractions").get<std::vector<double>>();
    const auto& dq = j.at("dqn");
    c.dqn.discount = dq.at("discount");
    c.dqn.eps_start = dq.at("eps_start");
    c.dqn.eps_end = dq.at("eps_end");
    c.dqn.eps_decay_frac = dq.at("eps_decay_frac");
    c.dqn.batch_size = dq.at("batch_size");
    c.dqn.target_sync_period = dq.at("target_sync_period");
    c.dqn.buffer_capacity = dq.at("buffer_capacity");
    c.dqn.min_buffer_fill = dq.at("min_buffer_fill");
    c.dqn.total_steps = dq.at("total_steps");
    c.dqn.learning_rate = dq.at("learning_rate");
    c.dqn.hidden = dq.at("hidden").get<std::vector<int>>();
    c.dqn.ma_window_episodes = dq.at("ma_window_episodes");
    c.dqn.log_period_steps = dq.at("log_period_steps");
    const auto& sw = j.at("sweeps");
    c.pt_grid = sw.at("pt_grid").get<std::vector<double>>();
    c.loss_grid = sw.at("loss_grid").get<std::vector<double>>();
    c.rho_grid = sw.at("rho_grid").get<std::vector<double>>();
    c.sweep_episodes = sw.at("episodes");
    c.sweep_pt_fixed = sw.at("pt_fixed");
    c.workers = sw.at("workers");
    return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    // Radio defaults: -130 dB path gain, 0.12 W transmit power, -174 dBm/Hz
    // noise over 1 MHz, 256 us packets; snr 3 and blocklength 256.
    c.channel.large_scale_gain = 1e-13;
    c.channel.small_scale_gain = 1.0;
    c.channel.transmit_power_w = 0.12;
    c.channel.noise_psd_w_per_hz = 4.0e-21;
    c.channel.bandwidth_hz = 1e6;
    c.channel.tx_duration_s = 2.56e-4;

    c.intent_curve = AccuracyCurve({{0.05, 0.72}, {0.10, 0.65}, {0.20, 0.50},
                                    {0.30, 0.32}, {0.36, 0.20}, {0.40, 0.12},
                                    {0.44, 0.05}, {0.48, 0.035}, {0.55, 0.025},
                                    {0.60, 0.02}, {0.70, 0.015}, {0.80, 0.012},
                                    {0.90, 0.011}, {1.00, 0.01}});
    c.traj_curve = TrajErrorCurve({{0.05, 0.995}, {0.25, 0.99}, {0.32, 0.95},
                                   {0.36, 0.85}, {0.40, 0.45}, {0.44, 0.16},
                                   {0.48, 0.018}, {0.55, 0.010}, {0.70, 0.008},
                                   {0.90, 0.006}, {1.00, 0.005}});
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json overrides;
    try {
        in >> overrides;
    } catch (const json::exception& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
    json base = config_to_json(defaults());
    deep_merge(base, overrides);
    try {
        return config_from_json(base);
    } catch (const json::exception& e) {
        throw std::runtime_error("config: " + path + ": " + e.what());
    }
}

std::string ExperimentConfig::to_json_string() const {
    return config_to_json(*this).dump(2);
}

std::string ExperimentConfig::hash() const {
    const std::string dump = config_to_json(*this).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

EpisodeConfig ExperimentConfig::episode_config(int total_slots) const {
    EpisodeConfig e;
    e.task_label = task_label;
    e.n_classes = dataset.n_classes;
    e.total_slots = total_slots;
    e.reliability = reliability;
    e.operator_coeff = operator_coeff;
    e.completion_requirement = completion_requirement;
    e.detect_fail_prob = detect_fail_prob;
    e.intent_curve = intent_curve;
    e.traj_curve = traj_curve;
    e.bits_per_slot = bits_per_slot;
    e.intent_refresh_prob = intent_refresh_prob;
    e.use_finite_blocklength = use_finite_blocklength;
    e.channel = channel;
    return e;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    auto split = [](std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t x = seed ^ (tag * 0x9e3779b97f4a7c15ULL);
    const std::uint64_t a = split(x);
    x ^= index + 0x632be59bd9b4e019ULL;
    return a ^ split(x);
}

MonteCarloPoint run_forced_point(const EpisodeConfig& cfg, double switch_fraction,
                                 long episodes, std::uint64_t seed, int workers) {
    EpisodeConfig forced = cfg;
    forced.forced_schedule = true;
    const Policy policy = threshold_policy(switch_fraction);

    const int n_chunks = std::max(1, workers);
    std::vector<long> successes(static_cast<std::size_t>(n_chunks), 0);
    std::vector<double> load_sum(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> share_sum(static_cast<std::size_t>(n_chunks), 0.0);

    parallel_chunks(episodes, workers, [&](int chunk, long begin, long end) {
        long ok = 0;
        double load = 0.0, share = 0.0;
        for (long e = begin; e < end; ++e) {
            const EpisodeResult r = run_episode(
                forced, policy, Rng(mix_seed(seed, 0x51, static_cast<std::uint64_t>(e))));
            ok += r.success ? 1 : 0;
            load += r.load_bits_per_slot;
            share += r.tele_share();
        }
        successes[static_cast<std::size_t>(chunk)] = ok;
        load_sum[static_cast<std::size_t>(chunk)] = load;
        share_sum[static_cast<std::size_t>(chunk)] = share;
    });

    long ok = 0;
    double load = 0.0, share = 0.0;
    for (int c = 0; c < n_chunks; ++c) {
        ok += successes[static_cast<std::size_t>(c)];
        load += load_sum[static_cast<std::size_t>(c)];
        share += share_sum[static_cast<std::size_t>(c)];
    }

    MonteCarloPoint point;
    point.episodes = episodes;
    point.success = static_cast<double>(ok) / static_cast<double>(episodes);
    // Laplace-smoothed so the error bar never collapses to zero.
    const double p_smooth =
        (static_cast<double>(ok) + 1.0) / (static_cast<double>(episodes) + 2.0);
    point.success_stderr =
        std::sqrt(p_smooth * (1.0 - p_smooth) / static_cast<double>(episodes));
    point.load_bits_per_slot = load / static_cast<double>(episodes);
    point.mean_tele_share = share / static_cast<double>(episodes);
    return point;
}

std::vector<SweepRow> sweep_pt(const ExperimentConfig& cfg, long episodes) {
    std::vector<SweepRow> rows;
    // Default operator coefficient first, then the remaining grid.
    std::vector<double> rhos{cfg.operator_coeff};
    for (double r : cfg.rho_grid) {
        if (r != cfg.operator_coeff) rhos.push_back(r);
    }
    std::uint64_t point_idx = 0;
    for (double rho : rhos) {
        EpisodeConfig ep = cfg.episode_config(cfg.sweep_total_slots);
        ep.operator_coeff = rho;
        const MonteCarloPoint conventional = run_forced_point(
            ep, 1.0, episodes, mix_seed(cfg.seed, 0xA0, point_idx++), cfg.workers);
        for (double pt : cfg.pt_grid) {
            SweepRow row;
            row.x = pt;
            row.rho = rho;
            row.conventional = conventional;
            // Full teleoperation is the conventional run itself.
            row.proposed = (pt == 1.0)
                               ? conventional
                               : run_forced_point(ep, pt, episodes,
                                                  mix_seed(cfg.seed, 0xA0, point_idx), cfg.workers);
            ++point_idx;
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<SweepRow> sweep_loss(const ExperimentConfig& cfg, long episodes) {
    std::vector<SweepRow> rows;
    std::uint64_t point_idx = 0;
    for (double loss : cfg.loss_grid) {
        EpisodeConfig ep = cfg.episode_config(cfg.sweep_total_slots);
        ep.reliability.decoding_error = loss;
        SweepRow row;
        row.x = loss;
        row.rho = cfg.operator_coeff;
        row.conventional = run_forced_point(ep, 1.0, episodes,
                                            mix_seed(cfg.seed, 0xB0, point_idx++), cfg.workers);
        row.proposed = run_forced_point(ep, cfg.sweep_pt_fixed, episodes,
                                        mix_seed(cfg.seed, 0xB0, point_idx++), cfg.workers);
        rows.push_back(row);
    }
    return rows;
}

std::vector<SweepRow> sweep_operator(const ExperimentConfig& cfg, long episodes) {
    std::vector<SweepRow> rows;
    std::uint64_t point_idx = 0;
    for (double rho : cfg.rho_grid) {
        EpisodeConfig ep = cfg.episode_config(cfg.sweep_total_slots);
        ep.operator_coeff = rho;
        SweepRow row;
        row.x = rho;
        row.rho = rho;
        row.conventional = run_forced_point(ep, 1.0, episodes,
                                            mix_seed(cfg.seed, 0xC0, point_idx++), cfg.workers);
        row.proposed = run_forced_point(ep, cfg.sweep_pt_fixed, episodes,
                                        mix_seed(cfg.seed, 0xC0, point_idx++), cfg.workers);
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::ofstream open_csv(const std::string& path, const ExperimentConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("csv: cannot open " + path);
    out << "# config_hash=" << cfg.hash() << " seed=" << cfg.seed << "\n";
    return out;
}

}  // namespace

void write_sweep_csv(const std::string& path, const std::string& x_name,
                     const std::vector<SweepRow>& rows, const ExperimentConfig& cfg) {
    std::ofstream out = open_csv(path, cfg);
    out << x_name
        << ",rho,success,success_stderr,conv_success,conv_stderr,"
           "load_bits_per_slot,conv_load_bits_per_slot,mean_tele_share,episodes\n";
    char buf[320];
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%ld\n",
                      r.x, r.rho, r.proposed.success, r.proposed.success_stderr,
                      r.conventional.success, r.conventional.success_stderr,
                      r.proposed.load_bits_per_slot, r.conventional.load_bits_per_slot,
                      r.proposed.mean_tele_share, r.proposed.episodes);
        out << buf;
    }
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows,
                     const ExperimentConfig& cfg) {
    std::ofstream out = open_csv(path, cfg);
    out << "slot,mode,action,reward,intent_argmax,cause\n";
    char buf[160];
    for (const TraceRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.10g,%d,%s\n", r.slot, mode_name(r.mode),
                      r.action, r.reward, r.intent_argmax, r.cause.c_str());
        out << buf;
    }
}

void write_training_curve_csv(const std::string& path,
                              const std::vector<TrainingCurvePoint>& curve,
                              const ExperimentConfig& cfg) {
    std::ofstream out = open_csv(path, cfg);
    out << "step,moving_avg_success,mean_dZ,loss,epsilon\n";
    char buf[160];
    for (const TrainingCurvePoint& p : curve) {
        std::snprintf(buf, sizeof(buf), "%ld,%.10g,%.10g,%.10g,%.10g\n", p.step,
                      p.moving_avg_success, p.mean_tele_share, p.loss, p.epsilon);
        out << buf;
    }
}

}  // namespace teleop
