#include "teleop/traj_pred.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "teleop/intent.hpp"
#include "teleop/nn/train.hpp"

namespace teleop {

namespace {

double channel_value(const Observation& ob, int channel) {
    switch (channel) {
        case 0: return ob.position;
        case 1: return ob.velocity;
        case 2: return ob.acceleration;
        case 3: return ob.force;
        default: return ob.torque;
    }
}

void set_channel_value(Observation& ob, int channel, double v) {
    switch (channel) {
        case 0: ob.position = v; break;
        case 1: ob.velocity = v; break;
        case 2: ob.acceleration = v; break;
        case 3: ob.force = v; break;
        default: ob.torque = v; break;
    }
}

// Linear resampling of one channel of an observation sequence.
double sample_at(const std::vector<Observation>& seq, int channel, double pos) {
    const int len = static_cast<int>(seq.size());
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, len - 1);
    const double w = pos - lo;
    return (1.0 - w) * channel_value(seq[static_cast<std::size_t>(lo)], channel) +
           w * channel_value(seq[static_cast<std::size_t>(hi)], channel);
}

// Observed prefix plus a one-hot label block as constant channels.
nn::SeqBatch input_batch(const std::vector<const ObservationWindow*>& windows,
                         const std::vector<int>& labels, const Predictor& p) {
    nn::SeqBatch kinematics =
        windows_to_batch(windows, p.window_len, p.channel_mean, p.channel_std);
    nn::SeqBatch out(kObservationChannels + p.n_classes, p.window_len, kinematics.batch);
    for (int b = 0; b < out.batch; ++b) {
        for (int t = 0; t < out.time; ++t) {
            const auto dst = out.col(b, t);
            out.data.block(0, dst, kObservationChannels, 1) =
                kinematics.data.col(kinematics.col(b, t));
            out.data(kObservationChannels + labels[static_cast<std::size_t>(b)], dst) = 1.0;
        }
    }
    return out;
}

// Suffix resampled to the horizon grid and standardized; flattened
// channel-major into one column.
Eigen::VectorXd suffix_target(const std::vector<Observation>& suffix, const Predictor& p) {
    Eigen::VectorXd target(kObservationChannels * p.horizon_len);
    const int len = static_cast<int>(suffix.size());
    for (int j = 0; j < p.horizon_len; ++j) {
        const double pos = (p.horizon_len == 1 || len == 1)
                               ? 0.0
                               : static_cast<double>(j) * (len - 1) / (p.horizon_len - 1);
        for (int c = 0; c < kObservationChannels; ++c) {
            target[c * p.horizon_len + j] =
                (sample_at(suffix, c, pos) - p.channel_mean[c]) / p.channel_std[c];
        }
    }
    return target;
}

nn::Network build_predictor_net(const PredictorConfig& cfg, int in_channels, int out_dim) {
    nn::Network net;
    if (cfg.kind == PredictorKind::LSTM) {
        net.add(std::make_unique<nn::LSTMLayer>(in_channels, cfg.cells));
    } else {
        net.add(std::make_unique<nn::Conv1DLayer>(in_channels, cfg.cells, cfg.kernel_width,
                                                  nn::Activation::ReLU));
        net.add(std::make_unique<nn::GlobalAvgPoolLayer>());
    }
    net.add(std::make_unique<nn::DenseLayer>(cfg.cells, out_dim, nn::Activation::Linear));
    return net;
}

int count_classes(const Dataset& ds) {
    int n = 0;
    for (const auto& t : ds.trajectories) n = std::max(n, t.label + 1);
    return n;
}

}  // namespace

const char* predictor_kind_name(PredictorKind k) {
    return k == PredictorKind::LSTM ? "lstm" : "cnn";
}

PredictorKind predictor_kind_from_name(const std::string& name) {
    if (name == "lstm") return PredictorKind::LSTM;
    if (name == "cnn") return PredictorKind::CNN;
    throw std::invalid_argument("unknown predictor kind: " + name);
}

Predictor train_predictor(const Dataset& ds, const PredictorConfig& cfg, double fraction,
                          std::uint64_t seed, PredictorTrainLog* log) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw std::invalid_argument("train_predictor: fraction must be in (0, 1)");
    }

    Predictor p;
    p.kind = cfg.kind;
    p.fraction = fraction;
    p.n_classes = count_classes(ds);
    p.window_len = cfg.window_len;
    p.horizon_len = cfg.horizon_len;
    channel_stats(ds, ds.train_idx, p.channel_mean, p.channel_std);

    Rng rng(seed);
    p.net = build_predictor_net(cfg, kObservationChannels + p.n_classes,
                                kObservationChannels * cfg.horizon_len);
    p.net.init(rng);
    nn::Optimizer opt(nn::OptimizerKind::Adam, cfg.learning_rate);
    nn::EarlyStopper stopper(cfg.patience, /*maximize=*/false);

    std::vector<int> order = ds.train_idx;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
        }

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ObservationWindow> windows;
            std::vector<const ObservationWindow*> ptrs;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                windows.push_back(
                    window(ds.trajectories[static_cast<std::size_t>(order[i])], fraction));
                labels.push_back(windows.back().label);
            }
            for (const auto& w : windows) ptrs.push_back(&w);

            nn::Matrix target(kObservationChannels * cfg.horizon_len,
                              static_cast<Eigen::Index>(windows.size()));
            for (std::size_t i = 0; i < windows.size(); ++i) {
                target.col(static_cast<Eigen::Index>(i)) = suffix_target(windows[i].suffix, p);
            }

            p.net.zero_grads();
            nn::Value out = p.net.forward(nn::Value::of(input_batch(ptrs, labels, p)));
            nn::Matrix grad;
            const double loss = nn::mse_with_grad(out.vec, target, grad);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train_predictor: loss diverged at epoch " +
                                         std::to_string(epoch));
            }
            p.net.backward(nn::Value::of(std::move(grad)));
            opt.step(p.net);
            epoch_loss += loss;
            ++batches;
        }

        const double val = evaluate_rrmse(p, ds, ds.val_idx);
        if (log) {
            log->epoch_loss.push_back(epoch_loss / std::max(1, batches));
            log->val_rrmse.push_back(val);
        }
        stopper.observe(val, p.net);
        if (stopper.should_stop()) break;
    }
    stopper.restore_best(p.net);
    if (log) {
        log->best_val_rrmse = stopper.best();
        log->train_rrmse = evaluate_rrmse(p, ds, ds.train_idx);
    }
    return p;
}

std::vector<Observation> predict_remaining(const Predictor& p, const ObservationWindow& w,
                                           int label) {
    if (w.samples.empty()) throw std::invalid_argument("predict_remaining: empty window");
    if (w.suffix.empty()) {
        throw std::invalid_argument("predict_remaining: nothing left to predict");
    }
    if (label < 0 || label >= p.n_classes) {
        throw std::invalid_argument("predict_remaining: label out of range");
    }

    std::vector<const ObservationWindow*> one{&w};
    std::vector<int> labels{label};
    nn::Value out =
        const_cast<nn::Network&>(p.net).forward(nn::Value::of(input_batch(one, labels, p)));
    const Eigen::VectorXd flat = out.vec.col(0);

    // De-normalize onto the horizon grid, then resample to the true length.
    std::vector<Observation> grid(static_cast<std::size_t>(p.horizon_len));
    for (int j = 0; j < p.horizon_len; ++j) {
        for (int c = 0; c < kObservationChannels; ++c) {
            set_channel_value(grid[static_cast<std::size_t>(j)], c,
                              flat[c * p.horizon_len + j] * p.channel_std[c] + p.channel_mean[c]);
        }
    }
    const int out_len = static_cast<int>(w.suffix.size());
    std::vector<Observation> suffix(static_cast<std::size_t>(out_len));
    for (int t = 0; t < out_len; ++t) {
        const double pos = (out_len == 1)
                               ? static_cast<double>(p.horizon_len - 1)
                               : static_cast<double>(t) * (p.horizon_len - 1) / (out_len - 1);
        for (int c = 0; c < kObservationChannels; ++c) {
            set_channel_value(suffix[static_cast<std::size_t>(t)], c, sample_at(grid, c, pos));
        }
    }
    return suffix;
}

double rrmse(const std::vector<Observation>& predicted,
             const std::vector<Observation>& truth) {
    if (predicted.size() != truth.size()) {
        throw std::invalid_argument("rrmse: length mismatch");
    }
    if (truth.empty()) throw std::invalid_argument("rrmse: empty sequences");
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (int c = 0; c < kObservationChannels; ++c) {
            const double t = channel_value(truth[i], c);
            const double d = channel_value(predicted[i], c) - t;
            err += d * d;
            ref += t * t;
        }
    }
    if (ref == 0.0) throw std::invalid_argument("rrmse: undefined for all-zero truth");
    return 100.0 * std::sqrt(err / ref);
}

double evaluate_rrmse(const Predictor& p, const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluate_rrmse: empty split");
    double total = 0.0;
    for (int idx : indices) {
        const ObservationWindow w =
            window(ds.trajectories[static_cast<std::size_t>(idx)], p.fraction);
        total += rrmse(predict_remaining(p, w, w.label), w.suffix);
    }
    return total / static_cast<double>(indices.size());
}

TrajErrorCurve traj_error_curve(const std::vector<const Predictor*>& per_fraction,
                                const Dataset& ds, double rrmse_threshold_pct) {
    if (rrmse_threshold_pct <= 0.0) {
        throw std::invalid_argument("traj_error_curve: threshold must be > 0");
    }
    if (ds.test_idx.empty()) throw std::invalid_argument("traj_error_curve: empty test split");

    std::vector<std::pair<double, double>> knots;
    for (const Predictor* p : per_fraction) {
        int failures = 0;
        for (int idx : ds.test_idx) {
            const ObservationWindow w =
                window(ds.trajectories[static_cast<std::size_t>(idx)], p->fraction);
            if (rrmse(predict_remaining(*p, w, w.label), w.suffix) > rrmse_threshold_pct) {
                ++failures;
            }
        }
        knots.emplace_back(p->fraction,
                           static_cast<double>(failures) / static_cast<double>(ds.test_idx.size()));
    }
    std::sort(knots.begin(), knots.end());
    return TrajErrorCurve(std::move(knots));
}

void Predictor::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("predictor checkpoint: cannot open " + path);
    const std::uint32_t kind_tag = (kind == PredictorKind::LSTM) ? 0u : 1u;
    const std::uint32_t n = static_cast<std::uint32_t>(n_classes);
    const std::uint32_t wl = static_cast<std::uint32_t>(window_len);
    const std::uint32_t hl = static_cast<std::uint32_t>(horizon_len);
    out.write(reinterpret_cast<const char*>(&kind_tag), sizeof(kind_tag));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&wl), sizeof(wl));
    out.write(reinterpret_cast<const char*>(&hl), sizeof(hl));
    out.write(reinterpret_cast<const char*>(&fraction), sizeof(fraction));
    const std::uint32_t ch = static_cast<std::uint32_t>(channel_mean.size());
    out.write(reinterpret_cast<const char*>(&ch), sizeof(ch));
    out.write(reinterpret_cast<const char*>(channel_mean.data()),
              static_cast<std::streamsize>(ch * sizeof(double)));
    out.write(reinterpret_cast<const char*>(channel_std.data()),
              static_cast<std::streamsize>(ch * sizeof(double)));
    net.save(out);
}

Predictor Predictor::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("predictor checkpoint: cannot open " + path);
    Predictor p;
    std::uint32_t kind_tag = 0, n = 0, wl = 0, hl = 0, ch = 0;
    in.read(reinterpret_cast<char*>(&kind_tag), sizeof(kind_tag));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&wl), sizeof(wl));
    in.read(reinterpret_cast<char*>(&hl), sizeof(hl));
    in.read(reinterpret_cast<char*>(&p.fraction), sizeof(p.fraction));
    in.read(reinterpret_cast<char*>(&ch), sizeof(ch));
    if (!in) throw std::runtime_error("predictor checkpoint: truncated");
    p.kind = (kind_tag == 0u) ? PredictorKind::LSTM : PredictorKind::CNN;
    p.n_classes = static_cast<int>(n);
    p.window_len = static_cast<int>(wl);
    p.horizon_len = static_cast<int>(hl);
    p.channel_mean.resize(ch);
    p.channel_std.resize(ch);
    in.read(reinterpret_cast<char*>(p.channel_mean.data()),
            static_cast<std::streamsize>(ch * sizeof(double)));
    in.read(reinterpret_cast<char*>(p.channel_std.data()),
            static_cast<std::streamsize>(ch * sizeof(double)));
    if (!in) throw std::runtime_error("predictor checkpoint: truncated");
    p.net = nn::Network::load(in);
    return p;
}

}  // namespace teleop
