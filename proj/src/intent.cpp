#include "teleop/intent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <stdexcept>

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

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
    const std::uint32_t n = static_cast<std::uint32_t>(v.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
}

Eigen::VectorXd read_vec(std::istream& in) {
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    Eigen::VectorXd v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("classifier checkpoint: truncated");
    return v;
}

nn::Network build_classifier_net(const ClassifierConfig& cfg, int n_classes) {
    nn::Network net;
    int in_ch = kObservationChannels;
    for (int i = 0; i < cfg.conv_layers; ++i) {
        net.add(std::make_unique<nn::Conv1DLayer>(in_ch, cfg.conv_channels,
                                                  cfg.kernel_width,
                                                  nn::Activation::LeakyReLU));
        in_ch = cfg.conv_channels;
    }
    net.add(std::make_unique<nn::GlobalAvgPoolLayer>());
    int width = cfg.conv_channels;
    for (int w : cfg.dense_widths) {
        net.add(std::make_unique<nn::DenseLayer>(width, w, nn::Activation::LeakyReLU));
        width = w;
    }
    net.add(std::make_unique<nn::DenseLayer>(width, n_classes, nn::Activation::Linear));
    return net;
}

int count_classes(const Dataset& ds) {
    int n = 0;
    for (const auto& t : ds.trajectories) n = std::max(n, t.label + 1);
    return n;
}

double accuracy_over(const Classifier& clf, const Dataset& ds,
                     const std::vector<int>& indices, const std::vector<double>& fractions) {
    int correct = 0, total = 0;
    for (int idx : indices) {
        for (double f : fractions) {
            const ObservationWindow w = window(ds.trajectories[static_cast<std::size_t>(idx)], f);
            const IntentionEstimate est = predict_intention(clf, w);
            if (est.argmax() == w.label) ++correct;
            ++total;
        }
    }
    return total ? static_cast<double>(correct) / total : 0.0;
}

}  // namespace

void channel_stats(const Dataset& ds, const std::vector<int>& indices,
                   Eigen::VectorXd& mean, Eigen::VectorXd& stddev) {
    mean = Eigen::VectorXd::Zero(kObservationChannels);
    stddev = Eigen::VectorXd::Zero(kObservationChannels);
    long count = 0;
    for (int idx : indices) {
        for (const Observation& ob : ds.trajectories[static_cast<std::size_t>(idx)].samples) {
            for (int c = 0; c < kObservationChannels; ++c) mean[c] += channel_value(ob, c);
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("channel_stats: empty index list");
    mean /= static_cast<double>(count);
    for (int idx : indices) {
        for (const Observation& ob : ds.trajectories[static_cast<std::size_t>(idx)].samples) {
            for (int c = 0; c < kObservationChannels; ++c) {
                const double d = channel_value(ob, c) - mean[c];
                stddev[c] += d * d;
            }
        }
    }
    stddev = (stddev / static_cast<double>(count)).cwiseSqrt();
    for (int c = 0; c < kObservationChannels; ++c) {
        if (stddev[c] < 1e-9) stddev[c] = 1.0;  // constant channel
    }
}

nn::SeqBatch windows_to_batch(const std::vector<const ObservationWindow*>& windows,
                              int resample_len, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& stddev) {
    const int batch = static_cast<int>(windows.size());
    nn::SeqBatch out(kObservationChannels, resample_len, batch);
    for (int b = 0; b < batch; ++b) {
        const auto& samples = windows[static_cast<std::size_t>(b)]->samples;
        const int len = static_cast<int>(samples.size());
        if (len < 1) throw std::invalid_argument("windows_to_batch: empty window");
        for (int j = 0; j < resample_len; ++j) {
            const double pos = (resample_len == 1)
                                   ? 0.0
                                   : static_cast<double>(j) * (len - 1) / (resample_len - 1);
            const int lo = static_cast<int>(pos);
            const int hi = std::min(lo + 1, len - 1);
            const double wgt = pos - lo;
            for (int c = 0; c < kObservationChannels; ++c) {
                const double v = (1.0 - wgt) * channel_value(samples[static_cast<std::size_t>(lo)], c) +
                                 wgt * channel_value(samples[static_cast<std::size_t>(hi)], c);
                out.data(c, out.col(b, j)) = (v - mean[c]) / stddev[c];
            }
        }
    }
    return out;
}

Classifier train_classifier(const Dataset& ds, const ClassifierConfig& cfg,
                            std::uint64_t seed, ClassifierTrainLog* log) {
    const int n_classes = count_classes(ds);
    if (n_classes < 2) throw std::invalid_argument("train_classifier: need at least 2 classes");
    if (ds.train_idx.empty() || ds.val_idx.empty()) {
        throw std::invalid_argument("train_classifier: dataset has empty splits");
    }

    Classifier clf;
    clf.n_classes = n_classes;
    clf.resample_len = cfg.resample_len;
    channel_stats(ds, ds.train_idx, clf.channel_mean, clf.channel_std);

    Rng rng(seed);
    clf.net = build_classifier_net(cfg, n_classes);
    clf.net.init(rng);
    nn::Optimizer opt(nn::OptimizerKind::Adam, cfg.learning_rate);
    nn::EarlyStopper stopper(cfg.patience, /*maximize=*/true);

    const std::vector<double> val_fractions{0.25, 0.5, 0.75, 1.0};
    std::vector<int> order = ds.train_idx;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Fisher-Yates with the training stream keeps epochs reproducible.
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
        }

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ObservationWindow> windows;
            std::vector<const ObservationWindow*> ptrs;
            std::vector<int> labels;
            windows.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                const double f = rng.uniform(cfg.min_fraction, 1.0);
                windows.push_back(window(ds.trajectories[static_cast<std::size_t>(order[i])], f));
                labels.push_back(windows.back().label);
            }
            for (const auto& w : windows) ptrs.push_back(&w);

            nn::SeqBatch batch =
                windows_to_batch(ptrs, cfg.resample_len, clf.channel_mean, clf.channel_std);
            clf.net.zero_grads();
            nn::Value out = clf.net.forward(nn::Value::of(std::move(batch)));
            nn::Matrix grad;
            const double loss = nn::softmax_cross_entropy(out.vec, labels, grad);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("train_classifier: loss diverged at epoch " +
                                         std::to_string(epoch));
            }
            clf.net.backward(nn::Value::of(std::move(grad)));
            opt.step(clf.net);
            epoch_loss += loss;
            ++batches;
        }

        const double val_acc = accuracy_over(clf, ds, ds.val_idx, val_fractions);
        if (log) log->epochs.push_back({epoch, epoch_loss / std::max(1, batches), val_acc});
        stopper.observe(val_acc, clf.net);
        if (stopper.should_stop()) break;
    }
    stopper.restore_best(clf.net);
    if (log) log->best_val_accuracy = stopper.best();
    return clf;
}

IntentionEstimate predict_intention(const Classifier& clf, const ObservationWindow& w) {
    if (w.samples.empty()) throw std::invalid_argument("predict_intention: empty window");
    std::vector<const ObservationWindow*> one{&w};
    nn::SeqBatch batch =
        windows_to_batch(one, clf.resample_len, clf.channel_mean, clf.channel_std);
    // forward() caches per-layer state, so share one mutable net per thread.
    nn::Value out = const_cast<nn::Network&>(clf.net).forward(nn::Value::of(std::move(batch)));
    IntentionEstimate est;
    est.probabilities = nn::softmax(out.vec).col(0);
    est.observation_fraction = w.fraction;
    return est;
}

AccuracyCurve accuracy_curve(const Classifier& clf, const Dataset& ds,
                             const std::vector<double>& fractions) {
    if (ds.test_idx.empty()) throw std::invalid_argument("accuracy_curve: empty test split");
    std::vector<std::pair<double, double>> knots;
    for (double f : fractions) {
        const double acc = accuracy_over(clf, ds, ds.test_idx, {f});
        knots.emplace_back(f, 1.0 - acc);
    }
    std::sort(knots.begin(), knots.end());
    return AccuracyCurve(std::move(knots));
}

IntentionEstimate oracle_predict(int true_label, double fraction,
                                 const AccuracyCurve& curve, int n_classes, Rng& rng) {
    if (true_label < 0 || true_label >= n_classes) {
        throw std::invalid_argument("oracle_predict: label out of range");
    }
    const double err = curve.at(fraction);

    int winner = true_label;
    if (rng.u01() < err) {
        int wrong = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_classes - 1)));
        if (wrong >= true_label) ++wrong;
        winner = wrong;
    }

    // Winner mass: beta-distributed with mean tracking the curve accuracy,
    // mapped onto (1/N, 1] so the winner always holds the argmax.
    const double floor = 1.0 / n_classes;
    const double target = std::clamp(((1.0 - err) - floor) / (1.0 - floor), 0.05, 0.98);
    const double concentration = 12.0;
    const double x = rng.beta(concentration * target, concentration * (1.0 - target));
    const double mass = floor + (1.0 - floor) * std::max(x, 1e-6);

    IntentionEstimate est;
    est.observation_fraction = fraction;
    est.probabilities = Eigen::VectorXd::Constant(n_classes, (1.0 - mass) / (n_classes - 1));
    est.probabilities[winner] = mass;
    est.probabilities /= est.probabilities.sum();
    return est;
}

void Classifier::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("classifier checkpoint: cannot open " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(n_classes);
    const std::uint32_t r = static_cast<std::uint32_t>(resample_len);
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&r), sizeof(r));
    write_vec(out, channel_mean);
    write_vec(out, channel_std);
    net.save(out);
}

Classifier Classifier::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("classifier checkpoint: cannot open " + path);
    Classifier clf;
    std::uint32_t n = 0, r = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&r), sizeof(r));
    if (!in) throw std::runtime_error("classifier checkpoint: truncated");
    clf.n_classes = static_cast<int>(n);
    clf.resample_len = static_cast<int>(r);
    clf.channel_mean = read_vec(in);
    clf.channel_std = read_vec(in);
    clf.net = nn::Network::load(in);
    return clf;
}

}  // namespace teleop
