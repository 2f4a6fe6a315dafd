#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "teleop/curves.hpp"
#include "teleop/nn/core.hpp"
#include "teleop/trajectory.hpp"

namespace teleop {

enum class PredictorKind { LSTM, CNN };

const char* predictor_kind_name(PredictorKind k);
PredictorKind predictor_kind_from_name(const std::string& name);

struct PredictorConfig {
    PredictorKind kind = PredictorKind::LSTM;
    int cells = 128;        // LSTM units / convolution filters
    int batch_size = 128;
    int max_epochs = 1000;
    int patience = 8;
    double learning_rate = 1e-3;
    int kernel_width = 5;   // CNN variant
    int window_len = 32;    // observation resample length
    int horizon_len = 32;   // predicted suffix resample length
};

// Suffix regressor for one switch fraction: consumes the observed prefix
// plus a one-hot task label (as constant channels) and emits the remaining
// trajectory on a fixed grid, later resampled to the true suffix length.
// Channels are standardized with training-split statistics.
struct Predictor {
    PredictorKind kind = PredictorKind::LSTM;
    double fraction = 0.5;
    int n_classes = 4;
    int window_len = 32;
    int horizon_len = 32;
    Eigen::VectorXd channel_mean;
    Eigen::VectorXd channel_std;
    nn::Network net;

    void save_file(const std::string& path) const;
    static Predictor load_file(const std::string& path);
};

struct PredictorTrainLog {
    std::vector<double> epoch_loss;
    std::vector<double> val_rrmse;
    double best_val_rrmse = 0.0;
    double train_rrmse = 0.0;
};

Predictor train_predictor(const Dataset& ds, const PredictorConfig& cfg, double fraction,
                          std::uint64_t seed, PredictorTrainLog* log = nullptr);

// Predicts the remaining trajectory after the window; the output length
// equals the suffix length implied by the window. Throws when the window
// leaves nothing to predict.
std::vector<Observation> predict_remaining(const Predictor& p, const ObservationWindow& w,
                                           int label);

// Relative L2 error in percent over all samples and channels:
// 100 * ||pred - truth|| / ||truth||. Undefined (throws) for all-zero truth.
double rrmse(const std::vector<Observation>& predicted,
             const std::vector<Observation>& truth);

// Mean test RRMSE of a predictor over a dataset split.
double evaluate_rrmse(const Predictor& p, const Dataset& ds, const std::vector<int>& indices);

// Share of test suffixes whose RRMSE exceeds the failure threshold, per
// switch fraction.
TrajErrorCurve traj_error_curve(const std::vector<const Predictor*>& per_fraction,
                                const Dataset& ds, double rrmse_threshold_pct);

}  // namespace teleop
