#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "teleop/curves.hpp"
#include "teleop/nn/core.hpp"
#include "teleop/nn/train.hpp"
#include "teleop/trajectory.hpp"

namespace teleop {

// Probability vector over the task classes produced at a given observation
// fraction.
struct IntentionEstimate {
    Eigen::VectorXd probabilities;
    double observation_fraction = 0.0;

    int argmax() const {
        Eigen::Index idx = 0;
        probabilities.maxCoeff(&idx);
        return static_cast<int>(idx);
    }
};

struct ClassifierConfig {
    int conv_layers = 2;
    int conv_channels = 128;
    int kernel_width = 5;
    std::vector<int> dense_widths = {64};
    int batch_size = 64;
    int patience = 10;
    int max_epochs = 80;
    double learning_rate = 1e-3;
    int resample_len = 48;      // windows are resampled to this many steps
    double min_fraction = 0.2;  // training windows draw fractions in [min, 1]
};

// Task classifier over observation windows: stacked 1-D convolutions,
// global average pooling and a dense head. Variable-length windows are
// resampled to a fixed grid and standardized with training-split statistics.
struct Classifier {
    nn::Network net;
    int n_classes = 4;
    int resample_len = 48;
    Eigen::VectorXd channel_mean;  // 5 entries
    Eigen::VectorXd channel_std;

    void save_file(const std::string& path) const;
    static Classifier load_file(const std::string& path);
};

struct ClassifierTrainLog {
    std::vector<nn::TrainLogEntry> epochs;
    double best_val_accuracy = 0.0;
};

Classifier train_classifier(const Dataset& ds, const ClassifierConfig& cfg,
                            std::uint64_t seed, ClassifierTrainLog* log = nullptr);

IntentionEstimate predict_intention(const Classifier& clf, const ObservationWindow& w);

// Top-1 error of the classifier over the test split at each observation
// fraction; measured, not smoothed.
AccuracyCurve accuracy_curve(const Classifier& clf, const Dataset& ds,
                             const std::vector<double>& fractions);

// Stochastic stand-in for a trained classifier: the argmax is correct with
// probability 1 - curve(fraction), otherwise a uniformly random wrong class;
// the winner's probability mass follows a beta profile whose mean tracks the
// curve, and the remainder is spread uniformly.
IntentionEstimate oracle_predict(int true_label, double fraction,
                                 const AccuracyCurve& curve, int n_classes, Rng& rng);

// Shared helpers for the sequence models.
nn::SeqBatch windows_to_batch(const std::vector<const ObservationWindow*>& windows,
                              int resample_len, const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& stddev);
void channel_stats(const Dataset& ds, const std::vector<int>& indices,
                   Eigen::VectorXd& mean, Eigen::VectorXd& stddev);

}  // namespace teleop
