#pragma once

#include <limits>
#include <string>
#include <vector>

#include "teleop/nn/core.hpp"

namespace teleop::nn {

// Mean negative log-likelihood of the true class. Probabilities are clamped
// below at 1e-12 before the log so a confidently wrong model yields a large
// finite loss instead of inf.
double cross_entropy(const Eigen::VectorXd& probabilities, int true_class);

// Fused softmax + cross-entropy for a batch of logits (classes x batch).
// Returns the mean loss; grad receives d(loss)/d(logits).
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                             Matrix& grad);

// Mean squared error over all elements; grad receives d(loss)/d(pred).
double mse(const Matrix& pred, const Matrix& target);
double mse_with_grad(const Matrix& pred, const Matrix& target, Matrix& grad);

enum class OptimizerKind { SGD, Adam };

// SGD or Adam over a network's parameter blocks. Adam keeps first/second
// moments with bias correction.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);

    void step(Network& net);
    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return lr_; }

private:
    OptimizerKind kind_;
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Tracks the best validation metric and a snapshot of the weights; stops
// after `patience` epochs without improvement.
class EarlyStopper {
public:
    EarlyStopper(int patience, bool maximize)
        : patience_(patience),
          maximize_(maximize),
          best_(maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity()) {}

    // Returns true when the metric improved (snapshot taken).
    bool observe(double metric, Network& net) {
        const bool improved = maximize_ ? metric > best_ : metric < best_;
        if (improved) {
            best_ = metric;
            snapshot_ = net.get_flat_params();
            since_best_ = 0;
        } else {
            ++since_best_;
        }
        return improved;
    }

    bool should_stop() const { return since_best_ >= patience_; }
    double best() const { return best_; }
    void restore_best(Network& net) const {
        if (!snapshot_.empty()) net.set_flat_params(snapshot_);
    }

private:
    int patience_;
    bool maximize_;
    double best_;
    int since_best_ = 0;
    std::vector<double> snapshot_;
};

struct TrainLogEntry {
    int epoch = 0;
    double train_loss = 0.0;
    double val_metric = 0.0;
};

}  // namespace teleop::nn
