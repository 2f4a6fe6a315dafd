#include "teleop/nn/train.hpp"

#include <cmath>
#include <stdexcept>

namespace teleop::nn {

namespace {
constexpr double kLogFloor = 1e-12;
}

double cross_entropy(const Eigen::VectorXd& probabilities, int true_class) {
    if (true_class < 0 || true_class >= probabilities.size()) {
        throw std::invalid_argument("cross_entropy: label out of range");
    }
    const double p = std::max(probabilities[true_class], kLogFloor);
    return -std::log(p);
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                             Matrix& grad) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) {
        throw std::invalid_argument("softmax_cross_entropy: batch size mismatch");
    }
    const Matrix probs = softmax(logits);
    const double inv_batch = 1.0 / static_cast<double>(logits.cols());
    grad = probs * inv_batch;
    double loss = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const int y = labels[static_cast<std::size_t>(c)];
        if (y < 0 || y >= logits.rows()) {
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        }
        loss += -std::log(std::max(probs(y, c), kLogFloor));
        grad(y, c) -= inv_batch;
    }
    return loss * inv_batch;
}

double mse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw std::invalid_argument("mse: shape mismatch");
    }
    return (pred - target).array().square().mean();
}

double mse_with_grad(const Matrix& pred, const Matrix& target, Matrix& grad) {
    const double loss = mse(pred, target);
    grad = 2.0 * (pred - target) / static_cast<double>(pred.size());
    return loss;
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {
    if (learning_rate <= 0.0) throw std::invalid_argument("Optimizer: learning rate must be > 0");
}

void Optimizer::step(Network& net) {
    auto params = net.params();
    for (const ParamView& p : params) {
        for (std::size_t i = 0; i < p.size; ++i) {
            if (!std::isfinite(p.grad[i])) {
                throw std::runtime_error("Optimizer: non-finite gradient; training step aborted");
            }
        }
    }
    if (kind_ == OptimizerKind::SGD) {
        for (const ParamView& p : params) {
            for (std::size_t i = 0; i < p.size; ++i) p.value[i] -= lr_ * p.grad[i];
        }
        return;
    }
    if (m_.size() != params.size()) {
        m_.assign(params.size(), {});
        v_.assign(params.size(), {});
        for (std::size_t k = 0; k < params.size(); ++k) {
            m_[k].assign(params[k].size, 0.0);
            v_[k].assign(params[k].size, 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const ParamView& p = params[k];
        for (std::size_t i = 0; i < p.size; ++i) {
            const double g = p.grad[i];
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
            const double m_hat = m_[k][i] / bc1;
            const double v_hat = v_[k][i] / bc2;
            p.value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

}  // namespace teleop::nn
