#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "teleop/rng.hpp"

namespace teleop::nn {

using Matrix = Eigen::MatrixXd;

// Batched multichannel sequence. Column (b * time + t) of data holds the
// channel vector of sample b at step t.
struct SeqBatch {
    int channels = 0;
    int time = 0;
    int batch = 0;
    Matrix data;

    SeqBatch() = default;
    SeqBatch(int c, int t, int b) : channels(c), time(t), batch(b) {
        data = Matrix::Zero(c, static_cast<Eigen::Index>(t) * b);
    }
    Eigen::Index col(int b, int t) const { return static_cast<Eigen::Index>(b) * time + t; }
};

// A layer input/output: either a sequence batch or a plain feature batch
// (features x batch).
struct Value {
    bool is_seq = false;
    SeqBatch seq;
    Matrix vec;

    static Value of(SeqBatch s) {
        Value v;
        v.is_seq = true;
        v.seq = std::move(s);
        return v;
    }
    static Value of(Matrix m) {
        Value v;
        v.vec = std::move(m);
        return v;
    }
};

// Non-owning view of one parameter block and its gradient accumulator.
struct ParamView {
    double* value = nullptr;
    double* grad = nullptr;
    std::size_t size = 0;
};

enum class Activation { Linear, ReLU, LeakyReLU, Tanh };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

double leaky_relu_slope();

class Layer {
public:
    virtual ~Layer() = default;
    virtual Value forward(const Value& in) = 0;
    virtual Value backward(const Value& grad_out) = 0;
    virtual std::vector<ParamView> params() = 0;
    virtual std::string kind() const = 0;
    virtual void init(Rng& rng) = 0;
    virtual void save(std::ostream& out) const = 0;
};

// Fully connected layer on feature batches.
class DenseLayer : public Layer {
public:
    DenseLayer(int in_features, int out_features, Activation act);

    Value forward(const Value& in) override;
    Value backward(const Value& grad_out) override;
    std::vector<ParamView> params() override;
    std::string kind() const override { return "dense"; }
    void init(Rng& rng) override;
    void save(std::ostream& out) const override;
    static std::unique_ptr<DenseLayer> load(std::istream& in);

    Matrix weights;  // out x in
    Eigen::VectorXd bias;
    Activation activation;

private:
    Matrix w_grad_;
    Eigen::VectorXd b_grad_;
    Matrix input_, pre_act_;
};

// 1-D convolution over time, "same" zero padding, stride 1.
class Conv1DLayer : public Layer {
public:
    Conv1DLayer(int in_channels, int out_channels, int kernel_width, Activation act);

    Value forward(const Value& in) override;
    Value backward(const Value& grad_out) override;
    std::vector<ParamView> params() override;
    std::string kind() const override { return "conv1d"; }
    void init(Rng& rng) override;
    void save(std::ostream& out) const override;
    static std::unique_ptr<Conv1DLayer> load(std::istream& in);

    int in_channels, out_channels, kernel_width;
    Matrix weights;  // out_channels x (in_channels * kernel_width)
    Eigen::VectorXd bias;
    Activation activation;

private:
    Matrix w_grad_;
    Eigen::VectorXd b_grad_;
    Matrix cols_, pre_act_;
    int in_time_ = 0, in_batch_ = 0;
};

// Single LSTM layer; consumes a sequence batch and emits the final hidden
// state. Gate layout in the stacked weights is [input, forget, cell, output].
class LSTMLayer : public Layer {
public:
    LSTMLayer(int in_features, int hidden);

    Value forward(const Value& in) override;
    Value backward(const Value& grad_out) override;
    std::vector<ParamView> params() override;
    std::string kind() const override { return "lstm"; }
    void init(Rng& rng) override;
    void save(std::ostream& out) const override;
    static std::unique_ptr<LSTMLayer> load(std::istream& in);

    int in_features, hidden;
    Matrix w_input;      // 4H x in
    Matrix w_recurrent;  // 4H x H
    Eigen::VectorXd bias;  // 4H

private:
    Matrix wi_grad_, wr_grad_;
    Eigen::VectorXd b_grad_;
    // Per-step caches for backpropagation through time.
    std::vector<Matrix> gates_, cells_, hiddens_;
    Matrix input_cache_;
    int time_ = 0, batch_ = 0;
};

// Per-channel mean over time; sequence batch -> feature batch.
class GlobalAvgPoolLayer : public Layer {
public:
    Value forward(const Value& in) override;
    Value backward(const Value& grad_out) override;
    std::vector<ParamView> params() override { return {}; }
    std::string kind() const override { return "gap"; }
    void init(Rng&) override {}
    void save(std::ostream& out) const override;
    static std::unique_ptr<GlobalAvgPoolLayer> load(std::istream& in);

private:
    int time_ = 0, batch_ = 0, channels_ = 0;
};

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    void init(Rng& rng);

    Value forward(Value in);
    // Propagates the loss gradient and accumulates parameter gradients.
    void backward(Value grad_out);
    void zero_grads();

    std::vector<ParamView> params();
    std::size_t param_count();

    // Flat copies of all parameters, used for snapshots and target syncing.
    std::vector<double> get_flat_params();
    void set_flat_params(const std::vector<double>& flat);

    void save(std::ostream& out) const;
    static Network load(std::istream& in);
    void save_file(const std::string& path) const;
    static Network load_file(const std::string& path);

    std::size_t layer_count() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Elementwise activations, exposed directly for reuse and tests.
double apply_activation(Activation a, double x);
double activation_grad(Activation a, double pre_act, double post_act);
void activation_inplace(Activation a, Matrix& m);

// Numerically safe softmax over each column.
Matrix softmax(const Matrix& logits);

}  // namespace teleop::nn
