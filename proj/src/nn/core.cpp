#include "teleop/nn/core.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace teleop::nn {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr char kMagic[8] = {'T', 'E', 'L', 'E', 'N', 'N', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading u32");
    return v;
}
void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& in) {
    const auto n = read_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("checkpoint: truncated while reading string");
    return s;
}
void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
void read_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated while reading parameters");
}

double uniform_sym(Rng& rng, double limit) { return rng.uniform(-limit, limit); }

void fill_uniform(Matrix& m, Rng& rng, double limit) {
    double* p = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = uniform_sym(rng, limit);
}

ParamView view(Matrix& value, Matrix& grad) {
    return {value.data(), grad.data(), static_cast<std::size_t>(value.size())};
}
ParamView view(Eigen::VectorXd& value, Eigen::VectorXd& grad) {
    return {value.data(), grad.data(), static_cast<std::size_t>(value.size())};
}

}  // namespace

double leaky_relu_slope() { return kLeakySlope; }

Activation activation_from_name(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "relu") return Activation::ReLU;
    if (name == "leaky_relu") return Activation::LeakyReLU;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation: " + name);
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::ReLU: return "relu";
        case Activation::LeakyReLU: return "leaky_relu";
        case Activation::Tanh: return "tanh";
    }
    return "linear";
}

double apply_activation(Activation a, double x) {
    switch (a) {
        case Activation::Linear: return x;
        case Activation::ReLU: return x > 0.0 ? x : 0.0;
        case Activation::LeakyReLU: return x > 0.0 ? x : kLeakySlope * x;
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

double activation_grad(Activation a, double pre_act, double /*post_act*/) {
    switch (a) {
        case Activation::Linear: return 1.0;
        case Activation::ReLU: return pre_act > 0.0 ? 1.0 : 0.0;
        case Activation::LeakyReLU: return pre_act > 0.0 ? 1.0 : kLeakySlope;
        case Activation::Tanh: {
            const double t = std::tanh(pre_act);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

void activation_inplace(Activation a, Matrix& m) {
    if (a == Activation::Linear) return;
    double* p = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = apply_activation(a, p[i]);
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        Eigen::VectorXd e = (logits.col(c).array() - m).exp();
        out.col(c) = e / e.sum();
    }
    return out;
}

// ---------------------------------------------------------------- Dense

DenseLayer::DenseLayer(int in_features, int out_features, Activation act)
    : weights(Matrix::Zero(out_features, in_features)),
      bias(Eigen::VectorXd::Zero(out_features)),
      activation(act),
      w_grad_(Matrix::Zero(out_features, in_features)),
      b_grad_(Eigen::VectorXd::Zero(out_features)) {}

void DenseLayer::init(Rng& rng) {
    const int fan_in = static_cast<int>(weights.cols());
    const int fan_out = static_cast<int>(weights.rows());
    const bool relu_family =
        activation == Activation::ReLU || activation == Activation::LeakyReLU;
    const double limit = relu_family ? std::sqrt(6.0 / fan_in)
                                     : std::sqrt(6.0 / (fan_in + fan_out));
    fill_uniform(weights, rng, limit);
    bias.setZero();
}

Value DenseLayer::forward(const Value& in) {
    if (in.is_seq) throw std::invalid_argument("dense: expected feature batch");
    if (in.vec.rows() != weights.cols()) {
        throw std::invalid_argument("dense: feature count mismatch");
    }
    input_ = in.vec;
    pre_act_ = weights * input_;
    pre_act_.colwise() += bias;
    Matrix out = pre_act_;
    activation_inplace(activation, out);
    return Value::of(std::move(out));
}

Value DenseLayer::backward(const Value& grad_out) {
    Matrix dpre = grad_out.vec;
    if (activation != Activation::Linear) {
        for (Eigen::Index i = 0; i < dpre.size(); ++i) {
            dpre.data()[i] *= activation_grad(activation, pre_act_.data()[i], 0.0);
        }
    }
    w_grad_.noalias() += dpre * input_.transpose();
    b_grad_ += dpre.rowwise().sum();
    Matrix dx = weights.transpose() * dpre;
    return Value::of(std::move(dx));
}

std::vector<ParamView> DenseLayer::params() {
    return {view(weights, w_grad_), view(bias, b_grad_)};
}

void DenseLayer::save(std::ostream& out) const {
    write_string(out, "dense");
    write_u32(out, static_cast<std::uint32_t>(weights.cols()));
    write_u32(out, static_cast<std::uint32_t>(weights.rows()));
    write_string(out, activation_name(activation));
    write_doubles(out, weights.data(), static_cast<std::size_t>(weights.size()));
    write_doubles(out, bias.data(), static_cast<std::size_t>(bias.size()));
}

std::unique_ptr<DenseLayer> DenseLayer::load(std::istream& in) {
    const int in_f = static_cast<int>(read_u32(in));
    const int out_f = static_cast<int>(read_u32(in));
    const Activation act = activation_from_name(read_string(in));
    auto layer = std::make_unique<DenseLayer>(in_f, out_f, act);
    read_doubles(in, layer->weights.data(), static_cast<std::size_t>(layer->weights.size()));
    read_doubles(in, layer->bias.data(), static_cast<std::size_t>(layer->bias.size()));
    return layer;
}

// ---------------------------------------------------------------- Conv1D

Conv1DLayer::Conv1DLayer(int in_ch, int out_ch, int k, Activation act)
    : in_channels(in_ch),
      out_channels(out_ch),
      kernel_width(k),
      weights(Matrix::Zero(out_ch, in_ch * k)),
      bias(Eigen::VectorXd::Zero(out_ch)),
      activation(act),
      w_grad_(Matrix::Zero(out_ch, in_ch * k)),
      b_grad_(Eigen::VectorXd::Zero(out_ch)) {
    if (k < 1) throw std::invalid_argument("conv1d: kernel width must be >= 1");
}

void Conv1DLayer::init(Rng& rng) {
    const int fan_in = in_channels * kernel_width;
    const int fan_out = out_channels * kernel_width;
    const bool relu_family =
        activation == Activation::ReLU || activation == Activation::LeakyReLU;
    const double limit = relu_family ? std::sqrt(6.0 / fan_in)
                                     : std::sqrt(6.0 / (fan_in + fan_out));
    fill_uniform(weights, rng, limit);
    bias.setZero();
}

Value Conv1DLayer::forward(const Value& in) {
    if (!in.is_seq) throw std::invalid_argument("conv1d: expected sequence batch");
    const SeqBatch& x = in.seq;
    if (x.channels != in_channels) throw std::invalid_argument("conv1d: channel mismatch");
    in_time_ = x.time;
    in_batch_ = x.batch;
    const int pad = (kernel_width - 1) / 2;

    // im2col with implicit zero padding ("same" output length).
    cols_ = Matrix::Zero(static_cast<Eigen::Index>(in_channels) * kernel_width,
                         static_cast<Eigen::Index>(x.time) * x.batch);
    for (int b = 0; b < x.batch; ++b) {
        for (int t = 0; t < x.time; ++t) {
            const Eigen::Index dst = x.col(b, t);
            for (int j = 0; j < kernel_width; ++j) {
                const int src_t = t - pad + j;
                if (src_t < 0 || src_t >= x.time) continue;
                cols_.block(static_cast<Eigen::Index>(j) * in_channels, dst, in_channels, 1) =
                    x.data.col(x.col(b, src_t));
            }
        }
    }

    pre_act_.noalias() = weights * cols_;
    pre_act_.colwise() += bias;

    SeqBatch out(out_channels, x.time, x.batch);
    out.data = pre_act_;
    activation_inplace(activation, out.data);
    return Value::of(std::move(out));
}

Value Conv1DLayer::backward(const Value& grad_out) {
    Matrix dpre = grad_out.seq.data;
    if (activation != Activation::Linear) {
        for (Eigen::Index i = 0; i < dpre.size(); ++i) {
            dpre.data()[i] *= activation_grad(activation, pre_act_.data()[i], 0.0);
        }
    }
    w_grad_.noalias() += dpre * cols_.transpose();
    b_grad_ += dpre.rowwise().sum();

    const Matrix dcols = weights.transpose() * dpre;
    const int pad = (kernel_width - 1) / 2;

    SeqBatch dx(in_channels, in_time_, in_batch_);
    for (int b = 0; b < in_batch_; ++b) {
        for (int t = 0; t < in_time_; ++t) {
            const Eigen::Index src = dx.col(b, t);
            for (int j = 0; j < kernel_width; ++j) {
                const int dst_t = t - pad + j;
                if (dst_t < 0 || dst_t >= in_time_) continue;
                dx.data.col(dx.col(b, dst_t)) +=
                    dcols.block(static_cast<Eigen::Index>(j) * in_channels, src, in_channels, 1);
            }
        }
    }
    return Value::of(std::move(dx));
}

std::vector<ParamView> Conv1DLayer::params() {
    return {view(weights, w_grad_), view(bias, b_grad_)};
}

void Conv1DLayer::save(std::ostream& out) const {
    write_string(out, "conv1d");
    write_u32(out, static_cast<std::uint32_t>(in_channels));
    write_u32(out, static_cast<std::uint32_t>(out_channels));
    write_u32(out, static_cast<std::uint32_t>(kernel_width));
    write_string(out, activation_name(activation));
    write_doubles(out, weights.data(), static_cast<std::size_t>(weights.size()));
    write_doubles(out, bias.data(), static_cast<std::size_t>(bias.size()));
}

std::unique_ptr<Conv1DLayer> Conv1DLayer::load(std::istream& in) {
    const int in_ch = static_cast<int>(read_u32(in));
    const int out_ch = static_cast<int>(read_u32(in));
    const int k = static_cast<int>(read_u32(in));
    const Activation act = activation_from_name(read_string(in));
    auto layer = std::make_unique<Conv1DLayer>(in_ch, out_ch, k, act);
    read_doubles(in, layer->weights.data(), static_cast<std::size_t>(layer->weights.size()));
    read_doubles(in, layer->bias.data(), static_cast<std::size_t>(layer->bias.size()));
    return layer;
}

// ---------------------------------------------------------------- LSTM

LSTMLayer::LSTMLayer(int in_f, int h)
    : in_features(in_f),
      hidden(h),
      w_input(Matrix::Zero(4 * h, in_f)),
      w_recurrent(Matrix::Zero(4 * h, h)),
      bias(Eigen::VectorXd::Zero(4 * h)),
      wi_grad_(Matrix::Zero(4 * h, in_f)),
      wr_grad_(Matrix::Zero(4 * h, h)),
      b_grad_(Eigen::VectorXd::Zero(4 * h)) {}

void LSTMLayer::init(Rng& rng) {
    fill_uniform(w_input, rng, std::sqrt(6.0 / (in_features + hidden)));
    fill_uniform(w_recurrent, rng, std::sqrt(6.0 / (2 * hidden)));
    bias.setZero();
    bias.segment(hidden, hidden).setConstant(1.0);  // forget gate starts open
}

Value LSTMLayer::forward(const Value& in) {
    if (!in.is_seq) throw std::invalid_argument("lstm: expected sequence batch");
    const SeqBatch& x = in.seq;
    if (x.channels != in_features) throw std::invalid_argument("lstm: feature mismatch");
    time_ = x.time;
    batch_ = x.batch;
    input_cache_ = x.data;

    const int h = hidden;
    // Input projection for every step at once.
    const Matrix zx = w_input * x.data;  // 4H x (T*B)

    gates_.assign(time_, Matrix());
    cells_.assign(time_, Matrix());
    hiddens_.assign(time_, Matrix());

    Matrix h_prev = Matrix::Zero(h, batch_);
    Matrix c_prev = Matrix::Zero(h, batch_);
    Matrix z(4 * h, batch_);

    for (int t = 0; t < time_; ++t) {
        for (int b = 0; b < batch_; ++b) z.col(b) = zx.col(x.col(b, t));
        z.noalias() += w_recurrent * h_prev;
        z.colwise() += bias;

        Matrix gate(4 * h, batch_);
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            for (int r = 0; r < 4 * h; ++r) {
                const double v = z(r, c);
                gate(r, c) = (r >= 2 * h && r < 3 * h) ? std::tanh(v)
                                                       : 1.0 / (1.0 + std::exp(-v));
            }
        }

        Matrix c_new = gate.middleRows(h, h).cwiseProduct(c_prev) +
                       gate.middleRows(0, h).cwiseProduct(gate.middleRows(2 * h, h));
        Matrix h_new = gate.middleRows(3 * h, h).cwiseProduct(
            c_new.unaryExpr([](double v) { return std::tanh(v); }));

        gates_[t] = std::move(gate);
        cells_[t] = c_new;
        hiddens_[t] = h_new;
        c_prev = std::move(c_new);
        h_prev = hiddens_[t];
    }
    return Value::of(Matrix(h_prev));
}

Value LSTMLayer::backward(const Value& grad_out) {
    const int h = hidden;
    Matrix dh = grad_out.vec;  // gradient on the final hidden state
    Matrix dc = Matrix::Zero(h, batch_);
    SeqBatch dx(in_features, time_, batch_);

    for (int t = time_ - 1; t >= 0; --t) {
        const Matrix& gate = gates_[t];
        const auto gi = gate.middleRows(0, h);
        const auto gf = gate.middleRows(h, h);
        const auto gg = gate.middleRows(2 * h, h);
        const auto go = gate.middleRows(3 * h, h);
        const Matrix tc = cells_[t].unaryExpr([](double v) { return std::tanh(v); });
        const Matrix c_prev = (t == 0) ? Matrix::Zero(h, batch_) : cells_[t - 1];

        const Matrix d_o = dh.cwiseProduct(tc);
        dc += dh.cwiseProduct(go).cwiseProduct(
            (1.0 - tc.array().square()).matrix());

        const Matrix d_i = dc.cwiseProduct(gg);
        const Matrix d_g = dc.cwiseProduct(gi);
        const Matrix d_f = dc.cwiseProduct(c_prev);
        const Matrix dc_prev = dc.cwiseProduct(gf);

        Matrix dz(4 * h, batch_);
        dz.middleRows(0, h) = d_i.cwiseProduct(gi.cwiseProduct((1.0 - gi.array()).matrix()));
        dz.middleRows(h, h) = d_f.cwiseProduct(gf.cwiseProduct((1.0 - gf.array()).matrix()));
        dz.middleRows(2 * h, h) = d_g.cwiseProduct((1.0 - gg.array().square()).matrix());
        dz.middleRows(3 * h, h) = d_o.cwiseProduct(go.cwiseProduct((1.0 - go.array()).matrix()));

        Matrix x_t(in_features, batch_);
        for (int b = 0; b < batch_; ++b) x_t.col(b) = input_cache_.col(dx.col(b, t));
        wi_grad_.noalias() += dz * x_t.transpose();
        const Matrix h_prev =
            (t == 0) ? Matrix::Zero(h, batch_) : hiddens_[t - 1];
        wr_grad_.noalias() += dz * h_prev.transpose();
        b_grad_ += dz.rowwise().sum();

        const Matrix dxt = w_input.transpose() * dz;
        for (int b = 0; b < batch_; ++b) dx.data.col(dx.col(b, t)) = dxt.col(b);

        dh = w_recurrent.transpose() * dz;
        dc = dc_prev;
    }
    return Value::of(std::move(dx));
}

std::vector<ParamView> LSTMLayer::params() {
    return {view(w_input, wi_grad_), view(w_recurrent, wr_grad_), view(bias, b_grad_)};
}

void LSTMLayer::save(std::ostream& out) const {
    write_string(out, "lstm");
    write_u32(out, static_cast<std::uint32_t>(in_features));
    write_u32(out, static_cast<std::uint32_t>(hidden));
    write_doubles(out, w_input.data(), static_cast<std::size_t>(w_input.size()));
    write_doubles(out, w_recurrent.data(), static_cast<std::size_t>(w_recurrent.size()));
    write_doubles(out, bias.data(), static_cast<std::size_t>(bias.size()));
}

std::unique_ptr<LSTMLayer> LSTMLayer::load(std::istream& in) {
    const int in_f = static_cast<int>(read_u32(in));
    const int h = static_cast<int>(read_u32(in));
    auto layer = std::make_unique<LSTMLayer>(in_f, h);
    read_doubles(in, layer->w_input.data(), static_cast<std::size_t>(layer->w_input.size()));
    read_doubles(in, layer->w_recurrent.data(),
                 static_cast<std::size_t>(layer->w_recurrent.size()));
    read_doubles(in, layer->bias.data(), static_cast<std::size_t>(layer->bias.size()));
    return layer;
}

// ---------------------------------------------------------------- Pooling

Value GlobalAvgPoolLayer::forward(const Value& in) {
    if (!in.is_seq) throw std::invalid_argument("gap: expected sequence batch");
    const SeqBatch& x = in.seq;
    if (x.time < 1) throw std::invalid_argument("gap: empty sequence");
    time_ = x.time;
    batch_ = x.batch;
    channels_ = x.channels;

    Matrix out = Matrix::Zero(x.channels, x.batch);
    for (int b = 0; b < x.batch; ++b) {
        for (int t = 0; t < x.time; ++t) out.col(b) += x.data.col(x.col(b, t));
        out.col(b) /= static_cast<double>(x.time);
    }
    return Value::of(std::move(out));
}

Value GlobalAvgPoolLayer::backward(const Value& grad_out) {
    SeqBatch dx(channels_, time_, batch_);
    const double scale = 1.0 / static_cast<double>(time_);
    for (int b = 0; b < batch_; ++b) {
        for (int t = 0; t < time_; ++t) dx.data.col(dx.col(b, t)) = grad_out.vec.col(b) * scale;
    }
    return Value::of(std::move(dx));
}

void GlobalAvgPoolLayer::save(std::ostream& out) const { write_string(out, "gap"); }

std::unique_ptr<GlobalAvgPoolLayer> GlobalAvgPoolLayer::load(std::istream&) {
    return std::make_unique<GlobalAvgPoolLayer>();
}

// ---------------------------------------------------------------- Network

void Network::init(Rng& rng) {
    for (auto& layer : layers_) layer->init(rng);
}

Value Network::forward(Value in) {
    for (auto& layer : layers_) in = layer->forward(in);
    return in;
}

void Network::backward(Value grad_out) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        grad_out = (*it)->backward(grad_out);
    }
}

void Network::zero_grads() {
    for (auto& layer : layers_) {
        for (ParamView p : layer->params()) std::memset(p.grad, 0, p.size * sizeof(double));
    }
}

std::vector<ParamView> Network::params() {
    std::vector<ParamView> all;
    for (auto& layer : layers_) {
        for (ParamView p : layer->params()) all.push_back(p);
    }
    return all;
}

std::size_t Network::param_count() {
    std::size_t n = 0;
    for (ParamView p : params()) n += p.size;
    return n;
}

std::vector<double> Network::get_flat_params() {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (ParamView p : params()) flat.insert(flat.end(), p.value, p.value + p.size);
    return flat;
}

void Network::set_flat_params(const std::vector<double>& flat) {
    std::size_t off = 0;
    for (ParamView p : params()) {
        if (off + p.size > flat.size()) {
            throw std::invalid_argument("set_flat_params: parameter shape mismatch");
        }
        std::memcpy(p.value, flat.data() + off, p.size * sizeof(double));
        off += p.size;
    }
    if (off != flat.size()) {
        throw std::invalid_argument("set_flat_params: parameter shape mismatch");
    }
}

void Network::save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(layers_.size()));
    for (const auto& layer : layers_) layer->save(out);
}

Network Network::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    const auto version = read_u32(in);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto n_layers = read_u32(in);
    Network net;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::string kind = read_string(in);
        if (kind == "dense") net.add(DenseLayer::load(in));
        else if (kind == "conv1d") net.add(Conv1DLayer::load(in));
        else if (kind == "lstm") net.add(LSTMLayer::load(in));
        else if (kind == "gap") net.add(GlobalAvgPoolLayer::load(in));
        else throw std::runtime_error("checkpoint: unknown layer kind " + kind);
    }
    return net;
}

void Network::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
    save(out);
}

Network Network::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    return load(in);
}

}  // namespace teleop::nn
