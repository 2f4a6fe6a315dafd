#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <vector>

#include "teleop/nn/core.hpp"
#include "teleop/nn/train.hpp"

using namespace teleop;
using namespace teleop::nn;

namespace {

SeqBatch random_seq(int c, int t, int b, Rng& rng) {
    SeqBatch s(c, t, b);
    for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data.data()[i] = rng.normal();
    return s;
}

Matrix random_vec(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

// Maximum relative error between analytic gradients and central finite
// differences of the given loss over every parameter of the network.
double max_gradient_error(Network& net, const std::function<double()>& loss_only,
                          const std::function<double(Matrix&)>& loss_with_head_grad,
                          const Value& input) {
    net.zero_grads();
    Matrix head_grad;
    loss_with_head_grad(head_grad);

    // Collect analytic gradients.
    std::vector<double> analytic;
    for (ParamView p : net.params()) {
        for (std::size_t i = 0; i < p.size; ++i) analytic.push_back(p.grad[i]);
    }

    const double h = 1e-5;
    double worst = 0.0;
    std::size_t flat = 0;
    for (ParamView p : net.params()) {
        for (std::size_t i = 0; i < p.size; ++i, ++flat) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double up = loss_only();
            p.value[i] = saved - h;
            const double down = loss_only();
            p.value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[flat];
            const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
            worst = std::max(worst, err);
        }
    }
    (void)input;
    return worst;
}

}  // namespace

TEST_CASE("activation values") {
    CHECK(apply_activation(Activation::LeakyReLU, -1.0) == doctest::Approx(-0.01));
    CHECK(apply_activation(Activation::LeakyReLU, 2.0) == doctest::Approx(2.0));
    CHECK(apply_activation(Activation::ReLU, -3.0) == doctest::Approx(0.0));
    CHECK(apply_activation(Activation::Tanh, 0.5) == doctest::Approx(std::tanh(0.5)));
}

TEST_CASE("softmax is a probability vector for any finite input") {
    Matrix logits(4, 1);
    logits << 1.0, 1.0, 1.0, 1.0;
    Matrix p = softmax(logits);
    for (int i = 0; i < 4; ++i) CHECK(p(i, 0) == doctest::Approx(0.25));

    Matrix two(2, 1);
    two << std::log(2.0), 0.0;
    p = softmax(two);
    CHECK(p(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix big = random_vec(6, 3, rng) * 1e4;  // overflow-prone scales
        p = softmax(big);
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            CHECK(p.col(c).sum() == doctest::Approx(1.0).epsilon(1e-9));
            for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(p(r, c) >= 0.0);
        }
    }
}

TEST_CASE("cross entropy") {
    Eigen::VectorXd onehot(4);
    onehot << 0.0, 1.0, 0.0, 0.0;
    CHECK(cross_entropy(onehot, 1) == doctest::Approx(0.0));

    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(4, 0.25);
    CHECK(cross_entropy(uniform, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // Zero probability at the true class stays finite via the 1e-12 floor.
    CHECK(cross_entropy(onehot, 0) == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(onehot, 7), std::invalid_argument);
}

TEST_CASE("mse basics") {
    Rng rng(6);
    Matrix x = random_vec(3, 4, rng);
    CHECK(mse(x, x) == doctest::Approx(0.0));
    Matrix y = x;
    y(0, 0) += 2.0;
    CHECK(mse(x, y) == doctest::Approx(4.0 / 12.0));
}

TEST_CASE("global average pooling") {
    SeqBatch s(2, 3, 1);
    s.data(0, 0) = 1.0; s.data(0, 1) = 2.0; s.data(0, 2) = 3.0;
    s.data(1, 0) = 5.0; s.data(1, 1) = 5.0; s.data(1, 2) = 5.0;
    GlobalAvgPoolLayer gap;
    Value out = gap.forward(Value::of(s));
    CHECK(out.vec(0, 0) == doctest::Approx(2.0));
    CHECK(out.vec(1, 0) == doctest::Approx(5.0));

    // Permutation over time does not change the mean.
    SeqBatch perm(2, 3, 1);
    perm.data(0, 0) = 3.0; perm.data(0, 1) = 1.0; perm.data(0, 2) = 2.0;
    perm.data(1, 0) = 5.0; perm.data(1, 1) = 5.0; perm.data(1, 2) = 5.0;
    Value out2 = gap.forward(Value::of(perm));
    CHECK(out2.vec(0, 0) == doctest::Approx(out.vec(0, 0)));
}

TEST_CASE("conv1d identity and constant kernels") {
    Rng rng(7);
    SeqBatch in = random_seq(1, 6, 2, rng);

    Conv1DLayer identity(1, 1, 1, Activation::Linear);
    identity.weights(0, 0) = 1.0;
    identity.bias.setZero();
    Value out = identity.forward(Value::of(in));
    for (Eigen::Index i = 0; i < in.data.size(); ++i) {
        CHECK(out.seq.data.data()[i] == doctest::Approx(in.data.data()[i]));
    }

    Conv1DLayer constant(1, 1, 3, Activation::Linear);
    constant.weights.setZero();
    constant.bias.setConstant(2.5);
    out = constant.forward(Value::of(in));
    for (Eigen::Index i = 0; i < out.seq.data.size(); ++i) {
        CHECK(out.seq.data.data()[i] == doctest::Approx(2.5));
    }
}

TEST_CASE("conv1d width-3 averaging kernel on a ramp") {
    SeqBatch ramp(1, 5, 1);
    for (int t = 0; t < 5; ++t) ramp.data(0, t) = t;

    Conv1DLayer avg(1, 1, 3, Activation::Linear);
    avg.weights.setConstant(1.0 / 3.0);
    avg.bias.setZero();
    Value out = avg.forward(Value::of(ramp));

    // Hand-convolved with zero padding: [1/3, 1, 2, 3, 7/3].
    CHECK(out.seq.data(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(out.seq.data(0, 1) == doctest::Approx(1.0));
    CHECK(out.seq.data(0, 2) == doctest::Approx(2.0));
    CHECK(out.seq.data(0, 3) == doctest::Approx(3.0));
    CHECK(out.seq.data(0, 4) == doctest::Approx(7.0 / 3.0));
}

TEST_CASE("conv1d rejects channel mismatch") {
    Rng rng(8);
    SeqBatch in = random_seq(3, 6, 1, rng);
    Conv1DLayer conv(2, 4, 3, Activation::ReLU);
    CHECK_THROWS_AS(conv.forward(Value::of(in)), std::invalid_argument);
}

TEST_CASE("gradient check: dense stack with softmax cross-entropy") {
    Rng rng(11);
    Network net;
    net.add(std::make_unique<DenseLayer>(3, 5, Activation::Tanh));
    net.add(std::make_unique<DenseLayer>(5, 4, Activation::LeakyReLU));
    net.add(std::make_unique<DenseLayer>(4, 3, Activation::Linear));
    net.init(rng);

    Matrix input = random_vec(3, 4, rng);
    const std::vector<int> labels{0, 2, 1, 2};

    auto loss_only = [&]() {
        Value out = net.forward(Value::of(Matrix(input)));
        Matrix g;
        return softmax_cross_entropy(out.vec, labels, g);
    };
    auto loss_with_grad = [&](Matrix& head_grad) {
        Value out = net.forward(Value::of(Matrix(input)));
        const double loss = softmax_cross_entropy(out.vec, labels, head_grad);
        net.backward(Value::of(Matrix(head_grad)));
        return loss;
    };
    CHECK(max_gradient_error(net, loss_only, loss_with_grad, Value::of(input)) < 1e-4);
}

TEST_CASE("gradient check: conv + pool + dense with mse") {
    Rng rng(12);
    Network net;
    net.add(std::make_unique<Conv1DLayer>(2, 3, 3, Activation::LeakyReLU));
    net.add(std::make_unique<Conv1DLayer>(3, 3, 3, Activation::Tanh));
    net.add(std::make_unique<GlobalAvgPoolLayer>());
    net.add(std::make_unique<DenseLayer>(3, 2, Activation::Linear));
    net.init(rng);

    SeqBatch input = random_seq(2, 5, 3, rng);
    Matrix target = random_vec(2, 3, rng);

    auto loss_only = [&]() {
        Value out = net.forward(Value::of(SeqBatch(input)));
        return mse(out.vec, target);
    };
    auto loss_with_grad = [&](Matrix& head_grad) {
        Value out = net.forward(Value::of(SeqBatch(input)));
        const double loss = mse_with_grad(out.vec, target, head_grad);
        net.backward(Value::of(Matrix(head_grad)));
        return loss;
    };
    CHECK(max_gradient_error(net, loss_only, loss_with_grad, Value::of(input)) < 1e-4);
}

TEST_CASE("gradient check: lstm + dense with mse") {
    Rng rng(13);
    Network net;
    net.add(std::make_unique<LSTMLayer>(3, 4));
    net.add(std::make_unique<DenseLayer>(4, 2, Activation::Linear));
    net.init(rng);

    SeqBatch input = random_seq(3, 4, 2, rng);
    Matrix target = random_vec(2, 2, rng);

    auto loss_only = [&]() {
        Value out = net.forward(Value::of(SeqBatch(input)));
        return mse(out.vec, target);
    };
    auto loss_with_grad = [&](Matrix& head_grad) {
        Value out = net.forward(Value::of(SeqBatch(input)));
        const double loss = mse_with_grad(out.vec, target, head_grad);
        net.backward(Value::of(Matrix(head_grad)));
        return loss;
    };
    CHECK(max_gradient_error(net, loss_only, loss_with_grad, Value::of(input)) < 1e-4);
}

TEST_CASE("zero loss gradient leaves sgd parameters unchanged") {
    Rng rng(14);
    Network net;
    net.add(std::make_unique<DenseLayer>(3, 2, Activation::Linear));
    net.init(rng);
    const auto before = net.get_flat_params();

    net.zero_grads();
    Optimizer opt(OptimizerKind::SGD, 0.1);
    opt.step(net);
    CHECK(net.get_flat_params() == before);
}

TEST_CASE("identical training steps are bitwise reproducible") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Network net;
        net.add(std::make_unique<DenseLayer>(4, 8, Activation::Tanh));
        net.add(std::make_unique<DenseLayer>(8, 2, Activation::Linear));
        net.init(rng);
        Optimizer opt(OptimizerKind::Adam, 1e-3);
        Matrix input = random_vec(4, 6, rng);
        Matrix target = random_vec(2, 6, rng);
        for (int step = 0; step < 5; ++step) {
            net.zero_grads();
            Value out = net.forward(Value::of(Matrix(input)));
            Matrix g;
            mse_with_grad(out.vec, target, g);
            net.backward(Value::of(std::move(g)));
            opt.step(net);
        }
        return net.get_flat_params();
    };
    CHECK(run(99) == run(99));
    CHECK(run(99) != run(100));
}

TEST_CASE("optimizer aborts on non-finite gradients") {
    Rng rng(15);
    Network net;
    net.add(std::make_unique<DenseLayer>(2, 2, Activation::Linear));
    net.init(rng);
    net.zero_grads();
    net.params()[0].grad[0] = std::nan("");
    Optimizer opt(OptimizerKind::Adam, 1e-3);
    CHECK_THROWS_AS(opt.step(net), std::runtime_error);
}

TEST_CASE("checkpoints round trip exactly") {
    Rng rng(16);
    Network net;
    net.add(std::make_unique<Conv1DLayer>(5, 8, 5, Activation::LeakyReLU));
    net.add(std::make_unique<GlobalAvgPoolLayer>());
    net.add(std::make_unique<DenseLayer>(8, 4, Activation::Linear));
    net.init(rng);

    std::stringstream buf;
    net.save(buf);
    Network back = Network::load(buf);
    CHECK(back.get_flat_params() == net.get_flat_params());

    SeqBatch in = random_seq(5, 7, 2, rng);
    Value a = net.forward(Value::of(SeqBatch(in)));
    Value b = back.forward(Value::of(SeqBatch(in)));
    for (Eigen::Index i = 0; i < a.vec.size(); ++i) {
        CHECK(a.vec.data()[i] == b.vec.data()[i]);
    }
}

TEST_CASE("early stopper keeps the best weights") {
    Rng rng(17);
    Network net;
    net.add(std::make_unique<DenseLayer>(2, 2, Activation::Linear));
    net.init(rng);

    EarlyStopper stopper(2, /*maximize=*/true);
    CHECK(stopper.observe(0.5, net));
    const auto best = net.get_flat_params();

    net.params()[0].value[0] += 1.0;  // pretend training moved on
    CHECK_FALSE(stopper.observe(0.4, net));
    CHECK_FALSE(stopper.observe(0.3, net));
    CHECK(stopper.should_stop());
    stopper.restore_best(net);
    CHECK(net.get_flat_params() == best);
}
