#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "teleop/comms.hpp"
#include "teleop/rng.hpp"

using namespace teleop;

namespace {

constexpr double kLog2E = 1.4426950408889634;

// Tail probability of the standard normal, evaluated by composite Simpson
// integration of the density. Used only as an oracle for the quantile.
double q_integrated(double x) {
    const double upper = std::max(x, 0.0) + 40.0;
    const int n = 200000;  // even
    const double h = (upper - x) / n;
    auto phi = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    double sum = phi(x) + phi(upper);
    for (int i = 1; i < n; ++i) sum += phi(x + i * h) * ((i % 2) ? 4.0 : 2.0);
    return sum * h / 3.0;
}

double q_inverse_bisection(double eps) {
    double lo = -10.0, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (q_integrated(mid) > eps) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double q_erfc(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

ChannelConfig unit_channel() {
    ChannelConfig cfg;
    cfg.large_scale_gain = 1.0;
    cfg.small_scale_gain = 1.0;
    cfg.transmit_power_w = 1.0;
    cfg.noise_psd_w_per_hz = 1.0;
    cfg.bandwidth_hz = 1.0;
    cfg.tx_duration_s = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("snr is the gain-power to noise ratio") {
    ChannelConfig cfg = unit_channel();
    CHECK(snr(cfg) == doctest::Approx(1.0));

    cfg.large_scale_gain = 0.5;
    cfg.small_scale_gain = 2.0;
    cfg.transmit_power_w = 4.0;
    CHECK(snr(cfg) == doctest::Approx(4.0));

    cfg.transmit_power_w = 8.0;
    CHECK(snr(cfg) == doctest::Approx(8.0));
}

TEST_CASE("snr rejects non-positive parameters") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 0.0;
    CHECK_THROWS_AS(snr(cfg), std::invalid_argument);
    cfg = unit_channel();
    cfg.bandwidth_hz = -1.0;
    CHECK_THROWS_AS(snr(cfg), std::invalid_argument);
    cfg = unit_channel();
    cfg.tx_duration_s = 0.5;  // blocklength below 1
    CHECK_THROWS_AS(snr(cfg), std::invalid_argument);
}

TEST_CASE("shannon capacity") {
    CHECK(shannon_capacity(0.0) == doctest::Approx(0.0));
    CHECK(shannon_capacity(1.0) == doctest::Approx(1.0));
    CHECK(shannon_capacity(15.0) == doctest::Approx(4.0));
    CHECK_THROWS_AS(shannon_capacity(-0.1), std::invalid_argument);

    Rng rng(7);
    double prev = 0.0;
    for (double g = 0.1; g < 100.0; g *= 1.7) {
        const double c = shannon_capacity(g);
        CHECK(c > prev);
        prev = c;
    }
}

TEST_CASE("channel dispersion") {
    CHECK(channel_dispersion(0.0) == doctest::Approx(0.0));
    CHECK(channel_dispersion(1.0) == doctest::Approx(kLog2E * kLog2E * 0.75).epsilon(1e-12));
    CHECK(channel_dispersion(1.0) == doctest::Approx(1.5610267).epsilon(1e-6));
    CHECK(channel_dispersion(1e12) == doctest::Approx(kLog2E * kLog2E).epsilon(1e-9));
    CHECK(channel_dispersion(1e12) == doctest::Approx(2.0813690).epsilon(1e-6));
    CHECK_THROWS_AS(channel_dispersion(-1.0), std::invalid_argument);

    double prev = -1.0;
    for (double g = 0.0; g < 50.0; g += 0.7) {
        const double v = channel_dispersion(g);
        CHECK(v >= 0.0);
        CHECK(v < kLog2E * kLog2E);
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("gaussian q inverse matches the integration oracle") {
    CHECK(gaussian_q_inverse(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(gaussian_q_inverse(1e-5) == doctest::Approx(4.26489).epsilon(2e-5));
    CHECK(gaussian_q_inverse(0.025) == doctest::Approx(1.95996).epsilon(2e-5));

    for (double eps : {1e-5, 1e-3, 0.025, 0.2, 0.5, 0.8}) {
        const double oracle = q_inverse_bisection(eps);
        CHECK(gaussian_q_inverse(eps) == doctest::Approx(oracle).epsilon(1e-7));
    }
}

TEST_CASE("q / q-inverse round trip over nine decades") {
    for (double eps = 1e-9; eps <= 0.5; eps *= 1.5) {
        const double x = gaussian_q_inverse(eps);
        const double back = q_erfc(x);
        CHECK(std::abs(back - eps) / eps < 1e-6);
    }
    const double x = gaussian_q_inverse(0.5);
    CHECK(std::abs(q_erfc(x) - 0.5) < 1e-12);
}

TEST_CASE("q inverse is antisymmetric about one half") {
    for (double eps : {0.01, 0.1, 0.3, 0.45}) {
        CHECK(gaussian_q_inverse(eps) + gaussian_q_inverse(1.0 - eps) ==
              doctest::Approx(0.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(gaussian_q_inverse(0.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_q_inverse(1.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_q_inverse(-0.1), std::invalid_argument);
}

TEST_CASE("achievable rate equals capacity at half decoding error") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 3.0;
    cfg.tx_duration_s = 256.0;
    CHECK(achievable_rate(cfg, 0.5) == doctest::Approx(shannon_capacity(3.0)).epsilon(1e-12));
}

TEST_CASE("achievable rate at snr 3, blocklength 256, error 1e-5") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 3.0;
    cfg.tx_duration_s = 256.0;
    CHECK(achievable_rate(cfg, 1e-5) == doctest::Approx(1.6276).epsilon(1e-3 / 1.6276));
    // Penalty term for the same point.
    const double penalty = std::sqrt(channel_dispersion(3.0) / 256.0) * gaussian_q_inverse(1e-5);
    CHECK(penalty == doctest::Approx(0.37237).epsilon(1e-4));
}

TEST_CASE("achievable rate approaches capacity with long blocks") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 3.0;
    cfg.tx_duration_s = 1e9;
    CHECK(achievable_rate(cfg, 1e-5) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("achievable rate stays below capacity and grows with blocklength") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        ChannelConfig cfg = unit_channel();
        cfg.transmit_power_w = rng.uniform(0.5, 20.0);
        cfg.tx_duration_s = rng.uniform(16.0, 4096.0);
        const double eps_d = rng.uniform(1e-6, 0.5);
        try {
            const double rate = achievable_rate(cfg, eps_d);
            const double cap = shannon_capacity(snr(cfg));
            CHECK(rate <= cap + 1e-12);
            if (std::abs(eps_d - 0.5) > 1e-9) CHECK(rate < cap);
            ChannelConfig longer = cfg;
            longer.tx_duration_s *= 4.0;
            CHECK(achievable_rate(longer, eps_d) >= rate);
        } catch (const RateUnderflowError&) {
            // Infeasible pair; acceptable for this draw.
        }
    }
}

TEST_CASE("rate underflow is a distinguishable error") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 0.05;  // tiny capacity
    cfg.bandwidth_hz = 1.0;
    cfg.tx_duration_s = 4.0;      // short block
    CHECK_THROWS_AS(achievable_rate(cfg, 1e-9), RateUnderflowError);
    CHECK_THROWS_AS(communication_load(1, 2, cfg, 1e-9), RateUnderflowError);
}

TEST_CASE("communication load via achievable rate") {
    ChannelConfig cfg = unit_channel();
    cfg.transmit_power_w = 3.0;
    cfg.tx_duration_s = 256.0;
    const double rate = achievable_rate(cfg, 1e-5);
    CHECK(communication_load(100, 100, cfg, 1e-5) ==
          doctest::Approx(256.0 * rate).epsilon(1e-12));
    CHECK(communication_load(0, 100, cfg, 1e-5) == doctest::Approx(0.0));
    // Linear in the teleoperation slot count.
    const double half = communication_load(50, 100, cfg, 1e-5);
    const double quarter = communication_load(25, 100, cfg, 1e-5);
    CHECK(half == doctest::Approx(2.0 * quarter).epsilon(1e-12));
    // Stricter reliability (smaller decoding error) costs rate, hence load.
    CHECK(communication_load(50, 100, cfg, 1e-7) < half);
    CHECK_THROWS_AS(communication_load(101, 100, cfg, 1e-5), std::invalid_argument);
}

TEST_CASE("fixed payload load") {
    CHECK(fixed_payload_load(50, 100, 256.0) == doctest::Approx(128.0));
    CHECK(fixed_payload_load(0, 100, 256.0) == doctest::Approx(0.0));
    CHECK(fixed_payload_load(100, 100, 256.0) == doctest::Approx(256.0));
    CHECK_THROWS_AS(fixed_payload_load(-1, 100, 256.0), std::invalid_argument);
}

TEST_CASE("teleoperation success probability") {
    ReliabilityBudget perfect{1e-300, 1e-300};
    // Degenerate zero budgets are outside the open interval; use the formula
    // boundary cases through valid inputs instead.
    ReliabilityBudget defaults{1e-5, 1e-5};
    CHECK(teleop_success_prob(defaults, 0.85) == doctest::Approx(0.8499830).epsilon(1e-7));
    CHECK(teleop_success_prob(defaults, 1.0) ==
          doctest::Approx((1.0 - 1e-5) * (1.0 - 1e-5)).epsilon(1e-12));
    ReliabilityBudget certain_failure{1.0 - 1e-16, 1e-5};
    CHECK(teleop_success_prob(certain_failure, 0.85) == doctest::Approx(0.0).epsilon(1e-10));
    (void)perfect;
}

TEST_CASE("autonomy success probability") {
    CHECK(autonomy_success_prob({0.0, 0.5, 0.0}) == doctest::Approx(1.0));
    CHECK(autonomy_success_prob({0.1, 0.05, 0.05}) == doctest::Approx(0.94525).epsilon(1e-9));
    // All classification errors caught by detection.
    CHECK(autonomy_success_prob({1.0, 0.0, 0.3}) == doctest::Approx(0.7).epsilon(1e-12));

    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        AutonomyErrorBudget b{rng.u01(), rng.u01(), rng.u01()};
        const double p = autonomy_success_prob(b);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        // Monotone non-increasing in every error term.
        AutonomyErrorBudget worse = b;
        worse.traj_pred_error = std::min(1.0, b.traj_pred_error + 0.1);
        CHECK(autonomy_success_prob(worse) <= p + 1e-12);
        worse = b;
        worse.detect_fail = std::min(1.0, b.detect_fail + 0.1);
        CHECK(autonomy_success_prob(worse) <= p + 1e-12);
        worse = b;
        worse.task_pred_error = std::min(1.0, b.task_pred_error + 0.1);
        CHECK(autonomy_success_prob(worse) <= p + 1e-12);
    }
}

TEST_CASE("overall success probability is the convex combination") {
    CHECK(overall_success_prob(1.0, 0.8, 0.9) == doctest::Approx(0.8));
    CHECK(overall_success_prob(0.0, 0.8, 0.9) == doctest::Approx(0.9));
    // Direct arithmetic: 0.7 * 0.8499830 + 0.3 * 0.94525.
    CHECK(overall_success_prob(0.7, 0.8499830, 0.94525) ==
          doctest::Approx(0.8785631).epsilon(1e-7));

    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const double pm = rng.u01(), ps = rng.u01(), t = rng.u01();
        const double p = overall_success_prob(t, pm, ps);
        CHECK(p >= std::min(pm, ps) - 1e-12);
        CHECK(p <= std::max(pm, ps) + 1e-12);
        // Exact linearity in the teleoperation share.
        const double p0 = overall_success_prob(0.0, pm, ps);
        const double p1 = overall_success_prob(1.0, pm, ps);
        CHECK(p == doctest::Approx(p0 + t * (p1 - p0)).epsilon(1e-12));
    }
}

TEST_CASE("requirement check is strict") {
    CHECK(meets_requirement(0.9, 0.85));
    CHECK_FALSE(meets_requirement(0.85, 0.85));
    CHECK(meets_requirement(0.8785631, 0.85));
}
