#include "teleop/comms.hpp"

#include <cmath>
#include <string>

namespace teleop {

namespace {

constexpr double kLog2E = 1.4426950408889634;

void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

// Rational approximation of the standard normal quantile (Wichura's
// algorithm AS 241, PPND16 variant). Absolute error below 1e-15 over the
// full open unit interval.
double normal_quantile(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                  6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        value = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        value = num / den;
    }
    return (q < 0.0) ? -value : value;
}

}  // namespace

void ChannelConfig::validate() const {
    require(large_scale_gain > 0.0, "ChannelConfig: large_scale_gain must be > 0");
    require(small_scale_gain > 0.0, "ChannelConfig: small_scale_gain must be > 0");
    require(transmit_power_w > 0.0, "ChannelConfig: transmit_power_w must be > 0");
    require(noise_psd_w_per_hz > 0.0, "ChannelConfig: noise_psd_w_per_hz must be > 0");
    require(bandwidth_hz > 0.0, "ChannelConfig: bandwidth_hz must be > 0");
    require(tx_duration_s > 0.0, "ChannelConfig: tx_duration_s must be > 0");
    require(blocklength() >= 1.0, "ChannelConfig: blocklength must be >= 1");
}

void ReliabilityBudget::validate() const {
    require(decoding_error > 0.0 && decoding_error < 1.0,
            "ReliabilityBudget: decoding_error must be in (0, 1)");
    require(queuing_violation > 0.0 && queuing_violation < 1.0,
            "ReliabilityBudget: queuing_violation must be in (0, 1)");
}

void AutonomyErrorBudget::validate() const {
    require(is_prob(task_pred_error), "AutonomyErrorBudget: task_pred_error must be in [0, 1]");
    require(is_prob(detect_fail), "AutonomyErrorBudget: detect_fail must be in [0, 1]");
    require(is_prob(traj_pred_error), "AutonomyErrorBudget: traj_pred_error must be in [0, 1]");
}

void LoadAccount::validate() const {
    require(tele_slots >= 0, "LoadAccount: tele_slots must be >= 0");
    require(total_slots >= 1, "LoadAccount: total_slots must be >= 1");
    require(tele_slots <= total_slots, "LoadAccount: tele_slots must be <= total_slots");
    require(bits_per_slot > 0.0, "LoadAccount: bits_per_slot must be > 0");
}

double snr(const ChannelConfig& cfg) {
    cfg.validate();
    return cfg.large_scale_gain * cfg.small_scale_gain * cfg.transmit_power_w /
           (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz);
}

double shannon_capacity(double snr_linear) {
    require(snr_linear >= 0.0, "shannon_capacity: snr must be >= 0");
    return std::log2(1.0 + snr_linear);
}

double channel_dispersion(double snr_linear) {
    require(snr_linear >= 0.0, "channel_dispersion: snr must be >= 0");
    const double one_plus = 1.0 + snr_linear;
    return kLog2E * kLog2E * (1.0 - 1.0 / (one_plus * one_plus));
}

double gaussian_q_inverse(double eps) {
    require(eps > 0.0 && eps < 1.0, "gaussian_q_inverse: eps must be in (0, 1)");
    // Q(x) = 1 - Phi(x), so Q^{-1}(eps) = -Phi^{-1}(eps) by symmetry.
    return -normal_quantile(eps);
}

double achievable_rate(const ChannelConfig& cfg, double decoding_error) {
    const double gamma = snr(cfg);
    require(decoding_error > 0.0 && decoding_error < 1.0,
            "achievable_rate: decoding_error must be in (0, 1)");
    const double capacity = shannon_capacity(gamma);
    const double penalty = std::sqrt(channel_dispersion(gamma) / cfg.blocklength()) *
                           gaussian_q_inverse(decoding_error);
    const double rate = capacity - penalty;
    if (rate <= 0.0) {
        throw RateUnderflowError(
            "achievable_rate: penalty " + std::to_string(penalty) +
            " consumes capacity " + std::to_string(capacity));
    }
    return rate;
}

double communication_load(long tele_slots, long total_slots,
                          const ChannelConfig& cfg, double decoding_error) {
    LoadAccount acct;
    acct.tele_slots = tele_slots;
    acct.total_slots = total_slots;
    acct.validate();
    const double rate = achievable_rate(cfg, decoding_error);
    return static_cast<double>(tele_slots) / static_cast<double>(total_slots) *
           cfg.blocklength() * rate;
}

double fixed_payload_load(long tele_slots, long total_slots, double bits_per_slot) {
    LoadAccount acct;
    acct.tele_slots = tele_slots;
    acct.total_slots = total_slots;
    acct.bits_per_slot = bits_per_slot;
    acct.validate();
    return static_cast<double>(tele_slots) / static_cast<double>(total_slots) * bits_per_slot;
}

double teleop_success_prob(const ReliabilityBudget& budget, double operator_coeff) {
    budget.validate();
    require(is_prob(operator_coeff), "teleop_success_prob: operator_coeff must be in [0, 1]");
    return (1.0 - budget.queuing_violation) * (1.0 - budget.decoding_error) * operator_coeff;
}

double autonomy_success_prob(const AutonomyErrorBudget& budget) {
    budget.validate();
    const double classification_ok =
        (1.0 - budget.task_pred_error) + budget.task_pred_error * (1.0 - budget.detect_fail);
    return classification_ok * (1.0 - budget.traj_pred_error);
}

double overall_success_prob(double tele_share, double p_tele, double p_auto) {
    require(is_prob(tele_share), "overall_success_prob: tele_share must be in [0, 1]");
    require(is_prob(p_tele), "overall_success_prob: p_tele must be in [0, 1]");
    require(is_prob(p_auto), "overall_success_prob: p_auto must be in [0, 1]");
    return tele_share * p_tele + (1.0 - tele_share) * p_auto;
}

bool meets_requirement(double p_overall, double requirement) {
    require(is_prob(p_overall), "meets_requirement: p_overall must be in [0, 1]");
    require(is_prob(requirement), "meets_requirement: requirement must be in [0, 1]");
    return p_overall > requirement;
}

}  // namespace teleop
