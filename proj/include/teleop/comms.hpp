#pragma once

#include <stdexcept>

namespace teleop {

// Radio-link parameters for one device. All quantities are linear (not dB).
struct ChannelConfig {
    double large_scale_gain = 1.0;   // path loss + shadowing
    double small_scale_gain = 1.0;   // fading coefficient, constant per task
    double transmit_power_w = 1.0;
    double noise_psd_w_per_hz = 1.0; // single-sided
    double bandwidth_hz = 1.0;
    double tx_duration_s = 1.0;      // per-packet transmission time

    double blocklength() const { return tx_duration_s * bandwidth_hz; }
    void validate() const;
};

// Per-task communication error budget.
struct ReliabilityBudget {
    double decoding_error = 1e-5;
    double queuing_violation = 1e-5;
    void validate() const;
};

// Per-task autonomy error budget.
struct AutonomyErrorBudget {
    double task_pred_error = 0.0;  // wrong task classification
    double detect_fail = 0.0;      // wrong classification slips past detection
    double traj_pred_error = 0.0;  // predicted trajectory misses tolerance
    void validate() const;
};

// Slot bookkeeping for one finished task.
struct LoadAccount {
    long tele_slots = 0;      // slots spent exchanging packets
    long total_slots = 1;
    double bits_per_slot = 256.0;
    void validate() const;
};

// Raised when the short-packet rate penalty meets or exceeds capacity, i.e.
// the requested (blocklength, reliability) pair is infeasible.
class RateUnderflowError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Linear SNR at the receiver.
double snr(const ChannelConfig& cfg);

// log2(1 + snr), bits/s/Hz.
double shannon_capacity(double snr_linear);

// Variance term of the short-packet rate penalty; in [0, (log2 e)^2).
double channel_dispersion(double snr_linear);

// Inverse of the Gaussian tail probability Q(x) = P(N(0,1) > x).
// Accepts eps in (0, 1); accurate to ~1e-15 absolute.
double gaussian_q_inverse(double eps);

// Short-packet achievable rate in bits/s/Hz at the given decoding error
// target. Throws RateUnderflowError when the penalty consumes all capacity.
double achievable_rate(const ChannelConfig& cfg, double decoding_error);

// Average bits per slot when tele_slots of total_slots carry a packet whose
// size is set by the achievable rate over one transmission.
double communication_load(long tele_slots, long total_slots,
                          const ChannelConfig& cfg, double decoding_error);

// Average bits per slot with a fixed per-packet payload.
double fixed_payload_load(long tele_slots, long total_slots, double bits_per_slot);

// Task completion probability in pure teleoperation: communication
// reliability times the operator experience coefficient.
double teleop_success_prob(const ReliabilityBudget& budget, double operator_coeff);

// Task completion probability in autonomous operation: classification either
// correct or caught by detection, and the trajectory prediction within
// tolerance.
double autonomy_success_prob(const AutonomyErrorBudget& budget);

// Overall completion probability: convex combination weighted by the share
// of time spent in teleoperation.
double overall_success_prob(double tele_share, double p_tele, double p_auto);

// Strict task-requirement check.
bool meets_requirement(double p_overall, double requirement);

}  // namespace teleop
