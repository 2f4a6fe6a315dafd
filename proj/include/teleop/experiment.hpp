#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teleop/curves.hpp"
#include "teleop/dqn.hpp"
#include "teleop/env.hpp"
#include "teleop/intent.hpp"
#include "teleop/traj_pred.hpp"
#include "teleop/trajectory.hpp"

namespace teleop {

// Resolved run configuration with one section per component. Every value has
// a default; a JSON config file overrides fields selectively.
struct ExperimentConfig {
    std::uint64_t seed = 1234;

    DatasetParams dataset;

    ChannelConfig channel;  // defaults give snr 3 and blocklength 256
    ReliabilityBudget reliability{1e-5, 1e-5};
    double operator_coeff = 0.85;
    double completion_requirement = 0.85;
    double detect_fail_prob = 0.05;
    double bits_per_slot = 256.0;
    bool use_finite_blocklength = false;

    AccuracyCurve intent_curve;
    TrajErrorCurve traj_curve;
    double intent_refresh_prob = 0.3;

    int sweep_total_slots = 330;
    int dqn_total_slots = 25;
    int task_label = 0;

    ClassifierConfig classifier;
    PredictorConfig predictor;
    std::vector<double> predictor_fractions{0.5, 0.6, 0.7, 0.8, 0.9};
    double rrmse_threshold_pct = 10.0;
    std::vector<double> curve_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

    DqnHyperparams dqn;

    std::vector<double> pt_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> loss_grid{1e-5, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2};
    std::vector<double> rho_grid{0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
    long sweep_episodes = 10000;
    double sweep_pt_fixed = 0.7;  // proposed operating point for the
                                  // loss/operator comparisons
    int workers = 2;

    static ExperimentConfig defaults();
    static ExperimentConfig load(const std::string& path);  // defaults + overrides
    std::string to_json_string() const;
    // FNV-1a hash of the resolved configuration; stamped into every CSV.
    std::string hash() const;

    EpisodeConfig episode_config(int total_slots) const;
};

// Stable hash for derived seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);

struct MonteCarloPoint {
    double success = 0.0;
    double success_stderr = 0.0;
    double load_bits_per_slot = 0.0;
    double mean_tele_share = 0.0;
    long episodes = 0;
};

// Forced-schedule Monte Carlo: the mismatch monitor is disabled and a
// threshold policy pins the teleoperation share, so each episode realizes
// the requested operating point exactly.
MonteCarloPoint run_forced_point(const EpisodeConfig& cfg, double switch_fraction,
                                 long episodes, std::uint64_t seed, int workers);

struct SweepRow {
    double x = 0.0;    // independent variable of the sweep
    double rho = 0.0;  // operator coefficient in effect
    MonteCarloPoint proposed;
    MonteCarloPoint conventional;
};

// Completion probability and load across the teleoperation-share grid, for
// every operator coefficient in the grid (the default coefficient first).
std::vector<SweepRow> sweep_pt(const ExperimentConfig& cfg, long episodes);
// Proposed (fixed share) vs conventional (full teleoperation) across packet
// loss probabilities.
std::vector<SweepRow> sweep_loss(const ExperimentConfig& cfg, long episodes);
// Same comparison across operator experience coefficients.
std::vector<SweepRow> sweep_operator(const ExperimentConfig& cfg, long episodes);

void write_sweep_csv(const std::string& path, const std::string& x_name,
                     const std::vector<SweepRow>& rows, const ExperimentConfig& cfg);
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows,
                     const ExperimentConfig& cfg);
void write_training_curve_csv(const std::string& path,
                              const std::vector<TrainingCurvePoint>& curve,
                              const ExperimentConfig& cfg);

}  // namespace teleop
