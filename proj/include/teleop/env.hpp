#pragma once

#include <functional>
#include <string>
#include <vector>

#include "teleop/comms.hpp"
#include "teleop/curves.hpp"
#include "teleop/intent.hpp"
#include "teleop/rng.hpp"

namespace teleop {

enum class Mode { Tele, Auto };
enum class SwitchCause { Policy, Detection };

const char* mode_name(Mode m);
const char* switch_cause_name(SwitchCause c);

struct SwitchEvent {
    int slot = 0;
    Mode from = Mode::Tele;
    Mode to = Mode::Auto;
    SwitchCause cause = SwitchCause::Policy;
};

// One committed autonomous stretch: entered at a given observation fraction
// and executed for a number of slots.
struct AutoStretch {
    double entry_fraction = 0.0;
    int committed_label = 0;
    int slots = 0;
};

struct EnvState {
    IntentionEstimate intent;
    int observed_slots = 0;
    double observed_fraction = 0.0;
    Mode mode = Mode::Tele;
};

// Produces the per-slot intention estimate at a given observation fraction.
using IntentProvider = std::function<IntentionEstimate(double fraction, Rng& rng)>;

struct EpisodeConfig {
    int task_label = 0;
    int n_classes = 4;
    int total_slots = 330;
    ReliabilityBudget reliability{1e-5, 1e-5};
    double operator_coeff = 0.85;
    double completion_requirement = 0.85;
    double detect_fail_prob = 0.05;
    AccuracyCurve intent_curve;
    TrajErrorCurve traj_curve;
    double bits_per_slot = 256.0;
    // Probability per slot that the intention estimate is recomputed;
    // consecutive windows overlap almost entirely, so classifier output is
    // strongly autocorrelated rather than redrawn every slot.
    double intent_refresh_prob = 0.3;
    // Forced-schedule episodes realize the requested mode split exactly:
    // the mismatch monitor and the per-slot autonomy hazard are off, and the
    // whole outcome is drawn terminally from the closed-form split. Used by
    // the sweeps; interactive training runs the full dynamics.
    bool forced_schedule = false;
    bool use_finite_blocklength = false;
    ChannelConfig channel;

    void validate() const;
};

struct EpisodeResult {
    bool success = false;
    bool failed_in_autonomy = false;  // episode ended by the in-task hazard
    int executed_slots = 0;
    int tele_slots = 0;
    int total_slots = 0;
    double load_bits_per_slot = 0.0;
    double cumulative_reward = 0.0;
    Mode final_mode = Mode::Tele;
    double first_commit_fraction = 1.0;  // 1.0 when autonomy never engaged
    std::vector<SwitchEvent> switches;
    std::vector<AutoStretch> stretches;

    double tele_share() const {
        return static_cast<double>(tele_slots) / static_cast<double>(total_slots);
    }
};

// Terminal completion draw for one finished episode. A uniformly chosen slot
// decides which phase governs the outcome: a teleoperated slot applies the
// communication-and-operator reliability, an autonomous slot applies the
// task/detection/trajectory reliability evaluated at the first handoff
// fraction. In expectation this reproduces the convex-combination completion
// probability with the teleoperation share as the weight. The first handoff
// sets the autonomy risk for the whole episode: trajectory executed under an
// under-informed early prediction stays executed, however often detection
// later pulls the system back.
bool sample_success(const EpisodeConfig& cfg, int tele_slots, double first_commit_fraction,
                    Rng& rng);

// Discrete-time episode simulator. A slot proceeds as: apply the action
// (toggling commits or ends an autonomous stretch), spend the slot in the
// resulting mode, grow the observation window, possibly refresh the
// intention estimate, and let the mismatch monitor revert autonomy whose
// committed label disagrees with the current estimate (a detection event,
// missed with the configured probability). Reward is 1 per autonomous slot,
// 0 per teleoperated slot, plus the terminal load-saving bonus when the
// episode succeeds.
class ModeSwitchEnv {
public:
    // The default provider is the stochastic oracle over the configured
    // accuracy curve.
    explicit ModeSwitchEnv(EpisodeConfig cfg, IntentProvider provider = nullptr);

    const EnvState& reset(Rng rng);
    struct StepOutcome {
        EnvState state;
        double reward = 0.0;
        bool done = false;
    };
    StepOutcome step(int action);

    bool done() const { return done_; }
    const EnvState& state() const { return state_; }
    const EpisodeResult& result() const;
    const EpisodeConfig& config() const { return cfg_; }

private:
    void refresh_intent(bool force);

    EpisodeConfig cfg_;
    IntentProvider provider_;
    Rng rng_{0};
    EnvState state_;
    EpisodeResult result_;
    AutoStretch open_stretch_;
    bool stretch_open_ = false;
    int slot_ = 0;
    bool done_ = true;
    bool started_ = false;
};

using Policy = std::function<int(const EnvState&)>;

Policy always_stay_policy();
// Requests a switch to autonomy once the observed fraction reaches the
// target; after a detection reversion it immediately switches back, so the
// realized teleoperation share tracks the target from below.
Policy threshold_policy(double switch_fraction);

EpisodeResult run_episode(const EpisodeConfig& cfg, const Policy& policy, Rng rng,
                          const IntentProvider& provider = nullptr);

// Slot-by-slot trace row for episode exports.
struct TraceRow {
    int slot = 0;
    Mode mode = Mode::Tele;
    int action = 0;
    double reward = 0.0;
    int intent_argmax = 0;
    std::string cause;  // empty, "policy" or "detection"
};

std::vector<TraceRow> trace_episode(const EpisodeConfig& cfg, const Policy& policy, Rng rng,
                                    EpisodeResult* out_result = nullptr,
                                    const IntentProvider& provider = nullptr);

}  // namespace teleop
