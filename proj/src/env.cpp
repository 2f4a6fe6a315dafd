#include "teleop/env.hpp"

#include <cmath>
#include <stdexcept>

namespace teleop {

namespace {

IntentProvider oracle_provider(const EpisodeConfig& cfg) {
    const int label = cfg.task_label;
    const int n = cfg.n_classes;
    const AccuracyCurve curve = cfg.intent_curve;
    return [label, n, curve](double fraction, Rng& rng) {
        return oracle_predict(label, fraction, curve, n, rng);
    };
}

}  // namespace

const char* mode_name(Mode m) { return m == Mode::Tele ? "tele" : "auto"; }

const char* switch_cause_name(SwitchCause c) {
    return c == SwitchCause::Policy ? "policy" : "detection";
}

void EpisodeConfig::validate() const {
    if (total_slots < 20) throw std::invalid_argument("EpisodeConfig: total_slots must be >= 20");
    if (n_classes < 2) throw std::invalid_argument("EpisodeConfig: n_classes must be >= 2");
    if (task_label < 0 || task_label >= n_classes) {
        throw std::invalid_argument("EpisodeConfig: task_label out of range");
    }
    if (operator_coeff < 0.0 || operator_coeff > 1.0) {
        throw std::invalid_argument("EpisodeConfig: operator_coeff must be in [0, 1]");
    }
    if (completion_requirement < 0.0 || completion_requirement > 1.0) {
        throw std::invalid_argument("EpisodeConfig: completion_requirement must be in [0, 1]");
    }
    if (detect_fail_prob < 0.0 || detect_fail_prob > 1.0) {
        throw std::invalid_argument("EpisodeConfig: detect_fail_prob must be in [0, 1]");
    }
    if (intent_refresh_prob <= 0.0 || intent_refresh_prob > 1.0) {
        throw std::invalid_argument("EpisodeConfig: intent_refresh_prob must be in (0, 1]");
    }
    if (bits_per_slot <= 0.0) {
        throw std::invalid_argument("EpisodeConfig: bits_per_slot must be > 0");
    }
    if (intent_curve.empty() || traj_curve.empty()) {
        throw std::invalid_argument("EpisodeConfig: error curves must be set");
    }
    reliability.validate();
    if (use_finite_blocklength) channel.validate();
}

namespace {

// Probability that autonomy entered at this fraction completes the task.
double autonomy_survival(const EpisodeConfig& cfg, double fraction) {
    AutonomyErrorBudget budget;
    budget.task_pred_error = cfg.intent_curve.at(fraction);
    budget.detect_fail = cfg.detect_fail_prob;
    budget.traj_pred_error = cfg.traj_curve.at(fraction);
    return autonomy_success_prob(budget);
}

// Per-slot failure probability while autonomous, chosen so the slot
// survivals telescope to the survival curve: crossing [u, u'] costs
// 1 - S(u)/S(u').
double slot_hazard(const EpisodeConfig& cfg, double u, double u_next) {
    const double s_now = autonomy_survival(cfg, u);
    const double s_next = autonomy_survival(cfg, u_next);
    if (s_next <= 0.0) return 1.0;
    const double survive = s_now / s_next;
    return std::clamp(1.0 - survive, 0.0, 1.0);
}

}  // namespace

bool sample_success(const EpisodeConfig& cfg, int tele_slots, double first_commit_fraction,
                    Rng& rng) {
    const double tele_share =
        static_cast<double>(tele_slots) / static_cast<double>(cfg.total_slots);
    if (tele_slots >= cfg.total_slots || rng.u01() < tele_share) {
        return rng.bernoulli(teleop_success_prob(cfg.reliability, cfg.operator_coeff));
    }
    AutonomyErrorBudget budget;
    budget.task_pred_error = cfg.intent_curve.at(first_commit_fraction);
    budget.detect_fail = cfg.detect_fail_prob;
    budget.traj_pred_error = cfg.traj_curve.at(first_commit_fraction);
    return rng.bernoulli(autonomy_success_prob(budget));
}

ModeSwitchEnv::ModeSwitchEnv(EpisodeConfig cfg, IntentProvider provider)
    : cfg_(std::move(cfg)), provider_(std::move(provider)) {
    cfg_.validate();
    if (!provider_) provider_ = oracle_provider(cfg_);
}

const EnvState& ModeSwitchEnv::reset(Rng rng) {
    rng_ = rng;
    slot_ = 0;
    done_ = false;
    started_ = true;
    stretch_open_ = false;
    result_ = EpisodeResult{};
    result_.total_slots = cfg_.total_slots;

    state_.mode = Mode::Tele;
    state_.observed_slots = 0;
    state_.observed_fraction = 0.0;
    // Nothing observed yet: uniform prior over the tasks.
    state_.intent.probabilities =
        Eigen::VectorXd::Constant(cfg_.n_classes, 1.0 / cfg_.n_classes);
    state_.intent.observation_fraction = 0.0;
    return state_;
}

void ModeSwitchEnv::refresh_intent(bool force) {
    const bool redraw = force || rng_.u01() < cfg_.intent_refresh_prob;
    if (redraw) {
        state_.intent = provider_(state_.observed_fraction, rng_);
    } else {
        state_.intent.observation_fraction = state_.observed_fraction;
    }
}

ModeSwitchEnv::StepOutcome ModeSwitchEnv::step(int action) {
    if (!started_) throw std::logic_error("ModeSwitchEnv: step before reset");
    if (done_) throw std::logic_error("ModeSwitchEnv: step after episode end");
    if (action != 0 && action != 1) throw std::invalid_argument("ModeSwitchEnv: bad action");

    if (action == 1) {
        const Mode from = state_.mode;
        state_.mode = (from == Mode::Tele) ? Mode::Auto : Mode::Tele;
        result_.switches.push_back({slot_, from, state_.mode, SwitchCause::Policy});
        if (state_.mode == Mode::Auto) {
            open_stretch_ = AutoStretch{state_.observed_fraction, state_.intent.argmax(), 0};
            if (result_.stretches.empty() && !stretch_open_) {
                result_.first_commit_fraction = open_stretch_.entry_fraction;
            }
            stretch_open_ = true;
        } else if (stretch_open_) {
            result_.stretches.push_back(open_stretch_);
            stretch_open_ = false;
        }
    }

    // Spend the slot in the current mode.
    const bool auto_slot = state_.mode == Mode::Auto;
    double reward = 0.0;
    if (auto_slot) {
        ++open_stretch_.slots;
        reward = 1.0;
    } else {
        ++result_.tele_slots;
    }

    const double fraction_before =
        static_cast<double>(slot_) / static_cast<double>(cfg_.total_slots);
    ++slot_;
    state_.observed_slots = slot_;
    state_.observed_fraction =
        static_cast<double>(slot_) / static_cast<double>(cfg_.total_slots);
    result_.executed_slots = slot_;

    // Autonomy can wreck the task as it runs: the slot hazard telescopes to
    // the survival implied by the error curves at the handoff fraction.
    if (auto_slot && !cfg_.forced_schedule) {
        if (rng_.bernoulli(slot_hazard(cfg_, fraction_before, state_.observed_fraction))) {
            reward = 0.0;  // the failing slot saves nothing
            done_ = true;
            result_.success = false;
            result_.failed_in_autonomy = true;
            result_.final_mode = Mode::Auto;
            result_.stretches.push_back(open_stretch_);
            stretch_open_ = false;
            result_.load_bits_per_slot =
                fixed_payload_load(result_.tele_slots, cfg_.total_slots, cfg_.bits_per_slot);
            result_.cumulative_reward += reward;
            return {state_, reward, done_};
        }
    }

    refresh_intent(slot_ == 1);

    // Mismatch monitor: autonomy whose committed task disagrees with the
    // current estimate reverts to teleoperation unless detection misses.
    if (state_.mode == Mode::Auto && !cfg_.forced_schedule && slot_ < cfg_.total_slots) {
        if (state_.intent.argmax() != open_stretch_.committed_label) {
            if (!rng_.bernoulli(cfg_.detect_fail_prob)) {
                state_.mode = Mode::Tele;
                result_.switches.push_back({slot_, Mode::Auto, Mode::Tele, SwitchCause::Detection});
                result_.stretches.push_back(open_stretch_);
                stretch_open_ = false;
            }
        }
    }

    const bool terminal = slot_ >= cfg_.total_slots;
    if (terminal) {
        done_ = true;
        if (stretch_open_) {
            result_.stretches.push_back(open_stretch_);
            stretch_open_ = false;
        }
        result_.final_mode = state_.mode;
        if (cfg_.forced_schedule) {
            result_.success =
                sample_success(cfg_, result_.tele_slots, result_.first_commit_fraction, rng_);
        } else {
            // The in-task hazard already resolved the autonomy risk up to
            // the end of the task; what remains is the teleoperated share's
            // communication/operator draw and the terminal autonomy
            // residual.
            const double tele_share = result_.tele_share();
            if (result_.tele_slots >= cfg_.total_slots || rng_.u01() < tele_share) {
                result_.success = rng_.bernoulli(
                    teleop_success_prob(cfg_.reliability, cfg_.operator_coeff));
            } else {
                result_.success = rng_.bernoulli(autonomy_survival(cfg_, 1.0));
            }
        }
        if (result_.success) {
            reward += 100.0 * static_cast<double>(cfg_.total_slots - result_.tele_slots) /
                      static_cast<double>(cfg_.total_slots);
        }
        if (cfg_.use_finite_blocklength) {
            result_.load_bits_per_slot =
                communication_load(result_.tele_slots, cfg_.total_slots, cfg_.channel,
                                   cfg_.reliability.decoding_error);
        } else {
            result_.load_bits_per_slot =
                fixed_payload_load(result_.tele_slots, cfg_.total_slots, cfg_.bits_per_slot);
        }
    }
    result_.cumulative_reward += reward;
    return {state_, reward, done_};
}

const EpisodeResult& ModeSwitchEnv::result() const {
    if (!done_) throw std::logic_error("ModeSwitchEnv: episode still running");
    return result_;
}

Policy always_stay_policy() {
    return [](const EnvState&) { return 0; };
}

Policy threshold_policy(double switch_fraction) {
    if (switch_fraction < 0.0 || switch_fraction > 1.0) {
        throw std::invalid_argument("threshold_policy: fraction must be in [0, 1]");
    }
    return [switch_fraction](const EnvState& s) {
        return (s.mode == Mode::Tele && s.observed_fraction >= switch_fraction) ? 1 : 0;
    };
}

EpisodeResult run_episode(const EpisodeConfig& cfg, const Policy& policy, Rng rng,
                          const IntentProvider& provider) {
    ModeSwitchEnv env(cfg, provider);
    env.reset(rng);
    while (!env.done()) env.step(policy(env.state()));
    return env.result();
}

std::vector<TraceRow> trace_episode(const EpisodeConfig& cfg, const Policy& policy, Rng rng,
                                    EpisodeResult* out_result, const IntentProvider& provider) {
    ModeSwitchEnv env(cfg, provider);
    env.reset(rng);
    std::vector<TraceRow> rows;
    int slot = 0;
    while (!env.done()) {
        const int action = policy(env.state());
        const auto outcome = env.step(action);
        TraceRow row;
        row.slot = slot;
        row.action = action;
        row.reward = outcome.reward;
        row.intent_argmax = outcome.state.intent.argmax();
        row.mode = outcome.state.mode;
        rows.push_back(row);
        ++slot;
    }
    const EpisodeResult& res = env.result();
    for (const SwitchEvent& ev : res.switches) {
        if (ev.slot < static_cast<int>(rows.size())) {
            rows[static_cast<std::size_t>(ev.slot)].cause = switch_cause_name(ev.cause);
        }
    }
    if (out_result) *out_result = res;
    return rows;
}

}  // namespace teleop
