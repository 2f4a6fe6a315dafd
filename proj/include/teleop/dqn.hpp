#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "teleop/env.hpp"
#include "teleop/nn/core.hpp"
#include "teleop/nn/train.hpp"

namespace teleop {

struct Transition {
    Eigen::VectorXd state;
    int action = 0;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool terminal = false;
};

// Fixed-capacity ring of transitions, oldest evicted first, sampled
// uniformly with replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void store(Transition t);
    std::vector<const Transition*> sample(int n, Rng& rng) const;

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }
    const Transition& at(std::size_t i) const { return storage_[i]; }

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::uint64_t inserted_ = 0;
    std::vector<Transition> storage_;
};

struct DqnHyperparams {
    double discount = 0.99;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_frac = 0.2;  // share of total steps spent decaying
    int batch_size = 64;
    int target_sync_period = 1000;
    std::size_t buffer_capacity = 100000;
    int min_buffer_fill = 1000;
    long total_steps = 200000;
    double learning_rate = 1e-3;
    std::vector<int> hidden = {64, 64};
    int ma_window_episodes = 400;
    int log_period_steps = 1000;

    void validate() const;
    double epsilon_at(long step) const;
};

// Flat state encoding: the intention vector, the observed fraction and a
// one-hot of the current mode.
Eigen::VectorXd encode_state(const EnvState& s);
int encoded_state_size(int n_classes);

nn::Network build_q_network(int n_classes, const std::vector<int>& hidden, Rng& rng);

// Epsilon-greedy action; exact Q-value ties resolve to action 0 (stay).
int select_action(nn::Network& q, const Eigen::VectorXd& state, double epsilon, Rng& rng);

// One bootstrap target per transition: the reward alone at terminals, else
// reward plus the discounted best target-network value of the successor.
std::vector<double> bellman_targets(const std::vector<const Transition*>& batch,
                                    nn::Network& target_net, double discount);

// One optimizer step on the mean squared error between Q(s, a) and the
// target, with gradient flowing only through the taken action's value.
double dqn_train_step(nn::Network& main_net, const std::vector<const Transition*>& batch,
                      const std::vector<double>& targets, nn::Optimizer& opt);

void sync_target(nn::Network& main_net, nn::Network& target_net);

struct TrainingCurvePoint {
    long step = 0;
    double moving_avg_success = 0.0;
    double mean_tele_share = 0.0;
    double loss = 0.0;
    double epsilon = 0.0;
};

struct DqnTrainResult {
    nn::Network policy;  // best checkpoint by moving-average success
    std::vector<TrainingCurvePoint> curve;
    double best_moving_avg_success = 0.0;
    long episodes = 0;
    bool action_collapse_flagged = false;
};

DqnTrainResult train_dqn(const EpisodeConfig& env_cfg, const DqnHyperparams& hp,
                         std::uint64_t seed);

// Greedy rollout statistics of a frozen Q-network.
struct EvalStats {
    double mean_success = 0.0;
    double mean_tele_share = 0.0;
    double mean_reward = 0.0;
};
EvalStats evaluate_policy(nn::Network& q, const EpisodeConfig& env_cfg, int episodes,
                          std::uint64_t seed);

// Wraps a frozen Q-network as an environment policy.
Policy greedy_policy(nn::Network& q);

}  // namespace teleop
