#include "teleop/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <stdexcept>

namespace teleop {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    storage_.reserve(capacity);
}

void ReplayBuffer::store(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
    ++inserted_;
}

std::vector<const Transition*> ReplayBuffer::sample(int n, Rng& rng) const {
    if (n <= 0) throw std::invalid_argument("ReplayBuffer: sample size must be positive");
    if (storage_.size() < static_cast<std::size_t>(n)) {
        throw std::logic_error("ReplayBuffer: not enough transitions to sample");
    }
    std::vector<const Transition*> batch(static_cast<std::size_t>(n));
    for (auto& slot : batch) {
        slot = &storage_[static_cast<std::size_t>(rng.below(storage_.size()))];
    }
    return batch;
}

void DqnHyperparams::validate() const {
    if (discount < 0.0 || discount >= 1.0) {
        throw std::invalid_argument("DqnHyperparams: discount must be in [0, 1)");
    }
    if (eps_start < 0.0 || eps_start > 1.0 || eps_end < 0.0 || eps_end > 1.0) {
        throw std::invalid_argument("DqnHyperparams: epsilon bounds must be in [0, 1]");
    }
    if (eps_decay_frac <= 0.0 || eps_decay_frac > 1.0) {
        throw std::invalid_argument("DqnHyperparams: eps_decay_frac must be in (0, 1]");
    }
    if (batch_size <= 0 || target_sync_period <= 0 || min_buffer_fill <= 0 ||
        total_steps <= 0 || learning_rate <= 0.0 || ma_window_episodes <= 0 ||
        log_period_steps <= 0) {
        throw std::invalid_argument("DqnHyperparams: all quantities must be positive");
    }
    if (buffer_capacity < static_cast<std::size_t>(batch_size)) {
        throw std::invalid_argument("DqnHyperparams: buffer smaller than a batch");
    }
}

double DqnHyperparams::epsilon_at(long step) const {
    const double decay_steps = eps_decay_frac * static_cast<double>(total_steps);
    if (static_cast<double>(step) >= decay_steps) return eps_end;
    const double w = static_cast<double>(step) / decay_steps;
    return eps_start + w * (eps_end - eps_start);
}

Eigen::VectorXd encode_state(const EnvState& s) {
    const int n = static_cast<int>(s.intent.probabilities.size());
    Eigen::VectorXd v(n + 3);
    v.head(n) = s.intent.probabilities;
    v[n] = s.observed_fraction;
    v[n + 1] = (s.mode == Mode::Tele) ? 1.0 : 0.0;
    v[n + 2] = (s.mode == Mode::Auto) ? 1.0 : 0.0;
    return v;
}

int encoded_state_size(int n_classes) { return n_classes + 3; }

nn::Network build_q_network(int n_classes, const std::vector<int>& hidden, Rng& rng) {
    nn::Network net;
    int width = encoded_state_size(n_classes);
    for (int h : hidden) {
        net.add(std::make_unique<nn::DenseLayer>(width, h, nn::Activation::ReLU));
        width = h;
    }
    net.add(std::make_unique<nn::DenseLayer>(width, 2, nn::Activation::Linear));
    net.init(rng);
    return net;
}

int select_action(nn::Network& q, const Eigen::VectorXd& state, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw std::invalid_argument("select_action: epsilon must be in [0, 1]");
    }
    if (epsilon > 0.0 && rng.u01() < epsilon) {
        return static_cast<int>(rng.below(2));
    }
    nn::Value out = q.forward(nn::Value::of(nn::Matrix(state)));
    return (out.vec(1, 0) > out.vec(0, 0)) ? 1 : 0;
}

std::vector<double> bellman_targets(const std::vector<const Transition*>& batch,
                                    nn::Network& target_net, double discount) {
    if (batch.empty()) throw std::invalid_argument("bellman_targets: empty batch");
    std::vector<double> targets(batch.size());

    // Forward only the non-terminal successors, all in one batch.
    std::vector<std::size_t> open;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (!batch[j]->terminal) open.push_back(j);
    }
    if (!open.empty()) {
        nn::Matrix next(batch[0]->next_state.size(), static_cast<Eigen::Index>(open.size()));
        for (std::size_t k = 0; k < open.size(); ++k) next.col(static_cast<Eigen::Index>(k)) = batch[open[k]]->next_state;
        const nn::Value out = target_net.forward(nn::Value::of(std::move(next)));
        for (std::size_t k = 0; k < open.size(); ++k) {
            const auto col = out.vec.col(static_cast<Eigen::Index>(k));
            targets[open[k]] = batch[open[k]]->reward + discount * col.maxCoeff();
        }
    }
    for (std::size_t j = 0; j < batch.size(); ++j) {
        if (batch[j]->terminal) targets[j] = batch[j]->reward;
    }
    return targets;
}

double dqn_train_step(nn::Network& main_net, const std::vector<const Transition*>& batch,
                      const std::vector<double>& targets, nn::Optimizer& opt) {
    if (batch.size() != targets.size()) {
        throw std::invalid_argument("dqn_train_step: batch/target size mismatch");
    }
    nn::Matrix states(batch[0]->state.size(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t j = 0; j < batch.size(); ++j) states.col(static_cast<Eigen::Index>(j)) = batch[j]->state;

    main_net.zero_grads();
    const nn::Value out = main_net.forward(nn::Value::of(std::move(states)));

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    nn::Matrix grad = nn::Matrix::Zero(out.vec.rows(), out.vec.cols());
    double loss = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const int a = batch[j]->action;
        const double diff = out.vec(a, col) - targets[j];
        loss += diff * diff * inv_n;
        grad(a, col) = 2.0 * diff * inv_n;  // only the taken action carries gradient
    }
    if (!std::isfinite(loss)) {
        throw std::runtime_error("dqn_train_step: non-finite loss");
    }
    main_net.backward(nn::Value::of(std::move(grad)));
    opt.step(main_net);
    return loss;
}

void sync_target(nn::Network& main_net, nn::Network& target_net) {
    target_net.set_flat_params(main_net.get_flat_params());
}

DqnTrainResult train_dqn(const EpisodeConfig& env_cfg, const DqnHyperparams& hp,
                         std::uint64_t seed) {
    hp.validate();
    env_cfg.validate();

    Rng agent_rng = Rng::derive(seed, 0x61);
    Rng net_rng = Rng::derive(seed, 0x6e);

    DqnTrainResult result;
    nn::Network main_net = build_q_network(env_cfg.n_classes, hp.hidden, net_rng);
    nn::Network target_net = build_q_network(env_cfg.n_classes, hp.hidden, net_rng);
    sync_target(main_net, target_net);
    nn::Optimizer opt(nn::OptimizerKind::Adam, hp.learning_rate);
    ReplayBuffer buffer(hp.buffer_capacity);

    ModeSwitchEnv env(env_cfg);
    long episode_idx = 0;
    Eigen::VectorXd state = encode_state(env.reset(Rng::derive(seed, 0x10000 + episode_idx)));

    std::deque<int> recent_success;
    std::deque<double> recent_share;
    double success_sum = 0.0, share_sum = 0.0;
    double last_loss = 0.0;
    int same_action_run = 0;
    int last_action = -1;

    std::vector<double> best_params = main_net.get_flat_params();
    double best_ma = -1.0;

    for (long step = 0; step < hp.total_steps; ++step) {
        const double eps = hp.epsilon_at(step);
        const int action = select_action(main_net, state, eps, agent_rng);

        if (action == last_action) ++same_action_run;
        else {
            last_action = action;
            same_action_run = 1;
        }
        if (eps < 0.1 && same_action_run >= 2000 && !result.action_collapse_flagged) {
            result.action_collapse_flagged = true;
        }

        const auto outcome = env.step(action);
        Eigen::VectorXd next_state = encode_state(outcome.state);
        Transition t;
        t.state = std::move(state);
        t.action = action;
        t.reward = outcome.reward;
        t.next_state = next_state;
        t.terminal = outcome.done;
        buffer.store(std::move(t));

        if (outcome.done) {
            const EpisodeResult& er = env.result();
            recent_success.push_back(er.success ? 1 : 0);
            recent_share.push_back(er.tele_share());
            success_sum += recent_success.back();
            share_sum += recent_share.back();
            if (static_cast<int>(recent_success.size()) > hp.ma_window_episodes) {
                success_sum -= recent_success.front();
                share_sum -= recent_share.front();
                recent_success.pop_front();
                recent_share.pop_front();
            }
            ++episode_idx;
            state = encode_state(env.reset(Rng::derive(seed, 0x10000 + episode_idx)));
        } else {
            state = std::move(next_state);
        }

        if (buffer.size() >= static_cast<std::size_t>(
                                 std::max(hp.min_buffer_fill, hp.batch_size))) {
            const auto batch = buffer.sample(hp.batch_size, agent_rng);
            const auto targets = bellman_targets(batch, target_net, hp.discount);
            last_loss = dqn_train_step(main_net, batch, targets, opt);
        }
        if ((step + 1) % hp.target_sync_period == 0) sync_target(main_net, target_net);

        if ((step + 1) % hp.log_period_steps == 0 && !recent_success.empty()) {
            TrainingCurvePoint point;
            point.step = step + 1;
            point.moving_avg_success = success_sum / recent_success.size();
            point.mean_tele_share = share_sum / recent_share.size();
            point.loss = last_loss;
            point.epsilon = eps;
            result.curve.push_back(point);
            if (point.moving_avg_success > best_ma &&
                static_cast<int>(recent_success.size()) >= hp.ma_window_episodes / 2) {
                best_ma = point.moving_avg_success;
                best_params = main_net.get_flat_params();
            }
        }
    }

    result.policy = build_q_network(env_cfg.n_classes, hp.hidden, net_rng);
    result.policy.set_flat_params(best_params);
    result.best_moving_avg_success = best_ma;
    result.episodes = episode_idx;
    return result;
}

EvalStats evaluate_policy(nn::Network& q, const EpisodeConfig& env_cfg, int episodes,
                          std::uint64_t seed) {
    if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
    EvalStats stats;
    const Policy policy = greedy_policy(q);
    for (int e = 0; e < episodes; ++e) {
        const EpisodeResult r =
            run_episode(env_cfg, policy, Rng::derive(seed, 0x20000 + static_cast<std::uint64_t>(e)));
        stats.mean_success += r.success ? 1.0 : 0.0;
        stats.mean_tele_share += r.tele_share();
        stats.mean_reward += r.cumulative_reward;
    }
    stats.mean_success /= episodes;
    stats.mean_tele_share /= episodes;
    stats.mean_reward /= episodes;
    return stats;
}

Policy greedy_policy(nn::Network& q) {
    return [&q](const EnvState& s) {
        nn::Value out = q.forward(nn::Value::of(nn::Matrix(encode_state(s))));
        return (out.vec(1, 0) > out.vec(0, 0)) ? 1 : 0;
    };
}

}  // namespace teleop
