// Command-line harness: dataset generation, model training and the
// Monte Carlo sweeps, each emitting CSV artifacts under the output
// directory.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "teleop/dqn.hpp"
#include "teleop/experiment.hpp"
#include "teleop/intent.hpp"
#include "teleop/parallel.hpp"
#include "teleop/traj_pred.hpp"
#include "teleop/trajectory.hpp"

namespace fs = std::filesystem;
using namespace teleop;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<long> episodes;
    std::optional<int> workers;
    std::string data_path;  // dataset file; defaults to <out>/dataset.bin
};

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg =
        opts.config_path.empty() ? ExperimentConfig::defaults() : ExperimentConfig::load(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.episodes) cfg.sweep_episodes = *opts.episodes;
    if (opts.workers) cfg.workers = *opts.workers;
    return cfg;
}

std::string dataset_path(const CommonOpts& opts) {
    return opts.data_path.empty() ? opts.out_dir + "/dataset.bin" : opts.data_path;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config overriding the defaults");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--episodes", opts.episodes, "episodes per sweep point");
    cmd->add_option("--workers", opts.workers, "worker threads");
    cmd->add_option("--data", opts.data_path, "dataset file (default <out>/dataset.bin)");
}

void cmd_gen_data(const CommonOpts& opts, bool with_csv) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);
    const Dataset ds = generate_dataset(cfg.dataset, cfg.seed);
    save_dataset(ds, dataset_path(opts));
    if (with_csv) export_dataset_csv(ds, opts.out_dir + "/dataset.csv");
    std::printf("wrote %s (%d trajectories, seed %llu)\n", dataset_path(opts).c_str(),
                ds.size(), static_cast<unsigned long long>(cfg.seed));
}

void cmd_train_intent(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);
    const Dataset ds = load_dataset(dataset_path(opts));

    ClassifierTrainLog log;
    const Classifier clf = train_classifier(ds, cfg.classifier, cfg.seed, &log);
    clf.save_file(opts.out_dir + "/intent_classifier.ckpt");

    const AccuracyCurve curve = accuracy_curve(clf, ds, cfg.curve_fractions);
    curve.save_csv(opts.out_dir + "/accuracy_curve.csv");

    std::ofstream train_log(opts.out_dir + "/intent_training_log.csv");
    train_log << "# config_hash=" << cfg.hash() << " seed=" << cfg.seed << "\n";
    train_log << "epoch,train_loss,val_accuracy\n";
    for (const auto& e : log.epochs) {
        train_log << e.epoch << ',' << e.train_loss << ',' << e.val_metric << '\n';
    }
    std::printf("best validation accuracy %.4f over %zu epochs\n", log.best_val_accuracy,
                log.epochs.size());
}

void cmd_train_traj(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);
    const Dataset ds = load_dataset(dataset_path(opts));

    struct Job {
        PredictorKind kind;
        double fraction;
    };
    std::vector<Job> jobs;
    for (PredictorKind kind : {PredictorKind::LSTM, PredictorKind::CNN}) {
        for (double f : cfg.predictor_fractions) jobs.push_back({kind, f});
    }

    std::vector<Predictor> trained(jobs.size());
    std::vector<PredictorTrainLog> logs(jobs.size());
    parallel_chunks(static_cast<long>(jobs.size()), cfg.workers,
                    [&](int, long begin, long end) {
                        for (long i = begin; i < end; ++i) {
                            PredictorConfig pc = cfg.predictor;
                            pc.kind = jobs[static_cast<std::size_t>(i)].kind;
                            trained[static_cast<std::size_t>(i)] = train_predictor(
                                ds, pc, jobs[static_cast<std::size_t>(i)].fraction,
                                mix_seed(cfg.seed, 0x7261, static_cast<std::uint64_t>(i)),
                                &logs[static_cast<std::size_t>(i)]);
                        }
                    });

    std::ofstream table(opts.out_dir + "/rrmse_table.csv");
    table << "# config_hash=" << cfg.hash() << " seed=" << cfg.seed << "\n";
    table << "fraction,train_rrmse,test_rrmse,kind\n";
    std::vector<const Predictor*> lstm_predictors;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Predictor& p = trained[i];
        const double test = evaluate_rrmse(p, ds, ds.test_idx);
        char name[128];
        std::snprintf(name, sizeof(name), "%s/predictor_%s_%02d.ckpt", opts.out_dir.c_str(),
                      predictor_kind_name(p.kind), static_cast<int>(p.fraction * 100 + 0.5));
        p.save_file(name);
        table << p.fraction << ',' << logs[i].train_rrmse << ',' << test << ','
              << predictor_kind_name(p.kind) << '\n';
        if (p.kind == PredictorKind::LSTM) lstm_predictors.push_back(&p);
    }
    const TrajErrorCurve curve = traj_error_curve(lstm_predictors, ds, cfg.rrmse_threshold_pct);
    curve.save_csv(opts.out_dir + "/traj_error_curve.csv");
    std::printf("trained %zu predictors; tables in %s\n", jobs.size(), opts.out_dir.c_str());
}

void cmd_train_dqn(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);

    const EpisodeConfig env_cfg = cfg.episode_config(cfg.dqn_total_slots);
    DqnTrainResult result = train_dqn(env_cfg, cfg.dqn, cfg.seed);
    result.policy.save_file(opts.out_dir + "/dqn_policy.ckpt");
    write_training_curve_csv(opts.out_dir + "/dqn_training_curve.csv", result.curve, cfg);

    const EvalStats stats = evaluate_policy(result.policy, env_cfg, 2000, cfg.seed);
    std::printf("episodes %ld, best moving-average success %.4f\n", result.episodes,
                result.best_moving_avg_success);
    std::printf("greedy eval: success %.4f, teleoperation share %.4f, reward %.2f\n",
                stats.mean_success, stats.mean_tele_share, stats.mean_reward);
    if (result.action_collapse_flagged) {
        std::printf("warning: policy collapsed to a single action for a long stretch\n");
    }
}

void cmd_sweep(const CommonOpts& opts, const std::string& which) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);
    const long episodes = cfg.sweep_episodes;
    if (which == "pt") {
        write_sweep_csv(opts.out_dir + "/sweep_pt.csv", "pt", sweep_pt(cfg, episodes), cfg);
    } else if (which == "loss") {
        write_sweep_csv(opts.out_dir + "/sweep_loss.csv", "packet_loss",
                        sweep_loss(cfg, episodes), cfg);
    } else {
        write_sweep_csv(opts.out_dir + "/sweep_operator.csv", "rho",
                        sweep_operator(cfg, episodes), cfg);
    }
    std::printf("wrote %s/sweep_%s.csv (%ld episodes per point)\n", opts.out_dir.c_str(),
                which.c_str(), episodes);
}

void cmd_trace(const CommonOpts& opts, const std::string& policy_path,
               const std::string& classifier_path) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out_dir);

    EpisodeConfig env_cfg = cfg.episode_config(cfg.sweep_total_slots);
    IntentProvider provider;  // defaults to the curve-driven oracle

    // With a trained classifier the estimates come from real windows of a
    // held-out trajectory.
    Dataset ds;
    Classifier clf;
    Trajectory traj;
    if (!classifier_path.empty()) {
        ds = load_dataset(dataset_path(opts));
        clf = Classifier::load_file(classifier_path);
        const std::size_t pick = static_cast<std::size_t>(
            mix_seed(cfg.seed, 0x74, 0) % ds.test_idx.size());
        traj = ds.trajectories[static_cast<std::size_t>(ds.test_idx[pick])];
        env_cfg.total_slots = traj.length();
        env_cfg.task_label = traj.label;
        provider = [&clf, &traj](double fraction, Rng&) {
            return predict_intention(clf, window(traj, std::max(fraction, 1e-6)));
        };
    }

    Policy policy;
    nn::Network q;
    if (!policy_path.empty()) {
        q = nn::Network::load_file(policy_path);
        policy = greedy_policy(q);
    } else {
        policy = threshold_policy(cfg.sweep_pt_fixed);
    }

    EpisodeResult result;
    const std::vector<TraceRow> rows =
        trace_episode(env_cfg, policy, Rng(mix_seed(cfg.seed, 0x7472, 0)), &result, provider);
    write_trace_csv(opts.out_dir + "/trace.csv", rows, cfg);
    std::printf("episode: success=%d tele_slots=%d/%d load=%.1f bits/slot switches=%zu\n",
                result.success ? 1 : 0, result.tele_slots, result.total_slots,
                result.load_bits_per_slot, result.switches.size());
}

void cmd_show_config(const CommonOpts& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    std::printf("%s\n", cfg.to_json_string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mode-switching teleoperation simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool gen_csv = false;
    std::string policy_path, classifier_path;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic trajectory dataset");
    add_common(gen, opts);
    gen->add_flag("--csv", gen_csv, "also export the dataset as CSV");

    auto* ti = app.add_subcommand("train-intent", "train the task classifier");
    add_common(ti, opts);

    auto* tt = app.add_subcommand("train-traj", "train the trajectory predictors");
    add_common(tt, opts);

    auto* td = app.add_subcommand("train-dqn", "train the mode-switching agent");
    add_common(td, opts);

    auto* sp = app.add_subcommand("sweep-pt", "completion and load vs teleoperation share");
    add_common(sp, opts);

    auto* sl = app.add_subcommand("sweep-loss", "completion vs packet loss probability");
    add_common(sl, opts);

    auto* so = app.add_subcommand("sweep-operator", "completion vs operator experience");
    add_common(so, opts);

    auto* tr = app.add_subcommand("trace", "slot-by-slot log of one episode");
    add_common(tr, opts);
    tr->add_option("--policy", policy_path, "trained agent checkpoint (default: threshold policy)");
    tr->add_option("--classifier", classifier_path,
                   "classifier checkpoint; estimates then come from real windows");

    auto* sc = app.add_subcommand("show-config", "print the resolved configuration");
    add_common(sc, opts);

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (gen->parsed()) cmd_gen_data(opts, gen_csv);
        else if (ti->parsed()) cmd_train_intent(opts);
        else if (tt->parsed()) cmd_train_traj(opts);
        else if (td->parsed()) cmd_train_dqn(opts);
        else if (sp->parsed()) cmd_sweep(opts, "pt");
        else if (sl->parsed()) cmd_sweep(opts, "loss");
        else if (so->parsed()) cmd_sweep(opts, "operator");
        else if (tr->parsed()) cmd_trace(opts, policy_path, classifier_path);
        else if (sc->parsed()) cmd_show_config(opts);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: {\"command\":\"%s\",\"message\":\"%s\"}\n", command.c_str(),
                     e.what());
        return 1;
    }
    return 0;
}
