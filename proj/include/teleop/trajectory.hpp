#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teleop/rng.hpp"

namespace teleop {

// One time slot of the kinematic/force recording.
struct Observation {
    double position = 0.0;      // rad
    double velocity = 0.0;      // rad/s
    double acceleration = 0.0;  // rad/s^2
    double force = 0.0;         // N
    double torque = 0.0;        // N*m
};

constexpr int kObservationChannels = 5;

struct Trajectory {
    int label = 0;  // task class
    double slot_duration_s = 0.02;
    std::vector<Observation> samples;

    int length() const { return static_cast<int>(samples.size()); }
};

// Prefix of a trajectory as seen by the predictors, plus the ground truth
// needed for training and evaluation.
struct ObservationWindow {
    int label = 0;
    double fraction = 1.0;  // window length / full task length
    double slot_duration_s = 0.02;
    std::vector<Observation> samples;
    std::vector<Observation> suffix;  // remainder of the task
};

struct DatasetParams {
    int n_per_class = 150;
    int n_classes = 4;
    double noise_scale = 0.12;
    double slot_duration_s = 0.02;
};

struct Dataset {
    DatasetParams params;
    std::uint64_t seed = 0;
    std::vector<Trajectory> trajectories;
    std::vector<int> train_idx;
    std::vector<int> val_idx;
    std::vector<int> test_idx;

    int size() const { return static_cast<int>(trajectories.size()); }
};

// Draws one synthetic letter-writing trajectory. Each class is a smooth
// parametric stroke; classes come in pairs that share their early shape and
// separate in the second half, so short observation prefixes are genuinely
// ambiguous. Position noise is a low-order random Fourier perturbation,
// velocity and acceleration follow by finite differences of the noisy
// position.
Trajectory generate_letter(int label, Rng& rng, double noise_scale,
                           double slot_duration_s = 0.02);

// Balanced labeled dataset with a per-class 70/15/15 train/val/test split.
// Fully determined by (params, seed); trajectory i uses a derived stream so
// generation order does not matter.
Dataset generate_dataset(const DatasetParams& params, std::uint64_t seed);

// First floor(fraction * length) samples plus the remaining suffix.
// fraction must lie in (0, 1] and the window must span at least one slot.
ObservationWindow window(const Trajectory& traj, double fraction);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// One row per sample: t,q,v,a,f,tq,label,traj_id.
void export_dataset_csv(const Dataset& ds, const std::string& path);

}  // namespace teleop
