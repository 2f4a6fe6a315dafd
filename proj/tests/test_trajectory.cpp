#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "teleop/trajectory.hpp"

using namespace teleop;

namespace {

std::vector<double> resample_q(const Trajectory& traj, int points) {
    std::vector<double> out(points);
    const int len = traj.length();
    for (int j = 0; j < points; ++j) {
        const double pos = static_cast<double>(j) * (len - 1) / (points - 1);
        const int lo = static_cast<int>(pos);
        const int hi = std::min(lo + 1, len - 1);
        const double w = pos - lo;
        out[j] = (1.0 - w) * traj.samples[lo].position + w * traj.samples[hi].position;
    }
    return out;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string temp_path(const char* name) {
    return std::string("/tmp/teleop_test_") + name;
}

}  // namespace

TEST_CASE("letter generation is deterministic given the seed") {
    for (double noise : {0.0, 0.12}) {
        Rng a(42), b(42);
        const Trajectory ta = generate_letter(2, a, noise);
        const Trajectory tb = generate_letter(2, b, noise);
        REQUIRE(ta.length() == tb.length());
        for (int t = 0; t < ta.length(); ++t) {
            CHECK(ta.samples[t].position == tb.samples[t].position);
            CHECK(ta.samples[t].force == tb.samples[t].force);
        }
    }
    Rng r(1);
    CHECK_THROWS_AS(generate_letter(4, r, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(generate_letter(-1, r, 0.0), std::invalid_argument);
}

TEST_CASE("noise-free templates of paired classes are distinct") {
    Rng a(5), b(5);
    const Trajectory t0 = generate_letter(0, a, 0.0);
    const Trajectory t1 = generate_letter(1, b, 0.0);
    const auto q0 = resample_q(t0, 200);
    const auto q1 = resample_q(t1, 200);
    double max_gap = 0.0;
    for (int j = 0; j < 200; ++j) max_gap = std::max(max_gap, std::abs(q0[j] - q1[j]));
    // Well above ten times the default position-noise level (~0.1 rad RMS).
    CHECK(max_gap > 1.0);
}

TEST_CASE("paired classes share their early stroke") {
    Rng a(5), b(5);
    const Trajectory t0 = generate_letter(0, a, 0.0);
    const Trajectory t1 = generate_letter(1, b, 0.0);
    const auto q0 = resample_q(t0, 200);
    const auto q1 = resample_q(t1, 200);
    double early_gap = 0.0;
    for (int j = 0; j < 60; ++j) early_gap = std::max(early_gap, std::abs(q0[j] - q1[j]));
    CHECK(early_gap < 0.05);  // ambiguous before the stroke divergence
}

TEST_CASE("velocity and acceleration are consistent finite differences") {
    Rng rng(9);
    const Trajectory traj = generate_letter(1, rng, 0.12);
    const double dt = traj.slot_duration_s;
    for (int t = 1; t < traj.length(); ++t) {
        const double v = (traj.samples[t].position - traj.samples[t - 1].position) / dt;
        CHECK(std::abs(traj.samples[t].velocity - v) < 1e-6);
        const double a = (traj.samples[t].velocity - traj.samples[t - 1].velocity) / dt;
        CHECK(std::abs(traj.samples[t].acceleration - a) < 1e-6);
    }
    CHECK(traj.samples[0].velocity == 0.0);
    CHECK(traj.samples[0].acceleration == 0.0);
}

TEST_CASE("dataset has the documented size, balance and split") {
    DatasetParams params;
    const Dataset ds = generate_dataset(params, 77);
    CHECK(ds.size() == 600);

    std::array<int, 4> counts{};
    for (const auto& t : ds.trajectories) counts[static_cast<std::size_t>(t.label)]++;
    for (int c : counts) CHECK(c == 150);

    CHECK(ds.train_idx.size() == 4 * 105);
    CHECK(ds.val_idx.size() == 4 * 22);
    CHECK(ds.test_idx.size() == 4 * 23);

    std::vector<int> seen(static_cast<std::size_t>(ds.size()), 0);
    for (const auto* split : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) {
        for (int idx : *split) seen[static_cast<std::size_t>(idx)]++;
    }
    for (int s : seen) CHECK(s == 1);  // disjoint and exhaustive

    double total_points = 0.0;
    for (const auto& t : ds.trajectories) total_points += t.length();
    CHECK(total_points / ds.size() == doctest::Approx(330.0).epsilon(0.02));
    CHECK(total_points == doctest::Approx(1.98e5).epsilon(0.02));
}

TEST_CASE("small dataset split arithmetic") {
    DatasetParams params;
    params.n_per_class = 10;
    const Dataset ds = generate_dataset(params, 3);
    CHECK(ds.train_idx.size() == 4 * 7);
    CHECK(ds.val_idx.size() == 4 * 1);
    CHECK(ds.test_idx.size() == 4 * 2);
    CHECK_THROWS_AS(generate_dataset(DatasetParams{.n_per_class = 5}, 3),
                    std::invalid_argument);
}

TEST_CASE("window returns prefix plus suffix") {
    Rng rng(13);
    const Trajectory traj = generate_letter(0, rng, 0.05);
    const int len = traj.length();

    const ObservationWindow whole = window(traj, 1.0);
    CHECK(whole.samples.size() == static_cast<std::size_t>(len));
    CHECK(whole.suffix.empty());
    CHECK(whole.label == 0);

    const ObservationWindow half = window(traj, 0.5);
    CHECK(half.samples.size() == static_cast<std::size_t>(len / 2));
    CHECK(half.samples.size() + half.suffix.size() == static_cast<std::size_t>(len));

    const ObservationWindow w6 = window(traj, 0.6);
    for (std::size_t i = 0; i < half.samples.size(); ++i) {
        CHECK(half.samples[i].position == w6.samples[i].position);
    }

    CHECK_THROWS_AS(window(traj, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(window(traj, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(window(traj, 1e-4), std::invalid_argument);  // under one slot
}

TEST_CASE("window of a 330-slot task at one half spans 165 slots") {
    Trajectory traj;
    traj.label = 1;
    traj.samples.resize(330);
    CHECK(window(traj, 0.5).samples.size() == 165);
}

TEST_CASE("dataset round trips through the binary format") {
    DatasetParams params;
    params.n_per_class = 12;
    const Dataset ds = generate_dataset(params, 123);
    const std::string path = temp_path("roundtrip.bin");
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);

    CHECK(back.seed == ds.seed);
    CHECK(back.params.n_per_class == ds.params.n_per_class);
    CHECK(back.train_idx == ds.train_idx);
    CHECK(back.val_idx == ds.val_idx);
    CHECK(back.test_idx == ds.test_idx);
    REQUIRE(back.size() == ds.size());
    for (int i = 0; i < ds.size(); ++i) {
        REQUIRE(back.trajectories[i].length() == ds.trajectories[i].length());
        CHECK(back.trajectories[i].label == ds.trajectories[i].label);
        for (int t = 0; t < ds.trajectories[i].length(); ++t) {
            CHECK(back.trajectories[i].samples[t].position ==
                  ds.trajectories[i].samples[t].position);
            CHECK(back.trajectories[i].samples[t].torque ==
                  ds.trajectories[i].samples[t].torque);
        }
    }
}

TEST_CASE("identical seeds serialize byte-identically") {
    DatasetParams params;
    params.n_per_class = 10;
    const std::string pa = temp_path("bytes_a.bin");
    const std::string pb = temp_path("bytes_b.bin");
    save_dataset(generate_dataset(params, 99), pa);
    save_dataset(generate_dataset(params, 99), pb);
    CHECK(file_bytes(pa) == file_bytes(pb));
    save_dataset(generate_dataset(params, 100), pb);
    CHECK(file_bytes(pa) != file_bytes(pb));
}

TEST_CASE("truncated files and version mismatches are reported") {
    DatasetParams params;
    params.n_per_class = 10;
    const std::string path = temp_path("broken.bin");
    save_dataset(generate_dataset(params, 7), path);

    std::string bytes = file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        load_dataset(path);
        FAIL("expected truncation error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }

    bytes[8] = 9;  // version field follows the 8-byte magic
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        load_dataset(path);
        FAIL("expected version error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
    }
}

TEST_CASE("csv export has the documented columns") {
    DatasetParams params;
    params.n_per_class = 10;
    const Dataset ds = generate_dataset(params, 7);
    const std::string path = temp_path("export.csv");
    export_dataset_csv(ds, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,q,v,a,f,tq,label,traj_id");
    std::string row;
    std::getline(in, row);
    CHECK(row.substr(0, 2) == "0,");
}

TEST_CASE("nearest-centroid baseline separates full trajectories") {
    // Class centroids of resampled position sequences from the train split
    // must classify the test split almost perfectly at the default noise:
    // the learning task is well-posed before any neural training.
    DatasetParams params;
    const Dataset ds = generate_dataset(params, 2024);
    constexpr int kPoints = 100;

    std::array<std::vector<double>, 4> centroid;
    std::array<int, 4> counts{};
    for (auto& c : centroid) c.assign(kPoints, 0.0);
    for (int idx : ds.train_idx) {
        const auto q = resample_q(ds.trajectories[static_cast<std::size_t>(idx)], kPoints);
        const int label = ds.trajectories[static_cast<std::size_t>(idx)].label;
        for (int j = 0; j < kPoints; ++j) centroid[static_cast<std::size_t>(label)][j] += q[j];
        counts[static_cast<std::size_t>(label)]++;
    }
    for (int c = 0; c < 4; ++c) {
        for (auto& v : centroid[static_cast<std::size_t>(c)]) v /= counts[static_cast<std::size_t>(c)];
    }

    int correct = 0;
    for (int idx : ds.test_idx) {
        const auto q = resample_q(ds.trajectories[static_cast<std::size_t>(idx)], kPoints);
        double best = 1e300;
        int best_c = -1;
        for (int c = 0; c < 4; ++c) {
            double dist = 0.0;
            for (int j = 0; j < kPoints; ++j) {
                const double d = q[j] - centroid[static_cast<std::size_t>(c)][j];
                dist += d * d;
            }
            if (dist < best) {
                best = dist;
                best_c = c;
            }
        }
        if (best_c == ds.trajectories[static_cast<std::size_t>(idx)].label) ++correct;
    }
    const double accuracy = static_cast<double>(correct) / ds.test_idx.size();
    CHECK(accuracy >= 0.99);
}
