#include "teleop/trajectory.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace teleop {

namespace {

constexpr double kPi = std::numbers::pi;

// Letter templates. Classes {0,1} share one base stroke, {2,3} another; the
// class-specific deviation is blended in smoothly around 52% of the task.
double base_stroke(int pair, double s) {
    if (pair == 0) return 0.90 * std::sin(1.7 * kPi * s) + 0.35 * s;
    return 0.80 * std::cos(1.3 * kPi * s) - 0.25 * s + 0.15;
}

double deviation(int label, double s) {
    const double u = s - 0.52;
    switch (label) {
        case 0: return 0.65 * std::sin(2.1 * kPi * u) + 0.25 * u;
        case 1: return -0.65 * std::sin(2.1 * kPi * u) - 0.25 * u;
        case 2: return 0.60 * std::sin(2.4 * kPi * u) + 0.30 * u;
        default: return -0.60 * std::sin(2.4 * kPi * u) - 0.30 * u;
    }
}

double blend(double s) { return 0.5 * (1.0 + std::tanh((s - 0.52) / 0.06)); }

double template_position(int label, double s) {
    return base_stroke(label / 2, s) + blend(s) * deviation(label, s);
}

// Smooth per-trajectory perturbation: a few random low-frequency harmonics.
struct FourierNoise {
    static constexpr int kHarmonics = 4;
    std::array<double, kHarmonics> amp{};
    std::array<double, kHarmonics> phase{};

    FourierNoise(Rng& rng, double scale) {
        for (int k = 0; k < kHarmonics; ++k) {
            amp[k] = scale * rng.normal() / static_cast<double>(k + 1);
            phase[k] = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    double at(double s) const {
        double v = 0.0;
        for (int k = 0; k < kHarmonics; ++k)
            v += amp[k] * std::sin((k + 1) * kPi * s + phase[k]);
        return v;
    }
};

int draw_length(int label, Rng& rng) {
    // Overlapping class-dependent ranges; grand mean is 330 slots.
    const int lo = 306 + 4 * label;
    const int hi = 342 + 4 * label;
    return rng.uniform_int(lo, hi);
}

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

constexpr char kMagic[8] = {'T', 'E', 'L', 'E', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kVersion = 1;

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("load_dataset: cannot open " + path);
    }

    void read_raw(void* dst, std::size_t n, const char* what) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw std::runtime_error("load_dataset: truncated file while reading " +
                                     std::string(what) + " at byte offset " +
                                     std::to_string(offset_ + in_.gcount()));
        }
        offset_ += n;
    }

    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        read_raw(&v, sizeof(v), what);
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint64_t v;
        read_raw(&v, sizeof(v), what);
        return v;
    }
    double f64(const char* what) {
        double v;
        read_raw(&v, sizeof(v), what);
        return v;
    }

private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

std::vector<int> read_index_list(Reader& r, const char* what) {
    const auto n = r.u64(what);
    std::vector<int> idx(n);
    for (auto& v : idx) v = static_cast<int>(r.u64(what));
    return idx;
}

}  // namespace

Trajectory generate_letter(int label, Rng& rng, double noise_scale,
                           double slot_duration_s) {
    if (label < 0 || label > 3) {
        throw std::invalid_argument("generate_letter: unknown label " + std::to_string(label));
    }
    if (noise_scale < 0.0) {
        throw std::invalid_argument("generate_letter: noise_scale must be >= 0");
    }

    const int length = draw_length(label, rng);
    const FourierNoise q_noise(rng, noise_scale);
    const FourierNoise f_noise(rng, noise_scale * 0.6);
    const FourierNoise tq_noise(rng, noise_scale * 0.3);

    Trajectory traj;
    traj.label = label;
    traj.slot_duration_s = slot_duration_s;
    traj.samples.resize(length);

    const double dt = slot_duration_s;
    for (int t = 0; t < length; ++t) {
        const double s = static_cast<double>(t) / static_cast<double>(length - 1);
        Observation& ob = traj.samples[t];
        ob.position = template_position(label, s) + q_noise.at(s);
        // Load profiles are smooth and carry no class information.
        ob.force = 1.5 + 1.2 * std::sin(kPi * s + 0.4) + f_noise.at(s);
        ob.torque = 0.1 + 0.4 * std::sin(2.0 * kPi * s) * (1.0 - 0.3 * s) + tq_noise.at(s);
    }
    for (int t = 1; t < length; ++t) {
        traj.samples[t].velocity =
            (traj.samples[t].position - traj.samples[t - 1].position) / dt;
    }
    for (int t = 1; t < length; ++t) {
        traj.samples[t].acceleration =
            (traj.samples[t].velocity - traj.samples[t - 1].velocity) / dt;
    }
    return traj;
}

Dataset generate_dataset(const DatasetParams& params, std::uint64_t seed) {
    if (params.n_per_class < 10) {
        throw std::invalid_argument("generate_dataset: n_per_class must be >= 10");
    }
    if (params.n_classes < 2 || params.n_classes > 4) {
        throw std::invalid_argument("generate_dataset: n_classes must be in [2, 4]");
    }

    Dataset ds;
    ds.params = params;
    ds.seed = seed;
    ds.trajectories.resize(static_cast<std::size_t>(params.n_per_class) * params.n_classes);

    for (int c = 0; c < params.n_classes; ++c) {
        for (int i = 0; i < params.n_per_class; ++i) {
            const int idx = c * params.n_per_class + i;
            Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(idx));
            ds.trajectories[idx] =
                generate_letter(c, rng, params.noise_scale, params.slot_duration_s);
        }
    }

    // Per-class 70/15/15 split keeps class counts balanced in every part.
    const int n = params.n_per_class;
    const int n_train = static_cast<int>(std::floor(0.70 * n));
    const int n_val = static_cast<int>(std::floor(0.15 * n));
    for (int c = 0; c < params.n_classes; ++c) {
        const int base = c * n;
        for (int i = 0; i < n; ++i) {
            const int idx = base + i;
            if (i < n_train) ds.train_idx.push_back(idx);
            else if (i < n_train + n_val) ds.val_idx.push_back(idx);
            else ds.test_idx.push_back(idx);
        }
    }
    return ds;
}

ObservationWindow window(const Trajectory& traj, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0) {
        throw std::invalid_argument("window: fraction must be in (0, 1]");
    }
    const int len = traj.length();
    const int w = static_cast<int>(std::floor(fraction * len));
    if (w < 1) throw std::invalid_argument("window: window shorter than 1 slot");

    ObservationWindow ow;
    ow.label = traj.label;
    ow.fraction = fraction;
    ow.slot_duration_s = traj.slot_duration_s;
    ow.samples.assign(traj.samples.begin(), traj.samples.begin() + w);
    ow.suffix.assign(traj.samples.begin() + w, traj.samples.end());
    return ow;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path);

    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(ds.params.n_classes));
    write_u32(out, static_cast<std::uint32_t>(ds.params.n_per_class));
    write_f64(out, ds.params.noise_scale);
    write_f64(out, ds.params.slot_duration_s);
    write_u64(out, ds.seed);
    write_u64(out, static_cast<std::uint64_t>(ds.trajectories.size()));

    for (const auto* idx : {&ds.train_idx, &ds.val_idx, &ds.test_idx}) {
        write_u64(out, static_cast<std::uint64_t>(idx->size()));
        for (int v : *idx) write_u64(out, static_cast<std::uint64_t>(v));
    }

    for (const Trajectory& traj : ds.trajectories) {
        write_u32(out, static_cast<std::uint32_t>(traj.label));
        write_u64(out, static_cast<std::uint64_t>(traj.samples.size()));
        for (const Observation& ob : traj.samples) {
            write_f64(out, ob.position);
            write_f64(out, ob.velocity);
            write_f64(out, ob.acceleration);
            write_f64(out, ob.force);
            write_f64(out, ob.torque);
        }
    }
    if (!out) throw std::runtime_error("save_dataset: write error on " + path);
}

Dataset load_dataset(const std::string& path) {
    Reader r(path);

    char magic[8];
    r.read_raw(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("load_dataset: " + path + " is not a dataset file");
    }
    const auto version = r.u32("version");
    if (version != kVersion) {
        throw std::runtime_error("load_dataset: unsupported version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kVersion) + ")");
    }

    Dataset ds;
    ds.params.n_classes = static_cast<int>(r.u32("n_classes"));
    ds.params.n_per_class = static_cast<int>(r.u32("n_per_class"));
    ds.params.noise_scale = r.f64("noise_scale");
    ds.params.slot_duration_s = r.f64("slot_duration");
    ds.seed = r.u64("seed");
    const auto n_traj = r.u64("trajectory count");

    ds.train_idx = read_index_list(r, "train split");
    ds.val_idx = read_index_list(r, "val split");
    ds.test_idx = read_index_list(r, "test split");

    ds.trajectories.resize(n_traj);
    for (std::uint64_t i = 0; i < n_traj; ++i) {
        Trajectory& traj = ds.trajectories[i];
        traj.label = static_cast<int>(r.u32("trajectory label"));
        traj.slot_duration_s = ds.params.slot_duration_s;
        const auto len = r.u64("trajectory length");
        traj.samples.resize(len);
        for (auto& ob : traj.samples) {
            ob.position = r.f64("sample");
            ob.velocity = r.f64("sample");
            ob.acceleration = r.f64("sample");
            ob.force = r.f64("sample");
            ob.torque = r.f64("sample");
        }
    }
    return ds;
}

void export_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_dataset_csv: cannot open " + path);
    out << "t,q,v,a,f,tq,label,traj_id\n";
    char row[192];
    for (int i = 0; i < ds.size(); ++i) {
        const Trajectory& traj = ds.trajectories[i];
        for (int t = 0; t < traj.length(); ++t) {
            const Observation& ob = traj.samples[t];
            std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n",
                          t, ob.position, ob.velocity, ob.acceleration, ob.force,
                          ob.torque, traj.label, i);
            out << row;
        }
    }
}

}  // namespace teleop
