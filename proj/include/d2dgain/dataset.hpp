#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "d2dgain/propagation.hpp"
#include "d2dgain/scenario.hpp"

namespace d2dgain {

// Supervised samples, stored structure-of-arrays. Feature row s holds the
// cellular path losses in dB, i-side BS 1..L then j-side BS 1..L; the
// target is the D2D path loss 10*log10(1/g_ij) in dB. One building/BS
// topology is fixed per dataset (derived from `seed`); only the UE
// endpoints vary per sample, unrestricted by d_max so interference links
// are covered too.
struct Dataset {
    AreaConfig area;
    RadioParams radio;
    std::uint64_t seed = 0;
    std::vector<double> features;  // size() x 2L, row-major
    std::vector<double> targets;   // size()

    int feature_dim() const { return 2 * area.n_bs; }
    std::size_t size() const { return targets.size(); }

    std::span<const double> feature_row(std::size_t s) const {
        return {features.data() + s * static_cast<std::size_t>(feature_dim()),
                static_cast<std::size_t>(feature_dim())};
    }
};

struct Sample {
    std::vector<double> features;
    double target_pl_db = 0.0;
};

inline Sample sample_at(const Dataset& d, std::size_t s) {
    auto row = d.feature_row(s);
    return {std::vector<double>(row.begin(), row.end()), d.targets[s]};
}

inline std::uint64_t topology_seed(std::uint64_t dataset_seed) {
    return derive_seed(dataset_seed, 7);
}

namespace detail {

constexpr std::size_t kGenChunk = 8192;

inline void generate_rows(const Scenario& topo, const RadioParams& radio,
                          std::uint64_t seed, std::size_t chunk,
                          std::size_t begin, std::size_t end,
                          double* features, double* targets) {
    const AreaConfig& cfg = topo.config;
    const int fl = cfg.n_bs;
    Rng rng(derive_seed(seed, kStreamSamples + chunk));
    // Estimation noise draws come from their own stream so that sample
    // positions — and therefore targets — are identical across snr settings.
    Rng noise_rng(derive_seed(seed, kStreamNoise + chunk));
    Node a, b;
    a.kind = b.kind = NodeKind::DueT;
    for (std::size_t s = begin; s < end; ++s) {
        a.position = draw_free_position(rng, cfg, topo.buildings, cfg.ue_height_m);
        b.position = draw_free_position(rng, cfg, topo.buildings, cfg.ue_height_m);
        double* f = features + s * static_cast<std::size_t>(2 * fl);
        for (int l = 0; l < fl; ++l)
            f[l] = link_pathloss_db(a, topo.bss[static_cast<std::size_t>(l)], topo, radio);
        for (int l = 0; l < fl; ++l)
            f[fl + l] = link_pathloss_db(b, topo.bss[static_cast<std::size_t>(l)], topo, radio);
        if (!std::isinf(radio.snr_g_db)) {
            for (int l = 0; l < 2 * fl; ++l) {
                double noisy =
                    apply_estimation_noise(gain_from_pathloss(f[l]), radio.snr_g_db, noise_rng);
                f[l] = pathloss_from_gain(noisy);
            }
        }
        targets[s] = link_pathloss_db(a, b, topo, radio);
    }
}

}  // namespace detail

// Chunked so generation parallelizes across threads without changing the
// result: chunk c always owns rows [c*8192, ...) and its own RNG stream.
inline Dataset generate_dataset(const AreaConfig& config, const RadioParams& radio,
                                std::size_t n_samples, std::uint64_t seed, int threads = 1) {
    config.validate();
    radio.validate();
    if (n_samples < 1) throw std::invalid_argument("dataset: n_samples must be >= 1");

    AreaConfig topo_cfg = config;
    topo_cfg.n_pairs = 0;
    topo_cfg.n_cues = 0;
    Scenario topo = generate_topology(topo_cfg, topology_seed(seed));

    Dataset d;
    d.area = config;
    d.radio = radio;
    d.seed = seed;
    d.features.resize(n_samples * static_cast<std::size_t>(2 * config.n_bs));
    d.targets.resize(n_samples);

    std::size_t n_chunks = (n_samples + detail::kGenChunk - 1) / detail::kGenChunk;
    auto run_chunks = [&](std::size_t first, std::size_t step) {
        for (std::size_t c = first; c < n_chunks; c += step) {
            std::size_t begin = c * detail::kGenChunk;
            std::size_t end = std::min(begin + detail::kGenChunk, n_samples);
            detail::generate_rows(topo, radio, seed, c, begin, end,
                                  d.features.data(), d.targets.data());
        }
    };
    int t = std::max(1, threads);
    if (t == 1 || n_chunks <= 1) {
        run_chunks(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < t; ++w)
            pool.emplace_back(run_chunks, static_cast<std::size_t>(w), static_cast<std::size_t>(t));
        for (auto& th : pool) th.join();
    }
    return d;
}

// Seeded shuffle split; train gets llround(n * train_fraction) rows.
inline std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0, 1)");
    std::size_t n = d.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
    if (n_train == 0 || n_train == n)
        throw std::invalid_argument("split: one side would be empty");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(d.seed, kStreamSplit));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(idx[i], idx[j]);
    }

    const std::size_t fd = static_cast<std::size_t>(d.feature_dim());
    auto take = [&](std::size_t lo, std::size_t hi) {
        Dataset out;
        out.area = d.area;
        out.radio = d.radio;
        out.seed = d.seed;
        out.features.reserve((hi - lo) * fd);
        out.targets.reserve(hi - lo);
        for (std::size_t k = lo; k < hi; ++k) {
            const double* row = d.features.data() + idx[k] * fd;
            out.features.insert(out.features.end(), row, row + fd);
            out.targets.push_back(d.targets[idx[k]]);
        }
        return out;
    };
    return {take(0, n_train), take(n_train, n)};
}

struct NormStats {
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;

    bool fitted() const { return !feature_mean.empty(); }
};

// Population (1/n) statistics; a z-scored column then has mean-square
// exactly 1, which the constant-zero-model loss check relies on.
inline NormStats fit_norm(const Dataset& train) {
    std::size_t n = train.size();
    if (n == 0) throw std::invalid_argument("fit_norm: empty dataset");
    const std::size_t fd = static_cast<std::size_t>(train.feature_dim());
    NormStats st;
    st.feature_mean.assign(fd, 0.0);
    st.feature_std.assign(fd, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = train.features.data() + s * fd;
        for (std::size_t c = 0; c < fd; ++c) st.feature_mean[c] += row[c];
    }
    for (std::size_t c = 0; c < fd; ++c) st.feature_mean[c] /= static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = train.features.data() + s * fd;
        for (std::size_t c = 0; c < fd; ++c) {
            double dc = row[c] - st.feature_mean[c];
            st.feature_std[c] += dc * dc;
        }
    }
    for (std::size_t c = 0; c < fd; ++c) {
        st.feature_std[c] = std::sqrt(st.feature_std[c] / static_cast<double>(n));
        if (!(st.feature_std[c] > 0.0))
            throw std::invalid_argument("fit_norm: zero-variance feature column");
    }
    double tm = 0.0;
    for (double t : train.targets) tm += t;
    tm /= static_cast<double>(n);
    double tv = 0.0;
    for (double t : train.targets) tv += (t - tm) * (t - tm);
    st.target_mean = tm;
    st.target_std = std::sqrt(tv / static_cast<double>(n));
    if (!(st.target_std > 0.0)) throw std::invalid_argument("fit_norm: zero-variance target");
    return st;
}

inline double normalize_target(const NormStats& st, double t) {
    return (t - st.target_mean) / st.target_std;
}

inline double denormalize_target(const NormStats& st, double t) {
    return t * st.target_std + st.target_mean;
}

inline void normalize_features(const NormStats& st, std::span<const double> in, double* out) {
    for (std::size_t c = 0; c < in.size(); ++c)
        out[c] = (in[c] - st.feature_mean[c]) / st.feature_std[c];
}

inline Dataset apply_norm(const NormStats& st, const Dataset& d) {
    if (st.feature_mean.size() != static_cast<std::size_t>(d.feature_dim()))
        throw std::invalid_argument("apply_norm: dimension mismatch");
    Dataset out = d;
    const std::size_t fd = st.feature_mean.size();
    for (std::size_t s = 0; s < out.size(); ++s) {
        double* row = out.features.data() + s * fd;
        for (std::size_t c = 0; c < fd; ++c)
            row[c] = (row[c] - st.feature_mean[c]) / st.feature_std[c];
        out.targets[s] = normalize_target(st, out.targets[s]);
    }
    return out;
}

inline Dataset invert_norm(const NormStats& st, const Dataset& d) {
    if (st.feature_mean.size() != static_cast<std::size_t>(d.feature_dim()))
        throw std::invalid_argument("invert_norm: dimension mismatch");
    Dataset out = d;
    const std::size_t fd = st.feature_mean.size();
    for (std::size_t s = 0; s < out.size(); ++s) {
        double* row = out.features.data() + s * fd;
        for (std::size_t c = 0; c < fd; ++c)
            row[c] = row[c] * st.feature_std[c] + st.feature_mean[c];
        out.targets[s] = denormalize_target(st, out.targets[s]);
    }
    return out;
}

// ---- binary persistence -----------------------------------------------------
// Layout (little-endian): magic "D2DDS001", area block, radio block,
// u64 seed, u64 count, u32 feature_dim, raw f64 features, raw f64 targets.

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("binary file: truncated read");
}

inline void write_area(std::ostream& out, const AreaConfig& a) {
    write_pod(out, a.side_m);
    write_pod(out, static_cast<std::int32_t>(a.n_bs));
    write_pod(out, static_cast<std::int32_t>(a.n_pairs));
    write_pod(out, static_cast<std::int32_t>(a.n_cues));
    write_pod(out, a.d_max_m);
    write_pod(out, static_cast<std::uint32_t>(a.environment == Environment::Urban ? 1 : 0));
    write_pod(out, static_cast<std::int32_t>(a.grid_blocks));
    write_pod(out, a.block_m);
    write_pod(out, a.street_m);
    write_pod(out, a.margin_m);
    write_pod(out, a.bs_height_m);
    write_pod(out, a.ue_height_m);
    write_pod(out, a.building_height_min_m);
    write_pod(out, a.building_height_max_m);
}

inline AreaConfig read_area(std::istream& in) {
    AreaConfig a;
    std::int32_t i32;
    std::uint32_t u32;
    read_pod(in, a.side_m);
    read_pod(in, i32); a.n_bs = i32;
    read_pod(in, i32); a.n_pairs = i32;
    read_pod(in, i32); a.n_cues = i32;
    read_pod(in, a.d_max_m);
    read_pod(in, u32); a.environment = u32 ? Environment::Urban : Environment::Rural;
    read_pod(in, i32); a.grid_blocks = i32;
    read_pod(in, a.block_m);
    read_pod(in, a.street_m);
    read_pod(in, a.margin_m);
    read_pod(in, a.bs_height_m);
    read_pod(in, a.ue_height_m);
    read_pod(in, a.building_height_min_m);
    read_pod(in, a.building_height_max_m);
    return a;
}

inline void write_radio(std::ostream& out, const RadioParams& r) {
    write_pod(out, r.fc_hz);
    write_pod(out, r.wall_loss_db);
    write_pod(out, r.noise_density_dbm_hz);
    write_pod(out, r.snr_g_db);
}

inline RadioParams read_radio(std::istream& in) {
    RadioParams r;
    read_pod(in, r.fc_hz);
    read_pod(in, r.wall_loss_db);
    read_pod(in, r.noise_density_dbm_hz);
    read_pod(in, r.snr_g_db);
    return r;
}

}  // namespace detail

inline void save_dataset(const Dataset& d, std::ostream& out) {
    out.write("D2DDS001", 8);
    detail::write_area(out, d.area);
    detail::write_radio(out, d.radio);
    detail::write_pod(out, d.seed);
    detail::write_pod(out, static_cast<std::uint64_t>(d.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(d.feature_dim()));
    out.write(reinterpret_cast<const char*>(d.features.data()),
              static_cast<std::streamsize>(d.features.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(d.targets.data()),
              static_cast<std::streamsize>(d.targets.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_dataset: write failed");
}

inline Dataset load_dataset(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "D2DDS001", 8) != 0)
        throw std::runtime_error("load_dataset: bad magic (not a dataset file)");
    Dataset d;
    d.area = detail::read_area(in);
    d.radio = detail::read_radio(in);
    std::uint64_t count;
    std::uint32_t fd;
    detail::read_pod(in, d.seed);
    detail::read_pod(in, count);
    detail::read_pod(in, fd);
    if (fd != static_cast<std::uint32_t>(2 * d.area.n_bs))
        throw std::runtime_error("load_dataset: feature dim disagrees with header");
    d.features.resize(count * fd);
    d.targets.resize(count);
    in.read(reinterpret_cast<char*>(d.features.data()),
            static_cast<std::streamsize>(d.features.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(d.targets.data()),
            static_cast<std::streamsize>(d.targets.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_dataset: truncated file");
    return d;
}

inline void save_dataset_file(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_dataset(d, out);
}

inline Dataset load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    return load_dataset(in);
}

// columns: i-side pl BS 1..L, j-side pl BS 1..L, target pl
inline void write_dataset_csv(const Dataset& d, std::ostream& out) {
    const int fl = d.area.n_bs;
    for (int l = 1; l <= fl; ++l) out << "pl_i_bs" << l << ",";
    for (int l = 1; l <= fl; ++l) out << "pl_j_bs" << l << ",";
    out << "target_pl_db\n";
    char buf[40];
    for (std::size_t s = 0; s < d.size(); ++s) {
        auto row = d.feature_row(s);
        for (double v : row) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g\n", d.targets[s]);
        out << buf;
    }
}

}  // namespace d2dgain
