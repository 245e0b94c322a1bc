#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "d2dgain/propagation.hpp"

namespace d2dgain {

enum class RrmMode { Shared, Dedicated };

inline const char* to_string(RrmMode m) {
    return m == RrmMode::Shared ? "shared" : "dedicated";
}

inline RrmMode parse_rrm_mode(const std::string& s) {
    if (s == "shared") return RrmMode::Shared;
    if (s == "dedicated") return RrmMode::Dedicated;
    throw std::invalid_argument("unknown rrm mode '" + s + "' (expected shared|dedicated)");
}

struct RrmConfig {
    double bandwidth_hz = 20e6;   // B
    int n_channels = 10;          // K
    double channel_bw_hz = 2e6;   // B_k
    double p_max_dbm = 24.0;
    double p_min_dbm = 1.0;
    double cue_power_dbm = 24.0;
    double noise_density_dbm_hz = -174.0;
    RrmMode mode = RrmMode::Shared;

    void validate() const {
        if (n_channels < 1) throw std::invalid_argument("rrm: n_channels must be >= 1");
        if (!(channel_bw_hz > 0.0 && bandwidth_hz > 0.0))
            throw std::invalid_argument("rrm: bandwidths must be > 0");
        if (n_channels * channel_bw_hz > bandwidth_hz * (1.0 + 1e-12))
            throw std::invalid_argument("rrm: K * B_k exceeds B");
        if (!(p_min_dbm < p_max_dbm)) throw std::invalid_argument("rrm: need p_min < p_max");
    }
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

// Channel per D2D pair; CUE m sits on channel m. Unassigned pairs carry -1
// during greedy construction and neither transmit nor count.
struct Allocation {
    std::vector<int> pair_channel;
    std::vector<int> cue_channel;
};

struct PowerDecision {
    std::vector<double> pair_power_dbm;
};

inline PowerDecision all_max_powers(int n_pairs, const RrmConfig& cfg) {
    return {std::vector<double>(static_cast<std::size_t>(n_pairs), cfg.p_max_dbm)};
}

// Capacity of pair n evaluated on channel k (other pairs' channels from
// alloc): B_k log2(1 + p_n g_nn / (B_k sigma0 + sum_q p_q g_qn + sum_m
// p_m g_mn)), co-channel terms only. Dedicated mode: every pair reuses
// the whole band (bw := B), there are no CUEs, k is ignored.
inline double pair_capacity(int n, int k, const GainMatrixSet& gains, const Allocation& alloc,
                            const PowerDecision& powers, const RrmConfig& cfg) {
    const int n_pairs = static_cast<int>(powers.pair_power_dbm.size());
    const bool shared = cfg.mode == RrmMode::Shared;
    const double bw = shared ? cfg.channel_bw_hz : cfg.bandwidth_hz;
    const int rx = due_r_index(n);

    double noise_mw = bw * dbm_to_mw(cfg.noise_density_dbm_hz);
    double interference_mw = 0.0;
    for (int q = 0; q < n_pairs; ++q) {
        if (q == n) continue;
        if (shared && alloc.pair_channel[static_cast<std::size_t>(q)] != k) continue;
        interference_mw +=
            dbm_to_mw(powers.pair_power_dbm[static_cast<std::size_t>(q)]) * gains.dd(due_t_index(q), rx);
    }
    if (shared) {
        for (std::size_t m = 0; m < alloc.cue_channel.size(); ++m)
            if (alloc.cue_channel[m] == k)
                interference_mw +=
                    dbm_to_mw(cfg.cue_power_dbm) * gains.dd(cue_ue_index(static_cast<int>(m), n_pairs), rx);
    }
    double signal_mw = dbm_to_mw(powers.pair_power_dbm[static_cast<std::size_t>(n)]) *
                       gains.dd(due_t_index(n), rx);
    return bw * std::log2(1.0 + signal_mw / (noise_mw + interference_mw));
}

// Sum over assigned pairs (channel >= 0); in dedicated mode every pair counts.
inline double sum_capacity(const GainMatrixSet& gains, const Allocation& alloc,
                           const PowerDecision& powers, const RrmConfig& cfg) {
    const int n_pairs = static_cast<int>(powers.pair_power_dbm.size());
    double sum = 0.0;
    for (int n = 0; n < n_pairs; ++n) {
        int k = 0;
        if (cfg.mode == RrmMode::Shared) {
            k = alloc.pair_channel[static_cast<std::size_t>(n)];
            if (k < 0) continue;
        }
        sum += pair_capacity(n, k, gains, alloc, powers, cfg);
    }
    return sum;
}

// Shared-mode channel allocation stand-in: pairs in index order each take
// the sum-capacity-argmax channel given what is already assigned, then
// improvement sweeps (move any pair whose best channel strictly beats its
// current one) until stable or 10 sweeps. Ties break to the lowest k.
inline Allocation allocate_channels_greedy(const GainMatrixSet& gains, const RrmConfig& cfg,
                                           int n_pairs) {
    cfg.validate();
    if (cfg.mode != RrmMode::Shared)
        throw std::invalid_argument("allocate_channels_greedy: shared mode only");
    const int n_cues = gains.n_ues - 2 * n_pairs;
    if (n_cues != cfg.n_channels)
        throw std::invalid_argument("allocate_channels_greedy: needs one CUE per channel (M = K)");

    Allocation alloc;
    alloc.pair_channel.assign(static_cast<std::size_t>(n_pairs), -1);
    alloc.cue_channel.resize(static_cast<std::size_t>(n_cues));
    for (int m = 0; m < n_cues; ++m) alloc.cue_channel[static_cast<std::size_t>(m)] = m;
    PowerDecision powers = all_max_powers(n_pairs, cfg);

    auto sum_with = [&](int n, int k) {
        int saved = alloc.pair_channel[static_cast<std::size_t>(n)];
        alloc.pair_channel[static_cast<std::size_t>(n)] = k;
        double s = sum_capacity(gains, alloc, powers, cfg);
        alloc.pair_channel[static_cast<std::size_t>(n)] = saved;
        return s;
    };

    for (int n = 0; n < n_pairs; ++n) {
        int best_k = 0;
        double best_sum = sum_with(n, 0);
        for (int k = 1; k < cfg.n_channels; ++k) {
            double s = sum_with(n, k);
            if (s > best_sum) {
                best_sum = s;
                best_k = k;
            }
        }
        alloc.pair_channel[static_cast<std::size_t>(n)] = best_k;
    }

    for (int sweep = 0; sweep < 10; ++sweep) {
        bool changed = false;
        for (int n = 0; n < n_pairs; ++n) {
            int cur = alloc.pair_channel[static_cast<std::size_t>(n)];
            int best_k = cur;
            double best_sum = sum_with(n, cur);
            for (int k = 0; k < cfg.n_channels; ++k) {
                if (k == cur) continue;
                double s = sum_with(n, k);
                if (s > best_sum) {
                    best_sum = s;
                    best_k = k;
                }
            }
            if (best_k != cur) {
                alloc.pair_channel[static_cast<std::size_t>(n)] = best_k;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return alloc;
}

// Dedicated-mode binary power control stand-in: start everyone at p_max;
// repeatedly apply the single p_min<->p_max flip with the largest strict
// sum-capacity gain (ties keep the lowest pair index); stop when no flip
// helps. Each step strictly increases the sum, so it terminates.
inline PowerDecision binary_power_control_greedy(const GainMatrixSet& gains, const RrmConfig& cfg,
                                                 int n_pairs) {
    cfg.validate();
    if (cfg.mode != RrmMode::Dedicated)
        throw std::invalid_argument("binary_power_control_greedy: dedicated mode only");

    Allocation alloc;  // unused in dedicated capacity math
    PowerDecision powers = all_max_powers(n_pairs, cfg);
    double current = sum_capacity(gains, alloc, powers, cfg);

    auto flipped = [&](int n) {
        return powers.pair_power_dbm[static_cast<std::size_t>(n)] == cfg.p_max_dbm ? cfg.p_min_dbm
                                                                                   : cfg.p_max_dbm;
    };

    for (int guard = 0; guard < 100000; ++guard) {
        int best_n = -1;
        double best_sum = current;
        for (int n = 0; n < n_pairs; ++n) {
            double saved = powers.pair_power_dbm[static_cast<std::size_t>(n)];
            powers.pair_power_dbm[static_cast<std::size_t>(n)] = flipped(n);
            double s = sum_capacity(gains, alloc, powers, cfg);
            powers.pair_power_dbm[static_cast<std::size_t>(n)] = saved;
            if (s > best_sum) {
                best_sum = s;
                best_n = n;
            }
        }
        if (best_n < 0) break;
        powers.pair_power_dbm[static_cast<std::size_t>(best_n)] = flipped(best_n);
        current = best_sum;
    }
    return powers;
}

struct OverheadReport {
    long long total = 0;          // Sigma
    long long cellular_only = 0;  // L(2N + M)
    long long reduction = 0;      // Delta Sigma
};

// Sigma = L(2N+M) + 2N(2N-1) + 2NM; dedicated mode has no CUEs (M := 0).
inline OverheadReport signaling_overhead(int l, int n, int m, RrmMode mode) {
    if (l < 0 || n < 0 || m < 0) throw std::invalid_argument("signaling_overhead: counts must be >= 0");
    long long ll = l, nn = n, mm = mode == RrmMode::Dedicated ? 0 : m;
    OverheadReport r;
    r.cellular_only = ll * (2 * nn + mm);
    r.reduction = 2 * nn * (2 * nn - 1) + 2 * nn * mm;
    r.total = r.cellular_only + r.reduction;
    return r;
}

}  // namespace d2dgain
