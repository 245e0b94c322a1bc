#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "d2dgain/rng.hpp"
#include "d2dgain/scenario.hpp"

namespace d2dgain {

struct RadioParams {
    double fc_hz = 2e9;
    double wall_loss_db = 10.0;
    double noise_density_dbm_hz = -174.0;  // sigma0, consumed by the RRM layer
    // Cellular estimation accuracy SNR_G; +inf disables noise injection.
    double snr_g_db = std::numeric_limits<double>::infinity();

    void validate() const {
        if (!(fc_hz > 0.0)) throw std::invalid_argument("radio: fc_hz must be > 0");
        if (wall_loss_db < 0.0) throw std::invalid_argument("radio: wall_loss_db must be >= 0");
    }
};

// Free-space path loss, distances clamped at 1 m to dodge the near-field
// singularity. Swappable in isolation if a 3GPP LOS variant is wanted.
inline double los_pathloss_db(double d_m, double fc_hz) {
    double d = d_m < 1.0 ? 1.0 : d_m;
    return 20.0 * std::log10(d) + 20.0 * std::log10(fc_hz) - 147.55;
}

inline double link_pathloss_db(const Node& a, const Node& b, const Scenario& s,
                               const RadioParams& radio) {
    double pl = los_pathloss_db(distance(a.position, b.position), radio.fc_hz);
    if (!s.buildings.empty())
        pl += radio.wall_loss_db * wall_crossings(a.position, b.position, s.buildings);
    return pl;
}

inline double gain_from_pathloss(double pl_db) { return std::pow(10.0, -pl_db / 10.0); }

inline double pathloss_from_gain(double g) { return -10.0 * std::log10(g); }

// g + N(0, e) with e = g / 10^(snr/10); e is the standard deviation, noise
// additive in the linear domain, result floored to keep later logs finite.
inline double apply_estimation_noise(double g, double snr_g_db, Rng& rng) {
    if (std::isinf(snr_g_db)) return g;
    double e = g / std::pow(10.0, snr_g_db / 10.0);
    double noisy = g + e * rng.normal();
    return noisy < 1e-30 ? 1e-30 : noisy;
}

// cellular: U x L gains G_{u,l}; d2d: U x U symmetric gains g_{i,j}
// (diagonal unused, stored as 1). UE order: dues then cues.
struct GainMatrixSet {
    int n_ues = 0;
    int n_bs = 0;
    std::vector<double> cellular;
    std::vector<double> d2d;

    double cell(int u, int l) const { return cellular[static_cast<std::size_t>(u) * n_bs + l]; }
    double& cell(int u, int l) { return cellular[static_cast<std::size_t>(u) * n_bs + l]; }
    double dd(int i, int j) const { return d2d[static_cast<std::size_t>(i) * n_ues + j]; }
    double& dd(int i, int j) { return d2d[static_cast<std::size_t>(i) * n_ues + j]; }
};

inline GainMatrixSet compute_gain_matrices(const Scenario& s, const RadioParams& radio) {
    GainMatrixSet g;
    g.n_ues = n_ues(s);
    g.n_bs = static_cast<int>(s.bss.size());
    g.cellular.assign(static_cast<std::size_t>(g.n_ues) * g.n_bs, 0.0);
    g.d2d.assign(static_cast<std::size_t>(g.n_ues) * g.n_ues, 1.0);
    for (int u = 0; u < g.n_ues; ++u)
        for (int l = 0; l < g.n_bs; ++l)
            g.cell(u, l) = gain_from_pathloss(link_pathloss_db(ue(s, u), s.bss[static_cast<std::size_t>(l)], s, radio));
    for (int i = 0; i < g.n_ues; ++i)
        for (int j = i + 1; j < g.n_ues; ++j) {
            double v = gain_from_pathloss(link_pathloss_db(ue(s, i), ue(s, j), s, radio));
            g.dd(i, j) = v;
            g.dd(j, i) = v;
        }
    return g;
}

// One row per link: kind, i, j (UE index or BS index), distance_m, walls,
// pl_db, gain. Recomputed from the scenario so the row carries geometry.
inline void write_link_csv(const Scenario& s, const RadioParams& radio, std::ostream& out) {
    out << "link,i,j,distance_m,walls,pl_db,gain\n";
    int u_count = n_ues(s);
    char buf[256];
    auto row = [&](const char* kind, int i, int j, const Node& a, const Node& b) {
        double d = distance(a.position, b.position);
        int w = s.buildings.empty() ? 0 : wall_crossings(a.position, b.position, s.buildings);
        double pl = link_pathloss_db(a, b, s, radio);
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.17g,%d,%.17g,%.17g\n",
                      kind, i, j, d, w, pl, gain_from_pathloss(pl));
        out << buf;
    };
    for (int u = 0; u < u_count; ++u)
        for (int l = 0; l < static_cast<int>(s.bss.size()); ++l)
            row("cellular", u, l, ue(s, u), s.bss[static_cast<std::size_t>(l)]);
    for (int i = 0; i < u_count; ++i)
        for (int j = i + 1; j < u_count; ++j)
            row("d2d", i, j, ue(s, i), ue(s, j));
}

}  // namespace d2dgain
