#pragma once

#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "d2dgain/geometry.hpp"
#include "d2dgain/rng.hpp"

namespace d2dgain {

enum class Environment { Rural, Urban };

inline const char* to_string(Environment e) {
    return e == Environment::Rural ? "rural" : "urban";
}

inline Environment parse_environment(const std::string& s) {
    if (s == "rural") return Environment::Rural;
    if (s == "urban") return Environment::Urban;
    throw std::invalid_argument("unknown environment '" + s + "' (expected rural|urban)");
}

struct AreaConfig {
    double side_m = 250.0;
    int n_bs = 3;    // L
    int n_pairs = 10;  // N
    int n_cues = 10;   // M
    double d_max_m = 50.0;
    Environment environment = Environment::Rural;

    // Urban Manhattan grid: per axis, block g spans
    // [margin + g*(block+street), margin + g*(block+street) + block].
    // Defaults tile the 250 m side exactly: 5 + 4*(40+20) + 5 = 250.
    int grid_blocks = 4;
    double block_m = 40.0;
    double street_m = 20.0;
    double margin_m = 5.0;

    double bs_height_m = 10.0;
    double ue_height_m = 1.5;
    double building_height_min_m = 20.0;
    double building_height_max_m = 30.0;

    void validate() const {
        if (!(side_m > 0.0)) throw std::invalid_argument("area: side_m must be > 0");
        if (!(d_max_m > 0.0)) throw std::invalid_argument("area: d_max_m must be > 0");
        if (n_bs < 1) throw std::invalid_argument("area: n_bs must be >= 1");
        if (n_pairs < 0 || n_cues < 0) throw std::invalid_argument("area: counts must be >= 0");
        if (!(building_height_min_m <= building_height_max_m))
            throw std::invalid_argument("area: building height range inverted");
        if (!(bs_height_m >= 0.0 && ue_height_m >= 0.0))
            throw std::invalid_argument("area: node heights must be >= 0");
        if (environment == Environment::Urban) {
            if (grid_blocks < 1 || !(block_m > 0.0) || street_m < 0.0 || margin_m < 0.0)
                throw std::invalid_argument("area: invalid urban grid parameters");
            double extent = 2.0 * margin_m + grid_blocks * (block_m + street_m);
            if (extent > side_m + 1e-9)
                throw std::invalid_argument("area: urban grid does not fit inside side_m");
        }
    }
};

struct Building {
    Rect footprint;
    double height_m = 0.0;
};

enum class NodeKind { Bs, DueT, DueR, Cue };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Bs: return "bs";
        case NodeKind::DueT: return "due_t";
        case NodeKind::DueR: return "due_r";
        case NodeKind::Cue: return "cue";
    }
    return "?";
}

inline NodeKind parse_node_kind(const std::string& s) {
    if (s == "bs") return NodeKind::Bs;
    if (s == "due_t") return NodeKind::DueT;
    if (s == "due_r") return NodeKind::DueR;
    if (s == "cue") return NodeKind::Cue;
    throw std::invalid_argument("unknown node kind '" + s + "'");
}

struct Node {
    Vec3 position;
    NodeKind kind = NodeKind::Bs;
};

// dues holds 2N nodes ordered (T0, R0, T1, R1, ...). UE index space used
// by the gain matrices: dues first (0..2N-1), then cues (2N..2N+M-1).
struct Scenario {
    AreaConfig config;
    std::vector<Building> buildings;
    std::vector<Node> bss;
    std::vector<Node> dues;
    std::vector<Node> cues;
    std::uint64_t seed = 0;
};

inline int n_ues(const Scenario& s) {
    return static_cast<int>(s.dues.size() + s.cues.size());
}

inline const Node& ue(const Scenario& s, int u) {
    if (u < 0 || u >= n_ues(s)) throw std::out_of_range("ue: index out of range");
    int nd = static_cast<int>(s.dues.size());
    return u < nd ? s.dues[static_cast<std::size_t>(u)]
                  : s.cues[static_cast<std::size_t>(u - nd)];
}

inline int due_t_index(int n) { return 2 * n; }
inline int due_r_index(int n) { return 2 * n + 1; }
inline int cue_ue_index(int m, int n_pairs) { return 2 * n_pairs + m; }

// indices into the dues list for pair n
inline std::pair<int, int> pair_index(int n, int n_pairs) {
    if (n < 0 || n >= n_pairs) throw std::out_of_range("pair_index: pair id out of range");
    return {due_t_index(n), due_r_index(n)};
}

inline std::pair<int, int> pair_index(const Scenario& s, int n) {
    return pair_index(n, static_cast<int>(s.dues.size() / 2));
}

inline int wall_crossings(const Vec3& a, const Vec3& b, const std::vector<Building>& buildings) {
    int n = 0;
    for (const Building& bl : buildings) n += wall_faces_crossed(a, b, bl.footprint, bl.height_m);
    return n;
}

namespace detail {

inline bool inside_any_building(double x, double y, const std::vector<Building>& buildings) {
    for (const Building& b : buildings)
        if (b.footprint.contains_xy(x, y)) return true;
    return false;
}

constexpr int kPlacementRetryCap = 10000;

inline Vec3 draw_free_position(Rng& rng, const AreaConfig& cfg,
                               const std::vector<Building>& buildings, double z) {
    for (int attempt = 0; attempt < kPlacementRetryCap; ++attempt) {
        double x = rng.uniform(0.0, cfg.side_m);
        double y = rng.uniform(0.0, cfg.side_m);
        if (!inside_any_building(x, y, buildings)) return {x, y, z};
    }
    throw std::runtime_error("scenario: placement infeasible (retry cap hit); buildings cover the area?");
}

// uniform in the disk of radius d_max around t, rejected until inside the
// area and outside every footprint
inline Vec3 draw_pair_receiver(Rng& rng, const AreaConfig& cfg,
                               const std::vector<Building>& buildings, const Vec3& t) {
    for (int attempt = 0; attempt < kPlacementRetryCap; ++attempt) {
        double r = cfg.d_max_m * std::sqrt(rng.uniform());
        double phi = 6.283185307179586476925286766559 * rng.uniform();
        double x = t.x + r * std::cos(phi);
        double y = t.y + r * std::sin(phi);
        if (x < 0.0 || x > cfg.side_m || y < 0.0 || y > cfg.side_m) continue;
        if (inside_any_building(x, y, buildings)) continue;
        return {x, y, t.z};
    }
    throw std::runtime_error("scenario: pair receiver placement infeasible (retry cap hit)");
}

}  // namespace detail

// Buildings and BS positions only (no users). Draw streams are derived
// per stage so the topology depends only on (grid params, n_bs, seed),
// never on n_pairs/n_cues; datasets and RRM drops can share a topology.
inline Scenario generate_topology(const AreaConfig& config, std::uint64_t seed) {
    config.validate();
    Scenario s;
    s.config = config;
    s.seed = seed;

    if (config.environment == Environment::Urban) {
        Rng rng_b(derive_seed(seed, kStreamBuildings));
        double pitch = config.block_m + config.street_m;
        for (int gy = 0; gy < config.grid_blocks; ++gy) {
            for (int gx = 0; gx < config.grid_blocks; ++gx) {
                Building b;
                b.footprint.x_min = config.margin_m + gx * pitch;
                b.footprint.x_max = b.footprint.x_min + config.block_m;
                b.footprint.y_min = config.margin_m + gy * pitch;
                b.footprint.y_max = b.footprint.y_min + config.block_m;
                b.height_m = rng_b.uniform(config.building_height_min_m, config.building_height_max_m);
                s.buildings.push_back(b);
            }
        }
    }

    Rng rng_bs(derive_seed(seed, kStreamBs));
    for (int l = 0; l < config.n_bs; ++l) {
        Node n;
        n.position = detail::draw_free_position(rng_bs, config, s.buildings, config.bs_height_m);
        n.kind = NodeKind::Bs;
        s.bss.push_back(n);
    }
    return s;
}

// Replaces the user population (DUE pairs, then CUEs) with a fresh draw.
inline void place_users(Scenario& s, std::uint64_t user_seed) {
    const AreaConfig& cfg = s.config;
    Rng rng(derive_seed(user_seed, kStreamUsers));
    s.dues.clear();
    s.cues.clear();
    for (int n = 0; n < cfg.n_pairs; ++n) {
        Node t;
        t.position = detail::draw_free_position(rng, cfg, s.buildings, cfg.ue_height_m);
        t.kind = NodeKind::DueT;
        Node r;
        r.position = detail::draw_pair_receiver(rng, cfg, s.buildings, t.position);
        r.kind = NodeKind::DueR;
        s.dues.push_back(t);
        s.dues.push_back(r);
    }
    for (int m = 0; m < cfg.n_cues; ++m) {
        Node c;
        c.position = detail::draw_free_position(rng, cfg, s.buildings, cfg.ue_height_m);
        c.kind = NodeKind::Cue;
        s.cues.push_back(c);
    }
}

inline Scenario generate_scenario(const AreaConfig& config, std::uint64_t seed) {
    Scenario s = generate_topology(config, seed);
    place_users(s, seed);
    return s;
}

// ---- text serialization (experiment replay) --------------------------------

namespace detail {

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string next_data_line(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        if (line.empty() || line[0] == '#') continue;
        return line;
    }
    throw std::runtime_error("scenario file: unexpected end of file");
}

inline double parse_kv_double(const std::string& line, const char* key) {
    std::istringstream is(line);
    std::string k, eq;
    double v;
    if (!(is >> k >> eq >> v) || k != key || eq != "=")
        throw std::runtime_error("scenario file: expected '" + std::string(key) + " = <value>', got '" + line + "'");
    return v;
}

inline std::string parse_kv_string(const std::string& line, const char* key) {
    std::istringstream is(line);
    std::string k, eq, v;
    if (!(is >> k >> eq >> v) || k != key || eq != "=")
        throw std::runtime_error("scenario file: expected '" + std::string(key) + " = <value>', got '" + line + "'");
    return v;
}

}  // namespace detail

inline void save_scenario(const Scenario& s, std::ostream& out) {
    using detail::g17;
    out << "d2dgain-scenario v1\n";
    out << "[config]\n";
    out << "side_m = " << g17(s.config.side_m) << "\n";
    out << "n_bs = " << s.config.n_bs << "\n";
    out << "n_pairs = " << s.config.n_pairs << "\n";
    out << "n_cues = " << s.config.n_cues << "\n";
    out << "d_max_m = " << g17(s.config.d_max_m) << "\n";
    out << "environment = " << to_string(s.config.environment) << "\n";
    out << "grid_blocks = " << s.config.grid_blocks << "\n";
    out << "block_m = " << g17(s.config.block_m) << "\n";
    out << "street_m = " << g17(s.config.street_m) << "\n";
    out << "margin_m = " << g17(s.config.margin_m) << "\n";
    out << "bs_height_m = " << g17(s.config.bs_height_m) << "\n";
    out << "ue_height_m = " << g17(s.config.ue_height_m) << "\n";
    out << "building_height_min_m = " << g17(s.config.building_height_min_m) << "\n";
    out << "building_height_max_m = " << g17(s.config.building_height_max_m) << "\n";
    out << "[seed]\n";
    out << "seed = " << s.seed << "\n";
    out << "[buildings] count = " << s.buildings.size() << "\n";
    for (const Building& b : s.buildings)
        out << g17(b.footprint.x_min) << " " << g17(b.footprint.x_max) << " "
            << g17(b.footprint.y_min) << " " << g17(b.footprint.y_max) << " "
            << g17(b.height_m) << "\n";
    std::size_t total_nodes = s.bss.size() + s.dues.size() + s.cues.size();
    out << "[nodes] count = " << total_nodes << "\n";
    auto dump = [&](const std::vector<Node>& v) {
        for (const Node& n : v)
            out << to_string(n.kind) << " " << g17(n.position.x) << " "
                << g17(n.position.y) << " " << g17(n.position.z) << "\n";
    };
    dump(s.bss);
    dump(s.dues);
    dump(s.cues);
}

inline Scenario load_scenario(std::istream& in) {
    using namespace detail;
    if (next_data_line(in) != "d2dgain-scenario v1")
        throw std::runtime_error("scenario file: bad magic line");
    if (next_data_line(in) != "[config]")
        throw std::runtime_error("scenario file: expected [config]");
    Scenario s;
    s.config.side_m = parse_kv_double(next_data_line(in), "side_m");
    s.config.n_bs = static_cast<int>(parse_kv_double(next_data_line(in), "n_bs"));
    s.config.n_pairs = static_cast<int>(parse_kv_double(next_data_line(in), "n_pairs"));
    s.config.n_cues = static_cast<int>(parse_kv_double(next_data_line(in), "n_cues"));
    s.config.d_max_m = parse_kv_double(next_data_line(in), "d_max_m");
    s.config.environment = parse_environment(parse_kv_string(next_data_line(in), "environment"));
    s.config.grid_blocks = static_cast<int>(parse_kv_double(next_data_line(in), "grid_blocks"));
    s.config.block_m = parse_kv_double(next_data_line(in), "block_m");
    s.config.street_m = parse_kv_double(next_data_line(in), "street_m");
    s.config.margin_m = parse_kv_double(next_data_line(in), "margin_m");
    s.config.bs_height_m = parse_kv_double(next_data_line(in), "bs_height_m");
    s.config.ue_height_m = parse_kv_double(next_data_line(in), "ue_height_m");
    s.config.building_height_min_m = parse_kv_double(next_data_line(in), "building_height_min_m");
    s.config.building_height_max_m = parse_kv_double(next_data_line(in), "building_height_max_m");
    if (next_data_line(in) != "[seed]")
        throw std::runtime_error("scenario file: expected [seed]");
    s.seed = static_cast<std::uint64_t>(parse_kv_double(next_data_line(in), "seed"));

    std::string line = next_data_line(in);
    std::size_t n_buildings = 0;
    {
        std::istringstream is(line);
        std::string tag, key, eq;
        if (!(is >> tag >> key >> eq >> n_buildings) || tag != "[buildings]" || key != "count" || eq != "=")
            throw std::runtime_error("scenario file: expected [buildings] count = <n>");
    }
    for (std::size_t i = 0; i < n_buildings; ++i) {
        std::istringstream is(next_data_line(in));
        Building b;
        if (!(is >> b.footprint.x_min >> b.footprint.x_max >> b.footprint.y_min >> b.footprint.y_max >> b.height_m))
            throw std::runtime_error("scenario file: bad building line");
        s.buildings.push_back(b);
    }

    line = next_data_line(in);
    std::size_t n_nodes = 0;
    {
        std::istringstream is(line);
        std::string tag, key, eq;
        if (!(is >> tag >> key >> eq >> n_nodes) || tag != "[nodes]" || key != "count" || eq != "=")
            throw std::runtime_error("scenario file: expected [nodes] count = <n>");
    }
    for (std::size_t i = 0; i < n_nodes; ++i) {
        std::istringstream is(next_data_line(in));
        std::string kind;
        Node n;
        if (!(is >> kind >> n.position.x >> n.position.y >> n.position.z))
            throw std::runtime_error("scenario file: bad node line");
        n.kind = parse_node_kind(kind);
        switch (n.kind) {
            case NodeKind::Bs: s.bss.push_back(n); break;
            case NodeKind::Cue: s.cues.push_back(n); break;
            default: s.dues.push_back(n); break;
        }
    }
    if (static_cast<int>(s.bss.size()) != s.config.n_bs ||
        static_cast<int>(s.dues.size()) != 2 * s.config.n_pairs ||
        static_cast<int>(s.cues.size()) != s.config.n_cues)
        throw std::runtime_error("scenario file: node counts disagree with config");
    return s;
}

}  // namespace d2dgain
