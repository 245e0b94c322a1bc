#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "d2dgain/csv.hpp"
#include "d2dgain/eval.hpp"

namespace d2dgain {

// Everything a command needs; defaults mirror the simulation parameter
// table (250 m area, L=3, N=10, M=10, d_max=50 m, 2 GHz, 20 MHz / 10 x 2
// MHz channels, 24/1 dBm, -174 dBm/Hz, 10^6 samples).
struct RunConfig {
    AreaConfig area;
    RadioParams radio;
    LmConfig lm;
    RrmConfig rrm;
    std::size_t samples = 1000000;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1};
    int drops = 100;
    double train_fraction = 0.7;
    std::string out_dir = ".";
    int threads = 0;  // 0: all hardware threads

    int effective_threads() const {
        if (threads > 0) return threads;
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }

    PipelineConfig pipeline() const {
        PipelineConfig pc{area, radio, lm, rrm, train_fraction};
        pc.lm.threads = effective_threads();
        return pc;
    }

    void validate() const {
        area.validate();
        radio.validate();
        lm.validate();
        rrm.validate();
        if (samples < 1) throw std::invalid_argument("run: samples must be >= 1");
        if (drops < 1) throw std::invalid_argument("run: drops must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("run: train_fraction must be in (0, 1)");
        if (seeds.empty()) throw std::invalid_argument("run: seeds must not be empty");
    }
};

namespace detail {

inline double parse_double_cfg(const std::string& v, const std::string& key) {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number '" + v + "' for key " + key);
    }
}

inline long long parse_int_cfg(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer '" + v + "' for key " + key);
    }
}

inline std::vector<std::uint64_t> parse_seed_list(const std::string& v, const std::string& key) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<std::uint64_t>(parse_int_cfg(item, key)));
    if (out.empty()) throw std::invalid_argument("config: empty list for key " + key);
    return out;
}

}  // namespace detail

// One documented key per configurable field; unknown keys are errors.
inline void set_config_key(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_double_cfg;
    using detail::parse_int_cfg;
    auto d = [&] { return parse_double_cfg(value, key); };
    auto i = [&] { return static_cast<int>(parse_int_cfg(value, key)); };

    if (key == "area.side_m") c.area.side_m = d();
    else if (key == "area.n_bs") c.area.n_bs = i();
    else if (key == "area.n_pairs") c.area.n_pairs = i();
    else if (key == "area.n_cues") c.area.n_cues = i();
    else if (key == "area.d_max_m") c.area.d_max_m = d();
    else if (key == "area.environment") c.area.environment = parse_environment(value);
    else if (key == "area.grid_blocks") c.area.grid_blocks = i();
    else if (key == "area.block_m") c.area.block_m = d();
    else if (key == "area.street_m") c.area.street_m = d();
    else if (key == "area.margin_m") c.area.margin_m = d();
    else if (key == "area.bs_height_m") c.area.bs_height_m = d();
    else if (key == "area.ue_height_m") c.area.ue_height_m = d();
    else if (key == "area.building_height_min_m") c.area.building_height_min_m = d();
    else if (key == "area.building_height_max_m") c.area.building_height_max_m = d();
    else if (key == "radio.fc_hz") c.radio.fc_hz = d();
    else if (key == "radio.wall_loss_db") c.radio.wall_loss_db = d();
    else if (key == "radio.noise_density_dbm_hz") c.radio.noise_density_dbm_hz = d();
    else if (key == "radio.snr_g_db") c.radio.snr_g_db = d();
    else if (key == "lm.mu_init") c.lm.mu_init = d();
    else if (key == "lm.mu_increase") c.lm.mu_increase = d();
    else if (key == "lm.mu_decrease") c.lm.mu_decrease = d();
    else if (key == "lm.mu_max") c.lm.mu_max = d();
    else if (key == "lm.max_epochs") c.lm.max_epochs = i();
    else if (key == "lm.batch_size") c.lm.batch_size = i();
    else if (key == "lm.loss_tolerance") c.lm.loss_tolerance = d();
    else if (key == "lm.loss_patience") c.lm.loss_patience = i();
    else if (key == "lm.validation_fraction") c.lm.validation_fraction = d();
    else if (key == "lm.early_stop_patience") c.lm.early_stop_patience = i();
    else if (key == "rrm.bandwidth_hz") c.rrm.bandwidth_hz = d();
    else if (key == "rrm.n_channels") c.rrm.n_channels = i();
    else if (key == "rrm.channel_bw_hz") c.rrm.channel_bw_hz = d();
    else if (key == "rrm.p_max_dbm") c.rrm.p_max_dbm = d();
    else if (key == "rrm.p_min_dbm") c.rrm.p_min_dbm = d();
    else if (key == "rrm.cue_power_dbm") c.rrm.cue_power_dbm = d();
    else if (key == "rrm.noise_density_dbm_hz") c.rrm.noise_density_dbm_hz = d();
    else if (key == "rrm.mode") c.rrm.mode = parse_rrm_mode(value);
    else if (key == "run.samples") c.samples = static_cast<std::size_t>(parse_int_cfg(value, key));
    else if (key == "run.seed") c.seed = static_cast<std::uint64_t>(parse_int_cfg(value, key));
    else if (key == "run.seeds") c.seeds = detail::parse_seed_list(value, key);
    else if (key == "run.drops") c.drops = i();
    else if (key == "run.train_fraction") c.train_fraction = d();
    else if (key == "run.out_dir") c.out_dir = value;
    else if (key == "run.threads") c.threads = i();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// key = value lines, # comments, blank lines ignored
inline void load_config_stream(RunConfig& c, std::istream& in) {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        auto trim = [](std::string s) {
            std::size_t x = s.find_first_not_of(" \t");
            std::size_t y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string{} : s.substr(x, y - x + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": empty key or value");
        set_config_key(c, key, value);
    }
}

inline void load_config_file(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    load_config_stream(c, in);
}

// Canonical text form; its FNV-1a hash goes into every output manifest.
inline std::string dump_config(const RunConfig& c) {
    std::ostringstream o;
    o << "area.side_m = " << format_g17(c.area.side_m) << "\n";
    o << "area.n_bs = " << c.area.n_bs << "\n";
    o << "area.n_pairs = " << c.area.n_pairs << "\n";
    o << "area.n_cues = " << c.area.n_cues << "\n";
    o << "area.d_max_m = " << format_g17(c.area.d_max_m) << "\n";
    o << "area.environment = " << to_string(c.area.environment) << "\n";
    o << "area.grid_blocks = " << c.area.grid_blocks << "\n";
    o << "area.block_m = " << format_g17(c.area.block_m) << "\n";
    o << "area.street_m = " << format_g17(c.area.street_m) << "\n";
    o << "area.margin_m = " << format_g17(c.area.margin_m) << "\n";
    o << "area.bs_height_m = " << format_g17(c.area.bs_height_m) << "\n";
    o << "area.ue_height_m = " << format_g17(c.area.ue_height_m) << "\n";
    o << "area.building_height_min_m = " << format_g17(c.area.building_height_min_m) << "\n";
    o << "area.building_height_max_m = " << format_g17(c.area.building_height_max_m) << "\n";
    o << "radio.fc_hz = " << format_g17(c.radio.fc_hz) << "\n";
    o << "radio.wall_loss_db = " << format_g17(c.radio.wall_loss_db) << "\n";
    o << "radio.noise_density_dbm_hz = " << format_g17(c.radio.noise_density_dbm_hz) << "\n";
    o << "radio.snr_g_db = " << format_g17(c.radio.snr_g_db) << "\n";
    o << "lm.mu_init = " << format_g17(c.lm.mu_init) << "\n";
    o << "lm.mu_increase = " << format_g17(c.lm.mu_increase) << "\n";
    o << "lm.mu_decrease = " << format_g17(c.lm.mu_decrease) << "\n";
    o << "lm.mu_max = " << format_g17(c.lm.mu_max) << "\n";
    o << "lm.max_epochs = " << c.lm.max_epochs << "\n";
    o << "lm.batch_size = " << c.lm.batch_size << "\n";
    o << "lm.loss_tolerance = " << format_g17(c.lm.loss_tolerance) << "\n";
    o << "lm.loss_patience = " << c.lm.loss_patience << "\n";
    o << "lm.validation_fraction = " << format_g17(c.lm.validation_fraction) << "\n";
    o << "lm.early_stop_patience = " << c.lm.early_stop_patience << "\n";
    o << "rrm.bandwidth_hz = " << format_g17(c.rrm.bandwidth_hz) << "\n";
    o << "rrm.n_channels = " << c.rrm.n_channels << "\n";
    o << "rrm.channel_bw_hz = " << format_g17(c.rrm.channel_bw_hz) << "\n";
    o << "rrm.p_max_dbm = " << format_g17(c.rrm.p_max_dbm) << "\n";
    o << "rrm.p_min_dbm = " << format_g17(c.rrm.p_min_dbm) << "\n";
    o << "rrm.cue_power_dbm = " << format_g17(c.rrm.cue_power_dbm) << "\n";
    o << "rrm.noise_density_dbm_hz = " << format_g17(c.rrm.noise_density_dbm_hz) << "\n";
    o << "rrm.mode = " << to_string(c.rrm.mode) << "\n";
    o << "run.samples = " << c.samples << "\n";
    o << "run.seed = " << c.seed << "\n";
    o << "run.seeds =";
    for (std::size_t i = 0; i < c.seeds.size(); ++i) o << (i ? "," : " ") << c.seeds[i];
    o << "\n";
    o << "run.drops = " << c.drops << "\n";
    o << "run.train_fraction = " << format_g17(c.train_fraction) << "\n";
    o << "run.out_dir = " << c.out_dir << "\n";
    o << "run.threads = " << c.threads << "\n";
    return o.str();
}

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a64(dump_config(c)); }

}  // namespace d2dgain
