#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "d2dgain/csv.hpp"
#include "d2dgain/dataset.hpp"
#include "d2dgain/mlp.hpp"
#include "d2dgain/rrm.hpp"
#include "d2dgain/scenario.hpp"
#include "d2dgain/trainer.hpp"

namespace d2dgain {

// Sample Pearson correlation; computed on dB path-loss values throughout
// this project (linear gains would let a few near-field samples dominate).
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw std::invalid_argument("pearson: zero variance input");
    return sxy / std::sqrt(sxx * syy);
}

struct ExperimentRow {
    std::string series;  // e.g. environment or rrm mode
    double axis = 0.0;
    std::uint64_t replica_seed = 0;
    std::vector<double> metrics;
};

struct ExperimentReport {
    std::string id;
    std::string axis_name;
    std::vector<std::string> metric_names;
    std::vector<ExperimentRow> rows;
    std::string config_snapshot;
    std::string notes;
};

inline CsvTable to_csv(const ExperimentReport& r) {
    CsvTable t;
    t.columns = {"series", r.axis_name, "replica_seed"};
    t.columns.insert(t.columns.end(), r.metric_names.begin(), r.metric_names.end());
    for (const ExperimentRow& row : r.rows) {
        std::vector<std::string> cells = {row.series, format_g17(row.axis),
                                          std::to_string(row.replica_seed)};
        for (double m : row.metrics) cells.push_back(format_g17(m));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline void write_report_csv(const ExperimentReport& r, std::ostream& out, std::uint64_t seed) {
    write_csv(out, to_csv(r), manifest_line(fnv1a64(r.config_snapshot), seed));
}

// Sidecar naming axes/series so an external plotting tool can redraw the figure.
inline void write_plot_manifest(const ExperimentReport& r, const std::string& csv_name,
                                std::ostream& out, std::uint64_t seed) {
    out << manifest_line(fnv1a64(r.config_snapshot), seed) << "\n";
    out << "experiment = " << r.id << "\n";
    out << "csv = " << csv_name << "\n";
    out << "x = " << r.axis_name << "\n";
    out << "series_column = series\n";
    out << "metrics =";
    for (std::size_t i = 0; i < r.metric_names.size(); ++i)
        out << (i ? "," : " ") << r.metric_names[i];
    out << "\n";
    if (!r.notes.empty()) out << "notes = " << r.notes << "\n";
}

// ---- trained model bundle ----------------------------------------------------
// The MLP plus the world it was trained for. Persisting area/radio/seed
// lets `rrm` and `reproduce` rebuild the exact training topology later.

struct TrainedModel {
    MlpModel model;
    AreaConfig area;
    RadioParams radio;
    std::uint64_t dataset_seed = 0;
};

inline void save_trained_model(const TrainedModel& tm, std::ostream& out) {
    out.write("D2DTMD01", 8);
    detail::write_area(out, tm.area);
    detail::write_radio(out, tm.radio);
    detail::write_pod(out, tm.dataset_seed);
    save_model(tm.model, out);
}

inline TrainedModel load_trained_model(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "D2DTMD01", 8) != 0)
        throw std::runtime_error("load_trained_model: bad magic (not a trained-model file)");
    TrainedModel tm;
    tm.area = detail::read_area(in);
    tm.radio = detail::read_radio(in);
    detail::read_pod(in, tm.dataset_seed);
    tm.model = load_model(in);
    return tm;
}

inline void save_trained_model_file(const TrainedModel& tm, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    save_trained_model(tm, out);
}

inline TrainedModel load_trained_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    return load_trained_model(in);
}

// ---- end-to-end pipeline -------------------------------------------------------

struct PipelineConfig {
    AreaConfig area;
    RadioParams radio;
    LmConfig lm;
    RrmConfig rrm;
    double train_fraction = 0.7;
};

struct TrainedPipeline {
    TrainedModel tm;
    TrainReport report;
    double test_pearson = 0.0;
    Dataset test;  // held-out split, kept for regression tables
};

// True and predicted dB path loss over a dataset, in row order.
inline std::pair<std::vector<double>, std::vector<double>> eval_model_on(const MlpModel& model,
                                                                         const Dataset& d) {
    std::vector<double> truth(d.size()), pred(d.size());
    for (std::size_t s = 0; s < d.size(); ++s) {
        truth[s] = d.targets[s];
        pred[s] = predict_gain(model, d.feature_row(s)).pathloss_db;
    }
    return {std::move(truth), std::move(pred)};
}

inline double test_pearson_of(const MlpModel& model, const Dataset& d) {
    auto [truth, pred] = eval_model_on(model, d);
    return pearson(truth, pred);
}

// generate -> split -> fit norm -> init -> LM train -> held-out Pearson
inline TrainedPipeline train_pipeline(const PipelineConfig& pc, Environment env, int n_bs,
                                      std::size_t n_samples, std::uint64_t seed) {
    AreaConfig area = pc.area;
    area.environment = env;
    area.n_bs = n_bs;
    Dataset data = generate_dataset(area, pc.radio, n_samples, seed, pc.lm.threads);
    auto [train_set, test_set] = split(data, pc.train_fraction);
    MlpModel model = init_mlp(LayerSpec::standard(n_bs), seed);
    model.norm = fit_norm(train_set);
    auto [trained, report] = train(std::move(model), train_set, pc.lm);

    TrainedPipeline out;
    out.tm.model = std::move(trained);
    out.tm.area = area;
    out.tm.radio = pc.radio;
    out.tm.dataset_seed = seed;
    out.report = std::move(report);
    out.test = std::move(test_set);
    out.test_pearson = test_pearson_of(out.tm.model, out.test);
    return out;
}

// ---- experiment runners ---------------------------------------------------------

inline ExperimentReport exp_corr_vs_bs(const PipelineConfig& pc, Environment env,
                                       const std::vector<int>& l_values, std::size_t n_samples,
                                       const std::vector<std::uint64_t>& seeds) {
    ExperimentReport r;
    r.id = "corr_vs_bs";
    r.axis_name = "n_bs";
    r.metric_names = {"pearson"};
    r.notes = "test-set Pearson of true vs predicted d2d path loss (dB)";
    for (int l : l_values)
        for (std::uint64_t seed : seeds) {
            TrainedPipeline p = train_pipeline(pc, env, l, n_samples, seed);
            r.rows.push_back({to_string(env), static_cast<double>(l), seed, {p.test_pearson}});
        }
    return r;
}

inline ExperimentReport exp_corr_vs_samples(const PipelineConfig& pc, Environment env,
                                            const std::vector<std::size_t>& counts,
                                            const std::vector<std::uint64_t>& seeds,
                                            int n_bs = 3) {
    ExperimentReport r;
    r.id = "corr_vs_samples";
    r.axis_name = "n_samples";
    r.metric_names = {"pearson"};
    for (std::size_t count : counts)
        for (std::uint64_t seed : seeds) {
            TrainedPipeline p = train_pipeline(pc, env, n_bs, count, seed);
            r.rows.push_back({to_string(env), static_cast<double>(count), seed, {p.test_pearson}});
        }
    return r;
}

inline ExperimentReport exp_corr_vs_snr(const PipelineConfig& pc, Environment env,
                                        const std::vector<double>& snr_values_db,
                                        std::size_t n_samples,
                                        const std::vector<std::uint64_t>& seeds, int n_bs = 3) {
    ExperimentReport r;
    r.id = "corr_vs_snr";
    r.axis_name = "snr_g_db";
    r.metric_names = {"pearson"};
    r.notes = "estimation noise applied to cellular features of train and test samples";
    for (double snr : snr_values_db)
        for (std::uint64_t seed : seeds) {
            PipelineConfig noisy = pc;
            noisy.radio.snr_g_db = snr;
            TrainedPipeline p = train_pipeline(noisy, env, n_bs, n_samples, seed);
            r.rows.push_back({to_string(env), snr, seed, {p.test_pearson}});
        }
    return r;
}

inline std::vector<std::pair<double, double>> exp_regression_table(const MlpModel& model,
                                                                   const Dataset& test,
                                                                   std::size_t n_rows = 1000) {
    if (test.size() < n_rows)
        throw std::invalid_argument("exp_regression_table: test split smaller than requested rows");
    std::vector<std::pair<double, double>> rows;
    rows.reserve(n_rows);
    for (std::size_t s = 0; s < n_rows; ++s)
        rows.emplace_back(test.targets[s], predict_gain(model, test.feature_row(s)).pathloss_db);
    return rows;
}

inline void write_regression_csv(const std::vector<std::pair<double, double>>& rows,
                                 std::ostream& out, const std::string& manifest) {
    if (!manifest.empty()) out << manifest << "\n";
    out << "true_pl_db,predicted_pl_db\n";
    for (auto& [t, p] : rows) out << format_g17(t) << "," << format_g17(p) << "\n";
}

// Rebuilds the model's training topology and replaces d2d entries with
// predictions from the true cellular gains (the features); cellular
// entries stay true.
inline GainMatrixSet predict_gain_matrices(const TrainedModel& tm, const GainMatrixSet& true_gains) {
    GainMatrixSet pred = true_gains;
    const int l = true_gains.n_bs;
    std::vector<double> f(static_cast<std::size_t>(2 * l));
    for (int i = 0; i < true_gains.n_ues; ++i)
        for (int j = i + 1; j < true_gains.n_ues; ++j) {
            for (int b = 0; b < l; ++b) {
                f[static_cast<std::size_t>(b)] = pathloss_from_gain(true_gains.cell(i, b));
                f[static_cast<std::size_t>(l + b)] = pathloss_from_gain(true_gains.cell(j, b));
            }
            double g = predict_gain(tm.model, f).gain;
            pred.dd(i, j) = g;
            pred.dd(j, i) = g;
        }
    return pred;
}

// One drop: same RRM algorithm decided on true gains and on predicted
// gains; both decision sets are evaluated on the TRUE gains.
struct DropCapacities {
    double cap_true_bps = 0.0;
    double cap_pred_bps = 0.0;
};

inline DropCapacities run_capacity_drop(const TrainedModel& tm, const RrmConfig& rrm_cfg,
                                        Scenario& topo, int n_pairs, std::uint64_t user_seed) {
    place_users(topo, user_seed);
    GainMatrixSet gains = compute_gain_matrices(topo, tm.radio);
    GainMatrixSet pred = predict_gain_matrices(tm, gains);
    DropCapacities out;
    if (rrm_cfg.mode == RrmMode::Shared) {
        PowerDecision powers = all_max_powers(n_pairs, rrm_cfg);
        Allocation at = allocate_channels_greedy(gains, rrm_cfg, n_pairs);
        Allocation ap = allocate_channels_greedy(pred, rrm_cfg, n_pairs);
        out.cap_true_bps = sum_capacity(gains, at, powers, rrm_cfg);
        out.cap_pred_bps = sum_capacity(gains, ap, powers, rrm_cfg);
    } else {
        Allocation none;
        PowerDecision pt = binary_power_control_greedy(gains, rrm_cfg, n_pairs);
        PowerDecision pp = binary_power_control_greedy(pred, rrm_cfg, n_pairs);
        out.cap_true_bps = sum_capacity(gains, none, pt, rrm_cfg);
        out.cap_pred_bps = sum_capacity(gains, none, pp, rrm_cfg);
    }
    return out;
}

inline ExperimentReport exp_capacity(const PipelineConfig& pc, const TrainedModel& tm, RrmMode mode,
                                     const std::vector<int>& n_values, int n_drops,
                                     std::uint64_t drop_seed_base) {
    ExperimentReport r;
    r.id = mode == RrmMode::Shared ? "capacity_ca" : "capacity_pc";
    r.axis_name = "n_pairs";
    r.metric_names = {"cap_true_bps", "cap_pred_bps"};
    r.notes = "decisions from true vs predicted gains, capacities always on true gains";
    RrmConfig cfg = pc.rrm;
    cfg.mode = mode;
    for (int n : n_values) {
        AreaConfig area = tm.area;
        area.n_pairs = n;
        area.n_cues = mode == RrmMode::Shared ? cfg.n_channels : 0;
        Scenario topo = generate_topology(area, topology_seed(tm.dataset_seed));
        for (int d = 0; d < n_drops; ++d) {
            std::uint64_t user_seed =
                derive_seed(drop_seed_base, kStreamDrops + static_cast<std::uint64_t>(n) * 100000 +
                                                static_cast<std::uint64_t>(d));
            DropCapacities c = run_capacity_drop(tm, cfg, topo, n, user_seed);
            r.rows.push_back({to_string(tm.area.environment), static_cast<double>(n), user_seed,
                              {c.cap_true_bps, c.cap_pred_bps}});
        }
    }
    return r;
}

struct CapacityPoint {
    std::string series;
    double axis = 0.0;
    double mean_true_bps = 0.0;
    double mean_pred_bps = 0.0;
    double rel_gap = 0.0;  // (true - pred) / true
    int drops = 0;
};

inline std::vector<CapacityPoint> capacity_summary(const ExperimentReport& r) {
    std::vector<CapacityPoint> pts;
    for (const ExperimentRow& row : r.rows) {
        CapacityPoint* p = nullptr;
        for (auto& q : pts)
            if (q.series == row.series && q.axis == row.axis) p = &q;
        if (!p) {
            pts.push_back({row.series, row.axis, 0.0, 0.0, 0.0, 0});
            p = &pts.back();
        }
        p->mean_true_bps += row.metrics[0];
        p->mean_pred_bps += row.metrics[1];
        p->drops += 1;
    }
    for (auto& p : pts) {
        p.mean_true_bps /= p.drops;
        p.mean_pred_bps /= p.drops;
        p.rel_gap = (p.mean_true_bps - p.mean_pred_bps) / p.mean_true_bps;
    }
    return pts;
}

inline ExperimentReport exp_overhead(int l, int m, const std::vector<int>& n_values) {
    ExperimentReport r;
    r.id = "overhead";
    r.axis_name = "n_pairs";
    r.metric_names = {"total", "cellular_only", "reduction", "ratio"};
    for (int n : n_values)
        for (RrmMode mode : {RrmMode::Shared, RrmMode::Dedicated}) {
            OverheadReport o = signaling_overhead(l, n, m, mode);
            double ratio = o.cellular_only > 0
                               ? static_cast<double>(o.total) / static_cast<double>(o.cellular_only)
                               : std::numeric_limits<double>::quiet_NaN();
            r.rows.push_back({to_string(mode), static_cast<double>(n), 0,
                              {static_cast<double>(o.total), static_cast<double>(o.cellular_only),
                               static_cast<double>(o.reduction), ratio}});
        }
    return r;
}

}  // namespace d2dgain
