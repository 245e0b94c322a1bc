// Command-line surface: dataset generation, LM training, evaluation, RRM
// capacity runs, signaling overhead tables, and figure reproduction.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "d2dgain/config.hpp"
#include "d2dgain/csv.hpp"
#include "d2dgain/dataset.hpp"
#include "d2dgain/eval.hpp"
#include "d2dgain/mlp.hpp"
#include "d2dgain/rrm.hpp"
#include "d2dgain/trainer.hpp"

namespace {

using namespace d2dgain;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    return out;
}

void write_sidecar_manifest(const std::string& data_path, const RunConfig& cfg,
                            std::uint64_t seed, const std::vector<std::string>& facts) {
    std::ofstream out(data_path + ".manifest.txt");
    if (!out) throw std::runtime_error("cannot write manifest for: " + data_path);
    out << manifest_line(config_hash(cfg), seed) << "\n";
    for (const auto& f : facts) out << f << "\n";
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;  // key=value overrides
    int threads = -1;               // -1: not given
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "config file with key = value lines");
    cmd->add_option("--set", a.sets, "override a config key (key=value, repeatable)");
    cmd->add_option("--threads", a.threads, "worker thread cap (default: all hardware threads)");
}

RunConfig build_config(const CommonArgs& a) {
    RunConfig cfg;
    if (!a.config_path.empty()) load_config_file(cfg, a.config_path);
    for (const std::string& kv : a.sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set needs key=value, got '" + kv + "'");
        set_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.threads >= 0) cfg.threads = a.threads;
    return cfg;
}

TrainedPipeline run_training(const RunConfig& cfg, Environment env, int n_bs,
                             std::size_t n_samples, std::uint64_t seed) {
    std::fprintf(stderr, "[train] env=%s L=%d samples=%zu seed=%llu\n", to_string(env), n_bs,
                 n_samples, static_cast<unsigned long long>(seed));
    TrainedPipeline p = train_pipeline(cfg.pipeline(), env, n_bs, n_samples, seed);
    std::fprintf(stderr, "[train] epochs=%d stop=%s train_mse=%.3g pearson=%.4f (%.1fs)\n",
                 p.report.accepted_epochs, to_string(p.report.stop_reason),
                 p.report.final_train_mse, p.test_pearson, p.report.wall_s);
    return p;
}

// ---- subcommands ---------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const std::string& out_path, const std::string& csv_path) {
    cfg.validate();
    Dataset d = generate_dataset(cfg.area, cfg.radio, cfg.samples, cfg.seed,
                                 cfg.effective_threads());
    save_dataset_file(d, out_path);
    write_sidecar_manifest(out_path, cfg, cfg.seed,
                           {"samples = " + std::to_string(d.size()),
                            "environment = " + std::string(to_string(d.area.environment)),
                            "n_bs = " + std::to_string(d.area.n_bs),
                            "seed = " + std::to_string(d.seed)});
    if (!csv_path.empty()) {
        auto out = open_out(csv_path);
        out << manifest_line(config_hash(cfg), cfg.seed) << "\n";
        write_dataset_csv(d, out);
    }
    std::printf("wrote %s (%zu samples)\n", out_path.c_str(), d.size());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_path, const std::string& out_path,
              const std::string& report_path) {
    Dataset data = load_dataset_file(data_path);
    auto [train_set, test_set] = split(data, cfg.train_fraction);
    MlpModel model = init_mlp(LayerSpec::standard(data.area.n_bs), cfg.seed);
    model.norm = fit_norm(train_set);
    LmConfig lm = cfg.lm;
    lm.threads = cfg.effective_threads();
    auto [trained, report] = train(std::move(model), train_set, lm);

    if (!report_path.empty()) {
        auto out = open_out(report_path);
        write_train_report_csv(report, out, manifest_line(config_hash(cfg), cfg.seed));
    }
    if (report.diverged()) {
        std::fprintf(stderr, "error: training diverged (mu exhausted before any accepted step)\n");
        return 2;
    }
    TrainedModel tm{std::move(trained), data.area, data.radio, data.seed};
    {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + out_path);
        save_trained_model(tm, out);
    }
    write_sidecar_manifest(out_path, cfg, cfg.seed,
                           {"dataset = " + data_path, "dataset_seed = " + std::to_string(data.seed),
                            "init_seed = " + std::to_string(cfg.seed),
                            "stop_reason = " + std::string(to_string(report.stop_reason)),
                            "epochs = " + std::to_string(report.accepted_epochs)});
    double r = test_pearson_of(tm.model, test_set);
    std::printf("wrote %s\n", out_path.c_str());
    std::printf("epochs=%d stop=%s train_mse=%s test_pearson=%s\n", report.accepted_epochs,
                to_string(report.stop_reason), format_g17(report.final_train_mse).c_str(),
                format_g17(r).c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::string& data_path,
             const std::string& regression_path, std::size_t rows) {
    TrainedModel tm = load_trained_model_file(model_path);
    Dataset data = load_dataset_file(data_path);
    auto [train_set, test_set] = split(data, cfg.train_fraction);
    (void)train_set;  // evaluation sticks to the held-out side of the same split
    double r = test_pearson_of(tm.model, test_set);
    if (!regression_path.empty()) {
        auto table = exp_regression_table(tm.model, test_set, rows);
        auto out = open_out(regression_path);
        write_regression_csv(table, out, manifest_line(config_hash(cfg), data.seed));
    }
    std::printf("pearson=%s\n", format_g17(r).c_str());
    return 0;
}

void append_rrm_rows(CsvTable& t, const RunConfig& cfg, const TrainedModel& tm, RrmMode mode,
                     const std::vector<int>& pairs) {
    ExperimentReport rep = exp_capacity(cfg.pipeline(), tm, mode, pairs, cfg.drops, cfg.seed);
    for (const CapacityPoint& p : capacity_summary(rep)) {
        OverheadReport o = signaling_overhead(tm.area.n_bs, static_cast<int>(p.axis),
                                              cfg.rrm.n_channels, mode);
        auto row = [&](const char* source, double cap) {
            t.rows.push_back({format_g17(p.axis), to_string(mode), source, format_g17(cap),
                              std::to_string(p.drops), std::to_string(o.total),
                              std::to_string(o.cellular_only), std::to_string(o.reduction)});
        };
        row("true", p.mean_true_bps);
        row("predicted", p.mean_pred_bps);
    }
}

int cmd_rrm(const RunConfig& cfg, const std::string& model_path, const std::string& mode_str,
            const std::vector<int>& pairs, const std::string& out_path) {
    TrainedModel tm = load_trained_model_file(model_path);
    CsvTable t;
    t.columns = {"n_pairs", "mode",           "gains_source",       "sum_capacity_bps",
                 "drops",   "overhead_total", "overhead_cellular_only", "overhead_reduction"};
    if (mode_str == "shared" || mode_str == "both")
        append_rrm_rows(t, cfg, tm, RrmMode::Shared, pairs);
    if (mode_str == "dedicated" || mode_str == "both")
        append_rrm_rows(t, cfg, tm, RrmMode::Dedicated, pairs);
    if (mode_str != "shared" && mode_str != "dedicated" && mode_str != "both")
        throw std::invalid_argument("rrm: --mode must be shared|dedicated|both");
    auto out = open_out(out_path);
    write_csv(out, t, manifest_line(config_hash(cfg), cfg.seed));
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_overhead(const RunConfig& cfg, const std::vector<int>& pairs, const std::string& out_path) {
    ExperimentReport rep = exp_overhead(cfg.area.n_bs, cfg.rrm.n_channels, pairs);
    rep.config_snapshot = dump_config(cfg);
    auto out = open_out(out_path);
    write_report_csv(rep, out, cfg.seed);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

// ---- reproduce -------------------------------------------------------------------

struct ReproduceArgs {
    std::string fig;
    std::string env = "both";
    std::size_t samples = 0;  // 0: per-figure desk-scale default
    std::vector<std::size_t> counts;
    std::vector<double> snrs;
    std::vector<int> pairs = {2, 4, 6, 8, 10};
};

std::vector<Environment> pick_envs(const std::string& env) {
    if (env == "rural") return {Environment::Rural};
    if (env == "urban") return {Environment::Urban};
    if (env == "both") return {Environment::Rural, Environment::Urban};
    throw std::invalid_argument("--env must be rural|urban|both");
}

std::size_t default_samples(Environment env, std::size_t requested) {
    if (requested > 0) return requested;
    return env == Environment::Rural ? 10000 : 30000;
}

void emit_report(const RunConfig& cfg, ExperimentReport rep, const std::string& name) {
    rep.config_snapshot = dump_config(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::string csv_name = name + ".csv";
    std::string csv_path = cfg.out_dir + "/" + csv_name;
    {
        auto out = open_out(csv_path);
        write_report_csv(rep, out, cfg.seed);
    }
    {
        auto out = open_out(cfg.out_dir + "/" + name + "_manifest.txt");
        write_plot_manifest(rep, csv_name, out, cfg.seed);
    }
    std::printf("wrote %s\n", csv_path.c_str());
}

int cmd_reproduce(const RunConfig& cfg, const ReproduceArgs& a) {
    static const std::set<std::string> valid = {"fig5", "fig6", "fig7", "fig8",
                                                "fig9", "fig10", "fig11"};
    if (!valid.count(a.fig)) {
        std::string ids;
        for (const auto& v : valid) ids += (ids.empty() ? "" : ", ") + v;
        throw std::invalid_argument("unknown figure id '" + a.fig + "' (valid: " + ids + ")");
    }
    PipelineConfig pc = cfg.pipeline();

    if (a.fig == "fig11") {
        std::vector<int> all_n;
        for (int n = 2; n <= 10; ++n) all_n.push_back(n);
        emit_report(cfg, exp_overhead(cfg.area.n_bs, cfg.rrm.n_channels, all_n), "fig11");
        return 0;
    }

    std::vector<Environment> envs = pick_envs(a.env);
    if (a.fig == "fig5") {
        ExperimentReport merged;
        for (Environment env : envs) {
            ExperimentReport r = exp_corr_vs_bs(pc, env, {1, 2, 3, 4, 5},
                                                default_samples(env, a.samples), cfg.seeds);
            if (merged.id.empty()) merged = r;
            else merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
        }
        emit_report(cfg, merged, "fig5");
        return 0;
    }
    if (a.fig == "fig6") {
        std::filesystem::create_directories(cfg.out_dir);
        for (Environment env : envs) {
            TrainedPipeline p = run_training(cfg, env, cfg.area.n_bs,
                                             default_samples(env, a.samples), cfg.seed);
            std::string path = cfg.out_dir + "/fig6_" + to_string(env) + ".csv";
            auto out = open_out(path);
            write_regression_csv(exp_regression_table(p.tm.model, p.test, 1000), out,
                                 manifest_line(config_hash(cfg), cfg.seed));
            std::printf("wrote %s\n", path.c_str());
        }
        return 0;
    }
    if (a.fig == "fig7") {
        std::vector<std::size_t> counts = a.counts;
        if (counts.empty()) counts = {1000, 3162, 10000, 31623, 100000};
        ExperimentReport merged;
        for (Environment env : envs) {
            ExperimentReport r = exp_corr_vs_samples(pc, env, counts, cfg.seeds, cfg.area.n_bs);
            if (merged.id.empty()) merged = r;
            else merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
        }
        emit_report(cfg, merged, "fig7");
        return 0;
    }
    if (a.fig == "fig8") {
        std::vector<double> snrs = a.snrs;
        if (snrs.empty()) snrs = {10.0, 20.0, 30.0, std::numeric_limits<double>::infinity()};
        ExperimentReport merged;
        for (Environment env : envs) {
            ExperimentReport r = exp_corr_vs_snr(pc, env, snrs, default_samples(env, a.samples),
                                                 cfg.seeds, cfg.area.n_bs);
            if (merged.id.empty()) merged = r;
            else merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
        }
        emit_report(cfg, merged, "fig8");
        return 0;
    }

    // fig9 (shared-mode channel allocation) / fig10 (dedicated-mode power control)
    RrmMode mode = a.fig == "fig9" ? RrmMode::Shared : RrmMode::Dedicated;
    ExperimentReport merged;
    for (Environment env : envs) {
        std::size_t n_samples = a.samples > 0 ? a.samples
                                : env == Environment::Rural ? 10000
                                                            : 100000;
        TrainedPipeline p = run_training(cfg, env, cfg.area.n_bs, n_samples, cfg.seed);
        ExperimentReport r = exp_capacity(pc, p.tm, mode, a.pairs, cfg.drops, cfg.seed);
        if (merged.id.empty()) merged = r;
        else merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
    }
    emit_report(cfg, merged, a.fig);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"d2d channel gain prediction and rrm evaluation toolkit"};
    app.set_version_flag("--version", std::string(d2dgain::kToolName) + " " +
                                          std::string(d2dgain::kToolVersion));
    app.require_subcommand(1);

    CommonArgs gen_common, train_common, eval_common, rrm_common, ovh_common, rep_common;

    auto* gen = app.add_subcommand("gen-data", "generate a dataset file");
    std::string gen_out, gen_csv, gen_env;
    std::size_t gen_samples = 0;
    int gen_bs = -1;
    long long gen_seed = -1;
    double gen_snr = std::numeric_limits<double>::quiet_NaN();
    add_common(gen, gen_common);
    gen->add_option("--out", gen_out, "output dataset file")->required();
    gen->add_option("--csv", gen_csv, "also write the samples as CSV");
    gen->add_option("--samples", gen_samples, "sample count (default 1000000)");
    gen->add_option("--env", gen_env, "rural|urban");
    gen->add_option("--bs", gen_bs, "number of base stations L");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--snr-g", gen_snr, "cellular estimation SNR_G in dB (inf disables)");

    auto* tr = app.add_subcommand("train", "train a model on a dataset file");
    std::string tr_data, tr_out, tr_report;
    long long tr_seed = -1;
    int tr_max_epochs = -1;
    add_common(tr, train_common);
    tr->add_option("--data", tr_data, "dataset file")->required();
    tr->add_option("--out", tr_out, "output model file")->required();
    tr->add_option("--report", tr_report, "training report CSV");
    tr->add_option("--seed", tr_seed, "init seed");
    tr->add_option("--max-epochs", tr_max_epochs, "epoch cap");

    auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset's held-out split");
    std::string ev_model, ev_data, ev_reg;
    std::size_t ev_rows = 1000;
    add_common(ev, eval_common);
    ev->add_option("--model", ev_model, "trained model file")->required();
    ev->add_option("--data", ev_data, "dataset file")->required();
    ev->add_option("--regression-out", ev_reg, "write (true, predicted) dB pairs CSV");
    ev->add_option("--rows", ev_rows, "regression table rows (default 1000)");

    auto* rr = app.add_subcommand("rrm", "capacity of rrm decisions on true vs predicted gains");
    std::string rr_model, rr_mode = "both", rr_out;
    std::vector<int> rr_pairs = {2, 4, 6, 8, 10};
    long long rr_seed = -1;
    int rr_drops = -1;
    add_common(rr, rrm_common);
    rr->add_option("--model", rr_model, "trained model file")->required();
    rr->add_option("--out", rr_out, "output CSV")->required();
    rr->add_option("--mode", rr_mode, "shared|dedicated|both (default both)");
    rr->add_option("--pairs", rr_pairs, "D2D pair counts");
    rr->add_option("--drops", rr_drops, "drops per point (default 100)");
    rr->add_option("--seed", rr_seed, "drop seed base");

    auto* ov = app.add_subcommand("overhead", "signaling overhead table");
    std::string ov_out;
    std::vector<int> ov_pairs = {2, 3, 4, 5, 6, 7, 8, 9, 10};
    add_common(ov, ovh_common);
    ov->add_option("--out", ov_out, "output CSV")->required();
    ov->add_option("--pairs", ov_pairs, "D2D pair counts");

    auto* rp = app.add_subcommand("reproduce", "rebuild a result figure's data (fig5..fig11)");
    ReproduceArgs rp_args;
    long long rp_seed = -1;
    int rp_drops = -1;
    std::vector<long long> rp_seeds;
    add_common(rp, rep_common);
    rp->add_option("figure", rp_args.fig, "figure id: fig5..fig11")->required();
    rp->add_option("--env", rp_args.env, "rural|urban|both (default both)");
    rp->add_option("--samples", rp_args.samples, "override per-figure sample default");
    rp->add_option("--counts", rp_args.counts, "fig7 sample-count axis");
    rp->add_option("--snr", rp_args.snrs, "fig8 SNR_G axis (dB)");
    rp->add_option("--pairs", rp_args.pairs, "fig9/fig10 pair counts");
    rp->add_option("--seeds", rp_seeds, "replica seeds");
    rp->add_option("--seed", rp_seed, "base seed");
    rp->add_option("--drops", rp_drops, "fig9/fig10 drops per point");
    std::string rp_out_dir;
    rp->add_option("--out-dir", rp_out_dir, "output directory (default: run.out_dir)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = build_config(gen_common);
            if (gen_samples > 0) cfg.samples = gen_samples;
            if (!gen_env.empty()) cfg.area.environment = parse_environment(gen_env);
            if (gen_bs > 0) cfg.area.n_bs = gen_bs;
            if (gen_seed >= 0) cfg.seed = static_cast<std::uint64_t>(gen_seed);
            if (!std::isnan(gen_snr)) cfg.radio.snr_g_db = gen_snr;
            return cmd_gen_data(cfg, gen_out, gen_csv);
        }
        if (tr->parsed()) {
            RunConfig cfg = build_config(train_common);
            if (tr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(tr_seed);
            if (tr_max_epochs > 0) cfg.lm.max_epochs = tr_max_epochs;
            return cmd_train(cfg, tr_data, tr_out, tr_report);
        }
        if (ev->parsed()) {
            RunConfig cfg = build_config(eval_common);
            return cmd_eval(cfg, ev_model, ev_data, ev_reg, ev_rows);
        }
        if (rr->parsed()) {
            RunConfig cfg = build_config(rrm_common);
            if (rr_seed >= 0) cfg.seed = static_cast<std::uint64_t>(rr_seed);
            if (rr_drops > 0) cfg.drops = rr_drops;
            return cmd_rrm(cfg, rr_model, rr_mode, rr_pairs, rr_out);
        }
        if (ov->parsed()) {
            RunConfig cfg = build_config(ovh_common);
            return cmd_overhead(cfg, ov_pairs, ov_out);
        }
        if (rp->parsed()) {
            RunConfig cfg = build_config(rep_common);
            if (rp_seed >= 0) cfg.seed = static_cast<std::uint64_t>(rp_seed);
            if (rp_drops > 0) cfg.drops = rp_drops;
            if (!rp_seeds.empty()) {
                cfg.seeds.clear();
                for (long long s : rp_seeds) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
            }
            if (!rp_out_dir.empty()) cfg.out_dir = rp_out_dir;
            return cmd_reproduce(cfg, rp_args);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::out_of_range& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
