#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "d2dgain/eval.hpp"

using namespace d2dgain;

namespace {

// one small trained pipeline, shared across tests (training is the slow part)
const TrainedPipeline& small_pipeline() {
    static TrainedPipeline p = [] {
        PipelineConfig pc;
        pc.lm.max_epochs = 6;
        return train_pipeline(pc, Environment::Rural, 3, 800, 77);
    }();
    return p;
}

}  // namespace

TEST(Eval, PearsonExactCases) {
    std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * v + 1.0);
    EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
    for (double& v : y) v = -v;
    EXPECT_NEAR(pearson(x, y), -1.0, 1e-15);
}

TEST(Eval, PearsonMatchesHandComputation) {
    std::vector<double> x{1, 2, 3, 4};
    std::vector<double> y{1, 3, 2, 5};
    // two-pass reference computed independently here
    double mx = (1 + 2 + 3 + 4) / 4.0, my = (1 + 3 + 2 + 5) / 4.0;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 4; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    EXPECT_NEAR(pearson(x, y), sxy / std::sqrt(sxx * syy), 1e-12);
}

TEST(Eval, PearsonAffineInvariance) {
    Rng rng(1);
    std::vector<double> x, y, xs;
    for (int i = 0; i < 200; ++i) {
        x.push_back(rng.uniform(-3.0, 3.0));
        y.push_back(x.back() + rng.normal());
        xs.push_back(7.5 * x.back() - 100.0);
    }
    EXPECT_NEAR(pearson(x, y), pearson(xs, y), 1e-12);
}

TEST(Eval, PearsonRejectsDegenerateInput) {
    std::vector<double> a{1, 2, 3}, b{1, 2};
    EXPECT_THROW(pearson(a, b), std::invalid_argument);
    std::vector<double> single{1}, single2{2};
    EXPECT_THROW(pearson(single, single2), std::invalid_argument);
    std::vector<double> flat{2, 2, 2}, other{1, 2, 3};
    EXPECT_THROW(pearson(flat, other), std::invalid_argument);
    EXPECT_THROW(pearson(other, flat), std::invalid_argument);
}

TEST(Eval, PipelineProducesUsableModel) {
    const TrainedPipeline& p = small_pipeline();
    EXPECT_FALSE(p.report.diverged());
    EXPECT_EQ(p.test.size(), 240u);  // 30% of 800
    EXPECT_GT(p.test_pearson, 0.5);
    auto [truth, pred] = eval_model_on(p.tm.model, p.test);
    ASSERT_EQ(truth.size(), p.test.size());
    EXPECT_EQ(truth[0], p.test.targets[0]);
    EXPECT_NEAR(pearson(truth, pred), p.test_pearson, 1e-15);
}

TEST(Eval, TrainedModelFileRoundTrip) {
    const TrainedPipeline& p = small_pipeline();
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_trained_model(p.tm, buf);
    TrainedModel back = load_trained_model(buf);
    EXPECT_EQ(back.dataset_seed, p.tm.dataset_seed);
    EXPECT_EQ(back.area.environment, p.tm.area.environment);
    EXPECT_EQ(back.area.n_bs, p.tm.area.n_bs);
    EXPECT_EQ(back.radio.fc_hz, p.tm.radio.fc_hz);
    Eigen::VectorXd ta = flatten_params(p.tm.model), tb = flatten_params(back.model);
    EXPECT_TRUE((ta.array() == tb.array()).all());
    auto row = p.test.feature_row(0);
    EXPECT_EQ(predict_gain(p.tm.model, row).pathloss_db, predict_gain(back.model, row).pathloss_db);

    std::stringstream bad(std::ios::in | std::ios::out | std::ios::binary);
    bad << "WRONGMAGIC";
    EXPECT_THROW(load_trained_model(bad), std::runtime_error);
}

TEST(Eval, RegressionTableContract) {
    const TrainedPipeline& p = small_pipeline();
    auto rows = exp_regression_table(p.tm.model, p.test, 50);
    ASSERT_EQ(rows.size(), 50u);
    EXPECT_EQ(rows[0].first, p.test.targets[0]);
    EXPECT_EQ(rows[0].second, predict_gain(p.tm.model, p.test.feature_row(0)).pathloss_db);
    EXPECT_THROW(exp_regression_table(p.tm.model, p.test, p.test.size() + 1),
                 std::invalid_argument);

    std::ostringstream out;
    write_regression_csv(rows, out, "# m");
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "# m");
    std::getline(in, line);
    EXPECT_EQ(line, "true_pl_db,predicted_pl_db");
    int n = 0;
    while (std::getline(in, line)) ++n;
    EXPECT_EQ(n, 50);
}

TEST(Eval, PredictedMatricesReplaceOnlyD2dEntries) {
    // linear model: predicted pl = (pl_i + pl_j) / 2, L = 1
    MlpModel m = init_mlp(LayerSpec{{2, 1}}, 0);
    m.weights[0](0, 0) = 0.5;
    m.weights[0](0, 1) = 0.5;
    m.biases[0][0] = 0.0;
    m.norm.feature_mean = {0.0, 0.0};
    m.norm.feature_std = {1.0, 1.0};
    m.norm.target_mean = 0.0;
    m.norm.target_std = 1.0;
    TrainedModel tm;
    tm.model = std::move(m);
    tm.area.n_bs = 1;

    GainMatrixSet truth;
    truth.n_ues = 2;
    truth.n_bs = 1;
    truth.cellular = {gain_from_pathloss(60.0), gain_from_pathloss(80.0)};
    truth.d2d = {1.0, gain_from_pathloss(95.0), gain_from_pathloss(95.0), 1.0};

    GainMatrixSet pred = predict_gain_matrices(tm, truth);
    EXPECT_EQ(pred.cellular, truth.cellular);       // cellular gains stay true
    EXPECT_DOUBLE_EQ(pred.dd(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(pred.dd(1, 1), 1.0);
    EXPECT_NEAR(pred.dd(0, 1), gain_from_pathloss(70.0), 1e-15);  // (60+80)/2
    EXPECT_EQ(pred.dd(0, 1), pred.dd(1, 0));
    EXPECT_NE(pred.dd(0, 1), truth.dd(0, 1));
}

TEST(Eval, CapacityDropDeterministic) {
    const TrainedPipeline& p = small_pipeline();
    RrmConfig cfg;
    cfg.mode = RrmMode::Dedicated;
    AreaConfig area = p.tm.area;
    area.n_pairs = 3;
    area.n_cues = 0;
    Scenario topo = generate_topology(area, topology_seed(p.tm.dataset_seed));
    DropCapacities a = run_capacity_drop(p.tm, cfg, topo, 3, 999);
    DropCapacities b = run_capacity_drop(p.tm, cfg, topo, 3, 999);
    EXPECT_EQ(a.cap_true_bps, b.cap_true_bps);
    EXPECT_EQ(a.cap_pred_bps, b.cap_pred_bps);
    EXPECT_GT(a.cap_true_bps, 0.0);
    EXPECT_GT(a.cap_pred_bps, 0.0);
    DropCapacities c = run_capacity_drop(p.tm, cfg, topo, 3, 1000);
    EXPECT_NE(a.cap_true_bps, c.cap_true_bps);
}

TEST(Eval, ExpCapacityRowsAndDeterminism) {
    const TrainedPipeline& p = small_pipeline();
    PipelineConfig pc;
    ExperimentReport a = exp_capacity(pc, p.tm, RrmMode::Dedicated, {2, 4}, 3, 42);
    ASSERT_EQ(a.rows.size(), 6u);
    EXPECT_EQ(a.id, "capacity_pc");
    EXPECT_EQ(a.rows[0].axis, 2.0);
    EXPECT_EQ(a.rows[3].axis, 4.0);
    for (const auto& row : a.rows) {
        ASSERT_EQ(row.metrics.size(), 2u);
        EXPECT_GT(row.metrics[0], 0.0);
        EXPECT_GT(row.metrics[1], 0.0);
    }
    ExperimentReport b = exp_capacity(pc, p.tm, RrmMode::Dedicated, {2, 4}, 3, 42);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].metrics[0], b.rows[i].metrics[0]);
        EXPECT_EQ(a.rows[i].metrics[1], b.rows[i].metrics[1]);
    }

    ExperimentReport shared = exp_capacity(pc, p.tm, RrmMode::Shared, {2}, 2, 42);
    ASSERT_EQ(shared.rows.size(), 2u);
    EXPECT_EQ(shared.id, "capacity_ca");
    EXPECT_GT(shared.rows[0].metrics[0], 0.0);
}

TEST(Eval, CapacitySummaryAggregates) {
    ExperimentReport r;
    r.metric_names = {"cap_true_bps", "cap_pred_bps"};
    r.rows.push_back({"rural", 2.0, 1, {100.0, 90.0}});
    r.rows.push_back({"rural", 2.0, 2, {110.0, 100.0}});
    r.rows.push_back({"rural", 4.0, 3, {50.0, 50.0}});
    auto pts = capacity_summary(r);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0].axis, 2.0);
    EXPECT_EQ(pts[0].drops, 2);
    EXPECT_DOUBLE_EQ(pts[0].mean_true_bps, 105.0);
    EXPECT_DOUBLE_EQ(pts[0].mean_pred_bps, 95.0);
    EXPECT_NEAR(pts[0].rel_gap, 10.0 / 105.0, 1e-15);
    EXPECT_DOUBLE_EQ(pts[1].rel_gap, 0.0);
}

TEST(Eval, OverheadExperimentContent) {
    ExperimentReport r = exp_overhead(3, 10, {10});
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].series, "shared");
    EXPECT_EQ(r.rows[0].metrics, (std::vector<double>{670.0, 90.0, 580.0, 670.0 / 90.0}));
    EXPECT_EQ(r.rows[1].series, "dedicated");
    EXPECT_EQ(r.rows[1].metrics, (std::vector<double>{440.0, 60.0, 380.0, 440.0 / 60.0}));
}

TEST(Eval, ReportCsvStableAcrossRuns) {
    auto render = [] {
        ExperimentReport r = exp_overhead(3, 10, {2, 6, 10});
        r.config_snapshot = "snapshot";
        std::ostringstream out;
        write_report_csv(r, out, 5);
        return out.str();
    };
    std::string a = render(), b = render();
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.rfind("# d2dgain 0.1.0 config_hash=", 0), 0u);
    std::istringstream in(a);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    EXPECT_EQ(line, "series,n_pairs,replica_seed,total,cellular_only,reduction,ratio");
}

TEST(Eval, PlotManifestNamesAxes) {
    ExperimentReport r = exp_overhead(3, 10, {2});
    r.config_snapshot = "s";
    std::ostringstream out;
    write_plot_manifest(r, "overhead.csv", out, 1);
    std::string text = out.str();
    EXPECT_NE(text.find("experiment = overhead"), std::string::npos);
    EXPECT_NE(text.find("csv = overhead.csv"), std::string::npos);
    EXPECT_NE(text.find("x = n_pairs"), std::string::npos);
    EXPECT_NE(text.find("metrics = total,cellular_only,reduction,ratio"), std::string::npos);
}
