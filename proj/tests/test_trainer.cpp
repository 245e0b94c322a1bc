#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "d2dgain/trainer.hpp"

using namespace d2dgain;

namespace {

NormStats identity_norm(int dim) {
    NormStats st;
    st.feature_mean.assign(dim, 0.0);
    st.feature_std.assign(dim, 1.0);
    return st;
}

// linear data: target = 3*f0 - 2*f1 + 0.5 (+ optional noise)
Dataset linear_dataset(std::size_t n, double noise, std::uint64_t seed) {
    Dataset d;
    d.area.n_bs = 1;  // feature_dim 2
    d.seed = seed;
    Rng rng(seed);
    for (std::size_t s = 0; s < n; ++s) {
        double f0 = rng.uniform(-2.0, 2.0), f1 = rng.uniform(-2.0, 2.0);
        d.features.push_back(f0);
        d.features.push_back(f1);
        d.targets.push_back(3.0 * f0 - 2.0 * f1 + 0.5 + noise * rng.normal());
    }
    return d;
}

MlpModel linear_model() {
    MlpModel m = init_mlp(LayerSpec{{2, 1}}, 0);
    m.norm = identity_norm(2);
    return m;
}

double pearson_of(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= a.size();
    mb /= b.size();
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

class RosenbrockProblem : public LeastSquaresProblem {
public:
    int param_count() const override { return 2; }
    std::size_t residual_count() const override { return 2; }

    void normal_equations(const Eigen::VectorXd& theta, Eigen::MatrixXd& jtj,
                          Eigen::VectorXd& jtr, double& sse) override {
        double x = theta[0], y = theta[1];
        Eigen::Vector2d r(10.0 * (y - x * x), 1.0 - x);
        Eigen::Matrix2d j;  // J = -dr/dtheta, matching the "residual = y - yhat" convention
        j << 20.0 * x, -10.0, 1.0, 0.0;
        jtj = j.transpose() * j;
        jtr = j.transpose() * r;
        sse = r.squaredNorm();
    }

    double sum_squared_residuals(const Eigen::VectorXd& theta) override {
        double x = theta[0], y = theta[1];
        double r1 = 10.0 * (theta[1] - x * x), r2 = 1.0 - x;
        (void)y;
        return r1 * r1 + r2 * r2;
    }
};

// residuals identically zero: no strict decrease is ever possible
class ZeroProblem : public LeastSquaresProblem {
public:
    int param_count() const override { return 3; }
    std::size_t residual_count() const override { return 4; }
    void normal_equations(const Eigen::VectorXd&, Eigen::MatrixXd& jtj, Eigen::VectorXd& jtr,
                          double& sse) override {
        jtj.setZero(3, 3);
        jtr.setZero(3);
        sse = 0.0;
    }
    double sum_squared_residuals(const Eigen::VectorXd&) override { return 0.0; }
};

}  // namespace

TEST(Trainer, MseLossOfExactModelIsZero) {
    Dataset d = linear_dataset(50, 0.0, 1);
    MlpModel m = linear_model();
    m.weights[0](0, 0) = 3.0;
    m.weights[0](0, 1) = -2.0;
    m.biases[0][0] = 0.5;
    EXPECT_NEAR(mse_loss(m, d), 0.0, 1e-24);
}

TEST(Trainer, MseLossOfZeroModelOnZScoredDataIsOne) {
    Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 5000, 2);
    MlpModel m = init_mlp(LayerSpec::standard(3), 1);
    for (auto& w : m.weights) w.setZero();
    m.norm = fit_norm(d);
    EXPECT_NEAR(mse_loss(m, d), 1.0, 1e-9);
}

TEST(Trainer, MseLossPermutationInvariant) {
    Dataset d = linear_dataset(500, 0.3, 3);
    Dataset rev = d;
    const std::size_t fd = 2, n = d.size();
    for (std::size_t s = 0; s < n; ++s) {
        rev.targets[s] = d.targets[n - 1 - s];
        for (std::size_t c = 0; c < fd; ++c)
            rev.features[s * fd + c] = d.features[(n - 1 - s) * fd + c];
    }
    MlpModel m = linear_model();
    EXPECT_NEAR(mse_loss(m, d), mse_loss(m, rev), 1e-12);
}

TEST(Trainer, LmStepShrinksWithDamping) {
    Dataset d = linear_dataset(200, 0.5, 4);
    MlpModel m = linear_model();
    Eigen::VectorXd theta = flatten_params(m);
    LmStepResult lo = lm_step(m, d, 1e6);
    LmStepResult hi = lm_step(m, d, 1e12);
    ASSERT_TRUE(lo.solved);
    ASSERT_TRUE(hi.solved);
    double ratio = (lo.candidate - theta).norm() / (hi.candidate - theta).norm();
    EXPECT_NEAR(ratio, 1e6, 1e4);  // delta ~ jtr/mu in the heavy-damping limit
}

TEST(Trainer, LmStepSolvesLinearLeastSquaresExactly) {
    Dataset d = linear_dataset(300, 0.4, 5);
    MlpModel m = linear_model();
    LmStepResult step = lm_step(m, d, 1e-12);
    ASSERT_TRUE(step.solved);

    // oracle: QR on the design matrix [f0 f1 1]
    Eigen::MatrixXd a(300, 3);
    Eigen::VectorXd b(300);
    for (int s = 0; s < 300; ++s) {
        a(s, 0) = d.features[2 * s];
        a(s, 1) = d.features[2 * s + 1];
        a(s, 2) = 1.0;
        b[s] = d.targets[s];
    }
    Eigen::VectorXd opt = a.colPivHouseholderQr().solve(b);
    // ParamVector order for {2,1}: w00, w01, bias
    EXPECT_NEAR(step.candidate[0], opt[0], 1e-6);
    EXPECT_NEAR(step.candidate[1], opt[1], 1e-6);
    EXPECT_NEAR(step.candidate[2], opt[2], 1e-6);

    // residuals are linear in theta: the quadratic prediction is exact
    MlpModel at_candidate = m;
    unflatten_params(at_candidate, step.candidate);
    EXPECT_NEAR(step.predicted_mse, mse_loss(at_candidate, d),
                1e-9 * std::max(1.0, step.predicted_mse));
}

TEST(Trainer, LmStepZeroResidualsGivesZeroStep) {
    Dataset d = linear_dataset(100, 0.0, 6);
    MlpModel m = linear_model();
    m.weights[0](0, 0) = 3.0;
    m.weights[0](0, 1) = -2.0;
    m.biases[0][0] = 0.5;
    Eigen::VectorXd theta = flatten_params(m);
    LmStepResult step = lm_step(m, d, 1e-3);
    ASSERT_TRUE(step.solved);
    EXPECT_NEAR((step.candidate - theta).norm(), 0.0, 1e-12);
    EXPECT_NEAR(step.predicted_mse, 0.0, 1e-20);
}

TEST(Trainer, LmMinimizeSolvesRosenbrock) {
    RosenbrockProblem problem;
    Eigen::VectorXd start(2);
    start << -1.2, 1.0;
    LmConfig cfg;
    cfg.max_epochs = 500;
    cfg.loss_tolerance = 0.0;  // run until no strict decrease is possible
    LmResult res = lm_minimize(problem, start, cfg);
    EXPECT_NEAR(res.theta[0], 1.0, 1e-4);
    EXPECT_NEAR(res.theta[1], 1.0, 1e-4);
    EXPECT_LT(problem.sum_squared_residuals(res.theta), 1e-8);
    EXPECT_GT(res.report.accepted_epochs, 0);
    EXPECT_FALSE(res.report.diverged());
}

TEST(Trainer, ZeroResidualProblemReportsMuExhaustion) {
    ZeroProblem problem;
    LmConfig cfg;
    LmResult res = lm_minimize(problem, Eigen::VectorXd::Zero(3), cfg);
    EXPECT_EQ(res.report.stop_reason, StopReason::MuExhausted);
    EXPECT_EQ(res.report.accepted_epochs, 0);
    EXPECT_TRUE(res.report.diverged());
}

TEST(Trainer, AcceptedLossTraceStrictlyDecreases) {
    Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 600, 7);
    MlpModel m = init_mlp(LayerSpec::standard(3), 2);
    m.norm = fit_norm(d);
    LmConfig cfg;
    cfg.max_epochs = 15;
    cfg.validation_fraction = 0.0;
    auto [trained, report] = train(std::move(m), d, cfg);
    ASSERT_GE(report.epochs.size(), 2u);
    for (std::size_t i = 1; i < report.epochs.size(); ++i)
        EXPECT_LT(report.epochs[i].train_mse, report.epochs[i - 1].train_mse);
    EXPECT_DOUBLE_EQ(report.final_train_mse, report.epochs.back().train_mse);
}

TEST(Trainer, LossToleranceStopsTraining) {
    // A tiny net saturates quickly; a standard-width one keeps improving >1%
    // per epoch for hundreds of epochs on this sample count and never stalls.
    Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 600, 8);
    MlpModel m = init_mlp(LayerSpec{{6, 3, 1}}, 3);
    m.norm = fit_norm(d);
    LmConfig cfg;
    cfg.max_epochs = 100;
    cfg.loss_tolerance = 1e-2;
    cfg.loss_patience = 2;
    cfg.validation_fraction = 0.0;
    auto [trained, report] = train(std::move(m), d, cfg);
    EXPECT_EQ(report.stop_reason, StopReason::LossTolerance);
    EXPECT_LT(report.accepted_epochs, 100);
}

TEST(Trainer, ValidationTracksBestEpoch) {
    Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 2000, 9);
    MlpModel m = init_mlp(LayerSpec::standard(3), 4);
    m.norm = fit_norm(d);
    LmConfig cfg;
    cfg.max_epochs = 25;
    cfg.validation_fraction = 0.2;
    cfg.early_stop_patience = 5;
    auto [trained, report] = train(std::move(m), d, cfg);
    ASSERT_FALSE(report.epochs.empty());
    double min_val = std::numeric_limits<double>::infinity();
    for (const EpochStats& e : report.epochs) {
        ASSERT_FALSE(std::isnan(e.val_mse));
        min_val = std::min(min_val, e.val_mse);
    }
    EXPECT_DOUBLE_EQ(report.best_val_mse, min_val);
}

TEST(Trainer, TrainingIsDeterministic) {
    LmConfig cfg;
    cfg.max_epochs = 8;
    auto run = [&] {
        Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 600, 10);
        MlpModel m = init_mlp(LayerSpec::standard(3), 5);
        m.norm = fit_norm(d);
        return train(std::move(m), d, cfg);
    };
    auto [ma, ra] = run();
    auto [mb, rb] = run();
    Eigen::VectorXd ta = flatten_params(ma), tb = flatten_params(mb);
    EXPECT_TRUE((ta.array() == tb.array()).all());
    ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i)
        EXPECT_EQ(ra.epochs[i].train_mse, rb.epochs[i].train_mse);
}

TEST(Trainer, ThreadCountDoesNotChangeResult) {
    auto run = [&](int threads) {
        Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 600, 11);
        MlpModel m = init_mlp(LayerSpec::standard(3), 6);
        m.norm = fit_norm(d);
        LmConfig cfg;
        cfg.max_epochs = 5;
        cfg.batch_size = 128;  // several chunks per wave
        cfg.threads = threads;
        return train(std::move(m), d, cfg);
    };
    auto [ma, ra] = run(1);
    auto [mb, rb] = run(3);
    Eigen::VectorXd ta = flatten_params(ma), tb = flatten_params(mb);
    EXPECT_TRUE((ta.array() == tb.array()).all());
    ASSERT_EQ(ra.epochs.size(), rb.epochs.size());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i)
        EXPECT_EQ(ra.epochs[i].train_mse, rb.epochs[i].train_mse);
}

TEST(Trainer, SmallRuralRunReachesHighCorrelation) {
    Dataset d = generate_dataset(AreaConfig{}, RadioParams{}, 3000, 12);
    auto [train_set, test_set] = split(d, 0.8);
    MlpModel m = init_mlp(LayerSpec::standard(3), 7);
    m.norm = fit_norm(train_set);
    LmConfig cfg;
    cfg.max_epochs = 40;
    auto [trained, report] = train(std::move(m), train_set, cfg);
    EXPECT_FALSE(report.diverged());

    std::vector<double> truth, pred;
    for (std::size_t s = 0; s < test_set.size(); ++s) {
        truth.push_back(test_set.targets[s]);
        pred.push_back(predict_gain(trained, test_set.feature_row(s)).pathloss_db);
    }
    EXPECT_GE(pearson_of(truth, pred), 0.9);
}

TEST(Trainer, ReportCsvShape) {
    TrainReport r;
    r.epochs.push_back({1, 0.5, 0.6, 1e-3});
    r.epochs.push_back({2, 0.4, 0.55, 1e-4});
    std::ostringstream out;
    write_train_report_csv(r, out, "# manifest");
    std::istringstream in(out.str());
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    EXPECT_EQ(line, "# manifest");
    ASSERT_TRUE(std::getline(in, line));
    EXPECT_EQ(line, "epoch,train_mse,val_mse,mu");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST(Trainer, ConfigValidation) {
    LmConfig ok;
    EXPECT_NO_THROW(ok.validate());
    LmConfig bad = ok;
    bad.mu_init = 0.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.mu_decrease = 1.5;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.validation_fraction = 1.0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Trainer, RejectsUnfittedOrMismatchedModel) {
    Dataset d = linear_dataset(50, 0.1, 13);
    MlpModel no_norm = init_mlp(LayerSpec{{2, 1}}, 0);
    LmConfig cfg;
    EXPECT_THROW(train(std::move(no_norm), d, cfg), std::invalid_argument);

    MlpModel wrong_dim = init_mlp(LayerSpec{{4, 1}}, 0);
    wrong_dim.norm = identity_norm(4);
    EXPECT_THROW(train(std::move(wrong_dim), d, cfg), std::invalid_argument);
    EXPECT_THROW(mse_loss(linear_model(), Dataset{}), std::invalid_argument);
}
