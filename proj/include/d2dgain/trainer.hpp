#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "d2dgain/csv.hpp"
#include "d2dgain/dataset.hpp"
#include "d2dgain/mlp.hpp"

namespace d2dgain {

struct LmConfig {
    double mu_init = 1e-3;
    double mu_increase = 10.0;
    double mu_decrease = 0.1;
    double mu_max = 1e10;
    int max_epochs = 200;
    int batch_size = 2000;          // Jacobian assembly chunk
    double loss_tolerance = 1e-6;   // relative improvement threshold ...
    int loss_patience = 5;          // ... over this many accepted epochs
    double validation_fraction = 0.1;
    int early_stop_patience = 10;
    int threads = 1;

    void validate() const {
        if (!(mu_init > 0.0)) throw std::invalid_argument("lm: mu_init must be > 0");
        if (!(mu_increase > 1.0 && mu_decrease > 0.0 && mu_decrease < 1.0))
            throw std::invalid_argument("lm: need mu_increase > 1 > mu_decrease > 0");
        if (!(mu_max >= mu_init)) throw std::invalid_argument("lm: mu_max must be >= mu_init");
        if (max_epochs < 1) throw std::invalid_argument("lm: max_epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("lm: batch_size must be >= 1");
        if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
            throw std::invalid_argument("lm: validation_fraction must be in [0, 1)");
        if (loss_patience < 1 || early_stop_patience < 1)
            throw std::invalid_argument("lm: patience values must be >= 1");
    }
};

enum class StopReason { MaxEpochs, LossTolerance, EarlyStop, MuExhausted };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::MaxEpochs: return "max_epochs";
        case StopReason::LossTolerance: return "loss_tolerance";
        case StopReason::EarlyStop: return "early_stop";
        case StopReason::MuExhausted: return "mu_exhausted";
    }
    return "?";
}

struct EpochStats {
    int epoch = 0;
    double train_mse = 0.0;
    double val_mse = std::numeric_limits<double>::quiet_NaN();
    double mu = 0.0;  // damping used by the accepted solve
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    StopReason stop_reason = StopReason::MaxEpochs;
    int accepted_epochs = 0;
    double best_val_mse = std::numeric_limits<double>::quiet_NaN();
    double final_train_mse = std::numeric_limits<double>::quiet_NaN();
    double wall_s = 0.0;

    // mu exhausted before any step was ever accepted: genuine divergence
    bool diverged() const {
        return stop_reason == StopReason::MuExhausted && accepted_epochs == 0;
    }
};

inline void write_train_report_csv(const TrainReport& r, std::ostream& out,
                                   const std::string& manifest = {}) {
    if (!manifest.empty()) out << manifest << "\n";
    out << "epoch,train_mse,val_mse,mu\n";
    for (const EpochStats& e : r.epochs)
        out << e.epoch << "," << format_g17(e.train_mse) << "," << format_g17(e.val_mse)
            << "," << format_g17(e.mu) << "\n";
}

// Abstract sum-of-squares problem: the LM core sees only normal equations,
// so toy problems (linear fits, Rosenbrock) drive the exact same code path
// as MLP training.
class LeastSquaresProblem {
public:
    virtual ~LeastSquaresProblem() = default;
    virtual int param_count() const = 0;
    virtual std::size_t residual_count() const = 0;
    // jtj: lower triangle valid (upper anything); jtr = J^T r; sse = |r|^2
    virtual void normal_equations(const Eigen::VectorXd& theta, Eigen::MatrixXd& jtj,
                                  Eigen::VectorXd& jtr, double& sse) = 0;
    virtual double sum_squared_residuals(const Eigen::VectorXd& theta) = 0;
};

struct LmResult {
    Eigen::VectorXd theta;
    TrainReport report;
};

// Classic Marquardt loop. One epoch = one normal-equation assembly at the
// current parameters, then a damping retry loop that reuses it: solve
// (J^T J + mu I) delta = J^T r, accept only a strict SSE decrease
// (mu *= mu_decrease), otherwise raise mu and re-solve. mu > mu_max ends
// training; with zero accepted epochs that is divergence (see report).
inline LmResult lm_minimize(LeastSquaresProblem& problem, Eigen::VectorXd theta,
                            const LmConfig& cfg,
                            const std::function<double(const Eigen::VectorXd&)>& val_loss = {}) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    const int p = problem.param_count();
    const double n = static_cast<double>(problem.residual_count());

    LmResult res;
    res.report.stop_reason = StopReason::MaxEpochs;

    Eigen::MatrixXd jtj(p, p), a(p, p);
    Eigen::VectorXd jtr(p), delta(p), candidate(p);
    double mu = cfg.mu_init;

    std::vector<double> accepted_losses;
    Eigen::VectorXd best_theta = theta;
    double best_val = std::numeric_limits<double>::infinity();
    int val_bad_streak = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        double sse = 0.0;
        problem.normal_equations(theta, jtj, jtr, sse);
        Eigen::MatrixXd jtj_full = jtj.template selfadjointView<Eigen::Lower>();

        bool accepted = false;
        double sse_new = 0.0;
        double mu_used = mu;
        while (true) {
            a = jtj_full;
            a.diagonal().array() += mu;
            Eigen::LLT<Eigen::MatrixXd> llt(a);
            bool ok = llt.info() == Eigen::Success;
            if (ok) {
                delta = llt.solve(jtr);
                ok = delta.allFinite();
            }
            if (ok) {
                candidate = theta + delta;
                sse_new = problem.sum_squared_residuals(candidate);
                if (std::isfinite(sse_new) && sse_new < sse) {
                    mu_used = mu;
                    accepted = true;
                    break;
                }
            }
            mu *= cfg.mu_increase;
            if (mu > cfg.mu_max) break;
        }
        if (!accepted) {
            res.report.stop_reason = StopReason::MuExhausted;
            break;
        }

        theta = candidate;
        mu = std::max(mu * cfg.mu_decrease, 1e-300);
        res.report.accepted_epochs += 1;
        accepted_losses.push_back(sse_new);

        EpochStats st;
        st.epoch = epoch;
        st.train_mse = sse_new / n;
        st.mu = mu_used;
        if (val_loss) {
            st.val_mse = val_loss(theta);
            if (st.val_mse < best_val) {
                best_val = st.val_mse;
                best_theta = theta;
                val_bad_streak = 0;
            } else {
                ++val_bad_streak;
            }
        }
        res.report.epochs.push_back(st);

        if (val_loss && val_bad_streak >= cfg.early_stop_patience) {
            res.report.stop_reason = StopReason::EarlyStop;
            break;
        }
        if (static_cast<int>(accepted_losses.size()) > cfg.loss_patience) {
            double before = accepted_losses[accepted_losses.size() - 1 - cfg.loss_patience];
            double now = accepted_losses.back();
            if ((before - now) / std::max(before, 1e-300) < cfg.loss_tolerance) {
                res.report.stop_reason = StopReason::LossTolerance;
                break;
            }
        }
    }

    if (val_loss && std::isfinite(best_val)) {
        res.theta = best_theta;
        res.report.best_val_mse = best_val;
    } else {
        res.theta = theta;
    }
    if (!accepted_losses.empty())
        res.report.final_train_mse = accepted_losses.back() / n;
    res.report.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ---- the MLP least-squares problem -------------------------------------------

namespace detail {

// Per-thread buffers for one chunk of the streamed J^T J accumulation.
struct LsqWorkspace {
    std::vector<Eigen::MatrixXd> acts;
    Eigen::MatrixXd x, j, jt, jtj;
    Eigen::VectorXd yhat, r, jtr;
    double sse = 0.0;
};

}  // namespace detail

// Streams chunks of at most batch_size rows; J^T J and J^T r accumulate
// over chunks, which equals full-batch LM without materializing J whole.
// Chunks are computed (possibly in parallel waves) into per-slot partials
// and merged in chunk order, so any thread count yields identical bits.
class MlpLsqProblem : public LeastSquaresProblem {
public:
    MlpLsqProblem(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                  std::vector<std::size_t> row_idx, int batch_size, int threads)
        : model_(model),
          x_(x),
          y_(y),
          idx_(std::move(row_idx)),
          batch_(batch_size),
          threads_(std::max(1, threads)) {
        if (idx_.empty()) throw std::invalid_argument("lsq problem: no rows");
        slots_.resize(static_cast<std::size_t>(threads_));
    }

    int param_count() const override { return model_.param_count(); }
    std::size_t residual_count() const override { return idx_.size(); }

    void normal_equations(const Eigen::VectorXd& theta, Eigen::MatrixXd& jtj,
                          Eigen::VectorXd& jtr, double& sse) override {
        unflatten_params(model_, theta);
        const int p = model_.param_count();
        jtj.setZero(p, p);
        jtr.setZero(p);
        sse = 0.0;
        run_waves(
            [&](detail::LsqWorkspace& w, std::size_t lo, std::size_t hi) {
                gather(w.x, lo, hi);
                jacobian_batch(model_, w.x, w.acts, w.j, w.yhat);
                w.r.resize(static_cast<Eigen::Index>(hi - lo));
                for (std::size_t k = lo; k < hi; ++k)
                    w.r[static_cast<Eigen::Index>(k - lo)] = y_[static_cast<Eigen::Index>(idx_[k])];
                w.r -= w.yhat;
                w.jt = w.j.transpose();
                w.jtj.setZero(p, p);
                w.jtj.template selfadjointView<Eigen::Lower>().rankUpdate(w.jt);
                w.jtr.noalias() = w.jt * w.r;
                w.sse = w.r.squaredNorm();
            },
            [&](detail::LsqWorkspace& w) {
                jtj += w.jtj;
                jtr += w.jtr;
                sse += w.sse;
            });
    }

    double sum_squared_residuals(const Eigen::VectorXd& theta) override {
        unflatten_params(model_, theta);
        double sse = 0.0;
        run_waves(
            [&](detail::LsqWorkspace& w, std::size_t lo, std::size_t hi) {
                gather(w.x, lo, hi);
                forward_batch(model_, w.x, w.acts, w.yhat);
                w.sse = 0.0;
                for (std::size_t k = lo; k < hi; ++k) {
                    double r = y_[static_cast<Eigen::Index>(idx_[k])] -
                               w.yhat[static_cast<Eigen::Index>(k - lo)];
                    w.sse += r * r;
                }
            },
            [&](detail::LsqWorkspace& w) { sse += w.sse; });
        return sse;
    }

private:
    void gather(Eigen::MatrixXd& xc, std::size_t lo, std::size_t hi) {
        xc.resize(static_cast<Eigen::Index>(hi - lo), x_.cols());
        for (std::size_t k = lo; k < hi; ++k)
            xc.row(static_cast<Eigen::Index>(k - lo)) = x_.row(static_cast<Eigen::Index>(idx_[k]));
    }

    template <typename Chunk, typename Merge>
    void run_waves(Chunk&& chunk_fn, Merge&& merge_fn) {
        std::size_t n = idx_.size();
        std::size_t bs = static_cast<std::size_t>(batch_);
        std::size_t n_chunks = (n + bs - 1) / bs;
        for (std::size_t wave = 0; wave < n_chunks; wave += static_cast<std::size_t>(threads_)) {
            std::size_t in_wave = std::min(static_cast<std::size_t>(threads_), n_chunks - wave);
            auto work = [&](std::size_t slot) {
                std::size_t c = wave + slot;
                chunk_fn(slots_[slot], c * bs, std::min((c + 1) * bs, n));
            };
            if (in_wave == 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t s = 0; s < in_wave; ++s) pool.emplace_back(work, s);
                for (auto& t : pool) t.join();
            }
            for (std::size_t s = 0; s < in_wave; ++s) merge_fn(slots_[s]);
        }
    }

    MlpModel model_;  // architecture + workspace for theta
    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    std::vector<std::size_t> idx_;
    int batch_;
    int threads_;
    std::vector<detail::LsqWorkspace> slots_;
};

// ---- public trainer surface ----------------------------------------------------

namespace detail {

inline void dataset_to_matrices(const MlpModel& model, const Dataset& d, Eigen::MatrixXd& x,
                                Eigen::VectorXd& y) {
    if (!model.norm.fitted()) throw std::invalid_argument("trainer: model norm stats not fitted");
    if (model.input_dim() != d.feature_dim())
        throw std::invalid_argument("trainer: model/dataset feature dim mismatch");
    const std::size_t n = d.size();
    const std::size_t fd = static_cast<std::size_t>(d.feature_dim());
    x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(fd));
    y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
        const double* row = d.features.data() + s * fd;
        for (std::size_t c = 0; c < fd; ++c)
            x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(c)) =
                (row[c] - model.norm.feature_mean[c]) / model.norm.feature_std[c];
        y[static_cast<Eigen::Index>(s)] = normalize_target(model.norm, d.targets[s]);
    }
}

}  // namespace detail

// Mean squared error in the normalized target domain.
inline double mse_loss(const MlpModel& model, const Dataset& d) {
    if (d.size() == 0) throw std::invalid_argument("mse_loss: empty dataset");
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    detail::dataset_to_matrices(model, d, x, y);
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    MlpLsqProblem problem(model, x, y, std::move(idx), 2000, 1);
    return problem.sum_squared_residuals(flatten_params(model)) / static_cast<double>(d.size());
}

struct LmStepResult {
    Eigen::VectorXd candidate;   // theta + delta (theta unchanged on failure)
    double predicted_mse = 0.0;  // linearized-model estimate at the candidate
    bool solved = false;         // false: caller should raise mu and retry
};

inline LmStepResult lm_step(const MlpModel& model, const Dataset& batch, double mu) {
    if (batch.size() == 0) throw std::invalid_argument("lm_step: empty batch");
    if (!(mu > 0.0)) throw std::invalid_argument("lm_step: mu must be > 0");
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    detail::dataset_to_matrices(model, batch, x, y);
    std::vector<std::size_t> idx(batch.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    MlpLsqProblem problem(model, x, y, std::move(idx), 2000, 1);

    const int p = model.param_count();
    Eigen::MatrixXd jtj(p, p);
    Eigen::VectorXd jtr(p);
    double sse = 0.0;
    Eigen::VectorXd theta = flatten_params(model);
    problem.normal_equations(theta, jtj, jtr, sse);
    Eigen::MatrixXd jtj_full = jtj.template selfadjointView<Eigen::Lower>();

    LmStepResult out;
    Eigen::MatrixXd a = jtj_full;
    a.diagonal().array() += mu;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        out.candidate = theta;
        out.predicted_mse = sse / static_cast<double>(batch.size());
        return out;
    }
    Eigen::VectorXd delta = llt.solve(jtr);
    if (!delta.allFinite()) {
        out.candidate = theta;
        out.predicted_mse = sse / static_cast<double>(batch.size());
        return out;
    }
    out.candidate = theta + delta;
    double pred_sse = sse - 2.0 * delta.dot(jtr) + delta.dot(jtj_full * delta);
    out.predicted_mse = std::max(0.0, pred_sse) / static_cast<double>(batch.size());
    out.solved = true;
    return out;
}

// Splits off a validation slice (seeded by the dataset seed), streams LM
// over the rest, early-stops on validation, returns best-validation
// parameters when validation is in use.
inline std::pair<MlpModel, TrainReport> train(MlpModel model, const Dataset& train_set,
                                              const LmConfig& cfg) {
    cfg.validate();
    if (train_set.size() < 2) throw std::invalid_argument("train: need at least 2 samples");

    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    detail::dataset_to_matrices(model, train_set, x, y);

    std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(train_set.seed, kStreamValSplit));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
        std::swap(order[i], order[j]);
    }
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * cfg.validation_fraction));
    if (n_val >= n) n_val = n - 1;
    std::vector<std::size_t> fit_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());

    MlpLsqProblem problem(model, x, y, std::move(fit_idx), cfg.batch_size, cfg.threads);

    std::function<double(const Eigen::VectorXd&)> val_fn;
    MlpLsqProblem val_problem(model, x, y, n_val ? std::move(val_idx) : std::vector<std::size_t>{0},
                              cfg.batch_size, cfg.threads);
    if (n_val > 0)
        val_fn = [&](const Eigen::VectorXd& theta) {
            return val_problem.sum_squared_residuals(theta) / static_cast<double>(n_val);
        };

    LmResult res = lm_minimize(problem, flatten_params(model), cfg, val_fn);
    unflatten_params(model, res.theta);
    return {std::move(model), std::move(res.report)};
}

}  // namespace d2dgain
