#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dgain/dataset.hpp"
#include "d2dgain/rng.hpp"

namespace d2dgain {

struct LayerSpec {
    std::vector<int> sizes;  // [2L, hidden..., 1]

    static LayerSpec standard(int n_bs) { return {{2 * n_bs, 20, 18, 15, 12, 8, 1}}; }

    int layer_count() const { return static_cast<int>(sizes.size()) - 1; }

    int param_count() const {
        int p = 0;
        for (std::size_t h = 0; h + 1 < sizes.size(); ++h)
            p += sizes[h] * sizes[h + 1] + sizes[h + 1];
        return p;
    }

    void validate() const {
        if (sizes.size() < 2) throw std::invalid_argument("layer spec: need at least input and output");
        for (int s : sizes)
            if (s < 1) throw std::invalid_argument("layer spec: sizes must be >= 1");
        if (sizes.back() != 1) throw std::invalid_argument("layer spec: output size must be 1");
    }
};

// Sigmoid hidden layers, linear scalar output. Inputs/outputs live in the
// z-scored space of `norm`; predict_gain() is the only denormalizing entry.
struct MlpModel {
    LayerSpec spec;
    std::vector<Eigen::MatrixXd> weights;  // per layer, out x in
    std::vector<Eigen::VectorXd> biases;   // per layer, out
    NormStats norm;

    int input_dim() const { return spec.sizes.front(); }
    int param_count() const { return spec.param_count(); }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Glorot uniform, biases zero. Draw order: layer by layer, weights in
// row-major (out, in) order; pinned so a seed defines the model exactly.
inline MlpModel init_mlp(const LayerSpec& spec, std::uint64_t seed) {
    spec.validate();
    MlpModel m;
    m.spec = spec;
    Rng rng(derive_seed(seed, kStreamInit));
    for (int h = 0; h < spec.layer_count(); ++h) {
        int in = spec.sizes[static_cast<std::size_t>(h)];
        int out = spec.sizes[static_cast<std::size_t>(h) + 1];
        Eigen::MatrixXd w(out, in);
        double r = std::sqrt(6.0 / (in + out));
        for (int o = 0; o < out; ++o)
            for (int i = 0; i < in; ++i) w(o, i) = rng.uniform(-r, r);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return m;
}

// ---- flattened parameter vector ---------------------------------------------
// Order: for each layer h: weights row-major (o outer, i inner), then
// biases. LM Jacobian columns are built against exactly this order.

inline int layer_param_offset(const LayerSpec& spec, int layer) {
    int off = 0;
    for (int h = 0; h < layer; ++h)
        off += spec.sizes[static_cast<std::size_t>(h)] * spec.sizes[static_cast<std::size_t>(h) + 1] +
               spec.sizes[static_cast<std::size_t>(h) + 1];
    return off;
}

inline Eigen::VectorXd flatten_params(const MlpModel& m) {
    Eigen::VectorXd theta(m.param_count());
    int k = 0;
    for (int h = 0; h < m.spec.layer_count(); ++h) {
        const auto& w = m.weights[static_cast<std::size_t>(h)];
        for (int o = 0; o < w.rows(); ++o)
            for (int i = 0; i < w.cols(); ++i) theta[k++] = w(o, i);
        const auto& b = m.biases[static_cast<std::size_t>(h)];
        for (int o = 0; o < b.size(); ++o) theta[k++] = b[o];
    }
    return theta;
}

inline void unflatten_params(MlpModel& m, const Eigen::VectorXd& theta) {
    if (theta.size() != m.param_count())
        throw std::invalid_argument("unflatten_params: length mismatch");
    int k = 0;
    for (int h = 0; h < m.spec.layer_count(); ++h) {
        auto& w = m.weights[static_cast<std::size_t>(h)];
        for (int o = 0; o < w.rows(); ++o)
            for (int i = 0; i < w.cols(); ++i) w(o, i) = theta[k++];
        auto& b = m.biases[static_cast<std::size_t>(h)];
        for (int o = 0; o < b.size(); ++o) b[o] = theta[k++];
    }
}

// ---- single-sample paths ----------------------------------------------------

inline double forward(const MlpModel& m, std::span<const double> x_norm) {
    if (static_cast<int>(x_norm.size()) != m.input_dim())
        throw std::invalid_argument("forward: feature length mismatch");
    Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x_norm.data(), m.input_dim());
    int last = m.spec.layer_count() - 1;
    for (int h = 0; h <= last; ++h) {
        Eigen::VectorXd z = m.weights[static_cast<std::size_t>(h)] * a + m.biases[static_cast<std::size_t>(h)];
        if (h < last)
            a = z.unaryExpr([](double v) { return sigmoid(v); });
        else
            a = z;
    }
    return a[0];
}

// Output and d(output)/d(theta) in ParamVector order. Kept scalar-at-a-time
// on purpose: it cross-checks the vectorized batch Jacobian in tests.
inline double forward_with_gradient(const MlpModel& m, std::span<const double> x_norm,
                                    Eigen::VectorXd& grad) {
    if (static_cast<int>(x_norm.size()) != m.input_dim())
        throw std::invalid_argument("forward_with_gradient: feature length mismatch");
    int layers = m.spec.layer_count();
    std::vector<Eigen::VectorXd> acts(static_cast<std::size_t>(layers) + 1);
    acts[0] = Eigen::Map<const Eigen::VectorXd>(x_norm.data(), m.input_dim());
    for (int h = 0; h < layers; ++h) {
        Eigen::VectorXd z = m.weights[static_cast<std::size_t>(h)] * acts[static_cast<std::size_t>(h)] +
                            m.biases[static_cast<std::size_t>(h)];
        acts[static_cast<std::size_t>(h) + 1] =
            h < layers - 1 ? Eigen::VectorXd(z.unaryExpr([](double v) { return sigmoid(v); }))
                           : z;
    }
    double y = acts[static_cast<std::size_t>(layers)][0];

    grad.resize(m.param_count());
    // delta_h = d y / d z_h; output layer is linear so delta_last = 1
    Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
    for (int h = layers - 1; h >= 0; --h) {
        const auto& a_in = acts[static_cast<std::size_t>(h)];
        int off = layer_param_offset(m.spec, h);
        int in = static_cast<int>(a_in.size());
        int out = static_cast<int>(delta.size());
        for (int o = 0; o < out; ++o)
            for (int i = 0; i < in; ++i) grad[off + o * in + i] = delta[o] * a_in[i];
        for (int o = 0; o < out; ++o) grad[off + out * in + o] = delta[o];
        if (h > 0) {
            Eigen::VectorXd up = m.weights[static_cast<std::size_t>(h)].transpose() * delta;
            const auto& a_h = acts[static_cast<std::size_t>(h)];
            delta = up.cwiseProduct(a_h.cwiseProduct(Eigen::VectorXd::Ones(a_h.size()) - a_h));
        }
    }
    return y;
}

struct Prediction {
    double pathloss_db = 0.0;
    double gain = 0.0;
};

inline Prediction predict_gain(const MlpModel& m, std::span<const double> cellular_pathloss_db) {
    if (static_cast<int>(cellular_pathloss_db.size()) != m.input_dim())
        throw std::invalid_argument("predict_gain: feature length mismatch");
    if (!m.norm.fitted()) throw std::invalid_argument("predict_gain: model has no normalization stats");
    std::vector<double> xn(cellular_pathloss_db.size());
    normalize_features(m.norm, cellular_pathloss_db, xn.data());
    double y = forward(m, xn);
    double pl = denormalize_target(m.norm, y);
    return {pl, gain_from_pathloss(pl)};
}

// ---- batch paths (row-per-sample matrices, used by the trainer) -------------

// activations[h]: (c x sizes[h]); fills yhat with the linear outputs
inline void forward_batch(const MlpModel& m, const Eigen::MatrixXd& x,
                          std::vector<Eigen::MatrixXd>& activations, Eigen::VectorXd& yhat) {
    int layers = m.spec.layer_count();
    activations.resize(static_cast<std::size_t>(layers) + 1);
    activations[0] = x;
    for (int h = 0; h < layers; ++h) {
        Eigen::MatrixXd z = activations[static_cast<std::size_t>(h)] *
                                m.weights[static_cast<std::size_t>(h)].transpose();
        z.rowwise() += m.biases[static_cast<std::size_t>(h)].transpose();
        if (h < layers - 1)
            activations[static_cast<std::size_t>(h) + 1] =
                z.unaryExpr([](double v) { return sigmoid(v); });
        else
            activations[static_cast<std::size_t>(h) + 1] = z;
    }
    yhat = activations[static_cast<std::size_t>(layers)].col(0);
}

// J: (c x P), column k = d yhat / d theta_k, matching the flatten order.
inline void jacobian_batch(const MlpModel& m, const Eigen::MatrixXd& x,
                           std::vector<Eigen::MatrixXd>& activations,
                           Eigen::MatrixXd& j, Eigen::VectorXd& yhat) {
    forward_batch(m, x, activations, yhat);
    int layers = m.spec.layer_count();
    Eigen::Index c = x.rows();
    j.resize(c, m.param_count());
    Eigen::MatrixXd delta = Eigen::MatrixXd::Ones(c, 1);
    for (int h = layers - 1; h >= 0; --h) {
        const Eigen::MatrixXd& a_in = activations[static_cast<std::size_t>(h)];
        int off = layer_param_offset(m.spec, h);
        int in = static_cast<int>(a_in.cols());
        int out = static_cast<int>(delta.cols());
        for (int o = 0; o < out; ++o) {
            j.middleCols(off + o * in, in) = a_in.array().colwise() * delta.col(o).array();
            j.col(off + out * in + o) = delta.col(o);
        }
        if (h > 0) {
            const Eigen::MatrixXd& a_h = activations[static_cast<std::size_t>(h)];
            Eigen::MatrixXd up = delta * m.weights[static_cast<std::size_t>(h)];
            delta = up.array() * (a_h.array() * (1.0 - a_h.array()));
        }
    }
}

// ---- model file --------------------------------------------------------------
// Layout: magic "D2DMLP01", u32 n_sizes, i32 sizes[], norm block
// (u32 dim, f64 means, f64 stds, f64 t_mean, f64 t_std), u64 P,
// f64 params[P] in ParamVector order. Raw doubles: reload is bit-exact.

inline void save_model(const MlpModel& m, std::ostream& out) {
    out.write("D2DMLP01", 8);
    detail::write_pod(out, static_cast<std::uint32_t>(m.spec.sizes.size()));
    for (int s : m.spec.sizes) detail::write_pod(out, static_cast<std::int32_t>(s));
    detail::write_pod(out, static_cast<std::uint32_t>(m.norm.feature_mean.size()));
    for (double v : m.norm.feature_mean) detail::write_pod(out, v);
    for (double v : m.norm.feature_std) detail::write_pod(out, v);
    detail::write_pod(out, m.norm.target_mean);
    detail::write_pod(out, m.norm.target_std);
    Eigen::VectorXd theta = flatten_params(m);
    detail::write_pod(out, static_cast<std::uint64_t>(theta.size()));
    out.write(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::streamsize>(theta.size() * static_cast<std::streamsize>(sizeof(double))));
    if (!out) throw std::runtime_error("save_model: write failed");
}

inline MlpModel load_model(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "D2DMLP01", 8) != 0)
        throw std::runtime_error("load_model: bad magic (not a model file)");
    std::uint32_t n_sizes;
    detail::read_pod(in, n_sizes);
    LayerSpec spec;
    for (std::uint32_t i = 0; i < n_sizes; ++i) {
        std::int32_t s;
        detail::read_pod(in, s);
        spec.sizes.push_back(s);
    }
    spec.validate();
    std::uint32_t dim;
    detail::read_pod(in, dim);
    NormStats st;
    st.feature_mean.resize(dim);
    st.feature_std.resize(dim);
    for (auto& v : st.feature_mean) detail::read_pod(in, v);
    for (auto& v : st.feature_std) detail::read_pod(in, v);
    detail::read_pod(in, st.target_mean);
    detail::read_pod(in, st.target_std);
    MlpModel m = init_mlp(spec, 0);
    m.norm = st;
    std::uint64_t p;
    detail::read_pod(in, p);
    if (p != static_cast<std::uint64_t>(m.param_count()))
        throw std::runtime_error("load_model: parameter count disagrees with layer spec");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(p));
    in.read(reinterpret_cast<char*>(theta.data()),
            static_cast<std::streamsize>(p * sizeof(double)));
    if (!in) throw std::runtime_error("load_model: truncated file");
    unflatten_params(m, theta);
    return m;
}

}  // namespace d2dgain
