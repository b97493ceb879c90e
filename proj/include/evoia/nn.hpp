#pragma once
// Dense-layer forward/backward passes, activations, a named parameter store,
// and Adam with decoupled weight decay. The network topology is fixed, so
// backward passes are composed by hand and checked against finite differences.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "evoia/matrix.hpp"
#include "evoia/rng.hpp"

namespace evoia {

// ---------------------------------------------------------------------------
// activations

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }

// ln(1 + e^x), computed without overflow for large |x|
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double softplus_grad(double x) {  // logistic sigmoid
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline void relu_inplace(Matrix& m) {
    for (double& v : m.data) v = relu(v);
}

// Max-subtracted softmax; invariant under adding a constant to all scores.
inline std::vector<double> softmax(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = scores[0];
    for (double s : scores) {
        if (!std::isfinite(s)) throw std::invalid_argument("softmax: non-finite score");
        if (s > mx) mx = s;
    }
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

// Given y = softmax(z) and dL/dy, returns dL/dz.
inline std::vector<double> softmax_backward(const std::vector<double>& y,
                                            const std::vector<double>& dy) {
    if (y.size() != dy.size()) throw std::invalid_argument("softmax_backward: size mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * dy[i];
    std::vector<double> dz(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dz[i] = y[i] * (dy[i] - dot);
    return dz;
}

// ---------------------------------------------------------------------------
// dense layer

// output = input * weights + bias (bias broadcast per row); bias is 1 x cols
inline Matrix dense_forward(const Matrix& input, const Matrix& weights, const Matrix& bias) {
    if (input.cols != weights.rows) throw std::invalid_argument("dense_forward: shape mismatch");
    require_shape(bias, 1, weights.cols, "dense_forward bias");
    Matrix out = matmul(input, weights);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias.at(0, j);
    return out;
}

struct DenseGrads {
    Matrix input;    // dL/dinput
    Matrix weights;  // dL/dweights
    Matrix bias;     // dL/dbias, 1 x cols
};

inline DenseGrads dense_backward(const Matrix& upstream, const Matrix& cached_input,
                                 const Matrix& weights) {
    if (upstream.rows != cached_input.rows || upstream.cols != weights.cols ||
        cached_input.cols != weights.rows)
        throw std::invalid_argument("dense_backward: shape mismatch");
    DenseGrads g;
    g.input = matmul_a_bt(upstream, weights);        // upstream * W^T
    g.weights = matmul_at_b(cached_input, upstream); // input^T * upstream
    g.bias = Matrix(1, upstream.cols);
    for (int i = 0; i < upstream.rows; ++i)
        for (int j = 0; j < upstream.cols; ++j) g.bias.at(0, j) += upstream.at(i, j);
    return g;
}

// ---------------------------------------------------------------------------
// parameter store

// Named parameter tensors with stable iteration order plus matching gradient
// buffers. Insertion order defines serialization order.
class ParamStore {
public:
    Matrix& add(const std::string& name, Matrix init) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
        index_[name] = order_.size();
        order_.push_back(name);
        grads_.emplace_back(init.rows, init.cols);
        params_.push_back(std::move(init));
        return params_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Matrix& param(const std::string& name) { return params_[find(name)]; }
    const Matrix& param(const std::string& name) const { return params_[find(name)]; }
    Matrix& grad(const std::string& name) { return grads_[find(name)]; }
    const Matrix& grad(const std::string& name) const { return grads_[find(name)]; }

    Matrix& param_at(std::size_t i) { return params_[i]; }
    const Matrix& param_at(std::size_t i) const { return params_[i]; }
    Matrix& grad_at(std::size_t i) { return grads_[i]; }
    const Matrix& grad_at(std::size_t i) const { return grads_[i]; }

    std::size_t count() const { return order_.size(); }
    const std::vector<std::string>& names() const { return order_; }

    void zero_grads() {
        for (Matrix& g : grads_) g.fill(0.0);
    }

    void scale_grads(double s) {
        for (Matrix& g : grads_)
            for (double& v : g.data) v *= s;
    }

    std::size_t total_params() const {
        std::size_t n = 0;
        for (const Matrix& p : params_) n += p.size();
        return n;
    }

    bool operator==(const ParamStore& o) const {
        return order_ == o.order_ && [&] {
            for (std::size_t i = 0; i < params_.size(); ++i) {
                if (!params_[i].same_shape(o.params_[i]) || params_[i].data != o.params_[i].data)
                    return false;
            }
            return true;
        }();
    }

private:
    std::size_t find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
        return it->second;
    }

    std::vector<std::string> order_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Matrix> params_;
    std::vector<Matrix> grads_;
};

// He-scaled Gaussian init, std = sqrt(2 / fan_in)
inline Matrix he_init(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double sigma = std::sqrt(2.0 / static_cast<double>(rows));
    for (double& v : m.data) v = rng.normal(0.0, sigma);
    return m;
}

// ---------------------------------------------------------------------------
// Adam

// Bias-corrected Adam with decoupled weight decay: the decay shrinks the
// parameter directly before the moment update instead of entering the gradient.
class AdamState {
public:
    AdamState(const ParamStore& store, double lr, double weight_decay)
        : lr_(lr), weight_decay_(weight_decay) {
        if (!(lr > 0.0)) throw std::invalid_argument("AdamState: lr must be positive");
        if (weight_decay < 0.0) throw std::invalid_argument("AdamState: negative weight decay");
        m_.reserve(store.count());
        v_.reserve(store.count());
        for (std::size_t i = 0; i < store.count(); ++i) {
            m_.emplace_back(store.param_at(i).rows, store.param_at(i).cols);
            v_.emplace_back(store.param_at(i).rows, store.param_at(i).cols);
        }
    }

    void set_lr(double lr) {
        if (!(lr > 0.0)) throw std::invalid_argument("AdamState: lr must be positive");
        lr_ = lr;
    }
    double lr() const { return lr_; }
    long step_count() const { return step_; }

    void step(ParamStore& store) {
        if (store.count() != m_.size()) throw std::invalid_argument("AdamState: store mismatch");
        for (std::size_t i = 0; i < store.count(); ++i) {
            if (!store.grad_at(i).all_finite())
                throw std::runtime_error("AdamState: non-finite gradient in " + store.names()[i]);
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (std::size_t i = 0; i < store.count(); ++i) {
            Matrix& p = store.param_at(i);
            const Matrix& g = store.grad_at(i);
            Matrix& m = m_[i];
            Matrix& v = v_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                p.data[j] -= lr_ * weight_decay_ * p.data[j];
                m.data[j] = beta1_ * m.data[j] + (1.0 - beta1_) * g.data[j];
                v.data[j] = beta2_ * v.data[j] + (1.0 - beta2_) * g.data[j] * g.data[j];
                const double mhat = m.data[j] / bc1;
                const double vhat = v.data[j] / bc2;
                p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    double lr_;
    double weight_decay_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long step_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

}  // namespace evoia
