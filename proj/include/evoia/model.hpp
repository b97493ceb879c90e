#pragma once
// Object-induced action network over region feature vectors.
//
// A shared encoder maps every region (plus a learned projection of the global
// feature, occupying one extra slot) into the aggregated set. Each action has
// its own selector that softmax-scores the slots and pools them into a context
// vector. Action heads read [context | projected global]; explanation heads
// read the concatenation of all four action contexts. Every head emits two
// softplus evidences parameterizing a Beta over (present, absent).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoia/evidential.hpp"
#include "evoia/matrix.hpp"
#include "evoia/nn.hpp"
#include "evoia/rng.hpp"
#include "evoia/scenesim.hpp"

namespace evoia {

struct ModelConfig {
    int region_feature_dim = 16;
    std::vector<int> encoder_hidden_dims = {32, 32};
    int selector_hidden_dim = 16;
    int head_hidden_dim = 32;
    double decision_threshold = 0.5;
    double explanation_loss_weight = 1.0;  // lambda_e
    double kl_weight = 0.0;
    bool tied_selectors = false;  // route every action through selector 0

    static constexpr int n_actions = kNumActions;
    static constexpr int n_explanations = kNumExplanations;

    int encoder_out_dim() const { return encoder_hidden_dims.back(); }
    int action_head_in_dim() const { return encoder_out_dim() + region_feature_dim; }
    int expl_head_in_dim() const { return n_actions * encoder_out_dim(); }

    void validate() const {
        if (region_feature_dim < 1 || selector_hidden_dim < 1 || head_hidden_dim < 1)
            throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
        if (encoder_hidden_dims.empty())
            throw std::invalid_argument("ModelConfig: encoder needs at least one layer");
        for (int d : encoder_hidden_dims)
            if (d < 1) throw std::invalid_argument("ModelConfig: encoder dims must be >= 1");
        if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
            throw std::invalid_argument("ModelConfig: decision_threshold must lie in (0,1)");
        if (explanation_loss_weight < 0.0 || kl_weight < 0.0)
            throw std::invalid_argument("ModelConfig: loss weights must be nonnegative");
    }
};

// one binary evidential head's full output
struct EvidentialOutput {
    std::array<double, 2> evidence{};  // index 0 = present, 1 = absent
    DirichletParams alpha;
    BeliefAssignment belief;
    ProbabilityPoint expected;
    double model_uncertainty = 1.0;  // K/S
    double data_entropy = 1.0;       // bits
};

inline EvidentialOutput make_evidential_output(double e_present, double e_absent) {
    if (!std::isfinite(e_present) || !std::isfinite(e_absent))
        throw std::runtime_error("evidential head produced non-finite evidence");
    EvidentialOutput out;
    out.evidence = {e_present, e_absent};
    out.alpha = evidence_to_dirichlet(EvidenceVector(e_present, e_absent));
    out.belief = dirichlet_to_belief(out.alpha);
    out.expected = expected_probability(out.alpha);
    out.model_uncertainty = model_uncertainty(out.alpha);
    out.data_entropy = data_uncertainty(out.alpha);
    return out;
}

struct ScenePrediction {
    std::array<EvidentialOutput, kNumActions> actions;
    std::array<EvidentialOutput, kNumExplanations> explanations;
    // per action: softmax weights over the aggregated slots
    // (regions first, the projected-global slot last)
    std::array<std::vector<double>, kNumActions> selector_weights;
};

// ---------------------------------------------------------------------------
// parameters

namespace names {
inline std::string encoder_w(int layer) { return "encoder.l" + std::to_string(layer) + ".w"; }
inline std::string encoder_b(int layer) { return "encoder.l" + std::to_string(layer) + ".b"; }
inline const char* global_proj_w = "global_proj.w";
inline const char* global_proj_b = "global_proj.b";
inline std::string selector(int a, int layer, char wb) {
    return "selector." + std::to_string(a) + ".l" + std::to_string(layer) + "." + wb;
}
inline std::string action_head(int a, int layer, char wb) {
    return "action_head." + std::to_string(a) + ".l" + std::to_string(layer) + "." + wb;
}
inline std::string expl_head(int j, int layer, char wb) {
    return "expl_head." + std::to_string(j) + ".l" + std::to_string(layer) + "." + wb;
}
}  // namespace names

// He-scaled Gaussian weights with zero biases; the output layer of every
// evidential head starts at zero so an untrained head emits softplus(0) = ln 2
// evidence for both classes.
inline ParamStore init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore store;
    std::uint64_t tensor_idx = 0;
    auto he = [&](int rows, int cols) {
        Rng rng(seed, substream(0x1217, tensor_idx++));
        return he_init(rows, cols, rng);
    };

    int in_dim = cfg.region_feature_dim;
    for (std::size_t l = 0; l < cfg.encoder_hidden_dims.size(); ++l) {
        const int out_dim = cfg.encoder_hidden_dims[l];
        store.add(names::encoder_w(static_cast<int>(l)), he(in_dim, out_dim));
        store.add(names::encoder_b(static_cast<int>(l)), Matrix(1, out_dim));
        in_dim = out_dim;
    }
    store.add(names::global_proj_w, he(2 * cfg.region_feature_dim, cfg.region_feature_dim));
    store.add(names::global_proj_b, Matrix(1, cfg.region_feature_dim));

    const int enc = cfg.encoder_out_dim();
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        store.add(names::selector(a, 0, 'w'), he(enc, cfg.selector_hidden_dim));
        store.add(names::selector(a, 0, 'b'), Matrix(1, cfg.selector_hidden_dim));
        store.add(names::selector(a, 1, 'w'), he(cfg.selector_hidden_dim, 1));
        store.add(names::selector(a, 1, 'b'), Matrix(1, 1));
    }
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        store.add(names::action_head(a, 0, 'w'), he(cfg.action_head_in_dim(), cfg.head_hidden_dim));
        store.add(names::action_head(a, 0, 'b'), Matrix(1, cfg.head_hidden_dim));
        store.add(names::action_head(a, 1, 'w'), Matrix(cfg.head_hidden_dim, 2));
        store.add(names::action_head(a, 1, 'b'), Matrix(1, 2));
    }
    for (int j = 0; j < ModelConfig::n_explanations; ++j) {
        store.add(names::expl_head(j, 0, 'w'), he(cfg.expl_head_in_dim(), cfg.head_hidden_dim));
        store.add(names::expl_head(j, 0, 'b'), Matrix(1, cfg.head_hidden_dim));
        store.add(names::expl_head(j, 1, 'w'), Matrix(cfg.head_hidden_dim, 2));
        store.add(names::expl_head(j, 1, 'b'), Matrix(1, 2));
    }
    return store;
}

// ---------------------------------------------------------------------------
// forward

// Cached intermediates for one sample, consumed by backward().
struct ForwardTrace {
    int n_slots = 0;
    Matrix global_in;   // 1 x 2D
    Matrix g_proj;      // 1 x D
    Matrix slots;       // n_slots x D, regions then the projected-global slot
    std::vector<Matrix> enc_pre;  // per encoder layer, n_slots x dims[l]
    std::vector<Matrix> enc_post; // relu(enc_pre[l])
    struct SelectorTrace {
        Matrix pre;                // n_slots x selector_hidden
        Matrix post;               // relu
        std::vector<double> scores;
        std::vector<double> weights;
        Matrix context;            // 1 x E
    };
    std::array<SelectorTrace, kNumActions> selectors;
    struct HeadTrace {
        Matrix input;  // 1 x in_dim
        Matrix pre1;   // 1 x hidden
        Matrix post1;
        Matrix pre2;   // 1 x 2 (pre-softplus)
    };
    std::array<HeadTrace, kNumActions> action_heads;
    std::array<HeadTrace, kNumExplanations> expl_heads;
};

namespace detail {
inline int selector_param_index(const ModelConfig& cfg, int action) {
    return cfg.tied_selectors ? 0 : action;
}

inline void run_head(const ParamStore& params, const std::string& w0, const std::string& b0,
                     const std::string& w1, const std::string& b1, const Matrix& input,
                     ForwardTrace::HeadTrace& trace, EvidentialOutput& out) {
    trace.input = input;
    trace.pre1 = dense_forward(input, params.param(w0), params.param(b0));
    trace.post1 = trace.pre1;
    relu_inplace(trace.post1);
    trace.pre2 = dense_forward(trace.post1, params.param(w1), params.param(b1));
    out = make_evidential_output(softplus(trace.pre2.at(0, 0)), softplus(trace.pre2.at(0, 1)));
}
}  // namespace detail

inline ScenePrediction forward(const ParamStore& params, const SceneSample& sample,
                               const ModelConfig& cfg, ForwardTrace* trace_out = nullptr) {
    cfg.validate();
    if (sample.regions.empty()) throw std::invalid_argument("forward: sample has no regions");
    if (sample.region_dim() != cfg.region_feature_dim)
        throw std::invalid_argument("forward: sample region dim " + std::to_string(sample.region_dim()) +
                                    " does not match model dim " +
                                    std::to_string(cfg.region_feature_dim));
    if (static_cast<int>(sample.global_features.size()) != 2 * cfg.region_feature_dim)
        throw std::invalid_argument("forward: global feature dim mismatch");
    for (const auto& r : sample.regions)
        for (double v : r)
            if (!std::isfinite(v)) throw std::runtime_error("forward: non-finite region feature");
    for (double v : sample.global_features)
        if (!std::isfinite(v)) throw std::runtime_error("forward: non-finite global feature");

    ForwardTrace local;
    ForwardTrace& t = trace_out ? *trace_out : local;
    t = ForwardTrace{};

    const int n_regions = static_cast<int>(sample.regions.size());
    t.n_slots = n_regions + 1;
    const int dim = cfg.region_feature_dim;

    t.global_in = Matrix(1, 2 * dim);
    for (int j = 0; j < 2 * dim; ++j) t.global_in.at(0, j) = sample.global_features[j];
    t.g_proj = dense_forward(t.global_in, params.param(names::global_proj_w),
                             params.param(names::global_proj_b));

    t.slots = Matrix(t.n_slots, dim);
    for (int i = 0; i < n_regions; ++i)
        for (int j = 0; j < dim; ++j) t.slots.at(i, j) = sample.regions[i][j];
    for (int j = 0; j < dim; ++j) t.slots.at(n_regions, j) = t.g_proj.at(0, j);

    // shared encoder over all slots
    const int n_layers = static_cast<int>(cfg.encoder_hidden_dims.size());
    t.enc_pre.resize(n_layers);
    t.enc_post.resize(n_layers);
    const Matrix* cur = &t.slots;
    for (int l = 0; l < n_layers; ++l) {
        t.enc_pre[l] = dense_forward(*cur, params.param(names::encoder_w(l)),
                                     params.param(names::encoder_b(l)));
        t.enc_post[l] = t.enc_pre[l];
        relu_inplace(t.enc_post[l]);
        cur = &t.enc_post[l];
    }
    const Matrix& encoded = *cur;  // n_slots x E
    const int enc_dim = cfg.encoder_out_dim();

    ScenePrediction pred;

    // per-action selectors and contexts
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        const int sp = detail::selector_param_index(cfg, a);
        auto& st = t.selectors[a];
        st.pre = dense_forward(encoded, params.param(names::selector(sp, 0, 'w')),
                               params.param(names::selector(sp, 0, 'b')));
        st.post = st.pre;
        relu_inplace(st.post);
        const Matrix score_col = dense_forward(st.post, params.param(names::selector(sp, 1, 'w')),
                                               params.param(names::selector(sp, 1, 'b')));
        st.scores.resize(t.n_slots);
        for (int i = 0; i < t.n_slots; ++i) st.scores[i] = score_col.at(i, 0);
        st.weights = softmax(st.scores);
        st.context = Matrix(1, enc_dim);
        for (int i = 0; i < t.n_slots; ++i)
            for (int j = 0; j < enc_dim; ++j) st.context.at(0, j) += st.weights[i] * encoded.at(i, j);
        pred.selector_weights[a] = st.weights;
    }

    // action heads: [context | projected global]
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        Matrix input(1, enc_dim + dim);
        for (int j = 0; j < enc_dim; ++j) input.at(0, j) = t.selectors[a].context.at(0, j);
        for (int j = 0; j < dim; ++j) input.at(0, enc_dim + j) = t.g_proj.at(0, j);
        detail::run_head(params, names::action_head(a, 0, 'w'), names::action_head(a, 0, 'b'),
                         names::action_head(a, 1, 'w'), names::action_head(a, 1, 'b'), input,
                         t.action_heads[a], pred.actions[a]);
    }

    // explanation heads: concatenation of the four action contexts
    Matrix expl_in(1, ModelConfig::n_actions * enc_dim);
    for (int a = 0; a < ModelConfig::n_actions; ++a)
        for (int j = 0; j < enc_dim; ++j)
            expl_in.at(0, a * enc_dim + j) = t.selectors[a].context.at(0, j);
    for (int j = 0; j < ModelConfig::n_explanations; ++j) {
        detail::run_head(params, names::expl_head(j, 0, 'w'), names::expl_head(j, 0, 'b'),
                         names::expl_head(j, 1, 'w'), names::expl_head(j, 1, 'b'), expl_in,
                         t.expl_heads[j], pred.explanations[j]);
    }
    return pred;
}

// ---------------------------------------------------------------------------
// loss and decisions

// label bit -> one-hot over (present, absent)
inline std::vector<double> bit_to_one_hot(int bit) {
    if (bit != 0 && bit != 1) throw std::invalid_argument("label bits must be 0 or 1");
    return bit == 1 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
}

// alpha with the evidence for the labeled class removed; argument of the
// optional KL regularizer
inline DirichletParams misleading_alpha(const DirichletParams& alpha, const std::vector<double>& y) {
    std::vector<double> tilde(alpha.alpha.size());
    for (std::size_t i = 0; i < tilde.size(); ++i)
        tilde[i] = y[i] != 0.0 ? 1.0 : alpha.alpha[i];
    return DirichletParams(std::move(tilde));
}

inline double total_loss(const ScenePrediction& pred, const SceneSample& sample,
                         const ModelConfig& cfg, double sample_weight) {
    double loss = 0.0;
    auto head_term = [&](const EvidentialOutput& out, int bit, double scale) {
        const std::vector<double> y = bit_to_one_hot(bit);
        loss += scale * edl_loss(out.alpha, y);
        if (cfg.kl_weight > 0.0) loss += cfg.kl_weight * kl_to_uniform(misleading_alpha(out.alpha, y));
    };
    for (int a = 0; a < ModelConfig::n_actions; ++a) head_term(pred.actions[a], sample.actions[a], 1.0);
    for (int j = 0; j < ModelConfig::n_explanations; ++j)
        head_term(pred.explanations[j], sample.explanations[j], cfg.explanation_loss_weight);
    return sample_weight * loss;
}

struct LabelDecision {
    std::array<int, kNumActions> actions{};
    std::array<int, kNumExplanations> explanations{};
};

// bit = 1 iff expected probability of "present" clears the threshold
// (ties count as present)
inline LabelDecision predict_labels(const ScenePrediction& pred, const ModelConfig& cfg) {
    LabelDecision d;
    for (int a = 0; a < ModelConfig::n_actions; ++a)
        d.actions[a] = pred.actions[a].expected.p[0] >= cfg.decision_threshold ? 1 : 0;
    for (int j = 0; j < ModelConfig::n_explanations; ++j)
        d.explanations[j] = pred.explanations[j].expected.p[0] >= cfg.decision_threshold ? 1 : 0;
    return d;
}

// ---------------------------------------------------------------------------
// backward

namespace detail {
// dL/dalpha for one head, including the optional KL regularizer term
inline std::vector<double> head_alpha_grad(const EvidentialOutput& out, int bit, double edl_scale,
                                           const ModelConfig& cfg) {
    const std::vector<double> y = bit_to_one_hot(bit);
    std::vector<double> grad = edl_loss_grad(out.alpha, y);
    for (double& g : grad) g *= edl_scale;
    if (cfg.kl_weight > 0.0) {
        const DirichletParams tilde = misleading_alpha(out.alpha, y);
        const std::vector<double> kg = kl_to_uniform_grad(tilde);
        for (std::size_t k = 0; k < grad.size(); ++k)
            if (y[k] == 0.0) grad[k] += cfg.kl_weight * kg[k];
    }
    return grad;
}

// backward through one two-layer head; returns dL/dinput (1 x in_dim)
inline Matrix head_backward(ParamStore& params, const std::string& w0, const std::string& b0,
                            const std::string& w1, const std::string& b1,
                            const ForwardTrace::HeadTrace& trace, const std::vector<double>& dalpha) {
    Matrix dz(1, 2);
    dz.at(0, 0) = dalpha[0] * softplus_grad(trace.pre2.at(0, 0));
    dz.at(0, 1) = dalpha[1] * softplus_grad(trace.pre2.at(0, 1));
    DenseGrads g1 = dense_backward(dz, trace.post1, params.param(w1));
    axpy(params.grad(w1), 1.0, g1.weights);
    axpy(params.grad(b1), 1.0, g1.bias);
    for (int j = 0; j < g1.input.cols; ++j) g1.input.at(0, j) *= relu_grad(trace.pre1.at(0, j));
    DenseGrads g0 = dense_backward(g1.input, trace.input, params.param(w0));
    axpy(params.grad(w0), 1.0, g0.weights);
    axpy(params.grad(b0), 1.0, g0.bias);
    return g0.input;
}
}  // namespace detail

// Accumulates gradients of total_loss into the store's gradient buffers.
// forward() must have been run with a trace on the same sample and parameters.
inline void backward(ParamStore& params, const SceneSample& sample, const ScenePrediction& pred,
                     const ForwardTrace& t, const ModelConfig& cfg, double sample_weight) {
    cfg.validate();
    const int enc_dim = cfg.encoder_out_dim();
    const int dim = cfg.region_feature_dim;
    const int n_layers = static_cast<int>(cfg.encoder_hidden_dims.size());
    const Matrix& encoded = t.enc_post[n_layers - 1];

    std::array<Matrix, kNumActions> dcontext;
    for (auto& m : dcontext) m = Matrix(1, enc_dim);
    Matrix dgproj(1, dim);

    // action heads
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        std::vector<double> dalpha =
            detail::head_alpha_grad(pred.actions[a], sample.actions[a], 1.0, cfg);
        for (double& g : dalpha) g *= sample_weight;
        Matrix dinput = detail::head_backward(
            params, names::action_head(a, 0, 'w'), names::action_head(a, 0, 'b'),
            names::action_head(a, 1, 'w'), names::action_head(a, 1, 'b'), t.action_heads[a], dalpha);
        for (int j = 0; j < enc_dim; ++j) dcontext[a].at(0, j) += dinput.at(0, j);
        for (int j = 0; j < dim; ++j) dgproj.at(0, j) += dinput.at(0, enc_dim + j);
    }

    // explanation heads
    for (int j = 0; j < ModelConfig::n_explanations; ++j) {
        std::vector<double> dalpha = detail::head_alpha_grad(
            pred.explanations[j], sample.explanations[j], cfg.explanation_loss_weight, cfg);
        for (double& g : dalpha) g *= sample_weight;
        Matrix dinput = detail::head_backward(
            params, names::expl_head(j, 0, 'w'), names::expl_head(j, 0, 'b'),
            names::expl_head(j, 1, 'w'), names::expl_head(j, 1, 'b'), t.expl_heads[j], dalpha);
        for (int a = 0; a < ModelConfig::n_actions; ++a)
            for (int k = 0; k < enc_dim; ++k) dcontext[a].at(0, k) += dinput.at(0, a * enc_dim + k);
    }

    // selectors and pooled contexts
    Matrix dencoded(t.n_slots, enc_dim);
    for (int a = 0; a < ModelConfig::n_actions; ++a) {
        const int sp = detail::selector_param_index(cfg, a);
        const auto& st = t.selectors[a];

        // context = sum_i w_i * encoded_i
        std::vector<double> dweights(t.n_slots, 0.0);
        for (int i = 0; i < t.n_slots; ++i) {
            double acc = 0.0;
            for (int j = 0; j < enc_dim; ++j) {
                acc += dcontext[a].at(0, j) * encoded.at(i, j);
                dencoded.at(i, j) += st.weights[i] * dcontext[a].at(0, j);
            }
            dweights[i] = acc;
        }
        const std::vector<double> dscores = softmax_backward(st.weights, dweights);

        Matrix dscore_col(t.n_slots, 1);
        for (int i = 0; i < t.n_slots; ++i) dscore_col.at(i, 0) = dscores[i];
        DenseGrads g1 = dense_backward(dscore_col, st.post, params.param(names::selector(sp, 1, 'w')));
        axpy(params.grad(names::selector(sp, 1, 'w')), 1.0, g1.weights);
        axpy(params.grad(names::selector(sp, 1, 'b')), 1.0, g1.bias);
        for (int i = 0; i < t.n_slots; ++i)
            for (int j = 0; j < g1.input.cols; ++j)
                g1.input.at(i, j) *= relu_grad(st.pre.at(i, j));
        DenseGrads g0 = dense_backward(g1.input, encoded, params.param(names::selector(sp, 0, 'w')));
        axpy(params.grad(names::selector(sp, 0, 'w')), 1.0, g0.weights);
        axpy(params.grad(names::selector(sp, 0, 'b')), 1.0, g0.bias);
        axpy(dencoded, 1.0, g0.input);
    }

    // shared encoder
    Matrix dcur = dencoded;
    for (int l = n_layers - 1; l >= 0; --l) {
        for (int i = 0; i < dcur.rows; ++i)
            for (int j = 0; j < dcur.cols; ++j) dcur.at(i, j) *= relu_grad(t.enc_pre[l].at(i, j));
        const Matrix& layer_input = l == 0 ? t.slots : t.enc_post[l - 1];
        DenseGrads g = dense_backward(dcur, layer_input, params.param(names::encoder_w(l)));
        axpy(params.grad(names::encoder_w(l)), 1.0, g.weights);
        axpy(params.grad(names::encoder_b(l)), 1.0, g.bias);
        dcur = std::move(g.input);
    }

    // the projected-global slot feeds both the encoder and the action heads
    for (int j = 0; j < dim; ++j) dgproj.at(0, j) += dcur.at(t.n_slots - 1, j);
    DenseGrads gp = dense_backward(dgproj, t.global_in, params.param(names::global_proj_w));
    axpy(params.grad(names::global_proj_w), 1.0, gp.weights);
    axpy(params.grad(names::global_proj_b), 1.0, gp.bias);

    for (std::size_t i = 0; i < params.count(); ++i) {
        if (!params.grad_at(i).all_finite())
            throw std::runtime_error("backward: non-finite gradient in " + params.names()[i]);
    }
}

// ---------------------------------------------------------------------------
// checkpoint container: human-readable manifest followed by raw weights

constexpr const char* kCheckpointMagic = "EVOIA-CKPT-1";

struct Checkpoint {
    ParamStore params;
    ModelConfig config;
    std::string phase;  // provenance: "init", "phase1", "phase2", ...
    std::uint64_t seed = 0;
};

namespace detail {
inline nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"region_feature_dim", c.region_feature_dim},
                          {"encoder_hidden_dims", c.encoder_hidden_dims},
                          {"selector_hidden_dim", c.selector_hidden_dim},
                          {"head_hidden_dim", c.head_hidden_dim},
                          {"decision_threshold", c.decision_threshold},
                          {"explanation_loss_weight", c.explanation_loss_weight},
                          {"kl_weight", c.kl_weight},
                          {"tied_selectors", c.tied_selectors}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.region_feature_dim = j.at("region_feature_dim").get<int>();
    c.encoder_hidden_dims = j.at("encoder_hidden_dims").get<std::vector<int>>();
    c.selector_hidden_dim = j.at("selector_hidden_dim").get<int>();
    c.head_hidden_dim = j.at("head_hidden_dim").get<int>();
    c.decision_threshold = j.at("decision_threshold").get<double>();
    c.explanation_loss_weight = j.at("explanation_loss_weight").get<double>();
    c.kl_weight = j.at("kl_weight").get<double>();
    c.tied_selectors = j.at("tied_selectors").get<bool>();
    c.validate();
    return c;
}

inline void write_doubles_le(std::ofstream& out, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        if constexpr (std::endian::native == std::endian::big) {
            std::uint64_t swapped = 0;
            for (int i = 0; i < 8; ++i) swapped |= ((bits >> (8 * i)) & 0xff) << (8 * (7 - i));
            bits = swapped;
        }
        char buf[8];
        std::memcpy(buf, &bits, 8);
        out.write(buf, 8);
    }
}

inline void read_doubles_le(std::ifstream& in, std::vector<double>& v) {
    for (double& d : v) {
        char buf[8];
        if (!in.read(buf, 8)) throw std::runtime_error("checkpoint: truncated weight blob");
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        if constexpr (std::endian::native == std::endian::big) {
            std::uint64_t swapped = 0;
            for (int i = 0; i < 8; ++i) swapped |= ((bits >> (8 * i)) & 0xff) << (8 * (7 - i));
            bits = swapped;
        }
        std::memcpy(&d, &bits, 8);
    }
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const ModelConfig& cfg, const std::string& phase, std::uint64_t seed) {
    nlohmann::json manifest;
    manifest["config"] = detail::config_to_json(cfg);
    manifest["phase"] = phase;
    manifest["seed"] = seed;
    nlohmann::json plist = nlohmann::json::array();
    for (std::size_t i = 0; i < params.count(); ++i) {
        plist.push_back({{"name", params.names()[i]},
                         {"rows", params.param_at(i).rows},
                         {"cols", params.param_at(i).cols}});
    }
    manifest["params"] = plist;
    const std::string mtext = manifest.dump(2);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << kCheckpointMagic << '\n' << mtext.size() << '\n' << mtext << '\n';
    for (std::size_t i = 0; i < params.count(); ++i)
        detail::write_doubles_le(out, params.param_at(i).data);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string magic;
    if (!std::getline(in, magic) || magic != kCheckpointMagic)
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
    std::string len_line;
    if (!std::getline(in, len_line)) throw std::runtime_error("load_checkpoint: truncated header");
    std::size_t mlen = 0;
    try {
        mlen = static_cast<std::size_t>(std::stoull(len_line));
    } catch (const std::exception&) {
        throw std::runtime_error("load_checkpoint: bad manifest length");
    }
    std::string mtext(mlen, '\0');
    if (!in.read(mtext.data(), static_cast<std::streamsize>(mlen)))
        throw std::runtime_error("load_checkpoint: truncated manifest");
    in.get();  // newline after manifest

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("load_checkpoint: bad manifest: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.config = detail::config_from_json(manifest.at("config"));
        ckpt.phase = manifest.at("phase").get<std::string>();
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();
        for (const auto& p : manifest.at("params")) {
            Matrix m(p.at("rows").get<int>(), p.at("cols").get<int>());
            detail::read_doubles_le(in, m.data);
            ckpt.params.add(p.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("load_checkpoint: manifest field error: ") + e.what());
    }
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("load_checkpoint: trailing bytes after weight blob");
    return ckpt;
}

}  // namespace evoia
