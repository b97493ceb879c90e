#pragma once
// Two-phase training pipeline.
//
// Phase 1: conventional training of the evidential model with stochastic
// feature-space augmentation (each family applied with probability 0.5 per
// sample per epoch) and patience-based early stopping on validation macro-F1.
//
// Phase 2: fine-tunes the Phase-1 best model at a much lower learning rate,
// re-deriving the uncertainty report, threshold, sample weights, and
// most-uncertain augmentation pairs every epoch so the guidance tracks the
// changing model.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoia/keyvalue.hpp"
#include "evoia/metrics.hpp"
#include "evoia/model.hpp"
#include "evoia/nn.hpp"
#include "evoia/rng.hpp"
#include "evoia/scenesim.hpp"

namespace evoia {

// ---------------------------------------------------------------------------
// configuration

struct StrategyFlags {
    bool sp = false;  // separate per-action selectors
    bool rw = false;  // uncertainty-guided reweighting
    bool ag = false;  // most-uncertain-variant augmentation
};

inline StrategyFlags parse_strategies(const std::string& csv) {
    StrategyFlags f;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        std::string tok = trim(csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        pos = comma == std::string::npos ? csv.size() + 1 : comma + 1;
        if (tok.empty()) continue;
        if (tok == "sp") f.sp = true;
        else if (tok == "rw") f.rw = true;
        else if (tok == "ag") f.ag = true;
        else throw std::invalid_argument("unknown strategy '" + tok + "' (expected sp, rw, ag)");
    }
    return f;
}

struct TrainConfig {
    int batch_size = 4;
    int max_epochs = 50;
    int patience = 8;  // epochs without validation macro-F1 improvement
    std::uint64_t seed = 7;

    double phase1_lr = 0.001;
    double phase1_weight_decay = 0.0001;
    int phase1_lr_step_epochs = 10;
    double phase1_aug_prob = 0.5;       // per family, per sample, per epoch
    bool phase1_tied_selectors = true;  // base model shares one selector

    double phase2_lr = 0.00001;
    double phase2_weight_decay = 0.000001;
    int phase2_lr_step_epochs = 5;
    int phase2_candidates = 8;  // M variants per uncertain sample

    double lr_decay_factor = 0.5;
    double reweight_rho = 0.5;           // down-weight factor for noisy samples
    double data_tau_quantile = 0.95;     // tau_d = this quantile of train mean entropy
    std::string threshold_criterion = "balanced-accuracy";  // or "f1"

    void validate() const {
        if (batch_size < 1 || max_epochs < 0 || patience < 1)
            throw std::invalid_argument("TrainConfig: bad batch/epoch/patience setting");
        if (!(phase1_lr > 0.0) || !(phase2_lr > 0.0))
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
        if (phase1_weight_decay < 0.0 || phase2_weight_decay < 0.0)
            throw std::invalid_argument("TrainConfig: negative weight decay");
        if (phase1_lr_step_epochs < 1 || phase2_lr_step_epochs < 1)
            throw std::invalid_argument("TrainConfig: lr step period must be >= 1");
        if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
            throw std::invalid_argument("TrainConfig: lr decay factor must lie in (0,1]");
        if (phase1_aug_prob < 0.0 || phase1_aug_prob > 1.0)
            throw std::invalid_argument("TrainConfig: augmentation probability in [0,1]");
        if (phase2_candidates < 1) throw std::invalid_argument("TrainConfig: M must be >= 1");
        if (!(reweight_rho > 0.0 && reweight_rho <= 1.0))
            throw std::invalid_argument("TrainConfig: rho must lie in (0,1]");
        if (!(data_tau_quantile >= 0.0 && data_tau_quantile <= 1.0))
            throw std::invalid_argument("TrainConfig: data_tau_quantile in [0,1]");
        if (threshold_criterion != "balanced-accuracy" && threshold_criterion != "f1")
            throw std::invalid_argument("TrainConfig: unknown threshold criterion '" +
                                        threshold_criterion + "'");
    }

    static TrainConfig from_reader(KeyValueReader& kv) {
        TrainConfig c;
        c.batch_size = kv.get("batch_size", c.batch_size);
        c.max_epochs = kv.get("max_epochs", c.max_epochs);
        c.patience = kv.get("patience", c.patience);
        c.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<long>(c.seed)));
        c.phase1_lr = kv.get("phase1_lr", c.phase1_lr);
        c.phase1_weight_decay = kv.get("phase1_weight_decay", c.phase1_weight_decay);
        c.phase1_lr_step_epochs = kv.get("phase1_lr_step_epochs", c.phase1_lr_step_epochs);
        c.phase1_aug_prob = kv.get("phase1_aug_prob", c.phase1_aug_prob);
        c.phase1_tied_selectors = kv.get("phase1_tied_selectors", c.phase1_tied_selectors ? 1 : 0) != 0;
        c.phase2_lr = kv.get("phase2_lr", c.phase2_lr);
        c.phase2_weight_decay = kv.get("phase2_weight_decay", c.phase2_weight_decay);
        c.phase2_lr_step_epochs = kv.get("phase2_lr_step_epochs", c.phase2_lr_step_epochs);
        c.phase2_candidates = kv.get("phase2_candidates", c.phase2_candidates);
        c.lr_decay_factor = kv.get("lr_decay_factor", c.lr_decay_factor);
        c.reweight_rho = kv.get("reweight_rho", c.reweight_rho);
        c.data_tau_quantile = kv.get("data_tau_quantile", c.data_tau_quantile);
        c.threshold_criterion = kv.get("threshold_criterion", c.threshold_criterion);
        c.validate();
        return c;
    }
};

// model keys share the training config file under a model_ prefix
inline ModelConfig model_config_from_reader(KeyValueReader& kv) {
    ModelConfig c;
    c.region_feature_dim = kv.get("model_region_feature_dim", c.region_feature_dim);
    const int n_enc = kv.get("model_encoder_layers", static_cast<int>(c.encoder_hidden_dims.size()));
    std::vector<int> dims;
    for (int l = 0; l < n_enc; ++l) {
        const int fallback = l < static_cast<int>(c.encoder_hidden_dims.size())
                                 ? c.encoder_hidden_dims[l]
                                 : c.encoder_hidden_dims.back();
        dims.push_back(kv.get("model_encoder_dim_" + std::to_string(l), fallback));
    }
    c.encoder_hidden_dims = dims;
    c.selector_hidden_dim = kv.get("model_selector_hidden_dim", c.selector_hidden_dim);
    c.head_hidden_dim = kv.get("model_head_hidden_dim", c.head_hidden_dim);
    c.decision_threshold = kv.get("model_decision_threshold", c.decision_threshold);
    c.explanation_loss_weight = kv.get("model_explanation_loss_weight", c.explanation_loss_weight);
    c.kl_weight = kv.get("model_kl_weight", c.kl_weight);
    c.validate();
    return c;
}

// epoch-ordered schedule: lr = lr0 * factor^floor((epoch-1)/period), 1-based
inline double scheduled_lr(double lr0, double factor, int period, int epoch) {
    return lr0 * std::pow(factor, static_cast<double>((epoch - 1) / period));
}

// ---------------------------------------------------------------------------
// uncertainty reports

struct SampleUncertainty {
    std::int64_t id = 0;
    double mean_model_uncertainty = 1.0;  // over the 4 action heads
    double mean_data_entropy = 1.0;       // over the 4 action heads
    std::array<double, kNumHeads> head_model_uncertainty{};
    std::array<double, kNumHeads> head_data_entropy{};
    std::array<int, kNumHeads> head_correct{};
    bool all_actions_correct = false;
};

struct UncertaintyReport {
    std::vector<SampleUncertainty> samples;
};

inline UncertaintyReport compute_uncertainties(const ParamStore& params, const ModelConfig& cfg,
                                               const std::vector<SceneSample>& samples) {
    UncertaintyReport report;
    report.samples.reserve(samples.size());
    for (const auto& s : samples) {
        const ScenePrediction pred = forward(params, s, cfg);
        const LabelDecision dec = predict_labels(pred, cfg);
        SampleUncertainty u;
        u.id = s.id;
        double mu = 0.0, mh = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
            u.head_model_uncertainty[a] = pred.actions[a].model_uncertainty;
            u.head_data_entropy[a] = pred.actions[a].data_entropy;
            u.head_correct[a] = dec.actions[a] == s.actions[a] ? 1 : 0;
            mu += pred.actions[a].model_uncertainty;
            mh += pred.actions[a].data_entropy;
        }
        for (int j = 0; j < kNumExplanations; ++j) {
            const int h = kNumActions + j;
            u.head_model_uncertainty[h] = pred.explanations[j].model_uncertainty;
            u.head_data_entropy[h] = pred.explanations[j].data_entropy;
            u.head_correct[h] = dec.explanations[j] == s.explanations[j] ? 1 : 0;
        }
        u.mean_model_uncertainty = mu / kNumActions;
        u.mean_data_entropy = mh / kNumActions;
        u.all_actions_correct = u.head_correct[0] && u.head_correct[1] && u.head_correct[2] &&
                                u.head_correct[3];
        report.samples.push_back(u);
    }
    return report;
}

// nearest-rank empirical quantile: sorted[ceil(q*n) - 1]
inline double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q in [0,1]");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    long idx = static_cast<long>(std::ceil(q * n)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long>(values.size())) idx = static_cast<long>(values.size()) - 1;
    return values[static_cast<std::size_t>(idx)];
}

// ---------------------------------------------------------------------------
// threshold selection (tau_m)

struct ThresholdCandidate {
    double level = 0.0;     // candidate quantile level
    double tau = 0.0;       // uncertainty value at that quantile
    double criterion = 0.0; // detector score at this threshold
};

struct ThresholdSelection {
    double tau_m = 0.0;
    double auc = 0.5;       // uncertainty as a ranker of incorrect samples
    bool fallback = false;  // degenerate split or uninformative ranker
    std::string warning;
    std::vector<ThresholdCandidate> candidates;
};

// Scans quantile levels 0.50..0.95 of the mean model uncertainty and keeps the
// one whose induced error detector (u > tau) scores best on the validation
// split; ties break toward the lower quantile so more samples get reweighted.
inline ThresholdSelection select_threshold(const UncertaintyReport& report,
                                           const std::string& criterion = "balanced-accuracy") {
    if (report.samples.empty()) throw std::invalid_argument("select_threshold: empty report");
    std::vector<double> u;
    std::vector<int> wrong;
    u.reserve(report.samples.size());
    for (const auto& s : report.samples) {
        u.push_back(s.mean_model_uncertainty);
        wrong.push_back(s.all_actions_correct ? 0 : 1);
    }
    long n_wrong = 0;
    for (int w : wrong) n_wrong += w;
    const long n_ok = static_cast<long>(wrong.size()) - n_wrong;

    ThresholdSelection sel;
    if (n_wrong == 0 || n_ok == 0) {
        sel.fallback = true;
        sel.tau_m = quantile(u, 0.9);
        sel.warning = "degenerate validation split (all samples " +
                      std::string(n_wrong == 0 ? "correct" : "incorrect") +
                      "); falling back to the 0.9 uncertainty quantile";
        return sel;
    }
    sel.auc = auc(u, wrong);

    double best = 0.0;
    for (int step = 0; step <= 9; ++step) {
        const double level = 0.50 + 0.05 * step;
        ThresholdCandidate cand;
        cand.level = level;
        cand.tau = quantile(u, level);
        long tp = 0, fp = 0, tn = 0, fn = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            const bool flagged = u[i] > cand.tau;
            if (wrong[i] == 1)
                flagged ? ++tp : ++fn;
            else
                flagged ? ++fp : ++tn;
        }
        if (criterion == "f1") {
            const double p = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
            const double r = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
            cand.criterion = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        } else {
            const double tpr = static_cast<double>(tp) / n_wrong;
            const double tnr = static_cast<double>(tn) / n_ok;
            cand.criterion = 0.5 * (tpr + tnr);
        }
        sel.candidates.push_back(cand);
        if (cand.criterion > best) {  // strict: earlier (lower) quantiles win ties
            best = cand.criterion;
            sel.tau_m = cand.tau;
        }
    }
    if (best <= 0.5) {  // uninformative ranker, e.g. constant uncertainty
        sel.fallback = true;
        sel.tau_m = quantile(u, 0.9);
        sel.warning = "uncertainty does not separate errors; falling back to the 0.9 quantile";
    }
    return sel;
}

// ---------------------------------------------------------------------------
// reweighting

struct SampleWeightTable {
    std::map<std::int64_t, double> weights;  // sample id -> weight, mean 1
    long n_upweighted = 0;
    long n_downweighted = 0;

    double mean() const {
        if (weights.empty()) return 0.0;
        double total = 0.0;
        for (const auto& [id, w] : weights) total += w;
        return total / static_cast<double>(weights.size());
    }
};

// The rule applied to one sample before table normalization:
// wrong predictions, or correct ones with suspiciously high model uncertainty,
// are emphasized by (1 + u); samples with excessive data entropy are damped by rho.
inline double raw_reweight_factor(const SampleUncertainty& s, double tau_m, double tau_d,
                                  double rho) {
    double w = 1.0;
    if (!s.all_actions_correct || s.mean_model_uncertainty > tau_m)
        w *= 1.0 + s.mean_model_uncertainty;
    if (s.mean_data_entropy > tau_d) w *= rho;
    return w;
}

inline SampleWeightTable reweight(const UncertaintyReport& report, double tau_m, double tau_d,
                                  double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("reweight: rho in (0,1]");
    if (report.samples.empty()) throw std::invalid_argument("reweight: empty report");
    SampleWeightTable table;
    double total = 0.0;
    for (const auto& s : report.samples) {
        const double w = raw_reweight_factor(s, tau_m, tau_d, rho);
        if (!s.all_actions_correct || s.mean_model_uncertainty > tau_m) ++table.n_upweighted;
        if (s.mean_data_entropy > tau_d) ++table.n_downweighted;
        table.weights[s.id] = w;
        total += w;
    }
    const double scale = static_cast<double>(report.samples.size()) / total;
    for (auto& [id, w] : table.weights) w *= scale;
    return table;
}

// ---------------------------------------------------------------------------
// most-uncertain-variant augmentation

struct UncertainVariant {
    SceneSample variant;
    int chosen_index = 0;
    std::vector<double> candidate_uncertainty;
};

// Draws M random magnitude perturbations (brightness, contrast, channel_scale,
// noise), evaluates the model's mean action uncertainty on each, and returns
// the variant the model finds most uncertain; pair it with the original.
inline UncertainVariant augment_most_uncertain(const ParamStore& params, const ModelConfig& cfg,
                                               const SceneSample& sample, int m_candidates,
                                               Rng& rng) {
    if (m_candidates < 1) throw std::invalid_argument("augment_most_uncertain: M must be >= 1");
    static constexpr std::array<PerturbFamily, 4> families = {
        PerturbFamily::brightness, PerturbFamily::contrast, PerturbFamily::channel_scale,
        PerturbFamily::noise};
    UncertainVariant out;
    double best = -1.0;
    for (int m = 0; m < m_candidates; ++m) {
        const PerturbFamily family = families[rng.uniform_index(families.size())];
        PerturbationSpec spec = random_perturbation(family, rng, sample.region_dim(),
                                                    rng.next_u64(), static_cast<std::uint64_t>(m));
        SceneSample candidate = perturb(sample, spec);
        const ScenePrediction pred = forward(params, candidate, cfg);
        double u = 0.0;
        for (int a = 0; a < kNumActions; ++a) u += pred.actions[a].model_uncertainty;
        u /= kNumActions;
        out.candidate_uncertainty.push_back(u);
        if (u > best) {  // strict: ties keep the earliest candidate
            best = u;
            out.variant = std::move(candidate);
            out.chosen_index = m;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// training loops

struct EpochLog {
    int epoch = 0;
    int phase = 1;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_macro_f1 = 0.0;
    double val_error_auc = 0.5;
    bool val_auc_valid = false;
    bool improved = false;
    long n_items = 0;  // training items this epoch (originals + variants)
    // phase-2 guidance state, recomputed every epoch
    bool has_guidance = false;
    double tau_m = 0.0;
    double tau_d = 0.0;
    bool tau_fallback = false;
    double weight_mean = 1.0, weight_min = 1.0, weight_max = 1.0;
    long n_upweighted = 0, n_downweighted = 0, n_variants = 0;
};

struct TrainResult {
    ParamStore best_params;
    ModelConfig model_config;
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_macro_f1 = 0.0;
    int epochs_run = 0;
};

inline void write_train_log(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_train_log: cannot open " + path);
    for (const auto& e : log) {
        nlohmann::json j{{"epoch", e.epoch},
                         {"phase", e.phase},
                         {"lr", e.lr},
                         {"train_loss", e.train_loss},
                         {"val_macro_f1", e.val_macro_f1},
                         {"improved", e.improved},
                         {"n_items", e.n_items}};
        if (e.val_auc_valid) j["val_error_auc"] = e.val_error_auc;
        if (e.has_guidance) {
            j["tau_m"] = e.tau_m;
            j["tau_d"] = e.tau_d;
            j["tau_fallback"] = e.tau_fallback;
            j["weight_mean"] = e.weight_mean;
            j["weight_min"] = e.weight_min;
            j["weight_max"] = e.weight_max;
            j["n_upweighted"] = e.n_upweighted;
            j["n_downweighted"] = e.n_downweighted;
            j["n_variants"] = e.n_variants;
        }
        out << j.dump() << '\n';
    }
}

namespace detail {

// stream kinds for training-time substreams
constexpr std::uint64_t kStreamShuffle = 201;
constexpr std::uint64_t kStreamAugment = 202;
constexpr std::uint64_t kStreamVariant = 203;

struct EpochItem {
    const SceneSample* sample = nullptr;
    double weight = 1.0;
};

// One pass of weighted mini-batch Adam steps over the items (already shuffled).
// Gradients are averaged over each batch. Returns the mean weighted loss.
inline double run_epoch_steps(ParamStore& params, const ModelConfig& cfg, AdamState& adam,
                              const std::vector<EpochItem>& items, int batch_size, int epoch) {
    double loss_total = 0.0;
    ForwardTrace trace;
    for (std::size_t begin = 0; begin < items.size(); begin += batch_size) {
        const std::size_t end = std::min(items.size(), begin + batch_size);
        params.zero_grads();
        for (std::size_t i = begin; i < end; ++i) {
            const ScenePrediction pred = forward(params, *items[i].sample, cfg, &trace);
            const double loss = total_loss(pred, *items[i].sample, cfg, items[i].weight);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(begin / batch_size) + ", sample id " +
                                         std::to_string(items[i].sample->id));
            loss_total += loss;
            backward(params, *items[i].sample, pred, trace, cfg, items[i].weight);
        }
        params.scale_grads(1.0 / static_cast<double>(end - begin));
        adam.step(params);
    }
    return items.empty() ? 0.0 : loss_total / static_cast<double>(items.size());
}

// validation metrics shared by both phases
inline void fill_validation(EpochLog& entry, const ParamStore& params, const ModelConfig& cfg,
                            const std::vector<SceneSample>& val) {
    const EvalReport report = evaluate(params, cfg, val);
    entry.val_macro_f1 = report.macro_f1_all;
    entry.val_error_auc = report.error_detector_auc;
    entry.val_auc_valid = report.auc_valid;
}

}  // namespace detail

// Phase 1: conventional training with stochastic augmentation, keeping the
// checkpoint with the best validation macro-F1.
inline TrainResult train_phase1(const std::vector<SceneSample>& dataset, ModelConfig model_cfg,
                                const TrainConfig& cfg) {
    cfg.validate();
    model_cfg.tied_selectors = cfg.phase1_tied_selectors;
    model_cfg.validate();
    const std::vector<SceneSample> train = filter_split(dataset, "train");
    const std::vector<SceneSample> val = filter_split(dataset, "val");
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_phase1: dataset needs train and val splits");

    const FeatureStats stats = compute_feature_stats(train);
    ParamStore params = init_model_params(model_cfg, cfg.seed);

    TrainResult result;
    result.model_config = model_cfg;
    result.best_params = params;

    AdamState adam(params, cfg.phase1_lr, cfg.phase1_weight_decay);
    int since_improvement = 0;

    static constexpr std::array<PerturbFamily, 5> families = {
        PerturbFamily::brightness, PerturbFamily::contrast, PerturbFamily::channel_scale,
        PerturbFamily::noise, PerturbFamily::normalize};

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr =
            scheduled_lr(cfg.phase1_lr, cfg.lr_decay_factor, cfg.phase1_lr_step_epochs, epoch);
        adam.set_lr(lr);

        // augmented copy of the shuffled training split
        std::vector<std::size_t> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(cfg.seed, substream(detail::kStreamShuffle, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        std::vector<SceneSample> augmented;
        augmented.reserve(order.size());
        for (std::size_t idx : order) {
            const SceneSample& base = train[idx];
            Rng aug_rng(cfg.seed, substream(detail::kStreamAugment, static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(base.id)));
            SceneSample s = base;
            for (PerturbFamily family : families) {
                if (aug_rng.uniform() >= cfg.phase1_aug_prob) continue;
                const PerturbationSpec spec =
                    random_perturbation(family, aug_rng, s.region_dim(), aug_rng.next_u64(),
                                        static_cast<std::uint64_t>(base.id), &stats);
                s = perturb(s, spec);
            }
            augmented.push_back(std::move(s));
        }
        std::vector<detail::EpochItem> items;
        items.reserve(augmented.size());
        for (const auto& s : augmented) items.push_back({&s, 1.0});

        EpochLog entry;
        entry.epoch = epoch;
        entry.phase = 1;
        entry.lr = lr;
        entry.n_items = static_cast<long>(items.size());
        entry.train_loss = detail::run_epoch_steps(params, model_cfg, adam, items, cfg.batch_size, epoch);
        detail::fill_validation(entry, params, model_cfg, val);

        if (entry.val_macro_f1 > result.best_val_macro_f1 || result.best_epoch == 0) {
            result.best_val_macro_f1 = entry.val_macro_f1;
            result.best_epoch = epoch;
            result.best_params = params;
            since_improvement = 0;
            entry.improved = true;
        } else {
            ++since_improvement;
        }
        result.log.push_back(entry);
        result.epochs_run = epoch;
        if (since_improvement >= cfg.patience) break;
    }
    return result;
}

// Phase 2: starts from the Phase-1 best model and fine-tunes with the selected
// strategies. The uncertainty report, tau_m, the weight table, and the
// uncertain-pair set are rebuilt every epoch.
inline TrainResult train_phase2(const ParamStore& init_params, ModelConfig model_cfg,
                                const std::vector<SceneSample>& dataset, const TrainConfig& cfg,
                                const StrategyFlags& flags) {
    cfg.validate();
    model_cfg.validate();
    const std::vector<SceneSample> train = filter_split(dataset, "train");
    const std::vector<SceneSample> val = filter_split(dataset, "val");
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_phase2: dataset needs train and val splits");

    ParamStore params = init_params;
    if (flags.sp && model_cfg.tied_selectors) {
        // untie: every action starts from the shared selector and specializes
        for (int a = 1; a < ModelConfig::n_actions; ++a) {
            for (int layer = 0; layer < 2; ++layer) {
                params.param(names::selector(a, layer, 'w')) =
                    params.param(names::selector(0, layer, 'w'));
                params.param(names::selector(a, layer, 'b')) =
                    params.param(names::selector(0, layer, 'b'));
            }
        }
        model_cfg.tied_selectors = false;
    }

    TrainResult result;
    result.model_config = model_cfg;
    result.best_params = params;
    {
        const EvalReport before = evaluate(params, model_cfg, val);
        result.best_val_macro_f1 = before.macro_f1_all;
        result.best_epoch = 0;
    }

    AdamState adam(params, cfg.phase2_lr, cfg.phase2_weight_decay);
    int since_improvement = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr =
            scheduled_lr(cfg.phase2_lr, cfg.lr_decay_factor, cfg.phase2_lr_step_epochs, epoch);
        adam.set_lr(lr);

        EpochLog entry;
        entry.epoch = epoch;
        entry.phase = 2;
        entry.lr = lr;
        entry.has_guidance = true;

        // guidance recomputed from the current model
        const UncertaintyReport train_report = compute_uncertainties(params, model_cfg, train);
        const UncertaintyReport val_report = compute_uncertainties(params, model_cfg, val);
        const ThresholdSelection sel = select_threshold(val_report, cfg.threshold_criterion);
        std::vector<double> entropies;
        entropies.reserve(train_report.samples.size());
        for (const auto& s : train_report.samples) entropies.push_back(s.mean_data_entropy);
        const double tau_d = quantile(entropies, cfg.data_tau_quantile);
        entry.tau_m = sel.tau_m;
        entry.tau_d = tau_d;
        entry.tau_fallback = sel.fallback;
        entry.val_error_auc = sel.auc;
        entry.val_auc_valid = !sel.fallback;

        SampleWeightTable table;
        if (flags.rw) {
            table = reweight(train_report, sel.tau_m, tau_d, cfg.reweight_rho);
            entry.n_upweighted = table.n_upweighted;
            entry.n_downweighted = table.n_downweighted;
            entry.weight_mean = table.mean();
            entry.weight_min = entry.weight_max = table.weights.begin()->second;
            for (const auto& [id, w] : table.weights) {
                entry.weight_min = std::min(entry.weight_min, w);
                entry.weight_max = std::max(entry.weight_max, w);
            }
        }
        auto weight_of = [&](const SceneSample& s) {
            if (!flags.rw) return 1.0;
            return table.weights.at(s.id);
        };

        std::vector<SceneSample> variants;
        if (flags.ag) {
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (train_report.samples[i].mean_model_uncertainty <= sel.tau_m) continue;
                Rng var_rng(cfg.seed, substream(detail::kStreamVariant, static_cast<std::uint64_t>(epoch),
                                                static_cast<std::uint64_t>(train[i].id)));
                variants.push_back(
                    augment_most_uncertain(params, model_cfg, train[i], cfg.phase2_candidates, var_rng)
                        .variant);
            }
            entry.n_variants = static_cast<long>(variants.size());
        }

        std::vector<detail::EpochItem> items;
        items.reserve(train.size() + variants.size());
        for (const auto& s : train) items.push_back({&s, weight_of(s)});
        for (const auto& s : variants) items.push_back({&s, weight_of(s)});
        Rng shuffle_rng(cfg.seed, substream(detail::kStreamShuffle, static_cast<std::uint64_t>(epoch), 2));
        shuffle_rng.shuffle(items);

        entry.n_items = static_cast<long>(items.size());
        entry.train_loss = detail::run_epoch_steps(params, model_cfg, adam, items, cfg.batch_size, epoch);
        detail::fill_validation(entry, params, model_cfg, val);

        if (entry.val_macro_f1 > result.best_val_macro_f1) {
            result.best_val_macro_f1 = entry.val_macro_f1;
            result.best_epoch = epoch;
            result.best_params = params;
            since_improvement = 0;
            entry.improved = true;
        } else {
            ++since_improvement;
        }
        result.log.push_back(entry);
        result.epochs_run = epoch;
        if (since_improvement >= cfg.patience) break;
    }
    return result;
}

}  // namespace evoia
