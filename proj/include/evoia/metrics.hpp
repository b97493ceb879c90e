#pragma once
// Per-head confusion counts, precision/recall/F1/accuracy, tie-aware AUC, and
// whole-split evaluation reports.

#include <array>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoia/model.hpp"
#include "evoia/scenesim.hpp"

namespace evoia {

// shortest decimal form that round-trips the double
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct ConfusionCounts {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
    void add(int predicted, int actual) {
        if (predicted == 1)
            actual == 1 ? ++tp : ++fp;
        else
            actual == 1 ? ++fn : ++tn;
    }
};

inline ConfusionCounts pool(const ConfusionCounts& a, const ConfusionCounts& b) {
    return ConfusionCounts{a.tp + b.tp, a.fp + b.fp, a.tn + b.tn, a.fn + b.fn};
}

struct HeadMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
};

// Zero-denominator conventions: precision and recall are 0 when undefined,
// and F1 is 0 when precision + recall is 0.
inline HeadMetrics classification_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw std::invalid_argument("classification_metrics: empty counts");
    HeadMetrics m;
    m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.accuracy = static_cast<double>(c.tp + c.tn) / c.total();
    return m;
}

// Mann-Whitney pair counting: fraction of (positive, negative) pairs ranked
// correctly, ties counting one half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
    long n_pos = 0, n_neg = 0;
    for (int l : labels) {
        if (l == 1) ++n_pos;
        else if (l == 0) ++n_neg;
        else throw std::invalid_argument("auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc: needs at least one positive and one negative label");
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct EvalReport {
    long n_samples = 0;
    std::array<ConfusionCounts, kNumHeads> head_counts{};  // heads 0-3 actions, 4-24 explanations
    std::array<HeadMetrics, kNumHeads> head_metrics{};

    HeadMetrics actions_micro;       // pooled over the 4 action heads
    HeadMetrics explanations_micro;  // pooled over the 21 explanation heads
    std::array<double, kNumActions> per_action_f1{};

    // macro averages skip heads with no positive labels in the split
    // (the reserved explanation bits would otherwise pin them at 0)
    double macro_f1_actions = 0.0;
    double macro_f1_explanations = 0.0;
    double macro_f1_all = 0.0;

    double error_detector_auc = 0.5;  // mean action uncertainty ranking wrong samples
    bool auc_valid = false;
};

namespace detail {
inline double macro_f1_over(const EvalReport& r, int begin, int end) {
    double total = 0.0;
    int counted = 0;
    for (int h = begin; h < end; ++h) {
        if (r.head_counts[h].tp + r.head_counts[h].fn == 0) continue;  // no support
        total += r.head_metrics[h].f1;
        ++counted;
    }
    return counted > 0 ? total / counted : 0.0;
}
}  // namespace detail

// Builds a report from per-sample truth and predictions; the model-independent
// core of evaluate().
inline EvalReport report_from_predictions(const std::vector<SceneSample>& samples,
                                          const std::vector<LabelDecision>& predictions) {
    if (samples.size() != predictions.size())
        throw std::invalid_argument("report_from_predictions: size mismatch");
    if (samples.empty()) throw std::invalid_argument("report_from_predictions: no samples");
    EvalReport r;
    r.n_samples = static_cast<long>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int a = 0; a < kNumActions; ++a)
            r.head_counts[a].add(predictions[i].actions[a], samples[i].actions[a]);
        for (int j = 0; j < kNumExplanations; ++j)
            r.head_counts[kNumActions + j].add(predictions[i].explanations[j],
                                               samples[i].explanations[j]);
    }
    for (int h = 0; h < kNumHeads; ++h) r.head_metrics[h] = classification_metrics(r.head_counts[h]);

    ConfusionCounts actions_pool, expl_pool;
    for (int a = 0; a < kNumActions; ++a) actions_pool = pool(actions_pool, r.head_counts[a]);
    for (int j = 0; j < kNumExplanations; ++j)
        expl_pool = pool(expl_pool, r.head_counts[kNumActions + j]);
    r.actions_micro = classification_metrics(actions_pool);
    r.explanations_micro = classification_metrics(expl_pool);
    for (int a = 0; a < kNumActions; ++a) r.per_action_f1[a] = r.head_metrics[a].f1;
    r.macro_f1_actions = detail::macro_f1_over(r, 0, kNumActions);
    r.macro_f1_explanations = detail::macro_f1_over(r, kNumActions, kNumHeads);
    r.macro_f1_all = detail::macro_f1_over(r, 0, kNumHeads);
    return r;
}

// Runs the model over a split and assembles the report, including the
// error-detector AUC (mean action-head uncertainty as a ranker of samples
// whose action predictions are wrong).
inline EvalReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                           const std::vector<SceneSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
    std::vector<LabelDecision> predictions;
    predictions.reserve(samples.size());
    std::vector<double> mean_u(samples.size());
    std::vector<int> any_action_wrong(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ScenePrediction pred = forward(params, samples[i], cfg);
        const LabelDecision dec = predict_labels(pred, cfg);
        double u = 0.0;
        for (int a = 0; a < kNumActions; ++a) u += pred.actions[a].model_uncertainty;
        mean_u[i] = u / kNumActions;
        any_action_wrong[i] = 0;
        for (int a = 0; a < kNumActions; ++a)
            if (dec.actions[a] != samples[i].actions[a]) any_action_wrong[i] = 1;
        predictions.push_back(dec);
    }
    EvalReport r = report_from_predictions(samples, predictions);
    const bool has_pos = std::find(any_action_wrong.begin(), any_action_wrong.end(), 1) !=
                         any_action_wrong.end();
    const bool has_neg = std::find(any_action_wrong.begin(), any_action_wrong.end(), 0) !=
                         any_action_wrong.end();
    if (has_pos && has_neg) {
        r.error_detector_auc = auc(mean_u, any_action_wrong);
        r.auc_valid = true;
    }
    return r;
}

// ---------------------------------------------------------------------------
// report serialization

inline void write_report_csv(const EvalReport& r, std::ostream& out) {
    out << "kind,name,tp,fp,tn,fn,precision,recall,f1,accuracy\n";
    for (int h = 0; h < kNumHeads; ++h) {
        const auto& c = r.head_counts[h];
        const auto& m = r.head_metrics[h];
        out << "head," << head_name(h) << ',' << c.tp << ',' << c.fp << ',' << c.tn << ',' << c.fn
            << ',' << fmt_double(m.precision) << ',' << fmt_double(m.recall) << ','
            << fmt_double(m.f1) << ',' << fmt_double(m.accuracy) << '\n';
    }
    auto summary = [&](const std::string& name, double v) {
        out << "summary," << name << ",,,,,,,," << fmt_double(v) << '\n';
    };
    summary("n_samples", static_cast<double>(r.n_samples));
    summary("actions_micro_f1", r.actions_micro.f1);
    summary("actions_micro_precision", r.actions_micro.precision);
    summary("actions_micro_recall", r.actions_micro.recall);
    summary("actions_accuracy", r.actions_micro.accuracy);
    summary("explanations_micro_f1", r.explanations_micro.f1);
    summary("explanations_micro_precision", r.explanations_micro.precision);
    summary("explanations_micro_recall", r.explanations_micro.recall);
    summary("explanations_accuracy", r.explanations_micro.accuracy);
    for (int a = 0; a < kNumActions; ++a)
        summary("f1_" + action_names()[a], r.per_action_f1[a]);
    summary("macro_f1_actions", r.macro_f1_actions);
    summary("macro_f1_explanations", r.macro_f1_explanations);
    summary("macro_f1_all", r.macro_f1_all);
    if (r.auc_valid) summary("error_detector_auc", r.error_detector_auc);
}

inline nlohmann::json report_summary_json(const EvalReport& r) {
    nlohmann::json j{{"kind", "summary"},
                     {"n_samples", r.n_samples},
                     {"actions_micro_f1", r.actions_micro.f1},
                     {"actions_micro_precision", r.actions_micro.precision},
                     {"actions_micro_recall", r.actions_micro.recall},
                     {"actions_accuracy", r.actions_micro.accuracy},
                     {"explanations_micro_f1", r.explanations_micro.f1},
                     {"explanations_micro_precision", r.explanations_micro.precision},
                     {"explanations_micro_recall", r.explanations_micro.recall},
                     {"explanations_accuracy", r.explanations_micro.accuracy},
                     {"macro_f1_actions", r.macro_f1_actions},
                     {"macro_f1_explanations", r.macro_f1_explanations},
                     {"macro_f1_all", r.macro_f1_all}};
    for (int a = 0; a < kNumActions; ++a) j["f1_" + action_names()[a]] = r.per_action_f1[a];
    if (r.auc_valid) j["error_detector_auc"] = r.error_detector_auc;
    return j;
}

inline void write_report_jsonl(const EvalReport& r, std::ostream& out) {
    for (int h = 0; h < kNumHeads; ++h) {
        const auto& c = r.head_counts[h];
        const auto& m = r.head_metrics[h];
        nlohmann::json j{{"kind", "head"},     {"name", head_name(h)},
                         {"tp", c.tp},         {"fp", c.fp},
                         {"tn", c.tn},         {"fn", c.fn},
                         {"precision", m.precision}, {"recall", m.recall},
                         {"f1", m.f1},         {"accuracy", m.accuracy}};
        out << j.dump() << '\n';
    }
    out << report_summary_json(r).dump() << '\n';
}

}  // namespace evoia
