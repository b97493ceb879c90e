#pragma once
// Dirichlet/Beta evidence algebra for binary evidential heads.
//
// Every head keeps a Dirichlet over its (present, absent) probabilities,
// parameterized as alpha = evidence + 1. Belief masses b_i = (alpha_i - 1)/S
// and the uncertainty mass u = K/S partition the unit of opinion:
// sum(b) + u = 1. The training loss is the expected cross-entropy under the
// predicted Dirichlet, which has the closed form sum_j y_j (psi(S) - psi(alpha_j)).

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "evoia/special_functions.hpp"

namespace evoia {

struct DirichletParams {
    std::vector<double> alpha;  // concentration parameters, all > 0

    DirichletParams() = default;
    explicit DirichletParams(std::vector<double> a) : alpha(std::move(a)) { validate(); }
    DirichletParams(double a0, double a1) : alpha{a0, a1} { validate(); }

    int k() const { return static_cast<int>(alpha.size()); }

    double strength() const {
        double s = 0.0;
        for (double a : alpha) s += a;
        return s;
    }

    void validate() const {
        if (alpha.empty()) throw std::domain_error("DirichletParams: alpha must be non-empty");
        for (double a : alpha) {
            if (!(a > 0.0) || !std::isfinite(a))
                throw std::domain_error("DirichletParams: alpha entries must be positive and finite");
        }
    }
};

struct EvidenceVector {
    std::vector<double> evidence;  // nonnegative, finite

    EvidenceVector() = default;
    explicit EvidenceVector(std::vector<double> e) : evidence(std::move(e)) { validate(); }
    EvidenceVector(double e0, double e1) : evidence{e0, e1} { validate(); }

    void validate() const {
        if (evidence.empty()) throw std::domain_error("EvidenceVector: must be non-empty");
        for (double e : evidence) {
            if (!(e >= 0.0) || !std::isfinite(e))
                throw std::domain_error("EvidenceVector: entries must be nonnegative and finite");
        }
    }
};

struct BeliefAssignment {
    std::vector<double> belief;  // nonnegative masses
    double uncertainty = 1.0;    // in (0, 1]

    void validate() const {
        if (belief.empty()) throw std::domain_error("BeliefAssignment: belief must be non-empty");
        double total = uncertainty;
        for (double b : belief) {
            if (!(b >= 0.0) || !std::isfinite(b))
                throw std::domain_error("BeliefAssignment: belief masses must be nonnegative");
            total += b;
        }
        if (!(uncertainty > 0.0) || uncertainty > 1.0)
            throw std::domain_error("BeliefAssignment: uncertainty must lie in (0, 1]");
        if (std::abs(total - 1.0) > 1e-9)
            throw std::domain_error("BeliefAssignment: belief masses and uncertainty must sum to 1");
    }
};

struct ProbabilityPoint {
    std::vector<double> p;  // on the unit simplex

    ProbabilityPoint() = default;
    explicit ProbabilityPoint(std::vector<double> v) : p(std::move(v)) {}
    ProbabilityPoint(double p0, double p1) : p{p0, p1} {}

    void validate(double tol = 1e-12) const {
        if (p.empty()) throw std::domain_error("ProbabilityPoint: must be non-empty");
        double total = 0.0;
        for (double pi : p) {
            if (!(pi >= 0.0) || !std::isfinite(pi))
                throw std::domain_error("ProbabilityPoint: entries must be nonnegative and finite");
            total += pi;
        }
        if (std::abs(total - 1.0) > tol)
            throw std::domain_error("ProbabilityPoint: entries must sum to 1, off by " +
                                    std::to_string(total - 1.0));
    }
};

// ln B(alpha) = sum ln Gamma(alpha_i) - ln Gamma(S)
inline double log_beta_function(const DirichletParams& d) {
    d.validate();
    double sum_lg = 0.0;
    for (double a : d.alpha) sum_lg += log_gamma(a);
    return sum_lg - log_gamma(d.strength());
}

// log of the Dirichlet density at an interior simplex point.
// At the boundary: a zero coordinate with alpha > 1 gives density 0 (-inf),
// with alpha == 1 the coordinate contributes nothing, with alpha < 1 the
// density diverges and we refuse to evaluate.
inline double dirichlet_log_pdf(const DirichletParams& d, const ProbabilityPoint& point) {
    d.validate();
    point.validate(1e-9);
    if (point.p.size() != d.alpha.size())
        throw std::domain_error("dirichlet_log_pdf: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < d.alpha.size(); ++i) {
        const double pi = point.p[i];
        const double ai = d.alpha[i];
        if (pi == 0.0) {
            if (ai < 1.0)
                throw std::domain_error("dirichlet_log_pdf: density diverges at boundary for alpha < 1");
            if (ai > 1.0) return -std::numeric_limits<double>::infinity();
            continue;  // ai == 1: p^0 term
        }
        acc += (ai - 1.0) * std::log(pi);
    }
    return acc - log_beta_function(d);
}

inline DirichletParams evidence_to_dirichlet(const EvidenceVector& e) {
    e.validate();
    std::vector<double> alpha(e.evidence.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = e.evidence[i] + 1.0;
    return DirichletParams(std::move(alpha));
}

inline BeliefAssignment dirichlet_to_belief(const DirichletParams& d) {
    d.validate();
    const double s = d.strength();
    BeliefAssignment out;
    out.belief.resize(d.alpha.size());
    for (std::size_t i = 0; i < d.alpha.size(); ++i) out.belief[i] = (d.alpha[i] - 1.0) / s;
    out.uncertainty = static_cast<double>(d.k()) / s;
    return out;
}

inline DirichletParams belief_to_dirichlet(const BeliefAssignment& b) {
    b.validate();
    if (b.uncertainty <= 0.0)
        throw std::domain_error("belief_to_dirichlet: zero uncertainty means infinite evidence");
    const double s = static_cast<double>(b.belief.size()) / b.uncertainty;
    std::vector<double> alpha(b.belief.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = s * b.belief[i] + 1.0;
    return DirichletParams(std::move(alpha));
}

// Epistemic uncertainty mass u = K/S, strictly decreasing in total evidence.
inline double model_uncertainty(const DirichletParams& d) {
    d.validate();
    return static_cast<double>(d.k()) / d.strength();
}

// Dirichlet mean, used for thresholded decisions and data entropy.
inline ProbabilityPoint expected_probability(const DirichletParams& d) {
    d.validate();
    const double s = d.strength();
    ProbabilityPoint out;
    out.p.resize(d.alpha.size());
    for (std::size_t i = 0; i < d.alpha.size(); ++i) out.p[i] = d.alpha[i] / s;
    return out;
}

// Aleatoric uncertainty: base-2 entropy of the expected class probability.
inline double data_uncertainty(const DirichletParams& d) {
    const ProbabilityPoint mean = expected_probability(d);
    double h = 0.0;
    for (double pi : mean.p) {
        if (pi > 0.0) h -= pi * std::log2(pi);
    }
    return h;
}

namespace detail {
inline void require_one_hot(const DirichletParams& d, const std::vector<double>& y) {
    if (y.size() != d.alpha.size())
        throw std::invalid_argument("edl_loss: target length does not match alpha");
    int ones = 0;
    for (double v : y) {
        if (v == 1.0) ++ones;
        else if (v != 0.0) throw std::invalid_argument("edl_loss: target must be a {0,1} vector");
    }
    if (ones != 1) throw std::invalid_argument("edl_loss: target must have exactly one 1");
}
}  // namespace detail

// Expected cross-entropy of a one-hot target under Dir(alpha):
//   E[-sum y_j ln p_j] = sum_j y_j (psi(S) - psi(alpha_j))
inline double edl_loss(const DirichletParams& d, const std::vector<double>& y) {
    d.validate();
    detail::require_one_hot(d, y);
    const double psi_s = digamma(d.strength());
    double loss = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        if (y[j] != 0.0) loss += y[j] * (psi_s - digamma(d.alpha[j]));
    }
    return loss;
}

// d/d alpha_k of edl_loss: (sum_j y_j) psi'(S) - y_k psi'(alpha_k)
inline std::vector<double> edl_loss_grad(const DirichletParams& d, const std::vector<double>& y) {
    d.validate();
    detail::require_one_hot(d, y);
    const double psi1_s = trigamma(d.strength());
    std::vector<double> grad(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) {
        grad[k] = psi1_s - (y[k] != 0.0 ? y[k] * trigamma(d.alpha[k]) : 0.0);
    }
    return grad;
}

// KL(Dir(alpha) || Dir(1,...,1)). Optional regularizer; zero iff alpha is all ones.
inline double kl_to_uniform(const DirichletParams& d) {
    d.validate();
    const double s = d.strength();
    const double psi_s = digamma(s);
    double acc = log_gamma(s) - log_gamma(static_cast<double>(d.k()));
    for (double a : d.alpha) {
        acc -= log_gamma(a);
        acc += (a - 1.0) * (digamma(a) - psi_s);
    }
    return acc;
}

// Gradient of kl_to_uniform: d/d alpha_k = (alpha_k - 1) psi'(alpha_k) - (S - K) psi'(S)
inline std::vector<double> kl_to_uniform_grad(const DirichletParams& d) {
    d.validate();
    const double s = d.strength();
    const double tail = (s - static_cast<double>(d.k())) * trigamma(s);
    std::vector<double> grad(d.alpha.size());
    for (std::size_t k = 0; k < d.alpha.size(); ++k) {
        grad[k] = (d.alpha[k] - 1.0) * trigamma(d.alpha[k]) - tail;
    }
    return grad;
}

}  // namespace evoia
