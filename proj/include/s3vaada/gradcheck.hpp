#pragma once

// Central finite-difference check of every loss term and the combined objective
// on a tiny randomly initialized network, with VAT perturbations frozen.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s3vaada/vaada_train.hpp"

namespace s3vaada {

struct GradcheckConfig {
    NetDims dims{2, 4, 3, 3, 4};
    std::size_t batch = 4;
    double step = 1e-5;
    double tolerance = 1e-4;
    double denominator_floor = 1e-6;
    double kink_threshold = 1e-4;
    int max_resamples = 200;
    LossWeights weights;
    VatConfig vat;
    std::uint64_t seed = 0;
    // Test hook: adds a bias to the analytic gradient of this term ("total" for the sum).
    std::optional<std::string> inject_fault;
};

struct TermCheck {
    std::string term;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = true;
};

struct GradcheckReport {
    std::vector<TermCheck> checks;
    int resamples = 0;
    bool passed = true;

    std::string table() const {
        std::ostringstream os;
        os << "term                 max_rel_error  status\n";
        for (const auto& c : checks) {
            char line[128];
            std::snprintf(line, sizeof line, "%-20s %13.3e  %s\n", c.term.c_str(), c.max_rel_error,
                          c.passed ? "PASS" : "FAIL");
            os << line;
        }
        return os.str();
    }
};

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

struct GradcheckProblem {
    NetParams params;
    LossBatches batches;
    FrozenTerms frozen;
};

inline double min_kink_distance(const GradcheckProblem& p) {
    double m = std::numeric_limits<double>::infinity();
    auto feat = [&](const Vector& x) {
        const FeatureTrace t = trace_features(p.params, x);
        m = std::min(m, min_abs_preactivation(t));
        return t.embedding;
    };
    for (const Vector& x : p.batches.labeled_x) feat(x);
    for (const Vector& x : p.batches.unlabeled_x) feat(x);
    for (std::size_t i = 0; i < p.batches.labeled_x.size(); ++i) {
        feat(p.batches.labeled_x[i] + p.frozen.labeled.perturbations[i]);
    }
    for (std::size_t i = 0; i < p.batches.unlabeled_x.size(); ++i) {
        feat(p.batches.unlabeled_x[i] + p.frozen.unlabeled.perturbations[i]);
    }
    for (const auto* side : {&p.batches.disc_labeled_x, &p.batches.disc_unlabeled_x}) {
        for (const Vector& x : *side) m = std::min(m, min_abs_preactivation(trace_discriminator(p.params, feat(x))));
    }
    return m;
}

inline GradcheckProblem sample_problem(const GradcheckConfig& cfg, Rng& rng) {
    GradcheckProblem p;
    p.params = init_params(cfg.dims, rng);
    auto draw = [&](std::vector<Vector>& out) {
        for (std::size_t i = 0; i < cfg.batch; ++i) {
            Vector x(static_cast<Eigen::Index>(cfg.dims.input));
            for (Eigen::Index k = 0; k < x.size(); ++k) x(k) = rng.normal();
            out.push_back(std::move(x));
        }
    };
    draw(p.batches.labeled_x);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        p.batches.labeled_y.push_back(static_cast<int>(rng.below(cfg.dims.classes)));
    }
    draw(p.batches.unlabeled_x);
    draw(p.batches.disc_labeled_x);
    draw(p.batches.disc_unlabeled_x);
    p.frozen = freeze_terms(p.params, p.batches, cfg.vat, rng);
    return p;
}

}  // namespace detail

inline GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
    if (cfg.inject_fault) {
        bool known = *cfg.inject_fault == "total";
        for (Term t : kAllTerms) known = known || *cfg.inject_fault == term_name(t);
        if (!known) throw ValidationError("unknown loss term '" + *cfg.inject_fault + "'");
    }
    Rng rng = Rng::derive(cfg.seed, 0x6C4D);
    GradcheckReport report;
    detail::GradcheckProblem prob = detail::sample_problem(cfg, rng);
    while (detail::min_kink_distance(prob) < cfg.kink_threshold) {
        if (++report.resamples > cfg.max_resamples) throw NumericsError("gradcheck: could not avoid ReLU kinks");
        prob = detail::sample_problem(cfg, rng);
    }

    const LossTerms analytic = evaluate_terms(prob.params, prob.batches, prob.frozen);
    std::vector<GradientSet> grads;
    std::vector<std::string> names;
    for (Term t : kAllTerms) {
        grads.push_back(analytic.gradient(t));
        names.emplace_back(term_name(t));
    }
    grads.push_back(scalar_gradient(analytic, cfg.weights));
    names.emplace_back("total");
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (cfg.inject_fault && *cfg.inject_fault == names[k]) {
            for (std::size_t i = 0; i < grads[k].parameter_count(); ++i) grads[k].at(i) += 1e-2;
        }
    }

    auto values = [&](const NetParams& p) {
        const LossTerms t = evaluate_terms(p, prob.batches, prob.frozen);
        std::vector<double> v;
        for (Term term : kAllTerms) v.push_back(t.values.get(term));
        v.push_back(t.values.weighted(cfg.weights));
        return v;
    };

    report.checks.resize(names.size());
    for (std::size_t k = 0; k < names.size(); ++k) report.checks[k].term = names[k];
    NetParams work = prob.params;
    for (std::size_t i = 0; i < work.parameter_count(); ++i) {
        const double orig = work.at(i);
        work.at(i) = orig + cfg.step;
        const auto plus = values(work);
        work.at(i) = orig - cfg.step;
        const auto minus = values(work);
        work.at(i) = orig;
        for (std::size_t k = 0; k < names.size(); ++k) {
            const double numeric = (plus[k] - minus[k]) / (2.0 * cfg.step);
            const double err = relative_error(grads[k].at(i), numeric, cfg.denominator_floor);
            if (err > report.checks[k].max_rel_error || !std::isfinite(err)) {
                report.checks[k].max_rel_error = err;
                report.checks[k].worst_index = i;
            }
        }
    }
    for (auto& c : report.checks) {
        c.passed = std::isfinite(c.max_rel_error) && c.max_rel_error <= cfg.tolerance;
        report.passed = report.passed && c.passed;
    }
    return report;
}

}  // namespace s3vaada
