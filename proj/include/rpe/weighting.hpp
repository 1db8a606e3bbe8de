// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ensemble weight computation over retrieved references:
//
//   average     uniform 1/n
//   similarity  softmax over negative scaled squared distances
//   linear      min ||z - Z w||^2  subject to  sum(w) = 1
//   linear_l1   min ||z - Z w||^2 + lambda2 ||w||_1  subject to  sum(w) = 1
//   top1        all weight on the nearest reference
//
// Weights may be negative for the constrained solvers; the feasible set is
// the sum-to-one hyperplane, not the simplex. The linear solver works on the
// bordered KKT system and returns the minimum-norm minimizer when the
// references are affinely dependent. The l1 solver runs an alternating
// splitting scheme (constrained quadratic step, soft-threshold step, dual
// update) and returns the best feasible iterate seen.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rpe/errors.hpp"
#include "rpe/registry.hpp"
#include "rpe/representation.hpp"
#include "rpe/tensor.hpp"

namespace rpe {

enum class WeightMethod { average, similarity, linear, linear_l1, top1 };

inline const char* to_string(WeightMethod m) {
    switch (m) {
    case WeightMethod::average: return "average";
    case WeightMethod::similarity: return "similarity";
    case WeightMethod::linear: return "linear";
    case WeightMethod::linear_l1: return "linear_l1";
    case WeightMethod::top1: return "top1";
    }
    return "?";
}

inline WeightMethod parse_weight_method(const std::string& name) {
    if (name == "average") return WeightMethod::average;
    if (name == "similarity") return WeightMethod::similarity;
    if (name == "linear") return WeightMethod::linear;
    if (name == "linear_l1") return WeightMethod::linear_l1;
    if (name == "top1") return WeightMethod::top1;
    throw domain_error("unknown weight method '" + name + "'");
}

struct SolverConfig {
    double lambda1 = 1.0;      // softmax temperature
    double lambda2 = 0.1;      // l1 penalty strength
    int max_iterations = 10000;
    double tolerance = 1e-8;
    double rho = 1.0;          // splitting penalty

    void validate() const {
        if (!(lambda1 > 0.0))
            throw domain_error("SolverConfig: lambda1 must be positive");
        if (!(lambda2 >= 0.0))
            throw domain_error("SolverConfig: lambda2 must be non-negative");
        if (max_iterations < 1)
            throw domain_error("SolverConfig: max_iterations must be >= 1");
        if (!(tolerance > 0.0))
            throw domain_error("SolverConfig: tolerance must be positive");
        if (!(rho > 0.0))
            throw domain_error("SolverConfig: rho must be positive");
    }
};

struct WeightDiagnostics {
    std::optional<double> residual_norm;
    std::optional<int> iterations;
    std::optional<double> objective;
    bool converged = true;
    /// Objective values of accepted (improving) iterates, non-increasing.
    std::vector<double> accepted_objectives;
};

struct WeightVector {
    std::vector<double> weights;
    WeightMethod method = WeightMethod::average;
    WeightDiagnostics diagnostics;

    double sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

inline WeightVector weights_average(std::size_t n) {
    if (n == 0)
        throw domain_error("weights_average: need at least one reference");
    WeightVector wv;
    wv.method = WeightMethod::average;
    wv.weights.assign(n, 1.0 / static_cast<double>(n));
    return wv;
}

/// Softmax weights from precomputed squared distances. The smallest distance
/// is subtracted before exponentiation so large temperatures do not
/// underflow the whole numerator.
inline WeightVector weights_similarity(const std::vector<double>& squared_distances,
                                       const SolverConfig& config) {
    config.validate();
    if (squared_distances.empty())
        throw domain_error("weights_similarity: need at least one reference");
    const double shift = *std::min_element(squared_distances.begin(), squared_distances.end());
    WeightVector wv;
    wv.method = WeightMethod::similarity;
    wv.weights.resize(squared_distances.size());
    double total = 0.0;
    for (std::size_t i = 0; i < squared_distances.size(); ++i) {
        wv.weights[i] = std::exp(-config.lambda1 * (squared_distances[i] - shift));
        total += wv.weights[i];
    }
    for (double& w : wv.weights)
        w /= total;
    return wv;
}

inline WeightVector weights_similarity(const std::vector<RepresentationVector>& refs,
                                       const RepresentationVector& target,
                                       const SolverConfig& config) {
    std::vector<double> d2;
    d2.reserve(refs.size());
    for (const auto& r : refs)
        d2.push_back(squared_distance(r, target));
    return weights_similarity(d2, config);
}

namespace detail {

inline Eigen::MatrixXd ref_matrix(const std::vector<RepresentationVector>& refs,
                                  const RepresentationVector& target) {
    if (refs.empty())
        throw domain_error("weights solver: need at least one reference");
    Eigen::MatrixXd Z(target.dim(), refs.size());
    for (std::size_t j = 0; j < refs.size(); ++j) {
        if (refs[j].dim() != target.dim())
            throw shape_error("weights solver: reference dimension mismatch");
        for (std::size_t i = 0; i < target.dim(); ++i)
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = refs[j][i];
    }
    return Z;
}

inline Eigen::VectorXd to_eigen(const RepresentationVector& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.values().data(),
                                             static_cast<Eigen::Index>(v.dim()));
}

/// Bordered KKT matrix of the sum-to-one constrained quadratic
///   [ 2 Z^T Z + diag_shift I   1 ]
///   [ 1^T                      0 ]
inline Eigen::MatrixXd bordered_kkt(const Eigen::MatrixXd& Z, double diag_shift) {
    const Eigen::Index n = Z.cols();
    Eigen::MatrixXd K(n + 1, n + 1);
    K.topLeftCorner(n, n) = 2.0 * (Z.transpose() * Z);
    K.topLeftCorner(n, n).diagonal().array() += diag_shift;
    K.topRightCorner(n, 1).setOnes();
    K.bottomLeftCorner(1, n).setOnes();
    K(n, n) = 0.0;
    return K;
}

inline double soft_threshold(double x, double t) {
    if (x > t)
        return x - t;
    if (x < -t)
        return x + t;
    return 0.0;
}

} // namespace detail

/// Minimizer of ||z - Z w||^2 subject to sum(w) = 1; when the minimizer is
/// not unique, the one with smallest ||w||_2. Solved through a rank-revealing
/// decomposition of the bordered KKT system with one refinement pass; the
/// tiny remaining constraint drift is projected out so sum(w) = 1 holds to
/// roundoff.
inline WeightVector weights_linear(const std::vector<RepresentationVector>& refs,
                                   const RepresentationVector& target,
                                   const SolverConfig& config) {
    config.validate();
    const Eigen::MatrixXd Z = detail::ref_matrix(refs, target);
    const Eigen::VectorXd z = detail::to_eigen(target);
    const Eigen::Index n = Z.cols();

    const Eigen::MatrixXd K = detail::bordered_kkt(Z, 0.0);
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = 2.0 * (Z.transpose() * z);
    rhs(n) = 1.0;

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    Eigen::VectorXd x = cod.solve(rhs);
    x += cod.solve(rhs - K * x);

    Eigen::VectorXd w = x.head(n);
    w.array() += (1.0 - w.sum()) / static_cast<double>(n);

    WeightVector wv;
    wv.method = WeightMethod::linear;
    wv.weights.assign(w.data(), w.data() + n);
    const double residual = (z - Z * w).norm();
    wv.diagnostics.residual_norm = residual;
    wv.diagnostics.objective = residual * residual;
    wv.diagnostics.iterations = 0;
    return wv;
}

/// Approximate minimizer of ||z - Z w||^2 + lambda2 ||w||_1 subject to
/// sum(w) = 1. Alternating splitting: an equality-constrained quadratic step
/// (bordered solve, factored once), a soft-threshold step with threshold
/// lambda2 / rho, and a dual update. Starts from the unpenalized solution,
/// which is feasible, and keeps the best feasible iterate by penalized
/// objective, so the result never does worse than the unpenalized point.
/// Non-convergence within max_iterations is reported through the converged
/// flag, not an error.
inline WeightVector weights_linear_l1(const std::vector<RepresentationVector>& refs,
                                      const RepresentationVector& target,
                                      const SolverConfig& config) {
    config.validate();
    const Eigen::MatrixXd Z = detail::ref_matrix(refs, target);
    const Eigen::VectorXd z = detail::to_eigen(target);
    const Eigen::Index n = Z.cols();

    const auto objective = [&](const Eigen::VectorXd& w) {
        return (z - Z * w).squaredNorm() + config.lambda2 * w.lpNorm<1>();
    };

    const WeightVector warm = weights_linear(refs, target, config);
    Eigen::VectorXd w =
        Eigen::Map<const Eigen::VectorXd>(warm.weights.data(), static_cast<Eigen::Index>(n));
    Eigen::VectorXd v = w;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);

    WeightVector wv;
    wv.method = WeightMethod::linear_l1;
    Eigen::VectorXd best_w = w;
    double best_obj = objective(w);
    wv.diagnostics.accepted_objectives.push_back(best_obj);

    // The quadratic step's matrix is constant across iterations.
    const Eigen::MatrixXd K = detail::bordered_kkt(Z, config.rho);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    const Eigen::VectorXd base_rhs_top = 2.0 * (Z.transpose() * z);

    bool converged = false;
    int iter = 0;
    while (iter < config.max_iterations) {
        ++iter;
        Eigen::VectorXd rhs(n + 1);
        rhs.head(n) = base_rhs_top + config.rho * (v - u);
        rhs(n) = 1.0;
        const Eigen::VectorXd x = lu.solve(rhs);
        w = x.head(n);

        const Eigen::VectorXd v_prev = v;
        for (Eigen::Index i = 0; i < n; ++i)
            v(i) = detail::soft_threshold(w(i) + u(i), config.lambda2 / config.rho);
        u += w - v;

        const double obj = objective(w);
        if (obj < best_obj) {
            best_obj = obj;
            best_w = w;
            wv.diagnostics.accepted_objectives.push_back(obj);
        }

        const double primal = (w - v).norm();
        const double dual = config.rho * (v - v_prev).norm();
        if (primal < config.tolerance && dual < config.tolerance) {
            converged = true;
            break;
        }
    }

    wv.weights.assign(best_w.data(), best_w.data() + n);
    wv.diagnostics.iterations = iter;
    wv.diagnostics.converged = converged;
    wv.diagnostics.objective = best_obj;
    wv.diagnostics.residual_norm = (z - Z * best_w).norm();
    return wv;
}

/// All weight on the closest retrieved entry.
inline WeightVector weights_top1(const RetrievalResult& retrieval) {
    if (retrieval.items.empty())
        throw domain_error("weights_top1: empty retrieval");
    WeightVector wv;
    wv.method = WeightMethod::top1;
    wv.weights.assign(retrieval.items.size(), 0.0);
    wv.weights[0] = 1.0;
    return wv;
}

struct PipelineResult {
    RetrievalResult retrieval;
    WeightVector weights; // aligned with retrieval order
    AdapterDelta delta;
};

/// Retrieval, weighting and merge over a registry. Weights stay aligned with
/// the retrieval (ascending distance) order; the merge itself always sums in
/// ascending insertion-index order so the result is independent of retrieval
/// ordering, bit for bit.
inline PipelineResult run_pipeline(const Registry& registry, const RepresentationVector& target,
                                   WeightMethod method, const SolverConfig& config,
                                   const std::set<std::string>& exclude_ids = {},
                                   std::optional<std::size_t> k = std::nullopt) {
    PipelineResult out;
    out.retrieval = registry.retrieve({target, k, exclude_ids});
    const std::size_t n = out.retrieval.items.size();

    switch (method) {
    case WeightMethod::average:
        out.weights = weights_average(n);
        break;
    case WeightMethod::top1:
        out.weights = weights_top1(out.retrieval);
        break;
    case WeightMethod::similarity: {
        std::vector<double> d2;
        d2.reserve(n);
        for (const auto& item : out.retrieval.items)
            d2.push_back(item.squared_distance);
        out.weights = weights_similarity(d2, config);
        break;
    }
    case WeightMethod::linear:
    case WeightMethod::linear_l1: {
        std::vector<RepresentationVector> refs;
        refs.reserve(n);
        for (const auto& item : out.retrieval.items)
            refs.push_back(registry.entry(item.id).representation);
        out.weights = method == WeightMethod::linear ? weights_linear(refs, target, config)
                                                     : weights_linear_l1(refs, target, config);
        break;
    }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return registry.entry(out.retrieval.items[a].id).insertion_index <
               registry.entry(out.retrieval.items[b].id).insertion_index;
    });
    std::vector<AdapterDelta> deltas;
    std::vector<double> merge_weights;
    deltas.reserve(n);
    merge_weights.reserve(n);
    for (std::size_t idx : order) {
        deltas.push_back(registry.adapter(out.retrieval.items[idx].id));
        merge_weights.push_back(out.weights.weights[idx]);
    }
    out.delta = weighted_sum(deltas, merge_weights);
    return out;
}

inline PipelineResult run_pipeline(const Registry& registry, const FeatureSet& target_features,
                                   WeightMethod method, const SolverConfig& config,
                                   const std::set<std::string>& exclude_ids = {},
                                   std::optional<std::size_t> k = std::nullopt) {
    return run_pipeline(registry, mean_pool(target_features), method, config, exclude_ids, k);
}

/// Machine-readable weight report.
inline nlohmann::json weight_report(const RetrievalResult& retrieval, const WeightVector& wv,
                                    const SolverConfig& config) {
    nlohmann::json report;
    report["method"] = to_string(wv.method);
    report["ids"] = retrieval.ids();
    report["weights"] = wv.weights;
    report["residual_norm"] =
        wv.diagnostics.residual_norm ? nlohmann::json(*wv.diagnostics.residual_norm)
                                     : nlohmann::json(nullptr);
    report["iterations"] = wv.diagnostics.iterations ? nlohmann::json(*wv.diagnostics.iterations)
                                                     : nlohmann::json(nullptr);
    report["objective"] = wv.diagnostics.objective ? nlohmann::json(*wv.diagnostics.objective)
                                                   : nlohmann::json(nullptr);
    report["lambda1"] = config.lambda1;
    report["lambda2"] = config.lambda2;
    return report;
}

} // namespace rpe
