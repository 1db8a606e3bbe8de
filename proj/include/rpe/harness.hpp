// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic validation. Worlds are linear models y = (W0 + D) x
// whose true deltas and dataset representations come from one shared latent,
// so representation similarity and parameter similarity agree by
// construction (exactly under the linear map, approximately under the mildly
// nonlinear one). SFT has a closed form (least squares), which keeps every
// experiment deterministic for a given seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rpe/errors.hpp"
#include "rpe/registry.hpp"
#include "rpe/representation.hpp"
#include "rpe/tensor.hpp"
#include "rpe/weighting.hpp"

namespace rpe {

enum class MapSpec { linear, mildly_nonlinear };

inline const char* to_string(MapSpec m) {
    return m == MapSpec::linear ? "linear" : "mildly_nonlinear";
}

inline MapSpec parse_map_spec(const std::string& name) {
    if (name == "linear")
        return MapSpec::linear;
    if (name == "mildly_nonlinear")
        return MapSpec::mildly_nonlinear;
    throw config_error("unknown map_spec '" + name + "'");
}

/// One synthetic target: an affine mixture of the reference latents, shifted
/// hull_offset units along a fixed direction orthogonal to the references'
/// affine hull. Offset 0 keeps the target inside the hull.
struct TargetSpec {
    std::vector<double> mixture;
    double hull_offset = 0.0;
};

struct GeneratorConfig {
    int latent_dim = 4;
    int representation_dim = 16;
    int param_rows = 6;
    int param_cols = 5;
    int num_references = 4;
    int samples_per_task = 200;
    double noise_sigma = 0.0;          // additive observation noise
    double representation_noise = 0.0; // perturbation of stored representations
    MapSpec map_spec = MapSpec::linear;
    double nonlinearity = 0.1;         // amplitude of the nonlinear term
    std::vector<TargetSpec> targets;
    std::uint64_t seed = 0;

    void validate() const {
        if (latent_dim < 1 || representation_dim < 1 || param_rows < 1 || param_cols < 1)
            throw config_error("GeneratorConfig: dimensions must be positive");
        if (num_references < 2)
            throw config_error("GeneratorConfig: need at least two references");
        if (samples_per_task < 5)
            throw config_error("GeneratorConfig: need at least five samples per task");
        if (noise_sigma < 0.0 || representation_noise < 0.0 || nonlinearity < 0.0)
            throw config_error("GeneratorConfig: noise amplitudes must be non-negative");
        if (representation_dim < latent_dim)
            throw config_error("GeneratorConfig: representation_dim must be >= latent_dim");
        if (param_rows * param_cols < latent_dim)
            throw config_error("GeneratorConfig: parameter count must be >= latent_dim");
        if (targets.empty())
            throw config_error("GeneratorConfig: need at least one target");
        for (const TargetSpec& t : targets) {
            if (static_cast<int>(t.mixture.size()) != num_references)
                throw config_error("GeneratorConfig: mixture length must equal num_references");
            double s = 0.0;
            for (double a : t.mixture)
                s += a;
            if (std::abs(s - 1.0) > 1e-9)
                throw config_error("GeneratorConfig: mixture coefficients must sum to 1");
        }
    }
};

struct SyntheticTask {
    std::string task_id;
    RepresentationVector representation;
    AdapterDelta true_delta; // dense, single parameter "W"
    std::vector<std::pair<std::vector<double>, std::vector<double>>> dataset;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct World {
    BaseParameters base;
    std::vector<SyntheticTask> references;
    std::vector<SyntheticTask> targets;
};

namespace detail {

/// splitmix64 step; derives independent per-task streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, int rows, int cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            g(r, c) = normal(rng);
    return g;
}

/// Random matrix with orthonormal columns (rows >= cols), sign-fixed so the
/// draw is a deterministic function of the engine state.
inline Eigen::MatrixXd random_orthonormal(std::mt19937_64& rng, int rows, int cols) {
    const Eigen::MatrixXd g = gaussian_matrix(rng, rows, cols);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int c = 0; c < cols; ++c)
        if (r(c, c) < 0.0)
            q.col(c) = -q.col(c);
    return q;
}

inline RepresentationVector to_representation(const Eigen::VectorXd& v) {
    return RepresentationVector(std::vector<double>(v.data(), v.data() + v.size()));
}

inline TensorBlob matrix_blob(const Eigen::MatrixXd& m) {
    std::vector<double> data(static_cast<std::size_t>(m.rows() * m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return TensorBlob({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                      std::move(data));
}

inline Eigen::MatrixXd blob_matrix(const TensorBlob& t) {
    if (t.shape().size() != 2)
        throw shape_error("harness: expected a 2-D parameter tensor");
    Eigen::MatrixXd m(t.shape()[0], t.shape()[1]);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = t.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    return m;
}

inline Eigen::MatrixXd model_matrix(const BaseParameters& base, const AdapterDelta& delta) {
    const AdapterDelta dense = materialize(delta);
    const TensorBlob& d = std::get<TensorBlob>(dense.at("W").value);
    const TensorBlob& w0 = base.at("W");
    if (!d.same_shape(w0))
        throw shape_error("harness: delta shape does not match base");
    return blob_matrix(w0) + blob_matrix(d);
}

/// Held-out slice is the last fifth of the samples; the fit uses the rest.
inline std::size_t holdout_count(const SyntheticTask& task) {
    return task.dataset.size() / 5;
}

} // namespace detail

/// Generates the base parameters, reference tasks and target tasks for one
/// seeded world. The representation map and the latent-to-parameter map both
/// have orthonormal columns, so latent distances carry through to both
/// spaces unchanged under the linear map spec.
inline World generate_world(const GeneratorConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int L = config.latent_dim;
    const int m = config.param_rows;
    const int n = config.param_cols;
    const int p = m * n;

    World world;
    world.base.add("W", detail::matrix_blob(detail::gaussian_matrix(rng, m, n)));
    const Eigen::MatrixXd rep_map = detail::random_orthonormal(rng, config.representation_dim, L);
    const Eigen::MatrixXd param_map = detail::random_orthonormal(rng, p, L);
    const Eigen::MatrixXd bend_map = detail::random_orthonormal(rng, p, L);

    std::vector<Eigen::VectorXd> latents;
    latents.reserve(config.num_references);
    for (int i = 0; i < config.num_references; ++i) {
        Eigen::VectorXd u(L);
        for (int d = 0; d < L; ++d)
            u(d) = normal(rng);
        latents.push_back(u);
    }

    // Unit direction orthogonal to the references' affine hull, for targets
    // that step outside it.
    Eigen::VectorXd off_hull = Eigen::VectorXd::Zero(L);
    {
        Eigen::VectorXd probe(L);
        for (int d = 0; d < L; ++d)
            probe(d) = normal(rng);
        Eigen::MatrixXd span(L, config.num_references - 1);
        for (int i = 1; i < config.num_references; ++i)
            span.col(i - 1) = latents[static_cast<std::size_t>(i)] - latents[0];
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(span);
        const Eigen::MatrixXd q =
            qr.householderQ() * Eigen::MatrixXd::Identity(L, std::min<int>(L, span.cols()));
        Eigen::VectorXd residual = probe - q * (q.transpose() * probe);
        residual -= q * (q.transpose() * residual);
        if (residual.norm() > 1e-8)
            off_hull = residual.normalized();
    }

    const auto delta_for_latent = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd flat = param_map * u;
        if (config.map_spec == MapSpec::mildly_nonlinear) {
            const Eigen::VectorXd bent = bend_map * u;
            for (int e = 0; e < p; ++e)
                flat(e) += config.nonlinearity * std::tanh(bent(e));
        }
        AdapterDelta delta;
        delta.add_dense("W", TensorBlob({static_cast<std::size_t>(m), static_cast<std::size_t>(n)},
                                        std::vector<double>(flat.data(), flat.data() + p)));
        return delta;
    };

    const auto make_task = [&](const std::string& id, const Eigen::VectorXd& u,
                               std::uint64_t salt) {
        SyntheticTask task;
        task.task_id = id;
        task.noise_sigma = config.noise_sigma;
        task.seed = detail::mix_seed(config.seed, salt);
        std::mt19937_64 task_rng(task.seed);
        std::normal_distribution<double> task_normal(0.0, 1.0);

        Eigen::VectorXd z = rep_map * u;
        if (config.representation_noise > 0.0)
            for (int d = 0; d < config.representation_dim; ++d)
                z(d) += config.representation_noise * task_normal(task_rng);
        task.representation = detail::to_representation(z);
        task.true_delta = delta_for_latent(u);

        const Eigen::MatrixXd W =
            detail::blob_matrix(world.base.at("W")) +
            detail::blob_matrix(std::get<TensorBlob>(task.true_delta.at("W").value));
        task.dataset.reserve(config.samples_per_task);
        for (int s = 0; s < config.samples_per_task; ++s) {
            Eigen::VectorXd x(n);
            for (int d = 0; d < n; ++d)
                x(d) = task_normal(task_rng);
            Eigen::VectorXd y = W * x;
            if (config.noise_sigma > 0.0)
                for (int d = 0; d < m; ++d)
                    y(d) += config.noise_sigma * task_normal(task_rng);
            task.dataset.emplace_back(std::vector<double>(x.data(), x.data() + n),
                                      std::vector<double>(y.data(), y.data() + m));
        }
        return task;
    };

    for (int i = 0; i < config.num_references; ++i) {
        std::ostringstream id;
        id << "ref" << i;
        world.references.push_back(
            make_task(id.str(), latents[static_cast<std::size_t>(i)], 1000 + i));
    }
    for (std::size_t t = 0; t < config.targets.size(); ++t) {
        const TargetSpec& spec = config.targets[t];
        if (spec.hull_offset != 0.0 && off_hull.isZero())
            throw config_error("GeneratorConfig: hull_offset requires latent room outside the "
                               "references' affine hull");
        Eigen::VectorXd u = Eigen::VectorXd::Zero(L);
        for (int i = 0; i < config.num_references; ++i)
            u += spec.mixture[static_cast<std::size_t>(i)] * latents[static_cast<std::size_t>(i)];
        u += spec.hull_offset * off_hull;
        std::ostringstream id;
        id << "trg" << t;
        world.targets.push_back(make_task(id.str(), u, 2000 + t));
    }
    return world;
}

struct FitInfo {
    bool rank_deficient = false;
    double train_residual = 0.0;
};

/// Closed-form least-squares fit of the delta on the task's training split.
/// A rank-deficient design falls back to the minimum-norm solution and is
/// flagged through `info`.
inline AdapterDelta fit_sft(const BaseParameters& base, const SyntheticTask& task,
                            FitInfo* info = nullptr) {
    const std::size_t holdout = detail::holdout_count(task);
    const std::size_t train = task.dataset.size() - holdout;
    if (train == 0)
        throw domain_error("fit_sft: no training samples");
    const Eigen::MatrixXd w0 = detail::blob_matrix(base.at("W"));
    const Eigen::Index m = w0.rows();
    const Eigen::Index n = w0.cols();

    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(train));
    Eigen::MatrixXd Y(m, static_cast<Eigen::Index>(train));
    for (std::size_t s = 0; s < train; ++s) {
        const auto& [x, y] = task.dataset[s];
        if (static_cast<Eigen::Index>(x.size()) != n || static_cast<Eigen::Index>(y.size()) != m)
            throw shape_error("fit_sft: sample dimensions do not match base parameters");
        for (Eigen::Index d = 0; d < n; ++d)
            X(d, static_cast<Eigen::Index>(s)) = x[static_cast<std::size_t>(d)];
        for (Eigen::Index d = 0; d < m; ++d)
            Y(d, static_cast<Eigen::Index>(s)) = y[static_cast<std::size_t>(d)];
    }

    const Eigen::MatrixXd T = Y - w0 * X; // residual targets for the delta
    const Eigen::MatrixXd gram = X * X.transpose();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
    const Eigen::MatrixXd delta_t = cod.solve(X * T.transpose());
    const Eigen::MatrixXd delta = delta_t.transpose();

    if (info) {
        info->rank_deficient = cod.rank() < n;
        info->train_residual = (T - delta * X).norm();
    }
    AdapterDelta out;
    out.add_dense("W", detail::matrix_blob(delta));
    return out;
}

/// Mean squared prediction error of (base + delta) on the task's held-out
/// slice, averaged over samples and output coordinates.
inline double evaluate(const BaseParameters& base, const AdapterDelta& delta,
                       const SyntheticTask& task) {
    const std::size_t holdout = detail::holdout_count(task);
    if (holdout == 0)
        throw domain_error("evaluate: task has no held-out samples");
    const Eigen::MatrixXd W = detail::model_matrix(base, delta);
    const std::size_t start = task.dataset.size() - holdout;
    double total = 0.0;
    for (std::size_t s = start; s < task.dataset.size(); ++s) {
        const auto& [x, y] = task.dataset[s];
        Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), W.cols());
        const Eigen::VectorXd pred = W * xv;
        for (Eigen::Index d = 0; d < W.rows(); ++d) {
            const double e = y[static_cast<std::size_t>(d)] - pred(d);
            total += e * e;
        }
    }
    return total / (static_cast<double>(holdout) * static_cast<double>(W.rows()));
}

/// Spearman rank correlation with fractional (mid) ranks for ties. NaN when
/// either input has no rank variation.
inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw shape_error("spearman_rho: length mismatch");
    if (a.size() < 2)
        throw domain_error("spearman_rho: need at least two observations");
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            std::size_t less = 0, equal = 0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                if (v[j] < v[i])
                    ++less;
                else if (v[j] == v[i])
                    ++equal;
            }
            r[i] = static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1) + 1.0;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a);
    const std::vector<double> rb = ranks(b);
    const double inv_n = 1.0 / static_cast<double>(a.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        mean_a += ra[i] * inv_n;
        mean_b += rb[i] * inv_n;
    }
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    return cov / std::sqrt(var_a * var_b);
}

struct ExperimentRow {
    std::string task_id;
    WeightMethod method = WeightMethod::average;
    double loss = 0.0;
    std::vector<std::string> weight_ids;
    std::vector<double> weights;
};

struct MethodSummary {
    double mean_loss = 0.0;
    double loss_variance = 0.0; // population variance across targets
    std::optional<double> win_rate_vs_average;
};

struct ExperimentReport {
    std::uint64_t seed = 0;
    std::vector<ExperimentRow> rows; // full target x method grid, target-major
    std::map<std::string, MethodSummary> per_method;
    std::map<std::string, double> spearman_per_task;
    double mean_spearman = 0.0;
};

struct ExperimentOptions {
    /// Mirrors the SFT-improvement setup: each target's own fitted adapter
    /// joins the registry, visible only to that target's runs.
    bool include_target_sft = false;
    SolverConfig solver;
};

/// Runs the full retrieval + weighting + merge pipeline for every target and
/// method over a registry built from the references' fitted adapters.
/// Also ranks each target's references by representation similarity and by
/// individual transfer loss and reports the rank correlation between the two.
inline ExperimentReport run_experiment(const GeneratorConfig& config,
                                       const std::vector<WeightMethod>& methods,
                                       const ExperimentOptions& options = {}) {
    if (methods.empty())
        throw config_error("run_experiment: need at least one method");
    const World world = generate_world(config);

    Registry registry = Registry::in_memory();
    std::vector<AdapterDelta> ref_adapters;
    ref_adapters.reserve(world.references.size());
    for (const SyntheticTask& ref : world.references) {
        AdapterDelta fitted = fit_sft(world.base, ref);
        ref_adapters.push_back(fitted);
        registry.add_entry({ref.task_id, ref.representation, std::move(fitted), {}});
    }
    std::vector<std::string> sft_ids;
    if (options.include_target_sft) {
        for (const SyntheticTask& trg : world.targets) {
            const std::string id = "sft:" + trg.task_id;
            registry.add_entry({id, trg.representation, fit_sft(world.base, trg), {}});
            sft_ids.push_back(id);
        }
    }

    ExperimentReport report;
    report.seed = config.seed;
    const bool has_average =
        std::find(methods.begin(), methods.end(), WeightMethod::average) != methods.end();
    std::map<std::string, std::vector<double>> losses_by_method;
    std::map<std::string, std::vector<double>> average_losses_by_task;

    double rho_sum = 0.0;
    for (std::size_t t = 0; t < world.targets.size(); ++t) {
        const SyntheticTask& target = world.targets[t];

        std::vector<double> similarity_scores, accuracy_scores;
        for (std::size_t i = 0; i < world.references.size(); ++i) {
            similarity_scores.push_back(
                -squared_distance(world.references[i].representation, target.representation));
            accuracy_scores.push_back(-evaluate(world.base, ref_adapters[i], target));
        }
        const double rho = spearman_rho(similarity_scores, accuracy_scores);
        report.spearman_per_task[target.task_id] = rho;
        rho_sum += rho;

        std::set<std::string> exclude;
        for (const std::string& id : sft_ids)
            if (id != "sft:" + target.task_id)
                exclude.insert(id);

        for (WeightMethod method : methods) {
            const PipelineResult pipe =
                run_pipeline(registry, target.representation, method, options.solver, exclude);
            ExperimentRow row;
            row.task_id = target.task_id;
            row.method = method;
            row.loss = evaluate(world.base, pipe.delta, target);
            row.weight_ids = pipe.retrieval.ids();
            row.weights = pipe.weights.weights;
            losses_by_method[to_string(method)].push_back(row.loss);
            if (method == WeightMethod::average)
                average_losses_by_task[row.task_id].push_back(row.loss);
            report.rows.push_back(std::move(row));
        }
    }
    report.mean_spearman = rho_sum / static_cast<double>(world.targets.size());

    for (const auto& [name, losses] : losses_by_method) {
        MethodSummary summary;
        for (double l : losses)
            summary.mean_loss += l;
        summary.mean_loss /= static_cast<double>(losses.size());
        for (double l : losses) {
            const double d = l - summary.mean_loss;
            summary.loss_variance += d * d;
        }
        summary.loss_variance /= static_cast<double>(losses.size());
        report.per_method[name] = summary;
    }
    if (has_average) {
        for (auto& [name, summary] : report.per_method) {
            std::size_t wins = 0, total = 0;
            for (const ExperimentRow& row : report.rows) {
                if (to_string(row.method) != name)
                    continue;
                const double avg_loss = average_losses_by_task.at(row.task_id).front();
                wins += row.loss < avg_loss ? 1 : 0;
                ++total;
            }
            summary.win_rate_vs_average = static_cast<double>(wins) / static_cast<double>(total);
        }
    }
    return report;
}

// --- serialization ---------------------------------------------------------

inline nlohmann::json to_json(const ExperimentReport& report) {
    nlohmann::json j;
    j["seed"] = report.seed;
    j["rows"] = nlohmann::json::array();
    for (const ExperimentRow& row : report.rows) {
        j["rows"].push_back({{"task_id", row.task_id},
                             {"method", to_string(row.method)},
                             {"loss", row.loss},
                             {"weight_ids", row.weight_ids},
                             {"weights", row.weights}});
    }
    j["summary"]["per_method"] = nlohmann::json::object();
    for (const auto& [name, s] : report.per_method) {
        nlohmann::json entry = {{"mean_loss", s.mean_loss}, {"loss_variance", s.loss_variance}};
        entry["win_rate_vs_average"] = s.win_rate_vs_average
                                           ? nlohmann::json(*s.win_rate_vs_average)
                                           : nlohmann::json(nullptr);
        j["summary"]["per_method"][name] = entry;
    }
    j["summary"]["spearman"] = {{"per_task", report.spearman_per_task},
                                {"mean_rho", report.mean_spearman}};
    return j;
}

inline std::string to_csv(const ExperimentReport& report) {
    std::ostringstream os;
    os << "task_id,method,loss,weights\n";
    for (const ExperimentRow& row : report.rows) {
        os << row.task_id << ',' << to_string(row.method) << ',' << row.loss << ',';
        for (std::size_t i = 0; i < row.weights.size(); ++i)
            os << (i ? ";" : "") << row.weights[i];
        os << '\n';
    }
    return os.str();
}

inline std::string to_table(const ExperimentReport& report) {
    std::ostringstream os;
    os << std::left;
    os << std::setw(10) << "task" << std::setw(12) << "method" << std::setw(16) << "loss"
       << "weights\n";
    for (const ExperimentRow& row : report.rows) {
        std::ostringstream ws;
        ws << std::setprecision(4);
        for (std::size_t i = 0; i < row.weights.size(); ++i)
            ws << (i ? " " : "") << row.weights[i];
        os << std::setw(10) << row.task_id << std::setw(12) << to_string(row.method)
           << std::setw(16) << std::setprecision(6) << row.loss << ws.str() << '\n';
    }
    os << "\nmean spearman rho: " << report.mean_spearman << '\n';
    for (const auto& [name, s] : report.per_method) {
        os << std::setw(12) << name << " mean loss " << s.mean_loss << "  variance "
           << s.loss_variance;
        if (s.win_rate_vs_average)
            os << "  win rate vs average " << *s.win_rate_vs_average;
        os << '\n';
    }
    return os.str();
}

inline TargetSpec target_spec_from_json(const nlohmann::json& j) {
    TargetSpec spec;
    try {
        spec.mixture = j.at("mixture").get<std::vector<double>>();
        spec.hull_offset = j.value("hull_offset", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("target spec: ") + e.what());
    }
    return spec;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig config;
    try {
        config.latent_dim = j.value("latent_dim", config.latent_dim);
        config.representation_dim = j.value("representation_dim", config.representation_dim);
        config.param_rows = j.value("param_rows", config.param_rows);
        config.param_cols = j.value("param_cols", config.param_cols);
        config.num_references = j.value("num_references", config.num_references);
        config.samples_per_task = j.value("samples_per_task", config.samples_per_task);
        config.noise_sigma = j.value("noise_sigma", config.noise_sigma);
        config.representation_noise =
            j.value("representation_noise", config.representation_noise);
        if (j.contains("map_spec"))
            config.map_spec = parse_map_spec(j.at("map_spec").get<std::string>());
        config.nonlinearity = j.value("nonlinearity", config.nonlinearity);
        config.seed = j.value("seed", config.seed);
        for (const auto& t : j.at("targets"))
            config.targets.push_back(target_spec_from_json(t));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("generator config: ") + e.what());
    }
    config.validate();
    return config;
}

} // namespace rpe
