// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rpe/harness.hpp"

using rpe::GeneratorConfig;
using rpe::SyntheticTask;
using rpe::TargetSpec;
using rpe::WeightMethod;
using rpe::World;

namespace {

GeneratorConfig base_config() {
    GeneratorConfig config;
    config.latent_dim = 4;
    config.representation_dim = 12;
    config.param_rows = 5;
    config.param_cols = 4;
    config.num_references = 3;
    config.samples_per_task = 100;
    config.noise_sigma = 0.0;
    config.targets = {{{0.5, 0.3, 0.2}, 0.0}};
    config.seed = 7;
    return config;
}

const std::vector<double>& delta_values(const rpe::AdapterDelta& d) {
    return std::get<rpe::TensorBlob>(d.at("W").value).data();
}

oracle::Mat dataset_inputs(const SyntheticTask& task, std::size_t lo, std::size_t hi) {
    oracle::Mat xs;
    for (std::size_t i = lo; i < hi; ++i)
        xs.push_back(task.dataset[i].first);
    return xs;
}

oracle::Mat dataset_outputs(const SyntheticTask& task, std::size_t lo, std::size_t hi) {
    oracle::Mat ys;
    for (std::size_t i = lo; i < hi; ++i)
        ys.push_back(task.dataset[i].second);
    return ys;
}

} // namespace

TEST_CASE("generator config validation") {
    GeneratorConfig config = base_config();
    config.num_references = 1;
    CHECK_THROWS_AS(config.validate(), rpe::config_error);
    config = base_config();
    config.targets[0].mixture = {0.5, 0.5};
    CHECK_THROWS_AS(config.validate(), rpe::config_error);
    config = base_config();
    config.targets[0].mixture = {0.5, 0.3, 0.1};
    CHECK_THROWS_AS(config.validate(), rpe::config_error);
    config = base_config();
    config.representation_dim = 2;
    CHECK_THROWS_AS(config.validate(), rpe::config_error);
    config = base_config();
    config.targets.clear();
    CHECK_THROWS_AS(config.validate(), rpe::config_error);
}

TEST_CASE("same seed regenerates a bit-identical world") {
    const GeneratorConfig config = base_config();
    const World a = rpe::generate_world(config);
    const World b = rpe::generate_world(config);
    REQUIRE(a.references.size() == b.references.size());
    CHECK(a.base.at("W").data() == b.base.at("W").data());
    for (std::size_t i = 0; i < a.references.size(); ++i) {
        CHECK(a.references[i].representation.values() ==
              b.references[i].representation.values());
        CHECK(delta_values(a.references[i].true_delta) ==
              delta_values(b.references[i].true_delta));
        CHECK(a.references[i].dataset == b.references[i].dataset);
        CHECK(a.references[i].seed == b.references[i].seed);
    }
    CHECK(a.targets[0].dataset == b.targets[0].dataset);
}

TEST_CASE("even two-reference mixture averages the reference deltas") {
    GeneratorConfig config = base_config();
    config.num_references = 2;
    config.targets = {{{0.5, 0.5}, 0.0}};
    const World world = rpe::generate_world(config);
    const auto& d0 = delta_values(world.references[0].true_delta);
    const auto& d1 = delta_values(world.references[1].true_delta);
    const auto& dt = delta_values(world.targets[0].true_delta);
    for (std::size_t e = 0; e < dt.size(); ++e)
        CHECK(dt[e] == Catch::Approx(0.5 * d0[e] + 0.5 * d1[e]).margin(1e-12));
}

TEST_CASE("degenerate mixture reproduces the reference task") {
    GeneratorConfig config = base_config();
    config.targets = {{{1.0, 0.0, 0.0}, 0.0}};
    const World world = rpe::generate_world(config);
    CHECK(world.targets[0].representation.values() ==
          world.references[0].representation.values());
    CHECK(delta_values(world.targets[0].true_delta) ==
          delta_values(world.references[0].true_delta));
    // Dataset noise draws differ (different task seed), the model does not.
    CHECK(world.targets[0].seed != world.references[0].seed);
}

TEST_CASE("fit_sft recovers the true delta from noiseless data") {
    const World world = rpe::generate_world(base_config());
    for (const SyntheticTask& task : world.references) {
        const rpe::AdapterDelta fitted = rpe::fit_sft(world.base, task);
        const auto& got = delta_values(fitted);
        const auto& want = delta_values(task.true_delta);
        for (std::size_t e = 0; e < want.size(); ++e)
            CHECK(got[e] == Catch::Approx(want[e]).margin(1e-8));
    }
}

TEST_CASE("fit_sft on the base model's own data returns a near-zero delta") {
    GeneratorConfig config = base_config();
    config.noise_sigma = 0.01;
    World world = rpe::generate_world(config);
    SyntheticTask null_task = world.references[0];
    // Rebuild outputs as base prediction plus the original noise component.
    const auto& w0 = world.base.at("W");
    const auto& true_d = delta_values(null_task.true_delta);
    for (auto& [x, y] : null_task.dataset)
        for (std::size_t r = 0; r < w0.shape()[0]; ++r) {
            double signal = 0.0;
            for (std::size_t c = 0; c < w0.shape()[1]; ++c)
                signal += true_d[r * w0.shape()[1] + c] * x[c];
            y[r] -= signal;
        }
    const rpe::AdapterDelta fitted = rpe::fit_sft(world.base, null_task);
    for (double v : delta_values(fitted))
        CHECK(std::abs(v) < 0.05); // bounded by the noise level
}

TEST_CASE("fit_sft matches the normal-equations oracle on noisy data") {
    GeneratorConfig config = base_config();
    config.noise_sigma = 0.1;
    config.samples_per_task = 500;
    const World world = rpe::generate_world(config);
    const SyntheticTask& task = world.references[0];

    const rpe::AdapterDelta fitted = rpe::fit_sft(world.base, task);
    const double loss = rpe::evaluate(world.base, fitted, task);

    const std::size_t train = task.dataset.size() - task.dataset.size() / 5;
    const std::size_t m = 5, n = 4;
    const oracle::Vec w0 = world.base.at("W").data();
    const oracle::Vec oracle_delta = oracle::normal_equations_delta(
        dataset_inputs(task, 0, train), dataset_outputs(task, 0, train), w0, m, n);
    oracle::Vec full(m * n);
    for (std::size_t e = 0; e < full.size(); ++e)
        full[e] = w0[e] + oracle_delta[e];
    const double oracle_loss = oracle::mse(dataset_inputs(task, train, task.dataset.size()),
                                           dataset_outputs(task, train, task.dataset.size()),
                                           full, m, n);
    CHECK(loss == Catch::Approx(oracle_loss).margin(1e-6));
}

TEST_CASE("fit_sft flags rank-deficient designs") {
    GeneratorConfig config = base_config();
    const World world = rpe::generate_world(config);
    SyntheticTask degenerate = world.references[0];
    // Collapse every input onto one direction.
    for (auto& [x, y] : degenerate.dataset) {
        for (std::size_t c = 1; c < x.size(); ++c)
            x[c] = 0.0;
        (void)y;
    }
    rpe::FitInfo info;
    (void)rpe::fit_sft(world.base, degenerate, &info);
    CHECK(info.rank_deficient);
}

TEST_CASE("evaluate agrees with the MSE loop oracle") {
    GeneratorConfig config = base_config();
    config.noise_sigma = 0.05;
    const World world = rpe::generate_world(config);
    const SyntheticTask& task = world.targets[0];

    SECTION("true delta on noiseless data scores zero") {
        const World clean = rpe::generate_world(base_config());
        CHECK(rpe::evaluate(clean.base, clean.targets[0].true_delta, clean.targets[0]) ==
              Catch::Approx(0.0).margin(1e-20));
    }
    SECTION("zero delta never beats the true delta on noiseless data") {
        const World clean = rpe::generate_world(base_config());
        rpe::AdapterDelta zero;
        zero.add_dense("W", rpe::TensorBlob::zeros({5, 4}));
        CHECK(rpe::evaluate(clean.base, zero, clean.targets[0]) >=
              rpe::evaluate(clean.base, clean.targets[0].true_delta, clean.targets[0]));
    }
    SECTION("random delta matches the hand-rolled loop") {
        std::mt19937_64 rng(404);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> payload(20);
        for (double& v : payload)
            v = normal(rng);
        rpe::AdapterDelta d;
        d.add_dense("W", rpe::TensorBlob({5, 4}, payload));
        const double got = rpe::evaluate(world.base, d, task);

        oracle::Vec full(20);
        const auto& w0 = world.base.at("W").data();
        for (std::size_t e = 0; e < 20; ++e)
            full[e] = w0[e] + payload[e];
        const std::size_t holdout = task.dataset.size() / 5;
        const std::size_t start = task.dataset.size() - holdout;
        const double want = oracle::mse(dataset_inputs(task, start, task.dataset.size()),
                                        dataset_outputs(task, start, task.dataset.size()),
                                        full, 5, 4);
        CHECK(got == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("spearman_rho matches the sort-based oracle") {
    std::mt19937_64 rng(411);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::size_t n = 3 + static_cast<std::size_t>(trial % 10);
        oracle::Vec a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = value(rng);
            b[i] = value(rng);
        }
        if (trial % 4 == 0) {
            a[1] = a[0]; // exercise ties
            b[2] = b[0];
        }
        CHECK(rpe::spearman_rho(a, b) == Catch::Approx(oracle::spearman(a, b)).margin(1e-12));
    }
    CHECK(rpe::spearman_rho({1, 2, 3}, {10, 20, 30}) == Catch::Approx(1.0));
    CHECK(rpe::spearman_rho({1, 2, 3}, {5, -1, -7}) == Catch::Approx(-1.0));
    CHECK_THROWS_AS(rpe::spearman_rho({1, 2}, {1}), rpe::shape_error);
    CHECK_THROWS_AS(rpe::spearman_rho({1}, {1}), rpe::domain_error);
}

TEST_CASE("symmetric two-reference world: average equals similarity") {
    GeneratorConfig config = base_config();
    config.num_references = 2;
    config.targets = {{{0.5, 0.5}, 0.0}};
    config.noise_sigma = 0.02;
    const auto report = rpe::run_experiment(
        config, {WeightMethod::average, WeightMethod::similarity});
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].loss == Catch::Approx(report.rows[1].loss).margin(1e-9));
}

TEST_CASE("noiseless affine-hull targets are exactly recovered by linear weights") {
    GeneratorConfig config = base_config();
    config.targets = {{{0.6, 0.3, 0.1}, 0.0}, {{0.2, 0.2, 0.6}, 0.0}};
    const auto report = rpe::run_experiment(config, {WeightMethod::linear});
    for (const auto& row : report.rows)
        CHECK(row.loss <= 1e-8);
}

TEST_CASE("run_experiment is deterministic") {
    GeneratorConfig config = base_config();
    config.noise_sigma = 0.05;
    const std::vector<WeightMethod> methods{WeightMethod::average, WeightMethod::similarity,
                                            WeightMethod::linear, WeightMethod::linear_l1,
                                            WeightMethod::top1};
    const auto a = rpe::run_experiment(config, methods);
    const auto b = rpe::run_experiment(config, methods);
    CHECK(rpe::to_json(a).dump() == rpe::to_json(b).dump());
    CHECK(rpe::to_csv(a) == rpe::to_csv(b));
}

TEST_CASE("report grid covers every requested task and method") {
    GeneratorConfig config = base_config();
    config.targets = {{{0.5, 0.3, 0.2}, 0.0}, {{0.1, 0.8, 0.1}, 0.0}};
    const std::vector<WeightMethod> methods{WeightMethod::average, WeightMethod::linear};
    const auto report = rpe::run_experiment(config, methods);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[0].task_id == "trg0");
    CHECK(report.rows[1].task_id == "trg0");
    CHECK(report.rows[2].task_id == "trg1");
    CHECK(rpe::to_string(report.rows[0].method) == std::string("average"));
    CHECK(rpe::to_string(report.rows[1].method) == std::string("linear"));
    CHECK(report.per_method.count("average") == 1);
    CHECK(report.per_method.at("linear").win_rate_vs_average.has_value());
    CHECK(report.spearman_per_task.size() == 2);
}

TEST_CASE("reported spearman agrees with the standalone oracle") {
    for (std::uint64_t seed : {7ULL, 8ULL, 9ULL}) {
        GeneratorConfig config = base_config();
        config.noise_sigma = 0.05;
        config.num_references = 5;
        config.targets = {{{0.4, 0.3, 0.1, 0.1, 0.1}, 0.0}};
        config.seed = seed;
        const auto report = rpe::run_experiment(config, {WeightMethod::average});

        const World world = rpe::generate_world(config);
        oracle::Vec sim, acc;
        for (const SyntheticTask& ref : world.references) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < ref.representation.dim(); ++i) {
                const double d =
                    ref.representation[i] - world.targets[0].representation[i];
                d2 += d * d;
            }
            sim.push_back(-d2);
            acc.push_back(-rpe::evaluate(world.base, rpe::fit_sft(world.base, ref),
                                         world.targets[0]));
        }
        CHECK(report.spearman_per_task.at("trg0") ==
              Catch::Approx(oracle::spearman(sim, acc)).margin(1e-12));
    }
}

TEST_CASE("self-inclusion dominance") {
    GeneratorConfig config = base_config();
    config.latent_dim = 6;
    config.representation_dim = 12;
    // Target sits outside the references' affine hull.
    config.targets = {{{0.5, 0.3, 0.2}, 1.0}};
    rpe::ExperimentOptions options;
    options.include_target_sft = true;
    const auto report = rpe::run_experiment(config, {WeightMethod::linear}, options);
    REQUIRE(report.rows.size() == 1);
    const auto& row = report.rows[0];

    double self_weight = 0.0;
    for (std::size_t i = 0; i < row.weight_ids.size(); ++i)
        if (row.weight_ids[i] == "sft:trg0")
            self_weight = row.weights[i];
    CHECK(self_weight >= 0.99);

    const World world = rpe::generate_world(config);
    const double sft_loss = rpe::evaluate(
        world.base, rpe::fit_sft(world.base, world.targets[0]), world.targets[0]);
    CHECK(row.loss <= sft_loss + 1e-8);
}

TEST_CASE("loss never improves as the target leaves the reference hull") {
    GeneratorConfig config = base_config();
    config.latent_dim = 6;
    config.targets = {{{0.5, 0.3, 0.2}, 0.0},
                      {{0.5, 0.3, 0.2}, 0.5},
                      {{0.5, 0.3, 0.2}, 1.0},
                      {{0.5, 0.3, 0.2}, 1.5},
                      {{0.5, 0.3, 0.2}, 2.0}};
    const auto report = rpe::run_experiment(config, {WeightMethod::linear});
    REQUIRE(report.rows.size() == 5);
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        CHECK(report.rows[i].loss >= report.rows[i - 1].loss - 1e-12);
}

TEST_CASE("config JSON round trip") {
    const nlohmann::json j = {
        {"latent_dim", 5},
        {"representation_dim", 9},
        {"param_rows", 3},
        {"param_cols", 3},
        {"num_references", 4},
        {"samples_per_task", 50},
        {"noise_sigma", 0.1},
        {"map_spec", "mildly_nonlinear"},
        {"nonlinearity", 0.2},
        {"seed", 99},
        {"targets", nlohmann::json::array(
                        {{{"mixture", {0.25, 0.25, 0.25, 0.25}}, {"hull_offset", 0.5}}})},
    };
    const GeneratorConfig config = rpe::generator_config_from_json(j);
    CHECK(config.latent_dim == 5);
    CHECK(config.map_spec == rpe::MapSpec::mildly_nonlinear);
    CHECK(config.targets[0].hull_offset == 0.5);
    CHECK(config.seed == 99);

    nlohmann::json bad = j;
    bad["targets"][0]["mixture"] = {0.5, 0.5};
    CHECK_THROWS_AS(rpe::generator_config_from_json(bad), rpe::config_error);
    nlohmann::json missing = j;
    missing.erase("targets");
    CHECK_THROWS_AS(rpe::generator_config_from_json(missing), rpe::config_error);
}

TEST_CASE("mildly nonlinear worlds stay close to their linear skeleton") {
    GeneratorConfig config = base_config();
    config.map_spec = rpe::MapSpec::mildly_nonlinear;
    config.nonlinearity = 0.05;
    const World world = rpe::generate_world(config);
    // Exact recovery no longer holds, but the fit is still identifiable.
    for (const SyntheticTask& ref : world.references) {
        const rpe::AdapterDelta fitted = rpe::fit_sft(world.base, ref);
        const auto& got = delta_values(fitted);
        const auto& want = delta_values(ref.true_delta);
        for (std::size_t e = 0; e < want.size(); ++e)
            CHECK(got[e] == Catch::Approx(want[e]).margin(1e-8));
    }
}
