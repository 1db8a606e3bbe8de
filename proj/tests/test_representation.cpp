// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "rpe/representation.hpp"

using rpe::FeatureSet;
using rpe::mean_pool;
using rpe::set_distance;
using rpe::SetDistanceMetric;

namespace {

std::vector<std::vector<double>> random_items(std::mt19937_64& rng, std::size_t count,
                                              std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 2.0);
    std::vector<std::vector<double>> items(count, std::vector<double>(dim));
    for (auto& item : items)
        for (double& v : item)
            v = normal(rng);
    return items;
}

} // namespace

TEST_CASE("FeatureSet enforces its invariants") {
    CHECK_THROWS_AS(FeatureSet({}, "x"), rpe::domain_error);
    CHECK_THROWS_AS(FeatureSet({{1.0, 2.0}, {3.0}}, "x"), rpe::shape_error);
    CHECK_THROWS_AS(FeatureSet({{std::nan("")}}, "x"), rpe::domain_error);
    const FeatureSet ok({{1.0, 2.0}}, "x");
    CHECK(ok.dim() == 2);
    CHECK(ok.source_id() == "x");
}

TEST_CASE("mean_pool basics") {
    SECTION("single item is returned exactly") {
        const FeatureSet f({{1.5, -2.25, 3.0}}, "one");
        CHECK(mean_pool(f).values() == std::vector<double>{1.5, -2.25, 3.0});
    }
    SECTION("symmetric pair") {
        const FeatureSet f({{1.0, 0.0}, {0.0, 1.0}}, "pair");
        CHECK(mean_pool(f).values() == std::vector<double>{0.5, 0.5});
    }
}

TEST_CASE("mean_pool matches the two-pass mean oracle") {
    std::mt19937_64 rng(101);
    const auto items = random_items(rng, 100, 16);
    const FeatureSet f(items, "rand");
    const auto pooled = mean_pool(f);
    for (std::size_t d = 0; d < 16; ++d) {
        oracle::Vec column(items.size());
        for (std::size_t j = 0; j < items.size(); ++j)
            column[j] = items[j][d];
        CHECK(pooled[d] == Catch::Approx(oracle::two_pass_mean(column)).margin(1e-12));
    }
}

TEST_CASE("mean_pool is translation equivariant and order invariant") {
    std::mt19937_64 rng(103);
    auto items = random_items(rng, 40, 8);
    const FeatureSet f(items, "a");
    const auto base = mean_pool(f);

    std::vector<double> shift{1.0, -2.0, 0.5, 3.0, -0.25, 2.0, -1.0, 0.125};
    auto shifted = items;
    for (auto& item : shifted)
        for (std::size_t d = 0; d < item.size(); ++d)
            item[d] += shift[d];
    const auto pooled_shifted = mean_pool(FeatureSet(shifted, "a+c"));
    for (std::size_t d = 0; d < 8; ++d)
        CHECK(pooled_shifted[d] == Catch::Approx(base[d] + shift[d]).margin(1e-12));

    std::shuffle(items.begin(), items.end(), rng);
    const auto pooled_shuffled = mean_pool(FeatureSet(items, "perm"));
    for (std::size_t d = 0; d < 8; ++d)
        CHECK(pooled_shuffled[d] == Catch::Approx(base[d]).margin(1e-12));
}

TEST_CASE("set_distance on identical and singleton sets") {
    std::mt19937_64 rng(107);
    const FeatureSet a(random_items(rng, 6, 3), "a");
    for (auto metric : {SetDistanceMetric::chamfer, SetDistanceMetric::nearest_neighbor,
                        SetDistanceMetric::mean})
        CHECK(set_distance(a, a, metric) == Catch::Approx(0.0).margin(1e-12));

    const FeatureSet p({{0.0, 0.0}}, "p");
    const FeatureSet q({{3.0, 4.0}}, "q");
    CHECK(set_distance(p, q, SetDistanceMetric::chamfer) == Catch::Approx(10.0));
    CHECK(set_distance(p, q, SetDistanceMetric::nearest_neighbor) == Catch::Approx(5.0));
    CHECK(set_distance(p, q, SetDistanceMetric::mean) == Catch::Approx(5.0));
}

TEST_CASE("set_distance matches the exhaustive double-loop oracle") {
    std::mt19937_64 rng(109);
    const auto ia = random_items(rng, 20, 5);
    const auto ib = random_items(rng, 20, 5);
    const FeatureSet a(ia, "a"), b(ib, "b");
    CHECK(set_distance(a, b, SetDistanceMetric::chamfer) ==
          Catch::Approx(oracle::chamfer(ia, ib)).margin(1e-12));
    CHECK(set_distance(a, b, SetDistanceMetric::nearest_neighbor) ==
          Catch::Approx(oracle::nearest_neighbor(ia, ib)).margin(1e-12));
    CHECK(set_distance(a, b, SetDistanceMetric::mean) ==
          Catch::Approx(oracle::mean_distance(ia, ib)).margin(1e-12));
}

TEST_CASE("set_distance symmetry and singleton relations") {
    std::mt19937_64 rng(113);
    for (int trial = 0; trial < 10; ++trial) {
        const FeatureSet a(random_items(rng, 7, 4), "a");
        const FeatureSet b(random_items(rng, 9, 4), "b");
        for (auto metric : {SetDistanceMetric::chamfer, SetDistanceMetric::nearest_neighbor,
                            SetDistanceMetric::mean})
            CHECK(set_distance(a, b, metric) ==
                  Catch::Approx(set_distance(b, a, metric)).margin(1e-12));
    }
    const FeatureSet s1(random_items(rng, 1, 4), "s1");
    const FeatureSet s2(random_items(rng, 1, 4), "s2");
    const double nn = set_distance(s1, s2, SetDistanceMetric::nearest_neighbor);
    CHECK(set_distance(s1, s2, SetDistanceMetric::chamfer) == Catch::Approx(2.0 * nn));
    CHECK(set_distance(s1, s2, SetDistanceMetric::mean) == Catch::Approx(nn));
}

TEST_CASE("set_distance rejects dimension mismatches") {
    const FeatureSet a({{1.0, 2.0}}, "a");
    const FeatureSet b({{1.0, 2.0, 3.0}}, "b");
    CHECK_THROWS_AS(set_distance(a, b, SetDistanceMetric::chamfer), rpe::shape_error);
}
