// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset representation vectors: mean-pooled per-item feature maps, plus
// the set-to-set distances (chamfer / nearest-neighbor / mean) kept around
// for experimentation.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rpe/errors.hpp"

namespace rpe {

/// Fixed-dimension real vector summarizing a dataset.
class RepresentationVector {
public:
    RepresentationVector() = default;

    explicit RepresentationVector(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty())
            throw shape_error("RepresentationVector: empty vector");
        for (double v : values_)
            if (!std::isfinite(v))
                throw domain_error("RepresentationVector: non-finite value");
    }

    const std::vector<double>& values() const { return values_; }
    std::size_t dim() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

private:
    std::vector<double> values_;
};

/// Non-empty list of per-item feature vectors, all of one dimension.
class FeatureSet {
public:
    FeatureSet(std::vector<std::vector<double>> items, std::string source_id)
        : items_(std::move(items)), source_id_(std::move(source_id)) {
        if (items_.empty())
            throw domain_error("FeatureSet: empty set");
        const std::size_t d = items_[0].size();
        if (d == 0)
            throw shape_error("FeatureSet: zero-dimensional items");
        for (const auto& it : items_) {
            if (it.size() != d)
                throw shape_error("FeatureSet: mixed item dimensions");
            for (double v : it)
                if (!std::isfinite(v))
                    throw domain_error("FeatureSet: non-finite value");
        }
    }

    const std::vector<std::vector<double>>& items() const { return items_; }
    const std::string& source_id() const { return source_id_; }
    std::size_t dim() const { return items_[0].size(); }
    std::size_t size() const { return items_.size(); }

private:
    std::vector<std::vector<double>> items_;
    std::string source_id_;
};

namespace detail {

/// Pairwise (cascade) summation of f(i) for i in [lo, hi).
template <typename F>
double pairwise_sum(F&& f, std::size_t lo, std::size_t hi) {
    const std::size_t n = hi - lo;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
            s += f(i);
        return s;
    }
    const std::size_t mid = lo + n / 2;
    return pairwise_sum(f, lo, mid) + pairwise_sum(f, mid, hi);
}

inline double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace detail

/// Coordinatewise mean of the item feature vectors.
inline RepresentationVector mean_pool(const FeatureSet& features) {
    const std::size_t d = features.dim();
    const std::size_t n = features.size();
    std::vector<double> out(d);
    for (std::size_t c = 0; c < d; ++c) {
        const double s =
            detail::pairwise_sum([&](std::size_t j) { return features.items()[j][c]; }, 0, n);
        out[c] = s / static_cast<double>(n);
    }
    return RepresentationVector(std::move(out));
}

enum class SetDistanceMetric { chamfer, nearest_neighbor, mean };

/// Set-to-set distance between two feature sets of equal dimension.
///   chamfer          symmetric average of nearest-neighbor distances
///   nearest_neighbor smallest cross-pair distance
///   mean             distance between the mean-pooled vectors
inline double set_distance(const FeatureSet& a, const FeatureSet& b, SetDistanceMetric metric) {
    if (a.dim() != b.dim())
        throw shape_error("set_distance: dimension mismatch");
    switch (metric) {
    case SetDistanceMetric::chamfer: {
        double sum_a = 0.0;
        for (const auto& x : a.items()) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& y : b.items())
                best = std::min(best, detail::euclidean(x, y));
            sum_a += best;
        }
        double sum_b = 0.0;
        for (const auto& y : b.items()) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& x : a.items())
                best = std::min(best, detail::euclidean(x, y));
            sum_b += best;
        }
        return sum_a / static_cast<double>(a.size()) + sum_b / static_cast<double>(b.size());
    }
    case SetDistanceMetric::nearest_neighbor: {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& x : a.items())
            for (const auto& y : b.items())
                best = std::min(best, detail::euclidean(x, y));
        return best;
    }
    case SetDistanceMetric::mean:
        return detail::euclidean(mean_pool(a).values(), mean_pool(b).values());
    }
    throw domain_error("set_distance: unknown metric");
}

} // namespace rpe
