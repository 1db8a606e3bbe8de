// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter containers (dense tensors, low-rank factor pairs, adapter
// deltas, base parameters) and the linear-algebraic merge
//     theta = theta0 + sum_i w_i * delta_i.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "rpe/errors.hpp"

namespace rpe {

/// Dense row-major tensor of 64-bit floats. Shape is fixed at construction;
/// every element is guaranteed finite.
class TensorBlob {
public:
    TensorBlob() = default;

    TensorBlob(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_.empty())
            throw shape_error("TensorBlob: shape must have at least one dimension");
        std::size_t n = 1;
        for (std::size_t d : shape_) {
            if (d == 0)
                throw shape_error("TensorBlob: zero dimension");
            n *= d;
        }
        if (n != data_.size()) {
            std::ostringstream os;
            os << "TensorBlob: shape implies " << n << " elements, got " << data_.size();
            throw shape_error(os.str());
        }
        for (double v : data_)
            if (!std::isfinite(v))
                throw domain_error("TensorBlob: non-finite value");
    }

    /// All-zero tensor of the given shape.
    static TensorBlob zeros(std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (std::size_t d : shape)
            n *= d;
        return TensorBlob(std::move(shape), std::vector<double>(n, 0.0));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    const std::vector<double>& data() const { return data_; }
    std::size_t numel() const { return data_.size(); }

    /// Element access for 2-D tensors.
    double at(std::size_t row, std::size_t col) const {
        return data_[row * shape_[1] + col];
    }

    bool same_shape(const TensorBlob& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;

    friend TensorBlob weighted_sum_dense(std::span<const TensorBlob> tensors,
                                         std::span<const double> weights);
};

/// Low-rank factorization of an (m x n) delta: up (m x r) times down (r x n).
class LowRankPair {
public:
    LowRankPair(TensorBlob up, TensorBlob down)
        : up_(std::move(up)), down_(std::move(down)) {
        if (up_.shape().size() != 2 || down_.shape().size() != 2)
            throw shape_error("LowRankPair: factors must be 2-D");
        if (up_.shape()[1] != down_.shape()[0])
            throw shape_error("LowRankPair: inner dimensions disagree");
    }

    const TensorBlob& up() const { return up_; }
    const TensorBlob& down() const { return down_; }
    std::size_t rank() const { return up_.shape()[1]; }

    std::vector<std::size_t> materialized_shape() const {
        return {up_.shape()[0], down_.shape()[1]};
    }

    /// Dense product up * down.
    TensorBlob materialize() const {
        const std::size_t m = up_.shape()[0];
        const std::size_t r = up_.shape()[1];
        const std::size_t n = down_.shape()[1];
        std::vector<double> out(m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = 0; k < r; ++k) {
                const double u = up_.at(i, k);
                for (std::size_t j = 0; j < n; ++j)
                    out[i * n + j] += u * down_.at(k, j);
            }
        return TensorBlob({m, n}, std::move(out));
    }

private:
    TensorBlob up_;
    TensorBlob down_;
};

using ParamValue = std::variant<TensorBlob, LowRankPair>;

inline std::vector<std::size_t> materialized_shape(const ParamValue& v) {
    if (std::holds_alternative<TensorBlob>(v))
        return std::get<TensorBlob>(v).shape();
    return std::get<LowRankPair>(v).materialized_shape();
}

inline bool is_dense(const ParamValue& v) { return std::holds_alternative<TensorBlob>(v); }

/// Named set of parameter deltas. Parameter order is insertion order and
/// names are unique.
class AdapterDelta {
public:
    struct Param {
        std::string name;
        ParamValue value;
    };

    AdapterDelta() = default;

    void add(std::string name, ParamValue value) {
        if (index_.count(name))
            throw conflict_error("AdapterDelta: duplicate parameter '" + name + "'");
        index_.emplace(name, params_.size());
        params_.push_back({std::move(name), std::move(value)});
    }

    void add_dense(std::string name, TensorBlob t) { add(std::move(name), ParamValue(std::move(t))); }
    void add_low_rank(std::string name, LowRankPair p) { add(std::move(name), ParamValue(std::move(p))); }

    const std::vector<Param>& params() const { return params_; }
    std::size_t size() const { return params_.size(); }
    bool empty() const { return params_.empty(); }

    const Param* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    const Param& at(const std::string& name) const {
        const Param* p = find(name);
        if (!p)
            throw domain_error("AdapterDelta: no parameter '" + name + "'");
        return *p;
    }

    /// Sorted (name, materialized shape) list; the schema identity of a delta.
    std::vector<std::pair<std::string, std::vector<std::size_t>>> signature() const {
        std::vector<std::pair<std::string, std::vector<std::size_t>>> sig;
        sig.reserve(params_.size());
        for (const Param& p : params_)
            sig.emplace_back(p.name, materialized_shape(p.value));
        std::sort(sig.begin(), sig.end());
        return sig;
    }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Named set of dense base parameters.
class BaseParameters {
public:
    struct Param {
        std::string name;
        TensorBlob value;
    };

    BaseParameters() = default;

    void add(std::string name, TensorBlob t) {
        if (index_.count(name))
            throw conflict_error("BaseParameters: duplicate parameter '" + name + "'");
        index_.emplace(name, params_.size());
        params_.push_back({std::move(name), std::move(t)});
    }

    const std::vector<Param>& params() const { return params_; }
    std::size_t size() const { return params_.size(); }

    const Param* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    const TensorBlob& at(const std::string& name) const {
        const Param* p = find(name);
        if (!p)
            throw domain_error("BaseParameters: no parameter '" + name + "'");
        return p->value;
    }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Replaces every low-rank entry by its dense product; dense entries and key
/// order are untouched.
inline AdapterDelta materialize(const AdapterDelta& delta) {
    AdapterDelta out;
    for (const auto& p : delta.params()) {
        if (is_dense(p.value))
            out.add_dense(p.name, std::get<TensorBlob>(p.value));
        else
            out.add_dense(p.name, std::get<LowRankPair>(p.value).materialize());
    }
    return out;
}

/// Sequential accumulation of weights[i] * tensors[i] in index order.
inline TensorBlob weighted_sum_dense(std::span<const TensorBlob> tensors,
                                     std::span<const double> weights) {
    TensorBlob acc = TensorBlob::zeros(tensors[0].shape());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const double w = weights[i];
        const std::vector<double>& src = tensors[i].data();
        for (std::size_t e = 0; e < acc.data_.size(); ++e)
            acc.data_[e] += w * src[e];
    }
    for (double v : acc.data_)
        if (!std::isfinite(v))
            throw domain_error("weighted_sum: non-finite result");
    return acc;
}

namespace detail {

inline void check_same_key_sets(const AdapterDelta& a, const AdapterDelta& b) {
    std::vector<std::string> missing, extra;
    for (const auto& p : a.params())
        if (!b.find(p.name))
            missing.push_back(p.name);
    for (const auto& p : b.params())
        if (!a.find(p.name))
            extra.push_back(p.name);
    if (!missing.empty() || !extra.empty()) {
        std::ostringstream os;
        os << "adapter key sets differ;";
        if (!missing.empty()) {
            os << " missing:";
            for (const auto& n : missing)
                os << ' ' << n;
        }
        if (!extra.empty()) {
            os << " extra:";
            for (const auto& n : extra)
                os << ' ' << n;
        }
        throw schema_error(os.str());
    }
}

} // namespace detail

/// Dense delta equal to sum_i weights[i] * materialize(deltas[i]).
/// All deltas must share one parameter-name set with matching materialized
/// shapes. Accumulation runs parameter by parameter in the first delta's key
/// order and, per element, sequentially in entry order, so a fixed input
/// order gives bit-identical results across runs.
inline AdapterDelta weighted_sum(std::span<const AdapterDelta> deltas,
                                 std::span<const double> weights) {
    if (deltas.empty())
        throw domain_error("weighted_sum: need at least one delta");
    if (deltas.size() != weights.size())
        throw shape_error("weighted_sum: deltas and weights length mismatch");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        detail::check_same_key_sets(deltas[0], deltas[i]);

    std::vector<AdapterDelta> dense;
    dense.reserve(deltas.size());
    for (const AdapterDelta& d : deltas)
        dense.push_back(materialize(d));

    AdapterDelta out;
    for (const auto& p0 : dense[0].params()) {
        std::vector<TensorBlob> stack;
        stack.reserve(dense.size());
        for (const AdapterDelta& d : dense) {
            const TensorBlob& t = std::get<TensorBlob>(d.at(p0.name).value);
            if (!t.same_shape(std::get<TensorBlob>(p0.value)))
                throw shape_error("weighted_sum: shape mismatch for parameter '" + p0.name + "'");
            stack.push_back(t);
        }
        out.add_dense(p0.name, weighted_sum_dense(stack, weights));
    }
    return out;
}

inline AdapterDelta weighted_sum(const std::vector<AdapterDelta>& deltas,
                                 const std::vector<double>& weights) {
    return weighted_sum(std::span<const AdapterDelta>(deltas), std::span<const double>(weights));
}

/// base + delta on the delta's keys, base elsewhere. Delta keys must be a
/// subset of base keys with matching shapes.
inline BaseParameters apply(const BaseParameters& base, const AdapterDelta& delta) {
    AdapterDelta dense = materialize(delta);
    for (const auto& p : dense.params()) {
        const BaseParameters::Param* bp = base.find(p.name);
        if (!bp)
            throw schema_error("apply: delta parameter '" + p.name + "' not in base");
        if (!std::get<TensorBlob>(p.value).same_shape(bp->value))
            throw shape_error("apply: shape mismatch for parameter '" + p.name + "'");
    }
    BaseParameters out;
    for (const auto& bp : base.params()) {
        const AdapterDelta::Param* dp = dense.find(bp.name);
        if (!dp) {
            out.add(bp.name, bp.value);
            continue;
        }
        const TensorBlob& d = std::get<TensorBlob>(dp->value);
        std::vector<double> sum(bp.value.data());
        for (std::size_t e = 0; e < sum.size(); ++e)
            sum[e] += d.data()[e];
        out.add(bp.name, TensorBlob(bp.value.shape(), std::move(sum)));
    }
    return out;
}

/// Dense adapter viewed as base parameters (merge output applied standalone).
inline BaseParameters as_base_parameters(const AdapterDelta& delta) {
    AdapterDelta dense = materialize(delta);
    BaseParameters out;
    for (const auto& p : dense.params())
        out.add(p.name, std::get<TensorBlob>(p.value));
    return out;
}

inline AdapterDelta as_delta(const BaseParameters& base) {
    AdapterDelta out;
    for (const auto& p : base.params())
        out.add_dense(p.name, p.value);
    return out;
}

} // namespace rpe
