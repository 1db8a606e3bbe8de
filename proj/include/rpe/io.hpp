// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary wire formats. Both files are little-endian with float32 payloads;
// in-memory arithmetic stays in float64.
//
//   .vec   magic "RPEVEC01" | u32 dim | dim x f32
//   .adp   magic "RPEADP01" | u32 param count | per parameter:
//            u16 name length | name bytes (UTF-8)
//            u8 kind (0 dense, 1 low-rank) | u8 ndim | ndim x u32 dims
//            dense:    dims = tensor shape, one row-major f32 payload
//            low-rank: dims = (up rows, up cols, down rows, down cols),
//                      u32 rank, then up payload then down payload
//
// A .vec file may hold several concatenated records; readers that accept
// feature files consume records until end of file.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rpe/errors.hpp"
#include "rpe/representation.hpp"
#include "rpe/tensor.hpp"

namespace rpe {

inline constexpr char kVecMagic[8] = {'R', 'P', 'E', 'V', 'E', 'C', '0', '1'};
inline constexpr char kAdpMagic[8] = {'R', 'P', 'E', 'A', 'D', 'P', '0', '1'};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class ByteReader {
public:
    ByteReader(const unsigned char* p, std::size_t n, std::string origin)
        : p_(p), n_(n), origin_(std::move(origin)) {}

    std::size_t pos() const { return pos_; }
    bool at_end() const { return pos_ == n_; }

    void expect_magic(const char (&magic)[8], const char* what) {
        need(8, what);
        if (std::memcmp(p_ + pos_, magic, 8) != 0)
            throw parse_error(origin_ + ": bad " + what + " magic");
        pos_ += 8;
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p_[pos_]) |
                          static_cast<std::uint16_t>(p_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n, const char* what) {
        if (pos_ + n > n_)
            throw parse_error(origin_ + ": truncated while reading " + what);
    }

    const unsigned char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
    std::string origin_;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad())
        throw io_error("read failed on " + path.string());
    return bytes;
}

} // namespace detail

/// Writes bytes to a sibling temp file, then renames over the target, so a
/// crash never leaves a half-written file at `path`.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out)
            throw io_error("write failed on " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec)
        throw io_error("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline std::string encode_vec(const RepresentationVector& v) {
    std::string out(kVecMagic, 8);
    out.reserve(12 + 4 * v.dim());
    detail::put_u32(out, static_cast<std::uint32_t>(v.dim()));
    for (double x : v.values())
        detail::put_f32(out, static_cast<float>(x));
    return out;
}

inline void write_vec(const std::filesystem::path& path, const RepresentationVector& v) {
    atomic_write_file(path, encode_vec(v));
}

namespace detail {

inline RepresentationVector read_vec_record(ByteReader& r) {
    r.expect_magic(kVecMagic, "vector record");
    const std::uint32_t dim = r.u32("vector dim");
    if (dim == 0)
        throw parse_error("vector record with dim 0");
    std::vector<double> values(dim);
    for (std::uint32_t i = 0; i < dim; ++i)
        values[i] = static_cast<double>(r.f32("vector payload"));
    return RepresentationVector(std::move(values));
}

} // namespace detail

/// Reads exactly one vector record; trailing bytes are an error.
inline RepresentationVector read_vec(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.string());
    RepresentationVector v = detail::read_vec_record(r);
    if (!r.at_end())
        throw parse_error(path.string() + ": trailing bytes after vector record");
    return v;
}

/// Reads one or more concatenated vector records.
inline std::vector<RepresentationVector> read_vec_stream(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes.data(), bytes.size(), path.string());
    std::vector<RepresentationVector> records;
    records.push_back(detail::read_vec_record(r));
    while (!r.at_end())
        records.push_back(detail::read_vec_record(r));
    return records;
}

inline std::string encode_adp(const AdapterDelta& delta) {
    std::string out(kAdpMagic, 8);
    detail::put_u32(out, static_cast<std::uint32_t>(delta.size()));
    for (const auto& p : delta.params()) {
        if (p.name.size() > 0xffff)
            throw domain_error("encode_adp: parameter name too long");
        detail::put_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.append(p.name);
        if (is_dense(p.value)) {
            const TensorBlob& t = std::get<TensorBlob>(p.value);
            out.push_back(0);
            out.push_back(static_cast<char>(t.shape().size()));
            for (std::size_t d : t.shape())
                detail::put_u32(out, static_cast<std::uint32_t>(d));
            for (double v : t.data())
                detail::put_f32(out, static_cast<float>(v));
        } else {
            const LowRankPair& lr = std::get<LowRankPair>(p.value);
            out.push_back(1);
            out.push_back(4);
            detail::put_u32(out, static_cast<std::uint32_t>(lr.up().shape()[0]));
            detail::put_u32(out, static_cast<std::uint32_t>(lr.up().shape()[1]));
            detail::put_u32(out, static_cast<std::uint32_t>(lr.down().shape()[0]));
            detail::put_u32(out, static_cast<std::uint32_t>(lr.down().shape()[1]));
            detail::put_u32(out, static_cast<std::uint32_t>(lr.rank()));
            for (double v : lr.up().data())
                detail::put_f32(out, static_cast<float>(v));
            for (double v : lr.down().data())
                detail::put_f32(out, static_cast<float>(v));
        }
    }
    return out;
}

inline void write_adp(const std::filesystem::path& path, const AdapterDelta& delta) {
    atomic_write_file(path, encode_adp(delta));
}

inline AdapterDelta decode_adp(const unsigned char* bytes, std::size_t size,
                               const std::string& origin) {
    detail::ByteReader r(bytes, size, origin);
    r.expect_magic(kAdpMagic, "adapter");
    const std::uint32_t count = r.u32("parameter count");
    AdapterDelta delta;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        const std::string name = r.bytes(name_len, "parameter name");
        const std::uint8_t kind = static_cast<std::uint8_t>(r.bytes(1, "kind")[0]);
        const std::uint8_t ndim = static_cast<std::uint8_t>(r.bytes(1, "ndim")[0]);
        std::vector<std::size_t> dims(ndim);
        for (std::uint8_t d = 0; d < ndim; ++d)
            dims[d] = r.u32("dim");
        if (kind == 0) {
            std::size_t n = 1;
            for (std::size_t d : dims)
                n *= d;
            std::vector<double> data(n);
            for (std::size_t e = 0; e < n; ++e)
                data[e] = static_cast<double>(r.f32("dense payload"));
            delta.add_dense(name, TensorBlob(dims, std::move(data)));
        } else if (kind == 1) {
            if (ndim != 4)
                throw parse_error(origin + ": low-rank parameter '" + name + "' needs 4 dims");
            const std::uint32_t rank = r.u32("rank");
            if (dims[1] != rank || dims[2] != rank)
                throw parse_error(origin + ": rank field disagrees with factor dims for '" +
                                  name + "'");
            std::vector<double> up(dims[0] * dims[1]);
            for (double& v : up)
                v = static_cast<double>(r.f32("up payload"));
            std::vector<double> down(dims[2] * dims[3]);
            for (double& v : down)
                v = static_cast<double>(r.f32("down payload"));
            delta.add_low_rank(name, LowRankPair(TensorBlob({dims[0], dims[1]}, std::move(up)),
                                                 TensorBlob({dims[2], dims[3]}, std::move(down))));
        } else {
            throw parse_error(origin + ": unknown parameter kind " + std::to_string(kind));
        }
    }
    if (!r.at_end())
        throw parse_error(origin + ": trailing bytes after adapter payload");
    return delta;
}

inline AdapterDelta read_adp(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    return decode_adp(bytes.data(), bytes.size(), path.string());
}

} // namespace rpe
