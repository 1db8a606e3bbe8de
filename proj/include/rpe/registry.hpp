// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// The adapter registry: persistent (id, representation, adapter) records
// with exact k-NN retrieval by squared Euclidean distance. Retrieval is a
// linear scan; ties break toward the earlier insertion.
//
// On-disk layout under the registry directory:
//   index.json      schema + entry table (rewritten atomically)
//   NNNNNN.vec      representation blob, NNNNNN = zero-padded insertion index
//   NNNNNN.adp      adapter blob
//   lock            advisory flock target for multi-process use

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rpe/errors.hpp"
#include "rpe/io.hpp"
#include "rpe/representation.hpp"
#include "rpe/tensor.hpp"

namespace rpe {

/// Squared Euclidean distance between two representation vectors.
inline double squared_distance(const RepresentationVector& a, const RepresentationVector& b) {
    if (a.dim() != b.dim())
        throw shape_error("squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

using AdapterSignature = std::vector<std::pair<std::string, std::vector<std::size_t>>>;

struct RegistryEntry {
    std::string id;
    RepresentationVector representation;
    AdapterDelta adapter;
    std::map<std::string, std::string> metadata;
};

struct RetrievalQuery {
    RepresentationVector target;
    /// Number of neighbors; nullopt retrieves every non-excluded entry.
    std::optional<std::size_t> k;
    std::set<std::string> exclude_ids;
};

struct RetrievalResult {
    struct Item {
        std::string id;
        double squared_distance;
    };
    std::vector<Item> items;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(items.size());
        for (const auto& it : items)
            out.push_back(it.id);
        return out;
    }
};

struct RankCandidate {
    std::string id;
    double squared_distance;
    std::uint64_t insertion_index;
};

/// Sorts candidates by ascending distance, breaking exact ties by smaller
/// insertion index, and keeps the first k.
inline RetrievalResult rank_candidates(std::vector<RankCandidate> candidates,
                                       std::optional<std::size_t> k) {
    if (candidates.empty())
        throw domain_error("retrieve: no candidates after exclusions");
    const std::size_t want = k.value_or(candidates.size());
    if (want == 0)
        throw domain_error("retrieve: k must be positive");
    if (want > candidates.size()) {
        std::ostringstream os;
        os << "retrieve: k=" << want << " exceeds " << candidates.size() << " available entries";
        throw domain_error(os.str());
    }
    std::sort(candidates.begin(), candidates.end(), [](const RankCandidate& a, const RankCandidate& b) {
        if (a.squared_distance != b.squared_distance)
            return a.squared_distance < b.squared_distance;
        return a.insertion_index < b.insertion_index;
    });
    RetrievalResult result;
    result.items.reserve(want);
    for (std::size_t i = 0; i < want; ++i)
        result.items.push_back({std::move(candidates[i].id), candidates[i].squared_distance});
    return result;
}

/// Registry of representation-keyed adapters, either purely in memory or
/// backed by a directory. Writes are atomic at entry granularity: blobs are
/// written temp-then-rename before the index is rewritten, so readers never
/// observe a partial entry.
class Registry {
public:
    struct Entry {
        std::string id;
        std::uint64_t insertion_index = 0;
        RepresentationVector representation;
        std::map<std::string, std::string> metadata;
        std::string representation_file; // relative to root; empty when in memory
        std::string adapter_file;
        std::optional<AdapterDelta> adapter; // cached / in-memory payload
    };

    /// Registry that never touches the filesystem.
    static Registry in_memory() { return Registry(); }

    /// Creates an empty on-disk registry. The directory may exist but must
    /// not already hold a registry.
    static Registry create(const std::filesystem::path& root) {
        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(root, ec);
        if (ec)
            throw io_error("cannot create " + root.string() + ": " + ec.message());
        if (fs::exists(root / "index.json"))
            throw conflict_error("registry already exists at " + root.string());
        Registry reg;
        reg.root_ = root;
        reg.write_index();
        // Lockfile target for flock-based coordination. Created in place,
        // never renamed over, so held locks stay bound to this inode.
        if (!fs::exists(root / "lock"))
            std::ofstream(root / "lock").flush();
        return reg;
    }

    static Registry open(const std::filesystem::path& root) {
        const auto index_path = root / "index.json";
        if (!std::filesystem::exists(index_path))
            throw io_error("no registry at " + root.string());
        nlohmann::json idx;
        try {
            std::ifstream in(index_path);
            in >> idx;
        } catch (const std::exception& e) {
            throw parse_error(index_path.string() + ": " + e.what());
        }
        Registry reg;
        reg.root_ = root;
        try {
            if (idx.at("version").get<int>() != 1)
                throw parse_error("unsupported registry version");
            reg.dim_ = idx.at("dim").get<std::size_t>();
            for (const auto& s : idx.at("adapter_signature"))
                reg.signature_.emplace_back(s.at("name").get<std::string>(),
                                            s.at("shape").get<std::vector<std::size_t>>());
            for (const auto& e : idx.at("entries")) {
                Entry entry;
                entry.id = e.at("id").get<std::string>();
                entry.insertion_index = e.at("insertion_index").get<std::uint64_t>();
                entry.representation_file = e.at("representation_file").get<std::string>();
                entry.adapter_file = e.at("adapter_file").get<std::string>();
                entry.metadata = e.at("metadata").get<std::map<std::string, std::string>>();
                entry.representation = read_vec(root / entry.representation_file);
                reg.index_by_id_.emplace(entry.id, reg.entries_.size());
                reg.entries_.push_back(std::move(entry));
            }
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(index_path.string() + ": " + e.what());
        }
        if (!reg.entries_.empty())
            reg.next_index_ = reg.entries_.back().insertion_index + 1;
        return reg;
    }

    bool on_disk() const { return root_.has_value(); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    /// Representation dimension; 0 until the first entry fixes the schema.
    std::size_t dim() const { return dim_; }
    const AdapterSignature& adapter_signature() const { return signature_; }

    const std::vector<Entry>& entries() const { return entries_; }

    const Entry& entry(const std::string& id) const {
        auto it = index_by_id_.find(id);
        if (it == index_by_id_.end())
            throw domain_error("registry: no entry '" + id + "'");
        return entries_[it->second];
    }

    bool contains(const std::string& id) const { return index_by_id_.count(id) != 0; }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_)
            out.push_back(e.id);
        return out;
    }

    /// Validates the entry against the registry schema (the first entry
    /// fixes dim and adapter signature), persists it when on disk, and
    /// returns the id.
    const std::string& add_entry(RegistryEntry entry) {
        if (entry.id.empty())
            throw domain_error("add_entry: empty id");
        if (index_by_id_.count(entry.id))
            throw conflict_error("add_entry: duplicate id '" + entry.id + "'");
        AdapterSignature sig = entry.adapter.signature();
        if (sig.empty())
            throw schema_error("add_entry: adapter has no parameters");
        if (entries_.empty() && dim_ == 0) {
            dim_ = entry.representation.dim();
            signature_ = sig;
        } else {
            if (entry.representation.dim() != dim_) {
                std::ostringstream os;
                os << "add_entry: representation dim " << entry.representation.dim()
                   << " does not match registry dim " << dim_;
                throw schema_error(os.str());
            }
            if (sig != signature_)
                throw schema_error("add_entry: adapter signature does not match registry schema");
        }

        Entry stored;
        stored.id = entry.id;
        stored.insertion_index = next_index_++;
        stored.representation = std::move(entry.representation);
        stored.metadata = std::move(entry.metadata);
        if (root_) {
            std::ostringstream stem;
            stem << std::setw(6) << std::setfill('0') << stored.insertion_index;
            stored.representation_file = stem.str() + ".vec";
            stored.adapter_file = stem.str() + ".adp";
            write_vec(*root_ / stored.representation_file, stored.representation);
            write_adp(*root_ / stored.adapter_file, entry.adapter);
        } else {
            stored.adapter = std::move(entry.adapter);
        }
        index_by_id_.emplace(stored.id, entries_.size());
        entries_.push_back(std::move(stored));
        if (root_)
            write_index();
        return entries_.back().id;
    }

    /// Loads an entry's adapter (from the blob file when disk-backed).
    AdapterDelta adapter(const std::string& id) const {
        const Entry& e = entry(id);
        if (e.adapter)
            return *e.adapter;
        return read_adp(*root_ / e.adapter_file);
    }

    RetrievalResult retrieve(const RetrievalQuery& query) const {
        if (dim_ != 0 && query.target.dim() != dim_)
            throw shape_error("retrieve: target dim does not match registry dim");
        std::vector<RankCandidate> candidates;
        candidates.reserve(entries_.size());
        for (const Entry& e : entries_) {
            if (query.exclude_ids.count(e.id))
                continue;
            candidates.push_back(
                {e.id, squared_distance(e.representation, query.target), e.insertion_index});
        }
        return rank_candidates(std::move(candidates), query.k);
    }

private:
    Registry() = default;

    void write_index() const {
        nlohmann::json idx;
        idx["version"] = 1;
        idx["dim"] = dim_;
        nlohmann::json sig = nlohmann::json::array();
        for (const auto& [name, shape] : signature_)
            sig.push_back({{"name", name}, {"shape", shape}});
        idx["adapter_signature"] = sig;
        nlohmann::json entries = nlohmann::json::array();
        for (const Entry& e : entries_) {
            entries.push_back({{"id", e.id},
                               {"insertion_index", e.insertion_index},
                               {"representation_file", e.representation_file},
                               {"adapter_file", e.adapter_file},
                               {"metadata", e.metadata}});
        }
        idx["entries"] = entries;
        atomic_write_file(*root_ / "index.json", idx.dump(2) + "\n");
    }

    std::optional<std::filesystem::path> root_;
    std::size_t dim_ = 0;
    AdapterSignature signature_;
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_by_id_;
    std::uint64_t next_index_ = 0;
};

} // namespace rpe
