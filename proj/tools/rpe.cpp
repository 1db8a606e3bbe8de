// Copyright 2026 The rpe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: registry management (db init/add/list/inspect),
// feature extraction, retrieval, weighting, merging and the synthetic
// experiment harness. Data goes to stdout, diagnostics to stderr.
//
// Exit codes: 0 ok, 1 usage or config error, 2 data/schema error, 3 I/O.

#include <cstdlib>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <sys/file.h>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rpe/harness.hpp"
#include "rpe/io.hpp"
#include "rpe/registry.hpp"
#include "rpe/weighting.hpp"

namespace fs = std::filesystem;

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };
LogLevel g_log_level = LogLevel::info;

void log_info(const std::string& msg) {
    if (g_log_level >= LogLevel::info)
        std::cerr << "[info] " << msg << "\n";
}

/// Advisory flock on the registry lockfile: shared for reads, exclusive for
/// mutations. Released on destruction.
class RegistryLock {
public:
    RegistryLock(const fs::path& root, bool exclusive) {
        if (!fs::is_directory(root))
            throw rpe::io_error("no registry at " + root.string());
        const fs::path lockfile = root / "lock";
        fd_ = ::open(lockfile.c_str(), O_RDWR | O_CREAT, 0644);
        if (fd_ < 0)
            throw rpe::io_error("cannot open lockfile " + lockfile.string());
        if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw rpe::io_error("cannot lock " + lockfile.string());
        }
    }
    ~RegistryLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    RegistryLock(const RegistryLock&) = delete;
    RegistryLock& operator=(const RegistryLock&) = delete;

private:
    int fd_ = -1;
};

struct CommonOpts {
    std::string registry_path;
    std::string method = "average";
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    std::size_t k = 0; // 0 = all
    std::vector<std::string> exclude;
    std::string out;
    std::uint64_t seed = 0;
};

fs::path require_registry(const CommonOpts& opts) {
    if (!opts.registry_path.empty())
        return opts.registry_path;
    if (const char* env = std::getenv("RPE_REGISTRY"); env && *env)
        return env;
    throw CLI::ValidationError("--registry", "no registry path (flag or RPE_REGISTRY)");
}

std::set<std::string> exclude_set(const std::vector<std::string>& raw) {
    std::set<std::string> out;
    for (const std::string& item : raw) {
        std::size_t start = 0;
        while (start <= item.size()) {
            const std::size_t comma = item.find(',', start);
            const std::string piece =
                item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!piece.empty())
                out.insert(piece);
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
    }
    return out;
}

rpe::SolverConfig solver_config(const CommonOpts& opts) {
    rpe::SolverConfig config;
    config.lambda1 = opts.lambda1;
    config.lambda2 = opts.lambda2;
    config.validate();
    return config;
}

std::optional<std::size_t> query_k(const CommonOpts& opts) {
    if (opts.k == 0)
        return std::nullopt;
    return opts.k;
}

rpe::FeatureSet load_feature_set(const std::vector<std::string>& inputs) {
    std::vector<std::vector<double>> items;
    std::vector<fs::path> files;
    for (const std::string& input : inputs) {
        if (fs::is_directory(input)) {
            std::vector<fs::path> in_dir;
            for (const auto& e : fs::directory_iterator(input))
                if (e.is_regular_file() && e.path().extension() == ".vec")
                    in_dir.push_back(e.path());
            std::sort(in_dir.begin(), in_dir.end());
            files.insert(files.end(), in_dir.begin(), in_dir.end());
        } else {
            files.push_back(input);
        }
    }
    if (files.empty())
        throw rpe::domain_error("no feature files found");
    for (const fs::path& f : files)
        for (rpe::RepresentationVector& v : rpe::read_vec_stream(f))
            items.push_back(v.values());
    return rpe::FeatureSet(std::move(items), files.front().string());
}

void write_or_print(const std::string& out_path, const std::string& payload) {
    if (out_path.empty()) {
        std::cout << payload;
        return;
    }
    rpe::atomic_write_file(out_path, payload);
}

std::map<std::string, std::string> parse_metadata(const std::vector<std::string>& kvs) {
    std::map<std::string, std::string> meta;
    for (const std::string& kv : kvs) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--meta", "expected key=value, got '" + kv + "'");
        meta[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return meta;
}

int run_db_init(const CommonOpts& opts) {
    const fs::path root = require_registry(opts);
    fs::create_directories(root);
    RegistryLock lock(root, /*exclusive=*/true);
    rpe::Registry::create(root);
    log_info("initialized registry at " + root.string());
    return 0;
}

int run_db_add(const CommonOpts& opts, const std::string& id, const std::string& vec_file,
               const std::string& adp_file, const std::vector<std::string>& meta_kvs) {
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/true);
    rpe::Registry reg = rpe::Registry::open(root);
    rpe::RegistryEntry entry{id, rpe::read_vec(vec_file), rpe::read_adp(adp_file),
                             parse_metadata(meta_kvs)};
    reg.add_entry(std::move(entry));
    log_info("added entry '" + id + "'");
    return 0;
}

int run_db_list(const CommonOpts& opts, bool as_json) {
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/false);
    const rpe::Registry reg = rpe::Registry::open(root);
    if (as_json) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& e : reg.entries())
            j.push_back({{"id", e.id},
                         {"insertion_index", e.insertion_index},
                         {"metadata", e.metadata}});
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    std::cout << std::left << std::setw(8) << "INDEX" << std::setw(24) << "ID"
              << "METADATA\n";
    for (const auto& e : reg.entries()) {
        std::ostringstream meta;
        for (const auto& [k, v] : e.metadata)
            meta << k << '=' << v << ' ';
        std::cout << std::left << std::setw(8) << e.insertion_index << std::setw(24) << e.id
                  << meta.str() << "\n";
    }
    return 0;
}

int run_db_inspect(const CommonOpts& opts, const std::string& id) {
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/false);
    const rpe::Registry reg = rpe::Registry::open(root);
    const auto& entry = reg.entry(id);
    const rpe::AdapterDelta adapter = reg.adapter(id);
    std::cout << "id: " << entry.id << "\n"
              << "insertion_index: " << entry.insertion_index << "\n"
              << "representation_dim: " << entry.representation.dim() << "\n";
    for (const auto& [k, v] : entry.metadata)
        std::cout << "metadata." << k << ": " << v << "\n";
    std::cout << "parameters:\n";
    for (const auto& p : adapter.params()) {
        std::cout << "  " << p.name << "  " << (rpe::is_dense(p.value) ? "dense" : "low-rank")
                  << "  (";
        const auto shape = rpe::materialized_shape(p.value);
        for (std::size_t i = 0; i < shape.size(); ++i)
            std::cout << (i ? "x" : "") << shape[i];
        std::cout << ")";
        if (!rpe::is_dense(p.value))
            std::cout << "  rank " << std::get<rpe::LowRankPair>(p.value).rank();
        std::cout << "\n";
    }
    return 0;
}

int run_extract(const std::vector<std::string>& inputs, const std::string& out) {
    const rpe::FeatureSet features = load_feature_set(inputs);
    const rpe::RepresentationVector pooled = rpe::mean_pool(features);
    rpe::write_vec(out, pooled);
    log_info("pooled " + std::to_string(features.size()) + " feature vectors of dim " +
             std::to_string(features.dim()) + " into " + out);
    return 0;
}

int run_retrieve(const CommonOpts& opts, const std::string& target_file) {
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/false);
    const rpe::Registry reg = rpe::Registry::open(root);
    const rpe::FeatureSet features = load_feature_set({target_file});
    const rpe::RepresentationVector target = rpe::mean_pool(features);
    const rpe::RetrievalResult result =
        reg.retrieve({target, query_k(opts), exclude_set(opts.exclude)});
    std::cout << std::left << std::setw(24) << "ID" << std::setw(18) << "SQ_DIST"
              << "DIST\n";
    for (const auto& item : result.items)
        std::cout << std::left << std::setw(24) << item.id << std::setw(18)
                  << std::setprecision(10) << item.squared_distance << std::setprecision(10)
                  << std::sqrt(item.squared_distance) << "\n";
    return 0;
}

int run_weigh(const CommonOpts& opts, const std::string& target_file) {
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/false);
    const rpe::Registry reg = rpe::Registry::open(root);
    const rpe::FeatureSet features = load_feature_set({target_file});
    const rpe::PipelineResult pipe =
        rpe::run_pipeline(reg, features, rpe::parse_weight_method(opts.method),
                          solver_config(opts), exclude_set(opts.exclude), query_k(opts));
    write_or_print(opts.out,
                   rpe::weight_report(pipe.retrieval, pipe.weights, solver_config(opts)).dump(2) +
                       "\n");
    return 0;
}

int run_merge(const CommonOpts& opts, const std::string& target_file,
              const std::string& base_file) {
    if (opts.out.empty())
        throw CLI::ValidationError("--out", "merge needs an output path");
    const fs::path root = require_registry(opts);
    RegistryLock lock(root, /*exclusive=*/false);
    const rpe::Registry reg = rpe::Registry::open(root);
    const rpe::FeatureSet features = load_feature_set({target_file});
    const rpe::PipelineResult pipe =
        rpe::run_pipeline(reg, features, rpe::parse_weight_method(opts.method),
                          solver_config(opts), exclude_set(opts.exclude), query_k(opts));
    if (base_file.empty()) {
        rpe::write_adp(opts.out, pipe.delta);
    } else {
        const rpe::BaseParameters base = rpe::as_base_parameters(rpe::read_adp(base_file));
        rpe::write_adp(opts.out, rpe::as_delta(rpe::apply(base, pipe.delta)));
    }
    log_info("wrote merged parameters to " + opts.out);
    return 0;
}

int run_simulate(const std::string& config_file, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override) {
    nlohmann::json j;
    {
        std::ifstream in(config_file);
        if (!in)
            throw rpe::io_error("cannot open config " + config_file);
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw rpe::config_error("config " + config_file + ": " + e.what());
        }
    }
    rpe::GeneratorConfig config;
    std::vector<rpe::WeightMethod> methods;
    rpe::ExperimentOptions options;
    try {
        config = rpe::generator_config_from_json(j.at("generator"));
        for (const auto& m : j.at("methods"))
            methods.push_back(rpe::parse_weight_method(m.get<std::string>()));
        options.include_target_sft = j.value("include_target_sft", false);
        if (j.contains("solver")) {
            const auto& s = j.at("solver");
            options.solver.lambda1 = s.value("lambda1", options.solver.lambda1);
            options.solver.lambda2 = s.value("lambda2", options.solver.lambda2);
            options.solver.rho = s.value("rho", options.solver.rho);
            options.solver.tolerance = s.value("tolerance", options.solver.tolerance);
            options.solver.max_iterations = s.value("max_iterations", options.solver.max_iterations);
        }
        options.solver.validate();
    } catch (const nlohmann::json::exception& e) {
        throw rpe::config_error("config " + config_file + ": " + e.what());
    } catch (const rpe::domain_error& e) {
        throw rpe::config_error("config " + config_file + ": " + e.what());
    }
    if (seed_override)
        config.seed = *seed_override;

    const rpe::ExperimentReport report = rpe::run_experiment(config, methods, options);

    fs::create_directories(out_dir);
    rpe::atomic_write_file(fs::path(out_dir) / "report.json", rpe::to_json(report).dump(2) + "\n");
    rpe::atomic_write_file(fs::path(out_dir) / "report.csv", rpe::to_csv(report));
    rpe::atomic_write_file(fs::path(out_dir) / "report.txt", rpe::to_table(report));
    std::cout << rpe::to_table(report);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retrieval-based parameter ensembles over a registry of adapter deltas"};
    app.require_subcommand(1);
    // Lets global flags (--log-level) appear after the subcommand too.
    app.fallthrough();

    CommonOpts opts;
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "quiet, info or debug")
        ->check(CLI::IsMember({"quiet", "info", "debug"}));
    // Subcommand callbacks run inside parse(), so pick the level up first.
    app.parse_complete_callback([&] {
        g_log_level = log_level == "quiet"   ? LogLevel::quiet
                      : log_level == "debug" ? LogLevel::debug
                                             : LogLevel::info;
    });

    const auto add_registry_flag = [&](CLI::App* cmd) {
        cmd->add_option("--registry", opts.registry_path,
                        "registry directory (default: $RPE_REGISTRY)");
    };
    const auto add_solver_flags = [&](CLI::App* cmd) {
        cmd->add_option("--method", opts.method,
                        "average, similarity, linear, linear_l1 or top1")
            ->check(CLI::IsMember({"average", "similarity", "linear", "linear_l1", "top1"}));
        cmd->add_option("--lambda1", opts.lambda1, "similarity softmax temperature")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--lambda2", opts.lambda2, "l1 penalty strength")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--k", opts.k, "neighbors to retrieve (0 = all)");
        cmd->add_option("--exclude", opts.exclude, "entry ids to exclude (repeat or comma-split)");
    };

    // db ---------------------------------------------------------------
    CLI::App* db = app.add_subcommand("db", "registry management");
    db->require_subcommand(1);

    CLI::App* db_init = db->add_subcommand("init", "create an empty registry");
    add_registry_flag(db_init);
    db_init->callback([&] { run_db_init(opts); });

    std::string add_id, add_vec, add_adp;
    std::vector<std::string> add_meta;
    CLI::App* db_add = db->add_subcommand("add", "ingest a .vec/.adp pair under an id");
    add_registry_flag(db_add);
    db_add->add_option("--id", add_id, "entry id")->required();
    db_add->add_option("--vec", add_vec, "representation .vec file")->required();
    db_add->add_option("--adp", add_adp, "adapter .adp file")->required();
    db_add->add_option("--meta", add_meta, "metadata key=value (repeatable)");
    db_add->callback([&] { run_db_add(opts, add_id, add_vec, add_adp, add_meta); });

    bool list_json = false;
    CLI::App* db_list = db->add_subcommand("list", "list entries in insertion order");
    add_registry_flag(db_list);
    db_list->add_flag("--json", list_json, "emit JSON");
    db_list->callback([&] { run_db_list(opts, list_json); });

    std::string inspect_id;
    CLI::App* db_inspect = db->add_subcommand("inspect", "print one entry's signature");
    add_registry_flag(db_inspect);
    db_inspect->add_option("--id", inspect_id, "entry id")->required();
    db_inspect->callback([&] { run_db_inspect(opts, inspect_id); });

    // extract ------------------------------------------------------------
    std::vector<std::string> extract_inputs;
    CLI::App* extract = app.add_subcommand("extract", "mean-pool feature files into a .vec");
    extract->add_option("inputs", extract_inputs, "feature .vec files or directories")
        ->required();
    extract->add_option("--out", opts.out, "output .vec path")->required();
    extract->callback([&] { run_extract(extract_inputs, opts.out); });

    // retrieve / weigh / merge ------------------------------------------
    std::string target_file, base_file;

    CLI::App* retrieve = app.add_subcommand("retrieve", "rank registry entries by distance");
    add_registry_flag(retrieve);
    retrieve->add_option("--target", target_file, "target .vec file")->required();
    retrieve->add_option("--k", opts.k, "neighbors to retrieve (0 = all)");
    retrieve->add_option("--exclude", opts.exclude, "entry ids to exclude");
    retrieve->callback([&] { run_retrieve(opts, target_file); });

    CLI::App* weigh = app.add_subcommand("weigh", "compute ensemble weights (JSON report)");
    add_registry_flag(weigh);
    weigh->add_option("--target", target_file, "target .vec file")->required();
    add_solver_flags(weigh);
    weigh->add_option("--out", opts.out, "write the report here instead of stdout");
    weigh->callback([&] { run_weigh(opts, target_file); });

    CLI::App* merge = app.add_subcommand("merge", "write the ensembled delta as .adp");
    add_registry_flag(merge);
    merge->add_option("--target", target_file, "target .vec file")->required();
    add_solver_flags(merge);
    merge->add_option("--base", base_file, "base parameters .adp; output becomes base+delta");
    merge->add_option("--out", opts.out, "output .adp path")->required();
    merge->callback([&] { run_merge(opts, target_file, base_file); });

    // simulate -----------------------------------------------------------
    std::string sim_config, sim_out = ".";
    bool sim_seed_set = false;
    std::uint64_t sim_seed = 0;
    CLI::App* simulate = app.add_subcommand("simulate", "run the synthetic experiment harness");
    simulate->add_option("--config", sim_config, "experiment config JSON")->required();
    simulate->add_option("--out", sim_out, "report output directory");
    simulate->add_option("--seed", sim_seed, "override the config seed")
        ->each([&](const std::string&) { sim_seed_set = true; });
    simulate->callback([&] {
        run_simulate(sim_config, sim_out,
                     sim_seed_set ? std::optional<std::uint64_t>(sim_seed) : std::nullopt);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const rpe::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const rpe::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const rpe::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
