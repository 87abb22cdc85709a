#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pos2fs/pipeline.hpp"
#include "pos2fs/report.hpp"

namespace pos2fs {

// Malformed experiment configuration; the message starts with the field path.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct DatasetSource {
    std::string name;
    std::optional<std::string> path;        // CSV file
    LabelColumn label_column = std::string("label");
    std::optional<SyntheticSpec> synthetic; // generated in memory
};

struct ExperimentMatrix {
    std::uint64_t seed = 0;
    std::vector<DatasetSource> datasets;
    std::vector<double> missing_rates{0.1, 0.5, 0.7};
    std::vector<ImputeMode> methods{ImputeMode::Lfa, ImputeMode::Zero};
    std::vector<std::uint64_t> seeds{1};
    RunConfig run;
    std::string out_dir = "pos2fs_report";
    nlohmann::json resolved; // fully resolved configuration, for provenance
};

namespace detail {

using nlohmann::json;

inline bool is_non_negative_integer(const json& j) {
    return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

// Reads fields off one JSON object, rejecting unknown keys.
class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw std::invalid_argument("boolean");
            } else if constexpr (std::is_unsigned_v<T>) {
                if (!is_non_negative_integer(*it)) throw std::invalid_argument("unsigned");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw std::invalid_argument("number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw std::invalid_argument("string");
            }
            out = it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError(child(key) + ": expected " + expected_name<T>());
        }
    }

    const json* object(const char* key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    void finish() const {
        for (const auto& [key, _] : obj_.items())
            if (!seen_.count(key)) throw ConfigError(child(key) + ": unknown field");
    }

private:
    template <class T>
    static std::string expected_name() {
        if constexpr (std::is_same_v<T, bool>) return "a boolean";
        else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
        else if constexpr (std::is_floating_point_v<T>) return "a number";
        else return "a string";
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

inline LabelColumn parse_label_column(const json& j, const std::string& path) {
    if (j.is_string()) return j.get<std::string>();
    if (is_non_negative_integer(j)) return j.get<std::size_t>();
    throw ConfigError(path + ": expected a column name or index");
}

inline SyntheticSpec parse_synthetic(const json& j, const std::string& path) {
    SyntheticSpec s;
    Fields f(j, path);
    f.get("instances", s.instances);
    f.get("informative", s.informative);
    f.get("redundant", s.redundant);
    f.get("noise", s.noise);
    f.get("classes", s.classes);
    f.get("noise_level", s.noise_level);
    f.get("separation", s.separation);
    f.get("seed", s.seed);
    f.finish();
    try {
        s.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

inline void parse_run(const json& j, RunConfig& run, const std::string& path) {
    Fields f(j, path);
    f.get("block_width", run.block_width);
    f.get("cv_folds", run.cv_folds);
    f.get("shuffle_stream", run.stream.shuffle);
    if (const auto* lfa = f.object("lfa")) {
        Fields g(*lfa, f.child("lfa"));
        g.get("rank", run.lfa.rank);
        g.get("lambda", run.lfa.lambda);
        g.get("eta", run.lfa.eta);
        g.get("max_epochs", run.lfa_train.max_epochs);
        g.get("tolerance", run.lfa_train.tolerance);
        g.get("init_scale", run.lfa_train.init_scale);
        g.get("warm_start", run.lfa_warm_start);
        g.finish();
    }
    if (const auto* pso = f.object("pso")) {
        Fields g(*pso, f.child("pso"));
        g.get("particles", run.pso.particles);
        g.get("iterations", run.pso.iterations);
        g.get("inertia", run.pso.inertia);
        g.get("cognitive", run.pso.cognitive);
        g.get("social", run.pso.social);
        g.get("threshold", run.pso.threshold);
        g.get("v_max", run.pso.v_max);
        g.get("per_dimension_random", run.pso.per_dimension_random);
        g.finish();
    }
    if (const auto* t = f.object("thresholds")) {
        Fields g(*t, f.child("thresholds"));
        g.get("alpha", run.thresholds.alpha);
        g.get("beta", run.thresholds.beta);
        g.finish();
    }
    if (const auto* ci = f.object("ci")) {
        Fields g(*ci, f.child("ci"));
        g.get("significance", run.ci.significance);
        g.get("max_conditioning", run.ci.max_conditioning);
        g.finish();
    }
    if (const auto* knn = f.object("knn")) {
        Fields g(*knn, f.child("knn"));
        g.get("k", run.knn.k);
        g.finish();
    }
    if (const auto* split = f.object("split")) {
        Fields g(*split, f.child("split"));
        g.get("train_fraction", run.split.train_fraction);
        g.finish();
    }
    f.finish();
    try {
        run.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline nlohmann::json resolve_json(const ExperimentMatrix& m) {
    json j;
    j["seed"] = m.seed;
    j["out_dir"] = m.out_dir;
    j["missing_rates"] = m.missing_rates;
    json methods = json::array();
    for (const auto mode : m.methods) methods.push_back(method_name(mode));
    j["methods"] = methods;
    j["seeds"] = m.seeds;
    json datasets = json::array();
    for (const auto& d : m.datasets) {
        json e;
        e["name"] = d.name;
        if (d.path) {
            e["path"] = *d.path;
            if (const auto* s = std::get_if<std::string>(&d.label_column)) e["label_column"] = *s;
            else e["label_column"] = std::get<std::size_t>(d.label_column);
        }
        if (d.synthetic) {
            const auto& s = *d.synthetic;
            e["synthetic"] = {{"instances", s.instances}, {"informative", s.informative},
                              {"redundant", s.redundant}, {"noise", s.noise},
                              {"classes", s.classes},     {"noise_level", s.noise_level},
                              {"separation", s.separation}, {"seed", s.seed}};
        }
        datasets.push_back(e);
    }
    j["datasets"] = datasets;
    const RunConfig& r = m.run;
    j["run"] = {
        {"block_width", r.block_width},
        {"cv_folds", r.cv_folds},
        {"shuffle_stream", r.stream.shuffle},
        {"lfa", {{"rank", r.lfa.rank}, {"lambda", r.lfa.lambda}, {"eta", r.lfa.eta},
                 {"max_epochs", r.lfa_train.max_epochs}, {"tolerance", r.lfa_train.tolerance},
                 {"init_scale", r.lfa_train.init_scale}, {"warm_start", r.lfa_warm_start}}},
        {"pso", {{"particles", r.pso.particles}, {"iterations", r.pso.iterations},
                 {"inertia", r.pso.inertia}, {"cognitive", r.pso.cognitive},
                 {"social", r.pso.social}, {"threshold", r.pso.threshold},
                 {"v_max", r.pso.v_max}, {"per_dimension_random", r.pso.per_dimension_random}}},
        {"thresholds", {{"alpha", r.thresholds.alpha}, {"beta", r.thresholds.beta}}},
        {"ci", {{"significance", r.ci.significance}, {"max_conditioning", r.ci.max_conditioning}}},
        {"knn", {{"k", r.knn.k}}},
        {"split", {{"train_fraction", r.split.train_fraction}}},
    };
    return j;
}

} // namespace detail

inline ImputeMode parse_method(const std::string& name) {
    if (name == kMethodLfa) return ImputeMode::Lfa;
    if (name == kMethodZero) return ImputeMode::Zero;
    throw ValidationError("unknown method '" + name + "' (expected pos2fs-lfa or pos2fs-zero)");
}

// Parses an experiment configuration. Relative dataset paths resolve against
// `base_dir`. `seed_override` (from POS2FS_SEED) replaces the top-level seed.
inline ExperimentMatrix parse_experiment(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {},
                                         std::optional<std::uint64_t> seed_override = std::nullopt) {
    using detail::Fields;
    ExperimentMatrix m;
    Fields root(j, "");
    root.get("seed", m.seed);
    root.get("out_dir", m.out_dir);
    if (seed_override) m.seed = *seed_override;

    LabelColumn default_label = std::string("label");
    if (const auto* lc = root.object("label_column")) default_label = detail::parse_label_column(*lc, "label_column");

    if (const auto* rates = root.object("missing_rates")) {
        if (!rates->is_array() || rates->empty()) throw ConfigError("missing_rates: expected a nonempty array");
        m.missing_rates.clear();
        for (std::size_t i = 0; i < rates->size(); ++i) {
            const auto& v = (*rates)[i];
            const std::string where = "missing_rates[" + std::to_string(i) + "]";
            if (!v.is_number()) throw ConfigError(where + ": expected a number");
            const double r = v.get<double>();
            if (!(r >= 0.0 && r < 1.0)) throw ConfigError(where + ": must lie in [0, 1)");
            m.missing_rates.push_back(r);
        }
    }
    if (const auto* methods = root.object("methods")) {
        if (!methods->is_array() || methods->empty()) throw ConfigError("methods: expected a nonempty array");
        m.methods.clear();
        for (std::size_t i = 0; i < methods->size(); ++i) {
            const std::string where = "methods[" + std::to_string(i) + "]";
            if (!(*methods)[i].is_string()) throw ConfigError(where + ": expected a string");
            try {
                m.methods.push_back(parse_method((*methods)[i].get<std::string>()));
            } catch (const ValidationError& e) {
                throw ConfigError(where + ": " + e.what());
            }
        }
    }
    if (const auto* seeds = root.object("seeds")) {
        if (!seeds->is_array() || seeds->empty()) throw ConfigError("seeds: expected a nonempty array");
        m.seeds.clear();
        for (std::size_t i = 0; i < seeds->size(); ++i) {
            if (!detail::is_non_negative_integer((*seeds)[i]))
                throw ConfigError("seeds[" + std::to_string(i) + "]: expected a non-negative integer");
            m.seeds.push_back((*seeds)[i].get<std::uint64_t>());
        }
    }

    const auto* datasets = root.object("datasets");
    if (datasets == nullptr || !datasets->is_array() || datasets->empty())
        throw ConfigError("datasets: expected a nonempty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < datasets->size(); ++i) {
        const std::string where = "datasets[" + std::to_string(i) + "]";
        Fields f((*datasets)[i], where);
        DatasetSource src;
        src.label_column = default_label;
        f.get("name", src.name);
        std::string path;
        f.get("path", path);
        if (!path.empty()) {
            const std::filesystem::path p(path);
            src.path = (p.is_relative() && !base_dir.empty() ? base_dir / p : p).string();
        }
        if (const auto* lc = f.object("label_column"))
            src.label_column = detail::parse_label_column(*lc, f.child("label_column"));
        if (const auto* syn = f.object("synthetic"))
            src.synthetic = detail::parse_synthetic(*syn, f.child("synthetic"));
        f.finish();
        if (src.path.has_value() == src.synthetic.has_value())
            throw ConfigError(where + ": exactly one of 'path' or 'synthetic' is required");
        if (src.name.empty())
            src.name = src.path ? std::filesystem::path(*src.path).stem().string() : "synthetic" + std::to_string(i);
        if (!names.insert(src.name).second) throw ConfigError(where + ".name: duplicate dataset name '" + src.name + "'");
        m.datasets.push_back(std::move(src));
    }

    if (const auto* run = root.object("run")) detail::parse_run(*run, m.run, "run");
    root.finish();
    m.resolved = detail::resolve_json(m);
    return m;
}

inline ExperimentMatrix load_experiment(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_experiment(j, path.parent_path(), seed_override);
}

inline Dataset materialize(const DatasetSource& src) {
    if (src.synthetic) {
        Dataset d = make_synthetic(*src.synthetic).dataset;
        normalize_minmax(d);
        return d;
    }
    return load_csv(*src.path, src.label_column);
}

// ============================================================================
// Cell execution
// ============================================================================

struct CellSpec {
    std::size_t dataset = 0; // index into ExperimentMatrix::datasets
    double missing_rate = 0.0;
    ImputeMode method = ImputeMode::Lfa;
    std::uint64_t seed = 0;
};

// Dataset-major, then rate, method, seed.
inline std::vector<CellSpec> enumerate_cells(const ExperimentMatrix& m) {
    std::vector<CellSpec> cells;
    for (std::size_t d = 0; d < m.datasets.size(); ++d)
        for (const double rate : m.missing_rates)
            for (const auto method : m.methods)
                for (const auto seed : m.seeds) cells.push_back({d, rate, method, seed});
    return cells;
}

inline RunConfig cell_config(const ExperimentMatrix& m, const CellSpec& cell) {
    RunConfig cfg = m.run;
    cfg.reseed(derive_seed(m.seed, cell.seed));
    cfg.mask.missing_rate = cell.missing_rate;
    cfg.mode = cell.method;
    return cfg;
}

struct CellOutput {
    CellRecord record;
    std::optional<SelectionResult> result;
};

using TraceSink = std::function<void(const CellSpec&, const SelectionResult&)>;

// Runs every cell, up to `workers` at a time. A failing cell is recorded with
// its error; the others still run.
inline std::vector<CellRecord> run_matrix(const ExperimentMatrix& m, std::size_t workers = 1,
                                          const TraceSink& sink = {}) {
    std::vector<std::optional<Dataset>> data(m.datasets.size());
    std::vector<std::string> load_errors(m.datasets.size());
    for (std::size_t i = 0; i < m.datasets.size(); ++i) {
        try {
            data[i] = materialize(m.datasets[i]);
        } catch (const std::exception& e) {
            load_errors[i] = e.what();
        }
    }

    const auto specs = enumerate_cells(m);
    std::vector<CellRecord> records(specs.size());
    std::atomic<std::size_t> next{0};
    std::mutex sink_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            const CellSpec& spec = specs[i];
            CellRecord& rec = records[i];
            rec.dataset = m.datasets[spec.dataset].name;
            rec.missing_rate = spec.missing_rate;
            rec.method = method_name(spec.method);
            rec.seed = spec.seed;
            if (!data[spec.dataset]) {
                rec.ok = false;
                rec.error = "dataset load failed: " + load_errors[spec.dataset];
                continue;
            }
            try {
                const SelectionResult r = run_selection(*data[spec.dataset], cell_config(m, spec));
                rec.selected_ids = r.selected;
                rec.selected_count = r.selected_count;
                rec.accuracy = r.accuracy;
                rec.degenerate = r.degenerate;
                rec.wall_seconds = r.wall_seconds;
                if (sink) {
                    std::lock_guard lock(sink_mutex);
                    sink(spec, r);
                }
            } catch (const std::exception& e) {
                rec.ok = false;
                rec.error = e.what();
            }
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(workers, specs.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return records;
}

} // namespace pos2fs
