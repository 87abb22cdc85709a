#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "pos2fs/pos2fs.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("POS2FS_SEED");
    if (v == nullptr || *v == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const auto seed = std::stoull(v, &used);
        if (used != std::string(v).size()) throw std::invalid_argument(v);
        return seed;
    } catch (const std::exception&) {
        throw pos2fs::ConfigError("POS2FS_SEED: expected a non-negative integer, got '" + std::string(v) + "'");
    }
}

std::string cell_key(const pos2fs::ExperimentMatrix& m, const pos2fs::CellSpec& c) {
    return m.datasets[c.dataset].name + "," + pos2fs::detail::fmt_rate(c.missing_rate) + "," +
           pos2fs::method_name(c.method) + "," + std::to_string(c.seed);
}

// Per-cell traces, keyed so output order does not depend on scheduling.
struct Traces {
    std::map<std::string, std::string> loss, swarm, decisions;

    void add(const pos2fs::ExperimentMatrix& m, const pos2fs::CellSpec& c, const pos2fs::SelectionResult& r) {
        const std::string key = cell_key(m, c);
        std::string& loss_rows = loss[key];
        std::string& swarm_rows = swarm[key];
        std::string& decision_rows = decisions[key];
        for (const auto& s : r.steps) {
            const std::string prefix = key + "," + std::to_string(s.step) + ",";
            for (std::size_t e = 0; e < s.loss_trace.size(); ++e)
                loss_rows += prefix + std::to_string(e) + "," + pos2fs::detail::fmt_rate(s.loss_trace[e]) + "\n";
            for (std::size_t i = 0; i < s.fitness_trace.size(); ++i)
                swarm_rows += prefix + std::to_string(i + 1) + "," + pos2fs::detail::fmt_rate(s.fitness_trace[i]) + "\n";
            for (const auto& d : s.decisions)
                decision_rows += prefix + std::to_string(d.feature_id) + "," + pos2fs::to_string(d.region) + "," +
                                 pos2fs::detail::fmt_rate(d.score) + "," + (d.admitted ? "1" : "0") + "," +
                                 (d.eliminated ? "1" : "0") + "\n";
        }
    }

    static void write(const std::filesystem::path& path, const char* header,
                      const std::map<std::string, std::string>& rows) {
        std::ofstream out(path);
        if (!out) throw pos2fs::ParseError("cannot write '" + path.string() + "'");
        out << "dataset,missing_rate,method,seed,step," << header << '\n';
        for (const auto& [_, body] : rows) out << body;
    }

    void write_all(const std::filesystem::path& dir) const {
        write(dir / "trace_lfa_loss.csv", "epoch,mean_loss", loss);
        write(dir / "trace_pso_gbest.csv", "iteration,gbest_fitness", swarm);
        write(dir / "trace_decisions.csv", "feature_id,region,score,admitted,eliminated", decisions);
    }
};

int cmd_run(const std::string& config_path, std::size_t workers, bool verbose) {
    pos2fs::ExperimentMatrix m;
    try {
        m = pos2fs::load_experiment(config_path, env_seed());
    } catch (const pos2fs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    }
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());

    Traces traces;
    pos2fs::TraceSink sink;
    if (verbose)
        sink = [&](const pos2fs::CellSpec& c, const pos2fs::SelectionResult& r) {
            traces.add(m, c, r);
            std::cerr << "done " << cell_key(m, c) << ": " << r.selected_count << " features, accuracy "
                      << r.accuracy << '\n';
        };
    const auto cells = pos2fs::run_matrix(m, workers, sink);

    const std::filesystem::path out_dir(m.out_dir);
    std::filesystem::create_directories(out_dir);
    pos2fs::write_cells(out_dir / "cells.csv", cells);
    const std::string preamble = "Resolved configuration\n" + m.resolved.dump(2) + "\n\n";
    pos2fs::write_report(out_dir, cells, preamble);
    if (verbose) traces.write_all(out_dir);

    std::size_t failed = 0;
    for (const auto& c : cells) {
        if (c.ok) continue;
        ++failed;
        std::cerr << "cell failed: " << c.dataset << " rate=" << pos2fs::detail::fmt_rate(c.missing_rate)
                  << " method=" << c.method << " seed=" << c.seed << ": " << c.error << '\n';
    }
    std::cout << cells.size() - failed << "/" << cells.size() << " cells ok; report in " << out_dir.string()
              << '\n';
    return failed == 0 ? kExitOk : kExitPartial;
}

int cmd_synth(const std::string& out, const pos2fs::SyntheticSpec& spec) {
    try {
        spec.validate();
    } catch (const pos2fs::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }
    const auto data = pos2fs::make_synthetic(spec);
    pos2fs::write_csv(out, data.dataset);
    std::ofstream sidecar(out + ".informative.txt");
    if (!sidecar) throw pos2fs::ParseError("cannot write '" + out + ".informative.txt'");
    for (const auto id : data.informative) sidecar << id << '\n';
    return kExitOk;
}

int cmd_report(const std::string& cells_path, const std::string& out_dir) {
    const auto cells = pos2fs::read_cells(cells_path);
    const auto agg = pos2fs::write_report(out_dir, cells);
    std::cout << pos2fs::format_summary(agg);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Online sparse streaming feature selection"};
    app.require_subcommand(1);

    std::string config_path;
    std::size_t workers = 1;
    bool verbose = false;
    auto* run = app.add_subcommand("run", "Run an experiment matrix from a JSON config");
    run->add_option("--config", config_path, "Experiment config file")->required();
    run->add_option("--workers", workers, "Concurrent cells (0 = hardware threads)");
    run->add_flag("--verbose", verbose, "Log progress and write per-step trace CSVs");

    std::string synth_out;
    pos2fs::SyntheticSpec spec;
    auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with planted informative features");
    synth->add_option("--out", synth_out, "Output CSV path")->required();
    synth->add_option("--instances", spec.instances, "Number of instances")->required();
    synth->add_option("--informative", spec.informative, "Informative features")->required();
    synth->add_option("--noise", spec.noise, "Label-independent noise features")->required();
    synth->add_option("--redundant", spec.redundant, "Redundant features")->required();
    synth->add_option("--classes", spec.classes, "Number of classes")->required();
    synth->add_option("--seed", spec.seed, "Generator seed")->required();
    synth->add_option("--noise-level", spec.noise_level, "Noise std-dev on redundant features");
    synth->add_option("--separation", spec.separation, "Class-centroid offset");

    std::string cells_path, report_dir;
    auto* report = app.add_subcommand("report", "Rebuild aggregate tables from a cells file");
    report->add_option("--cells", cells_path, "cells.csv from a previous run")->required();
    report->add_option("--out", report_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, workers, verbose);
        if (synth->parsed()) return cmd_synth(synth_out, spec);
        return cmd_report(cells_path, report_dir);
    } catch (const pos2fs::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
