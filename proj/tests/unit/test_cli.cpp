#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pos2fs/experiment.hpp"
#include "support/oracles.hpp"

using namespace pos2fs;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(POS2FS_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

json small_synthetic(const std::string& name, std::uint64_t seed) {
    return {{"name", name}, {"synthetic", {{"instances", 120}, {"informative", 3}, {"noise", 5}, {"seed", seed}}}};
}

json quick_run() { return {{"pso", {{"particles", 10}, {"iterations", 5}}}, {"lfa", {{"max_epochs", 50}}}}; }

std::string config_error(const json& j) {
    try {
        parse_experiment(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

CellRecord cell(std::string dataset, double rate, std::string method, std::uint64_t seed, double acc, std::size_t count) {
    CellRecord c;
    c.dataset = std::move(dataset);
    c.missing_rate = rate;
    c.method = std::move(method);
    c.seed = seed;
    c.accuracy = acc;
    c.selected_count = count;
    return c;
}

} // namespace

TEST(ParseExperiment, ErrorsNameTheFieldPath) {
    EXPECT_NE(config_error(json{{"datasets", json::array()}}).find("datasets"), std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1)}}, {"missing_rates", {0.1, 1.0}}})
                  .find("missing_rates[1]"),
              std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1)}}, {"run", {{"pso", {{"iterations", "x"}}}}}})
                  .find("run.pso.iterations"),
              std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1)}}, {"methods", {"knn"}}}).find("methods[0]"),
              std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1)}}, {"colour", 1}}).find("colour"), std::string::npos);
    EXPECT_NE(config_error({{"datasets", {{{"name", "x"}}}}}).find("datasets[0]"), std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1), small_synthetic("a", 2)}}}).find("duplicate"),
              std::string::npos);
    EXPECT_NE(config_error({{"datasets", {small_synthetic("a", 1)}}, {"run", {{"thresholds", {{"alpha", 0.4}}}}}})
                  .find("run"),
              std::string::npos);
}

TEST(ParseExperiment, DefaultsAndOverrides) {
    const json j{{"seed", 5}, {"datasets", {small_synthetic("a", 1)}}, {"run", {{"block_width", 4}}}};
    const auto m = parse_experiment(j);
    EXPECT_EQ(m.seed, 5u);
    EXPECT_EQ(m.run.block_width, 4u);
    EXPECT_EQ(m.missing_rates, (std::vector<double>{0.1, 0.5, 0.7}));
    EXPECT_EQ(m.methods.size(), 2u);
    EXPECT_EQ(parse_experiment(j, {}, 99).seed, 99u);
    EXPECT_EQ(m.resolved["run"]["block_width"], 4);
    EXPECT_EQ(m.resolved["run"]["thresholds"]["alpha"], 0.9);
    // The resolved form parses back to the same configuration.
    json back = m.resolved;
    EXPECT_EQ(parse_experiment(back).resolved, m.resolved);
}

TEST(RunMatrix, CardinalityAndByteIdenticalRerun) {
    auto m = parse_experiment({{"datasets", {small_synthetic("a", 1)}}, {"missing_rates", {0.5}},
                               {"seeds", {3}}, {"run", quick_run()}});
    const auto first = run_matrix(m, 2);
    ASSERT_EQ(first.size(), 2u);
    EXPECT_EQ(first[0].method, "pos2fs-lfa");
    EXPECT_EQ(first[1].method, "pos2fs-zero");
    const auto second = run_matrix(m, 1);
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_TRUE(first[i].ok) << first[i].error;
        EXPECT_EQ(format_cell(first[i], false), format_cell(second[i], false));
    }
}

TEST(RunMatrix, TwelveCellsWilcoxonPerRate) {
    auto m = parse_experiment({{"datasets", {small_synthetic("a", 1), small_synthetic("b", 2)}},
                               {"missing_rates", {0.1, 0.5, 0.7}}, {"seeds", {1}}, {"run", quick_run()}});
    const auto cells = run_matrix(m, 2);
    ASSERT_EQ(cells.size(), 12u);
    const auto agg = aggregate(cells);
    ASSERT_EQ(agg.wilcoxon.size(), 3u);
    for (const auto& row : agg.wilcoxon) {
        std::vector<double> lfa, zero;
        for (const std::string ds : {"a", "b"})
            for (const auto& c : cells)
                if (c.dataset == ds && c.missing_rate == row.missing_rate)
                    (c.method == "pos2fs-lfa" ? lfa : zero).push_back(c.accuracy);
        const auto o = oracle::signed_rank(lfa, zero);
        EXPECT_EQ(row.datasets, 2u);
        EXPECT_DOUBLE_EQ(row.ranks.r_plus, o.plus);
        EXPECT_DOUBLE_EQ(row.ranks.r_minus, o.minus);
    }
}

TEST(RunMatrix, LoadFailureIsPerCell) {
    auto m = parse_experiment({{"datasets", {small_synthetic("a", 1), {{"name", "gone"}, {"path", "/nonexistent.csv"}}}},
                               {"missing_rates", {0.1}}, {"run", quick_run()}});
    const auto cells = run_matrix(m, 1);
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_TRUE(cells[0].ok);
    EXPECT_FALSE(cells[2].ok);
    EXPECT_NE(cells[2].error.find("cannot open"), std::string::npos);
}

TEST(Report, AllWinsGivesTwentyOneZero) {
    std::vector<CellRecord> cells;
    for (int d = 0; d < 6; ++d) {
        cells.push_back(cell("d" + std::to_string(d), 0.5, "pos2fs-lfa", 1, 0.8 + 0.01 * d, 3));
        cells.push_back(cell("d" + std::to_string(d), 0.5, "pos2fs-zero", 1, 0.7, 4));
    }
    const auto agg = aggregate(cells);
    ASSERT_EQ(agg.wilcoxon.size(), 1u);
    EXPECT_EQ(agg.wilcoxon[0].ranks.r_plus, 21.0);
    EXPECT_EQ(agg.wilcoxon[0].ranks.r_minus, 0.0);
}

TEST(Report, SingleCellAndAbsentPairs) {
    const auto agg = aggregate({cell("only", 0.1, "pos2fs-lfa", 1, 0.75, 2)});
    EXPECT_EQ(agg.counts.size(), 1u);
    EXPECT_EQ(agg.accuracy.size(), 1u);
    ASSERT_EQ(agg.wilcoxon.size(), 1u);
    EXPECT_EQ(agg.wilcoxon[0].datasets, 0u);
    EXPECT_EQ(agg.wilcoxon[0].absent, (std::vector<std::string>{"only"}));
    EXPECT_NE(format_summary(agg).find("absent"), std::string::npos);
}

TEST(Report, MeansMatchHandComputation) {
    std::vector<CellRecord> cells{cell("x", 0.7, "pos2fs-lfa", 1, 0.8, 3), cell("x", 0.7, "pos2fs-lfa", 2, 0.6, 6),
                                  cell("x", 0.7, "pos2fs-lfa", 3, 0.7, 4), cell("x", 0.7, "pos2fs-zero", 1, 0.5, 1)};
    CellRecord failed = cell("x", 0.7, "pos2fs-zero", 2, 0.0, 0);
    failed.ok = false;
    failed.error = "boom, with comma";
    cells.push_back(failed);
    const auto agg = aggregate(cells);
    ASSERT_EQ(agg.accuracy.size(), 2u);
    EXPECT_NEAR(agg.accuracy[0].mean, (0.8 + 0.6 + 0.7) / 3.0, 1e-15);
    EXPECT_NEAR(agg.counts[0].mean, 13.0 / 3.0, 1e-15);
    EXPECT_EQ(agg.accuracy[1].cells, 1u);

    // Aggregates recompute identically from the written cells file.
    const auto dir = oracle::temp_dir("report_roundtrip");
    write_cells(dir / "cells.csv", cells);
    const auto back = read_cells(dir / "cells.csv");
    ASSERT_EQ(back.size(), cells.size());
    EXPECT_FALSE(back[4].ok);
    EXPECT_EQ(format_summary(aggregate(back)), format_summary(agg));
}

TEST(Report, RejectsMalformedCells) {
    const auto dir = oracle::temp_dir("report_bad");
    std::ofstream(dir / "a.csv") << "nope\n";
    std::ofstream(dir / "b.csv") << kCellsHeader << "\nx,0.1,pos2fs-lfa,1,ok,abc,0.5,0,,,0\n";
    EXPECT_THROW(read_cells(dir / "a.csv"), ParseError);
    EXPECT_THROW(read_cells(dir / "b.csv"), ParseError);
}

TEST(Cli, SynthWritesCsvAndSidecar) {
    const auto dir = oracle::temp_dir("cli_synth");
    const std::string flags = " --instances 300 --informative 5 --noise 15 --redundant 0 --classes 2 --seed 4";
    ASSERT_EQ(run_cli("synth --out " + (dir / "a.csv").string() + flags), 0);
    ASSERT_EQ(run_cli("synth --out " + (dir / "b.csv").string() + flags), 0);
    const Dataset d = load_csv((dir / "a.csv").string(), std::string("label"));
    EXPECT_EQ(d.rows(), 300u);
    EXPECT_EQ(d.features(), 20u);
    EXPECT_EQ(slurp(dir / "a.csv.informative.txt"), "0\n1\n2\n3\n4\n");
    EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
    EXPECT_EQ(run_cli("synth --out " + (dir / "c.csv").string() +
                      " --instances 300 --informative 0 --noise 15 --redundant 0 --classes 2 --seed 4"),
              2);
}

TEST(Cli, RunExitCodesAndOutputs) {
    const auto dir = oracle::temp_dir("cli_run");
    json cfg{{"out_dir", (dir / "out").string()}, {"datasets", {small_synthetic("a", 1)}}, {"missing_rates", {0.5}},
             {"run", quick_run()}};
    std::ofstream(dir / "ok.json") << cfg.dump();
    cfg["datasets"].push_back({{"name", "gone"}, {"path", "missing.csv"}});
    std::ofstream(dir / "partial.json") << cfg.dump();
    std::ofstream(dir / "bad.json") << R"({"datasets": [], "seed": 1})";

    EXPECT_EQ(run_cli("run --config " + (dir / "ok.json").string()), 0);
    for (const char* f : {"cells.csv", "summary.txt", "fig1_counts.csv", "fig2_accuracy.csv", "table4_wilcoxon.csv"})
        EXPECT_TRUE(std::filesystem::exists(dir / "out" / f)) << f;
    EXPECT_NE(slurp(dir / "out" / "summary.txt").find("\"block_width\""), std::string::npos);
    EXPECT_EQ(run_cli("run --config " + (dir / "partial.json").string()), 3);
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string()), 2);
    EXPECT_EQ(run_cli("run"), 2);
    EXPECT_EQ(run_cli("report --cells " + (dir / "out" / "cells.csv").string() + " --out " + (dir / "rep").string()),
              0);
    EXPECT_EQ(slurp(dir / "rep" / "fig2_accuracy.csv"), slurp(dir / "out" / "fig2_accuracy.csv"));
}
