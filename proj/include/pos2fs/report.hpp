#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "pos2fs/common.hpp"
#include "pos2fs/stats.hpp"

namespace pos2fs {

// One (dataset, missing rate, method, seed) experiment cell.
struct CellRecord {
    std::string dataset;
    double missing_rate = 0.0;
    std::string method;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string error;
    std::size_t selected_count = 0;
    double accuracy = 0.0;
    bool degenerate = false;
    std::vector<std::size_t> selected_ids;
    double wall_seconds = 0.0;
};

namespace detail {

inline std::string fmt_double(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// Shortest representation that reads back to the same double.
inline std::string fmt_rate(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// Commas and newlines would break the flat CSV layout.
inline std::string sanitize(std::string s) {
    for (auto& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
    return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

} // namespace detail

inline const char* kCellsHeader =
    "dataset,missing_rate,method,seed,status,selected_count,accuracy,degenerate,selected_ids,error,"
    "wall_time_s";

// CSV row. Everything except the trailing wall-time column is a pure
// function of the configuration.
inline std::string format_cell(const CellRecord& c, bool include_timing = true) {
    std::string ids;
    for (std::size_t i = 0; i < c.selected_ids.size(); ++i)
        ids += (i ? ";" : "") + std::to_string(c.selected_ids[i]);
    std::string row = detail::sanitize(c.dataset) + "," + detail::fmt_rate(c.missing_rate) + "," +
                      c.method + "," + std::to_string(c.seed) + "," + (c.ok ? "ok" : "error") + "," +
                      std::to_string(c.selected_count) + "," + detail::fmt_double(c.accuracy, 10) +
                      "," + (c.degenerate ? "1" : "0") + "," + ids + "," +
                      detail::sanitize(c.error);
    if (include_timing) row += "," + detail::fmt_double(c.wall_seconds, 3);
    return row;
}

inline void write_cells(const std::filesystem::path& path, const std::vector<CellRecord>& cells) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << kCellsHeader << '\n';
    for (const auto& c : cells) out << format_cell(c) << '\n';
}

inline std::vector<CellRecord> read_cells(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": empty cells file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split(line, ',');
    const auto expected = detail::split(kCellsHeader, ',');
    // The timing column is optional so deterministic records can be re-read.
    if (header.size() < expected.size() - 1 || header.size() > expected.size() ||
        !std::equal(header.begin(), header.end(), expected.begin()))
        throw ParseError(path.string() + ": unexpected cells header");

    std::vector<CellRecord> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        if (f.size() != header.size())
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(f.size()) + " fields, expected " +
                             std::to_string(header.size()));
        try {
            CellRecord c;
            c.dataset = f[0];
            c.missing_rate = std::stod(f[1]);
            c.method = f[2];
            c.seed = std::stoull(f[3]);
            if (f[4] != "ok" && f[4] != "error") throw std::invalid_argument("status");
            c.ok = f[4] == "ok";
            c.selected_count = std::stoul(f[5]);
            c.accuracy = std::stod(f[6]);
            c.degenerate = f[7] == "1";
            for (const auto& id : detail::split(f[8], ';'))
                if (!id.empty()) c.selected_ids.push_back(std::stoul(id));
            c.error = f[9];
            if (f.size() > 10) c.wall_seconds = std::stod(f[10]);
            cells.push_back(std::move(c));
        } catch (const std::logic_error&) {
            throw ParseError(path.string() + ": row " + std::to_string(line_no) + " is malformed");
        }
    }
    return cells;
}

// ============================================================================
// Aggregates
// ============================================================================

struct MeanRow {
    std::string dataset;
    double missing_rate = 0.0;
    std::string method;
    std::size_t cells = 0;
    double mean = 0.0;
};

struct WilcoxonRow {
    double missing_rate = 0.0;
    std::size_t datasets = 0;      // datasets with both methods present
    WilcoxonResult ranks;
    double p_exact = 1.0;
    std::vector<std::string> absent; // datasets missing one of the methods
};

struct Aggregates {
    std::vector<MeanRow> counts;     // mean selected-count per cell group
    std::vector<MeanRow> accuracy;   // mean accuracy per cell group
    std::vector<WilcoxonRow> wilcoxon;
};

inline constexpr const char* kMethodLfa = "pos2fs-lfa";
inline constexpr const char* kMethodZero = "pos2fs-zero";

// Means are over successful cells, grouped by (dataset, rate, method). The
// Wilcoxon pairs, per rate, are (lfa, zero) mean accuracies per dataset.
inline Aggregates aggregate(const std::vector<CellRecord>& cells) {
    using Key = std::tuple<std::string, double, std::string>;
    std::map<Key, std::tuple<std::size_t, double, double>> groups;
    std::vector<std::string> dataset_order;
    for (const auto& c : cells) {
        if (std::find(dataset_order.begin(), dataset_order.end(), c.dataset) == dataset_order.end())
            dataset_order.push_back(c.dataset);
        if (!c.ok) continue;
        auto& [n, count_sum, acc_sum] = groups[{c.dataset, c.missing_rate, c.method}];
        ++n;
        count_sum += static_cast<double>(c.selected_count);
        acc_sum += c.accuracy;
    }

    Aggregates out;
    std::map<double, std::map<std::string, std::map<std::string, double>>> by_rate;
    for (const auto& [key, value] : groups) {
        const auto& [dataset, rate, method] = key;
        const auto& [n, count_sum, acc_sum] = value;
        const double dn = static_cast<double>(n);
        out.counts.push_back({dataset, rate, method, n, count_sum / dn});
        out.accuracy.push_back({dataset, rate, method, n, acc_sum / dn});
        by_rate[rate][dataset][method] = acc_sum / dn;
    }
    for (const auto& c : cells) by_rate.try_emplace(c.missing_rate);

    for (const auto& [rate, per_dataset] : by_rate) {
        WilcoxonRow row;
        row.missing_rate = rate;
        std::vector<double> a, b;
        for (const auto& name : dataset_order) {
            const auto it = per_dataset.find(name);
            const bool has_both = it != per_dataset.end() && it->second.count(kMethodLfa) &&
                                  it->second.count(kMethodZero);
            if (!has_both) {
                row.absent.push_back(name);
                continue;
            }
            a.push_back(it->second.at(kMethodLfa));
            b.push_back(it->second.at(kMethodZero));
        }
        row.datasets = a.size();
        if (!a.empty()) {
            row.ranks = wilcoxon_signed_rank(a, b);
            row.p_exact = wilcoxon_exact_p(a, b);
        }
        out.wilcoxon.push_back(std::move(row));
    }
    return out;
}

inline void write_mean_csv(const std::filesystem::path& path, const std::vector<MeanRow>& rows,
                           const char* value_name) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << "dataset,missing_rate,method,cells," << value_name << '\n';
    for (const auto& r : rows)
        out << detail::sanitize(r.dataset) << ',' << detail::fmt_rate(r.missing_rate) << ','
            << r.method << ',' << r.cells << ',' << detail::fmt_double(r.mean, 6) << '\n';
}

inline void write_wilcoxon_csv(const std::filesystem::path& path, const std::vector<WilcoxonRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path.string() + "'");
    out << "missing_rate,datasets,r_plus,r_minus,n_effective,p_exact,absent\n";
    for (const auto& r : rows) {
        std::string absent;
        for (std::size_t i = 0; i < r.absent.size(); ++i)
            absent += (i ? ";" : "") + detail::sanitize(r.absent[i]);
        out << detail::fmt_rate(r.missing_rate) << ',' << r.datasets << ','
            << detail::fmt_double(r.ranks.r_plus, 1) << ',' << detail::fmt_double(r.ranks.r_minus, 1)
            << ',' << r.ranks.n_effective << ',' << detail::fmt_double(r.p_exact, 6) << ','
            << absent << '\n';
    }
}

inline std::string format_summary(const Aggregates& agg) {
    std::ostringstream out;
    char line[256];
    out << "Selected feature count (mean over seeds)\n";
    std::snprintf(line, sizeof line, "%-24s %8s %-12s %6s %10s\n", "dataset", "rate", "method", "cells", "count");
    out << line;
    for (const auto& r : agg.counts) {
        std::snprintf(line, sizeof line, "%-24s %8s %-12s %6zu %10.2f\n", r.dataset.c_str(),
                      detail::fmt_rate(r.missing_rate).c_str(), r.method.c_str(), r.cells, r.mean);
        out << line;
    }
    out << "\nTest accuracy (mean over seeds)\n";
    std::snprintf(line, sizeof line, "%-24s %8s %-12s %6s %10s\n", "dataset", "rate", "method", "cells", "accuracy");
    out << line;
    for (const auto& r : agg.accuracy) {
        std::snprintf(line, sizeof line, "%-24s %8s %-12s %6zu %10.4f\n", r.dataset.c_str(),
                      detail::fmt_rate(r.missing_rate).c_str(), r.method.c_str(), r.cells, r.mean);
        out << line;
    }
    out << "\nWilcoxon signed-rank, pos2fs-lfa vs pos2fs-zero accuracy across datasets\n";
    std::snprintf(line, sizeof line, "%8s %9s %8s %8s %6s %9s\n", "rate", "datasets", "R+", "R-", "n_eff", "p_exact");
    out << line;
    for (const auto& r : agg.wilcoxon) {
        if (r.datasets == 0) {
            std::snprintf(line, sizeof line, "%8s %9s %8s %8s %6s %9s\n",
                          detail::fmt_rate(r.missing_rate).c_str(), "0", "absent", "absent", "-", "-");
        } else {
            std::snprintf(line, sizeof line, "%8s %9zu %8.1f %8.1f %6zu %9.4f\n",
                          detail::fmt_rate(r.missing_rate).c_str(), r.datasets, r.ranks.r_plus,
                          r.ranks.r_minus, r.ranks.n_effective, r.p_exact);
        }
        out << line;
    }
    return out.str();
}

// Writes summary.txt and the three per-figure CSVs into `dir`. `preamble`
// (for example the resolved configuration) is prepended to summary.txt.
inline Aggregates write_report(const std::filesystem::path& dir, const std::vector<CellRecord>& cells,
                               const std::string& preamble = {}) {
    std::filesystem::create_directories(dir);
    const Aggregates agg = aggregate(cells);
    write_mean_csv(dir / "fig1_counts.csv", agg.counts, "mean_selected_count");
    write_mean_csv(dir / "fig2_accuracy.csv", agg.accuracy, "mean_accuracy");
    write_wilcoxon_csv(dir / "table4_wilcoxon.csv", agg.wilcoxon);
    std::ofstream summary(dir / "summary.txt");
    if (!summary) throw ParseError("cannot write summary in '" + dir.string() + "'");
    summary << preamble << format_summary(agg);
    return agg;
}

} // namespace pos2fs
