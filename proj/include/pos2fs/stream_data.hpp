#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pos2fs/common.hpp"

namespace pos2fs {

// ============================================================================
// Dataset
// ============================================================================

// Tabular data, N instances by F features. `observed` marks which entries
// carry a real value; unobserved entries hold 0 and must not be read.
struct Dataset {
    Matrix values;
    std::vector<int> labels;
    std::vector<std::string> feature_names;
    Mask observed;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t features() const { return static_cast<std::size_t>(values.cols()); }

    std::size_t observed_count() const { return static_cast<std::size_t>(observed.count()); }

    void validate() const {
        if (labels.size() != rows())
            throw ValidationError("dataset: label count " + std::to_string(labels.size()) +
                                  " does not match row count " + std::to_string(rows()));
        if (rows() < 2) throw ValidationError("dataset: at least 2 instances required");
        if (std::set<int>(labels.begin(), labels.end()).size() < 2)
            throw ValidationError("dataset: at least 2 distinct labels required");
        if (!values.allFinite()) throw ValidationError("dataset: non-finite feature value");
        if (observed.rows() != values.rows() || observed.cols() != values.cols())
            throw ValidationError("dataset: observed mask shape mismatch");
        if (!feature_names.empty() && feature_names.size() != features())
            throw ValidationError("dataset: feature name count mismatch");
    }

    // Fully observed dataset from dense values.
    static Dataset dense(Matrix values, std::vector<int> labels) {
        Dataset d;
        d.observed = Mask::Constant(values.rows(), values.cols(), true);
        d.values = std::move(values);
        d.labels = std::move(labels);
        return d;
    }

    // Row subset, preserving column order and mask.
    Dataset select_rows(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.values.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
        out.observed.resize(static_cast<Eigen::Index>(idx.size()), values.cols());
        out.labels.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto src = static_cast<Eigen::Index>(idx[r]);
            out.values.row(static_cast<Eigen::Index>(r)) = values.row(src);
            out.observed.row(static_cast<Eigen::Index>(r)) = observed.row(src);
            out.labels.push_back(labels[idx[r]]);
        }
        out.feature_names = feature_names;
        return out;
    }
};

// Min-max scale each column to [0, 1] using observed entries only.
// Constant (or single-observation) columns map to 0.
inline void normalize_minmax(Dataset& d) {
    for (Eigen::Index c = 0; c < d.values.cols(); ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
            if (!d.observed(r, c)) continue;
            lo = std::min(lo, d.values(r, c));
            hi = std::max(hi, d.values(r, c));
        }
        const double span = hi - lo;
        for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
            if (!d.observed(r, c)) {
                d.values(r, c) = 0.0;
            } else {
                d.values(r, c) = span > 0.0 ? (d.values(r, c) - lo) / span : 0.0;
            }
        }
    }
}

// ============================================================================
// CSV loading
// ============================================================================

using LabelColumn = std::variant<std::string, std::size_t>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        const auto cell = trim(std::string_view(line).substr(
            start, pos == std::string::npos ? std::string::npos : pos - start));
        out.emplace_back(cell);
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size()) return std::nullopt;
    return v;
}

inline bool is_missing_cell(std::string_view s) { return s.empty() || s == "NA"; }

} // namespace detail

// Reads a CSV with a header row. Feature columns are every column other than
// the label column, in file order. Empty or "NA" cells are missing. Feature
// values are min-max normalized per column over observed entries.
inline Dataset load_csv(const std::string& path, const LabelColumn& label_column) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    const auto header = detail::split_csv_line(line);

    std::size_t label_idx = 0;
    if (const auto* name = std::get_if<std::string>(&label_column)) {
        const auto it = std::find(header.begin(), header.end(), *name);
        if (it == header.end()) throw ParseError(path + ": label column '" + *name + "' not found");
        label_idx = static_cast<std::size_t>(it - header.begin());
    } else {
        label_idx = std::get<std::size_t>(label_column);
        if (label_idx >= header.size())
            throw ParseError(path + ": label column index " + std::to_string(label_idx) +
                             " out of range");
    }

    const std::size_t arity = header.size();
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> seen;
    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != arity)
            throw ParseError(path + ": row " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " fields, expected " +
                             std::to_string(arity));
        std::vector<double> row;
        std::vector<bool> obs;
        row.reserve(arity - 1);
        for (std::size_t c = 0; c < arity; ++c) {
            if (c == label_idx) {
                if (detail::is_missing_cell(cells[c]))
                    throw ParseError(path + ": row " + std::to_string(line_no) + " has no label");
                raw_labels.push_back(cells[c]);
                continue;
            }
            if (detail::is_missing_cell(cells[c])) {
                row.push_back(0.0);
                obs.push_back(false);
                continue;
            }
            const auto v = detail::parse_double(cells[c]);
            if (!v || !std::isfinite(*v))
                throw ParseError(path + ": row " + std::to_string(line_no) + ", column '" +
                                 header[c] + "': non-numeric value '" + cells[c] + "'");
            row.push_back(*v);
            obs.push_back(true);
        }
        rows.push_back(std::move(row));
        seen.push_back(std::move(obs));
    }

    // Integer labels pass through; anything else is mapped to 0..C-1 in
    // sorted order of the distinct label strings.
    std::vector<int> labels;
    labels.reserve(raw_labels.size());
    bool integral = true;
    for (const auto& s : raw_labels) {
        int v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            integral = false;
            break;
        }
        labels.push_back(v);
    }
    if (!integral) {
        std::map<std::string, int> codes;
        for (const auto& s : raw_labels) codes.emplace(s, 0);
        int next = 0;
        for (auto& [_, code] : codes) code = next++;
        labels.clear();
        for (const auto& s : raw_labels) labels.push_back(codes.at(s));
    }

    Dataset d;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto f = static_cast<Eigen::Index>(arity - 1);
    d.values.resize(n, f);
    d.observed.resize(n, f);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < f; ++c) {
            d.values(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            d.observed(r, c) = seen[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
    d.labels = std::move(labels);
    for (std::size_t c = 0; c < arity; ++c)
        if (c != label_idx) d.feature_names.push_back(header[c]);
    d.validate();
    normalize_minmax(d);
    return d;
}

// Writes features then a trailing `label` column; unobserved entries are
// written as empty cells. Values use round-trip precision.
inline void write_csv(const std::string& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out.precision(17);
    for (std::size_t c = 0; c < d.features(); ++c)
        out << (d.feature_names.empty() ? "f" + std::to_string(c) : d.feature_names[c]) << ',';
    out << "label\n";
    for (Eigen::Index r = 0; r < d.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.values.cols(); ++c) {
            if (d.observed(r, c)) out << d.values(r, c);
            out << ',';
        }
        out << d.labels[static_cast<std::size_t>(r)] << '\n';
    }
}

// ============================================================================
// Missing-entry masks
// ============================================================================

struct MaskSpec {
    double missing_rate = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(missing_rate >= 0.0 && missing_rate < 1.0))
            throw ValidationError("mask: missing_rate must lie in [0, 1), got " +
                                  std::to_string(missing_rate));
    }
};

// Hides each entry independently with probability `missing_rate`, visiting
// entries in column-major order. Any column left with no observed entry gets
// one uniformly chosen (originally observed) entry restored. Hidden values are
// zeroed.
inline Dataset apply_mask(const Dataset& d, const MaskSpec& m) {
    m.validate();
    Dataset out = d;
    Rng rng(m.seed);
    for (Eigen::Index c = 0; c < out.values.cols(); ++c)
        for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
            const bool hide = rng.uniform() < m.missing_rate;
            if (hide) out.observed(r, c) = false;
        }
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
        if (out.observed.col(c).any()) continue;
        std::vector<Eigen::Index> candidates;
        for (Eigen::Index r = 0; r < d.values.rows(); ++r)
            if (d.observed(r, c)) candidates.push_back(r);
        if (candidates.empty()) continue; // column had no data to begin with
        out.observed(candidates[rng.uniform_index(candidates.size())], c) = true;
    }
    for (Eigen::Index c = 0; c < out.values.cols(); ++c)
        for (Eigen::Index r = 0; r < out.values.rows(); ++r)
            if (!out.observed(r, c)) out.values(r, c) = 0.0;
    return out;
}

// ============================================================================
// Feature streams
// ============================================================================

struct ObservedEntry {
    std::uint32_t row;
    std::uint32_t col; // local column within the block
    double value;
};

// The H feature columns released at one stream step, observed entries only.
struct SparseFeatureBlock {
    std::size_t step = 0;
    std::size_t width = 0;
    std::size_t row_count = 0;
    std::vector<std::size_t> feature_ids; // global column id per local column
    std::vector<ObservedEntry> entries;

    void validate() const {
        if (feature_ids.size() != width) throw ValidationError("block: feature id count != width");
        std::vector<std::size_t> per_col(width, 0);
        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        for (const auto& e : entries) {
            if (e.row >= row_count || e.col >= width)
                throw ValidationError("block: entry index out of range");
            if (!seen.emplace(e.row, e.col).second)
                throw ValidationError("block: duplicate entry (" + std::to_string(e.row) + ", " +
                                      std::to_string(e.col) + ")");
            ++per_col[e.col];
        }
        for (std::size_t j = 0; j < width; ++j)
            if (per_col[j] == 0)
                throw ValidationError("block " + std::to_string(step) + ": column " +
                                      std::to_string(feature_ids[j]) + " has no observed entry");
    }
};

enum class Provenance : std::uint8_t { Observed, Imputed };

// A block with every entry filled in.
struct CompletedBlock {
    std::size_t step = 0;
    std::vector<std::size_t> feature_ids;
    Matrix values; // N x H
    Mask observed; // true where the value was observed

    Provenance provenance(Eigen::Index n, Eigen::Index j) const {
        return observed(n, j) ? Provenance::Observed : Provenance::Imputed;
    }
};

struct StreamOptions {
    bool shuffle = false;
    std::uint64_t shuffle_seed = 0;
};

// Releases columns H at a time (dataset order unless shuffled). The last
// block may be narrower.
inline std::vector<SparseFeatureBlock> make_stream(const Dataset& d, std::size_t block_width,
                                                   const StreamOptions& opts = {}) {
    if (block_width == 0) throw ValidationError("stream: block width must be >= 1");
    std::vector<std::size_t> order(d.features());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (opts.shuffle) {
        Rng rng(opts.shuffle_seed);
        rng.shuffle(order);
    }

    std::vector<SparseFeatureBlock> blocks;
    for (std::size_t start = 0, step = 0; start < order.size(); start += block_width, ++step) {
        SparseFeatureBlock b;
        b.step = step;
        b.width = std::min(block_width, order.size() - start);
        b.row_count = d.rows();
        b.feature_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + b.width));
        for (std::size_t j = 0; j < b.width; ++j) {
            const auto c = static_cast<Eigen::Index>(b.feature_ids[j]);
            for (Eigen::Index r = 0; r < d.values.rows(); ++r)
                if (d.observed(r, c))
                    b.entries.push_back({static_cast<std::uint32_t>(r),
                                         static_cast<std::uint32_t>(j), d.values(r, c)});
        }
        b.validate();
        blocks.push_back(std::move(b));
    }
    return blocks;
}

// Fills every missing entry with 0.
inline CompletedBlock zero_fill(const SparseFeatureBlock& block) {
    CompletedBlock out;
    out.step = block.step;
    out.feature_ids = block.feature_ids;
    const auto n = static_cast<Eigen::Index>(block.row_count);
    const auto h = static_cast<Eigen::Index>(block.width);
    out.values = Matrix::Zero(n, h);
    out.observed = Mask::Constant(n, h, false);
    for (const auto& e : block.entries) {
        out.values(e.row, e.col) = e.value;
        out.observed(e.row, e.col) = true;
    }
    return out;
}

// ============================================================================
// Synthetic data
// ============================================================================

struct SyntheticSpec {
    std::size_t instances = 300;
    std::size_t informative = 5;
    std::size_t redundant = 0;
    std::size_t noise = 15;
    std::size_t classes = 2;
    double noise_level = 0.1;  // std-dev of noise added to redundant features
    double separation = 0.75;  // class-centroid offset per informative feature
    std::uint64_t seed = 0;

    void validate() const {
        if (instances < 2) throw ValidationError("synth: instances must be >= 2");
        if (informative < 1) throw ValidationError("synth: informative must be >= 1");
        if (classes < 2) throw ValidationError("synth: classes must be >= 2");
        if (classes > instances) throw ValidationError("synth: more classes than instances");
        if (!(noise_level >= 0.0)) throw ValidationError("synth: noise level must be >= 0");
        if (!(separation > 0.0)) throw ValidationError("synth: separation must be > 0");
    }
};

struct SyntheticData {
    Dataset dataset;                       // raw (unnormalized) values
    std::vector<std::size_t> informative;  // ground-truth informative ids
};

// Column layout: informative, then redundant, then noise.
//  - informative: class centroid (+/- separation per feature) plus N(0, 1)
//  - redundant:   signed mix of two informative columns plus noise_level * N(0, 1)
//  - noise:       N(0, 1), independent of the label
// Labels are balanced (i mod C) and shuffled.
inline SyntheticData make_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n = spec.instances;
    const std::size_t k = spec.informative;
    const std::size_t f = k + spec.redundant + spec.noise;

    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % spec.classes);
    rng.shuffle(labels);

    Matrix centroids(static_cast<Eigen::Index>(spec.classes), static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
        for (Eigen::Index c = 0; c < centroids.rows(); ++c)
            centroids(c, j) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * spec.separation;
        if (spec.classes == 2) centroids(1, j) = -centroids(0, j);
    }

    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                centroids(labels[i], static_cast<Eigen::Index>(j)) + rng.normal();

    for (std::size_t r = 0; r < spec.redundant; ++r) {
        const std::size_t a = rng.uniform_index(k);
        std::size_t b = rng.uniform_index(k);
        if (k > 1)
            while (b == a) b = rng.uniform_index(k);
        const double wa = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.0);
        const double wb = k > 1 ? (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.0) : 0.0;
        const auto col = static_cast<Eigen::Index>(k + r);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            x(row, col) = wa * x(row, static_cast<Eigen::Index>(a)) +
                          wb * x(row, static_cast<Eigen::Index>(b)) +
                          spec.noise_level * rng.normal();
        }
    }
    for (std::size_t j = k + spec.redundant; j < f; ++j)
        for (std::size_t i = 0; i < n; ++i)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal();

    SyntheticData out;
    out.dataset = Dataset::dense(std::move(x), std::move(labels));
    for (std::size_t j = 0; j < f; ++j) {
        const char* prefix = j < k ? "inf" : (j < k + spec.redundant ? "red" : "noise");
        out.dataset.feature_names.push_back(std::string(prefix) + std::to_string(j));
    }
    out.informative.resize(k);
    std::iota(out.informative.begin(), out.informative.end(), std::size_t{0});
    return out;
}

} // namespace pos2fs
