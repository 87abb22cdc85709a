#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pos2fs/common.hpp"
#include "pos2fs/stats.hpp"
#include "pos2fs/stream_data.hpp"

namespace pos2fs {

struct DecisionThresholds {
    double alpha = 0.9;
    double beta = 0.5;

    void validate() const {
        if (!(0.0 <= beta && beta < alpha && alpha <= 1.0))
            throw ValidationError("thresholds: require 0 <= beta < alpha <= 1");
    }
};

enum class Region { Pos, Bnd, Neg };

inline const char* to_string(Region r) {
    switch (r) {
    case Region::Pos: return "POS";
    case Region::Bnd: return "BND";
    case Region::Neg: return "NEG";
    }
    return "?";
}

struct DecisionOutcome {
    std::size_t step = 0;
    std::vector<std::size_t> pos;
    std::vector<std::size_t> bnd;
    std::vector<std::size_t> neg;
};

// POS iff g >= alpha, NEG iff g <= beta, BND otherwise.
inline Region classify(double g, const DecisionThresholds& t) {
    if (g >= t.alpha) return Region::Pos;
    if (g <= t.beta) return Region::Neg;
    return Region::Bnd;
}

inline DecisionOutcome partition(std::span<const double> gbest, const DecisionThresholds& t,
                                 std::size_t step = 0) {
    t.validate();
    DecisionOutcome out;
    out.step = step;
    for (std::size_t h = 0; h < gbest.size(); ++h) {
        switch (classify(gbest[h], t)) {
        case Region::Pos: out.pos.push_back(h); break;
        case Region::Bnd: out.bnd.push_back(h); break;
        case Region::Neg: out.neg.push_back(h); break;
        }
    }
    return out;
}

// ============================================================================
// Selected set
// ============================================================================

struct SelectedFeature {
    std::size_t id;
    Vector column;
};

// Running selection in admission order.
class SelectedFeatureSet {
public:
    std::size_t size() const { return features_.size(); }
    bool empty() const { return features_.empty(); }
    const std::vector<SelectedFeature>& features() const { return features_; }
    const SelectedFeature& operator[](std::size_t i) const { return features_[i]; }

    bool contains(std::size_t id) const {
        return std::any_of(features_.begin(), features_.end(),
                           [&](const SelectedFeature& f) { return f.id == id; });
    }

    void add(std::size_t id, Vector column) {
        if (contains(id)) throw ValidationError("selected set: duplicate feature id " + std::to_string(id));
        if (!features_.empty() && column.size() != features_.front().column.size())
            throw ValidationError("selected set: column length mismatch");
        features_.push_back({id, std::move(column)});
    }

    void erase(std::size_t position) {
        features_.erase(features_.begin() + static_cast<std::ptrdiff_t>(position));
    }

    std::vector<std::size_t> ids() const {
        std::vector<std::size_t> out;
        for (const auto& f : features_) out.push_back(f.id);
        return out;
    }

private:
    std::vector<SelectedFeature> features_;
};

// ============================================================================
// Conditional dependence on labels
// ============================================================================

struct CiTestConfig {
    double significance = 0.05;
    std::size_t max_conditioning = 3;

    void validate() const {
        if (!(significance > 0.0 && significance < 1.0))
            throw ValidationError("ci: significance must lie in (0, 1)");
    }
};

// Labels as numeric targets: one 0/1 indicator for two classes, one
// indicator per class (one-vs-rest) otherwise.
inline std::vector<Vector> label_targets(std::span<const int> labels) {
    const std::set<int> classes(labels.begin(), labels.end());
    std::vector<int> targets(classes.begin(), classes.end());
    if (targets.size() == 2) targets.erase(targets.begin());
    std::vector<Vector> out;
    for (const int c : targets) {
        Vector v(static_cast<Eigen::Index>(labels.size()));
        for (std::size_t i = 0; i < labels.size(); ++i) v(static_cast<Eigen::Index>(i)) = labels[i] == c ? 1.0 : 0.0;
        out.push_back(std::move(v));
    }
    return out;
}

// Fisher-Z test of feature vs labels given conditioning columns; dependent
// if any one-vs-rest target is dependent.
inline bool is_conditionally_dependent(const Vector& feature, std::span<const Vector> targets,
                                       const Matrix& conditioning, const CiTestConfig& cfg) {
    cfg.validate();
    for (const auto& t : targets)
        if (fisher_z_test(feature, t, conditioning, cfg.significance).dependent) return true;
    return false;
}

inline bool is_conditionally_dependent(const Vector& feature, std::span<const int> labels,
                                       const Matrix& conditioning, const CiTestConfig& cfg) {
    const auto targets = label_targets(labels);
    return is_conditionally_dependent(feature, targets, conditioning, cfg);
}

namespace detail {

inline Matrix gather_columns(const SelectedFeatureSet& set, std::span<const std::size_t> positions,
                             Eigen::Index rows) {
    Matrix z(rows, static_cast<Eigen::Index>(positions.size()));
    for (std::size_t i = 0; i < positions.size(); ++i)
        z.col(static_cast<Eigen::Index>(i)) = set[positions[i]].column;
    return z;
}

// Calls visit(subset) for every subset of `pool` of size 0..max_size, smallest
// first, lexicographic within a size. Stops when visit returns true.
template <class Visit>
bool for_each_subset(std::span<const std::size_t> pool, std::size_t max_size, Visit&& visit) {
    std::vector<std::size_t> pick;
    const std::size_t top = std::min(max_size, pool.size());
    for (std::size_t size = 0; size <= top; ++size) {
        std::vector<std::size_t> idx(size);
        for (std::size_t i = 0; i < size; ++i) idx[i] = i;
        while (true) {
            pick.clear();
            for (const std::size_t i : idx) pick.push_back(pool[i]);
            if (visit(std::span<const std::size_t>(pick))) return true;
            // next combination
            std::size_t i = size;
            while (i > 0 && idx[i - 1] == pool.size() - size + (i - 1)) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return false;
}

} // namespace detail

// Admit iff the feature stays dependent on the labels given each selected
// feature alone. Always admits into an empty set.
inline bool admit_boundary(const Vector& feature, const SelectedFeatureSet& selected,
                           std::span<const Vector> targets, const CiTestConfig& cfg) {
    const auto rows = feature.size();
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const std::size_t pos[] = {i};
        if (!is_conditionally_dependent(feature, targets, detail::gather_columns(selected, pos, rows), cfg))
            return false;
    }
    return true;
}

inline bool admit_boundary(const Vector& feature, const SelectedFeatureSet& selected,
                           std::span<const int> labels, const CiTestConfig& cfg) {
    const auto targets = label_targets(labels);
    return admit_boundary(feature, selected, targets, cfg);
}

// Walks the set from the most recently admitted feature backwards. A feature
// is removed as soon as some conditioning subset of the remaining features
// (size <= max_conditioning, empty set included) makes it independent of the
// labels. Returns the removed ids in removal order.
inline std::vector<std::size_t> eliminate_redundant(SelectedFeatureSet& selected,
                                                    std::span<const Vector> targets,
                                                    const CiTestConfig& cfg) {
    std::vector<std::size_t> removed;
    for (std::size_t i = selected.size(); i-- > 0;) {
        std::vector<std::size_t> others;
        for (std::size_t j = 0; j < selected.size(); ++j)
            if (j != i) others.push_back(j);
        const Vector& column = selected[i].column;
        const bool redundant = detail::for_each_subset(
            others, cfg.max_conditioning, [&](std::span<const std::size_t> delta) {
                const Matrix z = detail::gather_columns(selected, delta, column.size());
                return !is_conditionally_dependent(column, targets, z, cfg);
            });
        if (redundant) {
            removed.push_back(selected[i].id);
            selected.erase(i);
        }
    }
    return removed;
}

inline std::vector<std::size_t> eliminate_redundant(SelectedFeatureSet& selected,
                                                    std::span<const int> labels,
                                                    const CiTestConfig& cfg) {
    const auto targets = label_targets(labels);
    return eliminate_redundant(selected, targets, cfg);
}

// ============================================================================
// Block integration
// ============================================================================

struct DecisionLogEntry {
    std::size_t step = 0;
    std::size_t feature_id = 0;
    Region region = Region::Neg;
    double score = 0.0;
    bool admitted = false;
    bool eliminated = false; // removed by this step's redundancy pass
};

struct IntegrationResult {
    std::vector<DecisionLogEntry> log;
    std::vector<std::size_t> eliminated; // ids removed this step, in order
};

// POS features join unconditionally, BND features only through
// admit_boundary (both in index order), NEG features are dropped; one
// redundancy pass follows.
inline IntegrationResult integrate_block(const DecisionOutcome& outcome, const CompletedBlock& block,
                                         std::span<const double> gbest, SelectedFeatureSet& selected,
                                         std::span<const int> labels, const CiTestConfig& cfg) {
    const auto width = static_cast<std::size_t>(block.values.cols());
    if (gbest.size() != width || block.feature_ids.size() != width)
        throw ValidationError("integrate: block/score width mismatch");
    if (static_cast<std::size_t>(block.values.rows()) != labels.size())
        throw ValidationError("integrate: label count does not match block rows");
    const auto targets = label_targets(labels);

    IntegrationResult out;
    auto log_entry = [&](std::size_t h, Region r, bool admitted) {
        out.log.push_back({outcome.step, block.feature_ids[h], r, gbest[h], admitted, false});
    };
    for (const std::size_t h : outcome.pos) {
        selected.add(block.feature_ids[h], block.values.col(static_cast<Eigen::Index>(h)));
        log_entry(h, Region::Pos, true);
    }
    for (const std::size_t h : outcome.bnd) {
        const Vector column = block.values.col(static_cast<Eigen::Index>(h));
        const bool admit = admit_boundary(column, selected, targets, cfg);
        if (admit) selected.add(block.feature_ids[h], column);
        log_entry(h, Region::Bnd, admit);
    }
    for (const std::size_t h : outcome.neg) log_entry(h, Region::Neg, false);

    out.eliminated = eliminate_redundant(selected, targets, cfg);
    for (auto& e : out.log)
        e.eliminated = std::find(out.eliminated.begin(), out.eliminated.end(), e.feature_id) !=
                       out.eliminated.end();
    return out;
}

} // namespace pos2fs
