#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pos2fs/common.hpp"

namespace pos2fs {

using FeatureMask = std::vector<bool>;

struct KnnConfig {
    std::size_t k = 3;

    void validate() const {
        if (k < 1) throw ValidationError("knn: k must be >= 1");
    }
};

struct CvProtocol {
    std::size_t fold_count = 3;
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const {
        if (fold_count < 2) throw ValidationError("cv: fold_count must be >= 2");
    }
};

namespace detail {

// Selected columns of `rows`, packed row-major for distance loops.
inline RowMatrix pack_columns(const Matrix& rows, const FeatureMask& mask) {
    std::vector<Eigen::Index> cols;
    for (std::size_t c = 0; c < mask.size(); ++c)
        if (mask[c]) cols.push_back(static_cast<Eigen::Index>(c));
    RowMatrix out(rows.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = rows.col(cols[j]);
    return out;
}

inline void check_mask(const FeatureMask& mask, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(mask.size()) != cols)
        throw ValidationError("knn: feature mask length does not match column count");
    if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; }))
        throw ValidationError("knn: empty feature mask");
}

// Majority vote among the k nearest of `candidates` (indices into `train`).
// Squared Euclidean distance; distance ties go to the lower row index, vote
// ties to the smallest label.
inline int vote(const RowMatrix& train, std::span<const int> labels,
                std::span<const std::size_t> candidates, const double* query, std::size_t k,
                std::vector<std::pair<double, std::size_t>>& scratch) {
    const Eigen::Index dims = train.cols();
    scratch.clear();
    for (const std::size_t i : candidates) {
        const double* row = train.data() + static_cast<Eigen::Index>(i) * dims;
        double d = 0.0;
        for (Eigen::Index c = 0; c < dims; ++c) {
            const double diff = row[c] - query[c];
            d += diff * diff;
        }
        scratch.emplace_back(d, i);
    }
    const auto kth = scratch.begin() + static_cast<std::ptrdiff_t>(k);
    std::nth_element(scratch.begin(), kth - 1, scratch.end());
    std::sort(scratch.begin(), kth);

    // k is small: linear tally over the neighbours.
    std::pair<int, std::size_t> best{0, 0};
    bool have_best = false;
    for (auto it = scratch.begin(); it != kth; ++it) {
        const int label = labels[it->second];
        std::size_t count = 0;
        for (auto jt = scratch.begin(); jt != kth; ++jt)
            if (labels[jt->second] == label) ++count;
        if (!have_best || count > best.second || (count == best.second && label < best.first)) {
            best = {label, count};
            have_best = true;
        }
    }
    return best.first;
}

} // namespace detail

inline int knn_predict(const Matrix& train, std::span<const int> labels, const Vector& query,
                       const FeatureMask& mask, const KnnConfig& cfg) {
    cfg.validate();
    if (train.rows() == 0) throw ValidationError("knn: empty training set");
    if (static_cast<std::size_t>(train.rows()) != labels.size())
        throw ValidationError("knn: label count does not match training rows");
    if (query.size() != train.cols()) throw ValidationError("knn: query arity mismatch");
    detail::check_mask(mask, train.cols());
    if (cfg.k > static_cast<std::size_t>(train.rows()))
        throw ValidationError("knn: k exceeds training-set size");

    const RowMatrix packed = detail::pack_columns(train, mask);
    const Matrix q = query.transpose();
    const RowMatrix packed_query = detail::pack_columns(q, mask);
    std::vector<std::size_t> all(static_cast<std::size_t>(train.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::pair<double, std::size_t>> scratch;
    return detail::vote(packed, labels, all, packed_query.data(), cfg.k, scratch);
}

// Fold id per instance. Stratified: each class is shuffled and dealt
// round-robin, continuing the dealer position across classes.
struct FoldAssignment {
    std::vector<std::size_t> fold;
    bool undersized_class = false; // some class has fewer members than folds
};

inline FoldAssignment assign_folds(std::span<const int> labels, const CvProtocol& cv) {
    cv.validate();
    FoldAssignment out;
    out.fold.assign(labels.size(), 0);
    Rng rng(cv.seed);
    std::size_t dealer = 0;
    if (cv.stratified) {
        std::map<int, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
        for (auto& [_, members] : by_class) {
            if (members.size() < cv.fold_count) out.undersized_class = true;
            rng.shuffle(members);
            for (const std::size_t i : members) out.fold[i] = dealer++ % cv.fold_count;
        }
    } else {
        std::vector<std::size_t> all(labels.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        rng.shuffle(all);
        for (const std::size_t i : all) out.fold[i] = dealer++ % cv.fold_count;
    }
    return out;
}

struct CvResult {
    std::size_t correct = 0;
    bool undersized_class = false;
};

// Every instance is predicted once, from the folds that do not contain it.
inline CvResult cross_val_correct(const Matrix& rows, std::span<const int> labels,
                                  const FeatureMask& mask, const KnnConfig& knn,
                                  const CvProtocol& cv) {
    knn.validate();
    if (static_cast<std::size_t>(rows.rows()) != labels.size())
        throw ValidationError("cv: label count does not match rows");
    detail::check_mask(mask, rows.cols());
    const FoldAssignment folds = assign_folds(labels, cv);
    const RowMatrix packed = detail::pack_columns(rows, mask);

    CvResult out;
    out.undersized_class = folds.undersized_class;
    std::vector<std::size_t> train_idx;
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t f = 0; f < cv.fold_count; ++f) {
        train_idx.clear();
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (folds.fold[i] != f) train_idx.push_back(i);
        if (train_idx.size() == labels.size()) continue; // empty fold
        if (knn.k > train_idx.size()) throw ValidationError("cv: k exceeds fold training size");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (folds.fold[i] != f) continue;
            const double* query = packed.data() + static_cast<Eigen::Index>(i) * packed.cols();
            if (detail::vote(packed, labels, train_idx, query, knn.k, scratch) == labels[i])
                ++out.correct;
        }
    }
    return out;
}

// Fraction of test rows predicted correctly from the selected columns.
inline double accuracy(const Matrix& train, std::span<const int> train_labels, const Matrix& test,
                       std::span<const int> test_labels, const FeatureMask& mask,
                       const KnnConfig& cfg) {
    cfg.validate();
    if (train.rows() == 0) throw ValidationError("knn: empty training set");
    if (static_cast<std::size_t>(train.rows()) != train_labels.size() ||
        static_cast<std::size_t>(test.rows()) != test_labels.size())
        throw ValidationError("knn: label count mismatch");
    if (train.cols() != test.cols()) throw ValidationError("knn: train/test arity mismatch");
    detail::check_mask(mask, train.cols());
    if (cfg.k > static_cast<std::size_t>(train.rows()))
        throw ValidationError("knn: k exceeds training-set size");
    if (test.rows() == 0) return 0.0;

    const RowMatrix packed_train = detail::pack_columns(train, mask);
    const RowMatrix packed_test = detail::pack_columns(test, mask);
    std::vector<std::size_t> all(static_cast<std::size_t>(train.rows()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::vector<std::pair<double, std::size_t>> scratch;
    std::size_t hits = 0;
    for (Eigen::Index r = 0; r < packed_test.rows(); ++r) {
        const double* query = packed_test.data() + r * packed_test.cols();
        if (detail::vote(packed_train, train_labels, all, query, cfg.k, scratch) ==
            test_labels[static_cast<std::size_t>(r)])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.rows());
}

} // namespace pos2fs
