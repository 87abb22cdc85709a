#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pos2fs/common.hpp"
#include "pos2fs/stream_data.hpp"

namespace pos2fs {

// Rank-L factorization of one block: f(n, j) ~ sum_k P(n, k) Q(j, k).
struct LatentFactorModel {
    RowMatrix P; // N x L instance factors
    RowMatrix Q; // H x L feature factors
    double lambda = 0.05;
    double eta = 0.01;

    std::size_t rank() const { return static_cast<std::size_t>(P.cols()); }

    double predict(Eigen::Index n, Eigen::Index j) const { return P.row(n).dot(Q.row(j)); }
};

struct LfaParams {
    std::size_t rank = 8;
    double lambda = 0.05;
    double eta = 0.01;

    void validate() const {
        if (rank < 1) throw ValidationError("lfa: rank must be >= 1");
        if (!(lambda >= 0.0)) throw ValidationError("lfa: lambda must be >= 0");
        if (!(eta > 0.0)) throw ValidationError("lfa: eta must be > 0");
    }
};

struct LfaTrainConfig {
    std::size_t max_epochs = 500;
    double tolerance = 1e-4;     // relative change of mean per-entry loss
    std::uint64_t init_seed = 0; // also seeds the per-epoch visiting order
    double init_scale = 0.5;

    void validate() const {
        if (max_epochs < 1) throw ValidationError("lfa: max_epochs must be >= 1");
        if (!(tolerance > 0.0)) throw ValidationError("lfa: tolerance must be > 0");
        if (!(init_scale > 0.0)) throw ValidationError("lfa: init_scale must be > 0");
    }
};

// Factors drawn uniformly from (0, init_scale].
inline LatentFactorModel init_factors(std::size_t rows, std::size_t cols, const LfaParams& params,
                                      std::uint64_t seed, double init_scale) {
    params.validate();
    if (rows == 0 || cols == 0) throw ValidationError("lfa: zero-sized factor matrix");
    if (!(init_scale > 0.0)) throw ValidationError("lfa: init_scale must be > 0");
    Rng rng(seed);
    LatentFactorModel m;
    m.lambda = params.lambda;
    m.eta = params.eta;
    const auto l = static_cast<Eigen::Index>(params.rank);
    m.P.resize(static_cast<Eigen::Index>(rows), l);
    m.Q.resize(static_cast<Eigen::Index>(cols), l);
    for (Eigen::Index i = 0; i < m.P.size(); ++i) m.P.data()[i] = (1.0 - rng.uniform()) * init_scale;
    for (Eigen::Index i = 0; i < m.Q.size(); ++i) m.Q.data()[i] = (1.0 - rng.uniform()) * init_scale;
    return m;
}

// Regularized squared error of a single observed entry.
inline double entry_loss(const LatentFactorModel& m, Eigen::Index n, Eigen::Index j, double value) {
    const double err = value - m.predict(n, j);
    return 0.5 * err * err +
           0.5 * m.lambda * (m.P.row(n).squaredNorm() + m.Q.row(j).squaredNorm());
}

// One SGD step on entry (n, j). P and Q rows are updated simultaneously from
// their pre-update values.
inline void sgd_update(LatentFactorModel& m, Eigen::Index n, Eigen::Index j, double value) {
    const double err = value - m.predict(n, j);
    const double decay = m.lambda * m.eta;
    for (Eigen::Index k = 0; k < m.P.cols(); ++k) {
        const double p = m.P(n, k);
        const double q = m.Q(j, k);
        m.P(n, k) = p + m.eta * q * err - decay * p;
        m.Q(j, k) = q + m.eta * p * err - decay * q;
    }
    if (!m.P.row(n).allFinite() || !m.Q.row(j).allFinite())
        throw TrainingError("lfa: non-finite factors after update at entry (" + std::to_string(n) +
                            ", " + std::to_string(j) + ")");
}

inline double mean_loss(const LatentFactorModel& m, std::span<const ObservedEntry> entries) {
    double total = 0.0;
    for (const auto& e : entries) total += entry_loss(m, e.row, e.col, e.value);
    return total / static_cast<double>(entries.size());
}

struct TrainTrace {
    std::vector<double> epoch_loss; // mean per-entry loss after each epoch
};

// Runs epochs of SGD over the block's observed entries in a seeded shuffled
// order until the relative change in mean loss drops below the tolerance or
// max_epochs is reached.
inline TrainTrace train(LatentFactorModel& m, const SparseFeatureBlock& block,
                        const LfaTrainConfig& cfg) {
    cfg.validate();
    if (block.entries.empty()) throw ValidationError("lfa: block has no observed entries");
    if (static_cast<std::size_t>(m.P.rows()) != block.row_count ||
        static_cast<std::size_t>(m.Q.rows()) != block.width)
        throw ValidationError("lfa: model shape does not match block");

    Rng rng(derive_seed(cfg.init_seed, 0x5347445f4f524445ULL));
    std::vector<std::size_t> order(block.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Below this the fit is exact up to rounding and the loss only jitters.
    constexpr double kExactFitLoss = 1e-24;
    TrainTrace trace;
    double prev = mean_loss(m, block.entries);
    int rising = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (const std::size_t idx : order) {
            const auto& e = block.entries[idx];
            sgd_update(m, e.row, e.col, e.value);
        }
        const double loss = mean_loss(m, block.entries);
        trace.epoch_loss.push_back(loss);
        if (!std::isfinite(loss))
            throw TrainingError("lfa: non-finite loss at epoch " + std::to_string(epoch));
        if (loss <= kExactFitLoss) break;
        rising = loss > prev ? rising + 1 : 0;
        if (rising >= 5)
            throw TrainingError("lfa: loss increased for 5 consecutive epochs (epoch " +
                                std::to_string(epoch) + ")");
        const double rel = std::abs(prev - loss) / std::max(prev, std::numeric_limits<double>::min());
        prev = loss;
        if (rel < cfg.tolerance) break;
    }
    return trace;
}

// Observed entries pass through bit-exact; the rest come from P Q^T clamped
// to [0, 1].
inline CompletedBlock reconstruct(const LatentFactorModel& m, const SparseFeatureBlock& block) {
    CompletedBlock out;
    out.step = block.step;
    out.feature_ids = block.feature_ids;
    const auto n = static_cast<Eigen::Index>(block.row_count);
    const auto h = static_cast<Eigen::Index>(block.width);
    out.values = (m.P * m.Q.transpose()).cwiseMax(0.0).cwiseMin(1.0);
    out.observed = Mask::Constant(n, h, false);
    for (const auto& e : block.entries) {
        out.values(e.row, e.col) = e.value;
        out.observed(e.row, e.col) = true;
    }
    return out;
}

inline double holdout_rmse(const LatentFactorModel& m, std::span<const ObservedEntry> holdout) {
    if (holdout.empty()) throw ValidationError("lfa: empty holdout set");
    double sse = 0.0;
    for (const auto& e : holdout) {
        const double d = m.predict(e.row, e.col) - e.value;
        sse += d * d;
    }
    return std::sqrt(sse / static_cast<double>(holdout.size()));
}

// Fresh init (or warm-started P), train, reconstruct.
struct ImputeOutcome {
    CompletedBlock block;
    LatentFactorModel model;
    TrainTrace trace;
};

inline ImputeOutcome impute_block(const SparseFeatureBlock& block, const LfaParams& params,
                                  const LfaTrainConfig& cfg, const RowMatrix* warm_p = nullptr) {
    ImputeOutcome out;
    out.model = init_factors(block.row_count, block.width, params, cfg.init_seed, cfg.init_scale);
    if (warm_p != nullptr && warm_p->rows() == out.model.P.rows() &&
        warm_p->cols() == out.model.P.cols())
        out.model.P = *warm_p;
    out.trace = train(out.model, block, cfg);
    out.block = reconstruct(out.model, block);
    return out;
}

} // namespace pos2fs
