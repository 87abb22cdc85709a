#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pos2fs/classifiers.hpp"
#include "pos2fs/common.hpp"
#include "pos2fs/lfa.hpp"
#include "pos2fs/stream_data.hpp"
#include "pos2fs/swarm.hpp"
#include "pos2fs/three_way.hpp"

namespace pos2fs {

enum class ImputeMode { Lfa, Zero };

inline const char* method_name(ImputeMode m) { return m == ImputeMode::Lfa ? "pos2fs-lfa" : "pos2fs-zero"; }

struct SplitConfig {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ValidationError("split: train_fraction must lie in (0, 1)");
    }
};

struct RunConfig {
    std::size_t block_width = 10;
    MaskSpec mask;
    LfaParams lfa;
    LfaTrainConfig lfa_train;
    bool lfa_warm_start = false;
    PsoConfig pso;
    DecisionThresholds thresholds;
    CiTestConfig ci;
    KnnConfig knn;
    std::size_t cv_folds = 3;
    SplitConfig split;
    StreamOptions stream;
    ImputeMode mode = ImputeMode::Lfa;

    void validate() const {
        if (block_width < 1) throw ValidationError("run: block_width must be >= 1");
        mask.validate();
        lfa.validate();
        lfa_train.validate();
        pso.validate();
        thresholds.validate();
        ci.validate();
        knn.validate();
        if (cv_folds < 2) throw ValidationError("run: cv_folds must be >= 2");
        split.validate();
    }

    // All stochastic components seeded from one value. Seeds do not depend on
    // the imputation mode or missing rate, so paired cells share split, mask
    // and swarm randomness.
    static RunConfig seeded(std::uint64_t seed) {
        RunConfig c;
        c.reseed(seed);
        return c;
    }

    void reseed(std::uint64_t seed) {
        split.seed = derive_seed(seed, 1);
        mask.seed = derive_seed(seed, 2);
        lfa_train.init_seed = derive_seed(seed, 3);
        pso.seed = derive_seed(seed, 4);
        stream.shuffle_seed = derive_seed(seed, 5);
        cv_seed = derive_seed(seed, 6);
    }

    std::uint64_t cv_seed = 0;
};

// ============================================================================
// Train/test split
// ============================================================================

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Per class: shuffle, send round(fraction * size) to train (clamped so each
// class with >= 2 members lands in both sides).
inline Split stratified_split(std::span<const int> labels, const SplitConfig& cfg) {
    cfg.validate();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    Rng rng(cfg.seed);
    Split out;
    for (auto& [_, members] : by_class) {
        rng.shuffle(members);
        auto take = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(members.size())));
        if (members.size() >= 2) take = std::clamp<std::size_t>(take, 1, members.size() - 1);
        else take = members.size();
        out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
        out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    if (out.test.empty()) throw ValidationError("split: empty test partition");
    return out;
}

// Test rows behind an access counter, so selection code can be shown never to
// touch them.
class HeldOutRows {
public:
    explicit HeldOutRows(Dataset d) : data_(std::move(d)) {}

    const Dataset& read() const {
        ++reads_;
        return data_;
    }

    std::size_t reads() const { return reads_; }

private:
    Dataset data_;
    mutable std::size_t reads_ = 0;
};

// ============================================================================
// Selection run
// ============================================================================

struct StepTrace {
    std::size_t step = 0;
    std::vector<std::size_t> feature_ids;
    std::vector<double> loss_trace;     // empty for zero imputation
    std::vector<double> gbest;
    double gbest_fitness = 1.0;
    std::vector<double> fitness_trace;
    double min_fitness_seen = 1.0;
    double max_fitness_seen = 0.0;
    std::vector<DecisionLogEntry> decisions;
    std::vector<std::size_t> eliminated;
};

struct SelectionResult {
    std::vector<std::size_t> selected;
    std::vector<StepTrace> steps;
    std::size_t selected_count = 0;
    double accuracy = 0.0;
    bool degenerate = false; // empty selection, majority-class fallback
    double wall_seconds = 0.0;
    std::size_t test_reads_during_selection = 0;
    Matrix completed_train; // training rows after imputation, all features
};

struct EvalOutcome {
    double accuracy = 0.0;
    bool degenerate = false;
};

// k-NN over the selected columns, trained on `train`. An empty selection
// predicts the training majority class (smallest label on ties).
inline EvalOutcome evaluate_selection(const Matrix& train, std::span<const int> train_labels,
                                      const Matrix& test, std::span<const int> test_labels,
                                      std::span<const std::size_t> selected, const KnnConfig& knn) {
    EvalOutcome out;
    if (selected.empty()) {
        std::map<int, std::size_t> counts;
        for (const int l : train_labels) ++counts[l];
        int majority = counts.begin()->first;
        for (const auto& [label, count] : counts)
            if (count > counts[majority]) majority = label;
        const auto hits = std::count(test_labels.begin(), test_labels.end(), majority);
        out.accuracy = test_labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(test_labels.size());
        out.degenerate = true;
        return out;
    }
    FeatureMask mask(static_cast<std::size_t>(train.cols()), false);
    for (const std::size_t id : selected) {
        if (id >= mask.size()) throw ValidationError("evaluate: feature id out of range");
        mask[id] = true;
    }
    out.accuracy = accuracy(train, train_labels, test, test_labels, mask, knn);
    return out;
}

// Accuracy of a selection under the stratified split, training on the
// dataset's own training rows.
inline EvalOutcome evaluate_final(const Dataset& d, std::span<const std::size_t> selected,
                                  const SplitConfig& split, const KnnConfig& knn) {
    const Split s = stratified_split(d.labels, split);
    const Dataset train = d.select_rows(s.train);
    const Dataset test = d.select_rows(s.test);
    return evaluate_selection(train.values, train.labels, test.values, test.labels, selected, knn);
}

inline Matrix assemble(const std::vector<CompletedBlock>& blocks, std::size_t rows, std::size_t features) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(features));
    for (const auto& b : blocks)
        for (std::size_t j = 0; j < b.feature_ids.size(); ++j)
            out.col(static_cast<Eigen::Index>(b.feature_ids[j])) = b.values.col(static_cast<Eigen::Index>(j));
    return out;
}

inline CompletedBlock complete_block(const SparseFeatureBlock& block, const RunConfig& cfg,
                                     const RowMatrix* warm_p, StepTrace& trace, RowMatrix* trained_p) {
    if (cfg.mode == ImputeMode::Zero) return zero_fill(block);
    LfaTrainConfig train_cfg = cfg.lfa_train;
    train_cfg.init_seed = derive_seed(cfg.lfa_train.init_seed, block.step);
    auto outcome = impute_block(block, cfg.lfa, train_cfg, warm_p);
    trace.loss_trace = std::move(outcome.trace.epoch_loss);
    if (trained_p != nullptr) *trained_p = std::move(outcome.model.P);
    return std::move(outcome.block);
}

// Streams the training portion block by block: complete, score with the
// swarm, integrate via three-way decisions. Test rows stay untouched until
// the final evaluation.
inline SelectionResult run_selection(const Dataset& dataset, const RunConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    cfg.validate();
    dataset.validate();

    const Split split = stratified_split(dataset.labels, cfg.split);
    const HeldOutRows held_out(dataset.select_rows(split.test));
    const Dataset train = apply_mask(dataset.select_rows(split.train), cfg.mask);
    const auto blocks = make_stream(train, cfg.block_width, cfg.stream);

    SelectionResult result;
    SelectedFeatureSet selected;
    std::vector<CompletedBlock> completed;
    RowMatrix previous_p;
    for (const auto& block : blocks) {
        StepTrace trace;
        trace.step = block.step;
        trace.feature_ids = block.feature_ids;

        RowMatrix trained_p;
        const RowMatrix* warm = cfg.lfa_warm_start && previous_p.size() > 0 ? &previous_p : nullptr;
        CompletedBlock done = complete_block(block, cfg, warm, trace, &trained_p);
        if (cfg.lfa_warm_start) previous_p = std::move(trained_p);

        CvProtocol cv{cfg.cv_folds, derive_seed(cfg.cv_seed, block.step), true};
        const FitnessContext ctx(done.values, train.labels, cfg.knn, cv);
        PsoConfig pso = cfg.pso;
        pso.seed = derive_seed(cfg.pso.seed, block.step);
        const EvaluationResult eval = optimize(ctx, pso);
        trace.gbest = eval.gbest;
        trace.gbest_fitness = eval.gbest_fitness;
        trace.fitness_trace = eval.fitness_trace;
        trace.min_fitness_seen = *std::min_element(eval.evaluated.begin(), eval.evaluated.end());
        trace.max_fitness_seen = *std::max_element(eval.evaluated.begin(), eval.evaluated.end());

        const DecisionOutcome outcome = partition(eval.gbest, cfg.thresholds, block.step);
        auto integration = integrate_block(outcome, done, eval.gbest, selected, train.labels, cfg.ci);
        trace.decisions = std::move(integration.log);
        trace.eliminated = std::move(integration.eliminated);

        completed.push_back(std::move(done));
        result.steps.push_back(std::move(trace));
    }

    result.selected = selected.ids();
    result.selected_count = result.selected.size();
    result.completed_train = assemble(completed, train.rows(), train.features());
    result.test_reads_during_selection = held_out.reads();

    const Dataset& test = held_out.read();
    const EvalOutcome eval = evaluate_selection(result.completed_train, train.labels, test.values,
                                                test.labels, result.selected, cfg.knn);
    result.accuracy = eval.accuracy;
    result.degenerate = eval.degenerate;
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

// Reference point: k-NN on every feature of the zero-imputed training rows.
inline double all_features_zero_imputed_accuracy(const Dataset& dataset, const RunConfig& cfg) {
    cfg.validate();
    const Split split = stratified_split(dataset.labels, cfg.split);
    const Dataset test = dataset.select_rows(split.test);
    const Dataset train = apply_mask(dataset.select_rows(split.train), cfg.mask);
    std::vector<std::size_t> all(train.features());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    // apply_mask zeroes hidden entries, so train.values is the zero-filled matrix.
    return evaluate_selection(train.values, train.labels, test.values, test.labels, all, cfg.knn).accuracy;
}

} // namespace pos2fs
