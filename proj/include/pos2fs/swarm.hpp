#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pos2fs/classifiers.hpp"
#include "pos2fs/common.hpp"

namespace pos2fs {

struct PsoConfig {
    std::size_t particles = 30;
    std::size_t iterations = 50;
    double inertia = 1.0;
    double cognitive = 2.0;
    double social = 2.0;
    double threshold = 0.5; // rho: a feature is a candidate when x_h > rho
    double v_max = 0.6;
    std::uint64_t seed = 0;
    // r1, r2 are scalars per particle per iteration unless set.
    bool per_dimension_random = false;

    void validate() const {
        if (particles < 2) throw ValidationError("pso: particle count must be >= 2");
        if (iterations < 1) throw ValidationError("pso: iterations must be >= 1");
        if (!(threshold > 0.0 && threshold < 1.0))
            throw ValidationError("pso: threshold must lie in (0, 1)");
        if (!(v_max > 0.0)) throw ValidationError("pso: v_max must be > 0");
    }
};

struct Particle {
    std::vector<double> position;
    std::vector<double> velocity;
    std::vector<double> best_position;
    double best_fitness = 1.0;
    double fitness = 1.0;
};

struct Swarm {
    std::vector<Particle> particles;
    std::vector<double> gbest;
    double gbest_fitness = 1.0;
    std::size_t iteration = 0;
    Rng rng;
};

// ============================================================================
// Update rules
// ============================================================================

// Velocity update for one particle, clamped to [-v_max, v_max]. r1 and r2
// hold either one value (shared across dimensions) or one per dimension.
inline std::vector<double> update_velocity(const Particle& p, std::span<const double> gbest,
                                           const PsoConfig& cfg, std::span<const double> r1,
                                           std::span<const double> r2) {
    const std::size_t h = p.position.size();
    std::vector<double> v(h);
    for (std::size_t d = 0; d < h; ++d) {
        const double a = r1.size() == 1 ? r1[0] : r1[d];
        const double b = r2.size() == 1 ? r2[0] : r2[d];
        const double raw = cfg.inertia * p.velocity[d] +
                           cfg.cognitive * a * (p.best_position[d] - p.position[d]) +
                           cfg.social * b * (gbest[d] - p.position[d]);
        v[d] = std::clamp(raw, -cfg.v_max, cfg.v_max);
    }
    return v;
}

inline std::vector<double> update_velocity(const Particle& p, std::span<const double> gbest,
                                           const PsoConfig& cfg, double r1, double r2) {
    return update_velocity(p, gbest, cfg, std::span<const double>(&r1, 1),
                           std::span<const double>(&r2, 1));
}

// x + v (the particle's already-updated velocity), clamped to [0, 1].
inline std::vector<double> update_position(const Particle& p) {
    std::vector<double> x(p.position.size());
    for (std::size_t d = 0; d < x.size(); ++d)
        x[d] = std::clamp(p.position[d] + p.velocity[d], 0.0, 1.0);
    return x;
}

inline FeatureMask decode_candidate(std::span<const double> position, double rho) {
    FeatureMask mask(position.size());
    for (std::size_t d = 0; d < position.size(); ++d) mask[d] = position[d] > rho;
    return mask;
}

// ============================================================================
// Fitness
// ============================================================================

inline double fitness_from_correct(std::size_t correct, std::size_t n, std::size_t h) {
    return 1.0 - static_cast<double>(correct) / (static_cast<double>(n) * static_cast<double>(h));
}

// Completed block plus labels; scores feature masks by cross-validated k-NN.
// Results are memoized per mask since the fold split is fixed per context.
class FitnessContext {
public:
    FitnessContext(Matrix values, std::vector<int> labels, KnnConfig knn, CvProtocol cv)
        : values_(std::move(values)), labels_(std::move(labels)), knn_(knn), cv_(cv) {
        if (static_cast<std::size_t>(values_.rows()) != labels_.size())
            throw ValidationError("fitness: label count does not match block rows");
        if (values_.cols() == 0) throw ValidationError("fitness: empty block");
        knn_.validate();
        cv_.validate();
    }

    std::size_t rows() const { return labels_.size(); }
    std::size_t width() const { return static_cast<std::size_t>(values_.cols()); }
    const Matrix& values() const { return values_; }
    std::span<const int> labels() const { return labels_; }

    // Correctly classified instances under CV restricted to the mask; 0 for
    // an empty mask.
    std::size_t correct(const FeatureMask& mask) const {
        if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) return 0;
        if (const auto it = cache_.find(mask); it != cache_.end()) return it->second;
        const std::size_t c = cross_val_correct(values_, labels_, mask, knn_, cv_).correct;
        cache_.emplace(mask, c);
        return c;
    }

    double fitness(const FeatureMask& mask) const {
        return fitness_from_correct(correct(mask), rows(), width());
    }

    std::size_t distinct_evaluations() const { return cache_.size(); }

private:
    Matrix values_;
    std::vector<int> labels_;
    KnnConfig knn_;
    CvProtocol cv_;
    mutable std::unordered_map<FeatureMask, std::size_t> cache_;
};

inline double evaluate_fitness(std::span<const double> position, const FitnessContext& ctx,
                               double rho) {
    return ctx.fitness(decode_candidate(position, rho));
}

// ============================================================================
// Swarm dynamics
//
// `Fitness` is any callable double(std::span<const double> position).
// ============================================================================

template <class Fitness>
Swarm init_swarm(std::size_t width, const PsoConfig& cfg, Fitness&& fitness) {
    cfg.validate();
    if (width < 1) throw ValidationError("pso: dimension must be >= 1");
    Swarm s;
    s.rng = Rng(cfg.seed);
    s.particles.resize(cfg.particles);
    for (auto& p : s.particles) {
        p.position.resize(width);
        p.velocity.resize(width);
        for (auto& x : p.position) x = s.rng.uniform();
        for (auto& v : p.velocity) v = s.rng.uniform(-cfg.v_max, cfg.v_max);
    }
    for (std::size_t m = 0; m < s.particles.size(); ++m) {
        auto& p = s.particles[m];
        p.best_position = p.position;
        p.fitness = p.best_fitness = fitness(std::span<const double>(p.position));
        if (m == 0 || p.best_fitness < s.gbest_fitness) {
            s.gbest = p.best_position;
            s.gbest_fitness = p.best_fitness;
        }
    }
    return s;
}

// One synchronous iteration: every particle moves against the gbest of the
// previous iteration; gbest is refreshed once all particles have moved.
// Personal and global bests change only on strict improvement.
template <class Fitness>
void step(Swarm& s, const PsoConfig& cfg, Fitness&& fitness) {
    std::vector<double> r1(cfg.per_dimension_random ? s.gbest.size() : 1);
    std::vector<double> r2(r1.size());
    for (auto& p : s.particles) {
        for (auto& r : r1) r = s.rng.uniform();
        for (auto& r : r2) r = s.rng.uniform();
        p.velocity = update_velocity(p, s.gbest, cfg, r1, r2);
        p.position = update_position(p);
        p.fitness = fitness(std::span<const double>(p.position));
        if (p.fitness < p.best_fitness) {
            p.best_fitness = p.fitness;
            p.best_position = p.position;
        }
    }
    for (const auto& p : s.particles)
        if (p.best_fitness < s.gbest_fitness) {
            s.gbest_fitness = p.best_fitness;
            s.gbest = p.best_position;
        }
    ++s.iteration;
}

struct EvaluationResult {
    std::vector<double> gbest;          // per-feature evaluation scores G
    double gbest_fitness = 1.0;
    std::vector<double> fitness_trace;  // gbest fitness after each iteration
    std::vector<double> evaluated;      // every fitness value computed
};

template <class Fitness>
EvaluationResult optimize(std::size_t width, const PsoConfig& cfg, Fitness&& fitness) {
    EvaluationResult out;
    auto recording = [&](std::span<const double> x) {
        const double f = fitness(x);
        out.evaluated.push_back(f);
        return f;
    };
    Swarm s = init_swarm(width, cfg, recording);
    out.fitness_trace.reserve(cfg.iterations);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        step(s, cfg, recording);
        out.fitness_trace.push_back(s.gbest_fitness);
    }
    out.gbest = s.gbest;
    out.gbest_fitness = s.gbest_fitness;
    return out;
}

inline EvaluationResult optimize(const FitnessContext& ctx, const PsoConfig& cfg) {
    return optimize(ctx.width(), cfg, [&](std::span<const double> x) {
        return evaluate_fitness(x, ctx, cfg.threshold);
    });
}

} // namespace pos2fs
