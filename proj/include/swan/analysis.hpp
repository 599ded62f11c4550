#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "swan/gradient_ops.hpp"
#include "swan/matrix.hpp"
#include "swan/problems.hpp"

namespace swan {

enum class Preprocess { raw, gradnorm };

// Per-element mean and population std of one weight block across batches.
struct GradientDistSnapshot {
    Matrix mean;
    Matrix std;
    std::size_t n_batches = 0;
};

// One snapshot per weight block. Batch seeds are derived from `seed`.
std::vector<GradientDistSnapshot> snapshot_gradients(const MlpProblem& problem,
                                                     const std::vector<Matrix>& weights,
                                                     Preprocess preprocess, std::size_t n_batches,
                                                     std::uint64_t seed,
                                                     const GradNormConfig& gn = {});

// Snapshot statistics from explicit samples.
GradientDistSnapshot snapshot_from_samples(const std::vector<Matrix>& samples);

// Mean over elements of KL(N(μ_a, σ_a²) ‖ N(μ_ref, σ_ref²)), σ clamped at 1e-8.
double kl_to_reference(const GradientDistSnapshot& a, const GradientDistSnapshot& ref);
// Element-weighted mean over blocks.
double kl_to_reference(const std::vector<GradientDistSnapshot>& a,
                       const std::vector<GradientDistSnapshot>& ref);

struct KlTrackingConfig {
    MlpConfig mlp;
    std::uint64_t seed = 1;
    long steps = 2000;
    double learning_rate = 0.02;
    long snapshot_every = 50;
    std::size_t n_batches = 16;
    // Snapshots before this fraction of the run are excluded from the average.
    double skip_fraction = 0.05;
    GradNormConfig grad_norm_cfg;
};

struct KlTrackingResult {
    std::vector<long> steps;
    std::vector<double> kl_raw;
    std::vector<double> kl_gradnorm;
    std::vector<double> train_loss;
    double mean_kl_raw = 0.0;
    double mean_kl_gradnorm = 0.0;
};

// One SGD run; raw and gradnorm snapshots are taken on the same batches.
KlTrackingResult track_gradient_kl(const KlTrackingConfig& cfg);

struct CurvePoint {
    double step;
    double metric;
};

class PplCurve {
public:
    PplCurve() = default;
    explicit PplCurve(std::vector<CurvePoint> points);

    const std::vector<CurvePoint>& points() const { return points_; }
    bool empty() const { return points_.empty(); }
    double final_step() const { return points_.back().step; }

    // First step at which the piecewise-linear curve reaches metric <= p.
    std::optional<double> steps_to(double p) const;
    // Metric at step s by linear interpolation; nullopt outside the range.
    std::optional<double> metric_at(double s) const;

private:
    std::vector<CurvePoint> points_;
};

struct SpeedupEntry {
    double threshold;
    std::optional<double> s_adam;
    std::optional<double> s_swan;
    std::optional<double> ratio;  // empty when either curve misses the threshold
};

std::vector<SpeedupEntry> speedup_ratio(const PplCurve& adam, const PplCurve& swan,
                                        const std::vector<double>& thresholds);

// Geometric grid between the larger of the two curve minima and the smaller
// of the two maxima.
std::vector<double> default_thresholds(const PplCurve& a, const PplCurve& b, std::size_t count = 50);

struct AdditiveEntry {
    double threshold;
    std::optional<double> s_adam;
    std::optional<double> r_additive;  // empty when S_Adam(P) <= delta
};

struct CounterfactualResult {
    double delta = 0.0;
    std::size_t window_count = 0;
    std::vector<AdditiveEntry> entries;
    PplCurve ppl_additive;
};

CounterfactualResult counterfactual_additive(const PplCurve& adam, const PplCurve& swan,
                                             const std::vector<double>& thresholds,
                                             std::pair<double, double> early_fraction = {0.10, 0.20});

}  // namespace swan
