#include "swan/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "swan/rng.hpp"

namespace swan {

namespace {

constexpr double kSigmaFloor = 1e-8;

// Per-block gradient samples for both preprocessing variants.
struct SampleSet {
    std::vector<std::vector<Matrix>> raw;       // [block][batch]
    std::vector<std::vector<Matrix>> gradnorm;  // [block][batch]
};

SampleSet collect_samples(const MlpProblem& problem, const std::vector<Matrix>& weights,
                          std::size_t n_batches, std::uint64_t seed, const GradNormConfig& gn,
                          bool want_raw, bool want_gradnorm) {
    SampleSet s;
    s.raw.resize(weights.size());
    s.gradnorm.resize(weights.size());
    for (std::size_t b = 0; b < n_batches; ++b) {
        const auto eval = problem.loss_and_grad(weights, derive_seed(seed, 0x736e6170ULL, b));
        for (std::size_t l = 0; l < eval.grads.size(); ++l) {
            if (want_gradnorm) s.gradnorm[l].push_back(grad_norm(eval.grads[l], gn));
            if (want_raw) s.raw[l].push_back(eval.grads[l]);
        }
    }
    return s;
}

std::vector<GradientDistSnapshot> to_snapshots(const std::vector<std::vector<Matrix>>& samples) {
    std::vector<GradientDistSnapshot> out;
    for (const auto& block : samples) out.push_back(snapshot_from_samples(block));
    return out;
}

}  // namespace

GradientDistSnapshot snapshot_from_samples(const std::vector<Matrix>& samples) {
    if (samples.size() < 2) throw std::invalid_argument("snapshot: need at least 2 batches");
    const Matrix& first = samples.front();
    GradientDistSnapshot snap;
    snap.n_batches = samples.size();
    snap.mean = Matrix(first.rows(), first.cols());
    snap.std = Matrix(first.rows(), first.cols());
    for (const auto& s : samples) snap.mean += s;
    snap.mean *= 1.0 / static_cast<double>(samples.size());
    for (const auto& s : samples) {
        require_same_shape(s, first, "snapshot");
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double d = s.data()[i] - snap.mean.data()[i];
            snap.std.data()[i] += d * d;
        }
    }
    for (double& v : snap.std.data()) v = std::sqrt(v / static_cast<double>(samples.size()));
    return snap;
}

std::vector<GradientDistSnapshot> snapshot_gradients(const MlpProblem& problem,
                                                     const std::vector<Matrix>& weights,
                                                     Preprocess preprocess, std::size_t n_batches,
                                                     std::uint64_t seed, const GradNormConfig& gn) {
    if (n_batches < 2) throw std::invalid_argument("snapshot_gradients: n_batches must be >= 2");
    const bool norm = preprocess == Preprocess::gradnorm;
    const SampleSet s = collect_samples(problem, weights, n_batches, seed, gn, !norm, norm);
    return to_snapshots(norm ? s.gradnorm : s.raw);
}

double kl_to_reference(const GradientDistSnapshot& a, const GradientDistSnapshot& ref) {
    require_same_shape(a.mean, ref.mean, "kl_to_reference");
    require_same_shape(a.std, ref.std, "kl_to_reference");
    require_same_shape(a.mean, a.std, "kl_to_reference");
    double total = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double sa = std::max(a.std.data()[i], kSigmaFloor);
        const double sr = std::max(ref.std.data()[i], kSigmaFloor);
        const double dm = a.mean.data()[i] - ref.mean.data()[i];
        total += std::log(sr / sa) + (sa * sa + dm * dm) / (2.0 * sr * sr) - 0.5;
    }
    return total / static_cast<double>(a.mean.size());
}

double kl_to_reference(const std::vector<GradientDistSnapshot>& a,
                       const std::vector<GradientDistSnapshot>& ref) {
    if (a.size() != ref.size() || a.empty()) throw std::invalid_argument("kl_to_reference: block count mismatch");
    double total = 0.0;
    double count = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        const double n = static_cast<double>(a[l].mean.size());
        total += n * kl_to_reference(a[l], ref[l]);
        count += n;
    }
    return total / count;
}

KlTrackingResult track_gradient_kl(const KlTrackingConfig& cfg) {
    if (cfg.steps < 1 || cfg.snapshot_every < 1) throw std::invalid_argument("kl tracking: steps and snapshot_every must be >= 1");
    const MlpProblem problem(cfg.mlp);
    std::vector<Matrix> w = problem.init_weights(cfg.seed);

    auto snapshot_pair = [&](long step) {
        const SampleSet s = collect_samples(problem, w, cfg.n_batches, derive_seed(cfg.seed, 2, step),
                                            cfg.grad_norm_cfg, true, true);
        return std::make_pair(to_snapshots(s.raw), to_snapshots(s.gradnorm));
    };

    const auto ref = snapshot_pair(0);
    KlTrackingResult out;
    const double skip = cfg.skip_fraction * static_cast<double>(cfg.steps);
    double sum_raw = 0.0;
    double sum_norm = 0.0;
    long counted = 0;
    for (long t = 1; t <= cfg.steps; ++t) {
        auto eval = problem.loss_and_grad(w, derive_seed(cfg.seed, 1, static_cast<std::uint64_t>(t)));
        for (std::size_t l = 0; l < w.size(); ++l) w[l] -= eval.grads[l] * cfg.learning_rate;
        if (t % cfg.snapshot_every != 0) continue;
        const auto snap = snapshot_pair(t);
        const double kr = kl_to_reference(snap.first, ref.first);
        const double kn = kl_to_reference(snap.second, ref.second);
        out.steps.push_back(t);
        out.kl_raw.push_back(kr);
        out.kl_gradnorm.push_back(kn);
        out.train_loss.push_back(eval.loss);
        if (static_cast<double>(t) > skip) {
            sum_raw += kr;
            sum_norm += kn;
            ++counted;
        }
    }
    if (counted == 0) throw std::invalid_argument("kl tracking: no snapshots after the skipped prefix");
    out.mean_kl_raw = sum_raw / static_cast<double>(counted);
    out.mean_kl_gradnorm = sum_norm / static_cast<double>(counted);
    return out;
}

PplCurve::PplCurve(std::vector<CurvePoint> points) : points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!(points_[i].metric > 0.0) || !std::isfinite(points_[i].metric)) {
            throw std::invalid_argument("curve: metric must be finite and > 0 at index " + std::to_string(i));
        }
        if (i > 0 && !(points_[i].step > points_[i - 1].step)) {
            throw std::invalid_argument("curve: steps must be strictly increasing at index " + std::to_string(i));
        }
    }
}

std::optional<double> PplCurve::steps_to(double p) const {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (points_[i].metric <= p) {
            if (i == 0) return points_[0].step;
            const CurvePoint& a = points_[i - 1];
            const CurvePoint& b = points_[i];
            return a.step + (p - a.metric) * (b.step - a.step) / (b.metric - a.metric);
        }
    }
    return std::nullopt;
}

std::optional<double> PplCurve::metric_at(double s) const {
    if (points_.empty() || s < points_.front().step || s > points_.back().step) return std::nullopt;
    auto it = std::lower_bound(points_.begin(), points_.end(), s,
                               [](const CurvePoint& c, double v) { return c.step < v; });
    if (it->step == s) return it->metric;
    const CurvePoint& b = *it;
    const CurvePoint& a = *(it - 1);
    return a.metric + (s - a.step) * (b.metric - a.metric) / (b.step - a.step);
}

std::vector<SpeedupEntry> speedup_ratio(const PplCurve& adam, const PplCurve& swan,
                                        const std::vector<double>& thresholds) {
    if (adam.empty() || swan.empty()) throw std::invalid_argument("speedup_ratio: empty curve");
    std::vector<SpeedupEntry> out;
    for (double p : thresholds) {
        SpeedupEntry e{p, adam.steps_to(p), swan.steps_to(p), std::nullopt};
        if (e.s_adam && e.s_swan && *e.s_swan > 0.0) e.ratio = *e.s_adam / *e.s_swan;
        out.push_back(e);
    }
    return out;
}

std::vector<double> default_thresholds(const PplCurve& a, const PplCurve& b, std::size_t count) {
    if (a.empty() || b.empty()) throw std::invalid_argument("default_thresholds: empty curve");
    auto range = [](const PplCurve& c) {
        double lo = c.points().front().metric;
        double hi = lo;
        for (const auto& p : c.points()) {
            lo = std::min(lo, p.metric);
            hi = std::max(hi, p.metric);
        }
        return std::make_pair(lo, hi);
    };
    const auto ra = range(a);
    const auto rb = range(b);
    const double lo = std::max(ra.first, rb.first);
    const double hi = std::min(ra.second, rb.second);
    if (!(lo <= hi) || count == 0) return {};
    if (count == 1) return {hi};
    std::vector<double> t(count);
    const double ratio = std::log(lo / hi);
    for (std::size_t i = 0; i < count; ++i) {
        t[i] = hi * std::exp(ratio * static_cast<double>(i) / static_cast<double>(count - 1));
    }
    t.front() = hi;
    t.back() = lo;
    return t;
}

CounterfactualResult counterfactual_additive(const PplCurve& adam, const PplCurve& swan,
                                             const std::vector<double>& thresholds,
                                             std::pair<double, double> early_fraction) {
    if (adam.empty() || swan.empty()) throw std::invalid_argument("counterfactual_additive: empty curve");
    if (!(early_fraction.first >= 0.0 && early_fraction.first < early_fraction.second)) {
        throw std::invalid_argument("counterfactual_additive: early window must satisfy 0 <= lo < hi");
    }
    const double lo = early_fraction.first * adam.final_step();
    const double hi = early_fraction.second * adam.final_step();

    CounterfactualResult out;
    double sum = 0.0;
    for (double p : thresholds) {
        const auto sa = adam.steps_to(p);
        const auto ss = swan.steps_to(p);
        if (!sa || !ss || *sa < lo || *sa > hi) continue;
        sum += *sa - *ss;
        ++out.window_count;
    }
    if (out.window_count == 0) throw std::invalid_argument("counterfactual_additive: early window contains no thresholds");
    out.delta = sum / static_cast<double>(out.window_count);

    for (double p : thresholds) {
        AdditiveEntry e{p, adam.steps_to(p), std::nullopt};
        if (e.s_adam && *e.s_adam > out.delta) e.r_additive = *e.s_adam / (*e.s_adam - out.delta);
        out.entries.push_back(e);
    }

    std::vector<CurvePoint> shifted;
    for (const auto& pt : adam.points()) {
        const auto m = adam.metric_at(pt.step + out.delta);
        if (m) shifted.push_back({pt.step, *m});
    }
    out.ppl_additive = PplCurve(std::move(shifted));
    return out;
}

}  // namespace swan
