#include <doctest.h>

#include <cmath>
#include <functional>

#include "oracles.hpp"
#include "swan/analysis.hpp"
#include "swan/rng.hpp"

using namespace swan;

namespace {

GradientDistSnapshot constant_snapshot(double mean, double sd, std::size_t n = 3) {
    GradientDistSnapshot s;
    s.mean = Matrix(1, n, mean);
    s.std = Matrix(1, n, sd);
    s.n_batches = 16;
    return s;
}

PplCurve curve(const std::vector<double>& steps, const std::function<double(double)>& f) {
    std::vector<CurvePoint> pts;
    for (double s : steps) pts.push_back({s, f(s)});
    return PplCurve(pts);
}

std::vector<double> grid(double lo, double hi, double step) {
    std::vector<double> s;
    for (double v = lo; v <= hi + 1e-12; v += step) s.push_back(v);
    return s;
}

}  // namespace

TEST_CASE("snapshot statistics match a sum-of-squares oracle") {
    std::vector<Matrix> samples;
    for (std::uint64_t b = 0; b < 16; ++b) samples.push_back(gaussian(3, 4, b + 1, 2.0) + Matrix(3, 4, 5.0));
    const GradientDistSnapshot s = snapshot_from_samples(samples);
    CHECK(s.n_batches == 16);
    for (std::size_t i = 0; i < 12; ++i) {
        double sum = 0.0, sq = 0.0;
        for (const auto& m : samples) {
            sum += m.data()[i];
            sq += m.data()[i] * m.data()[i];
        }
        const double mean = sum / 16.0;
        const double var = sq / 16.0 - mean * mean;
        CHECK(s.mean.data()[i] == doctest::Approx(mean).epsilon(1e-13));
        CHECK(s.std.data()[i] == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
        CHECK(s.std.data()[i] >= 0.0);
    }
    CHECK_THROWS_AS(snapshot_from_samples({samples[0]}), std::invalid_argument);
    CHECK_THROWS_AS(snapshot_from_samples({samples[0], Matrix(2, 2)}), std::invalid_argument);
}

TEST_CASE("gaussian KL closed forms") {
    // Equal spread, unit mean shift: ½.
    CHECK(kl_to_reference(constant_snapshot(1.0, 1.0), constant_snapshot(0.0, 1.0)) == doctest::Approx(0.5));
    // σ_a = e, σ_ref = 1: log(1/e) + e²/2 − ½ = e²/2 − 3/2.
    const double e = std::exp(1.0);
    CHECK(kl_to_reference(constant_snapshot(0.0, e), constant_snapshot(0.0, 1.0)) ==
          doctest::Approx(e * e / 2.0 - 1.5));
    // σ_a = 1, σ_ref = e: 1 + 1/(2e²) − ½.
    CHECK(kl_to_reference(constant_snapshot(0.0, 1.0), constant_snapshot(0.0, e)) ==
          doctest::Approx(0.5 + 1.0 / (2.0 * e * e)));
    CHECK(kl_to_reference(constant_snapshot(2.0, 3.0), constant_snapshot(2.0, 3.0)) == 0.0);
}

TEST_CASE("KL is non-negative and element weighted across blocks") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        GradientDistSnapshot a, b;
        a.mean = gaussian(2, 3, seed);
        b.mean = gaussian(2, 3, seed + 100);
        a.std = hadamard(gaussian(2, 3, seed + 200), gaussian(2, 3, seed + 200));
        b.std = hadamard(gaussian(2, 3, seed + 300), gaussian(2, 3, seed + 300));
        CHECK(kl_to_reference(a, b) >= 0.0);
    }
    const auto small = constant_snapshot(1.0, 1.0, 1);
    const auto big = constant_snapshot(0.0, 1.0, 3);
    const double kl = kl_to_reference({small, big}, {constant_snapshot(0.0, 1.0, 1), big});
    CHECK(kl == doctest::Approx(0.5 / 4.0));
    CHECK_THROWS_AS(kl_to_reference({small}, {small, big}), std::invalid_argument);
}

TEST_CASE("gradient snapshots are reproducible") {
    MlpConfig cfg;
    cfg.dims = {4, 5, 2};
    cfg.batch_size = 8;
    const MlpProblem p(cfg);
    const auto w = p.init_weights(1);
    const auto a = snapshot_gradients(p, w, Preprocess::raw, 4, 9);
    const auto b = snapshot_gradients(p, w, Preprocess::raw, 4, 9);
    REQUIRE(a.size() == 2);
    CHECK(a[0].mean == b[0].mean);
    CHECK(a[1].std == b[1].std);
    const auto n = snapshot_gradients(p, w, Preprocess::gradnorm, 4, 9);
    CHECK_FALSE(n[0].mean == a[0].mean);
    CHECK_THROWS_AS(snapshot_gradients(p, w, Preprocess::raw, 1, 9), std::invalid_argument);
}

TEST_CASE("KL tracking produces one entry per snapshot") {
    KlTrackingConfig cfg;
    cfg.mlp.dims = {4, 6, 2};
    cfg.mlp.batch_size = 8;
    cfg.steps = 40;
    cfg.snapshot_every = 10;
    cfg.n_batches = 4;
    const KlTrackingResult r = track_gradient_kl(cfg);
    CHECK(r.steps == std::vector<long>{10, 20, 30, 40});
    CHECK(r.kl_raw.size() == 4);
    for (double v : r.kl_raw) CHECK(v >= 0.0);
    const KlTrackingResult again = track_gradient_kl(cfg);
    CHECK(again.mean_kl_gradnorm == r.mean_kl_gradnorm);
    cfg.skip_fraction = 1.0;
    CHECK_THROWS_AS(track_gradient_kl(cfg), std::invalid_argument);
}

TEST_CASE("curve validation and interpolation") {
    CHECK_THROWS_AS(PplCurve({{0, 1.0}, {1, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(PplCurve({{0, 2.0}, {0, 1.0}}), std::invalid_argument);
    const PplCurve c({{0, 10.0}, {10, 5.0}, {20, 4.0}});
    CHECK(*c.steps_to(7.5) == doctest::Approx(5.0));
    CHECK(*c.steps_to(10.0) == 0.0);
    CHECK(*c.steps_to(4.5) == doctest::Approx(15.0));
    CHECK_FALSE(c.steps_to(3.0).has_value());
    CHECK(*c.metric_at(15.0) == doctest::Approx(4.5));
    CHECK_FALSE(c.metric_at(25.0).has_value());
}

TEST_CASE("speedup ratio for identical curves is one") {
    const PplCurve a = curve(grid(0, 1000, 10), [](double s) { return 100.0 / (1.0 + s / 50.0); });
    const auto th = default_thresholds(a, a, 20);
    for (const auto& e : speedup_ratio(a, a, th)) {
        if (e.ratio) CHECK(*e.ratio == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("speedup ratio for a twice-as-fast curve is two") {
    auto f = [](double s) { return 2.0 + 50.0 * std::exp(-s / 200.0); };
    std::vector<CurvePoint> fast;
    for (double s : grid(0, 2000, 10)) fast.push_back({s / 2.0, f(s)});
    const PplCurve slow = curve(grid(0, 2000, 10), f);
    const auto th = default_thresholds(slow, PplCurve(fast), 30);
    for (const auto& e : speedup_ratio(slow, PplCurve(fast), th)) {
        if (e.ratio && *e.s_swan > 0) CHECK(*e.ratio == doctest::Approx(2.0).epsilon(1e-9));
    }
}

TEST_CASE("counterfactual additive recovers a pure shift") {
    auto f = [](double s) { return 2.0 + 50.0 * std::exp(-s / 300.0); };
    const double delta = 120.0;
    const PplCurve adam = curve(grid(0, 3000, 10), f);
    std::vector<CurvePoint> shifted;
    for (double s : grid(delta, 3000, 10)) shifted.push_back({s - delta, f(s)});
    const PplCurve swan(shifted);
    const auto th = default_thresholds(adam, swan, 60);
    const CounterfactualResult r = counterfactual_additive(adam, swan, th);
    CHECK(r.window_count > 0);
    CHECK(r.delta == doctest::Approx(delta).epsilon(1e-9));
    for (const auto& e : r.entries) {
        if (e.r_additive) CHECK(*e.r_additive == doctest::Approx(*e.s_adam / (*e.s_adam - delta)).epsilon(1e-12));
    }
    for (const auto& p : r.ppl_additive.points()) CHECK(p.metric == doctest::Approx(f(p.step + delta)).epsilon(1e-12));
}

TEST_CASE("counterfactual additive rejects an empty window") {
    const PplCurve a({{0, 10.0}, {100, 1.0}});
    CHECK_THROWS_AS(counterfactual_additive(a, a, {0.5}, {0.9, 0.95}), std::invalid_argument);
    CHECK_THROWS_AS(counterfactual_additive(a, a, {0.5}, {0.3, 0.2}), std::invalid_argument);
}

TEST_CASE("default thresholds span the shared metric range geometrically") {
    const PplCurve a({{0, 100.0}, {10, 10.0}});
    const PplCurve b({{0, 50.0}, {10, 5.0}});
    const auto t = default_thresholds(a, b, 3);
    REQUIRE(t.size() == 3);
    CHECK(t[0] == 50.0);
    CHECK(t[2] == 10.0);
    CHECK(t[1] == doctest::Approx(std::sqrt(500.0)));
}
