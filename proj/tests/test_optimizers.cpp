#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "swan/optimizers.hpp"
#include "swan/rng.hpp"

using namespace swan;

namespace {

OptimizerConfig config(OptimizerKind kind, double lr = 0.1) {
    OptimizerConfig c;
    c.kind = kind;
    c.learning_rate = lr;
    return c;
}

OptimizerConfig exact_swan() {
    OptimizerConfig c = config(OptimizerKind::swan);
    c.whitening_cfg.mode = WhiteningMode::exact_eig;
    return c;
}

}  // namespace

TEST_CASE("adam matches a scalar reference over several steps") {
    OptimizerConfig c = config(OptimizerKind::adam, 0.01);
    const std::vector<double> grads{0.5, -1.0, 2.0, 0.25};
    Matrix w{{1.0}};
    OptimizerState s = init_state(c, 1, 1);
    double x = 1.0, m = 0.0, v = 0.0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
        const double g = grads[t - 1];
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        AdamResult r = adam_step(w, Matrix{{g}}, std::move(s), c);
        w = r.w;
        s = std::move(r.state);
        CHECK(w(0, 0) == doctest::Approx(x).epsilon(1e-14));
        CHECK(s.t == static_cast<long>(t));
    }
}

TEST_CASE("adam with beta1 0 and beta2 1 takes a sign step first") {
    OptimizerConfig c = config(OptimizerKind::adam, 0.3);
    c.adam_beta1 = 0.0;
    c.adam_beta2 = 1.0;
    const Matrix g{{2.0, -0.5, 1e-3}};
    const AdamResult r = adam_step(Matrix(1, 3), g, OptimizerState{}, c);
    CHECK(r.w(0, 0) == doctest::Approx(-0.3).epsilon(1e-7));
    CHECK(r.w(0, 1) == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(r.w(0, 2) == doctest::Approx(-0.3).epsilon(1e-4));
    // The second moment stays frozen at the first gradient.
    const AdamResult r2 = adam_step(r.w, g * 2.0, r.state, c);
    CHECK(r2.w(0, 0) == doctest::Approx(-0.3 - 0.6).epsilon(1e-7));
}

TEST_CASE("adam rejects an uninitialized state past step 0") {
    OptimizerState s;
    s.t = 3;
    CHECK_THROWS_AS(adam_step(Matrix(1, 1), Matrix(1, 1), s, config(OptimizerKind::adam)), std::invalid_argument);
}

TEST_CASE("sgd and signed steps") {
    const Matrix w{{1, 2}};
    const Matrix g{{0.5, -3}};
    CHECK(sgd_step(w, g, config(OptimizerKind::sgd, 0.1)) == Matrix{{0.95, 2.3}});
    CHECK(signed_step(w, g, config(OptimizerKind::signed_sgd, 0.1)) == Matrix{{0.9, 2.1}});
    CHECK(signed_step(w, Matrix(1, 2), config(OptimizerKind::signed_sgd, 0.1)) == w);
    CHECK_THROWS_AS(sgd_step(w, Matrix(2, 1), config(OptimizerKind::sgd)), std::invalid_argument);
}

TEST_CASE("stateless kinds allocate no moment buffers") {
    for (auto k : {OptimizerKind::swan, OptimizerKind::sgd, OptimizerKind::signed_sgd, OptimizerKind::gd_optimal,
                   OptimizerKind::newton, OptimizerKind::whitened_gd_optimal}) {
        CHECK(is_stateless(k));
        CHECK(init_state(config(k), 512, 512).moment_buffer_count() == 0);
    }
    const OptimizerState s = init_state(config(OptimizerKind::adam), 512, 512);
    CHECK(s.moment_buffer_count() == 2);
    CHECK(s.first_moment->rows() == 512);
}

TEST_CASE("swan steps are bit-identical on identical inputs") {
    const OptimizerConfig c = config(OptimizerKind::swan);
    const Matrix w = gaussian(8, 16, 1);
    const Matrix g = gaussian(8, 16, 2);
    const Matrix a = swan_step(w, g, c);
    for (int i = 0; i < 5; ++i) CHECK(swan_step(w, g, c) == a);
}

TEST_CASE("swan ablations isolate each stage") {
    const Matrix g = gaussian(5, 11, 3);
    OptimizerConfig c = exact_swan();
    c.ablation = Ablation::norm_only;
    CHECK(swan_direction(g, c) == grad_norm(g, c.grad_norm_cfg));

    c.ablation = Ablation::whiten_only;
    c.swan_rescale = false;
    CHECK(oracle::max_abs_diff(swan_direction(g, c), exact_polar(g)) < 1e-14);

    c.ablation = Ablation::full;
    c.swan_rescale = false;
    CHECK(oracle::max_abs_diff(swan_direction(g, c), exact_polar(grad_norm(g))) < 1e-14);

    c.swan_rescale = true;
    CHECK(frobenius_norm(swan_direction(g, c)) == doctest::Approx(frobenius_norm(grad_norm(g))));
}

TEST_CASE("swan direction of a tall gradient is the transpose of the wide one") {
    const Matrix g = gaussian(12, 4, 5);
    const OptimizerConfig c = exact_swan();
    CHECK(oracle::max_abs_diff(swan_direction(g, c), transpose(swan_direction(transpose(g), c))) < 1e-14);
}

TEST_CASE("swan direction inherits grad_norm invariances") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Matrix g = gaussian(6, 14, seed);
        Matrix h = g;
        Rng r(seed, 5);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            const double a = 0.1 + 5.0 * r.uniform();
            const double b = 4.0 * r.normal();
            for (std::size_t j = 0; j < g.cols(); ++j) h(i, j) = a * g(i, j) + b;
        }
        OptimizerConfig c = exact_swan();
        c.grad_norm_cfg.epsilon = 0.0;
        CHECK(frobenius_norm(swan_direction(g, c) - swan_direction(h, c)) <= 1e-9);
    }
}

TEST_CASE("swan direction of a zero-variance gradient is zero") {
    const Matrix g(3, 5, 2.0);
    CHECK(frobenius_norm(swan_direction(g, config(OptimizerKind::swan))) == 0.0);
}

TEST_CASE("quadratic-context steps") {
    const Matrix h = Matrix::diag({1.0, 3.0});
    CHECK(gd_optimal_rate(h) == doctest::Approx(0.5));
    const Matrix w{{1.0, 2.0}, {1.0, -1.0}};
    CHECK(gd_optimal_step(w, h) == Matrix{{0.5, 1.0}, {-0.5, 0.5}});
    CHECK(oracle::max_abs_diff(newton_step(w, h, 1.0), Matrix(2, 2)) < 1e-15);
    CHECK(oracle::max_abs_diff(newton_step(w, h, 0.25), w * 0.75) < 1e-15);

    const Matrix spd = make_spd(6, 1e3, 4);
    const Matrix q = sample_stiefel(6, 6, 8);
    CHECK(max_abs(whitened_gd_optimal_step(q, spd)) < 1e-12);
}

TEST_CASE("whitened optimal update uses the schatten-1 norm over the trace") {
    const Matrix h = make_spd(5, 10.0, 1);
    const Matrix w = gaussian(5, 7, 2);
    const Matrix g = matmul(h, w);
    const StepOutput out = whitened_optimal_update(w, g, trace(h));
    CHECK(out.eta == doctest::Approx(oracle::schatten1(g) / trace(h)).epsilon(1e-12));
    CHECK(oracle::max_abs_diff(out.w, w - exact_polar(g) * out.eta) < 1e-12);
}

TEST_CASE("optimizer_step dispatch") {
    const HessianInfo info = make_hessian_info(Matrix::diag({1.0, 4.0}));
    CHECK(info.lambda_max == doctest::Approx(4.0));
    CHECK(info.lambda_min == doctest::Approx(1.0));
    CHECK(info.trace == doctest::Approx(5.0));
    const Matrix w{{1.0}, {1.0}};
    const Matrix g = matmul(info.h, w);
    OptimizerState s;
    const StepOutput gd = optimizer_step(w, g, s, config(OptimizerKind::gd_optimal), &info);
    CHECK(gd.eta == doctest::Approx(0.4));
    CHECK(s.t == 1);
    CHECK_THROWS_AS(optimizer_step(w, g, s, config(OptimizerKind::newton)), std::invalid_argument);
    const StepOutput sg = optimizer_step(w, g, s, config(OptimizerKind::sgd, 0.1), nullptr, 0.5);
    CHECK(sg.eta == doctest::Approx(0.05));
    CHECK_THROWS_AS(make_hessian_info(Matrix::diag({1.0, -1.0})), std::invalid_argument);
}

TEST_CASE("schedule multipliers") {
    Schedule s;
    CHECK(s.multiplier(5, 100) == 1.0);
    s.kind = ScheduleKind::linear_warmup_decay;
    s.warmup_fraction = 0.1;
    s.final_fraction = 0.1;
    CHECK(s.multiplier(0, 100) == doctest::Approx(0.1));
    CHECK(s.multiplier(9, 100) == doctest::Approx(1.0));
    CHECK(s.multiplier(10, 100) == doctest::Approx(1.0));
    CHECK(s.multiplier(100, 100) == doctest::Approx(0.1));
    for (long t = 11; t < 100; ++t) CHECK(s.multiplier(t, 100) <= s.multiplier(t - 1, 100));
}

TEST_CASE("config validation and names") {
    OptimizerConfig c;
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = OptimizerConfig{};
    c.adam_beta1 = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    for (auto k : {OptimizerKind::swan, OptimizerKind::adam, OptimizerKind::whitened_gd_optimal}) {
        CHECK(parse_optimizer_kind(to_string(k)) == k);
    }
    for (auto a : {Ablation::full, Ablation::norm_only, Ablation::whiten_only}) CHECK(parse_ablation(to_string(a)) == a);
    CHECK_THROWS_AS(parse_optimizer_kind("lion"), std::invalid_argument);
    CHECK_THROWS_AS(parse_ablation("none"), std::invalid_argument);
}
