#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "swan/problems.hpp"
#include "swan/rng.hpp"

using namespace swan;

TEST_CASE("quadratic gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const QuadraticProblem p(make_spd(5, 50.0, seed), gaussian(5, 3, derive_seed(seed, 1)));
        const Matrix w = gaussian(5, 3, derive_seed(seed, 2));
        const Matrix fd = oracle::finite_difference([&](const Matrix& x) { return p.loss(x); }, w);
        CHECK(oracle::rel_error(p.grad(w), fd) < 1e-8);
    }
}

TEST_CASE("quadratic optimum and excess loss") {
    const Matrix h = make_spd(4, 20.0, 3);
    const Matrix c = gaussian(4, 2, 4);
    const QuadraticProblem p(h, c);
    CHECK(max_abs(p.grad(p.w_star())) < 1e-12);
    // L* = −½ Tr(Cᵀ H⁻¹ C).
    CHECK(p.l_star() == doctest::Approx(-0.5 * inner(c, matmul(spd_inverse(h), c))).epsilon(1e-12));
    const Matrix w = gaussian(4, 2, 5);
    CHECK(p.loss_minus_opt(w) == doctest::Approx(p.loss(w) - p.l_star()).epsilon(1e-10));
    CHECK(p.loss_minus_opt(p.w_star()) < 1e-24);
    CHECK_THROWS_AS(QuadraticProblem(h, Matrix(3, 2)), std::invalid_argument);
    CHECK_THROWS_AS(QuadraticProblem(Matrix::diag({1.0, 0.0}), Matrix(2, 1)), std::invalid_argument);
    const QuadraticProblem hom = QuadraticProblem::homogeneous(h, 3);
    CHECK(hom.l_star() == 0.0);
    CHECK(hom.n() == 3);
}

TEST_CASE("block_diag places blocks on the diagonal") {
    const Matrix b = block_diag({Matrix{{1, 2}, {3, 4}}, Matrix{{5}}});
    CHECK(b == Matrix{{1, 2, 0}, {3, 4, 0}, {0, 0, 5}});
}

TEST_CASE("rastrigin gradient matches finite differences") {
    const RastriginProblem p(10.0, 6);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Matrix w = gaussian(6, 6, seed);
        const Matrix fd = oracle::finite_difference([&](const Matrix& x) { return p.loss(x); }, w);
        CHECK(oracle::rel_error(p.grad(w), fd) < 1e-7);
    }
}

TEST_CASE("rastrigin has its global minimum at zero") {
    const RastriginProblem p(10.0, 4);
    CHECK(p.loss(Matrix(4, 4)) == doctest::Approx(0.0));
    CHECK(max_abs(p.grad(Matrix(4, 4))) == 0.0);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) CHECK(p.loss(gaussian(4, 4, seed, 2.0)) > 0.0);
    // One unit off the origin in a single entry: only the quadratic term remains.
    Matrix w(4, 4);
    w(1, 2) = 1.0;
    CHECK(p.loss(w) == doctest::Approx(0.5));
    CHECK_THROWS_AS(p.loss(Matrix(3, 4)), std::invalid_argument);
    CHECK_THROWS_AS(RastriginProblem(0.0, 4), std::invalid_argument);
}

TEST_CASE("mlp gradient matches finite differences") {
    MlpConfig cfg;
    cfg.dims = {5, 7, 6, 3};
    cfg.batch_size = 9;
    cfg.label_noise = 0.5;
    const MlpProblem p(cfg);
    CHECK(p.parameter_count() == 5 * 7 + 7 * 6 + 6 * 3);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const std::vector<Matrix> w = p.init_weights(seed);
        const std::uint64_t batch = derive_seed(seed, 3);
        const MlpProblem::Eval e = p.loss_and_grad(w, batch);
        CHECK(e.loss == doctest::Approx(p.loss(w, batch)).epsilon(1e-14));
        for (std::size_t l = 0; l < w.size(); ++l) {
            const Matrix fd = oracle::finite_difference(
                [&](const Matrix& x) {
                    std::vector<Matrix> ww = w;
                    ww[l] = x;
                    return p.loss(ww, batch);
                },
                w[l]);
            CHECK(oracle::rel_error(e.grads[l], fd) < 1e-7);
        }
    }
}

TEST_CASE("mlp batches and weights are deterministic") {
    MlpConfig cfg;
    cfg.dims = {4, 6, 2};
    const MlpProblem p(cfg);
    const std::vector<Matrix> w = p.init_weights(1);
    CHECK(w == p.init_weights(1));
    CHECK(w[0].rows() == 6);
    CHECK(w[0].cols() == 4);
    CHECK(p.loss(w, 5) == p.loss(w, 5));
    CHECK(p.loss(w, 5) != p.loss(w, 6));
    // The teacher fits the noiseless targets exactly.
    MlpConfig clean = cfg;
    clean.label_noise = 0.0;
    const MlpProblem q(clean);
    CHECK(q.loss(q.teacher(), 3) == doctest::Approx(0.0));
    CHECK_THROWS_AS(p.loss({w[0]}, 1), std::invalid_argument);
    CHECK_THROWS_AS(p.loss({w[1], w[0]}, 1), std::invalid_argument);
    MlpConfig bad = cfg;
    bad.dims = {4};
    CHECK_THROWS_AS(MlpProblem{bad}, std::invalid_argument);
}

TEST_CASE("stb field closed form") {
    const Matrix mu{{1.0, -2.0}, {0.5, 0.0}};
    const StbSystem s(mu, 0.25, 1e-3, 0.0);
    const Matrix v{{0.1, 0.2}, {-0.3, 0.4}};
    const Matrix f = s.field(v);
    const double r0 = std::exp(0.5 * (0.01 + 0.04) + 0.25);
    const double r1 = std::exp(0.5 * (0.09 + 0.16) + 0.25);
    CHECK(f(0, 0) == doctest::Approx(1.0 * r0));
    CHECK(f(0, 1) == doctest::Approx(-2.0 * r0));
    CHECK(f(1, 0) == doctest::Approx(0.5 * r1));
    CHECK(f(1, 1) == 0.0);
}

TEST_CASE("stb hessian is the jacobian of the field") {
    StbConfig cfg;
    cfg.context_len = 4;
    cfg.n = 3;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        cfg.mu_seed = seed;
        const StbSystem s(cfg);
        const Matrix v = gaussian(4, 3, derive_seed(seed, 7), 0.5);
        const Matrix h = s.hessian(v);
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t l = 0; l < 4; ++l) {
                const Matrix col = oracle::finite_difference(
                    [&](const Matrix& x) { return s.field(x)(l, k); }, v);
                for (std::size_t kp = 0; kp < 3; ++kp)
                    for (std::size_t lp = 0; lp < 4; ++lp) {
                        CHECK(h(k * 4 + l, kp * 4 + lp) ==
                              doctest::Approx(col(lp, kp)).epsilon(1e-7).scale(1.0));
                    }
            }
        }
        const std::vector<Matrix> blocks = s.diagonal_blocks(v);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t a = 0; a < 4; ++a)
                for (std::size_t b = 0; b < 4; ++b) CHECK(blocks[k](a, b) == h(k * 4 + a, k * 4 + b));
    }
}

TEST_CASE("stb integration is deterministic and stops before overflow") {
    StbConfig cfg;
    cfg.context_len = 3;
    cfg.n = 4;
    cfg.dt = 0.05;
    cfg.mu_seed = 2;
    const StbSystem s(cfg);
    const Matrix v0 = gaussian(3, 4, 9, 0.5);
    const StbTrajectory a = stb_integrate_until_overflow(s, v0, 1, 10);
    const StbTrajectory b = stb_integrate_until_overflow(s, v0, 1, 10);
    REQUIRE(a.overflow_step.has_value());
    CHECK(a.last_finite == b.last_finite);
    CHECK(a.last_finite_step == *a.overflow_step - 1);
    CHECK(all_finite(s.field(a.last_finite)));
    CHECK(a.steps.back() == a.last_finite_step);
    for (std::size_t i = 1; i < a.steps.size(); ++i) CHECK(a.steps[i] > a.steps[i - 1]);

    const StbTrajectory shortrun = stb_integrate(s, v0, 3, 1);
    CHECK(shortrun.states.size() == 4);
    CHECK_FALSE(shortrun.overflow_step.has_value());
    Matrix manual = v0;
    for (int t = 0; t < 3; ++t) manual += s.field(manual) * cfg.dt;
    CHECK(oracle::max_abs_diff(shortrun.last_finite, manual) < 1e-14);
    CHECK_THROWS_AS(stb_integrate(s, Matrix(2, 2), 3, 1), std::invalid_argument);
}

TEST_CASE("stb noise perturbs the drift reproducibly") {
    StbConfig cfg;
    cfg.context_len = 3;
    cfg.n = 2;
    cfg.noise_std = 0.3;
    const StbSystem s(cfg);
    const Matrix v0 = gaussian(3, 2, 4, 0.1);
    CHECK(stb_integrate(s, v0, 20, 5).last_finite == stb_integrate(s, v0, 20, 5).last_finite);
    CHECK_FALSE(stb_integrate(s, v0, 20, 5).last_finite == stb_integrate(s, v0, 20, 6).last_finite);
}

TEST_CASE("stb initial state from an embedding") {
    const Matrix u{{1, 0}, {0, 1}, {1, 1}};
    const Matrix w{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    CHECK(StbSystem::initial_state_from_embedding(u, w) == matmul_tn(u, w));
}

TEST_CASE("normalized block spread") {
    const Matrix a = Matrix::diag({1, 2, 3});
    CHECK(normalized_block_spread({a, a * 5.0}) == doctest::Approx(0.0));
    CHECK(normalized_block_spread({Matrix::diag({1, 1}), Matrix::diag({3, 1})}) == doctest::Approx(0.25));
    CHECK_THROWS_AS(normalized_block_spread({Matrix::diag({1, -1}), a}), std::domain_error);
}
