#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "oracles.hpp"
#include "swan/matrix.hpp"
#include "swan/rng.hpp"

using namespace swan;

TEST_CASE("rng is deterministic and splits into distinct streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(a.counter() == 100);

    Rng base(7);
    Rng c1 = base.split(1);
    Rng c2 = base.split(2);
    CHECK(c1.key() != c2.key());
    CHECK(c1.next_u64() != c2.next_u64());
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 2) == derive_seed(1, 2, 0));
}

TEST_CASE("rng uniform lies in the open unit interval and normal has unit moments") {
    Rng r(3);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(sq / n - 1.0) < 0.02);
}

TEST_CASE("matrix construction validates input") {
    CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1, std::nan("")}), NonFiniteError);
    CHECK_THROWS_AS(Matrix(1, 1, std::vector<double>{std::numeric_limits<double>::infinity()}), NonFiniteError);
    CHECK_THROWS_AS((Matrix{{1, 2}, {3}}), std::invalid_argument);
    const Matrix m{{1, 2, 3}, {4, 5, 6}};
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m(1, 2) == 6);
    CHECK(m.shape_str() == "2x3");
}

TEST_CASE("matmul variants agree with the triple loop") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng r(seed);
        const std::size_t m = 1 + r.next_u64() % 7, k = 1 + r.next_u64() % 7, n = 1 + r.next_u64() % 7;
        const Matrix a = gaussian(m, k, derive_seed(seed, 1));
        const Matrix b = gaussian(k, n, derive_seed(seed, 2));
        const Matrix ref = oracle::matmul(a, b);
        CHECK(oracle::max_abs_diff(matmul(a, b), ref) < 1e-13);
        CHECK(oracle::max_abs_diff(matmul_nt(a, oracle::transpose(b)), ref) < 1e-13);
        CHECK(oracle::max_abs_diff(matmul_tn(oracle::transpose(a), b), ref) < 1e-13);
        CHECK(transpose(a) == oracle::transpose(a));
    }
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), std::invalid_argument);
}

TEST_CASE("elementwise helpers") {
    const Matrix a{{1, -2}, {3, 4}};
    const Matrix b{{2, 0}, {1, -1}};
    CHECK(trace(a) == 5);
    CHECK(inner(a, b) == doctest::Approx(2 + 0 + 3 - 4));
    CHECK(hadamard(a, b) == Matrix{{2, 0}, {3, -4}});
    CHECK(max_abs(a) == 4);
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(30.0)));
    CHECK((a + b) == Matrix{{3, -2}, {4, 3}});
    CHECK((a - b) == Matrix{{-1, -2}, {2, 5}});
    CHECK((2.0 * a) == Matrix{{2, -4}, {6, 8}});
    CHECK_THROWS_AS(trace(Matrix(2, 3)), std::invalid_argument);
    CHECK_THROWS_AS(a + Matrix(3, 2), std::invalid_argument);
}

TEST_CASE("frobenius norm does not overflow on large entries") {
    const Matrix big{{1e200, 1e200}, {1e200, 1e200}};
    CHECK(frobenius_norm(big) == doctest::Approx(2e200));
    const Matrix tiny{{1e-200, 1e-200}};
    CHECK(frobenius_norm(tiny) == doctest::Approx(std::sqrt(2.0) * 1e-200));
}

TEST_CASE("sym_eig reproduces the matrix, is orthonormal and matches the determinant") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Matrix g = gaussian(5, 5, seed);
        const Matrix a = g + transpose(g);
        const SymEigDecomp e = sym_eig(a);
        for (std::size_t i = 1; i < e.eigenvalues.size(); ++i) CHECK(e.eigenvalues[i - 1] >= e.eigenvalues[i]);
        const Matrix& q = e.eigenvectors;
        CHECK(oracle::max_abs_diff(oracle::matmul(oracle::transpose(q), q), Matrix::identity(5)) < 1e-12);
        const Matrix recon = oracle::matmul(oracle::matmul(q, Matrix::diag(e.eigenvalues)), oracle::transpose(q));
        CHECK(oracle::max_abs_diff(recon, a) < 1e-11);
        double prod = 1.0;
        for (double l : e.eigenvalues) prod *= l;
        CHECK(prod == doctest::Approx(oracle::determinant(a)).epsilon(1e-10));
    }
}

TEST_CASE("thin_svd factors and singular values match the bisection oracle") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const std::size_t m = 3 + seed % 5;
        const std::size_t n = m + seed % 4;
        const Matrix a = gaussian(m, n, seed);
        const ThinSvd s = thin_svd(a);
        const std::vector<double> ref = oracle::singular_values(a);
        REQUIRE(s.s.size() == m);
        for (std::size_t i = 0; i < m; ++i) CHECK(s.s[i] == doctest::Approx(ref[i]).epsilon(1e-10));
        const Matrix recon = oracle::matmul(oracle::matmul(s.u, Matrix::diag(s.s)), s.vt);
        CHECK(oracle::max_abs_diff(recon, a) < 1e-12);
        CHECK(oracle::max_abs_diff(oracle::matmul(oracle::transpose(s.u), s.u), Matrix::identity(m)) < 1e-12);
        CHECK(oracle::max_abs_diff(oracle::matmul(s.vt, oracle::transpose(s.vt)), Matrix::identity(m)) < 1e-12);

        const std::vector<double> sv = singular_values(a);
        const std::vector<double> svt = singular_values(transpose(a));
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(sv[i] == doctest::Approx(ref[i]).epsilon(1e-9));
            CHECK(svt[i] == doctest::Approx(ref[i]).epsilon(1e-9));
        }
        CHECK(schatten1_norm(a) == doctest::Approx(oracle::schatten1(a)).epsilon(1e-10));
    }
    CHECK_THROWS_AS(thin_svd(Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("schatten-1 of a diagonal matrix is the absolute diagonal sum") {
    const Matrix d = Matrix::diag({3.0, -2.0, 0.5});
    CHECK(schatten1_norm(d) == doctest::Approx(5.5));
    CHECK(oracle::schatten1(d) == doctest::Approx(5.5));
}

TEST_CASE("with_singular_values produces the requested spectrum") {
    const std::vector<double> s{4.0, 2.0, 1.0, 0.25};
    const Matrix a = with_singular_values(9, s, 11);
    CHECK(a.rows() == 4);
    CHECK(a.cols() == 9);
    const std::vector<double> got = oracle::singular_values(a);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(got[i] == doctest::Approx(s[i]).epsilon(1e-10));
    CHECK_THROWS_AS(with_singular_values(2, s, 1), std::invalid_argument);
}

TEST_CASE("gaussian sampling is deterministic per seed") {
    CHECK(gaussian(4, 5, 9) == gaussian(4, 5, 9));
    CHECK_FALSE(gaussian(4, 5, 9) == gaussian(4, 5, 10));
    const Matrix g = gaussian(200, 200, 1, 3.0);
    double sum = 0.0, sq = 0.0;
    for (double v : g.data()) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(g.size());
    CHECK(std::fabs(sum / n) < 0.05);
    CHECK(sq / n == doctest::Approx(9.0).epsilon(0.03));
}

TEST_CASE("sample_stiefel has orthonormal rows") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Matrix w = sample_stiefel(6, 10, seed);
        CHECK(oracle::max_abs_diff(oracle::matmul(w, oracle::transpose(w)), Matrix::identity(6)) < 1e-13);
    }
    const Matrix q = random_orthogonal(7, 3);
    CHECK(oracle::max_abs_diff(oracle::matmul(oracle::transpose(q), q), Matrix::identity(7)) < 1e-13);
    CHECK_THROWS_AS(sample_stiefel(5, 4, 1), std::invalid_argument);
}

TEST_CASE("make_spd has the requested spectrum and spd_inverse inverts it") {
    for (double kappa : {1.0, 10.0, 1e4}) {
        const Matrix h = make_spd(8, kappa, 5);
        CHECK(h == transpose(h));
        const std::vector<double> s = oracle::singular_values(h);
        CHECK(s.front() == doctest::Approx(kappa).epsilon(1e-9));
        CHECK(s.back() == doctest::Approx(1.0).epsilon(1e-9));
        const Matrix hi = spd_inverse(h);
        CHECK(oracle::max_abs_diff(oracle::matmul(h, hi), Matrix::identity(8)) < 1e-9);
    }
    CHECK_THROWS_AS(make_spd(4, 0.5, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_spd(1, 2.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(spd_inverse(Matrix{{1, 0}, {0, -1}}), std::invalid_argument);
}

TEST_CASE("apply_wide transposes tall inputs") {
    const Matrix tall = gaussian(5, 2, 4);
    const Matrix out = apply_wide(tall, [](const Matrix& a) {
        CHECK(a.rows() <= a.cols());
        return a * 2.0;
    });
    CHECK(out == tall * 2.0);
}
