#include "swan/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "swan/rng.hpp"

namespace swan {

namespace {

void require_finite_value(double v) {
    if (!std::isfinite(v)) throw NonFiniteError("matrix: non-finite fill value");
}

std::string rank_message(double smallest, double largest) {
    std::ostringstream os;
    os << "rank-deficient input: smallest singular value " << smallest << " (largest " << largest
       << ")";
    return os.str();
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require_finite_value(fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("matrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + shape_str());
    }
    require_finite(*this, "matrix construction");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw std::invalid_argument("matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(*this, "matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    require_finite(m, "diag");
    return m;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    require_same_shape(*this, o, "operator+");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    require_same_shape(*this, o, "operator-");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

RankDeficientError::RankDeficientError(double smallest, double largest)
    : std::runtime_error(rank_message(smallest, largest)),
      smallest_singular_value(smallest),
      largest_singular_value(largest) {}

bool all_finite(const Matrix& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& a, const char* what) {
    if (!all_finite(a)) throw NonFiniteError(std::string(what) + ": non-finite entry");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + a.shape_str() + " * " +
                                    b.shape_str() + ")");
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    require_finite(c, "matmul");
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimensions differ (" + a.shape_str() +
                                    " * " + b.shape_str() + "^T)");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    require_finite(c, "matmul_nt");
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: inner dimensions differ (" + a.shape_str() +
                                    "^T * " + b.shape_str() + ")");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            double* ci = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aki * bk[j];
        }
    }
    require_finite(c, "matmul_tn");
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= b.data()[i];
    return c;
}

double trace(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("trace: non-square " + a.shape_str());
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

double frobenius_norm(const Matrix& a) {
    // dnrm2-style scaled sum of squares.
    double scale = 0.0;
    double ssq = 1.0;
    for (double v : a.data()) {
        if (v == 0.0) continue;
        const double av = std::fabs(v);
        if (scale < av) {
            ssq = 1.0 + ssq * (scale / av) * (scale / av);
            scale = av;
        } else {
            ssq += (av / scale) * (av / scale);
        }
    }
    return scale * std::sqrt(ssq);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

double inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "inner");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

SymEigDecomp sym_eig(const Matrix& input) {
    if (input.rows() != input.cols()) {
        throw std::invalid_argument("sym_eig: non-square input " + input.shape_str());
    }
    const std::size_t n = input.rows();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
    Matrix v = Matrix::identity(n);

    const double norm = frobenius_norm(a);
    const double tol = 1e-12 * norm;
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 100 && norm > 0.0 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t =
                    std::fabs(theta) > 1e150
                        ? 0.5 / theta
                        : (theta >= 0 ? 1.0 : -1.0) /
                              (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymEigDecomp out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        out.eigenvalues[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.eigenvectors(r, c) = v(r, order[c]);
    }
    return out;
}

ThinSvd thin_svd(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m > n) throw std::invalid_argument("thin_svd: expects rows <= cols, got " + a.shape_str());
    require_finite(a, "thin_svd");

    Matrix b = a;
    Matrix qt = Matrix::identity(m);
    auto dot = [](const double* x, const double* y, std::size_t len) {
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t k = 0;
        for (; k + 4 <= len; k += 4) {
            s0 += x[k] * y[k];
            s1 += x[k + 1] * y[k + 1];
            s2 += x[k + 2] * y[k + 2];
            s3 += x[k + 3] * y[k + 3];
        }
        for (; k < len; ++k) s0 += x[k] * y[k];
        return (s0 + s1) + (s2 + s3);
    };
    auto rotate = [](double* x, double* y, std::size_t len, double c, double s) {
        for (std::size_t k = 0; k < len; ++k) {
            const double xk = x[k];
            const double yk = y[k];
            x[k] = c * xk - s * yk;
            y[k] = s * xk + c * yk;
        }
    };

    constexpr double kTol = 1e-15;
    std::vector<double> sq(m);
    for (std::size_t i = 0; i < m; ++i) sq[i] = dot(b.row(i), b.row(i), n);
    for (int sweep = 0; sweep < 80; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                double* bp = b.row(p);
                double* bq = b.row(q);
                const double alpha = sq[p];
                const double beta = sq[q];
                if (alpha == 0.0 || beta == 0.0) continue;
                const double gamma = dot(bp, bq, n);
                if (std::fabs(gamma) <= kTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    std::fabs(zeta) > 1e150
                        ? 0.5 / zeta
                        : (zeta >= 0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(bp, bq, n, c, s);
                rotate(qt.row(p), qt.row(q), m, c, s);
                sq[p] = alpha - t * gamma;
                sq[q] = beta + t * gamma;
            }
        }
        if (!rotated) break;
        // Recompute cached norms.
        for (std::size_t i = 0; i < m; ++i) sq[i] = dot(b.row(i), b.row(i), n);
    }

    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) norms[i] = std::sqrt(dot(b.row(i), b.row(i), n));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

    ThinSvd out;
    out.s.resize(m);
    out.u = Matrix(m, m);
    out.vt = Matrix(m, n);
    for (std::size_t c = 0; c < m; ++c) {
        const std::size_t src = order[c];
        out.s[c] = norms[src];
        for (std::size_t r = 0; r < m; ++r) out.u(r, c) = qt(src, r);
        if (norms[src] > 0.0) {
            const double inv = 1.0 / norms[src];
            for (std::size_t k = 0; k < n; ++k) out.vt(c, k) = b(src, k) * inv;
        }
    }
    return out;
}

std::vector<double> singular_values(const Matrix& a) {
    // Eigenvalues of the smaller Gram matrix; round-off negatives clamp to 0.
    const Matrix gram = a.rows() <= a.cols() ? matmul_nt(a, a) : matmul_tn(a, a);
    std::vector<double> s = sym_eig(gram).eigenvalues;
    for (double& v : s) v = std::sqrt(std::max(v, 0.0));
    return s;
}

double schatten1_norm(const Matrix& a) {
    const auto s = singular_values(a);
    return std::accumulate(s.begin(), s.end(), 0.0);
}

Matrix apply_wide(const Matrix& a, const std::function<Matrix(const Matrix&)>& f) {
    if (a.rows() <= a.cols()) return f(a);
    return transpose(f(transpose(a)));
}

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    Matrix g(rows, cols);
    for (double& v : g.data()) v = stddev * rng.normal();
    return g;
}

Matrix sample_stiefel(std::size_t m, std::size_t n, std::uint64_t seed) {
    if (m > n) {
        throw std::invalid_argument("sample_stiefel: need m <= n, got " + std::to_string(m) + "x" +
                                    std::to_string(n));
    }
    Matrix w = gaussian(m, n, seed);
    // Modified Gram-Schmidt, two passes.
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < m; ++i) {
            double* wi = w.row(i);
            for (std::size_t j = 0; j < i; ++j) {
                const double* wj = w.row(j);
                double d = 0.0;
                for (std::size_t k = 0; k < n; ++k) d += wi[k] * wj[k];
                for (std::size_t k = 0; k < n; ++k) wi[k] -= d * wj[k];
            }
            double nrm = 0.0;
            for (std::size_t k = 0; k < n; ++k) nrm += wi[k] * wi[k];
            nrm = std::sqrt(nrm);
            if (nrm == 0.0) throw std::runtime_error("sample_stiefel: degenerate Gaussian draw");
            for (std::size_t k = 0; k < n; ++k) wi[k] /= nrm;
        }
    }
    return w;
}

Matrix random_orthogonal(std::size_t m, std::uint64_t seed) { return sample_stiefel(m, m, seed); }

Matrix with_singular_values(std::size_t n, const std::vector<double>& s, std::uint64_t seed) {
    const std::size_t m = s.size();
    if (m == 0 || m > n) throw std::invalid_argument("with_singular_values: need 1 <= len(s) <= n");
    Matrix u = random_orthogonal(m, derive_seed(seed, 1));
    const Matrix v = sample_stiefel(m, n, derive_seed(seed, 2));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) u(i, j) *= s[j];
    return matmul(u, v);
}

Matrix make_spd(std::size_t m, double condition_number, std::uint64_t seed) {
    if (!(condition_number >= 1.0) || !std::isfinite(condition_number)) {
        throw std::invalid_argument("make_spd: condition number must be >= 1");
    }
    if (m == 0) throw std::invalid_argument("make_spd: empty dimension");
    if (m == 1 && condition_number != 1.0) {
        throw std::invalid_argument("make_spd: a 1x1 matrix has condition number 1");
    }
    std::vector<double> lambda(m, 1.0);
    for (std::size_t i = 0; i < m && m > 1; ++i) {
        lambda[i] = std::pow(condition_number, static_cast<double>(i) / static_cast<double>(m - 1));
    }
    lambda[m - 1] = condition_number;
    const Matrix q = random_orthogonal(m, seed);
    Matrix ql = q;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) ql(i, j) *= lambda[j];
    Matrix h = matmul_nt(ql, q);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double s = 0.5 * (h(i, j) + h(j, i));
            h(i, j) = s;
            h(j, i) = s;
        }
    }
    return h;
}

Matrix spd_inverse(const Matrix& h) {
    const SymEigDecomp e = sym_eig(h);
    if (e.eigenvalues.empty() || e.eigenvalues.back() <= 0.0) {
        throw std::invalid_argument("spd_inverse: matrix is not positive definite");
    }
    Matrix qi = e.eigenvectors;
    const std::size_t m = h.rows();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) qi(i, j) /= e.eigenvalues[j];
    return matmul_nt(qi, e.eigenvectors);
}

}  // namespace swan
