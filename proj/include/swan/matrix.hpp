#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace swan {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Validates that every entry is finite.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diag(const std::vector<double>& d);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);

    bool operator==(const Matrix& o) const = default;

    std::string shape_str() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// Thrown when an operation would produce or consumes non-finite values.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Thrown by exact orthogonalization when the input lacks full row rank.
class RankDeficientError : public std::runtime_error {
public:
    RankDeficientError(double smallest, double largest);
    double smallest_singular_value;
    double largest_singular_value;
};

bool all_finite(const Matrix& a);
void require_finite(const Matrix& a, const char* what);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);
// a * bᵀ and aᵀ * b without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);

double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
// Sum of elementwise products, i.e. Tr(aᵀb).
double inner(const Matrix& a, const Matrix& b);

struct SymEigDecomp {
    std::vector<double> eigenvalues;  // descending
    Matrix eigenvectors;              // columns
};

// Cyclic Jacobi on (a + aᵀ)/2.
SymEigDecomp sym_eig(const Matrix& a);

// Thin SVD of an m×n matrix with m ≤ n: a = U diag(s) Vt, U m×m, Vt m×n.
struct ThinSvd {
    Matrix u;
    std::vector<double> s;  // descending, ≥ 0
    Matrix vt;
};

// One-sided Jacobi on the rows of a. Requires rows ≤ cols.
ThinSvd thin_svd(const Matrix& a);

std::vector<double> singular_values(const Matrix& a);
double schatten1_norm(const Matrix& a);

// Applies f to a when rows ≤ cols, otherwise to aᵀ and transposes the result.
Matrix apply_wide(const Matrix& a, const std::function<Matrix(const Matrix&)>& f);

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed, double stddev = 1.0);
Matrix sample_stiefel(std::size_t m, std::size_t n, std::uint64_t seed);
Matrix random_orthogonal(std::size_t m, std::uint64_t seed);
// U diag(s) V with random orthogonal U (m×m) and Stiefel V (m×n), m = len(s).
Matrix with_singular_values(std::size_t n, const std::vector<double>& s, std::uint64_t seed);
Matrix make_spd(std::size_t m, double condition_number, std::uint64_t seed);

// Inverse of a symmetric positive definite matrix via sym_eig; rejects
// matrices with a non-positive eigenvalue.
Matrix spd_inverse(const Matrix& h);

}  // namespace swan
