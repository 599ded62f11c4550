#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "swan/matrix.hpp"
#include "swan/problems.hpp"

namespace swan {

struct ContractionReport {
    double predicted_factor = 0.0;
    double measured_factor = 0.0;
    double abs_error = 0.0;
    std::string context;
};

// 1 − ||Hw||_1² / (Tr(wᵀHw)·Tr H), in coordinates shifted by W*.
double predict_whitened_contraction(const QuadraticProblem& p, const Matrix& w);
// (loss(w_next) − L*) / (loss(w) − L*).
double measured_contraction(const QuadraticProblem& p, const Matrix& w, const Matrix& w_next);
ContractionReport whitened_contraction_report(const QuadraticProblem& p, const Matrix& w,
                                              const std::string& context = "");

double predict_gd_bound(double kappa);
// Condition number of diag(|vec(Hw0)|⁻¹)·(I ⊗ H), column-major vec.
double preconditioned_condition_number(const QuadraticProblem& p, const Matrix& w0);
double predict_adam_bound(const QuadraticProblem& p, const Matrix& w0);

// Equal-energy mix of the extreme eigenvectors of H, replicated over n columns.
Matrix adversarial_gd_init(const QuadraticProblem& p);
ContractionReport gd_contraction_report(const QuadraticProblem& p, const Matrix& w0);

// Tr[HW]² / (Tr(WᵀHW)·Tr H), square W, shifted by W*.
double robustness_q(const QuadraticProblem& p, const Matrix& w);

// H = diag(H_1, …, H_L); W is split into row blocks W_l of height m_l.
struct BlockReport {
    std::size_t block = 0;
    double whitened_factor = 0.0;
    double adam_factor = 0.0;
    double adam_eta = 0.0;
};
struct BlockwiseComparison {
    double global_eta = 0.0;
    std::vector<BlockReport> blocks;
};
BlockwiseComparison compare_blockwise(const std::vector<Matrix>& h_blocks, const Matrix& w0);

// Minimizes f on [lo, hi] by golden-section search until the bracket is
// narrower than tol.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol, int max_iter = 200);

}  // namespace swan
