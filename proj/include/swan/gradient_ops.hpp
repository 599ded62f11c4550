#pragma once

#include "swan/matrix.hpp"

namespace swan {

struct GradNormConfig {
    bool subtract_mean = true;
    double epsilon = 1e-8;
};

enum class WhiteningMode { newton_schulz, exact_eig };

// sequential: Y is updated first and Z uses the new Y.
// coupled: both updates share T = 3I - ZY from the previous iterate, which
// with beta = 0.5 is the classical Newton-Schulz pair.
enum class NsOrder { sequential, coupled };

struct WhiteningConfig {
    int iterations = 10;
    double beta = 0.8;
    WhiteningMode mode = WhiteningMode::newton_schulz;
    NsOrder order = NsOrder::sequential;
    bool pre_normalize = true;

    void validate() const;
};

// Row-wise standardization over columns. Population std; epsilon is added to
// the std, not inside the square root.
Matrix grad_norm(const Matrix& g, const GradNormConfig& cfg = {});

// Approximates (g gᵀ)^{-1/2} g. Requires rows <= cols; see apply_wide.
Matrix grad_whitening(const Matrix& g, const WhiteningConfig& cfg = {});

// Newton-Schulz estimate of (y0)^{-1/2} for symmetric y0.
Matrix newton_schulz_inv_sqrt(const Matrix& y0, int iterations, double beta, NsOrder order);

// Exact polar factor U Vᵀ; throws RankDeficientError when the smallest
// singular value is <= 1e-12 times the largest.
Matrix exact_polar(const Matrix& g);

Matrix rescale_update(const Matrix& delta, const Matrix& reference);

}  // namespace swan
