#include "swan/gradient_ops.hpp"

#include <cmath>
#include <string>

namespace swan {

void WhiteningConfig::validate() const {
    if (iterations < 1) throw std::invalid_argument("whitening: iterations must be >= 1");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("whitening: beta must lie in (0, 1]");
}

Matrix grad_norm(const Matrix& g, const GradNormConfig& cfg) {
    if (!(cfg.epsilon >= 0.0)) throw std::invalid_argument("grad_norm: epsilon must be >= 0");
    const std::size_t n = g.cols();
    if (n < (cfg.subtract_mean ? 2u : 1u)) {
        throw std::invalid_argument("grad_norm: too few columns in " + g.shape_str());
    }
    Matrix out(g.rows(), n);
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const double* gi = g.row(i);
        double mean = 0.0;
        if (cfg.subtract_mean) {
            for (std::size_t j = 0; j < n; ++j) mean += gi[j];
            mean /= static_cast<double>(n);
        }
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += (gi[j] - mean) * (gi[j] - mean);
        const double denom = std::sqrt(ss / static_cast<double>(n)) + cfg.epsilon;
        if (denom == 0.0) {
            throw std::domain_error("grad_norm: row " + std::to_string(i) +
                                    " has zero variance and epsilon is 0");
        }
        double* oi = out.row(i);
        for (std::size_t j = 0; j < n; ++j) oi[j] = (gi[j] - mean) / denom;
    }
    require_finite(out, "grad_norm");
    return out;
}

Matrix newton_schulz_inv_sqrt(const Matrix& y0, int iterations, double beta, NsOrder order) {
    const std::size_t m = y0.rows();
    Matrix y = y0;
    Matrix z = Matrix::identity(m);
    auto three_minus = [m](Matrix t) {
        t *= -1.0;
        for (std::size_t i = 0; i < m; ++i) t(i, i) += 3.0;
        return t;
    };
    for (int it = 0; it < iterations; ++it) {
        const Matrix t = three_minus(matmul(z, y));
        y = matmul(y, t) * beta;
        if (order == NsOrder::sequential) {
            z = matmul(three_minus(matmul(z, y)), z) * beta;
        } else {
            z = matmul(t, z) * beta;
        }
    }
    return z;
}

Matrix exact_polar(const Matrix& g) {
    const ThinSvd svd = thin_svd(g);
    const double largest = svd.s.empty() ? 0.0 : svd.s.front();
    const double smallest = svd.s.empty() ? 0.0 : svd.s.back();
    if (!(smallest > 1e-12 * largest)) throw RankDeficientError(smallest, largest);
    return matmul(svd.u, svd.vt);
}

Matrix grad_whitening(const Matrix& g, const WhiteningConfig& cfg) {
    cfg.validate();
    if (g.rows() > g.cols()) {
        throw std::invalid_argument("grad_whitening: expects rows <= cols, got " + g.shape_str());
    }
    require_finite(g, "grad_whitening");
    if (cfg.mode == WhiteningMode::exact_eig) return exact_polar(g);

    Matrix gn = g;
    if (cfg.pre_normalize) {
        const double f = frobenius_norm(g);
        if (f == 0.0) return gn;
        gn *= 1.0 / f;
    }
    const Matrix z = newton_schulz_inv_sqrt(matmul_nt(gn, gn), cfg.iterations, cfg.beta, cfg.order);
    return matmul(z, gn);
}

Matrix rescale_update(const Matrix& delta, const Matrix& reference) {
    const double d = frobenius_norm(delta);
    if (d == 0.0) throw std::domain_error("rescale_update: delta has zero norm");
    return delta * (frobenius_norm(reference) / d);
}

}  // namespace swan
