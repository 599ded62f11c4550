#include "swan/theory.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "swan/gradient_ops.hpp"
#include "swan/optimizers.hpp"

namespace swan {

namespace {

double excess(const QuadraticProblem& p, const Matrix& w) {
    const double e = p.loss_minus_opt(w);
    if (!(e > 0.0)) throw std::domain_error("theory: w coincides with W* (zero excess loss)");
    return e;
}

}  // namespace

double predict_whitened_contraction(const QuadraticProblem& p, const Matrix& w) {
    const double q = 2.0 * excess(p, w);
    const double s = schatten1_norm(p.grad(w));
    return 1.0 - s * s / (q * p.hessian_info().trace);
}

double measured_contraction(const QuadraticProblem& p, const Matrix& w, const Matrix& w_next) {
    return p.loss_minus_opt(w_next) / excess(p, w);
}

ContractionReport whitened_contraction_report(const QuadraticProblem& p, const Matrix& w,
                                              const std::string& context) {
    ContractionReport r;
    r.context = context;
    r.predicted_factor = predict_whitened_contraction(p, w);
    const Matrix next = whitened_optimal_update(w, p.grad(w), p.hessian_info().trace).w;
    r.measured_factor = measured_contraction(p, w, next);
    r.abs_error = std::fabs(r.predicted_factor - r.measured_factor);
    return r;
}

double predict_gd_bound(double kappa) {
    if (!(kappa >= 1.0)) throw std::invalid_argument("predict_gd_bound: kappa must be >= 1");
    if (std::isinf(kappa)) return 1.0;
    return 1.0 - 2.0 / (kappa + 1.0);
}

double preconditioned_condition_number(const QuadraticProblem& p, const Matrix& w0) {
    const Matrix g = matmul(p.h(), w0);
    const std::size_t m = g.rows();
    const std::size_t n = g.cols();
    // d_i^{1/2} for column-major index i = j·m + r.
    std::vector<double> sqrt_d(m * n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t r = 0; r < m; ++r) {
            const double a = std::fabs(g(r, j));
            if (a == 0.0) {
                throw std::domain_error("predict_adam_bound: zero entry in |H w0| at (" +
                                        std::to_string(r) + ", " + std::to_string(j) + ")");
            }
            sqrt_d[j * m + r] = 1.0 / std::sqrt(a);
        }
    }
    // D^{1/2} (I ⊗ H) D^{1/2} is symmetric and similar to D (I ⊗ H).
    Matrix s(m * n, m * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < m; ++c)
                s(j * m + r, j * m + c) = sqrt_d[j * m + r] * p.h()(r, c) * sqrt_d[j * m + c];
    const auto ev = sym_eig(s).eigenvalues;
    return ev.front() / ev.back();
}

double predict_adam_bound(const QuadraticProblem& p, const Matrix& w0) {
    return predict_gd_bound(preconditioned_condition_number(p, w0));
}

Matrix adversarial_gd_init(const QuadraticProblem& p) {
    const SymEigDecomp e = sym_eig(p.h());
    const std::size_t m = p.m();
    Matrix w(m, p.n());
    const double s = 1.0 / std::sqrt(2.0);
    for (std::size_t r = 0; r < m; ++r) {
        const double v = s * (e.eigenvectors(r, 0) + e.eigenvectors(r, m - 1));
        for (std::size_t j = 0; j < p.n(); ++j) w(r, j) = v;
    }
    return w + p.w_star();
}

ContractionReport gd_contraction_report(const QuadraticProblem& p, const Matrix& w0) {
    const HessianInfo& hi = p.hessian_info();
    ContractionReport r;
    r.predicted_factor = predict_gd_bound(hi.lambda_max / hi.lambda_min);
    const Matrix next = w0 - p.grad(w0) * (2.0 / (hi.lambda_max + hi.lambda_min));
    r.measured_factor = measured_contraction(p, w0, next);
    r.abs_error = std::fabs(r.predicted_factor - r.measured_factor);
    r.context = "gd_optimal";
    return r;
}

double robustness_q(const QuadraticProblem& p, const Matrix& w) {
    const Matrix d = w - p.w_star();
    if (d.rows() != d.cols()) throw std::invalid_argument("robustness_q: needs a square W, got " + d.shape_str());
    const double q = 2.0 * excess(p, w);
    const double t = trace(matmul(p.h(), d));
    return t * t / (q * p.hessian_info().trace);
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tol, int max_iter) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol; ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? c : d;
}

BlockwiseComparison compare_blockwise(const std::vector<Matrix>& h_blocks, const Matrix& w0) {
    if (h_blocks.empty()) throw std::invalid_argument("compare_blockwise: no blocks");
    std::size_t rows = 0;
    for (const auto& h : h_blocks) rows += h.rows();
    if (rows != w0.rows()) {
        throw std::invalid_argument("compare_blockwise: block heights sum to " + std::to_string(rows) +
                                    " but W has " + std::to_string(w0.rows()) + " rows");
    }

    std::vector<QuadraticProblem> probs;
    std::vector<Matrix> ws;
    std::size_t r0 = 0;
    for (const auto& h : h_blocks) {
        Matrix wl(h.rows(), w0.cols());
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < w0.cols(); ++j) wl(i, j) = w0(r0 + i, j);
        r0 += h.rows();
        probs.push_back(QuadraticProblem::homogeneous(h, w0.cols()));
        ws.push_back(std::move(wl));
    }

    BlockwiseComparison out;
    out.global_eta = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < probs.size(); ++l) {
        const double eta_l = schatten1_norm(probs[l].grad(ws[l])) / probs[l].hessian_info().trace;
        out.global_eta = std::min(out.global_eta, eta_l);
    }

    OptimizerConfig adam;
    adam.kind = OptimizerKind::adam;
    adam.adam_beta1 = 0.0;
    adam.adam_beta2 = 1.0;
    for (std::size_t l = 0; l < probs.size(); ++l) {
        const QuadraticProblem& p = probs[l];
        const Matrix& w = ws[l];
        const Matrix g = p.grad(w);
        BlockReport br;
        br.block = l;
        const Matrix delta = apply_wide(g, exact_polar);
        br.whitened_factor = measured_contraction(p, w, w - delta * out.global_eta);

        auto adam_ratio = [&](double eta) {
            OptimizerConfig c = adam;
            c.learning_rate = eta;
            const AdamResult res = adam_step(w, g, init_state(c, w.rows(), w.cols()), c);
            return measured_contraction(p, w, res.w);
        };
        double hi = max_abs(w) + 1e-12;
        while (adam_ratio(2.0 * hi) < adam_ratio(hi)) hi *= 2.0;
        br.adam_eta = golden_section_minimize(adam_ratio, 0.0, 2.0 * hi, 1e-6);
        br.adam_factor = adam_ratio(br.adam_eta);
        out.blocks.push_back(br);
    }
    return out;
}

}  // namespace swan
