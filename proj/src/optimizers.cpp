#include "swan/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace swan {

namespace {

const HessianInfo& require_hessian(const HessianInfo* h, OptimizerKind kind) {
    if (!h) throw std::invalid_argument(to_string(kind) + ": requires a Hessian");
    return *h;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double Schedule::multiplier(long t, long total) const {
    if (kind == ScheduleKind::constant || total <= 0) return 1.0;
    const double warm = std::max(1.0, warmup_fraction * static_cast<double>(total));
    const double tt = static_cast<double>(t);
    if (tt < warm) return (tt + 1.0) / warm;
    const double span = std::max(1.0, static_cast<double>(total) - warm);
    const double frac = std::min(1.0, (tt - warm) / span);
    return 1.0 - (1.0 - final_fraction) * frac;
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) {
        throw std::invalid_argument("optimizer: adam_beta1 must lie in [0, 1)");
    }
    if (!(adam_beta2 >= 0.0 && adam_beta2 <= 1.0)) {
        throw std::invalid_argument("optimizer: adam_beta2 must lie in [0, 1]");
    }
    if (!(adam_epsilon > 0.0)) throw std::invalid_argument("optimizer: adam_epsilon must be > 0");
    if (!(grad_norm_cfg.epsilon >= 0.0)) {
        throw std::invalid_argument("optimizer: grad_norm epsilon must be >= 0");
    }
    whitening_cfg.validate();
}

bool is_stateless(OptimizerKind kind) { return kind != OptimizerKind::adam; }

OptimizerState init_state(const OptimizerConfig& cfg, std::size_t rows, std::size_t cols) {
    OptimizerState s;
    if (!is_stateless(cfg.kind)) {
        s.first_moment = Matrix(rows, cols);
        s.second_moment = Matrix(rows, cols);
    }
    return s;
}

Matrix swan_direction(const Matrix& g, const OptimizerConfig& cfg) {
    return apply_wide(g, [&](const Matrix& gw) {
        const Matrix gt = cfg.ablation == Ablation::whiten_only ? gw : grad_norm(gw, cfg.grad_norm_cfg);
        if (cfg.ablation == Ablation::norm_only) return gt;
        Matrix delta = grad_whitening(gt, cfg.whitening_cfg);
        if (cfg.swan_rescale && frobenius_norm(delta) > 0.0) delta = rescale_update(delta, gt);
        return delta;
    });
}

Matrix swan_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg) {
    require_same_shape(w, g, "swan_step");
    return w - swan_direction(g, cfg) * cfg.learning_rate;
}

Matrix sgd_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg) {
    require_same_shape(w, g, "sgd_step");
    return w - g * cfg.learning_rate;
}

Matrix signed_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg) {
    require_same_shape(w, g, "signed_step");
    Matrix out = w;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= cfg.learning_rate * sign(g.data()[i]);
    return out;
}

AdamResult adam_step(const Matrix& w, const Matrix& g, OptimizerState state, const OptimizerConfig& cfg) {
    require_same_shape(w, g, "adam_step");
    if (!state.first_moment || !state.second_moment) {
        if (state.t > 0) throw std::invalid_argument("adam_step: uninitialized state at t > 0");
        state.first_moment = Matrix(w.rows(), w.cols());
        state.second_moment = Matrix(w.rows(), w.cols());
    }
    Matrix& m = *state.first_moment;
    Matrix& v = *state.second_moment;
    require_same_shape(w, m, "adam_step state");
    require_same_shape(w, v, "adam_step state");

    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const long t = state.t + 1;
    const bool frozen = b2 == 1.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * gi;
        if (frozen) {
            if (t == 1) v.data()[i] = gi * gi;
        } else {
            v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
        }
    }
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = frozen ? 1.0 : 1.0 - std::pow(b2, static_cast<double>(t));
    Matrix out = w;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double mh = m.data()[i] / c1;
        const double vh = v.data()[i] / c2;
        out.data()[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_epsilon);
    }
    require_finite(out, "adam_step");
    state.t = t;
    return {std::move(out), std::move(state)};
}

HessianInfo make_hessian_info(const Matrix& h) {
    const SymEigDecomp e = sym_eig(h);
    HessianInfo info;
    info.lambda_max = e.eigenvalues.front();
    info.lambda_min = e.eigenvalues.back();
    if (!(info.lambda_min > 0.0)) {
        throw std::invalid_argument("hessian: not positive definite (smallest eigenvalue " +
                                    std::to_string(info.lambda_min) + ")");
    }
    info.h = h;
    info.trace = trace(h);
    Matrix qi = e.eigenvectors;
    for (std::size_t i = 0; i < qi.rows(); ++i)
        for (std::size_t j = 0; j < qi.cols(); ++j) qi(i, j) /= e.eigenvalues[j];
    info.inverse = matmul_nt(qi, e.eigenvectors);
    return info;
}

double gd_optimal_rate(const Matrix& h) {
    const HessianInfo info = make_hessian_info(h);
    return 2.0 / (info.lambda_max + info.lambda_min);
}

Matrix gd_optimal_step(const Matrix& w, const Matrix& h) {
    return w - matmul(h, w) * gd_optimal_rate(h);
}

Matrix newton_step(const Matrix& w, const Matrix& h, double eta) {
    const HessianInfo info = make_hessian_info(h);
    return w - matmul(info.inverse, matmul(h, w)) * eta;
}

StepOutput whitened_optimal_update(const Matrix& w, const Matrix& g, double trace_h) {
    require_same_shape(w, g, "whitened_gd_optimal");
    const bool wide = g.rows() <= g.cols();
    const ThinSvd svd = thin_svd(wide ? g : transpose(g));
    const double largest = svd.s.front();
    const double smallest = svd.s.back();
    if (!(smallest > 1e-12 * largest)) throw RankDeficientError(smallest, largest);
    const double eta = std::accumulate(svd.s.begin(), svd.s.end(), 0.0) / trace_h;
    Matrix delta = matmul(svd.u, svd.vt);
    if (!wide) delta = transpose(delta);
    return {w - delta * eta, eta};
}

Matrix whitened_gd_optimal_step(const Matrix& w, const Matrix& h) {
    const HessianInfo info = make_hessian_info(h);
    return whitened_optimal_update(w, matmul(h, w), info.trace).w;
}

StepOutput optimizer_step(const Matrix& w, const Matrix& g, OptimizerState& state,
                          const OptimizerConfig& cfg, const HessianInfo* h, double lr_scale) {
    const double eta = cfg.learning_rate * lr_scale;
    OptimizerConfig scaled = cfg;
    scaled.learning_rate = eta;
    switch (cfg.kind) {
        case OptimizerKind::swan:
            state.t += 1;
            return {swan_step(w, g, scaled), eta};
        case OptimizerKind::sgd:
            state.t += 1;
            return {sgd_step(w, g, scaled), eta};
        case OptimizerKind::signed_sgd:
            state.t += 1;
            return {signed_step(w, g, scaled), eta};
        case OptimizerKind::adam: {
            AdamResult r = adam_step(w, g, std::move(state), scaled);
            state = std::move(r.state);
            return {std::move(r.w), eta};
        }
        case OptimizerKind::gd_optimal: {
            const HessianInfo& hi = require_hessian(h, cfg.kind);
            const double opt = 2.0 / (hi.lambda_max + hi.lambda_min);
            state.t += 1;
            return {w - g * opt, opt};
        }
        case OptimizerKind::newton: {
            const HessianInfo& hi = require_hessian(h, cfg.kind);
            state.t += 1;
            return {w - matmul(hi.inverse, g) * eta, eta};
        }
        case OptimizerKind::whitened_gd_optimal: {
            const HessianInfo& hi = require_hessian(h, cfg.kind);
            state.t += 1;
            return whitened_optimal_update(w, g, hi.trace);
        }
    }
    throw std::logic_error("optimizer_step: unknown kind");
}

std::string to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::swan: return "swan";
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::signed_sgd: return "signed_sgd";
        case OptimizerKind::gd_optimal: return "gd_optimal";
        case OptimizerKind::newton: return "newton";
        case OptimizerKind::whitened_gd_optimal: return "whitened_gd_optimal";
    }
    return "unknown";
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
    for (auto k : {OptimizerKind::swan, OptimizerKind::sgd, OptimizerKind::adam,
                   OptimizerKind::signed_sgd, OptimizerKind::gd_optimal, OptimizerKind::newton,
                   OptimizerKind::whitened_gd_optimal}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument("unknown optimizer kind '" + s + "'");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::norm_only: return "norm_only";
        case Ablation::whiten_only: return "whiten_only";
    }
    return "unknown";
}

Ablation parse_ablation(const std::string& s) {
    for (auto a : {Ablation::full, Ablation::norm_only, Ablation::whiten_only}) {
        if (to_string(a) == s) return a;
    }
    throw std::invalid_argument("unknown ablation '" + s + "'");
}

}  // namespace swan
