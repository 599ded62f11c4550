#include "swan/problems.hpp"

#include <cmath>
#include <numbers>

#include "swan/rng.hpp"

namespace swan {

QuadraticProblem::QuadraticProblem(Matrix h, Matrix c) : info_(make_hessian_info(h)), c_(std::move(c)) {
    if (h.rows() != c_.rows()) {
        throw std::invalid_argument("quadratic: H is " + h.shape_str() + " but C is " + c_.shape_str());
    }
    w_star_ = matmul(info_.inverse, c_);
    l_star_ = loss(w_star_);
}

QuadraticProblem QuadraticProblem::homogeneous(Matrix h, std::size_t n) {
    const std::size_t m = h.rows();
    return QuadraticProblem(std::move(h), Matrix(m, n));
}

double QuadraticProblem::loss(const Matrix& w) const {
    require_same_shape(w, c_, "quadratic loss");
    return 0.5 * inner(w, matmul(info_.h, w)) - inner(c_, w);
}

Matrix QuadraticProblem::grad(const Matrix& w) const {
    require_same_shape(w, c_, "quadratic grad");
    return matmul(info_.h, w) - c_;
}

double QuadraticProblem::loss_minus_opt(const Matrix& w) const {
    require_same_shape(w, c_, "quadratic loss");
    const Matrix d = w - w_star_;
    return 0.5 * inner(d, matmul(info_.h, d));
}

Matrix block_diag(const std::vector<Matrix>& blocks) {
    std::size_t r = 0;
    std::size_t c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Matrix out(r, c);
    std::size_t r0 = 0;
    std::size_t c0 = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < b.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) out(r0 + i, c0 + j) = b(i, j);
        r0 += b.rows();
        c0 += b.cols();
    }
    return out;
}

RastriginProblem::RastriginProblem(double a, std::size_t m) : a_(a), m_(m) {
    if (!(a > 0.0)) throw std::invalid_argument("rastrigin: A must be > 0");
    if (m == 0) throw std::invalid_argument("rastrigin: m must be >= 1");
}

double RastriginProblem::loss(const Matrix& w) const {
    if (w.rows() != m_ || w.cols() != m_) {
        throw std::invalid_argument("rastrigin: expected " + std::to_string(m_) + "x" +
                                    std::to_string(m_) + ", got " + w.shape_str());
    }
    double quad = 0.0;
    double cosines = 0.0;
    for (double v : w.data()) {
        quad += v * v;
        cosines += std::cos(2.0 * std::numbers::pi * v);
    }
    const double mm = static_cast<double>(m_ * m_);
    return mm * a_ + 0.5 * quad - a_ * cosines;
}

Matrix RastriginProblem::grad(const Matrix& w) const {
    if (w.rows() != m_ || w.cols() != m_) {
        throw std::invalid_argument("rastrigin: expected " + std::to_string(m_) + "x" +
                                    std::to_string(m_) + ", got " + w.shape_str());
    }
    Matrix g = w;
    for (double& v : g.data()) v += 2.0 * std::numbers::pi * a_ * std::sin(2.0 * std::numbers::pi * v);
    return g;
}

MlpProblem::MlpProblem(MlpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dims.size() < 2) throw std::invalid_argument("mlp: need at least two layer widths");
    for (std::size_t d : cfg_.dims)
        if (d == 0) throw std::invalid_argument("mlp: zero layer width");
    if (cfg_.batch_size == 0) throw std::invalid_argument("mlp: batch_size must be >= 1");
    if (!(cfg_.label_noise >= 0.0)) throw std::invalid_argument("mlp: label_noise must be >= 0");
    teacher_ = init_weights(mix64(cfg_.teacher_seed ^ 0x7465616368657200ULL));
}

std::vector<Matrix> MlpProblem::init_weights(std::uint64_t seed) const {
    std::vector<Matrix> w;
    Rng root(seed);
    for (std::size_t l = 0; l + 1 < cfg_.dims.size(); ++l) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(cfg_.dims[l]));
        Rng r = root.split(l);
        Matrix m(cfg_.dims[l + 1], cfg_.dims[l]);
        for (double& v : m.data()) v = sd * r.normal();
        w.push_back(std::move(m));
    }
    return w;
}

std::size_t MlpProblem::parameter_count() const {
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < cfg_.dims.size(); ++l) p += cfg_.dims[l] * cfg_.dims[l + 1];
    return p;
}

void MlpProblem::check_shapes(const std::vector<Matrix>& weights) const {
    if (weights.size() + 1 != cfg_.dims.size()) throw std::invalid_argument("mlp: wrong number of weight blocks");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != cfg_.dims[l + 1] || weights[l].cols() != cfg_.dims[l]) {
            throw std::invalid_argument("mlp: block " + std::to_string(l) + " has shape " +
                                        weights[l].shape_str());
        }
    }
}

namespace {

// Hidden activations per layer, input first; the last entry is the output.
std::vector<Matrix> forward(const std::vector<Matrix>& weights, const Matrix& x) {
    std::vector<Matrix> acts{x};
    for (std::size_t l = 0; l < weights.size(); ++l) {
        Matrix a = matmul_nt(acts.back(), weights[l]);
        if (l + 1 < weights.size())
            for (double& v : a.data()) v = std::tanh(v);
        acts.push_back(std::move(a));
    }
    return acts;
}

}  // namespace

MlpProblem::Batch MlpProblem::draw_batch(std::uint64_t batch_seed) const {
    Rng r = Rng(cfg_.teacher_seed, 1).split(batch_seed);
    Matrix x(cfg_.batch_size, cfg_.dims.front());
    for (double& v : x.data()) v = r.normal();
    Matrix y = forward(teacher_, x).back();
    if (cfg_.label_noise > 0.0)
        for (double& v : y.data()) v += cfg_.label_noise * r.normal();
    return {std::move(x), std::move(y)};
}

MlpProblem::Eval MlpProblem::loss_and_grad(const std::vector<Matrix>& weights,
                                           std::uint64_t batch_seed) const {
    check_shapes(weights);
    const Batch batch = draw_batch(batch_seed);
    const std::vector<Matrix> acts = forward(weights, batch.x);
    const double inv_b = 1.0 / static_cast<double>(cfg_.batch_size);

    Matrix delta = acts.back() - batch.y;
    Eval out;
    out.loss = 0.5 * inv_b * inner(delta, delta);
    delta *= inv_b;
    out.grads.resize(weights.size());
    for (std::size_t l = weights.size(); l-- > 0;) {
        out.grads[l] = matmul_tn(delta, acts[l]);
        if (l == 0) break;
        Matrix back = matmul(delta, weights[l]);
        const Matrix& h = acts[l];
        for (std::size_t i = 0; i < back.size(); ++i) back.data()[i] *= 1.0 - h.data()[i] * h.data()[i];
        delta = std::move(back);
    }
    return out;
}

double MlpProblem::loss(const std::vector<Matrix>& weights, std::uint64_t batch_seed) const {
    check_shapes(weights);
    const Batch batch = draw_batch(batch_seed);
    const Matrix r = forward(weights, batch.x).back() - batch.y;
    return 0.5 * inner(r, r) / static_cast<double>(cfg_.batch_size);
}

StbSystem::StbSystem(const StbConfig& cfg)
    : StbSystem(gaussian(cfg.context_len, cfg.n, cfg.mu_seed), cfg.c_offset, cfg.dt, cfg.noise_std) {}

StbSystem::StbSystem(Matrix mu, double c_offset, double dt, double noise_std)
    : mu_(std::move(mu)), c_(c_offset), dt_(dt), noise_(noise_std) {
    if (mu_.empty()) throw std::invalid_argument("stb: empty mu");
    if (!(dt_ > 0.0)) throw std::invalid_argument("stb: dt must be > 0");
    if (!(noise_ >= 0.0)) throw std::invalid_argument("stb: noise_std must be >= 0");
}

Matrix StbSystem::initial_state_from_embedding(const Matrix& u_c, const Matrix& w) {
    return matmul_tn(u_c, w);
}

namespace {

// Unchecked field evaluation; entries may overflow to inf.
void field_into(const Matrix& mu, double c, const Matrix& v, Matrix& out) {
    for (std::size_t l = 0; l < v.rows(); ++l) {
        const double* vl = v.row(l);
        double z = 0.0;
        for (std::size_t k = 0; k < v.cols(); ++k) z += vl[k] * vl[k];
        const double e = std::exp(0.5 * z + c);
        for (std::size_t k = 0; k < v.cols(); ++k) out(l, k) = mu(l, k) * e;
    }
}

}  // namespace

Matrix StbSystem::field(const Matrix& v) const {
    require_same_shape(v, mu_, "stb field");
    Matrix out(v.rows(), v.cols());
    field_into(mu_, c_, v, out);
    require_finite(out, "stb field");
    return out;
}

Matrix StbSystem::hessian(const Matrix& v) const {
    const Matrix vd = field(v);
    const std::size_t mc = v.rows();
    const std::size_t n = v.cols();
    Matrix h(mc * n, mc * n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t kp = 0; kp < n; ++kp)
            for (std::size_t l = 0; l < mc; ++l) h(k * mc + l, kp * mc + l) = vd(l, k) * v(l, kp);
    require_finite(h, "stb hessian");
    return h;
}

std::vector<Matrix> StbSystem::diagonal_blocks(const Matrix& v) const {
    const Matrix vd = field(v);
    std::vector<Matrix> blocks;
    for (std::size_t k = 0; k < v.cols(); ++k) {
        Matrix b(v.rows(), v.rows());
        for (std::size_t l = 0; l < v.rows(); ++l) b(l, l) = vd(l, k) * v(l, k);
        blocks.push_back(std::move(b));
    }
    return blocks;
}

namespace {

StbTrajectory integrate(const StbSystem& s, const Matrix& v0, long steps, std::uint64_t seed,
                        long record_every) {
    require_same_shape(v0, s.mu(), "stb_integrate");
    require_finite(v0, "stb_integrate");
    if (record_every < 1) throw std::invalid_argument("stb_integrate: record_every must be >= 1");
    Rng rng(seed);
    StbTrajectory tr;
    Matrix v = v0;
    Matrix vd(v.rows(), v.cols());
    Matrix mu_t = s.mu();
    tr.steps.push_back(0);
    tr.states.push_back(v);
    long t = 0;
    for (; t < steps; ++t) {
        if (s.noise_std() > 0.0) {
            for (std::size_t i = 0; i < mu_t.size(); ++i)
                mu_t.data()[i] = s.mu().data()[i] + s.noise_std() * rng.normal();
        }
        field_into(mu_t, s.c_offset(), v, vd);
        Matrix next = v;
        bool finite = all_finite(vd);
        if (finite) {
            for (std::size_t i = 0; i < next.size(); ++i) next.data()[i] += s.dt() * vd.data()[i];
            // Keep only states whose field is finite.
            finite = all_finite(next);
            if (finite) {
                Matrix probe(v.rows(), v.cols());
                field_into(s.mu(), s.c_offset(), next, probe);
                finite = all_finite(probe);
            }
        }
        if (!finite) {
            tr.overflow_step = t + 1;
            break;
        }
        v = std::move(next);
        if ((t + 1) % record_every == 0) {
            tr.steps.push_back(t + 1);
            tr.states.push_back(v);
        }
    }
    if (tr.steps.back() != t) {
        tr.steps.push_back(t);
        tr.states.push_back(v);
    }
    tr.last_finite = v;
    tr.last_finite_step = t;
    return tr;
}

}  // namespace

StbTrajectory stb_integrate(const StbSystem& s, const Matrix& v0, long steps, std::uint64_t seed,
                            long record_every) {
    if (steps < 0) throw std::invalid_argument("stb_integrate: negative step count");
    return integrate(s, v0, steps, seed, record_every);
}

StbTrajectory stb_integrate_until_overflow(const StbSystem& s, const Matrix& v0, std::uint64_t seed,
                                           long record_every, long max_steps) {
    return integrate(s, v0, max_steps, seed, record_every);
}

double normalized_block_spread(const std::vector<Matrix>& blocks) {
    if (blocks.size() < 2) return 0.0;
    std::vector<Matrix> norm;
    for (const auto& b : blocks) {
        double sum = 0.0;
        for (double v : b.data()) sum += v;
        if (sum == 0.0 || !std::isfinite(sum)) throw std::domain_error("stb: block with zero or non-finite sum");
        norm.push_back(b * (1.0 / sum));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < norm.size(); ++i)
        for (std::size_t j = i + 1; j < norm.size(); ++j) worst = std::max(worst, max_abs(norm[i] - norm[j]));
    return worst;
}

}  // namespace swan
