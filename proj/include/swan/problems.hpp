#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "swan/matrix.hpp"
#include "swan/optimizers.hpp"

namespace swan {

// L(W) = ½Tr(WᵀHW) − Tr(CᵀW).
class QuadraticProblem {
public:
    QuadraticProblem(Matrix h, Matrix c);
    // C = 0 with n columns.
    static QuadraticProblem homogeneous(Matrix h, std::size_t n);

    double loss(const Matrix& w) const;
    Matrix grad(const Matrix& w) const;
    // ½Tr[(W−W*)ᵀH(W−W*)], evaluated directly rather than as loss − L*.
    double loss_minus_opt(const Matrix& w) const;

    const Matrix& h() const { return info_.h; }
    const Matrix& c() const { return c_; }
    const Matrix& w_star() const { return w_star_; }
    double l_star() const { return l_star_; }
    const HessianInfo& hessian_info() const { return info_; }
    std::size_t m() const { return c_.rows(); }
    std::size_t n() const { return c_.cols(); }

private:
    HessianInfo info_;
    Matrix c_;
    Matrix w_star_;
    double l_star_ = 0.0;
};

Matrix block_diag(const std::vector<Matrix>& blocks);

// f(W) = m²A + ½Tr(WᵀW) − A Σ cos(2πW_ij) on m×m matrices.
class RastriginProblem {
public:
    explicit RastriginProblem(double a = 10.0, std::size_t m = 50);
    double loss(const Matrix& w) const;
    Matrix grad(const Matrix& w) const;
    double a() const { return a_; }
    std::size_t m() const { return m_; }

private:
    double a_;
    std::size_t m_;
};

struct MlpConfig {
    // Layer widths, input first. Weight block l has shape dims[l+1] × dims[l].
    std::vector<std::size_t> dims{32, 128, 64, 8};
    std::size_t batch_size = 64;
    double label_noise = 2.0;
    std::uint64_t teacher_seed = 0;
};

// Teacher–student regression: x ~ N(0, I), y = teacher(x) + noise, tanh hidden
// layers, linear output, loss (1/2B) Σ ||f(x) − y||².
class MlpProblem {
public:
    explicit MlpProblem(MlpConfig cfg);

    struct Eval {
        double loss = 0.0;
        std::vector<Matrix> grads;
    };

    // Entries N(0, 1/fan_in).
    std::vector<Matrix> init_weights(std::uint64_t seed) const;
    Eval loss_and_grad(const std::vector<Matrix>& weights, std::uint64_t batch_seed) const;
    double loss(const std::vector<Matrix>& weights, std::uint64_t batch_seed) const;

    const MlpConfig& config() const { return cfg_; }
    const std::vector<Matrix>& teacher() const { return teacher_; }
    std::size_t parameter_count() const;

private:
    struct Batch {
        Matrix x;
        Matrix y;
    };
    Batch draw_batch(std::uint64_t batch_seed) const;
    void check_shapes(const std::vector<Matrix>& weights) const;

    MlpConfig cfg_;
    std::vector<Matrix> teacher_;
};

// Reparameterized STB dynamics on V (M_C × n):
//   v̇_lk = (μ_lk + ξ_lk) · exp(½ Σ_s v_ls² + C).
// The Jacobian of this field is H_{lk,l'k'} = v̇_lk v_l'k' δ_ll'.
struct StbConfig {
    std::size_t context_len = 10;  // M_C
    std::size_t n = 12;
    double c_offset = 0.0;
    double dt = 1e-3;
    double noise_std = 0.0;
    std::uint64_t mu_seed = 0;
};

class StbSystem {
public:
    // μ drawn once from N(0, 1) with mu_seed.
    explicit StbSystem(const StbConfig& cfg);
    StbSystem(Matrix mu, double c_offset, double dt, double noise_std);
    // V₀ = U_Cᵀ W from a d × M_C context embedding and a d × n weight.
    static Matrix initial_state_from_embedding(const Matrix& u_c, const Matrix& w);

    Matrix field(const Matrix& v) const;
    // Full (M_C·n)² matrix, index k·M_C + l.
    Matrix hessian(const Matrix& v) const;
    // The n diagonal M_C × M_C blocks, block k = diag_l(v̇_lk v_lk).
    std::vector<Matrix> diagonal_blocks(const Matrix& v) const;

    const Matrix& mu() const { return mu_; }
    double c_offset() const { return c_; }
    double dt() const { return dt_; }
    double noise_std() const { return noise_; }

private:
    Matrix mu_;
    double c_;
    double dt_;
    double noise_;
};

struct StbTrajectory {
    std::vector<long> steps;
    std::vector<Matrix> states;
    Matrix last_finite;
    long last_finite_step = 0;
    // Step at which the next Euler update would have been non-finite.
    std::optional<long> overflow_step;
};

// Explicit Euler from v0. Stops early, keeping the last finite state, when the
// field or the next iterate leaves the finite range.
StbTrajectory stb_integrate(const StbSystem& s, const Matrix& v0, long steps, std::uint64_t seed,
                            long record_every = 1);
StbTrajectory stb_integrate_until_overflow(const StbSystem& s, const Matrix& v0, std::uint64_t seed,
                                           long record_every, long max_steps = 10'000'000);

// max over block pairs of max-abs(B_k − B_k'), B_k = block_k / sum(block_k).
double normalized_block_spread(const std::vector<Matrix>& blocks);

}  // namespace swan
