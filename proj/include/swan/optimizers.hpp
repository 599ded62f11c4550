#pragma once

#include <optional>
#include <string>

#include "swan/gradient_ops.hpp"
#include "swan/matrix.hpp"

namespace swan {

enum class OptimizerKind { swan, sgd, adam, signed_sgd, gd_optimal, newton, whitened_gd_optimal };
enum class Ablation { full, norm_only, whiten_only };
enum class ScheduleKind { constant, linear_warmup_decay };

struct Schedule {
    ScheduleKind kind = ScheduleKind::constant;
    double warmup_fraction = 0.1;
    double final_fraction = 0.1;

    // Multiplier on the base learning rate at 0-based step t of total.
    double multiplier(long t, long total) const;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::swan;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    bool swan_rescale = true;
    GradNormConfig grad_norm_cfg;
    WhiteningConfig whitening_cfg;
    Ablation ablation = Ablation::full;
    Schedule schedule;

    void validate() const;
};

struct OptimizerState {
    long t = 0;
    std::optional<Matrix> first_moment;
    std::optional<Matrix> second_moment;

    int moment_buffer_count() const {
        return static_cast<int>(first_moment.has_value()) + static_cast<int>(second_moment.has_value());
    }
};

bool is_stateless(OptimizerKind kind);
// Adam gets two zeroed parameter-shaped buffers; every other kind gets none.
OptimizerState init_state(const OptimizerConfig& cfg, std::size_t rows, std::size_t cols);

// SWAN update direction before scaling by the learning rate. Handles
// rows > cols by transposing.
Matrix swan_direction(const Matrix& g, const OptimizerConfig& cfg);

Matrix swan_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg);
Matrix sgd_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg);
Matrix signed_step(const Matrix& w, const Matrix& g, const OptimizerConfig& cfg);

struct StepOutput {
    Matrix w;
    double eta;
};

struct AdamResult {
    Matrix w;
    OptimizerState state;
};
AdamResult adam_step(const Matrix& w, const Matrix& g, OptimizerState state, const OptimizerConfig& cfg);

// Quadratic-context steps; the gradient is h·w (C = 0).
Matrix gd_optimal_step(const Matrix& w, const Matrix& h);
Matrix newton_step(const Matrix& w, const Matrix& h, double eta);
Matrix whitened_gd_optimal_step(const Matrix& w, const Matrix& h);

double gd_optimal_rate(const Matrix& h);

// One step w - eta* polar(g) with eta* = ||g||_1 / Tr(h), for a gradient g of
// a quadratic with Hessian h. Returns the new iterate and eta*.
StepOutput whitened_optimal_update(const Matrix& w, const Matrix& g, double trace_h);

// Spectral data of a fixed SPD Hessian, computed once per run.
struct HessianInfo {
    Matrix h;
    Matrix inverse;
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    double trace = 0.0;
};
HessianInfo make_hessian_info(const Matrix& h);

// Uniform entry point. `h` is required by gd_optimal, newton and
// whitened_gd_optimal and ignored otherwise. `lr_scale` multiplies the
// configured learning rate; the two "optimal" kinds ignore both.
StepOutput optimizer_step(const Matrix& w, const Matrix& g, OptimizerState& state,
                          const OptimizerConfig& cfg, const HessianInfo* h = nullptr,
                          double lr_scale = 1.0);

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& s);
std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

}  // namespace swan
