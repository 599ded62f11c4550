#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "swan/optimizers.hpp"
#include "swan/problems.hpp"

namespace swan {

// Invalid experiment description; `key` names the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& message);
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

// Objective over a list of weight blocks.
class Objective {
public:
    virtual ~Objective() = default;
    // Loss at w; fills grads when non-null. `step` selects the minibatch for
    // stochastic objectives.
    virtual double evaluate(const std::vector<Matrix>& w, long step, std::vector<Matrix>* grads) const = 0;
    // loss − L* when the optimum is known.
    virtual std::optional<double> excess(const std::vector<Matrix>& w) const;
    virtual const HessianInfo* hessian() const { return nullptr; }
    // Predicted one-step whitened contraction at w, when defined.
    virtual std::optional<double> predicted_contraction(const std::vector<Matrix>& w) const;
};

class QuadraticObjective : public Objective {
public:
    explicit QuadraticObjective(QuadraticProblem p) : p_(std::move(p)) {}
    double evaluate(const std::vector<Matrix>& w, long step, std::vector<Matrix>* grads) const override;
    std::optional<double> excess(const std::vector<Matrix>& w) const override;
    const HessianInfo* hessian() const override { return &p_.hessian_info(); }
    std::optional<double> predicted_contraction(const std::vector<Matrix>& w) const override;
    const QuadraticProblem& problem() const { return p_; }

private:
    QuadraticProblem p_;
};

class RastriginObjective : public Objective {
public:
    explicit RastriginObjective(RastriginProblem p) : p_(p) {}
    double evaluate(const std::vector<Matrix>& w, long step, std::vector<Matrix>* grads) const override;
    std::optional<double> excess(const std::vector<Matrix>& w) const override;

private:
    RastriginProblem p_;
};

class MlpObjective : public Objective {
public:
    MlpObjective(MlpProblem p, std::uint64_t batch_seed) : p_(std::move(p)), seed_(batch_seed) {}
    double evaluate(const std::vector<Matrix>& w, long step, std::vector<Matrix>* grads) const override;
    const MlpProblem& problem() const { return p_; }

private:
    MlpProblem p_;
    std::uint64_t seed_;
};

struct TrajectoryRecord {
    long step = 0;
    double loss = 0.0;
    double loss_minus_opt = 0.0;  // NaN when the optimum is unknown
    double grad_fro = 0.0;
    double update_fro = 0.0;
    double eta = 0.0;
    double diag1 = 0.0;  // measured contraction of loss − L* over the last step
    double diag2 = 0.0;  // predicted whitened contraction at this iterate
    double wall_time = 0.0;
};

enum class RunStatus { completed, converged, diverged, failed };
std::string to_string(RunStatus s);

struct RunSummary {
    std::string name;
    std::string optimizer;
    RunStatus status = RunStatus::completed;
    std::string message;
    long steps_run = 0;
    double final_loss = 0.0;
    std::optional<double> final_loss_minus_opt;
    std::optional<double> final_relative_loss;
    std::optional<long> steps_to_threshold;
    double learning_rate = 0.0;
    bool tuned = false;
};

struct RunResult {
    std::vector<TrajectoryRecord> records;
    RunSummary summary;
};

struct RunOptions {
    long steps = 500;
    long record_every = 1;
    // Relative excess (loss − L*)/(loss₀ − L*) treated as converged.
    double threshold = 1e-6;
    bool stop_on_converge = false;
    bool diagnostics = false;
};

RunResult run_trajectory(const Objective& obj, std::vector<Matrix> w0, const OptimizerConfig& cfg,
                         const RunOptions& opt, const std::string& name = "");

// Final loss (or final excess when known) of a run at learning rate eta.
double final_objective(const Objective& obj, const std::vector<Matrix>& w0, OptimizerConfig cfg,
                       long steps, double eta);

enum class InitKind { shared, gaussian, stiefel, adversarial };

struct ProblemSpec {
    std::string kind = "quadratic";
    std::size_t m = 50;
    std::size_t n = 50;
    double kappa = 1e4;
    double c_scale = 0.0;
    double rastrigin_a = 10.0;
    MlpConfig mlp;
    InitKind init = InitKind::gaussian;
    double init_scale = 1.0;
};

struct OptimizerSpec {
    std::string name;
    OptimizerConfig cfg;
    InitKind init = InitKind::shared;
    bool tune = false;
    double tune_lo = 1e-4;
    double tune_hi = 10.0;
    int tune_grid = 10;
    int tune_refine = 10;
};

struct ExperimentSpec {
    std::uint64_t seed = 1;
    long steps = 500;
    long record_every = 1;
    double threshold = 1e-6;
    bool stop_on_converge = false;
    std::string output = "run";
    bool theory_checks = false;
    bool kl_tracking = false;
    std::string speedup_baseline;
    ProblemSpec problem;
    std::vector<OptimizerSpec> optimizers;

    void validate() const;
};

ExperimentSpec parse_experiment(std::istream& in);
ExperimentSpec parse_experiment_file(const std::string& path);
// Canonical text form; parse_experiment(format_experiment(s)) == s.
std::string format_experiment(const ExperimentSpec& spec);
std::uint64_t config_hash(const ExperimentSpec& spec);

std::unique_ptr<Objective> make_objective(const ExperimentSpec& spec);
std::vector<Matrix> make_initial_point(const ExperimentSpec& spec, InitKind init);

struct ExperimentResult {
    std::vector<RunResult> runs;
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

// CSV columns: step,loss,loss_minus_opt,grad_fro,update_fro,eta,diag1,diag2.
void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records);
void write_trajectory_json(std::ostream& os, const std::vector<TrajectoryRecord>& records);
std::string summary_json(const ExperimentSpec& spec, const ExperimentResult& result);
// 17 significant digits; "nan"/"inf" spelled out.
std::string format_double(double v);

}  // namespace swan
