#include "swan/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "swan/gradient_ops.hpp"
#include "swan/rng.hpp"
#include "swan/theory.hpp"
#include "swan/tuning.hpp"

namespace swan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum SeedTag : std::uint64_t { kTagHessian = 1, kTagLinear = 2, kTagInit = 3, kTagBatch = 4, kTagTeacher = 5 };

double block_fro(const std::vector<Matrix>& blocks) {
    double s = 0.0;
    for (const auto& b : blocks) {
        const double f = frobenius_norm(b);
        s += f * f;
    }
    return std::sqrt(s);
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigError::ConfigError(std::string key, const std::string& message)
    : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}

std::optional<double> Objective::excess(const std::vector<Matrix>&) const { return std::nullopt; }
std::optional<double> Objective::predicted_contraction(const std::vector<Matrix>&) const { return std::nullopt; }

double QuadraticObjective::evaluate(const std::vector<Matrix>& w, long, std::vector<Matrix>* grads) const {
    if (grads) *grads = {p_.grad(w.at(0))};
    return p_.loss(w.at(0));
}

std::optional<double> QuadraticObjective::excess(const std::vector<Matrix>& w) const {
    return p_.loss_minus_opt(w.at(0));
}

std::optional<double> QuadraticObjective::predicted_contraction(const std::vector<Matrix>& w) const {
    const Matrix& x = w.at(0);
    if (x.rows() > x.cols() || !(p_.loss_minus_opt(x) > 0.0)) return std::nullopt;
    return predict_whitened_contraction(p_, x);
}

double RastriginObjective::evaluate(const std::vector<Matrix>& w, long, std::vector<Matrix>* grads) const {
    if (grads) *grads = {p_.grad(w.at(0))};
    return p_.loss(w.at(0));
}

std::optional<double> RastriginObjective::excess(const std::vector<Matrix>& w) const {
    return p_.loss(w.at(0));
}

double MlpObjective::evaluate(const std::vector<Matrix>& w, long step, std::vector<Matrix>* grads) const {
    const std::uint64_t bs = derive_seed(seed_, kTagBatch, static_cast<std::uint64_t>(step));
    if (!grads) return p_.loss(w, bs);
    auto e = p_.loss_and_grad(w, bs);
    *grads = std::move(e.grads);
    return e.loss;
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::converged: return "converged";
        case RunStatus::diverged: return "diverged";
        case RunStatus::failed: return "failed";
    }
    return "unknown";
}

RunResult run_trajectory(const Objective& obj, std::vector<Matrix> w, const OptimizerConfig& cfg,
                         const RunOptions& opt, const std::string& name) {
    cfg.validate();
    if (opt.steps < 0 || opt.record_every < 1) throw std::invalid_argument("run: bad step counts");
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    RunResult res;
    res.summary.name = name;
    res.summary.optimizer = to_string(cfg.kind);
    res.summary.learning_rate = cfg.learning_rate;

    std::vector<OptimizerState> states;
    for (const auto& b : w) states.push_back(init_state(cfg, b.rows(), b.cols()));

    std::vector<Matrix> grads;
    double loss = obj.evaluate(w, 0, &grads);
    std::optional<double> excess = obj.excess(w);
    const std::optional<double> excess0 = excess;

    auto diag2 = [&]() -> double {
        if (!opt.diagnostics) return kNaN;
        try {
            return obj.predicted_contraction(w).value_or(kNaN);
        } catch (const std::exception&) {
            return kNaN;
        }
    };

    TrajectoryRecord rec;
    rec.step = 0;
    rec.loss = loss;
    rec.loss_minus_opt = excess.value_or(kNaN);
    rec.grad_fro = block_fro(grads);
    rec.diag1 = kNaN;
    rec.diag2 = diag2();
    rec.wall_time = elapsed();
    res.records.push_back(rec);

    auto relative = [&](const std::optional<double>& e) -> std::optional<double> {
        if (!e || !excess0) return std::nullopt;
        if (*excess0 == 0.0) return 0.0;
        return *e / *excess0;
    };
    if (auto r = relative(excess); r && *r <= opt.threshold) res.summary.steps_to_threshold = 0;

    long t = 0;
    bool exact_optimum = excess && *excess == 0.0;
    try {
        while (t < opt.steps && !exact_optimum) {
            if (opt.stop_on_converge && res.summary.steps_to_threshold) break;
            const double scale = cfg.schedule.multiplier(t, opt.steps);
            std::vector<Matrix> next;
            double upd = 0.0;
            double eta = 0.0;
            for (std::size_t b = 0; b < w.size(); ++b) {
                StepOutput out = optimizer_step(w[b], grads[b], states[b], cfg, obj.hessian(), scale);
                const double f = frobenius_norm(out.w - w[b]);
                upd += f * f;
                eta = out.eta;
                next.push_back(std::move(out.w));
            }
            ++t;
            w = std::move(next);
            loss = obj.evaluate(w, t, &grads);
            const std::optional<double> prev = excess;
            excess = obj.excess(w);
            if (!std::isfinite(loss) || (excess && !std::isfinite(*excess))) {
                res.summary.status = RunStatus::diverged;
                res.summary.message = "non-finite loss at step " + std::to_string(t);
                break;
            }
            exact_optimum = excess && *excess == 0.0;
            if (auto r = relative(excess); r && *r <= opt.threshold && !res.summary.steps_to_threshold) {
                res.summary.steps_to_threshold = t;
            }
            if (t % opt.record_every == 0 || t == opt.steps || exact_optimum) {
                rec = TrajectoryRecord{};
                rec.step = t;
                rec.loss = loss;
                rec.loss_minus_opt = excess.value_or(kNaN);
                rec.grad_fro = block_fro(grads);
                rec.update_fro = std::sqrt(upd);
                rec.eta = eta;
                rec.diag1 = (prev && excess && *prev > 0.0) ? *excess / *prev : kNaN;
                rec.diag2 = diag2();
                rec.wall_time = elapsed();
                res.records.push_back(rec);
            }
        }
    } catch (const NonFiniteError& e) {
        res.summary.status = RunStatus::diverged;
        res.summary.message = e.what();
    } catch (const RankDeficientError& e) {
        res.summary.status = RunStatus::failed;
        res.summary.message = e.what();
    } catch (const std::domain_error& e) {
        res.summary.status = RunStatus::failed;
        res.summary.message = e.what();
    }

    res.summary.steps_run = t;
    res.summary.final_loss = loss;
    res.summary.final_loss_minus_opt = excess;
    res.summary.final_relative_loss = relative(excess);
    if (res.summary.status == RunStatus::completed && res.summary.steps_to_threshold) {
        res.summary.status = RunStatus::converged;
    }
    return res;
}

double final_objective(const Objective& obj, const std::vector<Matrix>& w0, OptimizerConfig cfg,
                       long steps, double eta) {
    cfg.learning_rate = eta;
    RunOptions opt;
    opt.steps = steps;
    opt.record_every = std::max(1L, steps);
    opt.threshold = 0.0;
    const RunResult r = run_trajectory(obj, w0, cfg, opt);
    if (r.summary.status == RunStatus::diverged || r.summary.status == RunStatus::failed) {
        return std::numeric_limits<double>::infinity();
    }
    return r.summary.final_loss_minus_opt.value_or(r.summary.final_loss);
}

// ---- configuration -------------------------------------------------------

namespace {

enum class ValueType { integer, real, boolean, string, list };

struct KeyDef {
    const char* key;
    ValueType type;
};

const std::vector<KeyDef>& experiment_keys() {
    static const std::vector<KeyDef> k{
        {"seed", ValueType::integer},          {"steps", ValueType::integer},
        {"record_every", ValueType::integer},  {"threshold", ValueType::real},
        {"stop_on_converge", ValueType::boolean}, {"output", ValueType::string},
        {"theory_checks", ValueType::boolean}, {"kl_tracking", ValueType::boolean},
        {"speedup_baseline", ValueType::string},
    };
    return k;
}

const std::vector<KeyDef>& problem_keys() {
    static const std::vector<KeyDef> k{
        {"kind", ValueType::string},        {"m", ValueType::integer},
        {"n", ValueType::integer},          {"kappa", ValueType::real},
        {"c_scale", ValueType::real},       {"rastrigin_a", ValueType::real},
        {"mlp_dims", ValueType::list},      {"mlp_batch_size", ValueType::integer},
        {"mlp_label_noise", ValueType::real}, {"init", ValueType::string},
        {"init_scale", ValueType::real},
    };
    return k;
}

const std::vector<KeyDef>& optimizer_keys() {
    static const std::vector<KeyDef> k{
        {"kind", ValueType::string},
        {"learning_rate", ValueType::real},
        {"adam_beta1", ValueType::real},
        {"adam_beta2", ValueType::real},
        {"adam_epsilon", ValueType::real},
        {"swan_rescale", ValueType::boolean},
        {"gradnorm_subtract_mean", ValueType::boolean},
        {"gradnorm_epsilon", ValueType::real},
        {"whitening_mode", ValueType::string},
        {"whitening_iterations", ValueType::integer},
        {"whitening_beta", ValueType::real},
        {"whitening_order", ValueType::string},
        {"whitening_pre_normalize", ValueType::boolean},
        {"ablation", ValueType::string},
        {"schedule", ValueType::string},
        {"warmup_fraction", ValueType::real},
        {"final_fraction", ValueType::real},
        {"init", ValueType::string},
        {"tune", ValueType::boolean},
        {"tune_lo", ValueType::real},
        {"tune_hi", ValueType::real},
        {"tune_grid", ValueType::integer},
        {"tune_refine", ValueType::integer},
    };
    return k;
}

long parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long out = 0;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key, "expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key, "expected a number, got '" + v + "'");
    }
    if (pos != v.size() || !std::isfinite(out)) throw ConfigError(key, "expected a finite number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const long x = parse_int(key, trim(item));
        if (x <= 0) throw ConfigError(key, "list entries must be positive");
        out.push_back(static_cast<std::size_t>(x));
    }
    if (out.empty()) throw ConfigError(key, "empty list");
    return out;
}

InitKind parse_init(const std::string& key, const std::string& v, bool allow_shared) {
    if (v == "gaussian") return InitKind::gaussian;
    if (v == "stiefel") return InitKind::stiefel;
    if (v == "adversarial") return InitKind::adversarial;
    if (allow_shared && v == "shared") return InitKind::shared;
    throw ConfigError(key, "unknown init '" + v + "'");
}

std::string init_name(InitKind k) {
    switch (k) {
        case InitKind::shared: return "shared";
        case InitKind::gaussian: return "gaussian";
        case InitKind::stiefel: return "stiefel";
        case InitKind::adversarial: return "adversarial";
    }
    return "unknown";
}

std::size_t positive(const std::string& key, long v) {
    if (v <= 0) throw ConfigError(key, "must be >= 1");
    return static_cast<std::size_t>(v);
}

void apply_experiment_key(ExperimentSpec& s, const std::string& key, const std::string& full,
                          const std::string& v) {
    if (key == "seed") {
        const long x = parse_int(full, v);
        if (x < 0) throw ConfigError(full, "must be >= 0");
        s.seed = static_cast<std::uint64_t>(x);
    } else if (key == "steps") {
        s.steps = parse_int(full, v);
    } else if (key == "record_every") {
        s.record_every = parse_int(full, v);
    } else if (key == "threshold") {
        s.threshold = parse_real(full, v);
    } else if (key == "stop_on_converge") {
        s.stop_on_converge = parse_bool(full, v);
    } else if (key == "output") {
        s.output = v;
    } else if (key == "theory_checks") {
        s.theory_checks = parse_bool(full, v);
    } else if (key == "kl_tracking") {
        s.kl_tracking = parse_bool(full, v);
    } else if (key == "speedup_baseline") {
        s.speedup_baseline = v;
    }
}

void apply_problem_key(ProblemSpec& p, const std::string& key, const std::string& full, const std::string& v) {
    if (key == "kind") {
        if (v != "quadratic" && v != "rastrigin" && v != "mlp") throw ConfigError(full, "unknown problem '" + v + "'");
        p.kind = v;
    } else if (key == "m") {
        p.m = positive(full, parse_int(full, v));
    } else if (key == "n") {
        p.n = positive(full, parse_int(full, v));
    } else if (key == "kappa") {
        p.kappa = parse_real(full, v);
    } else if (key == "c_scale") {
        p.c_scale = parse_real(full, v);
    } else if (key == "rastrigin_a") {
        p.rastrigin_a = parse_real(full, v);
    } else if (key == "mlp_dims") {
        p.mlp.dims = parse_list(full, v);
    } else if (key == "mlp_batch_size") {
        p.mlp.batch_size = positive(full, parse_int(full, v));
    } else if (key == "mlp_label_noise") {
        p.mlp.label_noise = parse_real(full, v);
    } else if (key == "init") {
        p.init = parse_init(full, v, false);
    } else if (key == "init_scale") {
        p.init_scale = parse_real(full, v);
    }
}

void apply_optimizer_key(OptimizerSpec& o, const std::string& key, const std::string& full,
                         const std::string& v) {
    OptimizerConfig& c = o.cfg;
    try {
        if (key == "kind") c.kind = parse_optimizer_kind(v);
        else if (key == "learning_rate") c.learning_rate = parse_real(full, v);
        else if (key == "adam_beta1") c.adam_beta1 = parse_real(full, v);
        else if (key == "adam_beta2") c.adam_beta2 = parse_real(full, v);
        else if (key == "adam_epsilon") c.adam_epsilon = parse_real(full, v);
        else if (key == "swan_rescale") c.swan_rescale = parse_bool(full, v);
        else if (key == "gradnorm_subtract_mean") c.grad_norm_cfg.subtract_mean = parse_bool(full, v);
        else if (key == "gradnorm_epsilon") c.grad_norm_cfg.epsilon = parse_real(full, v);
        else if (key == "whitening_mode") {
            if (v == "newton_schulz") c.whitening_cfg.mode = WhiteningMode::newton_schulz;
            else if (v == "exact_eig") c.whitening_cfg.mode = WhiteningMode::exact_eig;
            else throw ConfigError(full, "unknown whitening mode '" + v + "'");
        } else if (key == "whitening_iterations") {
            c.whitening_cfg.iterations = static_cast<int>(parse_int(full, v));
        } else if (key == "whitening_beta") {
            c.whitening_cfg.beta = parse_real(full, v);
        } else if (key == "whitening_order") {
            if (v == "sequential") c.whitening_cfg.order = NsOrder::sequential;
            else if (v == "coupled") c.whitening_cfg.order = NsOrder::coupled;
            else throw ConfigError(full, "unknown order '" + v + "'");
        } else if (key == "whitening_pre_normalize") {
            c.whitening_cfg.pre_normalize = parse_bool(full, v);
        } else if (key == "ablation") {
            c.ablation = parse_ablation(v);
        } else if (key == "schedule") {
            if (v == "constant") c.schedule.kind = ScheduleKind::constant;
            else if (v == "linear_warmup_decay") c.schedule.kind = ScheduleKind::linear_warmup_decay;
            else throw ConfigError(full, "unknown schedule '" + v + "'");
        } else if (key == "warmup_fraction") {
            c.schedule.warmup_fraction = parse_real(full, v);
        } else if (key == "final_fraction") {
            c.schedule.final_fraction = parse_real(full, v);
        } else if (key == "init") {
            o.init = parse_init(full, v, true);
        } else if (key == "tune") {
            o.tune = parse_bool(full, v);
        } else if (key == "tune_lo") {
            o.tune_lo = parse_real(full, v);
        } else if (key == "tune_hi") {
            o.tune_hi = parse_real(full, v);
        } else if (key == "tune_grid") {
            o.tune_grid = static_cast<int>(parse_int(full, v));
        } else if (key == "tune_refine") {
            o.tune_refine = static_cast<int>(parse_int(full, v));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(full, e.what());
    }
}

bool known(const std::vector<KeyDef>& defs, const std::string& key) {
    for (const auto& d : defs)
        if (key == d.key) return true;
    return false;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (steps < 1) throw ConfigError("experiment.steps", "must be >= 1");
    if (record_every < 1) throw ConfigError("experiment.record_every", "must be >= 1");
    if (!(threshold >= 0.0)) throw ConfigError("experiment.threshold", "must be >= 0");
    if (output.empty()) throw ConfigError("experiment.output", "must not be empty");
    if (optimizers.empty()) throw ConfigError("optimizer", "at least one [optimizer.<name>] section is required");
    if (problem.kind == "quadratic" && !(problem.kappa >= 1.0)) throw ConfigError("problem.kappa", "must be >= 1");
    if (problem.kind == "rastrigin" && !(problem.rastrigin_a > 0.0)) {
        throw ConfigError("problem.rastrigin_a", "must be > 0");
    }
    if (problem.kind == "mlp" && problem.mlp.dims.size() < 2) throw ConfigError("problem.mlp_dims", "needs >= 2 widths");
    if (problem.kind == "mlp" && !(problem.mlp.label_noise >= 0.0)) {
        throw ConfigError("problem.mlp_label_noise", "must be >= 0");
    }
    std::set<std::string> names;
    for (const auto& o : optimizers) {
        const std::string sec = "optimizer." + o.name;
        if (!names.insert(o.name).second) throw ConfigError(sec, "duplicate optimizer name");
        try {
            o.cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(sec, e.what());
        }
        const bool needs_h = o.cfg.kind == OptimizerKind::gd_optimal || o.cfg.kind == OptimizerKind::newton ||
                             o.cfg.kind == OptimizerKind::whitened_gd_optimal;
        if (needs_h && problem.kind != "quadratic") {
            throw ConfigError(sec + ".kind", to_string(o.cfg.kind) + " needs a quadratic problem");
        }
        const InitKind init = o.init == InitKind::shared ? problem.init : o.init;
        if (init == InitKind::adversarial && problem.kind != "quadratic") {
            throw ConfigError(sec + ".init", "adversarial init needs a quadratic problem");
        }
        if (o.tune && !(o.tune_lo > 0.0 && o.tune_hi > o.tune_lo)) {
            throw ConfigError(sec + ".tune_lo", "need 0 < tune_lo < tune_hi");
        }
        if (o.tune && o.tune_grid < 2) throw ConfigError(sec + ".tune_grid", "must be >= 2");
    }
    if (!speedup_baseline.empty() && !names.count(speedup_baseline)) {
        throw ConfigError("experiment.speedup_baseline", "no optimizer named '" + speedup_baseline + "'");
    }
}

ExperimentSpec parse_experiment(std::istream& in) {
    ExperimentSpec spec;
    std::string section;
    OptimizerSpec* current = nullptr;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            current = nullptr;
            if (section.rfind("optimizer.", 0) == 0) {
                const std::string name = section.substr(10);
                if (name.empty()) throw ConfigError(section, "optimizer section needs a name");
                for (const auto& o : spec.optimizers)
                    if (o.name == name) throw ConfigError(section, "duplicate optimizer section");
                spec.optimizers.push_back(OptimizerSpec{});
                spec.optimizers.back().name = name;
                current = &spec.optimizers.back();
            } else if (section != "experiment" && section != "problem") {
                throw ConfigError(section, "unknown section");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) throw ConfigError(key, "key outside of a section");
        const std::string full = section + "." + key;
        if (!seen.insert(full).second) throw ConfigError(full, "duplicate key");
        if (value.empty()) throw ConfigError(full, "missing value");
        if (section == "experiment") {
            if (!known(experiment_keys(), key)) throw ConfigError(full, "unknown key");
            apply_experiment_key(spec, key, full, value);
        } else if (section == "problem") {
            if (!known(problem_keys(), key)) throw ConfigError(full, "unknown key");
            apply_problem_key(spec.problem, key, full, value);
        } else {
            if (!known(optimizer_keys(), key)) throw ConfigError(full, "unknown key");
            apply_optimizer_key(*current, key, full, value);
        }
    }
    spec.validate();
    return spec;
}

ExperimentSpec parse_experiment_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    return parse_experiment(in);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_experiment(const ExperimentSpec& s) {
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "[experiment]\n"
       << "seed = " << s.seed << "\n"
       << "steps = " << s.steps << "\n"
       << "record_every = " << s.record_every << "\n"
       << "threshold = " << format_double(s.threshold) << "\n"
       << "stop_on_converge = " << b(s.stop_on_converge) << "\n"
       << "output = " << s.output << "\n"
       << "theory_checks = " << b(s.theory_checks) << "\n"
       << "kl_tracking = " << b(s.kl_tracking) << "\n";
    if (!s.speedup_baseline.empty()) os << "speedup_baseline = " << s.speedup_baseline << "\n";
    const ProblemSpec& p = s.problem;
    os << "\n[problem]\n"
       << "kind = " << p.kind << "\n"
       << "m = " << p.m << "\n"
       << "n = " << p.n << "\n"
       << "kappa = " << format_double(p.kappa) << "\n"
       << "c_scale = " << format_double(p.c_scale) << "\n"
       << "rastrigin_a = " << format_double(p.rastrigin_a) << "\n"
       << "mlp_dims = ";
    for (std::size_t i = 0; i < p.mlp.dims.size(); ++i) os << (i ? "," : "") << p.mlp.dims[i];
    os << "\n"
       << "mlp_batch_size = " << p.mlp.batch_size << "\n"
       << "mlp_label_noise = " << format_double(p.mlp.label_noise) << "\n"
       << "init = " << init_name(p.init) << "\n"
       << "init_scale = " << format_double(p.init_scale) << "\n";
    for (const auto& o : s.optimizers) {
        const OptimizerConfig& c = o.cfg;
        os << "\n[optimizer." << o.name << "]\n"
           << "kind = " << to_string(c.kind) << "\n"
           << "learning_rate = " << format_double(c.learning_rate) << "\n"
           << "adam_beta1 = " << format_double(c.adam_beta1) << "\n"
           << "adam_beta2 = " << format_double(c.adam_beta2) << "\n"
           << "adam_epsilon = " << format_double(c.adam_epsilon) << "\n"
           << "swan_rescale = " << b(c.swan_rescale) << "\n"
           << "gradnorm_subtract_mean = " << b(c.grad_norm_cfg.subtract_mean) << "\n"
           << "gradnorm_epsilon = " << format_double(c.grad_norm_cfg.epsilon) << "\n"
           << "whitening_mode = "
           << (c.whitening_cfg.mode == WhiteningMode::exact_eig ? "exact_eig" : "newton_schulz") << "\n"
           << "whitening_iterations = " << c.whitening_cfg.iterations << "\n"
           << "whitening_beta = " << format_double(c.whitening_cfg.beta) << "\n"
           << "whitening_order = " << (c.whitening_cfg.order == NsOrder::coupled ? "coupled" : "sequential")
           << "\n"
           << "whitening_pre_normalize = " << b(c.whitening_cfg.pre_normalize) << "\n"
           << "ablation = " << to_string(c.ablation) << "\n"
           << "schedule = "
           << (c.schedule.kind == ScheduleKind::constant ? "constant" : "linear_warmup_decay") << "\n"
           << "warmup_fraction = " << format_double(c.schedule.warmup_fraction) << "\n"
           << "final_fraction = " << format_double(c.schedule.final_fraction) << "\n"
           << "init = " << init_name(o.init) << "\n"
           << "tune = " << b(o.tune) << "\n"
           << "tune_lo = " << format_double(o.tune_lo) << "\n"
           << "tune_hi = " << format_double(o.tune_hi) << "\n"
           << "tune_grid = " << o.tune_grid << "\n"
           << "tune_refine = " << o.tune_refine << "\n";
    }
    return os.str();
}

std::uint64_t config_hash(const ExperimentSpec& spec) {
    // FNV-1a over the canonical text.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : format_experiment(spec)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::unique_ptr<Objective> make_objective(const ExperimentSpec& spec) {
    const ProblemSpec& p = spec.problem;
    if (p.kind == "quadratic") {
        Matrix h = make_spd(p.m, p.kappa, derive_seed(spec.seed, kTagHessian));
        Matrix c = p.c_scale != 0.0 ? gaussian(p.m, p.n, derive_seed(spec.seed, kTagLinear), p.c_scale)
                                    : Matrix(p.m, p.n);
        return std::make_unique<QuadraticObjective>(QuadraticProblem(std::move(h), std::move(c)));
    }
    if (p.kind == "rastrigin") return std::make_unique<RastriginObjective>(RastriginProblem(p.rastrigin_a, p.m));
    if (p.kind == "mlp") {
        MlpConfig mc = p.mlp;
        mc.teacher_seed = derive_seed(spec.seed, kTagTeacher);
        return std::make_unique<MlpObjective>(MlpProblem(mc), derive_seed(spec.seed, kTagBatch));
    }
    throw ConfigError("problem.kind", "unknown problem '" + p.kind + "'");
}

std::vector<Matrix> make_initial_point(const ExperimentSpec& spec, InitKind init) {
    const ProblemSpec& p = spec.problem;
    if (init == InitKind::shared) init = p.init;
    const std::uint64_t seed = derive_seed(spec.seed, kTagInit);
    std::vector<Matrix> w;
    if (p.kind == "mlp") {
        MlpConfig mc = p.mlp;
        mc.teacher_seed = derive_seed(spec.seed, kTagTeacher);
        w = MlpProblem(mc).init_weights(seed);
        for (auto& b : w) b *= p.init_scale;
    } else {
        const std::size_t n = p.kind == "rastrigin" ? p.m : p.n;
        w.push_back(gaussian(p.m, n, seed, p.init_scale));
    }
    if (init == InitKind::stiefel) {
        for (auto& b : w) b = apply_wide(b, exact_polar);
    } else if (init == InitKind::adversarial) {
        const auto obj = make_objective(spec);
        const auto* q = dynamic_cast<const QuadraticObjective*>(obj.get());
        if (!q) throw ConfigError("problem.init", "adversarial init needs a quadratic problem");
        w = {adversarial_gd_init(q->problem())};
    }
    return w;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const auto obj = make_objective(spec);
    auto run_one = [&](const OptimizerSpec& o) {
        const std::vector<Matrix> w0 = make_initial_point(spec, o.init);
        OptimizerConfig cfg = o.cfg;
        if (o.tune) {
            const TuneResult t = tune_learning_rate(
                [&](double eta) { return final_objective(*obj, w0, cfg, spec.steps, eta); }, o.tune_lo,
                o.tune_hi, o.tune_grid, o.tune_refine);
            if (t.eta > 0.0) cfg.learning_rate = t.eta;
        }
        RunOptions ro;
        ro.steps = spec.steps;
        ro.record_every = spec.record_every;
        ro.threshold = spec.threshold;
        ro.stop_on_converge = spec.stop_on_converge;
        ro.diagnostics = spec.theory_checks;
        RunResult r = run_trajectory(*obj, w0, cfg, ro, o.name);
        r.summary.tuned = o.tune;
        return r;
    };
    // Each optimizer owns its state; results are collected in spec order.
    const auto policy = std::thread::hardware_concurrency() > 1 ? std::launch::async : std::launch::deferred;
    std::vector<std::future<RunResult>> tasks;
    for (const auto& o : spec.optimizers) tasks.push_back(std::async(policy, run_one, std::cref(o)));
    ExperimentResult out;
    for (auto& t : tasks) out.runs.push_back(t.get());
    return out;
}

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
    os << "step,loss,loss_minus_opt,grad_fro,update_fro,eta,diag1,diag2\n";
    for (const auto& r : records) {
        os << r.step << ',' << format_double(r.loss) << ',' << format_double(r.loss_minus_opt) << ','
           << format_double(r.grad_fro) << ',' << format_double(r.update_fro) << ',' << format_double(r.eta)
           << ',' << format_double(r.diag1) << ',' << format_double(r.diag2) << '\n';
    }
}

namespace {

nlohmann::ordered_json num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

}  // namespace

void write_trajectory_json(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : records) {
        arr.push_back({{"step", r.step},
                       {"loss", num(r.loss)},
                       {"loss_minus_opt", num(r.loss_minus_opt)},
                       {"grad_fro", num(r.grad_fro)},
                       {"update_fro", num(r.update_fro)},
                       {"eta", num(r.eta)},
                       {"diag1", num(r.diag1)},
                       {"diag2", num(r.diag2)}});
    }
    os << arr.dump(1) << '\n';
}

std::string summary_json(const ExperimentSpec& spec, const ExperimentResult& result) {
    nlohmann::ordered_json j;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(spec)));
    j["seed"] = spec.seed;
    j["config_hash"] = hash;
    j["problem"] = spec.problem.kind;
    j["steps"] = spec.steps;
    j["threshold"] = spec.threshold;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (const auto& r : result.runs) {
        const RunSummary& s = r.summary;
        nlohmann::ordered_json e;
        e["name"] = s.name;
        e["optimizer"] = s.optimizer;
        e["status"] = to_string(s.status);
        e["converged"] = s.steps_to_threshold.has_value();
        e["diverged"] = s.status == RunStatus::diverged;
        if (!s.message.empty()) e["message"] = s.message;
        e["steps_run"] = s.steps_run;
        e["final_loss"] = num(s.final_loss);
        e["final_loss_minus_opt"] = s.final_loss_minus_opt ? num(*s.final_loss_minus_opt) : nullptr;
        e["final_relative_loss"] = s.final_relative_loss ? num(*s.final_relative_loss) : nullptr;
        e["steps_to_threshold"] = s.steps_to_threshold ? nlohmann::ordered_json(*s.steps_to_threshold) : nullptr;
        e["learning_rate"] = num(s.learning_rate);
        e["tuned"] = s.tuned;
        runs.push_back(e);
    }
    j["runs"] = runs;
    return j.dump(2) + "\n";
}

}  // namespace swan
