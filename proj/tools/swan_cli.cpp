#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "swan/analysis.hpp"
#include "swan/harness.hpp"
#include "swan/rng.hpp"
#include "swan/theory.hpp"

namespace fs = std::filesystem;
using namespace swan;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string format = "csv";
    bool quiet = false;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) { rows.push_back(std::move(r)); }
};

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "nan"; }

std::ofstream open_out(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    const fs::path p = fs::path(g.out_dir) / name;
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    return os;
}

void write_table(const Globals& g, const std::string& stem, const Table& t) {
    std::ofstream os = open_out(g, stem + "." + g.format);
    if (g.format == "json") {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& r : t.rows) {
            nlohmann::ordered_json o;
            for (std::size_t i = 0; i < t.header.size(); ++i) o[t.header[i]] = r[i];
            arr.push_back(o);
        }
        os << arr.dump(1) << '\n';
    } else {
        for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
        os << '\n';
        for (const auto& r : t.rows) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << '\n';
        }
    }
}

void print_table(const Table& t) {
    std::vector<std::size_t> w(t.header.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = t.header[i].size();
    for (const auto& r : t.rows)
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::cout << (i ? "  " : "") << r[i] << std::string(w[i] - r[i].size(), ' ');
        }
        std::cout << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) line(r);
}

std::string short_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---- experiment runs -------------------------------------------------------

void write_experiment(const Globals& g, const ExperimentSpec& spec, const ExperimentResult& res) {
    for (const auto& r : res.runs) {
        std::ofstream os = open_out(g, spec.output + "_" + r.summary.name + "." + g.format);
        if (g.format == "json") write_trajectory_json(os, r.records);
        else write_trajectory_csv(os, r.records);
    }
    std::ofstream os = open_out(g, spec.output + "_summary.json");
    os << summary_json(spec, res);
}

void print_summary(const ExperimentSpec& spec, const ExperimentResult& res) {
    Table t{{"name", "optimizer", "status", "steps", "lr", "final_loss", "relative", "steps_to_thr"}, {}};
    std::optional<long> base;
    for (const auto& r : res.runs)
        if (r.summary.name == spec.speedup_baseline) base = r.summary.steps_to_threshold;
    if (!spec.speedup_baseline.empty()) t.header.push_back("speedup");
    for (const auto& r : res.runs) {
        const RunSummary& s = r.summary;
        std::vector<std::string> row{s.name,
                                     s.optimizer,
                                     to_string(s.status),
                                     std::to_string(s.steps_run),
                                     short_double(s.learning_rate),
                                     short_double(s.final_loss),
                                     s.final_relative_loss ? short_double(*s.final_relative_loss) : "-",
                                     s.steps_to_threshold ? std::to_string(*s.steps_to_threshold) : "-"};
        if (!spec.speedup_baseline.empty()) {
            row.push_back(base && s.steps_to_threshold && *s.steps_to_threshold > 0
                              ? short_double(static_cast<double>(*base) / static_cast<double>(*s.steps_to_threshold))
                              : "-");
        }
        t.add(row);
    }
    print_table(t);
}

void write_kl(const Globals& g, const std::string& stem, const KlTrackingResult& r) {
    Table t{{"step", "kl_raw", "kl_gradnorm", "train_loss"}, {}};
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        t.add({std::to_string(r.steps[i]), format_double(r.kl_raw[i]), format_double(r.kl_gradnorm[i]),
               format_double(r.train_loss[i])});
    }
    write_table(g, stem, t);
}

int run_spec(const Globals& g, const ExperimentSpec& spec) {
    const ExperimentResult res = run_experiment(spec);
    write_experiment(g, spec, res);
    if (spec.kl_tracking && spec.problem.kind == "mlp") {
        KlTrackingConfig kc;
        kc.mlp = spec.problem.mlp;
        kc.mlp.teacher_seed = derive_seed(spec.seed, 5);
        kc.seed = spec.seed;
        kc.steps = spec.steps;
        const KlTrackingResult kr = track_gradient_kl(kc);
        write_kl(g, spec.output + "_kl", kr);
        if (!g.quiet) {
            std::cout << "mean KL raw " << short_double(kr.mean_kl_raw) << ", gradnorm "
                      << short_double(kr.mean_kl_gradnorm) << '\n';
        }
    }
    if (!g.quiet) print_summary(spec, res);
    return 0;
}

OptimizerSpec named(const std::string& name, OptimizerKind kind, double lr = 1e-3) {
    OptimizerSpec o;
    o.name = name;
    o.cfg.kind = kind;
    o.cfg.learning_rate = lr;
    return o;
}

OptimizerSpec tuned(OptimizerSpec o, double lo, double hi) {
    o.tune = true;
    o.tune_lo = lo;
    o.tune_hi = hi;
    return o;
}

OptimizerSpec whitened_swan(const std::string& name) {
    OptimizerSpec o = named(name, OptimizerKind::swan);
    o.cfg.ablation = Ablation::whiten_only;
    o.cfg.whitening_cfg.mode = WhiteningMode::exact_eig;
    o.cfg.swan_rescale = false;
    return o;
}

// ---- theory suites ---------------------------------------------------------

QuadraticProblem random_quadratic(std::size_t m, std::size_t n, double kappa, std::uint64_t seed) {
    return QuadraticProblem(make_spd(m, kappa, derive_seed(seed, 1)), gaussian(m, n, derive_seed(seed, 2)));
}

int run_theory(const Globals& g) {
    int failures = 0;
    auto report = [&](const std::string& suite, bool ok, const std::string& detail) {
        if (!ok) ++failures;
        if (!g.quiet) std::cout << (ok ? "ok    " : "FAIL  ") << suite << "  " << detail << '\n';
    };

    {
        Table t{{"m", "instance", "kappa", "predicted", "measured", "abs_error"}, {}};
        double worst = 0.0;
        int k = 0;
        for (std::size_t m : {4, 20, 50}) {
            for (int i = 0; i < 17; ++i, ++k) {
                const std::uint64_t s = derive_seed(g.seed, 0x636f6e74, k);
                const double kappa = std::pow(10.0, 1.0 + 3.0 * Rng(s, 3).uniform());
                const QuadraticProblem p = random_quadratic(m, m, kappa, s);
                const Matrix w = gaussian(m, m, derive_seed(s, 4));
                const ContractionReport r = whitened_contraction_report(p, w);
                worst = std::max(worst, r.abs_error);
                t.add({std::to_string(m), std::to_string(i), format_double(kappa), format_double(r.predicted_factor),
                       format_double(r.measured_factor), format_double(r.abs_error)});
            }
        }
        write_table(g, "theory_contraction", t);
        report("contraction", worst <= 1e-8, "max |predicted - measured| = " + short_double(worst));
    }

    {
        Table t{{"instance", "kappa", "relative_loss"}, {}};
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            const std::uint64_t s = derive_seed(g.seed, 0x7374, i);
            const double kappa = i % 2 ? 1e4 : 10.0;
            const QuadraticProblem p = random_quadratic(50, 50, kappa, s);
            const Matrix w0 = sample_stiefel(50, 50, derive_seed(s, 5)) + p.w_star();
            const Matrix w1 = whitened_gd_optimal_step(w0 - p.w_star(), p.h()) + p.w_star();
            const double rel = p.loss_minus_opt(w1) / p.loss_minus_opt(w0);
            worst = std::max(worst, rel);
            t.add({std::to_string(i), format_double(kappa), format_double(rel)});
        }
        write_table(g, "theory_stiefel", t);
        report("stiefel_one_step", worst <= 1e-10, "max relative loss = " + short_double(worst));
    }

    {
        Table t{{"kappa", "bound", "measured", "squared_bound"}, {}};
        bool ok = true;
        for (double kappa : {10.0, 100.0, 1e4}) {
            std::vector<double> d(20);
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] = std::pow(kappa, static_cast<double>(i) / static_cast<double>(d.size() - 1));
            }
            d.back() = kappa;
            const QuadraticProblem p = QuadraticProblem::homogeneous(Matrix::diag(d), 5);
            const ContractionReport r = gd_contraction_report(p, adversarial_gd_init(p));
            const double sq = std::pow((kappa - 1.0) / (kappa + 1.0), 2);
            ok = ok && std::fabs(r.measured_factor - sq) <= 1e-9;
            t.add({format_double(kappa), format_double(r.predicted_factor), format_double(r.measured_factor),
                   format_double(sq)});
        }
        write_table(g, "theory_gd_bound", t);
        report("gd_tightness", ok, "measured equals ((k-1)/(k+1))^2");
    }

    {
        Table t{{"instance", "kappa", "preconditioned_kappa", "adam_bound", "gd_bound"}, {}};
        for (int i = 0; i < 5; ++i) {
            const std::uint64_t s = derive_seed(g.seed, 0x6164, i);
            const QuadraticProblem p = QuadraticProblem::homogeneous(make_spd(8, 100.0, s), 4);
            const Matrix w0 = gaussian(8, 4, derive_seed(s, 6));
            t.add({std::to_string(i), "100", format_double(preconditioned_condition_number(p, w0)),
                   format_double(predict_adam_bound(p, w0)), format_double(predict_gd_bound(100.0))});
        }
        write_table(g, "theory_adam_bound", t);
        report("adam_bound", true, "written");
    }

    {
        Table t{{"kappa", "q"}, {}};
        double floor = 0.0;
        bool ok = true;
        for (double kappa : {1e1, 1e2, 1e4, 1e6}) {
            const QuadraticProblem p = QuadraticProblem::homogeneous(make_spd(20, kappa, derive_seed(g.seed, 0x71)), 20);
            const double q = robustness_q(p, Matrix::identity(20));
            if (kappa == 1e1) floor = 0.5 * q;
            ok = ok && q > floor && q <= 1.0 + 1e-12;
            t.add({format_double(kappa), format_double(q)});
        }
        write_table(g, "theory_robustness", t);
        report("robustness_q", ok, "Q stays above half its kappa=10 value");
    }

    {
        Table t{{"seed", "block", "global_eta", "whitened_factor", "adam_factor", "adam_eta"}, {}};
        bool ok = true;
        for (int i = 0; i < 5; ++i) {
            const std::uint64_t s = derive_seed(g.seed, 0x626c, i);
            const std::vector<Matrix> h{make_spd(20, 1e4, derive_seed(s, 1)), make_spd(20, 1e4, derive_seed(s, 2))};
            const BlockwiseComparison c = compare_blockwise(h, gaussian(40, 20, derive_seed(s, 3)));
            for (const auto& b : c.blocks) {
                ok = ok && b.whitened_factor < b.adam_factor;
                t.add({std::to_string(i), std::to_string(b.block), format_double(c.global_eta),
                       format_double(b.whitened_factor), format_double(b.adam_factor), format_double(b.adam_eta)});
            }
        }
        write_table(g, "theory_blockwise", t);
        report("blockwise", ok, "whitened factor below tuned Adam in every block");
    }
    if (!g.quiet) std::cout << "reports written to " << g.out_dir << '\n';
    return failures == 0 ? 0 : 2;
}

// ---- ns-bench --------------------------------------------------------------

int run_ns_bench(const Globals& g, const std::vector<double>& betas, const std::vector<int>& ks,
                 const std::vector<double>& kappas, const std::string& order_name, int trials) {
    NsOrder order;
    if (order_name == "coupled") order = NsOrder::coupled;
    else if (order_name == "sequential") order = NsOrder::sequential;
    else throw ConfigError("--order", "expected coupled or sequential");
    Table t{{"beta", "k", "order", "kappa", "max_error", "mean_error", "error_le_1e-6"}, {}};
    for (double beta : betas) {
        for (int k : ks) {
            for (double kappa : kappas) {
                WhiteningConfig wc;
                wc.beta = beta;
                wc.iterations = k;
                wc.order = order;
                wc.validate();
                double worst = 0.0;
                double sum = 0.0;
                for (int i = 0; i < trials; ++i) {
                    const std::uint64_t s = derive_seed(g.seed, 0x6e73, i);
                    std::vector<double> sv(16);
                    for (std::size_t j = 0; j < sv.size(); ++j) {
                        sv[j] = std::pow(kappa, -0.5 * static_cast<double>(j) / static_cast<double>(sv.size() - 1));
                    }
                    const Matrix gm = with_singular_values(32, sv, s);
                    const double err = frobenius_norm(grad_whitening(gm, wc) - exact_polar(gm));
                    worst = std::max(worst, std::isfinite(err) ? err : INFINITY);
                    sum += err;
                }
                t.add({short_double(beta), std::to_string(k), order_name, short_double(kappa), format_double(worst),
                       format_double(sum / trials), worst <= 1e-6 ? "yes" : "no"});
            }
        }
    }
    write_table(g, "ns_bench", t);
    if (!g.quiet) print_table(t);
    return 0;
}

// ---- speedup ---------------------------------------------------------------

PplCurve read_curve(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::vector<CurvePoint> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
            throw ConfigError(path, "expected 'step,metric' rows");
        }
        try {
            pts.push_back({std::stod(a), std::stod(b)});
        } catch (const std::exception&) {
            if (!pts.empty()) throw ConfigError(path, "non-numeric row '" + line + "'");
        }
    }
    try {
        return PplCurve(std::move(pts));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

int run_speedup(const Globals& g, const std::string& a_path, const std::string& b_path, double lo, double hi) {
    const PplCurve adam = read_curve(a_path);
    const PplCurve swan = read_curve(b_path);
    const std::vector<double> th = default_thresholds(adam, swan);
    const auto ratios = speedup_ratio(adam, swan, th);
    const CounterfactualResult cf = counterfactual_additive(adam, swan, th, {lo, hi});
    Table t{{"threshold", "s_a", "s_b", "ratio", "r_additive"}, {}};
    for (std::size_t i = 0; i < th.size(); ++i) {
        t.add({format_double(th[i]), opt_str(ratios[i].s_adam), opt_str(ratios[i].s_swan), opt_str(ratios[i].ratio),
               opt_str(cf.entries[i].r_additive)});
    }
    write_table(g, "speedup", t);
    Table c{{"step", "metric_additive"}, {}};
    for (const auto& p : cf.ppl_additive.points()) c.add({format_double(p.step), format_double(p.metric)});
    write_table(g, "speedup_additive_curve", c);
    if (!g.quiet) {
        print_table(t);
        std::cout << "delta = " << format_double(cf.delta) << " over " << cf.window_count << " thresholds\n";
    }
    return 0;
}

// ---- stb -------------------------------------------------------------------

int run_stb(const Globals& g, const StbConfig& cfg, long record_every) {
    StbConfig c = cfg;
    c.mu_seed = derive_seed(g.seed, 0x6d75);
    const StbSystem sys(c);
    const Matrix v0 = gaussian(c.context_len, c.n, derive_seed(g.seed, 0x7630), 0.1);
    const StbTrajectory tr = stb_integrate_until_overflow(sys, v0, derive_seed(g.seed, 0x6e6f), record_every);
    Table t{{"step", "block_spread", "max_abs_state"}, {}};
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        t.add({std::to_string(tr.steps[i]), format_double(normalized_block_spread(sys.diagonal_blocks(tr.states[i]))),
               format_double(max_abs(tr.states[i]))});
    }
    write_table(g, "stb", t);
    if (!g.quiet) {
        std::cout << "last finite step " << tr.last_finite_step << ", block spread "
                  << short_double(normalized_block_spread(sys.diagonal_blocks(tr.last_finite))) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stateless optimizer experiments"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
    app.add_option("--format", g.format, "Trajectory format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    app.add_flag("--quiet", g.quiet, "Suppress console output");
    app.fallthrough();

    std::string config;
    auto* run = app.add_subcommand("run", "Run an experiment config file");
    run->add_option("config", config, "Config path")->required();

    std::size_t qm = 50;
    double qkappa = 1e4;
    long qsteps = 500;
    auto* quad = app.add_subcommand("quadratic", "Compare methods on a random quadratic");
    quad->add_option("--m", qm)->capture_default_str();
    quad->add_option("--kappa", qkappa)->capture_default_str();
    quad->add_option("--steps", qsteps)->capture_default_str();

    std::size_t rm = 50;
    double ra = 10.0;
    long rsteps = 2000;
    auto* rast = app.add_subcommand("rastrigin", "Compare methods on the matrix Rastrigin function");
    rast->add_option("--m", rm)->capture_default_str();
    rast->add_option("--a", ra)->capture_default_str();
    rast->add_option("--steps", rsteps)->capture_default_str();

    KlTrackingConfig kc;
    auto* kl = app.add_subcommand("mlp-kl", "Track gradient-distribution KL during MLP training");
    kl->add_option("--steps", kc.steps)->capture_default_str();
    kl->add_option("--lr", kc.learning_rate)->capture_default_str();
    kl->add_option("--label-noise", kc.mlp.label_noise)->capture_default_str();
    kl->add_option("--snapshot-every", kc.snapshot_every)->capture_default_str();

    StbConfig sc;
    long stb_every = 100;
    auto* stb = app.add_subcommand("stb", "Integrate the STB dynamics and report Hessian block structure");
    stb->add_option("--n", sc.n)->capture_default_str();
    stb->add_option("--context", sc.context_len)->capture_default_str();
    stb->add_option("--dt", sc.dt)->capture_default_str();
    stb->add_option("--noise", sc.noise_std)->capture_default_str();
    stb->add_option("--record-every", stb_every)->capture_default_str();

    std::vector<double> betas{0.5, 0.8};
    std::vector<int> ks{10, 40};
    std::vector<double> kappas{10.0, 100.0, 1000.0};
    std::string order = "coupled";
    int trials = 50;
    auto* ns = app.add_subcommand("ns-bench", "Newton-Schulz accuracy against the exact polar factor");
    ns->add_option("--beta", betas)->capture_default_str();
    ns->add_option("--k", ks)->capture_default_str();
    ns->add_option("--kappa", kappas, "Condition numbers of G G^T")->capture_default_str();
    ns->add_option("--order", order)->check(CLI::IsMember({"coupled", "sequential"}))->capture_default_str();
    ns->add_option("--trials", trials)->check(CLI::PositiveNumber)->capture_default_str();

    auto* theory = app.add_subcommand("theory", "Run the theory-check suites and write reports");

    std::string curve_a, curve_b;
    double win_lo = 0.10, win_hi = 0.20;
    auto* sp = app.add_subcommand("speedup", "Speedup ratios between two step,metric curves");
    sp->add_option("curve_a", curve_a, "Baseline curve")->required();
    sp->add_option("curve_b", curve_b, "Compared curve")->required();
    sp->add_option("--window-lo", win_lo)->capture_default_str();
    sp->add_option("--window-hi", win_hi)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*run) {
            ExperimentSpec spec = parse_experiment_file(config);
            if (app.get_option("--seed")->count()) spec.seed = g.seed;
            return run_spec(g, spec);
        }
        if (*quad) {
            ExperimentSpec spec;
            spec.seed = g.seed;
            spec.steps = qsteps;
            spec.output = "quadratic";
            spec.problem.m = spec.problem.n = qm;
            spec.problem.kappa = qkappa;
            OptimizerSpec stiefel = named("whitened_stiefel", OptimizerKind::whitened_gd_optimal);
            stiefel.init = InitKind::stiefel;
            spec.optimizers = {named("gd", OptimizerKind::gd_optimal),
                               tuned(named("adam", OptimizerKind::adam), 1e-4, 10.0),
                               tuned(named("newton", OptimizerKind::newton), 1e-2, 1.0),
                               named("whitened", OptimizerKind::whitened_gd_optimal), stiefel};
            spec.speedup_baseline = "gd";
            spec.validate();
            return run_spec(g, spec);
        }
        if (*rast) {
            ExperimentSpec spec;
            spec.seed = g.seed;
            spec.steps = rsteps;
            spec.output = "rastrigin";
            spec.problem.kind = "rastrigin";
            spec.problem.m = spec.problem.n = rm;
            spec.problem.rastrigin_a = ra;
            OptimizerSpec stiefel = tuned(whitened_swan("whitened_stiefel"), 1e-3, 10.0);
            stiefel.init = InitKind::stiefel;
            spec.optimizers = {tuned(named("gd", OptimizerKind::sgd), 1e-4, 1.0),
                               tuned(named("adam", OptimizerKind::adam), 1e-4, 10.0),
                               tuned(whitened_swan("whitened"), 1e-3, 10.0), stiefel};
            spec.validate();
            return run_spec(g, spec);
        }
        if (*kl) {
            kc.seed = g.seed;
            const KlTrackingResult r = track_gradient_kl(kc);
            write_kl(g, "mlp_kl", r);
            if (!g.quiet) {
                std::cout << "mean KL raw " << format_double(r.mean_kl_raw) << "\nmean KL gradnorm "
                          << format_double(r.mean_kl_gradnorm) << '\n';
            }
            return 0;
        }
        if (*stb) return run_stb(g, sc, stb_every);
        if (*ns) return run_ns_bench(g, betas, ks, kappas, order, trials);
        if (*theory) return run_theory(g);
        if (*sp) return run_speedup(g, curve_a, curve_b, win_lo, win_hi);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
