#include "swan/tuning.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace swan {

TuneResult tune_learning_rate(const std::function<double(double)>& objective, double lo, double hi,
                              int grid_points, int refine_evals) {
    if (!(lo > 0.0 && hi > lo)) throw std::invalid_argument("tune: need 0 < lo < hi");
    if (grid_points < 2) throw std::invalid_argument("tune: grid_points must be >= 2");

    TuneResult r;
    r.objective = std::numeric_limits<double>::infinity();
    auto eval = [&](double log_eta) {
        const double eta = std::exp(log_eta);
        double v = objective(eta);
        if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
        r.evaluations.emplace_back(eta, v);
        if (v < r.objective) {
            r.objective = v;
            r.eta = eta;
        }
        return v;
    };

    const double a = std::log(lo);
    const double b = std::log(hi);
    std::vector<double> grid(grid_points);
    int best = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_points; ++i) {
        grid[i] = a + (b - a) * i / (grid_points - 1);
        const double v = eval(grid[i]);
        if (v < best_v) {
            best_v = v;
            best = i;
        }
    }
    if (!std::isfinite(best_v) || refine_evals < 2) return r;

    double left = grid[best > 0 ? best - 1 : 0];
    double right = grid[best + 1 < grid_points ? best + 1 : grid_points - 1];
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = right - g * (right - left);
    double d = left + g * (right - left);
    double fc = eval(c);
    double fd = eval(d);
    for (int k = 2; k < refine_evals; ++k) {
        if (fc <= fd) {
            right = d;
            d = c;
            fd = fc;
            c = right - g * (right - left);
            fc = eval(c);
        } else {
            left = c;
            c = d;
            fc = fd;
            d = left + g * (right - left);
            fd = eval(d);
        }
    }
    return r;
}

}  // namespace swan
