#pragma once

#include <functional>
#include <utility>
#include <vector>

namespace swan {

struct TuneResult {
    double eta = 0.0;
    double objective = 0.0;
    std::vector<std::pair<double, double>> evaluations;  // (eta, objective) in evaluation order
};

// Learning-rate search on a final-loss objective: a log-spaced grid over
// [lo, hi], then golden-section refinement in log(eta) between the grid
// neighbours of the best point. Non-finite objectives count as +inf.
TuneResult tune_learning_rate(const std::function<double(double)>& objective, double lo, double hi,
                              int grid_points = 10, int refine_evals = 10);

}  // namespace swan
