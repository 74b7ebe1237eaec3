#pragma once

#include <vector>

#include "sdlsim/conveyor.hpp"

namespace sdlsim {

// Element t = max of noisy_y over observations 0..t, submit order.
std::vector<double> running_best(const TrialRecord& record);

// Sum over observation indices of (global_max - running_best[t]). Terms may
// go negative when noise pushes the running best above global_max; no
// clamping.
double cumulative_regret(const TrialRecord& record, double global_max);

enum class RegretMode {
    PerTrial,   // mean/std over per-trial regrets
    MeanCurve,  // regret of the cross-trial mean running-best curve
};

struct CellSummary {
    std::vector<double> best_mean;  // length budget
    std::vector<double> best_std;
    std::vector<double> regrets;  // per trial
    double regret_mean = 0.0;
    double regret_std = 0.0;  // n-1 denominator; 0 for a single trial
    int n_trials = 0;
};

// Pointwise mean/std of running-best series plus regret statistics.
// Throws on an empty record list or mismatched budgets.
CellSummary aggregate(const std::vector<TrialRecord>& records, double global_max,
                      RegretMode mode = RegretMode::PerTrial);

}  // namespace sdlsim
