#include "sdlsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdlsim {

std::vector<double> running_best(const TrialRecord& record) {
    if (record.observations.empty())
        throw std::invalid_argument("running_best: empty record");
    std::vector<double> out;
    out.reserve(record.observations.size());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& o : record.observations) {
        best = std::max(best, o.noisy_y);
        out.push_back(best);
    }
    return out;
}

double cumulative_regret(const TrialRecord& record, double global_max) {
    double total = 0.0;
    for (double b : running_best(record)) total += global_max - b;
    return total;
}

CellSummary aggregate(const std::vector<TrialRecord>& records, double global_max,
                      RegretMode mode) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    const std::size_t budget = records.front().observations.size();
    for (const auto& r : records)
        if (r.observations.size() != budget)
            throw std::invalid_argument("aggregate: mismatched budgets");

    const int n = static_cast<int>(records.size());
    CellSummary cell;
    cell.n_trials = n;
    cell.best_mean.assign(budget, 0.0);
    cell.best_std.assign(budget, 0.0);

    std::vector<std::vector<double>> curves;
    curves.reserve(n);
    for (const auto& r : records) {
        curves.push_back(running_best(r));
        cell.regrets.push_back(cumulative_regret(r, global_max));
    }
    for (std::size_t t = 0; t < budget; ++t) {
        double m = 0.0;
        for (const auto& c : curves) m += c[t];
        m /= n;
        cell.best_mean[t] = m;
        if (n > 1) {
            double ss = 0.0;
            for (const auto& c : curves) ss += (c[t] - m) * (c[t] - m);
            cell.best_std[t] = std::sqrt(ss / (n - 1));
        }
    }

    if (mode == RegretMode::MeanCurve) {
        double total = 0.0;
        for (double m : cell.best_mean) total += global_max - m;
        cell.regret_mean = total;
        cell.regret_std = 0.0;
    } else {
        double m = 0.0;
        for (double r : cell.regrets) m += r;
        m /= n;
        cell.regret_mean = m;
        if (n > 1) {
            double ss = 0.0;
            for (double r : cell.regrets) ss += (r - m) * (r - m);
            cell.regret_std = std::sqrt(ss / (n - 1));
        }
    }
    return cell;
}

}  // namespace sdlsim
