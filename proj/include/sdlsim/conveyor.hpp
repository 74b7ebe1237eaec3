#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sdlsim/acquisition.hpp"
#include "sdlsim/surfaces.hpp"

namespace sdlsim {

// One completed (or eventually revealed) experiment on the belt.
struct Observation {
    Eigen::VectorXd x;  // original units
    double noisy_y = 0.0;
    int submit_index = 0;
    int reveal_index = 0;  // index of the submission event that revealed it
};

struct TrialConfig {
    const ProblemSurface* surface = nullptr;
    StrategySpec strategy;
    int delay = 0;
    int n_init = 10;
    int budget = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrialRecord {
    std::vector<Observation> observations;  // exactly budget entries, submit order
    std::vector<int> pending_sizes;         // per BO step, at proposal time
    std::string surface_id;
    std::string strategy_id;
    int delay = 0;
    std::uint64_t seed = 0;
    long flat_fallbacks = 0;
};

// Runs one seeded trial. Phase 1 submits and reveals n_init uniform points;
// phase 2 runs budget - n_init BO steps against the delay queue: the
// experiment with submit_index s becomes visible once s + 1 + delay
// experiments have been submitted in total (FIFO reveal order). Remaining
// pending results flush into the record after the final submission.
TrialRecord run_trial(const TrialConfig& config);

// Pending inputs of a partially revealed record prefix, in submit order.
// Exposed mainly for queue-shape verification.
std::vector<Eigen::VectorXd> pending_at(const std::vector<Observation>& submitted,
                                        int revealed_count);

}  // namespace sdlsim
