#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdlsim/acquisition.hpp"
#include "sdlsim/metrics.hpp"
#include "sdlsim/surfaces.hpp"

namespace sdlsim {

struct SurfaceRequest {
    SurfaceKind kind = SurfaceKind::Ackley;
    std::vector<int> dims;  // Surrogate must be {7}
};

struct StudyConfig {
    std::vector<SurfaceRequest> surfaces;
    std::vector<int> delays;
    std::vector<StrategySpec> strategies;
    int n_trials = 30;
    int n_init = 10;
    int budget = 100;
    std::uint64_t base_seed = 0;
    std::string output_dir = "out";
    std::optional<std::string> sdl_dataset;  // CSV path; synthetic when absent
    bool require_real_data = false;
    double sdl_noise_variance = 2e5;
    RegretMode regret_mode = RegretMode::PerTrial;

    void validate() const;
    // Canonical serialization of every semantically meaningful field;
    // hashed into the manifest.
    std::string canonical_string() const;
};

struct StudyCell {
    std::string surface_name;
    int dim = 0;
    int delay = 0;
    std::string strategy_name;
    std::string id;  // "<surface>_d<dim>_delay<delay>_<strategy>"
    double global_max = 0.0;
};

struct CellResult {
    StudyCell cell;
    std::vector<TrialRecord> records;  // completed trials only
    std::vector<std::string> failures;
    bool complete() const { return failures.empty(); }
    CellSummary summary;
};

struct StudySummary {
    std::vector<CellResult> cells;
    std::uint64_t config_hash = 0;
};

// Per-trial seed derivation: base_seed XOR fnv1a(cell id) XOR trial index.
std::uint64_t trial_seed(std::uint64_t base_seed, const std::string& cell_id, int trial_index);

// Runs every (surface, dim, delay, strategy) cell for n_trials trials.
// Trials execute on up to `jobs` worker threads; output is ordered
// deterministically and identical for any job count. Failed trials are
// recorded per cell without aborting the study.
StudySummary run_study(const StudyConfig& config, int jobs = 1);

// Parses and validates a JSON study config. Unknown keys and invalid ranges
// raise std::runtime_error with key/line context.
StudyConfig parse_config(const std::string& path);
StudyConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

// Writes raw per-observation CSVs, per-cell running-best CSVs, the regret
// summary CSV and the manifest under output_dir. Full round-trip float
// precision throughout. On I/O failure, leaves an INCOMPLETE marker file.
void emit_results(const StudySummary& summary, const StudyConfig& config,
                  const std::string& output_dir);

int cli_main(int argc, char** argv);

}  // namespace sdlsim
