#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdlsim/gp.hpp"

namespace sdlsim {

enum class SurfaceKind { Ackley, Levy, Surrogate };

using Bounds = std::vector<std::pair<double, double>>;

// An objective to maximize. Ackley/Levy are negated so the global maximum is
// 0 at the raw minimizer; the surrogate objective is a frozen GP posterior
// mean. Immutable after construction, safe to share across trials.
struct ProblemSurface {
    SurfaceKind kind = SurfaceKind::Ackley;
    int dim = 1;
    Bounds bounds;
    double noise_std = 0.0;
    double global_max = 0.0;
    std::shared_ptr<const GpModel> surrogate;  // Surrogate only

    std::string kind_name() const;
};

struct ExperimentDataset {
    Eigen::MatrixXd x;  // n x d, original units
    Eigen::VectorXd y;
    Bounds bounds;
    int dim() const { return static_cast<int>(x.cols()); }
    int size() const { return static_cast<int>(x.rows()); }
};

// Raw test functions (minimization convention, value >= 0).
double ackley_raw(const Eigen::Ref<const Eigen::VectorXd>& x, double a = 20.0,
                  double b = 0.2, double c = 2.0 * M_PI);
double levy_raw(const Eigen::Ref<const Eigen::VectorXd>& x);

// Presets: noise_std 0.5, global_max 0, bounds [-32.768,32.768] / [-10,10].
ProblemSurface make_ackley(int dim);
ProblemSurface make_levy(int dim);

// Noise-free objective (maximization convention). Throws on out-of-bounds x.
double objective(const ProblemSurface& surface, const Eigen::Ref<const Eigen::VectorXd>& x);

// objective + Normal(0, noise_std^2) drawn from rng.
double evaluate_noisy(const ProblemSurface& surface, const Eigen::Ref<const Eigen::VectorXd>& x,
                      std::mt19937_64& rng);

// Fits a GP to the dataset (fixed noise, objective units^2), freezes it and
// wraps the posterior mean as a deterministic objective. global_max is found
// by multi-start maximization of the posterior mean.
ProblemSurface fit_surrogate_surface(const ExperimentDataset& data, double noise_variance,
                                     std::uint64_t seed = 0);

// Bounds from the 7-input coating process the surrogate models.
Bounds sdl_bounds();

// Deterministic 177-row 7-D dataset within sdl_bounds(), a stand-in for the
// unpublished experimental data: smooth bumps plus seeded Gaussian noise.
ExperimentDataset synthetic_sdl_standin(std::uint64_t seed);

// CSV ingestion: header row, d input columns then one target column.
// Malformed or out-of-bounds rows are rejected; their line numbers and
// reasons are appended to rejected_lines when non-null.
ExperimentDataset load_dataset_csv(const std::string& path, const Bounds& bounds,
                                   std::vector<std::string>* rejected_lines = nullptr);

// [0,1]^d <-> original-unit helpers.
Eigen::VectorXd normalize_point(const Bounds& bounds, const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXd denormalize_point(const Bounds& bounds, const Eigen::Ref<const Eigen::VectorXd>& u);
bool in_bounds(const Bounds& bounds, const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace sdlsim
