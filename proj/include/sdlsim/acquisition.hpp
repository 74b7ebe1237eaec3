#pragma once

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sdlsim/gp.hpp"

namespace sdlsim {

enum class StrategyKind { Random, EI, QNEI, ModeCycle };
enum class PendingPolicy { Fantasize, None };

struct StrategySpec {
    StrategyKind kind = StrategyKind::EI;
    int mc_samples = 128;                // QNEI
    std::vector<double> beta_schedule;   // ModeCycle; empty = delay preset
    int candidate_pool_size = 1024;
    int restarts = 8;
    PendingPolicy pending_policy = PendingPolicy::Fantasize;

    void validate() const;  // throws std::invalid_argument
    std::string name() const;
};

StrategyKind strategy_kind_from_name(const std::string& name);

// Beta schedules used with mode cycling, keyed on the conveyor delay:
// {0.25, 2.5, 25} up to delay 3, {0.1, 0.25, 1, 2.5, 25} up to delay 5,
// {0.1, 0.25, 0.5, 1, 2, 4, 10} beyond.
std::vector<double> mode_cycle_beta_preset(int delay);

// Deterministic mode cycle: UCB(beta_1) .. UCB(beta_k), then space-filling,
// with period k+1. Returns beta for UCB steps, or nullopt-like flag via
// is_space_fill.
struct CycleMode {
    bool is_space_fill = false;
    double beta = 0.0;
};
CycleMode mode_at_step(const std::vector<double>& beta_schedule, int step);

// Scalar EI with the sigma -> 0 limit max(mean - best_f, 0).
double ei_value(double mean, double sigma, double best_f);

double expected_improvement(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                            double best_f);

double ucb(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, double beta);

// Minimum Euclidean distance from x to any anchor. Throws on empty anchors.
double space_fill_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const std::vector<Eigen::VectorXd>& anchors);

// Monte-Carlo noisy EI. Draws one fixed base-sample set at construction so
// the acquisition surface is deterministic within an optimization pass.
// Improvement baseline is the sampled latent maximum over the model's
// training inputs (including any fantasized pending points).
class QneiEvaluator {
public:
    QneiEvaluator(const GpModel& model, int mc_samples, std::mt19937_64& rng);
    double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    const GpModel& model_;
    int mc_samples_;
    Eigen::MatrixXd train_cov_chol_;   // lower factor of posterior train cov
    Eigen::MatrixXd train_samples_;    // n x S latent draws at train points
    Eigen::VectorXd sample_max_;       // S, columnwise max of train_samples_
    Eigen::VectorXd train_mean_;       // n
    Eigen::VectorXd cand_base_;        // S base normals for the candidate
    Eigen::MatrixXd ky_inv_k_;         // (K+sn2 I)^-1 K, for cross covariances
};

// One-shot qNEI: applies kriging-believer conditioning on pending_x, then
// evaluates with a fresh base-sample set.
double qnei(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
            const std::vector<Eigen::VectorXd>& pending_x, int mc_samples,
            std::mt19937_64& rng);

// Everything propose() needs besides the strategy itself. All coordinates
// are in normalized [0,1]^d; best_f is the best revealed noisy observation
// in objective units.
struct ProposeContext {
    const GpModel* model = nullptr;  // null allowed for Random
    std::vector<Eigen::VectorXd> pending;
    std::vector<Eigen::VectorXd> revealed;
    double best_f = 0.0;
    int dim = 1;
    int step = 0;
    // Incremented when a flat acquisition forced the space-filling fallback.
    mutable long* flat_fallbacks = nullptr;
};

// Next candidate in [0,1]^d. Acquisition maximization scores a scrambled
// low-discrepancy pool and refines the top `restarts` by local pattern
// search; ties break toward the lowest candidate index.
Eigen::VectorXd propose(const StrategySpec& spec, const ProposeContext& ctx,
                        std::mt19937_64& rng);

// Generic maximizer over the unit cube, shared by all acquisition paths.
// Returns the best point; flat_out (optional) reports whether the pool
// scores were all within 1e-15 of each other.
Eigen::VectorXd maximize_on_cube(const std::function<double(const Eigen::VectorXd&)>& f, int dim,
                                 int pool_size, int restarts, std::mt19937_64& rng,
                                 bool* flat_out = nullptr);

}  // namespace sdlsim
