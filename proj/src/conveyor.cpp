#include "sdlsim/conveyor.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <stdexcept>

#include "sdlsim/rng.hpp"

namespace sdlsim {

void TrialConfig::validate() const {
    if (!surface) throw std::invalid_argument("TrialConfig: surface missing");
    if (delay < 0) throw std::invalid_argument("TrialConfig: delay must be >= 0");
    if (n_init < 1) throw std::invalid_argument("TrialConfig: n_init must be >= 1");
    if (budget < n_init + 1)
        throw std::invalid_argument("TrialConfig: budget must be >= n_init + 1");
    strategy.validate();
}

std::vector<Eigen::VectorXd> pending_at(const std::vector<Observation>& submitted,
                                        int revealed_count) {
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = revealed_count; i < submitted.size(); ++i)
        out.push_back(submitted[i].x);
    return out;
}

TrialRecord run_trial(const TrialConfig& config) {
    config.validate();
    const ProblemSurface& surface = *config.surface;
    const int d = surface.dim;
    const int n_init = config.n_init;
    const int budget = config.budget;
    const int delay = config.delay;
    const int n_bo = budget - n_init;

    StrategySpec strategy = config.strategy;
    if (strategy.kind == StrategyKind::ModeCycle && strategy.beta_schedule.empty())
        strategy.beta_schedule = mode_cycle_beta_preset(delay);

    // Independent streams: field (init points + noise), strategy, model fits.
    std::uint64_t s = config.seed;
    std::mt19937_64 field_rng = make_rng(splitmix64(s));
    std::mt19937_64 strat_rng = make_rng(splitmix64(s));
    const std::uint64_t fit_seed_base = splitmix64(s);

    TrialRecord record;
    record.surface_id = surface.kind_name() + "_d" + std::to_string(d);
    record.strategy_id = strategy.name();
    record.delay = delay;
    record.seed = config.seed;

    auto& obs = record.observations;
    obs.reserve(budget);

    // Phase 1: n_init uniform points, submitted, evaluated, all revealed
    // before optimization begins.
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < n_init; ++i) {
        Eigen::VectorXd u(d);
        for (int j = 0; j < d; ++j) u[j] = unif(field_rng);
        Eigen::VectorXd x = denormalize_point(surface.bounds, u);
        const double y = evaluate_noisy(surface, x, field_rng);
        obs.push_back({std::move(x), y, i, i});
    }
    int revealed = n_init;

    // Phase 2: the belt. Experiment with submit_index s becomes visible once
    // s + 1 + delay experiments have been submitted in total.
    for (int t = 0; t < n_bo; ++t) {
        const int total_submitted = n_init + t;
        while (revealed < static_cast<int>(obs.size()) &&
               obs[revealed].submit_index + 1 + delay <= total_submitted)
            ++revealed;
        assert(revealed == n_init + std::max(0, t - delay));

        std::vector<Eigen::VectorXd> pending_norm;
        for (int i = revealed; i < total_submitted; ++i)
            pending_norm.push_back(normalize_point(surface.bounds, obs[i].x));
        record.pending_sizes.push_back(static_cast<int>(pending_norm.size()));
        if (static_cast<int>(pending_norm.size()) > delay)
            throw std::logic_error("run_trial: pending set exceeds delay");

        Eigen::VectorXd u;
        if (strategy.kind == StrategyKind::Random) {
            ProposeContext ctx;
            ctx.dim = d;
            ctx.step = t;
            u = propose(strategy, ctx, strat_rng);
        } else {
            Eigen::MatrixXd train_x(revealed, d);
            Eigen::VectorXd train_y(revealed);
            double best_f = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < revealed; ++i) {
                train_x.row(i) = normalize_point(surface.bounds, obs[i].x);
                train_y[i] = obs[i].noisy_y;
                best_f = std::max(best_f, obs[i].noisy_y);
            }
            GpModel model =
                GpModel::fit(train_x, train_y, NoiseMode::Learned, 0.0, fit_seed_base + t);

            ProposeContext ctx;
            ctx.model = &model;
            ctx.pending = pending_norm;
            for (int i = 0; i < revealed; ++i)
                ctx.revealed.push_back(train_x.row(i).transpose());
            ctx.best_f = best_f;
            ctx.dim = d;
            ctx.step = t;
            ctx.flat_fallbacks = &record.flat_fallbacks;
            u = propose(strategy, ctx, strat_rng);
        }

        Eigen::VectorXd x = denormalize_point(surface.bounds, u);
        for (int j = 0; j < d; ++j)
            x[j] = std::clamp(x[j], surface.bounds[j].first, surface.bounds[j].second);
        const double y = evaluate_noisy(surface, x, field_rng);
        const int submit_index = n_init + t;
        const int reveal_index = std::min(submit_index + delay, budget - 1);
        obs.push_back({std::move(x), y, submit_index, reveal_index});
    }

    // Trailing pending results flush after the final submission; reveal
    // indices were already clamped to the last submission event.
    if (static_cast<int>(obs.size()) != budget)
        throw std::logic_error("run_trial: record length != budget");
    return record;
}

}  // namespace sdlsim
