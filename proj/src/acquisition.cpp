#include "sdlsim/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sdlsim/sobol.hpp"

namespace sdlsim {

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

Eigen::VectorXd compass_refine(const std::function<double(const Eigen::VectorXd&)>& f,
                               Eigen::VectorXd x, double step = 0.0625, double min_step = 1e-4) {
    const int d = static_cast<int>(x.size());
    double fx = f(x);
    while (step >= min_step) {
        bool improved = false;
        for (int i = 0; i < d; ++i) {
            for (double sign : {1.0, -1.0}) {
                Eigen::VectorXd cand = x;
                cand[i] = std::clamp(cand[i] + sign * step, 0.0, 1.0);
                const double fc = f(cand);
                if (fc > fx) {
                    x = cand;
                    fx = fc;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
    }
    return x;
}

}  // namespace

void StrategySpec::validate() const {
    if (candidate_pool_size < 1)
        throw std::invalid_argument("StrategySpec: candidate_pool_size must be >= 1");
    if (restarts < 1) throw std::invalid_argument("StrategySpec: restarts must be >= 1");
    if (kind == StrategyKind::QNEI && mc_samples < 64)
        throw std::invalid_argument("StrategySpec: qNEI needs mc_samples >= 64");
    if (kind == StrategyKind::ModeCycle) {
        // Empty schedule is allowed at spec level (filled from the delay
        // preset at trial setup), but set betas must be positive.
        for (double b : beta_schedule)
            if (!(b > 0.0)) throw std::invalid_argument("StrategySpec: beta values must be > 0");
    }
}

std::string StrategySpec::name() const {
    switch (kind) {
        case StrategyKind::Random: return "random";
        case StrategyKind::EI: return "ei";
        case StrategyKind::QNEI: return "qnei";
        case StrategyKind::ModeCycle: return "modecycle";
    }
    return "unknown";
}

StrategyKind strategy_kind_from_name(const std::string& name) {
    if (name == "random") return StrategyKind::Random;
    if (name == "ei") return StrategyKind::EI;
    if (name == "qnei") return StrategyKind::QNEI;
    if (name == "modecycle" || name == "mode_cycle") return StrategyKind::ModeCycle;
    throw std::invalid_argument("unknown strategy: " + name);
}

std::vector<double> mode_cycle_beta_preset(int delay) {
    if (delay <= 3) return {0.25, 2.5, 25.0};
    if (delay <= 5) return {0.1, 0.25, 1.0, 2.5, 25.0};
    return {0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0};
}

CycleMode mode_at_step(const std::vector<double>& beta_schedule, int step) {
    if (beta_schedule.empty())
        throw std::invalid_argument("mode_at_step: empty beta schedule");
    const int period = static_cast<int>(beta_schedule.size()) + 1;
    const int pos = step % period;
    if (pos == static_cast<int>(beta_schedule.size())) return {true, 0.0};
    return {false, beta_schedule[pos]};
}

double ei_value(double mean, double sigma, double best_f) {
    if (sigma < 1e-12) return std::max(mean - best_f, 0.0);
    const double z = (mean - best_f) / sigma;
    return sigma * (z * normal_cdf(z) + normal_pdf(z));
}

double expected_improvement(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                            double best_f) {
    const auto pred = model.posterior(x);
    return ei_value(pred.mean, std::sqrt(pred.variance), best_f);
}

double ucb(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("ucb: beta must be > 0");
    const auto pred = model.posterior(x);
    return pred.mean + std::sqrt(beta) * std::sqrt(pred.variance);
}

double space_fill_score(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const std::vector<Eigen::VectorXd>& anchors) {
    if (anchors.empty()) throw std::invalid_argument("space_fill_score: empty anchor set");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : anchors) best = std::min(best, (x - a).norm());
    return best;
}

QneiEvaluator::QneiEvaluator(const GpModel& model, int mc_samples, std::mt19937_64& rng)
    : model_(model), mc_samples_(mc_samples) {
    const int n = model.size();
    if (n < 1) throw std::invalid_argument("QneiEvaluator: empty model");
    if (mc_samples < 1) throw std::invalid_argument("QneiEvaluator: mc_samples must be >= 1");

    // Posterior over the latent function at the training inputs.
    Eigen::MatrixXd cov;
    model.joint_posterior(model.train_x(), train_mean_, cov);
    cov.diagonal().array() += 1e-12 * std::max(1.0, cov.diagonal().mean());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("QneiEvaluator: train covariance not positive definite");
    train_cov_chol_ = llt.matrixL();

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(n, mc_samples);
    for (int j = 0; j < mc_samples; ++j)
        for (int i = 0; i < n; ++i) z(i, j) = normal(rng);
    cand_base_.resize(mc_samples);
    for (int j = 0; j < mc_samples; ++j) cand_base_[j] = normal(rng);

    train_samples_ = (train_cov_chol_ * z).colwise() + train_mean_;
    sample_max_ = train_samples_.colwise().maxCoeff();

    // (K + sn2 I)^-1 K over train points, for posterior cross covariances.
    Eigen::MatrixXd kf(n, n);
    for (int i = 0; i < n; ++i)
        kf.col(i) = model.kernel_cross(model.train_x().row(i).transpose());
    ky_inv_k_ = model.solve_ky(kf);
}

double QneiEvaluator::operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    // Joint posterior of (f(x), f(train)) sampled by conditioning f(x) on the
    // shared train draws; exact given the base samples.
    const auto pred = model_.posterior(x);
    const double scale2 = model_.y_scale() * model_.y_scale();
    Eigen::VectorXd kx = model_.kernel_cross(x);
    // Posterior cross-covariance in objective units.
    Eigen::VectorXd cross = scale2 * (kx - ky_inv_k_.transpose() * kx);

    Eigen::VectorXd w = train_cov_chol_.triangularView<Eigen::Lower>().solve(cross);
    double cond_var = pred.variance - w.squaredNorm();
    if (cond_var < 0.0) cond_var = 0.0;
    const double cond_sd = std::sqrt(cond_var);
    Eigen::VectorXd w_full =
        train_cov_chol_.transpose().triangularView<Eigen::Upper>().solve(w);

    double acc = 0.0;
    for (int s = 0; s < mc_samples_; ++s) {
        const double cond_mean =
            pred.mean + w_full.dot(train_samples_.col(s) - train_mean_);
        const double fx = cond_mean + cond_sd * cand_base_[s];
        acc += std::max(fx - sample_max_[s], 0.0);
    }
    return acc / mc_samples_;
}

double qnei(const GpModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
            const std::vector<Eigen::VectorXd>& pending_x, int mc_samples,
            std::mt19937_64& rng) {
    if (pending_x.empty()) return QneiEvaluator(model, mc_samples, rng)(x);
    GpModel cond = model.fantasize(pending_x);
    return QneiEvaluator(cond, mc_samples, rng)(x);
}

Eigen::VectorXd maximize_on_cube(const std::function<double(const Eigen::VectorXd&)>& f, int dim,
                                 int pool_size, int restarts, std::mt19937_64& rng,
                                 bool* flat_out) {
    Eigen::MatrixXd pool = sobol_pool(pool_size, dim, rng);
    Eigen::VectorXd scores(pool_size);
    for (int i = 0; i < pool_size; ++i) scores[i] = f(pool.row(i).transpose());

    if (flat_out)
        *flat_out = (scores.maxCoeff() - scores.minCoeff()) <= 1e-15;

    // Top `restarts` candidates by score; ties toward the lowest index.
    std::vector<int> order(pool_size);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });

    Eigen::VectorXd best_x = pool.row(order[0]).transpose();
    double best_score = scores[order[0]];
    const int n_refine = std::min(restarts, pool_size);
    for (int r = 0; r < n_refine; ++r) {
        Eigen::VectorXd x = compass_refine(f, pool.row(order[r]).transpose());
        const double fx = f(x);
        if (fx > best_score) {
            best_score = fx;
            best_x = x;
        }
    }
    return best_x;
}

Eigen::VectorXd propose(const StrategySpec& spec, const ProposeContext& ctx,
                        std::mt19937_64& rng) {
    spec.validate();
    const int d = ctx.dim;

    if (spec.kind == StrategyKind::Random) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x[i] = unif(rng);
        return x;
    }

    if (!ctx.model) throw std::invalid_argument("propose: strategy requires a fitted model");

    auto space_fill_anchors = [&]() {
        std::vector<Eigen::VectorXd> anchors = ctx.revealed;
        anchors.insert(anchors.end(), ctx.pending.begin(), ctx.pending.end());
        return anchors;
    };

    auto flat_fallback = [&]() -> Eigen::VectorXd {
        if (ctx.flat_fallbacks) ++(*ctx.flat_fallbacks);
        auto anchors = space_fill_anchors();
        if (anchors.empty()) {
            std::uniform_real_distribution<double> unif(0.0, 1.0);
            Eigen::VectorXd x(d);
            for (int i = 0; i < d; ++i) x[i] = unif(rng);
            return x;
        }
        return maximize_on_cube(
            [&](const Eigen::VectorXd& x) { return space_fill_score(x, anchors); }, d,
            spec.candidate_pool_size, spec.restarts, rng);
    };

    auto run = [&](const std::function<double(const Eigen::VectorXd&)>& acq) {
        bool flat = false;
        Eigen::VectorXd x = maximize_on_cube(acq, d, spec.candidate_pool_size, spec.restarts,
                                             rng, &flat);
        return flat ? flat_fallback() : x;
    };

    switch (spec.kind) {
        case StrategyKind::EI: {
            const bool mask = spec.pending_policy == PendingPolicy::Fantasize &&
                              !ctx.pending.empty();
            GpModel cond = mask ? ctx.model->fantasize(ctx.pending) : *ctx.model;
            return run([&](const Eigen::VectorXd& x) {
                return expected_improvement(cond, x, ctx.best_f);
            });
        }
        case StrategyKind::QNEI: {
            const bool mask = spec.pending_policy == PendingPolicy::Fantasize &&
                              !ctx.pending.empty();
            GpModel cond = mask ? ctx.model->fantasize(ctx.pending) : *ctx.model;
            QneiEvaluator acq(cond, spec.mc_samples, rng);
            return run([&](const Eigen::VectorXd& x) { return acq(x); });
        }
        case StrategyKind::ModeCycle: {
            const CycleMode mode = mode_at_step(spec.beta_schedule, ctx.step);
            if (mode.is_space_fill) {
                auto anchors = space_fill_anchors();
                if (anchors.empty()) return flat_fallback();
                return run([&](const Eigen::VectorXd& x) {
                    return space_fill_score(x, anchors);
                });
            }
            return run([&](const Eigen::VectorXd& x) {
                return ucb(*ctx.model, x, mode.beta);
            });
        }
        default:
            throw std::logic_error("propose: unhandled strategy");
    }
}

}  // namespace sdlsim
