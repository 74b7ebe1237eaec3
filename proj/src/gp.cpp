#include "sdlsim/gp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sdlsim/rng.hpp"

namespace sdlsim {

namespace {

constexpr double kLogLengthscaleMin = -6.907755278982137;   // log 1e-3
constexpr double kLogLengthscaleMax = 6.907755278982137;    // log 1e3
constexpr double kLogVarianceMin = -13.815510557964274;     // log 1e-6
constexpr double kLogVarianceMax = 13.815510557964274;      // log 1e6
constexpr double kSqrt5 = 2.23606797749978969;

double matern52_from_r(double r) {
    const double s = kSqrt5 * r;
    return (1.0 + s + (5.0 / 3.0) * r * r) * std::exp(-s);
}

// Scaled distance matrix r_ij = sqrt(sum_k ((x_ik - x_jk)/l_k)^2).
Eigen::MatrixXd scaled_distances(const Eigen::MatrixXd& x, const Eigen::VectorXd& ls) {
    const int n = static_cast<int>(x.rows());
    Eigen::MatrixXd xs = x.array().rowwise() / ls.transpose().array();
    Eigen::VectorXd sq = xs.rowwise().squaredNorm();
    Eigen::MatrixXd r2 = sq.replicate(1, n) + sq.transpose().replicate(n, 1) -
                         2.0 * xs * xs.transpose();
    return r2.cwiseMax(0.0).cwiseSqrt();
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, const GpModel::Hyperparams& hp) {
    Eigen::MatrixXd r = scaled_distances(x, hp.lengthscales);
    Eigen::MatrixXd k = (kSqrt5 * r).array() * (-1.0);
    k = k.array().exp() *
        (1.0 + kSqrt5 * r.array() + (5.0 / 3.0) * r.array().square()) * hp.signal_variance;
    return k;
}

struct CholResult {
    Eigen::MatrixXd chol;  // lower
    double jitter = 0.0;
    int escalations = 0;
    bool ok = false;
};

// Escalating-jitter Cholesky: starts at 1e-10 * mean(diag), multiplies by 10
// up to 1e-4 * mean(diag).
CholResult jittered_cholesky(const Eigen::MatrixXd& a) {
    CholResult res;
    const double mean_diag = a.diagonal().mean();
    double jitter = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::MatrixXd m = a;
        if (jitter > 0.0) m.diagonal().array() += jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() == Eigen::Success) {
            res.chol = llt.matrixL();
            res.jitter = jitter;
            res.ok = true;
            return res;
        }
        jitter = (jitter == 0.0) ? 1e-10 * mean_diag : jitter * 10.0;
        ++res.escalations;
        if (jitter > 1e-4 * mean_diag) break;
    }
    return res;
}

// Negative log marginal likelihood and its gradient in
// theta = [log l_1..d, log s2, (log n2 when learned)].
struct MllObjective {
    const Eigen::MatrixXd& x;
    const Eigen::VectorXd& y;  // standardized
    bool learn_noise;
    double fixed_noise;  // standardized units, used when !learn_noise

    int n_params() const { return static_cast<int>(x.cols()) + (learn_noise ? 2 : 1); }

    GpModel::Hyperparams unpack(const Eigen::VectorXd& theta) const {
        const int d = static_cast<int>(x.cols());
        GpModel::Hyperparams hp;
        hp.lengthscales = theta.head(d).array().exp();
        hp.signal_variance = std::exp(theta[d]);
        hp.noise_variance = learn_noise ? std::exp(theta[d + 1]) : fixed_noise;
        return hp;
    }

    // Returns negative MLL; fills grad with its gradient. Non-PD kernels
    // after maximum jitter surface as +inf so the line search rejects them.
    double eval(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
        const int n = static_cast<int>(x.rows());
        const int d = static_cast<int>(x.cols());
        const GpModel::Hyperparams hp = unpack(theta);

        Eigen::MatrixXd r = scaled_distances(x, hp.lengthscales);
        Eigen::ArrayXXd expterm = (-kSqrt5 * r.array()).exp();
        Eigen::MatrixXd kf =
            (expterm * (1.0 + kSqrt5 * r.array() + (5.0 / 3.0) * r.array().square()) *
             hp.signal_variance)
                .matrix();
        Eigen::MatrixXd ky = kf;
        ky.diagonal().array() += hp.noise_variance;

        CholResult ch = jittered_cholesky(ky);
        grad.setZero(n_params());
        if (!ch.ok) return std::numeric_limits<double>::infinity();

        Eigen::VectorXd alpha = ch.chol.triangularView<Eigen::Lower>().solve(y);
        double quad = alpha.squaredNorm();
        alpha = ch.chol.transpose().triangularView<Eigen::Upper>().solve(alpha);
        const double logdet = ch.chol.diagonal().array().log().sum();
        const double mll = -0.5 * quad - logdet - 0.5 * n * std::log(2.0 * M_PI);

        // A = alpha alpha^T - Ky^-1; dMLL/dtheta = 0.5 tr(A dKy/dtheta).
        Eigen::MatrixXd kinv = Eigen::MatrixXd::Identity(n, n);
        ch.chol.triangularView<Eigen::Lower>().solveInPlace(kinv);
        ch.chol.transpose().triangularView<Eigen::Upper>().solveInPlace(kinv);
        Eigen::MatrixXd a = alpha * alpha.transpose() - kinv;

        // dK/dlog l_k = s2 * (5/3)(1 + sqrt5 r) exp(-sqrt5 r) * ((dx_k)/l_k)^2
        Eigen::ArrayXXd radial =
            hp.signal_variance * (5.0 / 3.0) * (1.0 + kSqrt5 * r.array()) * expterm;
        for (int k = 0; k < d; ++k) {
            Eigen::ArrayXd col = x.col(k).array() / hp.lengthscales[k];
            Eigen::ArrayXXd u = (col.replicate(1, n) - col.transpose().replicate(n, 1)).square();
            grad[k] = -0.5 * (a.array() * radial * u).sum();
        }
        grad[d] = -0.5 * (a.array() * kf.array()).sum();
        if (learn_noise) grad[d + 1] = -0.5 * hp.noise_variance * a.trace();
        return -mll;
    }

    Eigen::VectorXd lower_box() const {
        Eigen::VectorXd lo(n_params());
        lo.head(x.cols()).setConstant(kLogLengthscaleMin);
        lo[x.cols()] = kLogVarianceMin;
        if (learn_noise) lo[x.cols() + 1] = kLogVarianceMin;
        return lo;
    }
    Eigen::VectorXd upper_box() const {
        Eigen::VectorXd hi(n_params());
        hi.head(x.cols()).setConstant(kLogLengthscaleMax);
        hi[x.cols()] = kLogVarianceMax;
        if (learn_noise) hi[x.cols() + 1] = kLogVarianceMax;
        return hi;
    }
};

void project(Eigen::VectorXd& v, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    v = v.cwiseMax(lo).cwiseMin(hi);
}

// Box-projected L-BFGS with Armijo backtracking. Never accepts an uphill
// step, so the final value is <= the initial one.
template <typename F>
double lbfgs_minimize(const F& fg, Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi, int max_iters = 100) {
    constexpr int kMemory = 8;
    constexpr double kArmijo = 1e-4;

    project(x, lo, hi);
    Eigen::VectorXd g(x.size());
    double f = fg(x, g);
    std::vector<Eigen::VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;

    for (int iter = 0; iter < max_iters; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() < 1e-6) break;

        // Two-loop recursion.
        Eigen::VectorXd q = g;
        const int m = static_cast<int>(s_hist.size());
        std::vector<double> a_coef(m);
        for (int i = m - 1; i >= 0; --i) {
            a_coef[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= a_coef[i] * y_hist[i];
        }
        if (m > 0) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            const double b = rho_hist[i] * y_hist[i].dot(q);
            q += (a_coef[i] - b) * s_hist[i];
        }
        Eigen::VectorXd dir = -q;
        if (dir.dot(g) >= 0.0) dir = -g;

        double t = 1.0;
        const double slope = dir.dot(g);
        Eigen::VectorXd x_new = x, g_new(x.size());
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            x_new = x + t * dir;
            project(x_new, lo, hi);
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + kArmijo * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted || f_new > f) break;

        Eigen::VectorXd s_vec = x_new - x;
        Eigen::VectorXd y_vec = g_new - g;
        const double sy = s_vec.dot(y_vec);
        if (sy > 1e-12) {
            s_hist.push_back(s_vec);
            y_hist.push_back(y_vec);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kMemory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        const double df = f - f_new;
        x = x_new;
        g = g_new;
        f = f_new;
        if (df < 1e-10 * (1.0 + std::abs(f))) break;
        if (s_vec.lpNorm<Eigen::Infinity>() < 1e-10) break;
    }
    return f;
}

}  // namespace

GpModel::GpModel(Eigen::MatrixXd train_x, Eigen::VectorXd train_y, Hyperparams hp,
                 bool standardize)
    : x_(std::move(train_x)), y_(std::move(train_y)), hp_(std::move(hp)) {
    if (x_.rows() < 1) throw std::invalid_argument("GpModel: need at least one training point");
    if (x_.rows() != y_.size()) throw std::invalid_argument("GpModel: x/y size mismatch");
    if (hp_.lengthscales.size() != x_.cols())
        throw std::invalid_argument("GpModel: lengthscale dimension mismatch");
    if (standardize && x_.rows() >= 2) {
        y_shift_ = y_.mean();
        const double sd = std::sqrt((y_.array() - y_shift_).square().sum() / (y_.size() - 1));
        y_scale_ = sd > 0.0 ? sd : 1.0;
        y_ = (y_.array() - y_shift_) / y_scale_;
    }
    factorize();
}

void GpModel::factorize() {
    Eigen::MatrixXd ky = kernel_matrix(x_, hp_);
    ky.diagonal().array() += hp_.noise_variance;
    CholResult ch = jittered_cholesky(ky);
    if (!ch.ok) {
        throw std::runtime_error(
            "GpModel: kernel matrix not positive definite after maximum jitter (n=" +
            std::to_string(x_.rows()) +
            ", mean diag=" + std::to_string(ky.diagonal().mean()) + ")");
    }
    chol_ = ch.chol;
    jitter_ = ch.jitter;
    jitter_escalations_ = ch.escalations;
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_);
    alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(alpha_);
}

double GpModel::log_marginal_likelihood() const {
    const double n = static_cast<double>(y_.size());
    return -0.5 * y_.dot(alpha_) - chol_.diagonal().array().log().sum() -
           0.5 * n * std::log(2.0 * M_PI);
}

Eigen::VectorXd GpModel::kernel_cross(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const int n = size();
    Eigen::VectorXd k(n);
    for (int i = 0; i < n; ++i) {
        const double r =
            std::sqrt(((x_.row(i).transpose() - x).array() / hp_.lengthscales.array())
                          .square()
                          .sum());
        k[i] = hp_.signal_variance * matern52_from_r(r);
    }
    return k;
}

Eigen::MatrixXd GpModel::solve_ky(const Eigen::MatrixXd& b) const {
    Eigen::MatrixXd out = chol_.triangularView<Eigen::Lower>().solve(b);
    chol_.transpose().triangularView<Eigen::Upper>().solveInPlace(out);
    return out;
}

GpModel::Prediction GpModel::posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    Eigen::VectorXd k = kernel_cross(x);
    const double mean_std = k.dot(alpha_);
    Eigen::VectorXd v = chol_.triangularView<Eigen::Lower>().solve(k);
    double var_std = hp_.signal_variance - v.squaredNorm();
    if (var_std < 0.0) {
        if (var_std < -1e-10) ++(*clamp_count_);
        var_std = 0.0;
    }
    return {y_shift_ + y_scale_ * mean_std, y_scale_ * y_scale_ * var_std};
}

GpModel GpModel::fantasize(const std::vector<Eigen::VectorXd>& pending_x) const {
    GpModel out = *this;
    for (const auto& p : pending_x) {
        const double mean_std = out.kernel_cross(p).dot(out.alpha_);
        out.x_.conservativeResize(out.x_.rows() + 1, Eigen::NoChange);
        out.x_.row(out.x_.rows() - 1) = p.transpose();
        out.y_.conservativeResize(out.y_.size() + 1);
        out.y_[out.y_.size() - 1] = mean_std;
        out.factorize();
    }
    return out;
}

void GpModel::joint_posterior(const Eigen::MatrixXd& points, Eigen::VectorXd& mean,
                              Eigen::MatrixXd& cov) const {
    const int m = static_cast<int>(points.rows());
    const int n = size();
    Eigen::MatrixXd kpx(m, n);
    for (int i = 0; i < m; ++i) kpx.row(i) = kernel_cross(points.row(i).transpose()).transpose();

    Eigen::MatrixXd kpp(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
            const double r = std::sqrt(((points.row(i) - points.row(j)).transpose().array() /
                                        hp_.lengthscales.array())
                                           .square()
                                           .sum());
            kpp(i, j) = kpp(j, i) = hp_.signal_variance * matern52_from_r(r);
        }
    }

    mean = y_shift_ + (y_scale_ * (kpx * alpha_).array());
    Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(kpx.transpose());
    cov = kpp - v.transpose() * v;
    cov = 0.5 * (cov + cov.transpose());
    cov *= y_scale_ * y_scale_;
}

void GpModel::dump(std::ostream& os) const {
    os << "gp_model v1\n";
    os << "n " << size() << "\ndim " << dim() << "\n";
    os << "y_shift " << y_shift_ << "\ny_scale " << y_scale_ << "\n";
    os << "signal_variance " << hp_.signal_variance << "\n";
    os << "noise_variance " << hp_.noise_variance << "\n";
    os << "lengthscales";
    for (int i = 0; i < hp_.lengthscales.size(); ++i) os << " " << hp_.lengthscales[i];
    os << "\njitter " << jitter_ << "\n";
    os << "train (x..., y_standardized):\n";
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < dim(); ++j) os << x_(i, j) << " ";
        os << y_[i] << "\n";
    }
}

GpModel GpModel::fit(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                     NoiseMode noise_mode, double fixed_noise_variance, std::uint64_t seed) {
    if (train_x.rows() < 1) throw std::invalid_argument("GpModel::fit: empty training set");
    if (noise_mode == NoiseMode::Fixed && fixed_noise_variance < 0.0)
        throw std::invalid_argument("GpModel::fit: fixed noise must be >= 0");

    const int n = static_cast<int>(train_x.rows());
    const int d = static_cast<int>(train_x.cols());

    // Standardization transform, computed up front so the fixed noise can be
    // converted into standardized units for the optimizer.
    double shift = 0.0, scale = 1.0;
    if (n >= 2) {
        shift = train_y.mean();
        const double sd =
            std::sqrt((train_y.array() - shift).square().sum() / (train_y.size() - 1));
        scale = sd > 0.0 ? sd : 1.0;
    }
    Eigen::VectorXd y_std = (train_y.array() - shift) / scale;
    const bool learn_noise = (noise_mode == NoiseMode::Learned);
    const double fixed_noise_std_units = fixed_noise_variance / (scale * scale);

    MllObjective obj{train_x, y_std, learn_noise, fixed_noise_std_units};
    auto fg = [&obj](const Eigen::VectorXd& t, Eigen::VectorXd& g) { return obj.eval(t, g); };
    const Eigen::VectorXd lo = obj.lower_box(), hi = obj.upper_box();

    std::mt19937_64 rng = make_rng(seed ^ 0x6f17a2ull);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto random_start = [&]() {
        Eigen::VectorXd t(obj.n_params());
        for (int k = 0; k < d; ++k)
            t[k] = std::log(0.05) + unif(rng) * (std::log(2.0) - std::log(0.05));
        t[d] = std::log(0.25) + unif(rng) * (std::log(4.0) - std::log(0.25));
        if (learn_noise) t[d + 1] = std::log(1e-4) + unif(rng) * (std::log(1.0) - std::log(1e-4));
        return t;
    };

    constexpr int kStarts = 8;
    Eigen::VectorXd best_theta;
    double best_f = std::numeric_limits<double>::infinity();
    double best_start_f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd scratch_grad;
    for (int s = 0; s < kStarts; ++s) {
        Eigen::VectorXd theta(obj.n_params());
        if (s == 0) {
            theta.head(d).setConstant(std::log(0.3));
            theta[d] = 0.0;
            if (learn_noise) theta[d + 1] = std::log(1e-2);
        } else {
            theta = random_start();
        }
        const double f0 = obj.eval(theta, scratch_grad);
        best_start_f = std::min(best_start_f, f0);
        const double f = lbfgs_minimize(fg, theta, lo, hi);
        if (f < best_f) {
            best_f = f;
            best_theta = theta;
        }
    }
    if (!best_theta.size() || !(best_f <= best_start_f + 1e-9))
        throw std::runtime_error("GpModel::fit: optimizer failed to match its best start");

    GpModel model(train_x, train_y, obj.unpack(best_theta), true);
    return model;
}

double cross_validate_r2(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         NoiseMode noise_mode, double fixed_noise_variance, int folds,
                         std::uint64_t seed) {
    const int n = static_cast<int>(x.rows());
    if (folds < 2) throw std::invalid_argument("cross_validate_r2: folds must be >= 2");
    if (n < folds) throw std::invalid_argument("cross_validate_r2: need n >= folds");
    if (n - (n + folds - 1) / folds < 1)
        throw std::invalid_argument("cross_validate_r2: fold leaves no training data");

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng = make_rng(seed ^ 0xc5f01dull);
    std::shuffle(idx.begin(), idx.end(), rng);

    Eigen::VectorXd pred(n);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> test_idx, train_idx;
        for (int i = 0; i < n; ++i) (i % folds == f ? test_idx : train_idx).push_back(idx[i]);
        Eigen::MatrixXd xt(train_idx.size(), x.cols());
        Eigen::VectorXd yt(train_idx.size());
        for (std::size_t i = 0; i < train_idx.size(); ++i) {
            xt.row(static_cast<int>(i)) = x.row(train_idx[i]);
            yt[static_cast<int>(i)] = y[train_idx[i]];
        }
        GpModel m = GpModel::fit(xt, yt, noise_mode, fixed_noise_variance, seed + f);
        for (int t : test_idx) pred[t] = m.posterior(x.row(t).transpose()).mean;
    }

    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (y - pred).squaredNorm();
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

}  // namespace sdlsim
