#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <ostream>
#include <vector>

namespace sdlsim {

enum class NoiseMode { Fixed, Learned };

// Gaussian process regressor with a Matern-5/2 ARD kernel.
//
// Inputs are expected in normalized [0,1]^d coordinates. Targets are
// standardized internally (zero mean, unit variance for n >= 2; the affine
// transform is stored and undone in posterior()). Hyperparameters live in
// standardized target units.
class GpModel {
public:
    struct Hyperparams {
        Eigen::VectorXd lengthscales;  // per dimension, > 0
        double signal_variance = 1.0;
        double noise_variance = 1e-2;
    };

    struct Prediction {
        double mean = 0.0;
        double variance = 0.0;  // latent-function variance, objective units^2
    };

    // Maximizes the log marginal likelihood by multi-start quasi-Newton
    // ascent on log-parameters. Deterministic given seed. train_y is in
    // objective units. With NoiseMode::Fixed, fixed_noise_variance is in
    // objective units^2 and is converted to standardized units internally.
    static GpModel fit(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                       NoiseMode noise_mode, double fixed_noise_variance = 0.0,
                       std::uint64_t seed = 0);

    // Builds a model with the given hyperparameters, no optimization.
    // standardize=false keeps targets as-is (zero-mean prior in raw units).
    GpModel(Eigen::MatrixXd train_x, Eigen::VectorXd train_y, Hyperparams hp,
            bool standardize = true);

    double log_marginal_likelihood() const;

    Prediction posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const;

    // Kriging-believer conditioning: appends each pending input sequentially
    // with its current posterior mean as the target. Hyperparameters and the
    // standardization transform are kept fixed.
    GpModel fantasize(const std::vector<Eigen::VectorXd>& pending_x) const;

    // Joint posterior over the latent function at the given points (rows),
    // de-standardized to objective units.
    void joint_posterior(const Eigen::MatrixXd& points, Eigen::VectorXd& mean,
                         Eigen::MatrixXd& cov) const;

    // Low-level pieces used by the Monte-Carlo acquisition evaluator
    // (standardized units, prior kernel scale).
    Eigen::VectorXd kernel_cross(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    double kernel_diag() const { return hp_.signal_variance; }
    Eigen::MatrixXd solve_ky(const Eigen::MatrixXd& b) const;  // (K + sn2 I)^-1 b
    const Eigen::VectorXd& alpha() const { return alpha_; }

    int size() const { return static_cast<int>(x_.rows()); }
    int dim() const { return static_cast<int>(x_.cols()); }
    const Eigen::MatrixXd& train_x() const { return x_; }
    const Eigen::VectorXd& train_y_standardized() const { return y_; }
    const Hyperparams& hyperparams() const { return hp_; }
    double y_shift() const { return y_shift_; }
    double y_scale() const { return y_scale_; }
    double jitter() const { return jitter_; }
    int jitter_escalations() const { return jitter_escalations_; }
    long variance_clamp_count() const { return *clamp_count_; }

    // Structured text dump of hyperparameters and training data.
    void dump(std::ostream& os) const;

private:
    void factorize();

    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;  // standardized
    double y_shift_ = 0.0;
    double y_scale_ = 1.0;
    Hyperparams hp_;
    Eigen::MatrixXd chol_;   // lower factor of K + sn2 I (+ jitter)
    Eigen::VectorXd alpha_;  // (K + sn2 I)^-1 y
    double jitter_ = 0.0;
    int jitter_escalations_ = 0;
    std::shared_ptr<long> clamp_count_ = std::make_shared<long>(0);
};

// k-fold cross validation: refits per fold, pools held-out predictions and
// returns the coefficient of determination.
double cross_validate_r2(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         NoiseMode noise_mode, double fixed_noise_variance, int folds,
                         std::uint64_t seed);

}  // namespace sdlsim
