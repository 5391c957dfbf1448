#pragma once

#include "ivsforge/market_data.hpp"
#include "ivsforge/optim.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ivs {

/// Matern 5/2 covariance with one lengthscale per input (strike, maturity).
struct Matern52Kernel {
    double variance = 1.0;
    std::array<double, 2> lengthscales{0.5, 0.5};

    void validate() const;
};

/// Shape of the Matern 5/2 covariance at scaled distance r: (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r).
double matern52_shape(double r);

double matern52(const Eigen::Vector2d& x, const Eigen::Vector2d& y, const Matern52Kernel& k);

/// Gram matrix k(A, B) for row-wise inputs.
Eigen::MatrixXd matern52_matrix(const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b, const Matern52Kernel& k);

/// Affine maps between (strike, maturity, iv) and the model's working coordinates.
/// Strikes are divided by spot, maturities by the largest training maturity; both
/// are then shifted to zero mean over the training inputs. Targets are centred.
struct InputNormalizer {
    double strike_scale = 100.0;
    double strike_shift = 0.0;
    double maturity_scale = 1.0;
    double maturity_shift = 0.0;
    double target_mean = 0.0;

    static InputNormalizer from_quotes(const QuoteSet& quotes, double spot);

    Eigen::Vector2d input(double strike, double maturity) const;
    Eigen::MatrixX2d inputs(const std::vector<OptionQuote>& quotes) const;
    Eigen::MatrixX2d inputs(const std::vector<Contract>& points) const;
    Eigen::VectorXd centred_targets(const std::vector<OptionQuote>& quotes) const;
};

class GpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cholesky factor of a covariance, with diagonal jitter escalated on failure.
struct JitteredCholesky {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

/// Tries A, then A + j I for j = 1e-10 scale, 1e-9 scale, ... up to 1e-4 scale.
/// Throws GpError with the last attempted jitter if every attempt fails.
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a, double scale);

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

class GpModel {
public:
    /// Builds the posterior for fixed hyperparameters.
    static GpModel condition(const InputNormalizer& norm, const Matern52Kernel& kernel, double noise_var,
                             const QuoteSet& quotes);

    Prediction predict(const std::vector<Contract>& points) const;
    double predict_mean(double strike, double maturity) const;

    const Matern52Kernel& kernel() const { return kernel_; }
    double noise_var() const { return noise_var_; }
    const InputNormalizer& normalizer() const { return norm_; }
    double jitter() const { return jitter_; }
    /// Negative log marginal likelihood of the training data.
    double nlml() const { return nlml_; }
    bool converged() const { return converged_; }
    void set_converged(bool c) { converged_ = c; }

    nlohmann::json to_json() const;

private:
    InputNormalizer norm_;
    Matern52Kernel kernel_;
    double noise_var_ = 0.0;
    double jitter_ = 0.0;
    double nlml_ = 0.0;
    bool converged_ = true;
    Eigen::MatrixX2d x_;
    Eigen::MatrixXd chol_l_;
    Eigen::VectorXd weights_;
};

struct GpOptions {
    double spot = 100.0;
    int restarts = 3;
    std::uint64_t seed = 42;
    double noise_floor = 1e-8;
    double lengthscale_lo = 1e-2;
    double lengthscale_hi = 1e2;  ///< cap for unidentifiable directions
    optim::LbfgsOptions lbfgs{10, 300, 1e-5, 1e-12};
};

/// Working-coordinate parameterisation: [log variance, u_strike, u_maturity, log(noise - floor)],
/// with lengthscale = exp(logit-map of u onto (log lo, log hi)).
class GpParameterization {
public:
    explicit GpParameterization(const GpOptions& opts);

    optim::Vector pack(const Matern52Kernel& k, double noise_var) const;
    std::pair<Matern52Kernel, double> unpack(const optim::Vector& theta) const;
    /// d lengthscale_d / d theta_{1+d}
    double lengthscale_derivative(const optim::Vector& theta, int d) const;

private:
    optim::IntervalTransform log_ls_;
    double noise_floor_;
};

/// NLML and its gradient in the working coordinates. Returns +inf when the
/// covariance cannot be factorised.
double gp_nlml(const GpParameterization& param, const optim::Vector& theta, const Eigen::MatrixX2d& x,
               const Eigen::VectorXd& y, optim::Vector* grad);

/// Maximum-likelihood fit with the default start plus `restarts` random log-space starts.
GpModel fit_gp(const QuoteSet& quotes, const GpOptions& opts = {});

}  // namespace ivs
