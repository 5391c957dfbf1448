#pragma once

#include "ivsforge/gp.hpp"
#include "ivsforge/market_data.hpp"
#include "ivsforge/optim.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>

namespace ivs {

struct TaskEmbeddingParams {
    Eigen::VectorXd e_source = Eigen::VectorXd::Constant(1, -0.5);
    Eigen::VectorXd e_target = Eigen::VectorXd::Constant(1, 0.5);
    double shared_var = 1.0;             ///< sigma_h^2
    double embedding_lengthscale = 1.0;  ///< l_h
    Eigen::VectorXd prior_mean = Eigen::VectorXd::Zero(1);
    double prior_var = 1.0;  ///< sigma_e^2

    int dim() const { return static_cast<int>(e_source.size()); }
    void validate() const;
};

/// Coregionalised covariance hyperparameters. The input kernel's own variance
/// is held at 1; all output scale lives in the task covariance.
struct IcmHyperParams {
    Matern52Kernel input_kernel;
    TaskEmbeddingParams task;
    double kappa_source = 0.0;  ///< kappa_S^2
    double kappa_target = 0.0;  ///< kappa_T^2
    double noise_source = 1e-4;
    double noise_target = 1e-6;

    void validate() const;
    nlohmann::json to_json() const;
};

/// sigma_h^2 exp(-|e_Z - e_Z'|^2 / l_h^2) + kappa_Z^2 [Z == Z'].
double task_cov(const TaskEmbeddingParams& te, double kappa_source, double kappa_target, Task a, Task b);

/// [[C_SS, C_ST], [C_TS, C_TT]]
Eigen::Matrix2d task_covariance(const IcmHyperParams& h);

/// K o C on the stacked inputs (source rows first), without noise.
Eigen::MatrixXd joint_cov_matrix(const IcmHyperParams& h, const Eigen::MatrixX2d& xs, const Eigen::MatrixX2d& xt);

struct MtgpOptions {
    double spot = 100.0;
    int restarts = 0;  ///< random starts in addition to the default initialisation
    std::uint64_t seed = 42;
    int embedding_dim = 1;
    double noise_floor = 1e-8;
    double prior_var_floor = 1e-6;
    double lengthscale_lo = 1e-2;
    double lengthscale_hi = 1e2;
    optim::LbfgsOptions lbfgs{10, 200, 1e-5, 1e-12};
};

/// Unconstrained coordinates:
///   [u_l1, u_l2, log sh2, log lh, log kS2, log kT2, log(nS - floor), log(nT - floor),
///    log(se2 - floor), e_S (d'), e_T (d'), mu_e (d')]
/// Input lengthscales use the same bounded log map as the single-task GP.
class IcmParameterization {
public:
    explicit IcmParameterization(const MtgpOptions& opts);

    int size() const { return 9 + 3 * dim_; }
    int dim() const { return dim_; }
    optim::Vector pack(const IcmHyperParams& h) const;
    IcmHyperParams unpack(const optim::Vector& theta) const;
    double lengthscale_derivative(const optim::Vector& theta, int d) const;

    double noise_floor() const { return noise_floor_; }
    double prior_var_floor() const { return prior_var_floor_; }

private:
    int dim_;
    optim::IntervalTransform log_ls_;
    double noise_floor_;
    double prior_var_floor_;
};

/// Stacked training inputs and centred targets (source block first).
struct MtgpData {
    Eigen::MatrixX2d xs;
    Eigen::MatrixX2d xt;
    Eigen::VectorXd y;
};

/// Negative log marginal likelihood plus the hierarchical embedding prior,
/// including all 2 pi constants. +inf if the covariance cannot be factorised.
double map_objective(const IcmParameterization& param, const optim::Vector& theta, const MtgpData& data,
                     optim::Vector* grad);

struct TaskDiagnostics {
    double cross_correlation = 0.0;
    Eigen::Matrix2d task_covariance = Eigen::Matrix2d::Zero();
    double shared_fraction_source = 0.0;
    double shared_fraction_target = 0.0;
    double specific_fraction_source = 0.0;
    double specific_fraction_target = 0.0;

    nlohmann::json to_json() const;
};

TaskDiagnostics task_diagnostics(const IcmHyperParams& h);

class MtgpModel {
public:
    /// Posterior for fixed hyperparameters.
    static MtgpModel condition(const InputNormalizer& norm, const IcmHyperParams& hyper, const QuoteSet& source,
                               const QuoteSet& target);

    /// Target-task predictive mean and variance.
    Prediction predict_target(const std::vector<Contract>& points) const;
    double predict_mean(double strike, double maturity) const;

    const IcmHyperParams& hyper() const { return hyper_; }
    const InputNormalizer& normalizer() const { return norm_; }
    TaskDiagnostics diagnostics() const { return task_diagnostics(hyper_); }
    std::size_t source_size() const { return static_cast<std::size_t>(xs_.rows()); }
    std::size_t target_size() const { return static_cast<std::size_t>(xt_.rows()); }
    double jitter() const { return jitter_; }
    double objective() const { return objective_; }
    double initial_objective() const { return initial_objective_; }
    bool converged() const { return converged_; }

    nlohmann::json to_json() const;

private:
    friend MtgpModel fit_mtgp(const QuoteSet&, const QuoteSet&, const MtgpOptions&);

    InputNormalizer norm_;
    IcmHyperParams hyper_;
    Eigen::MatrixX2d xs_, xt_;
    Eigen::MatrixXd chol_l_;
    Eigen::VectorXd weights_;
    double jitter_ = 0.0;
    double objective_ = 0.0;
    double initial_objective_ = 0.0;
    bool converged_ = true;
};

/// Default initial hyperparameters for a given target variance.
IcmHyperParams default_icm_init(double target_var, int embedding_dim = 1);

/// MAP fit of every hyperparameter jointly by L-BFGS. The normaliser is taken
/// from the target quotes, exactly as the single-task GP would on the same target.
MtgpModel fit_mtgp(const QuoteSet& source, const QuoteSet& target, const MtgpOptions& opts = {});

}  // namespace ivs
