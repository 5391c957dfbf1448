#include "ivsforge/mtgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ivs {

namespace {
constexpr double kSqrt5 = 2.23606797749978969640917366873128;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}  // namespace

void TaskEmbeddingParams::validate() const {
    if (!(shared_var > 0.0) || !(embedding_lengthscale > 0.0) || !(prior_var > 0.0))
        throw GpError("TaskEmbeddingParams: shared_var, embedding_lengthscale and prior_var must be positive");
    if (e_source.size() < 1 || e_target.size() != e_source.size() || prior_mean.size() != e_source.size())
        throw GpError("TaskEmbeddingParams: embeddings and prior mean must share one dimension >= 1");
}

void IcmHyperParams::validate() const {
    input_kernel.validate();
    task.validate();
    if (!(kappa_source >= 0.0) || !(kappa_target >= 0.0)) throw GpError("IcmHyperParams: kappa^2 must be nonnegative");
    if (!(noise_source > 0.0) || !(noise_target > 0.0)) throw GpError("IcmHyperParams: noise variances must be positive");
}

namespace {
nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
}  // namespace

nlohmann::json IcmHyperParams::to_json() const {
    return {{"input_lengthscales", input_kernel.lengthscales},
            {"input_variance", input_kernel.variance},
            {"e_source", vec_json(task.e_source)},
            {"e_target", vec_json(task.e_target)},
            {"shared_var", task.shared_var},
            {"embedding_lengthscale", task.embedding_lengthscale},
            {"prior_mean", vec_json(task.prior_mean)},
            {"prior_var", task.prior_var},
            {"kappa_source", kappa_source},
            {"kappa_target", kappa_target},
            {"noise_source", noise_source},
            {"noise_target", noise_target}};
}

double task_cov(const TaskEmbeddingParams& te, double kappa_source, double kappa_target, Task a, Task b) {
    const Eigen::VectorXd& ea = a == Task::Source ? te.e_source : te.e_target;
    const Eigen::VectorXd& eb = b == Task::Source ? te.e_source : te.e_target;
    const double l = te.embedding_lengthscale;
    double c = te.shared_var * std::exp(-(ea - eb).squaredNorm() / (l * l));
    if (a == b) c += a == Task::Source ? kappa_source : kappa_target;
    return c;
}

Eigen::Matrix2d task_covariance(const IcmHyperParams& h) {
    Eigen::Matrix2d c;
    c(0, 0) = task_cov(h.task, h.kappa_source, h.kappa_target, Task::Source, Task::Source);
    c(1, 1) = task_cov(h.task, h.kappa_source, h.kappa_target, Task::Target, Task::Target);
    c(0, 1) = c(1, 0) = task_cov(h.task, h.kappa_source, h.kappa_target, Task::Source, Task::Target);
    return c;
}

Eigen::MatrixXd joint_cov_matrix(const IcmHyperParams& h, const Eigen::MatrixX2d& xs, const Eigen::MatrixX2d& xt) {
    const Eigen::Matrix2d c = task_covariance(h);
    const Eigen::Index m = xs.rows(), n = xt.rows();
    Eigen::MatrixXd out(m + n, m + n);
    out.topLeftCorner(m, m) = c(0, 0) * matern52_matrix(xs, xs, h.input_kernel);
    out.bottomRightCorner(n, n) = c(1, 1) * matern52_matrix(xt, xt, h.input_kernel);
    out.topRightCorner(m, n) = c(0, 1) * matern52_matrix(xs, xt, h.input_kernel);
    out.bottomLeftCorner(n, m) = out.topRightCorner(m, n).transpose();
    return out;
}

// --- parameterisation ---------------------------------------------------------

IcmParameterization::IcmParameterization(const MtgpOptions& opts)
    : dim_(opts.embedding_dim),
      log_ls_(std::log(opts.lengthscale_lo), std::log(opts.lengthscale_hi)),
      noise_floor_(opts.noise_floor),
      prior_var_floor_(opts.prior_var_floor) {
    if (dim_ < 1) throw GpError("IcmParameterization: embedding dimension must be >= 1");
}

optim::Vector IcmParameterization::pack(const IcmHyperParams& h) const {
    if (h.task.dim() != dim_) throw GpError("IcmParameterization: embedding dimension mismatch");
    optim::Vector t(size());
    auto ls = [&](double l) {
        const double lo = std::exp(log_ls_.lo()) * 1.0001, hi = std::exp(log_ls_.hi()) * 0.9999;
        return log_ls_.to_unbounded(std::log(std::clamp(l, lo, hi)));
    };
    auto above = [](double v, double floor) { return std::log(std::max(v - floor, 1e-300)); };
    t(0) = ls(h.input_kernel.lengthscales[0]);
    t(1) = ls(h.input_kernel.lengthscales[1]);
    t(2) = std::log(h.task.shared_var);
    t(3) = std::log(h.task.embedding_lengthscale);
    t(4) = std::log(std::max(h.kappa_source, 1e-300));
    t(5) = std::log(std::max(h.kappa_target, 1e-300));
    t(6) = above(h.noise_source, noise_floor_);
    t(7) = above(h.noise_target, noise_floor_);
    t(8) = above(h.task.prior_var, prior_var_floor_);
    t.segment(9, dim_) = h.task.e_source;
    t.segment(9 + dim_, dim_) = h.task.e_target;
    t.segment(9 + 2 * dim_, dim_) = h.task.prior_mean;
    return t;
}

IcmHyperParams IcmParameterization::unpack(const optim::Vector& t) const {
    IcmHyperParams h;
    h.input_kernel.variance = 1.0;
    h.input_kernel.lengthscales = {std::exp(log_ls_.to_bounded(t(0))), std::exp(log_ls_.to_bounded(t(1)))};
    h.task.shared_var = std::exp(t(2));
    h.task.embedding_lengthscale = std::exp(t(3));
    h.kappa_source = std::exp(t(4));
    h.kappa_target = std::exp(t(5));
    h.noise_source = noise_floor_ + std::exp(t(6));
    h.noise_target = noise_floor_ + std::exp(t(7));
    h.task.prior_var = prior_var_floor_ + std::exp(t(8));
    h.task.e_source = t.segment(9, dim_);
    h.task.e_target = t.segment(9 + dim_, dim_);
    h.task.prior_mean = t.segment(9 + 2 * dim_, dim_);
    return h;
}

double IcmParameterization::lengthscale_derivative(const optim::Vector& t, int d) const {
    return std::exp(log_ls_.to_bounded(t(d))) * log_ls_.derivative(t(d));
}

// --- objective ------------------------------------------------------------------

double map_objective(const IcmParameterization& param, const optim::Vector& theta, const MtgpData& data,
                     optim::Vector* grad) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (!theta.allFinite()) return inf;
    const IcmHyperParams h = param.unpack(theta);
    const Eigen::Matrix2d c = task_covariance(h);
    if (!c.allFinite() || !std::isfinite(h.noise_source) || !std::isfinite(h.noise_target) ||
        !std::isfinite(h.task.prior_var))
        return inf;

    const Eigen::Index m = data.xs.rows(), n = data.xt.rows(), tot = m + n;
    const int dp = param.dim();
    Eigen::MatrixX2d x(tot, 2);
    x << data.xs, data.xt;

    Eigen::MatrixXd a = joint_cov_matrix(h, data.xs, data.xt);
    a.diagonal().head(m).array() += h.noise_source;
    a.diagonal().tail(n).array() += h.noise_target;
    JitteredCholesky chol;
    try {
        chol = cholesky_with_jitter(a, std::max(c(0, 0), c(1, 1)));
    } catch (const GpError&) {
        return inf;
    }
    const Eigen::VectorXd alpha = chol.llt.solve(data.y);
    const double log_det = 2.0 * chol.llt.matrixLLT().diagonal().array().log().sum();

    const auto& te = h.task;
    const double se2 = te.prior_var;
    const double dev_s = (te.e_source - te.prior_mean).squaredNorm();
    const double dev_t = (te.e_target - te.prior_mean).squaredNorm();
    const double prior = (dev_s + dev_t) / (2.0 * se2) + static_cast<double>(dp) * std::log(se2);
    const double value = 0.5 * data.y.dot(alpha) + 0.5 * log_det + prior +
                         0.5 * static_cast<double>(tot + 2 * dp) * kLog2Pi;
    if (!grad) return value;
    if (!std::isfinite(value)) return inf;

    // W = alpha alpha^T - A^{-1};  dNLML/dp = -1/2 sum_ij W_ij dA_ij/dp
    Eigen::MatrixXd w = -chol.llt.solve(Eigen::MatrixXd::Identity(tot, tot));
    w.noalias() += alpha * alpha.transpose();

    // block sums of W o K (input kernel only) and lengthscale terms of W o C o dK
    double s_ss = 0.0, s_tt = 0.0, s_st = 0.0, g_l0 = 0.0, g_l1 = 0.0;
    const double il0 = 1.0 / h.input_kernel.lengthscales[0], il1 = 1.0 / h.input_kernel.lengthscales[1];
    for (Eigen::Index j = 0; j < tot; ++j) {
        const bool js = j < m;
        for (Eigen::Index i = j; i < tot; ++i) {
            const bool is = i < m;
            const double mult = i == j ? 1.0 : 2.0;
            const double d0 = (x(i, 0) - x(j, 0)) * il0;
            const double d1 = (x(i, 1) - x(j, 1)) * il1;
            const double r = std::sqrt(d0 * d0 + d1 * d1);
            const double e = std::exp(-kSqrt5 * r);
            const double k = (1.0 + kSqrt5 * r + 5.0 / 3.0 * r * r) * e;
            const double wij = mult * w(i, j);
            double cij;
            if (is && js) {
                s_ss += wij * k;
                cij = c(0, 0);
            } else if (!is && !js) {
                s_tt += wij * k;
                cij = c(1, 1);
            } else {
                s_st += wij * k;
                cij = c(0, 1);
            }
            const double common = wij * cij * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
            g_l0 += common * d0 * d0;  // d/dlog l0
            g_l1 += common * d1 * d1;
        }
    }
    // s_st already counts both off-diagonal blocks
    const double g_css = -0.5 * s_ss, g_ctt = -0.5 * s_tt, g_cst = -0.5 * s_st;

    const double sh2 = te.shared_var, lh = te.embedding_lengthscale;
    const Eigen::VectorXd diff = te.e_source - te.e_target;
    const double rho_h = std::exp(-diff.squaredNorm() / (lh * lh));

    grad->setZero(param.size());
    auto& g = *grad;
    g(0) = -0.5 * g_l0 / h.input_kernel.lengthscales[0] * param.lengthscale_derivative(theta, 0);
    g(1) = -0.5 * g_l1 / h.input_kernel.lengthscales[1] * param.lengthscale_derivative(theta, 1);
    g(2) = sh2 * (g_css + g_ctt + g_cst * rho_h);
    g(3) = g_cst * sh2 * rho_h * 2.0 * diff.squaredNorm() / (lh * lh);
    g(4) = g_css * h.kappa_source;
    g(5) = g_ctt * h.kappa_target;
    g(6) = -0.5 * w.diagonal().head(m).sum() * std::exp(theta(6));
    g(7) = -0.5 * w.diagonal().tail(n).sum() * std::exp(theta(7));
    g(8) = (-(dev_s + dev_t) / (2.0 * se2 * se2) + static_cast<double>(dp) / se2) * std::exp(theta(8));
    const Eigen::VectorXd d_cst_de_s = sh2 * rho_h * (-2.0 / (lh * lh)) * diff;
    g.segment(9, dp) = g_cst * d_cst_de_s + (te.e_source - te.prior_mean) / se2;
    g.segment(9 + dp, dp) = -g_cst * d_cst_de_s + (te.e_target - te.prior_mean) / se2;
    g.segment(9 + 2 * dp, dp) = -(te.e_source - te.prior_mean + te.e_target - te.prior_mean) / se2;
    return value;
}

// --- diagnostics --------------------------------------------------------------------

TaskDiagnostics task_diagnostics(const IcmHyperParams& h) {
    TaskDiagnostics d;
    d.task_covariance = task_covariance(h);
    const auto& c = d.task_covariance;
    d.cross_correlation = c(0, 1) / std::sqrt(c(0, 0) * c(1, 1));
    const double sh2 = h.task.shared_var;
    d.shared_fraction_source = sh2 / (sh2 + h.kappa_source);
    d.specific_fraction_source = h.kappa_source / (sh2 + h.kappa_source);
    d.shared_fraction_target = sh2 / (sh2 + h.kappa_target);
    d.specific_fraction_target = h.kappa_target / (sh2 + h.kappa_target);
    return d;
}

nlohmann::json TaskDiagnostics::to_json() const {
    return {{"cross_correlation", cross_correlation},
            {"task_covariance",
             {{"source_source", task_covariance(0, 0)},
              {"source_target", task_covariance(0, 1)},
              {"target_target", task_covariance(1, 1)}}},
            {"shared_fraction", {{"source", shared_fraction_source}, {"target", shared_fraction_target}}},
            {"task_specific_fraction", {{"source", specific_fraction_source}, {"target", specific_fraction_target}}}};
}

// --- model --------------------------------------------------------------------------

MtgpModel MtgpModel::condition(const InputNormalizer& norm, const IcmHyperParams& hyper, const QuoteSet& source,
                               const QuoteSet& target) {
    hyper.validate();
    if (source.empty() || target.empty()) throw GpError("MtgpModel: both tasks need data");
    MtgpModel mdl;
    mdl.norm_ = norm;
    mdl.hyper_ = hyper;
    mdl.xs_ = norm.inputs(source.quotes());
    mdl.xt_ = norm.inputs(target.quotes());
    const Eigen::Index m = mdl.xs_.rows(), n = mdl.xt_.rows();
    Eigen::VectorXd y(m + n);
    y << norm.centred_targets(source.quotes()), norm.centred_targets(target.quotes());
    Eigen::MatrixXd a = joint_cov_matrix(hyper, mdl.xs_, mdl.xt_);
    a.diagonal().head(m).array() += hyper.noise_source;
    a.diagonal().tail(n).array() += hyper.noise_target;
    const Eigen::Matrix2d c = task_covariance(hyper);
    auto chol = cholesky_with_jitter(a, std::max(c(0, 0), c(1, 1)));
    mdl.jitter_ = chol.jitter;
    mdl.chol_l_ = chol.llt.matrixL();
    mdl.weights_ = chol.llt.solve(y);
    return mdl;
}

Prediction MtgpModel::predict_target(const std::vector<Contract>& points) const {
    const Eigen::Matrix2d c = task_covariance(hyper_);
    const Eigen::MatrixX2d xq = norm_.inputs(points);
    const Eigen::Index m = xs_.rows(), n = xt_.rows();
    Eigen::MatrixXd ks(m + n, xq.rows());
    ks.topRows(m) = c(0, 1) * matern52_matrix(xs_, xq, hyper_.input_kernel);
    ks.bottomRows(n) = c(1, 1) * matern52_matrix(xt_, xq, hyper_.input_kernel);
    Prediction p;
    p.mean = (ks.transpose() * weights_).array() + norm_.target_mean;
    const Eigen::MatrixXd v = chol_l_.triangularView<Eigen::Lower>().solve(ks);
    const double prior = c(1, 1) * hyper_.input_kernel.variance;
    p.variance = (prior - v.colwise().squaredNorm().array()).matrix();
    for (Eigen::Index i = 0; i < p.variance.size(); ++i) p.variance(i) = std::max(p.variance(i), 1e-15 * prior);
    return p;
}

double MtgpModel::predict_mean(double strike, double maturity) const {
    return predict_target({{strike, maturity}}).mean(0);
}

nlohmann::json MtgpModel::to_json() const {
    return {{"hyperparameters", hyper_.to_json()},
            {"diagnostics", diagnostics().to_json()},
            {"source_size", source_size()},
            {"target_size", target_size()},
            {"objective", objective_},
            {"initial_objective", initial_objective_},
            {"jitter", jitter_},
            {"converged", converged_}};
}

IcmHyperParams default_icm_init(double target_var, int embedding_dim) {
    IcmHyperParams h;
    h.input_kernel.variance = 1.0;
    h.input_kernel.lengthscales = {0.5, 0.5};
    h.task.e_source = Eigen::VectorXd::Constant(embedding_dim, -0.5);
    h.task.e_target = Eigen::VectorXd::Constant(embedding_dim, 0.5);
    h.task.prior_mean = Eigen::VectorXd::Zero(embedding_dim);
    h.task.prior_var = 1.0;
    h.task.shared_var = target_var;
    h.task.embedding_lengthscale = 1.0;
    h.kappa_source = h.kappa_target = 0.1 * target_var;
    h.noise_source = 1e-4;
    h.noise_target = 1e-6;
    return h;
}

MtgpModel fit_mtgp(const QuoteSet& source, const QuoteSet& target, const MtgpOptions& opts) {
    if (source.empty() || target.empty()) throw GpError("fit_mtgp: both tasks need data");
    if (source.task() != Task::Source || target.task() != Task::Target)
        throw GpError("fit_mtgp: expected a Source-labelled and a Target-labelled quote set");
    const InputNormalizer norm = InputNormalizer::from_quotes(target, opts.spot);
    MtgpData data;
    data.xs = norm.inputs(source.quotes());
    data.xt = norm.inputs(target.quotes());
    data.y.resize(data.xs.rows() + data.xt.rows());
    data.y << norm.centred_targets(source.quotes()), norm.centred_targets(target.quotes());

    const Eigen::VectorXd yt = norm.centred_targets(target.quotes());
    const double var0 = std::max(yt.squaredNorm() / static_cast<double>(yt.size()), 1e-8);
    const IcmParameterization param(opts);
    std::vector<optim::Vector> starts{param.pack(default_icm_init(var0, opts.embedding_dim))};

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int r = 0; r < opts.restarts; ++r) {
        IcmHyperParams h = default_icm_init(var0, opts.embedding_dim);
        h.input_kernel.lengthscales[0] = std::exp(std::log(0.1) + unif(rng) * std::log(20.0));
        h.input_kernel.lengthscales[1] = std::exp(std::log(0.1) + unif(rng) * std::log(20.0));
        h.task.shared_var = var0 * std::exp(2.0 * unif(rng) - 1.0);
        h.kappa_source = h.kappa_target = h.task.shared_var * std::exp(std::log(0.01) + unif(rng) * std::log(50.0));
        for (int d = 0; d < opts.embedding_dim; ++d) {
            h.task.e_source(d) = unif(rng) - 1.0;
            h.task.e_target(d) = unif(rng);
        }
        starts.push_back(param.pack(h));
    }

    for (int d = 0; d < 2; ++d) {
        const double lo = std::min(data.xs.col(d).minCoeff(), data.xt.col(d).minCoeff());
        const double hi = std::max(data.xs.col(d).maxCoeff(), data.xt.col(d).maxCoeff());
        if (hi - lo > 0.0) continue;
        IcmHyperParams capped = default_icm_init(var0, opts.embedding_dim);
        capped.input_kernel.lengthscales = {opts.lengthscale_hi, opts.lengthscale_hi};
        const double u = param.pack(capped)(d);
        for (auto& s : starts) s(d) = u;
    }

    auto objective = [&](const optim::Vector& t, optim::Vector& g) { return map_objective(param, t, data, &g); };
    const double initial = map_objective(param, starts.front(), data, nullptr);
    optim::OptimResult best;
    best.x_min = starts.front();
    best.f_min = initial;
    best.converged = false;
    for (const auto& s : starts) {
        if (!std::isfinite(map_objective(param, s, data, nullptr))) continue;
        const optim::OptimResult r = optim::lbfgs(objective, s, opts.lbfgs);
        if (r.f_min < best.f_min || (&s == &starts.front() && r.f_min <= best.f_min)) best = r;
    }
    if (!std::isfinite(best.f_min)) throw GpError("fit_mtgp: no start produced a finite objective");

    MtgpModel mdl = MtgpModel::condition(norm, param.unpack(best.x_min), source, target);
    mdl.objective_ = best.f_min;
    mdl.initial_objective_ = initial;
    mdl.converged_ = best.converged;
    return mdl;
}

}  // namespace ivs
