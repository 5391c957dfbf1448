#include "ivsforge/gp.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

using namespace ivs;

namespace {

// Separate closed-form transcription used by the dense-solve oracle.
double matern_oracle(double var, double l0, double l1, double k0, double t0, double k1, double t1) {
    const double r = std::hypot((k0 - k1) / l0, (t0 - t1) / l1);
    return var * (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
}

double det3(const double a[3][3]) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

// Cramer's rule for A x = b.
void solve3(const double a[3][3], const double b[3], double x[3]) {
    const double d = det3(a);
    for (int c = 0; c < 3; ++c) {
        double m[3][3];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] = j == c ? b[i] : a[i][j];
        x[c] = det3(m) / d;
    }
}

}  // namespace

TEST_CASE("Matern 5/2 closed form") {
    Matern52Kernel k;
    k.variance = 2.0;
    k.lengthscales = {0.5, 2.0};
    const Eigen::Vector2d x(0.1, 0.2);
    CHECK(matern52(x, x, k) == 2.0);
    // r = 1 -> variance (1 + sqrt5 + 5/3) e^{-sqrt5}
    const Eigen::Vector2d y(0.1 + 0.3, 0.2 + 1.6);
    CHECK(matern52(x, y, k) == doctest::Approx(2.0 * 0.52399410883182031059).epsilon(1e-14));
    double prev = 2.0;
    for (double r = 0.1; r < 20; r += 0.5) {
        const double v = k.variance * matern52_shape(r);
        CHECK(v < prev);
        prev = v;
    }
    CHECK(matern52_shape(60.0) < 1e-50);
    CHECK(matern52(x, y, k) == matern52(y, x, k));
}

TEST_CASE("jittered Cholesky escalates and reports") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(3, 3);  // rank 1
    const auto c = cholesky_with_jitter(a, 1.0);
    CHECK(c.jitter > 0.0);
    CHECK(c.jitter <= 1e-4);
    Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(cholesky_with_jitter(neg, 1.0), GpError);
    CHECK(cholesky_with_jitter(Eigen::MatrixXd::Identity(2, 2), 1.0).jitter == 0.0);
}

TEST_CASE("3-point posterior matches a dense-solve oracle") {
    const QuoteSet q(Task::Target, {{90, 0.5, 0.25}, {100, 1.0, 0.2}, {115, 0.7, 0.22}});
    InputNormalizer norm;  // identity scaling apart from strike / 100
    norm.target_mean = 0.21;
    Matern52Kernel k;
    k.variance = 0.01;
    k.lengthscales = {0.2, 0.8};
    const double noise = 1e-4;
    const GpModel m = GpModel::condition(norm, k, noise, q);

    double a[3][3], y[3], w[3];
    const auto& qs = q.quotes();
    for (int i = 0; i < 3; ++i) {
        y[i] = qs[i].iv - 0.21;
        for (int j = 0; j < 3; ++j)
            a[i][j] = matern_oracle(0.01, 0.2, 0.8, qs[i].strike / 100, qs[i].maturity, qs[j].strike / 100, qs[j].maturity) +
                      (i == j ? noise : 0.0);
    }
    solve3(a, y, w);
    const double ks = 104, ts = 0.8;
    double kv[3], v[3], mean = 0.21;
    for (int i = 0; i < 3; ++i) {
        kv[i] = matern_oracle(0.01, 0.2, 0.8, qs[i].strike / 100, qs[i].maturity, ks / 100, ts);
        mean += kv[i] * w[i];
    }
    solve3(a, kv, v);
    double var = 0.01;
    for (int i = 0; i < 3; ++i) var -= kv[i] * v[i];

    const Prediction p = m.predict({{ks, ts}});
    CHECK(std::abs(p.mean(0) - mean) < 1e-10);
    CHECK(std::abs(p.variance(0) - var) < 1e-10);
}

TEST_CASE("interpolation and prior reversion") {
    const QuoteSet q(Task::Target, {{90, 0.5, 0.25}, {100, 1.0, 0.2}, {115, 0.7, 0.22}, {100, 0.3, 0.24}});
    const InputNormalizer norm = InputNormalizer::from_quotes(q, 100);
    Matern52Kernel k;
    k.variance = 0.001;
    k.lengthscales = {0.1, 0.3};
    const GpModel m = GpModel::condition(norm, k, 1e-10, q);
    for (const auto& x : q.quotes()) CHECK(std::abs(m.predict_mean(x.strike, x.maturity) - x.iv) < 1e-6);
    const Prediction far = m.predict({{1e4, 50.0}});
    CHECK(far.mean(0) == doctest::Approx(norm.target_mean).epsilon(1e-12));
    CHECK(far.variance(0) == doctest::Approx(k.variance).epsilon(1e-12));
    const Prediction at = m.predict({{100, 1.0}});
    CHECK(at.variance(0) > 0.0);
    CHECK(at.variance(0) <= k.variance + 1e-10);
}

TEST_CASE("NLML gradient matches central differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 25; ++i) qs.push_back({70 + 90 * u(rng), 0.1 + 2.9 * u(rng), 0.2 + 0.05 * u(rng)});
    const QuoteSet q(Task::Target, qs);
    const InputNormalizer norm = InputNormalizer::from_quotes(q, 100);
    const Eigen::MatrixX2d x = norm.inputs(q.quotes());
    const Eigen::VectorXd y = norm.centred_targets(q.quotes());
    const GpParameterization param{GpOptions{}};
    for (int trial = 0; trial < 10; ++trial) {
        optim::Vector t(4);
        t << std::log(1e-3) + u(rng), 2 * u(rng) - 1, 2 * u(rng) - 1, std::log(1e-5) + 3 * u(rng);
        optim::Vector g;
        gp_nlml(param, t, x, y, &g);
        const optim::Vector n = optim::numeric_gradient([&](const optim::Vector& z) { return gp_nlml(param, z, x, y, nullptr); }, t);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(g(i) - n(i)) <= 1e-4 * std::max(1.0, std::abs(n(i))));
    }
}

TEST_CASE("fit recovers lengthscales of known GP draws") {
    // inputs already in normalised units: spot 1, max maturity 1. One draw is a
    // single sample of a noisy estimator, so the factor-2 check is on the median of ten.
    Matern52Kernel truth;
    truth.variance = 0.01;
    truth.lengthscales = {0.3, 0.5};
    std::array<std::vector<double>, 2> fitted;
    for (int seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0, 1);
        std::normal_distribution<double> z(0, 1);
        std::vector<OptionQuote> qs;
        for (int i = 0; i < 49; ++i) qs.push_back({0.5 + u(rng), 0.02 + 0.97 * u(rng), 0});
        qs.push_back({1.0, 1.0, 0});
        const std::size_t n = qs.size();
        Eigen::MatrixXd kmat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                kmat(i, j) = matern52({qs[i].strike, qs[i].maturity}, {qs[j].strike, qs[j].maturity}, truth);
        kmat.diagonal().array() += 1e-10;
        const Eigen::MatrixXd l = kmat.llt().matrixL();
        Eigen::VectorXd e(n);
        for (auto& v : e) v = z(rng);
        const Eigen::VectorXd f = l * e;
        for (std::size_t i = 0; i < n; ++i) qs[i].iv = 0.3 + f(i) + 0.01 * z(rng);

        GpOptions o;
        o.spot = 1.0;
        const QuoteSet q(Task::Target, qs);
        const GpModel m = fit_gp(q, o);
        // maximum likelihood: never worse than the generating hyperparameters
        CHECK(m.nlml() <= GpModel::condition(m.normalizer(), truth, 1e-4, q).nlml());
        for (int d = 0; d < 2; ++d) fitted[d].push_back(m.kernel().lengthscales[d]);
    }
    for (int d = 0; d < 2; ++d) {
        std::sort(fitted[d].begin(), fitted[d].end());
        const double median = 0.5 * (fitted[d][4] + fitted[d][5]);
        CHECK(median > truth.lengthscales[d] / 2);
        CHECK(median < truth.lengthscales[d] * 2);
    }
}

TEST_CASE("fit never ends above its starting likelihood") {
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 20; ++i) qs.push_back({80.0 + 3 * i, 0.2 + 0.1 * (i % 5), 0.2 + 0.001 * i * (i % 3)});
    const QuoteSet q(Task::Target, qs);
    const GpModel m = fit_gp(q);
    const InputNormalizer norm = InputNormalizer::from_quotes(q, 100);
    const Eigen::VectorXd y = norm.centred_targets(q.quotes());
    Matern52Kernel k0;
    k0.variance = y.squaredNorm() / static_cast<double>(y.size());
    const double nlml0 = GpModel::condition(norm, k0, 1e-4, q).nlml();
    CHECK(m.nlml() <= nlml0);
    CHECK(m.noise_var() >= 1e-8);
    const auto j = m.to_json();
    CHECK(j["kernel"]["lengthscales"].size() == 2);
}

TEST_CASE("near-duplicate inputs with conflicting targets") {
    // QuoteSet forbids exact duplicates; strikes 1e-9 apart are the same contract in practice
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 8; ++i) {
        qs.push_back({90.0 + 5 * i, 0.5, 0.2 + 0.002 * i});
        qs.push_back({90.0 + 5 * i + 1e-9, 0.5, 0.21 + 0.002 * i});
        qs.push_back({90.0 + 5 * i, 1.0, 0.19 + 0.002 * i});
    }
    const GpModel m = fit_gp(QuoteSet(Task::Target, qs));
    CHECK(m.noise_var() > 1e-6);
    const auto p = m.predict({{100.0, 0.5}});
    CHECK(p.variance(0) > 0.0);
}

TEST_CASE("single-maturity data pushes the maturity lengthscale to its cap") {
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 12; ++i) qs.push_back({80.0 + 5 * i, 0.5, 0.25 - 0.004 * i + 0.0003 * i * i});
    GpOptions o;
    const GpModel m = fit_gp(QuoteSet(Task::Target, qs), o);
    CHECK(m.kernel().lengthscales[1] == doctest::Approx(o.lengthscale_hi).epsilon(1e-3));
    CHECK(m.kernel().lengthscales[0] < o.lengthscale_hi);
}

TEST_CASE("predictions are invariant to training-row order") {
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 15; ++i) qs.push_back({75.0 + 6 * i, 0.1 + 0.19 * i, 0.3 - 0.005 * i});
    const QuoteSet a(Task::Target, qs);
    std::reverse(qs.begin(), qs.end());
    std::swap(qs[2], qs[9]);
    const QuoteSet b(Task::Target, qs);
    const InputNormalizer na = InputNormalizer::from_quotes(a, 100);
    Matern52Kernel k;
    k.variance = 1e-3;
    const GpModel ma = GpModel::condition(na, k, 1e-6, a);
    const GpModel mb = GpModel::condition(na, k, 1e-6, b);
    const std::vector<Contract> pts{{95, 0.4}, {130, 2.1}, {70, 3.0}};
    const auto pa = ma.predict(pts), pb = mb.predict(pts);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(pa.mean(i) - pb.mean(i)) < 1e-12);
        CHECK(std::abs(pa.variance(i) - pb.variance(i)) < 1e-12);
    }
}

TEST_CASE("fit_gp needs two quotes") {
    CHECK_THROWS_AS(fit_gp(QuoteSet(Task::Target, {{100, 1, 0.2}})), GpError);
}
