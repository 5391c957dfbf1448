#include "ivsforge/heston.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace ivs {

using cplx = std::complex<double>;

void HestonParams::validate() const {
    if (!(kappa > 0.0) || !(theta > 0.0) || !(nu_vol > 0.0) || !(v0 > 0.0))
        throw std::invalid_argument("HestonParams: kappa, theta, nu_vol and v0 must be positive");
    if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("HestonParams: |rho| must not exceed 1");
}

double FftConfig::lambda() const { return 2.0 * std::numbers::pi / (static_cast<double>(n) * eta()); }

void FftConfig::validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("FftConfig: alpha must be positive");
    if (n < 4 || (n & (n - 1)) != 0) throw std::invalid_argument("FftConfig: n must be a power of two");
    if (!(c > 0.0)) throw std::invalid_argument("FftConfig: c must be positive");
}

namespace {

// log(1 + z) without losing the relative precision of small z.
cplx log1p_c(cplx z) {
    if (std::abs(z) < 1e-4) {
        const cplx z2 = z * z;
        return z - z2 / 2.0 + z2 * z / 3.0 - z2 * z2 / 4.0 + z2 * z2 * z / 5.0;
    }
    return std::log(1.0 + z);
}

}  // namespace

cplx heston_cf(const HestonParams& p, const MarketConfig& cfg, double tau, cplx u) {
    const cplx iu{-u.imag(), u.real()};
    const double nu2 = p.nu_vol * p.nu_vol;
    const cplx b = p.kappa - p.rho * p.nu_vol * iu;
    const cplx q = iu + u * u;
    const cplx d = std::sqrt(b * b + nu2 * q);
    // (b - d) / nu^2 evaluated without cancellation, so nu_vol -> 0 stays exact.
    const cplx bd_over_nu2 = -q / (b + d);
    const cplx g = nu2 * bd_over_nu2 / (b + d);
    const cplx e = std::exp(-d * tau);
    const cplx one_minus_ge = 1.0 - g * e;

    // log((1 - g e) / (1 - g)) = log1p(g (1 - e) / (1 - g))
    const cplx log_ratio = log1p_c(g * (1.0 - e) / (1.0 - g));
    const cplx log_ratio_over_nu2 = log_ratio / nu2;

    const cplx big_c = p.kappa * p.theta * (bd_over_nu2 * tau - 2.0 * log_ratio_over_nu2);
    const cplx big_d = bd_over_nu2 * (1.0 - e) / one_minus_ge;
    const double drift = std::log(cfg.spot) + (cfg.rate - cfg.dividend) * tau;
    return std::exp(iu * drift + big_c + big_d * p.v0);
}

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Owns an in-place FFTW buffer and plan; the planner itself is not thread-safe.
class FftBuffer {
public:
    explicit FftBuffer(std::size_t n) : n_(n) {
        data_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!data_) throw HestonError("FFT buffer allocation failed");
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_1d(static_cast<int>(n), data_, data_, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~FftBuffer() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(data_);
    }
    FftBuffer(const FftBuffer&) = delete;
    FftBuffer& operator=(const FftBuffer&) = delete;

    cplx* data() { return reinterpret_cast<cplx*>(data_); }
    void execute() { fftw_execute(plan_); }

private:
    std::size_t n_;
    fftw_complex* data_ = nullptr;
    fftw_plan plan_ = nullptr;
};

// Four-point Lagrange interpolation on a uniform grid.
double lagrange4(const std::vector<double>& y, double pos) {
    const auto n = static_cast<std::ptrdiff_t>(y.size());
    auto i = static_cast<std::ptrdiff_t>(std::floor(pos));
    i = std::clamp<std::ptrdiff_t>(i, 1, n - 3);
    const double t = pos - static_cast<double>(i);
    // nodes at -1, 0, 1, 2 relative to i
    const double l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
    const double l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    const double l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    const double l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
    return l0 * y[i - 1] + l1 * y[i] + l2 * y[i + 1] + l3 * y[i + 2];
}

}  // namespace

std::vector<double> carr_madan_slice(const HestonParams& p, const MarketConfig& cfg, double tau,
                                     const std::vector<double>& strikes, const FftConfig& fft) {
    p.validate();
    cfg.validate();
    fft.validate();
    if (!(tau > 0.0)) throw HestonError("carr_madan_slice: maturity must be positive");

    const std::size_t n = fft.n;
    const double eta = fft.eta();
    const double lambda = fft.lambda();
    const double alpha = fft.alpha;
    // log-strike grid k_j = k_mid + lambda (j - n/2), centred on log spot
    const double k_mid = std::log(cfg.spot);
    const double k_start = k_mid - lambda * static_cast<double>(n / 2);
    const double half_span = lambda * static_cast<double>(n / 2);

    for (double k : strikes) {
        if (!(k > 0.0)) throw HestonError("carr_madan_slice: strike must be positive");
        const double lk = std::log(k);
        if (std::abs(lk - k_mid) > half_span - 4.0 * lambda)
            throw HestonError("carr_madan_slice: strike " + std::to_string(k) + " outside the FFT log-strike span");
    }

    const double discount = std::exp(-cfg.rate * tau);
    FftBuffer buf(n);
    cplx* x = buf.data();
    bool tail_zero = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (tail_zero) {
            x[j] = 0.0;
            continue;
        }
        const double v = eta * static_cast<double>(j);
        const cplx u{v, -(alpha + 1.0)};
        const cplx phi = heston_cf(p, cfg, tau, u);
        const cplx denom{alpha * alpha + alpha - v * v, (2.0 * alpha + 1.0) * v};
        const cplx psi = discount * phi / denom;
        if (!std::isfinite(psi.real()) || !std::isfinite(psi.imag()))
            throw HestonError("carr_madan_slice: non-finite characteristic function at v=" + std::to_string(v));
        // Simpson weights 1/3, 4/3, 2/3, 4/3, ...
        const double w = j == 0 ? 1.0 / 3.0 : ((j % 2 == 1) ? 4.0 / 3.0 : 2.0 / 3.0);
        const cplx shift = std::polar(1.0, -k_start * v);
        x[j] = shift * psi * (eta * w);
        // once the integrand has decayed below double range, the rest is zero
        if (j > 16 && std::abs(psi) < 1e-300) tail_zero = true;
    }
    buf.execute();

    // damped values exp(alpha k) C(k) on the grid; only a window around the strikes is needed
    double k_min = std::numeric_limits<double>::infinity();
    double k_max = -k_min;
    for (double k : strikes) {
        k_min = std::min(k_min, std::log(k));
        k_max = std::max(k_max, std::log(k));
    }
    if (strikes.empty()) return {};
    const auto j_lo = static_cast<std::size_t>(std::floor((k_min - k_start) / lambda)) - 2;
    const auto j_hi = static_cast<std::size_t>(std::ceil((k_max - k_start) / lambda)) + 2;
    std::vector<double> damped(j_hi - j_lo + 1);
    for (std::size_t j = j_lo; j <= j_hi; ++j) damped[j - j_lo] = x[j].real() / std::numbers::pi;

    std::vector<double> prices;
    prices.reserve(strikes.size());
    const double fwd = forward_price(cfg, tau);
    const double upper = cfg.spot * std::exp(-cfg.dividend * tau);
    for (double k : strikes) {
        const double lk = std::log(k);
        const double pos = (lk - k_start) / lambda - static_cast<double>(j_lo);
        const double value = std::exp(-alpha * lk) * lagrange4(damped, pos);
        if (!std::isfinite(value)) throw HestonError("carr_madan_slice: non-finite price");
        // clip to the static no-arbitrage band
        const double lower = discount * std::max(fwd - k, 0.0);
        prices.push_back(std::clamp(value, lower, upper));
    }
    return prices;
}

HestonSurface heston_iv_surface(const HestonParams& p, const MarketConfig& cfg, const std::vector<Contract>& contracts,
                                const IvSolverConfig& solver, const FftConfig& fft) {
    std::map<double, std::vector<std::size_t>> by_maturity;
    for (std::size_t i = 0; i < contracts.size(); ++i) by_maturity[contracts[i].maturity].push_back(i);

    std::vector<double> ivs(contracts.size(), 0.0);
    std::vector<bool> ok(contracts.size(), false);
    HestonSurface out;
    for (const auto& [tau, idx] : by_maturity) {
        std::vector<double> strikes;
        for (auto i : idx) strikes.push_back(contracts[i].strike);
        std::vector<double> prices;
        try {
            prices = carr_madan_slice(p, cfg, tau, strikes, fft);
        } catch (const std::exception& e) {
            for (auto i : idx) out.dropped.push_back({contracts[i], e.what()});
            continue;
        }
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const auto i = idx[j];
            try {
                ivs[i] = implied_vol(cfg, contracts[i].strike, tau, prices[j], solver);
                ok[i] = true;
            } catch (const std::exception& e) {
                out.dropped.push_back({contracts[i], e.what()});
            }
        }
    }
    std::vector<OptionQuote> quotes;
    for (std::size_t i = 0; i < contracts.size(); ++i)
        if (ok[i]) quotes.push_back({contracts[i].strike, contracts[i].maturity, ivs[i]});
    out.quotes = QuoteSet(Task::Target, std::move(quotes));
    return out;
}

const std::vector<RegimePreset>& builtin_presets() {
    static const std::vector<RegimePreset> presets{
        {"Base", {1.0, 0.09, 0.8, -0.8, 0.09}},
        {"Moderate Mean-Rev", {2.0, 0.09, 0.8, -0.8, 0.09}},
        {"Low Mean-Rev", {0.5, 0.09, 0.8, -0.8, 0.09}},
        {"High Vol-Regime", {1.0, 0.16, 0.9, -0.8, 0.16}},
        {"Low Vol-Regime", {1.0, 0.04, 0.4, -0.8, 0.04}},
        {"Moderate Correlation", {1.0, 0.09, 0.8, -0.5, 0.09}},
        {"Strong Correlation", {1.0, 0.09, 0.8, -0.9, 0.09}},
        {"Term Structure Up", {1.0, 0.16, 0.8, -0.8, 0.09}},
        {"Term Structure Down", {1.0, 0.04, 0.8, -0.8, 0.16}},
        {"Mixed Regime", {1.5, 0.12, 0.6, -0.6, 0.12}},
    };
    return presets;
}

const RegimePreset& find_preset(const std::string& name) {
    for (const auto& p : builtin_presets())
        if (p.name == name) return p;
    throw std::out_of_range("unknown preset '" + name + "'");
}

}  // namespace ivs
