#include "ivsforge/sabr.hpp"

#include "ivsforge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace ivs {

void SabrSliceParams::validate() const {
    if (!(alpha > 0.0)) throw SabrError("SABR alpha must be positive");
    if (!(nu >= 0.0)) throw SabrError("SABR nu must be nonnegative");
    if (!(std::abs(rho) < 1.0)) throw SabrError("SABR |rho| must be below 1");
    if (!(beta >= 0.0 && beta <= 1.0)) throw SabrError("SABR beta must lie in [0, 1]");
}

void CalibrationBounds::validate() const {
    if (!(alpha_lo < alpha_hi) || !(rho_lo < rho_hi) || !(nu_lo < nu_hi))
        throw SabrError("CalibrationBounds: lower bound must be below upper bound");
}

bool CalibrationBounds::contains(const SabrSliceParams& p) const {
    return p.alpha > alpha_lo && p.alpha < alpha_hi && p.rho > rho_lo && p.rho < rho_hi && p.nu > nu_lo &&
           p.nu < nu_hi;
}

SabrTermStructure::SabrTermStructure(std::vector<SabrSliceParams> slices, double beta, double scale)
    : slices_(std::move(slices)), beta_(beta), scale_(scale) {
    if (!(scale_ > 0.0)) throw SabrError("SabrTermStructure: scale must be positive");
    std::sort(slices_.begin(), slices_.end(),
              [](const auto& a, const auto& b) { return a.maturity < b.maturity; });
    for (std::size_t i = 0; i < slices_.size(); ++i) {
        if (slices_[i].beta != beta_) throw SabrError("SabrTermStructure: slices must share beta");
        if (i > 0 && !(slices_[i].maturity > slices_[i - 1].maturity))
            throw SabrError("SabrTermStructure: maturities must be strictly increasing");
    }
}

void SynthesisConfig::validate() const {
    if (n_strikes < 2 || n_maturities < 2) throw SabrError("SynthesisConfig: grid needs at least 2 points per axis");
    if (!(noise_sd >= 0.0)) throw SabrError("SynthesisConfig: noise_sd must be nonnegative");
    if (!(strike_lo > 0.0 && strike_hi > strike_lo && maturity_lo > 0.0 && maturity_hi > maturity_lo))
        throw SabrError("SynthesisConfig: invalid grid ranges");
}

double z_over_chi(double z, double rho) {
    if (std::abs(z) < 1e-6) return 1.0 - 0.5 * rho * z + (2.0 - 3.0 * rho * rho) * z * z / 12.0;
    const double root = std::sqrt(1.0 - 2.0 * rho * z + z * z);
    // for z < 0 use chi(z; rho) = -chi(-z; -rho), which avoids cancellation in root + z
    const double chi = z > 0.0 ? std::log((root + z - rho) / (1.0 - rho)) : -std::log((root - z + rho) / (1.0 + rho));
    return z / chi;
}

double hagan_iv(const SabrSliceParams& p, double strike, double forward, double tau) {
    const double a = p.alpha, b = p.beta, r = p.rho, n = p.nu;
    const double omb = 1.0 - b;
    if (strike == forward) {
        const double f1b = std::pow(forward, omb);
        const double corr = omb * omb * a * a / (24.0 * f1b * f1b) + r * b * a * n / (4.0 * f1b) +
                            (2.0 - 3.0 * r * r) / 24.0 * n * n;
        return a / f1b * (1.0 + corr * tau);
    }
    const double fk_half = std::pow(forward * strike, 0.5 * omb);  // (FK)^{(1-beta)/2}
    const double log_fk = std::log(forward / strike);
    const double z = n / a * fk_half * log_fk;
    const double l2 = log_fk * log_fk;
    const double denom = 1.0 + omb * omb / 24.0 * l2 + std::pow(omb, 4) / 1920.0 * l2 * l2;
    const double i0 = a * z_over_chi(z, r) / fk_half / denom;
    const double i1 = omb * omb * a * a / (24.0 * fk_half * fk_half) + r * b * n * a / (4.0 * fk_half) +
                      (2.0 - 3.0 * r * r) / 24.0 * n * n;
    return i0 * (1.0 + i1 * tau);
}

namespace {

double smile_sse(const std::vector<OptionQuote>& smile, double forward, const SabrSliceParams& p) {
    double sse = 0.0;
    for (const auto& q : smile) {
        const double e = hagan_iv(p, q.strike, forward, q.maturity) - q.iv;
        sse += e * e;
    }
    return sse;
}

double atm_vol(const std::vector<OptionQuote>& smile, double forward) {
    if (forward <= smile.front().strike) return smile.front().iv;
    if (forward >= smile.back().strike) return smile.back().iv;
    for (std::size_t i = 1; i < smile.size(); ++i) {
        if (smile[i].strike >= forward) {
            const double w = (forward - smile[i - 1].strike) / (smile[i].strike - smile[i - 1].strike);
            return smile[i - 1].iv + w * (smile[i].iv - smile[i - 1].iv);
        }
    }
    return smile.back().iv;
}

}  // namespace

SliceCalibration calibrate_slice(const std::vector<OptionQuote>& smile_in, double forward, double beta,
                                 const CalibrationBounds& bounds, const SliceCalibrationOptions& opts) {
    if (smile_in.size() < 3) throw SabrError("calibrate_slice: need at least 3 quotes, got " + std::to_string(smile_in.size()));
    bounds.validate();
    std::vector<OptionQuote> smile = smile_in;
    std::sort(smile.begin(), smile.end(), [](const auto& a, const auto& b) { return a.strike < b.strike; });
    const double tau = smile.front().maturity;
    for (const auto& q : smile)
        if (q.maturity != tau) throw SabrError("calibrate_slice: quotes span more than one maturity");

    const optim::IntervalTransform ta(bounds.alpha_lo, bounds.alpha_hi);
    const optim::IntervalTransform tr(bounds.rho_lo, bounds.rho_hi);
    const optim::IntervalTransform tn(bounds.nu_lo, bounds.nu_hi);
    auto to_params = [&](const optim::Vector& y) {
        return SabrSliceParams{ta.to_bounded(y(0)), beta, tr.to_bounded(y(1)), tn.to_bounded(y(2)), tau};
    };
    auto to_unbounded = [&](double a, double r, double n) {
        auto inside = [](const optim::IntervalTransform& t, double v) {
            const double margin = 1e-3 * (t.hi() - t.lo());
            return t.to_unbounded(std::clamp(v, t.lo() + margin, t.hi() - margin));
        };
        optim::Vector y(3);
        y << inside(ta, a), inside(tr, r), inside(tn, n);
        return y;
    };
    auto objective = [&](const optim::Vector& y) { return smile_sse(smile, forward, to_params(y)); };

    optim::NelderMeadOptions nm;
    nm.max_iter = opts.max_iter;
    nm.f_tol = opts.f_tol;
    nm.x_tol = opts.x_tol;

    auto run = [&](optim::Vector start) {
        optim::OptimResult best = optim::nelder_mead(objective, start, nm);
        // restart from the optimum with a fresh simplex until it stops improving
        for (int round = 0; round < opts.polish_rounds; ++round) {
            optim::NelderMeadOptions polish = nm;
            polish.initial_step = 0.02;
            const optim::OptimResult again = optim::nelder_mead(objective, best.x_min, polish);
            const bool improved = again.f_min < best.f_min * (1.0 - 1e-10);
            if (again.f_min <= best.f_min) best = again;
            if (!improved) break;
        }
        return best;
    };

    const double alpha0 = atm_vol(smile, forward) * std::pow(forward, 1.0 - beta);
    const optim::Vector y0 = to_unbounded(alpha0, -0.5, 0.5);
    SliceCalibration out;
    out.initial_objective = objective(y0);
    optim::OptimResult best = run(y0);

    const double mse = best.f_min / static_cast<double>(smile.size());
    if (mse > opts.restart_mse) {
        const optim::OptimResult other = run(to_unbounded(alpha0 * 0.8, -0.2, 1.0));
        if (other.f_min < best.f_min) best = other;
    }
    // At long maturities the ATM level is not monotone in alpha, so the
    // ATM-anchored start can sit on the wrong branch; sweep alpha across its
    // range, with one start near the rho = 0 edge where the logit map is flat.
    for (int i = 0; i < opts.alpha_starts; ++i) {
        const double a = bounds.alpha_lo * std::pow(bounds.alpha_hi / bounds.alpha_lo, (i + 0.5) / opts.alpha_starts);
        for (double r : {0.5 * (bounds.rho_lo + bounds.rho_hi), bounds.rho_hi - 0.05 * (bounds.rho_hi - bounds.rho_lo)}) {
            const optim::OptimResult other = run(to_unbounded(a, r, 0.5));
            if (other.f_min < best.f_min) best = other;
        }
    }
    out.params = to_params(best.x_min);
    out.objective = best.f_min;
    out.converged = best.converged;
    if (out.objective > out.initial_objective) {
        out.params = to_params(y0);
        out.objective = out.initial_objective;
    }
    return out;
}

SabrTermStructure calibrate_term_structure(const QuoteSet& quotes, const MarketConfig& cfg, double beta,
                                           const CalibrationBounds& bounds) {
    std::vector<SabrSliceParams> slices;
    for (double tau : quotes.maturities()) {
        auto smile = quotes.slice(tau);
        if (smile.size() < 3) continue;
        for (auto& q : smile) q.strike /= cfg.spot;
        slices.push_back(calibrate_slice(smile, forward_price(cfg, tau) / cfg.spot, beta, bounds).params);
    }
    if (slices.empty()) throw SabrError("calibrate_term_structure: no maturity slice has 3 or more quotes");
    return SabrTermStructure(std::move(slices), beta, cfg.spot);
}

SabrSliceParams interp_params(const SabrTermStructure& ts, double tau) {
    const auto& s = ts.slices();
    if (s.empty()) throw SabrError("interp_params: empty term structure");
    SabrSliceParams out;
    if (tau <= s.front().maturity) {
        out = s.front();
    } else if (tau >= s.back().maturity) {
        out = s.back();
    } else {
        const auto it = std::lower_bound(s.begin(), s.end(), tau,
                                         [](const SabrSliceParams& p, double t) { return p.maturity < t; });
        if (it->maturity == tau) {
            out = *it;
        } else {
            const auto& hi = *it;
            const auto& lo = *(it - 1);
            const double w = (tau - lo.maturity) / (hi.maturity - lo.maturity);
            out.alpha = lo.alpha + w * (hi.alpha - lo.alpha);
            out.rho = lo.rho + w * (hi.rho - lo.rho);
            out.nu = lo.nu + w * (hi.nu - lo.nu);
        }
    }
    out.beta = ts.beta();
    out.maturity = tau;
    return out;
}

double sabr_surface_iv(const SabrTermStructure& ts, const MarketConfig& cfg, double strike, double tau) {
    return hagan_iv(interp_params(ts, tau), strike / ts.scale(), forward_price(cfg, tau) / ts.scale(), tau);
}

QuoteSet generate_synthetic_dataset(const SabrTermStructure& ts, const MarketConfig& cfg, const SynthesisConfig& syn) {
    syn.validate();
    std::mt19937_64 rng(syn.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto strikes = linspace(syn.strike_lo, syn.strike_hi, syn.n_strikes);
    const auto maturities = linspace(syn.maturity_lo, syn.maturity_hi, syn.n_maturities);
    std::vector<OptionQuote> quotes;
    quotes.reserve(strikes.size() * maturities.size());
    for (double tau : maturities) {
        const SabrSliceParams p = interp_params(ts, tau);
        const double fwd = forward_price(cfg, tau) / ts.scale();
        for (double k : strikes) {
            const double noise = normal(rng);
            const double iv = hagan_iv(p, k / ts.scale(), fwd, tau) + syn.noise_sd * noise;
            quotes.push_back({k, tau, std::max(iv, 1e-4)});
        }
    }
    return QuoteSet(Task::Source, std::move(quotes));
}

void write_term_structure_csv(const SabrTermStructure& ts, std::ostream& out) {
    out << "tau,alpha,beta,rho,nu\n";
    out.precision(17);
    for (const auto& s : ts.slices())
        out << s.maturity << ',' << s.alpha << ',' << s.beta << ',' << s.rho << ',' << s.nu << '\n';
}

}  // namespace ivs
