#pragma once

#include "ivsforge/black_scholes.hpp"
#include "ivsforge/market_data.hpp"

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ivs {

struct HestonParams {
    double kappa = 1.0;   ///< mean-reversion speed
    double theta = 0.09;  ///< long-run variance
    double nu_vol = 0.8;  ///< volatility of variance
    double rho = -0.8;
    double v0 = 0.09;

    void validate() const;
};

/// Carr-Madan grid. eta = c / N is the frequency spacing and
/// lambda = 2 pi / (N eta) the log-strike spacing.
struct FftConfig {
    double alpha = 2.5;
    std::size_t n = std::size_t{1} << 21;
    double c = 12800.0;

    double eta() const { return c / static_cast<double>(n); }
    double lambda() const;
    void validate() const;
};

struct RegimePreset {
    std::string name;
    HestonParams params;
};

class HestonError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// E[exp(i u ln S_tau)] in the branch-cut-stable ("little trap") form.
/// Valid for complex u inside the strip of finite moments.
std::complex<double> heston_cf(const HestonParams& p, const MarketConfig& cfg, double tau, std::complex<double> u);

/// Call prices at the given strikes from one Carr-Madan FFT at maturity tau.
std::vector<double> carr_madan_slice(const HestonParams& p, const MarketConfig& cfg, double tau,
                                     const std::vector<double>& strikes, const FftConfig& fft = {});

struct DroppedContract {
    Contract contract;
    std::string reason;
};

struct HestonSurface {
    QuoteSet quotes;  ///< target-task quotes that survived inversion
    std::vector<DroppedContract> dropped;
};

/// Prices every contract (one FFT per distinct maturity) and inverts to implied vol.
/// Contracts whose price cannot be inverted are dropped with a reason.
HestonSurface heston_iv_surface(const HestonParams& p, const MarketConfig& cfg, const std::vector<Contract>& contracts,
                                const IvSolverConfig& solver = {}, const FftConfig& fft = {});

/// The ten regimes used for robustness runs.
const std::vector<RegimePreset>& builtin_presets();

/// Looks up a preset by name; throws std::out_of_range if unknown.
const RegimePreset& find_preset(const std::string& name);

}  // namespace ivs
