#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ivs {

/// Spot, continuously-compounded rate and dividend yield shared by every pricer.
struct MarketConfig {
    double spot = 100.0;
    double rate = 0.03;
    double dividend = 0.01;

    void validate() const;
};

/// A single implied-volatility observation.
struct OptionQuote {
    double strike = 0.0;
    double maturity = 0.0;
    double iv = 0.0;
};

/// A (strike, maturity) pair without an attached volatility.
struct Contract {
    double strike = 0.0;
    double maturity = 0.0;
};

enum class Task { Source, Target };

std::string_view to_string(Task task);

/// Quotes that all belong to one task. No two quotes share a (strike, maturity) pair.
class QuoteSet {
public:
    QuoteSet() = default;
    QuoteSet(Task task, std::vector<OptionQuote> quotes);

    Task task() const { return task_; }
    const std::vector<OptionQuote>& quotes() const { return quotes_; }
    std::size_t size() const { return quotes_.size(); }
    bool empty() const { return quotes_.empty(); }

    /// Distinct maturities in increasing order.
    std::vector<double> maturities() const;
    /// Quotes with the given maturity, sorted by strike.
    std::vector<OptionQuote> slice(double maturity) const;

private:
    Task task_ = Task::Target;
    std::vector<OptionQuote> quotes_;
};

struct EvaluationGrid {
    std::vector<double> maturities;
    std::vector<double> strikes;

    void validate() const;
    /// Row-major (maturity outer, strike inner) contract list.
    std::vector<Contract> contracts() const;
};

class QuoteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a `strike,maturity,iv` CSV. Errors name the offending line.
QuoteSet load_quotes_csv(const std::filesystem::path& path, Task task);

/// Strike spacing (ATM, near, far) used by the market design at a maturity.
struct StrikeSpacing {
    double atm;
    double near;
    double far;
};

StrikeSpacing design_spacing(double maturity);

/// Moneyness range [lo, hi] of the market design at a maturity.
std::pair<double, double> design_moneyness(double maturity);

/// Maturities of the sparse market design (years).
std::vector<double> design_maturities();

/// Half-widths (as a fraction of spot) of the ATM and near-ATM strike bands.
inline constexpr double kAtmBandHalfWidth = 0.05;
inline constexpr double kNearBandHalfWidth = 0.375;

/// Strikes of one maturity slice of the market design.
std::vector<double> design_strikes(const MarketConfig& cfg, double maturity);

/// The 166-contract sparse "market" design.
std::vector<Contract> generate_market_design(const MarketConfig& cfg);

double forward_price(const MarketConfig& cfg, double tau);

/// Evenly spaced points including both ends.
std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace ivs
