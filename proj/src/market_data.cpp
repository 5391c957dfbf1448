#include "ivsforge/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace ivs {

void MarketConfig::validate() const {
    if (!(spot > 0.0) || !std::isfinite(spot))
        throw std::invalid_argument("MarketConfig: spot must be positive and finite");
    if (!std::isfinite(rate) || !std::isfinite(dividend))
        throw std::invalid_argument("MarketConfig: rate and dividend must be finite");
}

std::string_view to_string(Task task) {
    return task == Task::Source ? "source" : "target";
}

QuoteSet::QuoteSet(Task task, std::vector<OptionQuote> quotes)
    : task_(task), quotes_(std::move(quotes)) {
    std::set<std::pair<double, double>> seen;
    for (std::size_t i = 0; i < quotes_.size(); ++i) {
        const auto& q = quotes_[i];
        if (!(q.strike > 0.0) || !(q.maturity > 0.0) || !(q.iv > 0.0) || !std::isfinite(q.strike) ||
            !std::isfinite(q.maturity) || !std::isfinite(q.iv))
            throw QuoteError("quote " + std::to_string(i) + ": strike, maturity and iv must be positive");
        if (!seen.emplace(q.strike, q.maturity).second)
            throw QuoteError("quote " + std::to_string(i) + ": duplicate (strike, maturity) pair");
    }
}

std::vector<double> QuoteSet::maturities() const {
    std::vector<double> out;
    out.reserve(quotes_.size());
    for (const auto& q : quotes_) out.push_back(q.maturity);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<OptionQuote> QuoteSet::slice(double maturity) const {
    std::vector<OptionQuote> out;
    for (const auto& q : quotes_)
        if (q.maturity == maturity) out.push_back(q);
    std::sort(out.begin(), out.end(),
              [](const OptionQuote& a, const OptionQuote& b) { return a.strike < b.strike; });
    return out;
}

void EvaluationGrid::validate() const {
    auto check = [](const std::vector<double>& v, const char* what) {
        if (v.empty()) throw std::invalid_argument(std::string("EvaluationGrid: no ") + what);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!(v[i] > 0.0)) throw std::invalid_argument(std::string("EvaluationGrid: nonpositive ") + what);
            if (i > 0 && !(v[i] > v[i - 1]))
                throw std::invalid_argument(std::string("EvaluationGrid: ") + what + " not strictly increasing");
        }
    };
    check(maturities, "maturities");
    check(strikes, "strikes");
}

std::vector<Contract> EvaluationGrid::contracts() const {
    std::vector<Contract> out;
    out.reserve(maturities.size() * strikes.size());
    for (double t : maturities)
        for (double k : strikes) out.push_back({k, t});
    return out;
}

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

double parse_field(const std::string& field, std::size_t line_no, const char* name) {
    const std::string f = trim(field);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw QuoteError("line " + std::to_string(line_no) + ": cannot parse " + name + " '" + f + "'");
    return value;
}

}  // namespace

QuoteSet load_quotes_csv(const std::filesystem::path& path, Task task) {
    std::ifstream in(path);
    if (!in) throw QuoteError("cannot open quotes file " + path.string());

    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<OptionQuote> quotes;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen) {
            // tolerate a UTF-8 byte order mark
            if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
            if (trim(line) != "strike,maturity,iv")
                throw QuoteError("line 1: expected header 'strike,maturity,iv'");
            header_seen = true;
            continue;
        }
        if (trim(line).empty()) continue;

        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 3)
            throw QuoteError("line " + std::to_string(line_no) + ": expected 3 fields, got " +
                             std::to_string(fields.size()));

        OptionQuote q{parse_field(fields[0], line_no, "strike"), parse_field(fields[1], line_no, "maturity"),
                      parse_field(fields[2], line_no, "iv")};
        if (!(q.strike > 0.0) || !std::isfinite(q.strike))
            throw QuoteError("line " + std::to_string(line_no) + ": strike must be positive");
        if (!(q.maturity > 0.0) || !std::isfinite(q.maturity))
            throw QuoteError("line " + std::to_string(line_no) + ": maturity must be positive");
        if (!(q.iv > 0.0) || !std::isfinite(q.iv))
            throw QuoteError("line " + std::to_string(line_no) + ": iv must be positive");
        quotes.push_back(q);
    }
    if (!header_seen) throw QuoteError("no quotes: file is empty");
    if (quotes.empty()) throw QuoteError("no quotes");
    return QuoteSet(task, std::move(quotes));
}

StrikeSpacing design_spacing(double maturity) {
    if (maturity <= 0.5) return {2.5, 5.0, 15.0};
    if (maturity <= 1.5) return {5.0, 10.0, 25.0};
    return {10.0, 25.0, 50.0};
}

std::pair<double, double> design_moneyness(double maturity) {
    if (maturity <= 0.5) return {0.7, 1.6};
    return {0.8, 1.4};
}

std::vector<double> design_maturities() {
    return {0.08, 0.17, 0.25, 0.33, 0.42, 0.5, 0.58, 0.67, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0};
}

std::vector<double> design_strikes(const MarketConfig& cfg, double maturity) {
    const double s0 = cfg.spot;
    const auto [m_lo, m_hi] = design_moneyness(maturity);
    const double lo = m_lo * s0;
    const double hi = m_hi * s0;
    const StrikeSpacing sp = design_spacing(maturity);
    const double eps = 1e-9 * s0;

    // Step size is set by the band the current strike sits in.
    auto step = [&](double k) {
        const double d = std::abs(k - s0);
        if (d < kAtmBandHalfWidth * s0 - eps) return sp.atm;
        if (d < kNearBandHalfWidth * s0 - eps) return sp.near;
        return sp.far;
    };

    std::vector<double> strikes{s0};
    for (double k = s0; k + step(k) <= hi + eps;) {
        k += step(k);
        strikes.push_back(k);
    }
    for (double k = s0; k - step(k) >= lo - eps;) {
        k -= step(k);
        strikes.push_back(k);
    }
    std::sort(strikes.begin(), strikes.end());
    return strikes;
}

std::vector<Contract> generate_market_design(const MarketConfig& cfg) {
    cfg.validate();
    std::vector<Contract> out;
    for (double t : design_maturities())
        for (double k : design_strikes(cfg, t)) out.push_back({k, t});
    return out;
}

double forward_price(const MarketConfig& cfg, double tau) {
    return cfg.spot * std::exp((cfg.rate - cfg.dividend) * tau);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    v.back() = hi;
    return v;
}

}  // namespace ivs
