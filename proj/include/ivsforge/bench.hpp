#pragma once

#include "ivsforge/diagnostics.hpp"
#include "ivsforge/heston.hpp"
#include "ivsforge/market_data.hpp"
#include "ivsforge/mtgp.hpp"
#include "ivsforge/sabr.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ivs {

enum class Method { Sabr, Gp, Mtgp, Spline };

std::string to_string(Method m);
/// Accepts sabr, gp, mtgp, spline. Throws std::invalid_argument otherwise.
Method parse_method(const std::string& s);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::vector<std::string> presets{"all"};
    std::vector<Method> methods{Method::Sabr, Method::Gp, Method::Mtgp, Method::Spline};
    std::vector<double> eval_maturities{0.3, 0.9, 2.2};
    double moneyness_lo = 0.8;
    double moneyness_hi = 1.4;
    std::size_t n_moneyness = 61;
    double beta = 0.5;
    double sigma_syn = 0.01;
    std::uint64_t seed = 42;
    std::filesystem::path output_dir = "out";
    MarketConfig market;
    int gp_restarts = 3;
    int mtgp_restarts = 0;
    int threads = 0;  ///< 0: IVSFORGE_THREADS if set, else hardware concurrency

    void validate() const;
    /// Presets with "all" expanded, in builtin order.
    std::vector<RegimePreset> resolved_presets() const;
    EvaluationGrid eval_grid() const;
    int resolved_threads() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
};

struct CellResult {
    std::string preset;
    Method method = Method::Sabr;
    double maturity = 0.0;  ///< NaN for the overall row
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t count = 0;
    std::size_t excluded = 0;
    std::string error;  ///< non-empty when the cell could not be computed
};

struct ArbitrageCell {
    std::string preset;
    Method method = Method::Sabr;
    double maturity = 0.0;
    ButterflyResult butterfly;
    std::string error;
};

struct CalendarCell {
    std::string preset;
    Method method = Method::Sabr;
    std::size_t violations = 0;
    std::size_t checked = 0;
    std::string error;
};

struct MethodSurface {
    Method method = Method::Sabr;
    std::vector<double> iv;  ///< on the eval grid, maturity-major; NaN where unavailable
};

struct PresetResult {
    std::string preset;
    std::vector<CellResult> errors;
    std::vector<ArbitrageCell> arbitrage;
    std::vector<CalendarCell> calendar;
    std::vector<Contract> eval_points;
    std::vector<double> truth;  ///< Heston iv on the eval grid; NaN where inversion failed
    std::vector<MethodSurface> surfaces;
    std::optional<SabrTermStructure> sabr;
    std::optional<nlohmann::json> mtgp;  ///< hyperparameters and task diagnostics
    std::optional<TaskDiagnostics> task;
    std::size_t target_quotes = 0;
    std::size_t dropped_quotes = 0;
    std::vector<std::pair<Method, double>> fit_seconds;
    std::string error;  ///< data-stage failure (no method could run)
};

struct BenchResult {
    ExperimentConfig config;
    std::vector<PresetResult> presets;
};

/// Per-stage seed derived from the experiment seed, preset name and a stage tag.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& preset, const std::string& stage);

/// Heston truth -> market design -> SABR calibration -> synthetic source grid ->
/// fit each requested method -> score on the eval grid. Stage failures are recorded
/// per cell; the remaining cells still run.
PresetResult run_pipeline(const RegimePreset& preset, const ExperimentConfig& cfg);

/// Runs every resolved preset (in parallel, results in preset order).
BenchResult run_bench(const ExperimentConfig& cfg);

struct SweepRow {
    double value = 0.0;  ///< sigma_syn or beta
    Method method = Method::Sabr;
    double rmse = 0.0;
    double mae = 0.0;
    std::string error;
};

inline const std::vector<double> kNoiseLevels{0.0, 0.005, 0.01, 0.015, 0.02};
inline const std::vector<double> kBetaLevels{0.0, 0.25, 0.5, 0.75, 1.0};

/// Base preset, overall eval-grid error per (sigma_syn, method). The synthetic
/// noise draws are shared across levels (same seed), only their scale changes.
std::vector<SweepRow> sweep_noise(const ExperimentConfig& cfg, const std::vector<double>& levels = kNoiseLevels);
/// Base preset, overall eval-grid error per (beta, method).
std::vector<SweepRow> sweep_beta(const ExperimentConfig& cfg, const std::vector<double>& levels = kBetaLevels);

/// errors.csv, errors_table.md, arbitrage.csv, calendar.csv, task_diag.json,
/// sabr/<preset>.csv, surfaces/<preset>_<method>.csv, timing.csv, config.json.
void emit_outputs(const BenchResult& result, const std::filesystem::path& dir);
/// `<param>,method,rmse,mae`.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& param, const std::filesystem::path& path);

/// Real-data path: the quotes are the target task; the SABR source grid is
/// synthesised from a calibration to those quotes. Writes the fitted surface
/// on a strike x maturity grid spanning the quotes, plus model JSON.
void run_fit(const std::filesystem::path& quotes_csv, Method method, const ExperimentConfig& cfg,
             const std::filesystem::path& out_dir);

}  // namespace ivs
