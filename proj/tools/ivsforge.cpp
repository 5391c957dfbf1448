// ivsforge command-line front end.
#include "ivsforge/bench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>

namespace {

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> presets;
    std::vector<std::string> methods;
    std::uint64_t seed = 42;
    std::string out = "out";
    double beta = 0.5;
    double sigma_syn = 0.01;
    int threads = 0;
    int gp_restarts = 3;
    int mtgp_restarts = 0;
    double spot = 100.0, rate = 0.03, dividend = 0.01;
};

struct Bound {
    CLI::Option* presets = nullptr;
    CLI::Option* methods = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* beta = nullptr;
    CLI::Option* sigma = nullptr;
    CLI::Option* threads = nullptr;
    CLI::Option* gp_restarts = nullptr;
    CLI::Option* mtgp_restarts = nullptr;
    CLI::Option* spot = nullptr;
    CLI::Option* rate = nullptr;
    CLI::Option* dividend = nullptr;
};

Bound add_common(CLI::App* app, CommonOptions& o, bool with_presets) {
    Bound b;
    app->add_option("--config", o.config_path, "JSON file mirroring the experiment config")->check(CLI::ExistingFile);
    if (with_presets)
        b.presets = app->add_option("--presets", o.presets, "Preset names, comma separated, or 'all'")->delimiter(',');
    b.methods = app->add_option("--methods", o.methods, "Subset of sabr,gp,mtgp,spline")->delimiter(',');
    b.seed = app->add_option("--seed", o.seed, "Experiment seed");
    b.out = app->add_option("--out", o.out, "Output directory");
    b.beta = app->add_option("--beta", o.beta, "SABR beta");
    b.sigma = app->add_option("--sigma-syn", o.sigma_syn, "Synthetic source noise s.d.");
    b.threads = app->add_option("--threads", o.threads, "Worker threads (default: IVSFORGE_THREADS or all cores)");
    b.gp_restarts = app->add_option("--gp-restarts", o.gp_restarts, "Random restarts for the single-task GP");
    b.mtgp_restarts = app->add_option("--mtgp-restarts", o.mtgp_restarts, "Random restarts for the multitask GP");
    b.spot = app->add_option("--spot", o.spot, "Spot price");
    b.rate = app->add_option("--rate", o.rate, "Risk-free rate");
    b.dividend = app->add_option("--div", o.dividend, "Dividend yield");
    return b;
}

ivs::ExperimentConfig build_config(const CommonOptions& o, const Bound& b) {
    ivs::ExperimentConfig c = o.config_path.empty() ? ivs::ExperimentConfig{} : ivs::ExperimentConfig::load(o.config_path);
    if (b.presets && b.presets->count()) c.presets = o.presets;
    if (b.methods->count()) {
        c.methods.clear();
        for (const auto& m : o.methods) c.methods.push_back(ivs::parse_method(m));
    }
    if (b.seed->count()) c.seed = o.seed;
    if (b.out->count() || o.config_path.empty()) c.output_dir = o.out;
    if (b.beta->count()) c.beta = o.beta;
    if (b.sigma->count()) c.sigma_syn = o.sigma_syn;
    if (b.threads->count()) c.threads = o.threads;
    if (b.gp_restarts->count()) c.gp_restarts = o.gp_restarts;
    if (b.mtgp_restarts->count()) c.mtgp_restarts = o.mtgp_restarts;
    if (b.spot->count()) c.market.spot = o.spot;
    if (b.rate->count()) c.market.rate = o.rate;
    if (b.dividend->count()) c.market.dividend = o.dividend;
    c.validate();
    return c;
}

void print_errors(const ivs::BenchResult& r) {
    for (const auto& p : r.presets) {
        for (const auto& e : p.errors) {
            if (!std::isnan(e.maturity)) continue;
            std::cout << p.preset << "  " << ivs::to_string(e.method) << "  overall RMSE x1e-3 = ";
            if (e.error.empty())
                std::cout << e.rmse * 1e3;
            else
                std::cout << "failed (" << e.error << ")";
            std::cout << '\n';
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Implied volatility surfaces from sparse quotes with SABR-informed multitask GPs"};
    app.require_subcommand(1);

    CommonOptions bench_o, noise_o, beta_o, fit_o;
    auto* bench = app.add_subcommand("bench", "Ten-regime benchmark against Heston ground truth");
    const Bound bench_b = add_common(bench, bench_o, true);

    auto* noise = app.add_subcommand("sweep-noise", "Base preset, source-noise sensitivity");
    const Bound noise_b = add_common(noise, noise_o, false);

    auto* beta = app.add_subcommand("sweep-beta", "Base preset, SABR beta sensitivity");
    const Bound beta_b = add_common(beta, beta_o, false);

    auto* fit = app.add_subcommand("fit", "Fit a surface to a strike,maturity,iv quote file");
    const Bound fit_b = add_common(fit, fit_o, false);
    std::string quotes_path, fit_method = "mtgp";
    fit->add_option("--quotes", quotes_path, "Quote CSV (strike,maturity,iv)")->required()->check(CLI::ExistingFile);
    fit->add_option("--method", fit_method, "sabr, gp, mtgp or spline");

    auto* presets = app.add_subcommand("presets", "Print the built-in Heston regimes as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (*bench) {
            const auto cfg = build_config(bench_o, bench_b);
            const auto result = ivs::run_bench(cfg);
            ivs::emit_outputs(result, cfg.output_dir);
            print_errors(result);
        } else if (*noise) {
            const auto cfg = build_config(noise_o, noise_b);
            std::filesystem::create_directories(cfg.output_dir);
            ivs::write_sweep_csv(ivs::sweep_noise(cfg), "sigma_syn", cfg.output_dir / "sweep_noise.csv");
        } else if (*beta) {
            const auto cfg = build_config(beta_o, beta_b);
            std::filesystem::create_directories(cfg.output_dir);
            ivs::write_sweep_csv(ivs::sweep_beta(cfg), "beta", cfg.output_dir / "sweep_beta.csv");
        } else if (*fit) {
            const auto cfg = build_config(fit_o, fit_b);
            ivs::run_fit(quotes_path, ivs::parse_method(fit_method), cfg, cfg.output_dir);
        } else if (*presets) {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& p : ivs::builtin_presets())
                j.push_back({{"name", p.name},
                             {"kappa", p.params.kappa},
                             {"theta", p.params.theta},
                             {"sigma", p.params.nu_vol},
                             {"rho", p.params.rho},
                             {"v0", p.params.v0}});
            std::cout << j.dump(2) << '\n';
            return 0;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "done in " << secs << " s\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
