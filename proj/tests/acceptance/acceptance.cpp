// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
// usage: acceptance <work-dir>   (env IVSFORGE_CLI overrides the CLI path baked in at build time)

#include "ivsforge/bench.hpp"
#include "ivsforge/black_scholes.hpp"
#include "ivsforge/heston.hpp"
#include "ivsforge/mtgp.hpp"
#include "ivsforge/sabr.hpp"

#include "oracle/heston_lewis.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ivs;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, double seconds) {
    if (!ok) ++failures;
    std::printf("%s [%d] %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Runs one criterion; an exception is a failure with its message as detail.
void criterion(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = Clock::now();
    try {
        const auto [ok, detail] = body();
        report(id, ok, what, detail, since(t0));
    } catch (const std::exception& e) {
        report(id, false, what, std::string("exception: ") + e.what(), since(t0));
    }
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        rows.push_back(f);
    }
    return rows;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string cli;

fs::path work_dir;

// stdout and stderr of each CLI call go to <work-dir>/cli.log
double run_cli(const std::string& args) {
    const std::string cmd = cli + " " + args + " >> '" + (work_dir / "cli.log").string() + "' 2>&1";
    const auto t0 = Clock::now();
    const int rc = std::system(cmd.c_str());
    if (rc != 0) throw std::runtime_error("'" + cmd + "' exited with " + std::to_string(rc));
    return since(t0);
}

// errors.csv -> (preset, method, maturity label) -> rmse
using ErrorTable = std::map<std::tuple<std::string, std::string, std::string>, double>;

ErrorTable load_errors(const fs::path& p) {
    ErrorTable t;
    for (const auto& r : read_csv(p)) {
        if (r.size() != 5) throw std::runtime_error("malformed errors.csv row");
        std::string mat = r[2];
        if (mat != "all") mat = num(std::stod(mat));
        t[{r[0], r[1], mat}] = std::stod(r[3]);
    }
    return t;
}

double lookup(const ErrorTable& t, const std::string& preset, const std::string& method, const std::string& mat) {
    const auto it = t.find({preset, method, mat});
    if (it == t.end()) throw std::runtime_error("missing errors.csv cell " + preset + "/" + method + "/" + mat);
    return it->second;
}

// (value, method) -> rmse from a sweep csv
std::map<std::pair<double, std::string>, double> load_sweep(const fs::path& p) {
    std::map<std::pair<double, std::string>, double> m;
    for (const auto& r : read_csv(p)) m[{std::stod(r[0]), r[1]}] = std::stod(r[2]);
    return m;
}

std::vector<OptionQuote> scatter(std::mt19937_64& rng, int n, double shift) {
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<OptionQuote> qs;
    for (int i = 0; i < n; ++i) {
        const double k = 70 + 90 * u(rng), t = 0.1 + 2.9 * u(rng), m = k / 100 - 1;
        qs.push_back({k, t, 0.2 + shift - 0.1 * m + 0.15 * m * m + 0.01 * std::sqrt(t)});
    }
    return qs;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <work-dir>\n");
        return 2;
    }
    const fs::path work = argv[1];
    fs::create_directories(work);
    work_dir = work;
    fs::remove(work / "cli.log");
#ifdef IVSFORGE_CLI
    cli = IVSFORGE_CLI;
#endif
    if (const char* c = std::getenv("IVSFORGE_CLI")) cli = c;
    const MarketConfig cfg;

    criterion(1, "FFT grid stability on the base design", [&] {
        const auto& p = find_preset("Base").params;
        std::map<double, std::vector<double>> by_tau;
        for (const auto& c : generate_market_design(cfg)) by_tau[c.maturity].push_back(c.strike);
        FftConfig fine;
        fine.n *= 2;
        fine.c *= 2;
        double worst = 0;
        std::size_t n = 0;
        for (const auto& [tau, ks] : by_tau) {
            const auto a = carr_madan_slice(p, cfg, tau, ks), b = carr_madan_slice(p, cfg, tau, ks, fine);
            for (std::size_t i = 0; i < ks.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
            n += ks.size();
        }
        return std::pair{n == 166 && worst < 1e-6, "max |dC| " + num(worst) + " over " + std::to_string(n) + " contracts"};
    });

    criterion(2, "FFT vs quadrature oracle, all presets", [&] {
        double worst = 0;
        std::string where;
        for (const auto& preset : builtin_presets()) {
            const auto& h = preset.params;
            const oracle::Heston o{h.kappa, h.theta, h.nu_vol, h.rho, h.v0};
            for (double tau : {0.08, 0.3, 0.9, 2.2, 3.0}) {
                std::vector<double> ks;
                for (int i = 0; i <= 18; ++i) ks.push_back(cfg.spot * (0.7 + 0.05 * i));
                const auto fft = carr_madan_slice(h, cfg, tau, ks);
                for (std::size_t i = 0; i < ks.size(); ++i) {
                    const double d = std::abs(fft[i] - oracle::heston_call_lewis(o, cfg.spot, ks[i], tau, cfg.rate, cfg.dividend));
                    if (d > worst) {
                        worst = d;
                        where = preset.name + " K=" + num(ks[i]) + " tau=" + num(tau);
                    }
                }
            }
        }
        return std::pair{worst < 1e-4, "max |dC| " + num(worst) + " at " + where};
    });

    criterion(3, "implied vol round trip, 1000-point lattice", [&] {
        double worst = 0;
        int errors = 0;
        for (int a = 0; a < 10; ++a)
            for (int b = 0; b < 10; ++b)
                for (int c = 0; c < 10; ++c) {
                    const double s = 0.05 + 1.45 * a / 9.0, k = cfg.spot * (0.7 + 0.9 * b / 9.0), t = 0.08 + 2.92 * c / 9.0;
                    try {
                        worst = std::max(worst, std::abs(implied_vol(cfg, k, t, bs_call_price(cfg, k, t, s)) - s));
                    } catch (const ImpliedVolError&) {
                        ++errors;
                    }
                }
        return std::pair{errors == 0 && worst < 1e-6,
                         "max |dsigma| " + num(worst) + ", " + std::to_string(errors) + " inversion errors"};
    });

    criterion(4, "Hagan ATM branch continuity and degenerate case", [&] {
        double worst = 0, atm = 0;
        for (int ia = 0; ia < 6; ++ia)
            for (double beta : {0.0, 0.25, 0.5, 0.75, 1.0})
                for (int ir = 0; ir < 6; ++ir)
                    for (int in = 0; in < 6; ++in) {
                        const SabrSliceParams p{0.05 + 0.95 * ia / 5.0, beta, -0.9 + 0.9 * ir / 5.0, 0.05 + 1.45 * in / 5.0, 1.0};
                        for (double f : {0.5, 1.0, 100.0}) {
                            const double v = hagan_iv(p, f, f, 1.0);
                            worst = std::max({worst, std::abs(hagan_iv(p, f * (1 + 1e-7), f, 1.0) - v),
                                              std::abs(hagan_iv(p, f * (1 - 1e-7), f, 1.0) - v)});
                        }
                    }
        for (double a : {0.05, 0.2, 0.7, 1.0})
            for (double rho : {-0.9, -0.3, 0.0})
                for (double tau : {0.08, 1.0, 3.0}) {
                    const SabrSliceParams p{a, 1.0, rho, 0.0, tau};
                    atm = std::max(atm, std::abs(hagan_iv(p, 100.0, 100.0, tau) - a));
                }
        return std::pair{worst < 1e-6 && atm < 1e-14, "max jump " + num(worst) + ", degenerate |iv - alpha| " + num(atm)};
    });

    criterion(5, "SABR calibration recovers 20 random smiles", [&] {
        std::mt19937_64 rng(2024);
        const CalibrationBounds b;
        std::uniform_real_distribution<double> u(0, 1);
        double worst = 0;
        for (int draw = 0; draw < 20; ++draw) {
            const double tau = 0.08 + 2.92 * u(rng), f = forward_price(cfg, tau) / cfg.spot;
            const SabrSliceParams truth{b.alpha_lo + (b.alpha_hi - b.alpha_lo) * u(rng), 0.5,
                                        b.rho_lo + (b.rho_hi - b.rho_lo) * u(rng), b.nu_lo + (b.nu_hi - b.nu_lo) * u(rng),
                                        tau};
            std::vector<OptionQuote> smile;
            for (int i = 0; i < 15; ++i) {
                const double k = 0.7 + 0.9 * i / 14.0;
                smile.push_back({k, tau, hagan_iv(truth, k, f, tau)});
            }
            const auto c = calibrate_slice(smile, f, 0.5);
            worst = std::max({worst, std::abs(c.params.alpha - truth.alpha), std::abs(c.params.rho - truth.rho),
                              std::abs(c.params.nu - truth.nu)});
        }
        return std::pair{worst < 1e-3, "max parameter error " + num(worst)};
    });

    criterion(6, "MTGP pooling and decoupling limits", [&] {
        std::mt19937_64 rng(17);
        const auto sq = scatter(rng, 30, 0.0), tq = scatter(rng, 30, 0.01);
        const QuoteSet s(Task::Source, sq), t(Task::Target, tq);
        const InputNormalizer norm = InputNormalizer::from_quotes(t, cfg.spot);
        std::vector<Contract> pts;
        for (int i = 0; i < 25; ++i) pts.push_back({72.0 + 3.5 * i, 0.08 + 0.12 * i});
        IcmHyperParams h;
        h.input_kernel.lengthscales = {0.3, 0.7};
        h.task.shared_var = 2e-3;
        h.task.embedding_lengthscale = 1.3;
        auto diff = [&](const Prediction& a, const Prediction& b) {
            return std::max((a.mean - b.mean).cwiseAbs().maxCoeff(), (a.variance - b.variance).cwiseAbs().maxCoeff());
        };

        IcmHyperParams pool = h;
        pool.task.e_target = pool.task.e_source;
        pool.kappa_source = pool.kappa_target = 0.0;
        pool.noise_source = pool.noise_target = 3e-5;
        std::vector<OptionQuote> all = sq;
        all.insert(all.end(), tq.begin(), tq.end());
        Matern52Kernel kp = h.input_kernel;
        kp.variance = h.task.shared_var;
        const double d_pool = diff(MtgpModel::condition(norm, pool, s, t).predict_target(pts),
                                   GpModel::condition(norm, kp, 3e-5, QuoteSet(Task::Target, all)).predict(pts));

        IcmHyperParams dec = h;
        dec.task.e_source(0) = -50;
        dec.task.e_target(0) = 50;
        dec.task.embedding_lengthscale = 1.0;
        dec.kappa_source = 4e-4;
        dec.kappa_target = 7e-4;
        dec.noise_target = 2e-5;
        if (task_covariance(dec)(0, 1) != 0.0) throw std::runtime_error("decoupled C_ST is not zero");
        Matern52Kernel kd = h.input_kernel;
        kd.variance = dec.task.shared_var + dec.kappa_target;
        const double d_dec = diff(MtgpModel::condition(norm, dec, s, t).predict_target(pts),
                                  GpModel::condition(norm, kd, dec.noise_target, t).predict(pts));
        return std::pair{d_pool < 1e-8 && d_dec < 1e-8, "pooled " + num(d_pool) + ", decoupled " + num(d_dec)};
    });

    criterion(7, "MAP objective gradient vs central differences", [&] {
        std::mt19937_64 rng(23);
        const QuoteSet s(Task::Source, scatter(rng, 10, 0)), t(Task::Target, scatter(rng, 10, 0.01));
        const InputNormalizer norm = InputNormalizer::from_quotes(t, cfg.spot);
        MtgpData data{norm.inputs(s.quotes()), norm.inputs(t.quotes()), Eigen::VectorXd(20)};
        data.y << norm.centred_targets(s.quotes()), norm.centred_targets(t.quotes());
        const IcmParameterization param{MtgpOptions{}};
        const optim::Vector base = param.pack(default_icm_init(data.y.tail(10).squaredNorm() / 10));
        std::normal_distribution<double> z(0, 1);
        double worst = 0;
        for (int k = 0; k < 20; ++k) {
            optim::Vector th = base;
            for (auto& v : th) v += 0.5 * z(rng);
            optim::Vector g;
            if (!std::isfinite(map_objective(param, th, data, &g))) throw std::runtime_error("objective not finite");
            const optim::Vector n =
                optim::numeric_gradient([&](const optim::Vector& x) { return map_objective(param, x, data, nullptr); }, th);
            // componentwise, relative to the gradient's largest entry
            worst = std::max(worst, (g - n).cwiseAbs().maxCoeff() / n.cwiseAbs().maxCoeff());
        }
        return std::pair{worst < 1e-4, "max relative error " + num(worst)};
    });

    if (cli.empty()) {
        std::fprintf(stderr, "IVSFORGE_CLI not set; criteria 8-13 need the CLI\n");
        return 2;
    }
    const fs::path run1 = work / "bench_seed42_a", run2 = work / "bench_seed42_b";
    fs::remove_all(run1);
    fs::remove_all(run2);
    double bench_seconds = -1;
    std::string bench_error;
    try {
        bench_seconds = run_cli("bench --presets all --seed 42 --out " + run1.string());
    } catch (const std::exception& e) {
        bench_error = e.what();
    }
    auto need_bench = [&] {
        if (!bench_error.empty()) throw std::runtime_error(bench_error);
    };

    criterion(8, "benchmark ordering on Base and full-run time", [&] {
        need_bench();
        const ErrorTable e = load_errors(run1 / "errors.csv");
        const double m03 = lookup(e, "Base", "mtgp", "0.3"), g03 = lookup(e, "Base", "gp", "0.3"),
                     s03 = lookup(e, "Base", "sabr", "0.3");
        const double m22 = lookup(e, "Base", "mtgp", "2.2"), g22 = lookup(e, "Base", "gp", "2.2"),
                     s22 = lookup(e, "Base", "sabr", "2.2");
        std::vector<std::string> bad;
        if (!(m03 < g03 && g03 < s03)) bad.push_back("tau=0.3 order mtgp<gp<sabr");
        if (!(m03 >= 0.8e-3 && m03 <= 3.5e-3)) bad.push_back("mtgp band");
        if (!(s03 >= 4e-3 && s03 <= 8e-3)) bad.push_back("sabr band");
        if (!(s22 < m22 && s22 < g22)) bad.push_back("tau=2.2 sabr best");
        if (!(bench_seconds < 15 * 60)) bad.push_back("runtime");
        std::string detail = "tau=0.3 mtgp/gp/sabr " + num(m03 * 1e3) + "/" + num(g03 * 1e3) + "/" + num(s03 * 1e3) +
                             "e-3, tau=2.2 sabr/mtgp/gp " + num(s22 * 1e3) + "/" + num(m22 * 1e3) + "/" + num(g22 * 1e3) +
                             "e-3, run " + num(bench_seconds) + " s";
        for (const auto& b : bad) detail += "; violated: " + b;
        return std::pair{bad.empty(), detail};
    });

    criterion(9, "zero butterfly violations for SABR and MTGP at tau 0.3 and 2.2", [&] {
        need_bench();
        int cells = 0, dirty = 0;
        std::string where;
        for (const auto& r : read_csv(run1 / "arbitrage.csv")) {
            if (r.size() != 8) throw std::runtime_error("malformed arbitrage.csv row");
            if (r[1] != "sabr" && r[1] != "mtgp") continue;
            const std::string mat = num(std::stod(r[2]));
            if (mat != "0.3" && mat != "2.2") continue;
            ++cells;
            if (std::stod(r[3]) != 0.0 || r[3] == "nan") {
                ++dirty;
                where += " " + r[0] + "/" + r[1] + "/" + mat + "=" + r[3];
            }
        }
        return std::pair{cells == 40 && dirty == 0,
                         std::to_string(cells) + " cells, " + std::to_string(dirty) + " with violations" + where};
    });

    criterion(10, "task correlation: Term Structure Down above Mixed Regime", [&] {
        need_bench();
        const auto j = nlohmann::json::parse(slurp(run1 / "task_diag.json"));
        const double down = j.at("Term Structure Down").at("diagnostics").at("cross_correlation").get<double>();
        const double mixed = j.at("Mixed Regime").at("diagnostics").at("cross_correlation").get<double>();
        const bool ok = down > mixed && down > 0 && down < 1 && mixed > 0 && mixed < 1;
        return std::pair{ok, "Term Structure Down " + num(down) + ", Mixed Regime " + num(mixed)};
    });

    criterion(11, "noise sweep shape on Base", [&] {
        const fs::path d = work / "sweep_noise";
        fs::remove_all(d);
        run_cli("sweep-noise --seed 42 --methods gp,mtgp --out " + d.string());
        const auto m = load_sweep(d / "sweep_noise.csv");
        const double m0 = m.at({0.0, "mtgp"}), m1 = m.at({0.01, "mtgp"}), m2 = m.at({0.02, "mtgp"});
        double gmin = 1e300, gmax = 0;
        for (const auto& [k, v] : m)
            if (k.second == "gp") {
                gmin = std::min(gmin, v);
                gmax = std::max(gmax, v);
            }
        const bool gp_flat = gmax - gmin <= 1e-12 * gmax;
        return std::pair{m1 <= m0 && m1 <= m2 && gp_flat, "mtgp at 0/0.01/0.02: " + num(m0 * 1e3) + "/" + num(m1 * 1e3) +
                                                              "/" + num(m2 * 1e3) + "e-3, gp spread " + num(gmax - gmin)};
    });

    criterion(12, "MTGP below GP at every beta on Base", [&] {
        const fs::path d = work / "sweep_beta";
        fs::remove_all(d);
        run_cli("sweep-beta --seed 42 --methods gp,mtgp --out " + d.string());
        const auto m = load_sweep(d / "sweep_beta.csv");
        std::string detail;
        bool ok = true;
        for (double b : kBetaLevels) {
            const double mt = m.at({b, "mtgp"}), gp = m.at({b, "gp"});
            ok &= mt < gp;
            detail += (detail.empty() ? "" : ", ") + std::string("beta ") + num(b) + ": " + num(mt * 1e3) + " vs " +
                      num(gp * 1e3) + "e-3";
        }
        return std::pair{ok, detail};
    });

    criterion(13, "bench --seed 42 is byte-for-byte reproducible", [&] {
        need_bench();
        run_cli("bench --presets all --seed 42 --out " + run2.string());
        const bool same = slurp(run1 / "errors.csv") == slurp(run2 / "errors.csv");
        return std::pair{same, same ? "errors.csv identical" : "errors.csv differs"};
    });

    std::printf("%d of 13 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
