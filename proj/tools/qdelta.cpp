// Command-line front end. Exit codes: 0 ok, 1 tolerance failure, 2 config error,
// 3 resource bound exceeded.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qdelta/config.hpp"
#include "qdelta/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qdelta;

namespace {

enum Exit { kOk = 0, kTolerance = 1, kConfig = 2, kResource = 3 };

struct RunContext {
    std::string command;
    Config cfg;
    fs::path out;
    int threads = 1;
    bool deterministic = false;
    std::string cache_dir;
    double kernel_mass = 0.0;
};

std::string fmt(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

QuadratureSpec quadrature(const RunContext& ctx, const std::string& prefix, QuadratureSpec q = {}) {
    const Config& c = ctx.cfg;
    q.margin = c.real(prefix + "margin", q.margin);
    q.level_nodes = c.real(prefix + "level_nodes", q.level_nodes);
    q.kernel_cells = c.real(prefix + "kernel_cells", q.kernel_cells);
    q.max_work = c.real(prefix + "max_work", q.max_work);
    q.eps0 = c.real(prefix + "eps0", q.eps0);
    q.eps_levels = static_cast<int>(c.integer(prefix + "eps_levels", q.eps_levels));
    q.ray_nodes = static_cast<int>(c.integer(prefix + "ray_nodes", q.ray_nodes));
    q.threads = ctx.threads;
    if (!(q.margin > 0) || !(q.level_nodes > 0) || !(q.kernel_cells > 0) || q.eps_levels < 2 || q.ray_nodes < 20)
        throw ConfigError(prefix, "quadrature settings out of range");
    return q;
}

json instance_json(const ProblemInstance& I) {
    const auto& w = I.weight();
    return {{"form", I.form().coefficients()},
            {"m0", I.m0()},
            {"p0", I.p0()},
            {"h", I.h()},
            {"N", I.N()},
            {"L", I.L()},
            {"lambda", I.cong().lambda},
            {"lambda_N", I.lambdaN()},
            {"Q", I.Q()},
            {"Delta", I.Delta()},
            {"weight", {{"center", w.center}, {"radius", w.radius}, {"profile", to_string(w.profile)}}}};
}

json header(const RunContext& ctx) {
    json j;
    j["command"] = ctx.command;
    j["config_hash"] = ctx.cfg.hash();
    json cfg = json::object();
    for (const auto& [k, v] : ctx.cfg.entries()) cfg[k] = v;
    j["config"] = cfg;
    j["kernel_mass"] = ctx.kernel_mass;
    j["deterministic"] = ctx.deterministic;
    if (!ctx.deterministic) j["threads"] = ctx.threads;
    return j;
}

void write_json(const RunContext& ctx, const std::string& name, const json& j) {
    write_file(ctx.out / name, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_count(const RunContext& ctx) {
    ProblemInstance I = instance_from_config(ctx.cfg);
    std::string s = ctx.cfg.str("enum.strategy", "sliced");
    if (s != "sliced" && s != "triple") throw ConfigError("enum.strategy", "enum.strategy must be sliced or triple");
    auto e = enumerate_gamma(I, s == "sliced" ? EnumStrategy::Sliced : EnumStrategy::TripleLoop, ctx.threads);
    json j = header(ctx);
    j["instance"] = instance_json(I);
    j["result"] = {{"N", e.N}, {"gamma", e.gamma}, {"raw", e.raw}, {"strategy", e.strategy}};
    if (!ctx.deterministic) j["result"]["seconds"] = e.seconds;
    write_json(ctx, "count.json", j);
    std::cout << "N=" << e.N << " gamma=" << fmt(e.gamma) << " raw=" << e.raw << "\n";
    return kOk;
}

int cmd_expsum(const RunContext& ctx) {
    ProblemInstance I = instance_from_config(ctx.cfg);
    i64 q_min = ctx.cfg.integer("expsum.q_min", 1), q_max = ctx.cfg.integer("expsum.q_max", 50);
    i64 c_max = ctx.cfg.integer("expsum.c_max", 0), brute = ctx.cfg.integer("expsum.brute_limit", 200);
    if (q_min < 1 || q_max < q_min) throw ConfigError("expsum.q_max", "expsum: need 1 <= q_min <= q_max");
    if (c_max < 0) throw ConfigError("expsum.c_max", "expsum.c_max must be nonnegative");
    std::ostringstream csv;
    csv << "q,q1,q2,c1,c2,c3,re,im,abs,class\n";
    std::vector<i64> qs;
    for (i64 q = q_min; q <= q_max; ++q) qs.push_back(q);
    std::vector<std::vector<cplx>> grids(qs.size());
    parallel_for(static_cast<i64>(qs.size()), ctx.threads,
                 [&](i64 i) { grids[i] = S_tilde_grid(I, qs[i], c_max, brute); });
    for (std::size_t i = 0; i < qs.size(); ++i) {
        auto [q1, q2] = crt_split(I, qs[i]);
        std::size_t k = 0;
        for (i64 a = -c_max; a <= c_max; ++a)
            for (i64 b = -c_max; b <= c_max; ++b)
                for (i64 d = -c_max; d <= c_max; ++d, ++k) {
                    cplx v = grids[i][k];
                    csv << qs[i] << ',' << q1 << ',' << q2 << ',' << a << ',' << b << ',' << d << ',' << fmt(v.real())
                        << ',' << fmt(v.imag()) << ',' << fmt(std::abs(v)) << ','
                        << to_string(class_of(I.form(), I.m0(), {a, b, d})) << '\n';
                }
    }
    write_file(ctx.out / "expsum.csv", csv.str());
    json j = header(ctx);
    j["instance"] = instance_json(I);
    j["rows"] = qs.size() * (2 * c_max + 1) * (2 * c_max + 1) * (2 * c_max + 1);
    write_json(ctx, "expsum.json", j);
    return kOk;
}

int cmd_density(const RunContext& ctx) {
    ProblemInstance I = instance_from_config(ctx.cfg);
    i64 p_max = ctx.cfg.integer("density.p_max", 100);
    i64 P_max = ctx.cfg.integer("series.P_max", std::max<i64>(p_max, 1000));
    if (p_max < 2 || P_max < p_max) throw ConfigError("density.p_max", "density: need 2 <= p_max <= series.P_max");
    SingularSeries S = singular_series(I, P_max);
    std::ostringstream csv;
    csv << "p,k_star,count,count_next,num,den,value,method,psi,euler_factor\n";
    for (const auto& f : S.factors) {
        if (f.p > p_max) continue;
        const auto& d = f.density;
        csv << f.p << ',' << d.k_star << ',' << d.count << ',' << d.count_next << ',' << d.num << ',' << d.den << ','
            << fmt(d.value) << ',' << d.method << ',' << f.psi << ',' << fmt(f.factor) << '\n';
    }
    write_file(ctx.out / "density.csv", csv.str());
    json j = header(ctx);
    j["instance"] = instance_json(I);
    j["singular_series"] = {{"value", S.value},       {"partial", S.partial}, {"drift", S.drift},
                            {"P_max", S.P_max},       {"square", S.square},   {"obstructed", S.obstructed}};
    if (!S.square) {
        LValue L1 = L_one_psi0(I.form(), I.m0());
        j["L1_psi0"] = {{"discriminant", L1.discriminant}, {"primitive", L1.primitive}, {"value", L1.value},
                        {"error", L1.error}};
    }
    write_json(ctx, "density.json", j);
    return kOk;
}

int cmd_delta_check(const RunContext& ctx) {
    std::vector<double> Qs = ctx.cfg.reals("delta.Q", {5.0, 10.0});
    i64 n_min = ctx.cfg.integer("delta.n_min", -25), n_max = ctx.cfg.integer("delta.n_max", 25);
    double tol = ctx.cfg.real("delta.tol", 0.02);
    if (Qs.empty() || n_max < n_min) throw ConfigError("delta.Q", "delta-check: need Q values and n_min <= n_max");
    std::ostringstream csv;
    csv << "Q,n,q_max,delta,deviation,delta_exact,deviation_exact\n";
    json per_q = json::array();
    bool ok = true;
    for (double Q : Qs) {
        if (!(Q > 0.0)) throw ConfigError("delta.Q", "delta.Q entries must be positive");
        DeltaKernel K(Q);
        double worst = 0.0, worst_exact = 0.0;
        for (i64 n = n_min; n <= n_max; ++n) {
            i64 qm = K.min_q_max(static_cast<double>(n));
            double d = delta_symbol(K, n, qm), de = delta_symbol(K, n, qm, K.C_Q());
            double t = n == 0 ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(d - t));
            worst_exact = std::max(worst_exact, std::abs(de - t));
            csv << fmt(Q) << ',' << n << ',' << qm << ',' << fmt(d) << ',' << fmt(d - t) << ',' << fmt(de) << ','
                << fmt(de - t) << '\n';
        }
        per_q.push_back({{"Q", Q}, {"max_deviation", worst}, {"max_deviation_exact", worst_exact}, {"C_Q", K.C_Q()}});
        if (Q == Qs.front() && !(worst < tol)) ok = false;
    }
    write_file(ctx.out / "delta_check.csv", csv.str());
    json j = header(ctx);
    j["per_Q"] = per_q;
    j["tolerance"] = tol;
    j["status"] = ok ? "ok" : "tolerance-failure";
    write_json(ctx, "delta_check.json", j);
    return ok ? kOk : kTolerance;
}

int cmd_compare(const RunContext& ctx) {
    const Config& c = ctx.cfg;
    ProblemInstance I = instance_from_config(c);
    PredictOptions po;
    po.h_max = static_cast<int>(c.integer("compare.h_max", 5));
    po.P_max = c.integer("series.P_max", 1000);
    po.quad = quadrature(ctx, "quad.");
    if (po.h_max < 1) throw ConfigError("compare.h_max", "compare.h_max must be at least 1");
    PoissonOptions pr;
    pr.q_max = c.integer("poisson.q_max", 0);
    pr.c_max = c.integer("poisson.c_max", 0);
    pr.c_cap = c.integer("poisson.c_cap", pr.c_cap);
    pr.budget_fraction = c.real("poisson.budget", pr.budget_fraction);
    pr.decay_A = c.real("poisson.decay_A", pr.decay_A);
    pr.keep_terms = false;
    pr.quad = quadrature(ctx, "poisson.", pr.quad);
    if (!(pr.decay_A > 3.0)) throw ConfigError("poisson.decay_A", "poisson.decay_A must exceed 3");
    const i64 poisson_N_max = c.integer("poisson.N_max", 400);
    const double tol_poisson = c.real("tol.poisson", 0.02);
    const bool check_ratio = c.has("tol.ratio_lo") || c.has("tol.ratio_hi");
    const double ratio_lo = c.real("tol.ratio_lo", 0.0), ratio_hi = c.real("tol.ratio_hi", 1e300);

    PredictionReport R = predict_main(I, po);
    attach_enumeration(R, I, ctx.threads);
    bool ok = true;
    json poisson = json::array();
    std::ostringstream qcsv;
    qcsv << "h,q,r,zero,exceptional,ordinary,total_re,total_im,direct,tail\n";
    std::vector<double> prhs(R.rows.size(), std::nan("")), perr(R.rows.size(), std::nan(""));
    for (std::size_t i = 0; i < R.rows.size(); ++i) {
        const auto& row = R.rows[i];
        if (row.N > poisson_N_max) continue;
        ProblemInstance Ih = I.with_h(row.h);
        if (DeltaKernel(Ih.Q()).omega_sum() == 0.0) {
            poisson.push_back({{"h", row.h}, {"N", row.N}, {"skipped", "Q too small for the kernel normalization"}});
            continue;
        }
        DeltaExpansion E = poisson_rhs(Ih, pr);
        std::vector<double> direct = delta_targets(Ih, E.q_max);
        for (const auto& q : E.per_q)
            qcsv << row.h << ',' << q.q << ',' << fmt(q.r) << ',' << fmt(q.zero.real()) << ','
                 << fmt(q.exceptional.real()) << ',' << fmt(q.ordinary.real()) << ',' << fmt(q.total.real()) << ','
                 << fmt(q.total.imag()) << ',' << fmt(direct[q.q]) << ',' << fmt(q.tail) << '\n';
        double dev = std::abs(E.total.real() - row.gamma);
        double allowed = tol_poisson * std::max(row.gamma, row.sqrtN);
        bool pass = dev <= allowed;
        ok = ok && pass;
        prhs[i] = E.total.real();
        perr[i] = E.error_budget();
        poisson.push_back({{"h", row.h},
                           {"N", row.N},
                           {"total_re", E.total.real()},
                           {"total_im", E.total.imag()},
                           {"zero", E.zero_part.real()},
                           {"exceptional", E.exceptional_part.real()},
                           {"ordinary", E.ordinary_part.real()},
                           {"Q", E.Q},
                           {"C_Q", E.C_Q},
                           {"q_max", E.q_max},
                           {"c_max", E.c_max},
                           {"c_required", E.c_required},
                           {"quad_error", E.quad_error},
                           {"decay_constant", E.decay_constant},
                           {"tail_estimate", E.tail_estimate},
                           {"budget", E.budget},
                           {"budget_violated", E.budget_violated},
                           {"gamma", row.gamma},
                           {"deviation", dev},
                           {"allowed", allowed},
                           {"pass", pass}});
    }
    write_file(ctx.out / "poisson_q.csv", qcsv.str());

    // residuals are listed for every h; the fit summary needs at least three
    SecondaryFit fit, fit_alt;
    if (R.rows.size() >= 3) {
        fit = extract_secondary(R, false);
        fit_alt = extract_secondary(R, true);
    } else {
        for (const auto& p : R.rows) {
            fit.residuals.push_back((p.gamma - p.main) / p.sqrtN);
            fit_alt.residuals.push_back((p.gamma - p.main_alt) / p.sqrtN);
        }
    }
    std::ostringstream csv;
    csv << "h,N,sqrtN,gamma,raw,main,main_alt,ratio,ratio_alt,residual,residual_alt,poisson,poisson_error\n";
    json rows = json::array();
    for (std::size_t i = 0; i < R.rows.size(); ++i) {
        const auto& p = R.rows[i];
        double ratio = p.main != 0.0 ? p.gamma / p.main : std::nan("");
        double ratio_alt = p.main_alt != 0.0 ? p.gamma / p.main_alt : std::nan("");
        if (check_ratio && R.square && !(ratio >= ratio_lo && ratio <= ratio_hi)) ok = false;
        csv << p.h << ',' << p.N << ',' << fmt(p.sqrtN) << ',' << fmt(p.gamma) << ',' << p.raw << ',' << fmt(p.main)
            << ',' << fmt(p.main_alt) << ',' << fmt(ratio) << ',' << fmt(ratio_alt) << ',' << fmt(fit.residuals[i])
            << ',' << fmt(fit_alt.residuals[i]) << ',' << fmt(prhs[i]) << ',' << fmt(perr[i]) << '\n';
        rows.push_back({{"h", p.h},
                        {"N", p.N},
                        {"gamma", p.gamma},
                        {"raw", p.raw},
                        {"main", p.main},
                        {"main_alt", p.main_alt},
                        {"ratio", ratio},
                        {"ratio_alt", ratio_alt},
                        {"residual", fit.residuals[i]},
                        {"residual_alt", fit_alt.residuals[i]}});
    }
    write_file(ctx.out / "compare.csv", csv.str());

    json j = header(ctx);
    j["instance"] = instance_json(I);
    const auto& si = R.integral;
    j["singular_integral"] = {{"value", si.value},   {"error", si.error},
                              {"coarea", si.coarea}, {"coarea_error", si.coarea_error},
                              {"eps", si.eps},       {"converged", si.converged}};
    j["singular_series"] = {{"value", R.series}, {"partial", R.series_partial}, {"drift", R.series_drift},
                            {"square", R.square}, {"obstructed", R.obstructed}};
    if (!R.square)
        j["L1_psi0"] = {{"discriminant", R.L1.discriminant}, {"primitive", R.L1.primitive}, {"value", R.L1.value}};
    j["constants"] = {{"without_L1", R.constant}, {"with_L1", R.constant_alt}};
    j["main_term_form"] = R.square ? "I*S*sqrtN*log(sqrtN)" : "sqrtN*(I*S + b_h)";
    j["tracked_candidate"] = R.rows.size() >= 3 ? tracked_candidate(R) : "undetermined";
    j["local_obstruction"] = R.obstructed;
    j["rows"] = rows;
    auto fit_json = [](const SecondaryFit& f) {
        return json{{"residuals", f.residuals}, {"max_abs", f.max_abs}, {"trend", f.trend}, {"drifts", f.drifts}};
    };
    j["secondary"] = fit_json(fit);
    if (!R.square) j["secondary_with_L1"] = fit_json(fit_alt);
    j["poisson"] = poisson;
    j["tolerances"] = {{"poisson", tol_poisson}, {"poisson_N_max", poisson_N_max}};
    if (check_ratio) j["tolerances"]["ratio"] = {ratio_lo, ratio_hi};
    j["status"] = ok ? "ok" : "tolerance-failure";
    write_json(ctx, "report.json", j);
    std::cout << "compare: " << (ok ? "ok" : "tolerance failure") << " (" << R.rows.size() << " values of h, "
              << poisson.size() << " Poisson checks)\n";
    return ok ? kOk : kTolerance;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qdelta: weighted counts on ternary quadrics and their delta-method expansion"};
    app.require_subcommand(1);
    RunContext ctx;
    std::string config_path, out_dir = ".";
    std::vector<std::pair<std::string, std::function<int(const RunContext&)>>> cmds{
        {"count", cmd_count},
        {"expsum", cmd_expsum},
        {"density", cmd_density},
        {"delta-check", cmd_delta_check},
        {"compare", cmd_compare}};
    const std::map<std::string, std::string> help{
        {"count", "weighted count Gamma_w(N) by enumeration"},
        {"expsum", "complete exponential sums S~_q(c) as CSV"},
        {"density", "local densities and the singular series"},
        {"delta-check", "delta-symbol deviation table"},
        {"compare", "enumeration vs Poisson expansion vs main-term prediction"}};
    for (auto& [name, fn] : cmds) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", config_path, "flat key = value config file")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--threads", ctx.threads, "worker threads")->check(CLI::Range(1, 256));
        sub->add_flag("--deterministic", ctx.deterministic, "omit timings and thread counts from outputs");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }
    for (auto& [name, fn] : cmds) {
        if (!app.got_subcommand(name)) continue;
        ctx.command = name;
        try {
            ctx.cfg = Config::load(config_path);
            ctx.out = out_dir;
            fs::create_directories(ctx.out);
            if (const char* cd = std::getenv("QDELTA_CACHE_DIR")) ctx.cache_dir = cd;
            ctx.kernel_mass = calibrated_bump_mass(ctx.cache_dir);
            write_file(ctx.out / "config.echo", ctx.cfg.echo());
            return fn(ctx);
        } catch (const ConfigError& e) {
            std::cerr << "config error" << (e.field.empty() ? "" : " [" + e.field + "]") << ": " << e.what() << "\n";
            return kConfig;
        } catch (const std::invalid_argument& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kConfig;
        } catch (const ResourceBoundError& e) {
            std::cerr << "resource bound: " << e.what() << "\n";
            return kResource;
        } catch (const std::overflow_error& e) {
            std::cerr << "resource bound (overflow): " << e.what() << "\n";
            return kResource;
        } catch (const std::bad_alloc&) {
            std::cerr << "resource bound: out of memory\n";
            return kResource;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kResource;
        }
    }
    return kConfig;
}
