#include "levytree/kernels.hpp"
#include "levytree/lab.hpp"
#include "levytree/numerics.hpp"
#include "levytree/packing.hpp"
#include "levytree/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace levytree::lab {

namespace mc = levytree::mechanism;
namespace kn = levytree::kernels;
namespace rt = levytree::realtree;
namespace sm = levytree::samplers;
namespace pk = levytree::packing;

namespace {

constexpr std::uint64_t kCenterStream = 1;
constexpr std::uint64_t kQuadrupleStream = 2;
constexpr std::uint64_t kGeometryIndex = 1000;
constexpr std::uint64_t kLaplaceIndex = 1ULL << 40;
constexpr std::uint64_t kBankStream = 3;

double rel_err(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

std::vector<double> log_grid(double log10_lo, double log10_hi, long n)
{
    std::vector<double> v(n);
    for (long i = 0; i < n; ++i) v[i] = std::pow(10.0, log10_lo + (log10_hi - log10_lo) * i / (n - 1));
    return v;
}

double quantile(std::vector<double> v, double q)
{
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    double pos = q * (v.size() - 1);
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (pos - i) * (v[i + 1] - v[i]);
}

unsigned threads_of(const LabConfig& cfg) { return static_cast<unsigned>(cfg.integer("experiment.threads")); }

double stable_gamma_of(const mc::BranchingMechanism& m, const char* who)
{
    if (!m.is_stable()) throw std::runtime_error(std::string(who) + " requires mechanism.kind = stable");
    return m.stable_gamma();
}

json mechanism_json(const mc::BranchingMechanism& m)
{
    json j = {{"label", m.label}, {"alpha", m.alpha}, {"beta", m.beta}};
    if (m.is_stable()) j["gamma"] = m.stable_gamma();
    if (auto al = std::get_if<mc::AtomList>(&m.levy)) j["atoms"] = static_cast<long>(al->atoms.size());
    return j;
}

// CSV preamble line carrying a JSON header
std::string header_line(const json& j) { return "# " + j.dump() + "\n"; }

json exponent_section(const mc::BranchingMechanism& m, const LabConfig& cfg, ArtifactSet& out)
{
    auto [lo, hi] = mc::default_exponent_range(m);
    mc::ExponentOptions eo;
    eo.floor_q = cfg.real("exponents.floor_q");
    eo.c_step = cfg.real("exponents.c_step");
    auto rep = mc::estimate_exponents(m, lo, hi, static_cast<int>(cfg.integer("exponents.points")), eo);
    CsvTable t({"scale_log", "value"});
    for (const auto& p : rep.scan_grid) t.row() << p.log_lambda << p.log_psi;
    out.write_csv("exponents.csv", t);
    return {{"delta_hat", rep.delta_hat},
            {"gamma_hat", rep.gamma_hat},
            {"eta_hat", rep.eta_hat},
            {"log_lambda_range", {lo, hi}},
            {"notes", rep.notes}};
}

json doubling_section(const mc::GaugeFunction& gauge, const std::vector<double>& log_r, ArtifactSet& out,
                      const std::string& file)
{
    auto rep = mc::doubling_report(gauge, log_r);
    CsvTable t({"scale_log", "value"});
    for (const auto& s : rep.scales)
        if (s.in_domain) t.row() << s.log_r << s.ratio;
    out.write_csv(file, t);
    double min_ratio = std::numeric_limits<double>::infinity();
    json skipped = json::array();
    for (const auto& s : rep.scales) {
        if (s.in_domain)
            min_ratio = std::min(min_ratio, s.ratio);
        else
            skipped.push_back({{"scale_log", s.log_r}, {"note", s.note}});
    }
    return {{"max_doubling_ratio", rep.max_ratio},
            {"min_doubling_ratio", min_ratio},
            {"scales", static_cast<long>(rep.scales.size())},
            {"skipped", skipped}};
}

std::vector<double> dyadic_logs(long k_lo, long k_hi)
{
    std::vector<double> v;
    for (long k = k_hi; k >= k_lo; --k) v.push_back(-k * std::log(2.0));
    return v;
}

// ---- mech-report -------------------------------------------------------

json run_mech_report(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    auto lambdas = log_grid(cfg.real("grid.log10_lo"), cfg.real("grid.log10_hi"), cfg.integer("grid.points"));

    CsvTable psi({"lambda", "psi", "psi_prime", "psi_tilde", "psi_inverse", "phi", "sandwich"});
    int violations = 0;
    double worst_psi_rt = 0.0, worst_phi_rt = 0.0;
    for (double x : lambdas) {
        auto v = mc::psi_family_eval(m, x);
        auto sw = mc::convexity_sandwich(m, x);
        violations += !sw.ok();
        double inv = mc::psi_inverse(m, x);
        double phi = mc::phi_forward(m, x);
        psi.row() << x << v.psi << v.psi_prime << v.psi_tilde << inv << phi << sw.ok();
        worst_psi_rt = std::max(worst_psi_rt, std::abs(mc::psi(m, inv) - x) / std::max(1.0, x));
        if (x > m.alpha) {
            try {
                double back = mc::phi_forward(m, mc::phi_inverse(m, x));
                worst_phi_rt = std::max(worst_phi_rt, std::abs(back - x) / std::max(1.0, x));
            } catch (const mc::DomainError&) {
            }
        }
    }
    out.write_csv("psi_table.csv", psi);

    auto gauge = mc::make_gauge(m);
    CsvTable g({"r", "g", "log_g"});
    for (double lr : dyadic_logs(cfg.integer("doubling.k_lo"), cfg.integer("doubling.k_hi"))) {
        try {
            auto gv = mc::gauge_g_log(gauge, lr);
            g.row() << std::exp(lr) << gv.g << gv.log_g;
        } catch (const mc::DomainError&) {
        }
    }
    out.write_csv("gauge_table.csv", g);

    json res = exponent_section(m, cfg, out);
    json dbl = doubling_section(gauge, dyadic_logs(cfg.integer("doubling.k_lo"), cfg.integer("doubling.k_hi")), out,
                                "doubling.csv");
    res["max_doubling_ratio"] = dbl["max_doubling_ratio"];
    res["doubling"] = dbl;
    res["mechanism"] = mechanism_json(m);
    res["sandwich_violations"] = violations;
    res["sandwich_points"] = static_cast<long>(lambdas.size());
    res["psi_roundtrip_max"] = worst_psi_rt;
    res["phi_roundtrip_max"] = worst_phi_rt;
    res["log_r0"] = gauge.log_r0;

    if (std::holds_alternative<mc::AtomList>(m.levy) && m.alpha == 0.0 && m.beta == 0.0) {
        int jbad = 0;
        CsvTable jt({"lambda", "exponent", "lambda_J", "pass"});
        for (double x : lambdas) {
            double le = mc::log_psi_prime(m, std::log(x));
            double lj = std::log(x) + mc::log_j_psi_prime(m, -std::log(x));
            bool ok = le >= std::log(mc::kJLower) + lj - mc::kSandwichLogSlack &&
                      le <= std::log(mc::kJUpper) + lj + mc::kSandwichLogSlack;
            jbad += !ok;
            jt.row() << x << std::exp(le) << std::exp(lj) << ok;
        }
        out.write_csv("j_bounds.csv", jt);
        res["j_bound_violations"] = jbad;
        res["log_second_moment"] = mc::log_second_moment(m);
    }
    return res;
}

// ---- kernels-check -----------------------------------------------------

json run_kernels_check(const LabConfig& cfg, ArtifactSet& out)
{
    const double rtol = cfg.real("kernels.rtol");
    const double itol = cfg.real("kernels.identity_rtol");
    const double ctol = cfg.real("kernels.controlvg_rtol");
    CsvTable oracle({"gamma", "quantity", "x", "y", "value", "reference", "rel_err", "pass"});
    CsvTable laplace({"gamma", "r", "lambda", "L_ode", "L_integral", "discrepancy"});
    CsvTable ident({"gamma", "r", "lambda", "quadrature", "rel_err", "pass"});
    CsvTable cvg({"gamma", "r", "ratio", "constant", "rel_err", "pass"});
    CsvTable dens({"gamma", "r", "lhs_log", "rhs_log", "pass"});

    double oracle_max = 0.0, ident_max = 0.0, route_max = 0.0, cvg_max = 0.0, kappa_residual_max = 0.0;
    bool oracle_ok = true, ident_ok = true, route_ok = true, cvg_ok = true, dens_ok = true;
    auto add = [&](double gam, const char* what, double x, double y, double value, double ref) {
        double e = rel_err(value, ref);
        bool ok = e <= rtol;
        oracle_ok = oracle_ok && ok;
        oracle_max = std::max(oracle_max, e);
        oracle.row() << gam << what << x << y << value << ref << e << ok;
    };

    const auto as = cfg.real_list("kernels.a");
    const auto rs = cfg.real_list("kernels.r");
    const auto ls = cfg.real_list("kernels.lambda");
    for (double gam : cfg.real_list("kernels.gammas")) {
        auto m = mc::stable(gam);
        for (double y : {0.5, 2.0, 100.0}) add(gam, "psi_inverse", y, 0.0, mc::psi_inverse(m, y), std::pow(y, 1.0 / gam));
        for (double a : as) add(gam, "v", a, 0.0, mc::solve_v(m, a), std::pow((gam - 1.0) * a, -1.0 / (gam - 1.0)));
        for (double t : as)
            for (double l : ls)
                add(gam, "u", t, l, mc::solve_u(m, t, l),
                    std::pow(std::pow(l, 1.0 - gam) + (gam - 1.0) * t, -1.0 / (gam - 1.0)));
        for (double a : as)
            for (double l : ls) {
                auto k = kn::kappa_solve(m, a, l, 0.0);
                kappa_residual_max = std::max(kappa_residual_max, std::abs(k.residual) / a);
                if (gam == 2.0) add(gam, "kappa", a, l, k.value, std::sqrt(l) * std::tanh(a * std::sqrt(l)));
            }
        for (double r : rs)
            for (double l : ls) {
                auto L = kn::script_L(m, r, l);
                if (gam == 2.0) add(gam, "script_L", r, l, L.value, 1.0 / std::pow(std::cosh(r * std::sqrt(l)), 2));
                laplace.row() << gam << r << l << L.value << L.value_integral << L.discrepancy;
                route_max = std::max(route_max, L.discrepancy);
                route_ok = route_ok && L.discrepancy <= itol;
                double q = kn::lrl_quadrature(m, l, L.minus_log);
                double e = rel_err(q, r);
                ident_max = std::max(ident_max, e);
                ident_ok = ident_ok && e <= itol;
                ident.row() << gam << r << l << q << e << (e <= itol);
            }
        const double c = mc::stable_controlvg_constant(gam);
        for (double r : log_grid(-8.0, -2.0, 13)) {
            double ratio = mc::solve_v(m, r) / (r * mc::phi_inverse(m, 1.0 / r));
            double e = rel_err(ratio, c);
            cvg_max = std::max(cvg_max, e);
            cvg_ok = cvg_ok && e <= ctol;
            cvg.row() << gam << r << ratio << c << e << (e <= ctol);
        }
    }
    for (double gam : cfg.real_list("kernels.density_gammas")) {
        auto m = mc::stable(gam);
        for (double r : cfg.real_list("kernels.density_r")) {
            auto d = kn::density_bound_check(m, r);
            dens_ok = dens_ok && d.precondition && d.pass;
            dens.row() << gam << r << d.log_lhs << d.log_rhs << (d.precondition && d.pass);
        }
    }
    out.write_csv("oracle.csv", oracle);
    out.write_csv("laplace.csv", laplace);
    out.write_csv("identity.csv", ident);
    out.write_csv("controlvg.csv", cvg);
    out.write_csv("density_bound.csv", dens);
    return {{"closed_forms", {{"pass", oracle_ok}, {"max_rel_err", oracle_max}, {"tolerance", rtol}}},
            {"kappa_certificate", {{"max_residual", kappa_residual_max}}},
            {"integral_identity", {{"pass", ident_ok}, {"max_rel_err", ident_max}, {"tolerance", itol}}},
            {"route_agreement", {{"pass", route_ok}, {"max_rel_err", route_max}, {"tolerance", itol}}},
            {"controlvg", {{"pass", cvg_ok}, {"max_rel_err", cvg_max}, {"tolerance", ctol}}},
            {"density_bound", {{"pass", dens_ok}}}};
}

// ---- doubling ----------------------------------------------------------

json run_doubling(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    auto gauge = mc::make_gauge(m);
    json res = doubling_section(gauge, dyadic_logs(cfg.integer("doubling.k_lo"), cfg.integer("doubling.k_hi")), out,
                                "doubling.csv");
    res["mechanism"] = mechanism_json(m);
    double lo = cfg.real("doubling.band_lo"), hi = cfg.real("doubling.band_hi");
    if (lo > 0.0 || hi > 0.0) {
        bool ok = res["min_doubling_ratio"].get<double>() >= lo && res["max_doubling_ratio"].get<double>() <= hi;
        res["band"] = {{"lo", lo}, {"hi", hi}, {"pass", ok}};
    }
    return res;
}

// ---- counterexample ----------------------------------------------------

json run_counterexample(const LabConfig& cfg, ArtifactSet& out)
{
    auto d = cfg.mechanism();
    d.kind = "counterexample";
    auto m = mc::build_mechanism(d);
    json res = exponent_section(m, cfg, out);

    // the atom scales r_n themselves
    const long n_lo = cfg.integer("counterexample.n_lo");
    const long first = d.gamma < 2.0 ? 3 : 2;
    std::vector<double> log_r;
    const auto& atoms = std::get<mc::AtomList>(m.levy).atoms;
    for (std::size_t i = 0; i < atoms.size(); ++i)
        if (static_cast<long>(i) + first >= n_lo) log_r.push_back(atoms[i].log_r);
    auto gauge = mc::make_gauge(m);
    json dbl = doubling_section(gauge, log_r, out, "doubling.csv");
    const double thr = cfg.real("counterexample.ratio_threshold");
    res["max_doubling_ratio"] = dbl["max_doubling_ratio"];
    res["doubling"] = dbl;
    res["doubling_failure"] = dbl["max_doubling_ratio"].get<double>() > thr;
    res["ratio_threshold"] = thr;

    auto lambdas = log_grid(cfg.real("grid.log10_lo"), cfg.real("grid.log10_hi"), cfg.integer("grid.points"));
    res["sandwich_violations"] = mc::convexity_violations(m, lambdas);
    res["log_second_moment"] = mc::log_second_moment(m);
    res["mechanism"] = mechanism_json(m);
    return res;
}

// ---- spine-laplace -----------------------------------------------------

json run_spine_laplace(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    stable_gamma_of(m, "spine-laplace");
    const auto rs = cfg.real_list("spine.r");
    const auto ls = cfg.real_list("spine.lambda");
    const long n = cfg.integer("spine.replicates");
    const double sig = cfg.real("spine.sigmas");
    const std::uint64_t seed = cfg.seeds().front();
    sm::SpineOptions opt;
    opt.p = cfg.integer("spine.p");
    const double r_max = *std::max_element(rs.begin(), rs.end());

    // mstar[i][j]: replicate i, radius j
    std::vector<std::vector<double>> ms(n);
    rng::parallel_for(n, threads_of(cfg), [&](std::size_t i) {
        auto s = sm::sample_spine(m, r_max, seed, i, opt);
        for (double r : rs) ms[i].push_back(sm::mstar_at(s, r));
    });

    auto first = sm::sample_spine(m, r_max, seed, 0, opt);
    CsvTable grid({"r", "value"});
    for (std::size_t k = 0; k < first.radius_grid.size(); ++k) grid.row() << first.radius_grid[k] << first.mstar[k];
    out.write_csv("spine_grid.csv", grid,
                  header_line({{"seed", seed}, {"scale", opt.p}, {"mechanism", m.label}, {"replicate", 0}}));

    CsvTable t({"r", "lambda", "mc_mean", "se", "exact", "z", "pass"});
    bool all = true;
    double zmax = 0.0;
    for (std::size_t j = 0; j < rs.size(); ++j)
        for (double l : ls) {
            num::KahanSum s1, s2;
            for (long i = 0; i < n; ++i) {
                double e = std::exp(-l * ms[i][j]);
                s1.add(e);
                s2.add(e * e);
            }
            double mean = s1.value() / n;
            double var = std::max(0.0, s2.value() / n - mean * mean) * n / (n - 1);
            double se = std::sqrt(var / n);
            double exact = std::exp(m.alpha * rs[j]) * kn::script_L(m, rs[j], l).value;
            double z = (mean - exact) / se;
            bool ok = std::abs(z) <= sig;
            all = all && ok;
            zmax = std::max(zmax, std::abs(z));
            t.row() << rs[j] << l << mean << se << exact << z << ok;
        }
    out.write_csv("spine_laplace.csv", t);
    return {{"pass", all}, {"max_abs_z", zmax}, {"replicates", n}, {"sigmas", sig}, {"mechanism", mechanism_json(m)}};
}

// ---- subliminf ---------------------------------------------------------

json run_subliminf(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    auto gauge = mc::make_gauge(m);
    const auto seeds = cfg.seeds();
    const int nmax = static_cast<int>(cfg.integer("subordinator.nmax"));
    const long k_lo = cfg.integer("subordinator.k_lo"), k_hi = cfg.integer("subordinator.k_hi");
    const double r_lo = std::ldexp(1.0, -static_cast<int>(k_hi)), r_hi = std::ldexp(1.0, -static_cast<int>(k_lo));

    std::vector<sm::LiminfResult> res(seeds.size());
    rng::parallel_for(seeds.size(), threads_of(cfg), [&](std::size_t i) {
        auto path = sm::sample_subordinator(m, nmax, seeds[i], 0);
        res[i] = sm::liminf_ratio(path.r, path.S, gauge, r_lo, r_hi);
    });
    auto path0 = sm::sample_subordinator(m, nmax, seeds.front(), 0);
    CsvTable grid({"r", "value"});
    for (std::size_t k = 0; k < path0.r.size(); ++k) grid.row() << path0.r[k] << path0.S[k];
    out.write_csv("subordinator_grid.csv", grid,
                  header_line({{"seed", seeds.front()}, {"scale", nmax}, {"mechanism", m.label},
                               {"exponent", path0.exponent}}));

    CsvTable t({"seed", "min_ratio", "log_min_ratio", "argmin_r"});
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    bool positive_finite = true;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        t.row() << static_cast<long>(seeds[i]) << res[i].min_ratio << res[i].log_min_ratio << res[i].argmin_r;
        lo = std::min(lo, res[i].min_ratio);
        hi = std::max(hi, res[i].min_ratio);
        positive_finite = positive_finite && res[i].min_ratio > 0.0 && std::isfinite(res[i].min_ratio);
    }
    out.write_csv("liminf.csv", t);
    const double spread = hi / lo;
    const double spread_max = cfg.real("subordinator.max_over_min");

    const long n = cfg.integer("subordinator.laplace_replicates");
    std::vector<double> draws(n);
    rng::parallel_for(n, threads_of(cfg), [&](std::size_t i) {
        auto eng = rng::make_stream(seeds.front(), kLaplaceIndex + i);
        draws[i] = std::exp(-sm::subordinator_increment(m, 1.0, eng));
    });
    num::KahanSum s1, s2;
    for (double x : draws) {
        s1.add(x);
        s2.add(x * x);
    }
    double mean = s1.value() / n;
    double se = std::sqrt(std::max(0.0, s2.value() / n - mean * mean) * n / (n - 1) / n);
    double exact = std::exp(-sm::phi_star(m, 1.0));
    double z = (mean - exact) / se;
    const double sig = cfg.real("subordinator.sigmas");

    return {{"min_ratio", lo},
            {"max_ratio", hi},
            {"max_over_min", spread},
            {"positive_finite", positive_finite},
            {"spread_pass", spread <= spread_max},
            {"spread_limit", spread_max},
            {"window", {r_lo, r_hi}},
            {"seeds", static_cast<long>(seeds.size())},
            {"laplace", {{"mc_mean", mean}, {"se", se}, {"exact", exact}, {"z", z}, {"pass", std::abs(z) <= sig}}},
            {"mechanism", mechanism_json(m)}};
}

// ---- density -----------------------------------------------------------

rt::ExcursionPath walk_tree(double gamma, long p, long length, long factor, std::uint64_t seed, std::uint64_t index)
{
    return sm::sample_walk_excursion(gamma, p, length, seed, index, length * factor);
}

json geometry_section(const LabConfig& cfg, const mc::BranchingMechanism& m, double gam, ArtifactSet& out)
{
    const auto seeds = cfg.seeds();
    const long trees = cfg.integer("geometry.trees");
    const long quads = cfg.integer("geometry.quadruples");
    const double eps = cfg.real("geometry.epsilon");
    const double tol = cfg.real("geometry.tolerance");
    const double v_eps = mc::solve_v(m, eps);

    struct Row {
        long violations = 0;
        double root_err = 0.0;
        double ball_err = 0.0;
        double lt_mass = 0.0;
        double zeta = 0.0;
    };
    std::vector<Row> rows(trees);
    rng::parallel_for(trees, threads_of(cfg), [&](std::size_t j) {
        std::uint64_t seed = seeds[j % seeds.size()];
        auto tree = rt::CodedTree(walk_tree(gam, cfg.integer("geometry.p"), cfg.integer("geometry.length"),
                                            cfg.integer("walk.max_factor"), seed, kGeometryIndex + j));
        Row& r = rows[j];
        auto eng = rng::make_stream(rng::stream_key(seed, kGeometryIndex + j), kQuadrupleStream);
        std::uniform_int_distribution<std::size_t> pick(0, tree.size() - 1);
        for (long q = 0; q < quads; ++q)
            if (!rt::four_point_check(tree, pick(eng), pick(eng), pick(eng), pick(eng), tol)) ++r.violations;
        double hmax = 0.0;
        for (std::size_t t = 0; t < tree.size(); ++t) {
            r.root_err = std::max(r.root_err, std::abs(tree.distance(0, t) - tree.height(t)));
            hmax = std::max(hmax, tree.height(t));
        }
        for (int k = 1; k <= 4; ++k) {
            double rad = hmax * k / 5.0;
            long count = 0;
            for (std::size_t t = 0; t < tree.mass_points(); ++t) count += tree.height(t) <= rad;
            r.ball_err = std::max(r.ball_err, std::abs(rt::ball_mass(tree, 0, rad) - count * tree.dt()));
        }
        r.lt_mass = rt::local_time_mass(tree, eps, eps, v_eps);
        r.zeta = tree.path().zeta();
    });

    CsvTable t({"tree_id", "quadruples", "violations", "root_distance_err", "root_ball_err", "local_time_mass", "zeta",
                "rel_err"});
    long viol = 0;
    double root_err = 0.0, ball_err = 0.0, lt_worst = 0.0, lt_sum = 0.0, z_sum = 0.0;
    for (long j = 0; j < trees; ++j) {
        const Row& r = rows[j];
        double e = rel_err(r.lt_mass, r.zeta);
        t.row() << j << quads << r.violations << r.root_err << r.ball_err << r.lt_mass << r.zeta << e;
        viol += r.violations;
        root_err = std::max(root_err, r.root_err);
        ball_err = std::max(ball_err, r.ball_err);
        lt_worst = std::max(lt_worst, e);
        lt_sum += r.lt_mass;
        z_sum += r.zeta;
    }
    out.write_csv("geometry.csv", t);
    const double mass_rtol = cfg.real("geometry.mass_rtol");
    return {{"four_point_violations", viol},
            {"quadruples", trees * quads},
            {"root_distance_max_err", root_err},
            {"root_ball_max_err", ball_err},
            {"local_time_max_rel_err", lt_worst},
            {"local_time_pooled_ratio", lt_sum / z_sum},
            {"local_time_pass", lt_worst <= mass_rtol},
            {"mass_rtol", mass_rtol},
            {"pass", viol == 0 && root_err == 0.0 && ball_err == 0.0 && lt_worst <= mass_rtol}};
}

json run_density(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    const double gam = stable_gamma_of(m, "density");
    auto gauge = mc::make_gauge(m);
    const auto seeds = cfg.seeds();
    const long centers = cfg.integer("density.centers_per_tree");
    const int k_lo = static_cast<int>(cfg.integer("density.k_lo")), k_hi = static_cast<int>(cfg.integer("density.k_hi"));
    const bool save = cfg.boolean("density.save_trees");

    std::vector<std::vector<pk::DensityProfile>> prof(seeds.size());
    std::vector<std::string> blobs(seeds.size());
    std::vector<double> zetas(seeds.size());
    rng::parallel_for(seeds.size(), threads_of(cfg), [&](std::size_t i) {
        auto path = walk_tree(gam, cfg.integer("walk.p"), cfg.integer("walk.length"), cfg.integer("walk.max_factor"),
                              seeds[i], 0);
        if (save) {
            std::ostringstream os;
            rt::write_binary(path, os);
            blobs[i] = os.str();
        }
        rt::CodedTree tree(std::move(path));
        zetas[i] = tree.path().zeta();
        auto eng = rng::make_stream(seeds[i], kCenterStream);
        std::uniform_int_distribution<std::size_t> pick(0, tree.mass_points() - 1);
        for (long c = 0; c < centers; ++c) prof[i].push_back(pk::density_profile(tree, pick(eng), gauge, k_lo, k_hi));
    });

    CsvTable t({"tree_id", "center_index", "r", "mass", "gauge", "ratio"});
    std::vector<double> mins;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (save) out.write_bytes("trees/tree_" + std::to_string(i) + ".ltex", blobs[i]);
        for (const auto& p : prof[i]) {
            for (std::size_t k = 0; k < p.radii.size(); ++k)
                t.row() << i << p.center << p.radii[k] << p.masses[k] << std::exp(p.log_gauge[k])
                        << std::exp(p.log_ratios[k]);
            mins.push_back(p.min_ratio);
        }
    }
    out.write_csv("density.csv", t);

    const double med = quantile(mins, 0.5), q1 = quantile(mins, 0.25), q3 = quantile(mins, 0.75);
    const double mlo = cfg.real("density.median_lo"), mhi = cfg.real("density.median_hi");
    const double iqr_max = cfg.real("density.iqr_max");
    json res = {{"median_min_ratio", med},
                {"iqr", {q1, q3}},
                {"iqr_max_over_min", q3 / q1},
                {"n_centers", static_cast<long>(mins.size())},
                {"n_trees", static_cast<long>(seeds.size())},
                {"window", {std::ldexp(1.0, -k_hi), std::ldexp(1.0, -k_lo)}},
                {"median_band", {mlo, mhi}},
                {"median_pass", med >= mlo && med <= mhi},
                {"iqr_pass", q3 / q1 <= iqr_max},
                {"mean_zeta", std::accumulate(zetas.begin(), zetas.end(), 0.0) / zetas.size()},
                {"mechanism", mechanism_json(m)}};
    if (cfg.boolean("geometry.enabled")) res["geometry"] = geometry_section(cfg, m, gam, out);
    return res;
}

// ---- packing-ratio -----------------------------------------------------

// Disjoint subtrees [t, e) of the height-coded tree with size near fraction * n.
std::vector<std::pair<std::size_t, std::size_t>> pick_subtrees(const rt::CodedTree& tree, double fraction,
                                                               std::size_t count)
{
    const std::size_t n = tree.mass_points();
    std::vector<std::size_t> end(n, n);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        while (!stack.empty() && tree.height(s) <= tree.height(stack.back())) {
            end[stack.back()] = s;
            stack.pop_back();
        }
        stack.push_back(s);
    }
    const double hi = fraction * n, lo = 0.5 * fraction * n;
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t t = 1; t < n;) {
        double size = static_cast<double>(end[t] - t);
        if (size >= lo && size <= hi) {
            all.push_back({t, end[t]});
            t = end[t];
        } else {
            ++t;
        }
    }
    if (all.size() <= count) return all;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t k = 0; k < count; ++k) out.push_back(all[(k * all.size()) / count]);
    return out;
}

double brute_force_packing(const pk::PackingInstance& inst)
{
    const std::size_t np = inst.n_pairs(), nr = inst.radius_grid.size();
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << np); ++mask) {
        double v = 0.0;
        bool ok = true;
        for (std::size_t a = 0; a < np && ok; ++a) {
            if (!(mask >> a & 1)) continue;
            v += inst.weights[a % nr];
            for (std::size_t b = a + 1; b < np && ok; ++b) {
                if (!(mask >> b & 1)) continue;
                std::size_t pa = a / nr, pb = b / nr;
                ok = pa != pb && inst.dist(pa, pb) > inst.radius_grid[a % nr] + inst.radius_grid[b % nr];
            }
        }
        if (ok) best = std::max(best, v);
    }
    return best;
}

json packing_bank(long size, std::uint64_t seed, ArtifactSet& out)
{
    auto eng = rng::make_stream(seed, kBankStream);
    pk::Gauge g = [](double r) { return r * r; };
    CsvTable t({"instance", "points", "radii", "exact", "enumeration", "greedy", "pass"});
    long mismatches = 0, greedy_above = 0;
    for (long k = 0; k < size; ++k) {
        std::uniform_int_distribution<int> np(2, 6);
        int n = np(eng);
        int levels = std::uniform_int_distribution<int>(1, std::max(1, 12 / n))(eng);
        std::vector<double> x(n);
        for (auto& v : x) v = rng::open01(eng);
        std::vector<std::vector<double>> d(n, std::vector<double>(n));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) d[i][j] = std::abs(x[i] - x[j]);
        double eps = 0.05 + 0.3 * rng::open01(eng);
        auto inst = pk::make_matrix_instance(d, g, eps, pk::dyadic_radii(eps, levels));
        double ex = pk::packing_value_exact(inst).value;
        double bf = brute_force_packing(inst);
        double gr = pk::packing_value_greedy(inst).value;
        bool ok = std::abs(ex - bf) <= 1e-15 * std::max(1.0, bf) && gr <= ex + 1e-15;
        mismatches += std::abs(ex - bf) > 1e-15 * std::max(1.0, bf);
        greedy_above += gr > ex + 1e-15;
        t.row() << k << n << levels << ex << bf << gr << ok;
    }
    out.write_csv("packing_bank.csv", t);
    return {{"instances", size}, {"exact_mismatches", mismatches}, {"greedy_above_exact", greedy_above},
            {"pass", mismatches == 0 && greedy_above == 0}};
}

json run_packing_ratio(const LabConfig& cfg, ArtifactSet& out)
{
    auto m = mc::build_mechanism(cfg.mechanism());
    const double gam = stable_gamma_of(m, "packing-ratio");
    auto gauge = pk::gauge_of(mc::make_gauge(m));
    const std::uint64_t seed = cfg.seeds().front();

    json res;
    res["bank"] = packing_bank(cfg.integer("packing.bank_size"), seed, out);

    rt::CodedTree tree(walk_tree(gam, cfg.integer("walk.p"), cfg.integer("walk.length"), cfg.integer("walk.max_factor"),
                                 seed, 0));
    const auto count = static_cast<std::size_t>(cfg.integer("packing.subtrees"));
    auto subtrees = pick_subtrees(tree, cfg.real("packing.subtree_fraction"), count);
    pk::PackingVsMassOptions opt;
    opt.subsample = static_cast<std::size_t>(cfg.integer("packing.subsample"));
    opt.levels = static_cast<int>(cfg.integer("packing.levels"));
    auto pv = pk::packing_vs_mass(tree, subtrees, gauge, cfg.real("packing.epsilon"), opt);

    CsvTable t({"interval_id", "P_estimate", "mass", "ratio"});
    for (const auto& r : pv.rows) t.row() << r.interval_id << r.estimate << r.mass << r.ratio;
    out.write_csv("packing.csv", t);
    const double limit = cfg.real("packing.max_over_min");
    json notes = pv.notes;
    if (subtrees.size() < count)
        notes.push_back("only " + std::to_string(subtrees.size()) + " disjoint subtrees of the target size were found");
    res["max_over_min"] = pv.max_over_min;
    res["subtrees"] = static_cast<long>(pv.rows.size());
    res["ratio_pass"] = pv.rows.size() == count && pv.max_over_min <= limit;
    res["ratio_limit"] = limit;
    res["notes"] = notes;
    res["zeta"] = tree.path().zeta();
    res["mechanism"] = mechanism_json(m);
    return res;
}

}  // namespace

json run_body(const LabConfig& cfg, ArtifactSet& out)
{
    const std::string name = cfg.experiment();
    if (name == "mech-report") return run_mech_report(cfg, out);
    if (name == "kernels-check") return run_kernels_check(cfg, out);
    if (name == "doubling") return run_doubling(cfg, out);
    if (name == "counterexample") return run_counterexample(cfg, out);
    if (name == "spine-laplace") return run_spine_laplace(cfg, out);
    if (name == "subliminf") return run_subliminf(cfg, out);
    if (name == "density") return run_density(cfg, out);
    if (name == "packing-ratio") return run_packing_ratio(cfg, out);
    throw ConfigError("unknown experiment '" + name + "'");
}

RunResult run_experiment(const LabConfig& cfg)
{
    RunResult rr;
    try {
        validate_config(cfg);
    } catch (const ConfigError& e) {
        rr.status = 2;
        rr.error = e.what();
        return rr;
    }
    rr.dir = output_root(cfg);
    try {
        ArtifactSet out(rr.dir);
        json body;
        try {
            body = run_body(cfg, out);
        } catch (const ConfigError& e) {
            rr.status = 2;
            rr.error = e.what();
        } catch (const std::exception& e) {
            rr.status = 1;
            rr.error = e.what();
        }
        if (rr.status != 0) body = {{"error", rr.error}};
        rr.summary = emit_summary(cfg.experiment(), cfg, body);
        out.write_json("summary.json", rr.summary);
        out.write_manifest(cfg.experiment(), rr.status);
        rr.files = out.entries();
    } catch (const std::exception& e) {
        rr.status = 1;
        rr.error = e.what();
    }
    return rr;
}

}  // namespace levytree::lab
