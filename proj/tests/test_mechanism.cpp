#include "levytree/mechanism.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace levytree::mechanism;

namespace {

constexpr double kRel = 1e-10;

std::vector<double> log_grid(double lo, double hi, int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(std::pow(10.0, lo + (hi - lo) * i / (n - 1)));
    return v;
}

// direct series psi(l) = sum a_k (e^{-l r_k} - 1 + l r_k)
double atom_psi_oracle(const std::vector<Atom>& atoms, double l)
{
    double s = 0.0;
    for (const auto& a : atoms) {
        double x = l * std::exp(a.log_r);
        s += std::exp(a.log_a) * (std::expm1(-x) + x);
    }
    return s;
}

}  // namespace

TEST_CASE("build_mechanism")
{
    auto b = stable(2.0);
    CHECK(b.alpha == 0.0);
    CHECK(b.beta == 1.0);
    auto s = stable(1.5);
    CHECK(psi(s, 1.0) == doctest::Approx(1.0).epsilon(kRel));
    CHECK(psi(s, 2.0) == doctest::Approx(std::pow(2.0, 1.5)).epsilon(kRel));
    CHECK_THROWS_AS(stable(1.0), MechanismError);
    CHECK_THROWS_AS(stable(2.5), MechanismError);
    CHECK_THROWS_AS(atom_mechanism({{0.0, 0.0}, {1.0, 0.0}}), MechanismError);  // positions must decrease
    CHECK_THROWS_AS(build_mechanism(MechanismDescriptor{}), MechanismError);

    MechanismDescriptor d;
    d.kind = "stable";
    d.gamma = 1.2;
    CHECK(build_mechanism(d).stable_gamma() == 1.2);
}

TEST_CASE("counterexample mechanisms")
{
    auto c = build_counterexample(1.5, 10);
    const auto& a = std::get<AtomList>(c.levy).atoms;
    CHECK(a.front().log_r == doctest::Approx(-3.0 * std::log(3.0)).epsilon(1e-14));
    CHECK(a.size() == 8);
    auto c2 = build_counterexample(2.0, 10);
    CHECK(std::get<AtomList>(c2.levy).atoms.front().log_r == doctest::Approx(-4.0).epsilon(1e-14));
    CHECK_THROWS(build_counterexample(1.5, 4));

    // sum r_n^{2-gamma} finite: log of the second moment is a finite number
    auto c40 = build_counterexample(1.5, 40);
    double m2 = 0.0;
    for (int n = 3; n <= 40; ++n) m2 += std::exp(-(2.0 - 1.5) * n * std::log(n));
    CHECK(std::exp(log_second_moment(c40)) == doctest::Approx(m2).epsilon(1e-12));

    CHECK(psi(c40, 0.0) == 0.0);
    auto lams = log_grid(-3, 6, 40);
    for (std::size_t i = 1; i + 1 < lams.size(); ++i) {
        // convexity on the grid via chord slopes
        double s1 = (psi(c40, lams[i]) - psi(c40, lams[i - 1])) / (lams[i] - lams[i - 1]);
        double s2 = (psi(c40, lams[i + 1]) - psi(c40, lams[i])) / (lams[i + 1] - lams[i]);
        CHECK(s1 <= s2 * (1 + 1e-12));
    }
}

TEST_CASE("psi family")
{
    auto v = psi_family_eval(stable(2.0), 2.0);
    CHECK(v.psi == doctest::Approx(4.0).epsilon(kRel));
    CHECK(v.psi_prime == doctest::Approx(4.0).epsilon(kRel));
    CHECK(v.psi_tilde == doctest::Approx(2.0).epsilon(kRel));
    auto w = psi_family_eval(stable(1.5), 8.0);
    CHECK(w.psi == doctest::Approx(std::pow(8.0, 1.5)).epsilon(kRel));
    CHECK(w.psi_prime == doctest::Approx(1.5 * std::sqrt(8.0)).epsilon(kRel));
    CHECK(w.psi_tilde == doctest::Approx(std::sqrt(8.0)).epsilon(kRel));
    auto one = atom_mechanism({{0.0, 0.0}});
    CHECK(psi(one, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(kRel));
    CHECK(psi_family_eval(null_mechanism(0.7, 0.0), 0.0).psi_tilde == 0.7);
}

TEST_CASE("atom list psi against the direct series")
{
    std::vector<Atom> atoms = {{std::log(2.0), std::log(0.5)}, {std::log(0.1), std::log(30.0)},
                               {std::log(1e-3), std::log(1e4)}};
    auto m = atom_mechanism(atoms, 0.2, 0.1);
    for (double l : log_grid(-2, 4, 13)) {
        double ref = 0.2 * l + 0.1 * l * l + atom_psi_oracle(atoms, l);
        CHECK(psi(m, l) == doctest::Approx(ref).epsilon(1e-11));
        // derivative against a central difference of the oracle
        double h = 1e-5 * l;
        double dref = 0.2 + 0.2 * l + (atom_psi_oracle(atoms, l + h) - atom_psi_oracle(atoms, l - h)) / (2 * h);
        CHECK(psi_prime(m, l) == doctest::Approx(dref).epsilon(1e-6));
    }
}

TEST_CASE("psi and phi inverses")
{
    CHECK(psi_inverse(stable(2.0), 4.0) == doctest::Approx(2.0).epsilon(kRel));
    CHECK(psi_inverse(stable(1.5), std::pow(2.0, 1.5)) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(psi_inverse(stable(1.5), 0.0) == 0.0);
    CHECK(phi_forward(stable(2.0), 1.0) == doctest::Approx(2.0).epsilon(kRel));
    CHECK(phi_forward(stable(1.5), 8.0) == doctest::Approx(3.0).epsilon(kRel));
    CHECK(phi_forward(null_mechanism(0.5, 1.0), 0.0) == 0.5);
    CHECK(phi_inverse(stable(2.0), 2.0) == doctest::Approx(1.0).epsilon(kRel));
    CHECK(phi_inverse(stable(1.5), 3.0) == doctest::Approx(8.0).epsilon(1e-6));
    CHECK(phi_inverse(null_mechanism(0.5, 1.0), 0.5) == 0.0);
    CHECK_THROWS_AS(phi_inverse(null_mechanism(0.5, 1.0), 0.4), DomainError);
}

TEST_CASE("round trips")
{
    std::vector<BranchingMechanism> ms = {stable(1.2), stable(1.5), stable(2.0), null_mechanism(0.3, 1.0),
                                          atom_mechanism({{0.0, 0.0}, {-3.0, 5.0}}, 0.0, 0.5),
                                          build_counterexample(1.5, 40)};
    for (const auto& m : ms) {
        for (double y : log_grid(-3, 9, 25)) {
            CHECK(std::abs(psi(m, psi_inverse(m, y)) - y) <= 1e-8 * std::max(1.0, y));
            if (y > m.alpha) CHECK(std::abs(phi_forward(m, phi_inverse(m, y)) - y) <= 1e-6 * std::max(1.0, y));
        }
    }
}

TEST_CASE("extinction integral")
{
    auto a = extinction_integral(stable(2.0), 1.0);
    CHECK(a.finite);
    CHECK(a.value == doctest::Approx(1.0).epsilon(1e-9));
    auto b = extinction_integral(stable(1.5), 1.0);
    CHECK(b.finite);
    CHECK(b.value == doctest::Approx(2.0).epsilon(1e-9));
    CHECK_FALSE(extinction_integral(null_mechanism(1.0, 0.0), 1.0).finite);
}

TEST_CASE("solve_v and solve_u")
{
    CHECK(solve_v(stable(2.0), 2.0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(solve_v(stable(2.0), 1.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(solve_v(stable(1.5), 1.0) == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(solve_u(stable(2.0), 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(solve_u(stable(1.5), 1.0, 1.0) == doctest::Approx(1.0 / 2.25).epsilon(1e-9));
    CHECK(solve_u(stable(1.5), 0.0, 3.0) == 3.0);

    auto m = build_counterexample(1.5, 40);
    double prev_v = INFINITY, prev_u = 5.0;
    for (double a : log_grid(-4, 1, 12)) {
        double v = solve_v(m, a), u = solve_u(m, a, 5.0);
        CHECK(v < prev_v);
        CHECK(u <= prev_u);
        prev_v = v;
        prev_u = u;
    }
}

TEST_CASE("gauge")
{
    const double e2 = std::exp(2.0);
    auto g = make_gauge(stable(2.0));
    auto v = gauge_g_log(g, -e2);
    CHECK(v.log_g == doctest::Approx(std::log(2.0) - 2 * e2).epsilon(1e-12));

    // stable closed form gamma^{gamma/(gamma-1)} r^{gamma/(gamma-1)} LL^{-1/(gamma-1)}
    for (double gam : {1.2, 1.5, 2.0}) {
        auto gg = make_gauge(stable(gam));
        for (double lr : {-20.0, -200.0, -1e5, -1e6}) {
            double ll = std::log(-lr);
            double ref = gam / (gam - 1) * (std::log(gam) + lr) - std::log(ll) / (gam - 1);
            CHECK(gauge_g_log(gg, lr).log_g == doctest::Approx(ref).epsilon(1e-12));
        }
    }
    double prev = -INFINITY;
    for (double lr = -50.0; lr < -std::exp(1.0); lr += 0.5) {
        double lg = gauge_g_log(g, lr).log_g;
        CHECK(lg > prev);
        prev = lg;
    }
    auto ga = make_gauge(null_mechanism(100.0, 1.0));
    CHECK(ga.log_r0 == doctest::Approx(-std::log(100.0)));
    CHECK_THROWS_AS(gauge_g(ga, 0.02), DomainError);
}

TEST_CASE("exponents of stable mechanisms")
{
    for (double gam : {1.2, 1.5, 2.0}) {
        auto m = stable(gam);
        auto [lo, hi] = default_exponent_range(m);
        auto rep = estimate_exponents(m, lo, hi, 2000);
        CHECK(std::abs(rep.delta_hat - gam) <= 0.05);
        CHECK(std::abs(rep.gamma_hat - gam) <= 0.05);
        CHECK(std::abs(rep.eta_hat - gam) <= 0.05);
    }
}

TEST_CASE("doubling ratios")
{
    std::vector<double> lr;
    for (int k = 20; k <= 120; ++k) lr.push_back(-k * std::log(2.0));
    auto rep = doubling_report(make_gauge(stable(2.0)), lr);
    for (const auto& s : rep.scales) {
        CHECK(s.in_domain);
        CHECK(s.ratio >= 3.5);
        CHECK(s.ratio <= 4.5);
    }
    std::vector<double> lr8;
    for (int k = 27; k <= 120; ++k) lr8.push_back(-k * std::log(2.0));
    for (const auto& s : doubling_report(make_gauge(stable(1.5)), lr8).scales) {
        CHECK(s.ratio >= 7.0);
        CHECK(s.ratio <= 9.0);
    }
}

TEST_CASE("convexity sandwich and J bounds")
{
    auto lams = log_grid(-3, 6, 60);
    for (const auto& m : {stable(1.2), stable(2.0), build_counterexample(2.0, 25), null_mechanism(1.0, 0.0)})
        CHECK(convexity_violations(m, lams) == 0);

    auto m = build_counterexample(1.5, 40);
    for (double l : log_grid(-2, 12, 30)) {
        double lx = -std::log(l);
        double lj = log_j_psi_prime(m, lx) + std::log(l);
        double lt = log_j_psi_tilde(m, lx) + std::log(l);
        double ep = std::log(psi_prime(m, l));
        double et = std::log(psi(m, l) / l);
        CHECK(ep >= std::log(kJLower) + lj - 1e-12);
        CHECK(ep <= std::log(kJUpper) + lj + 1e-12);
        CHECK(et >= std::log(kJLower) + lt - 1e-12);
        CHECK(et <= std::log(kJUpper) + lt + 1e-12);
    }
}

TEST_CASE("controlvg constant")
{
    CHECK(stable_controlvg_constant(2.0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(stable_controlvg_constant(1.5) == doctest::Approx(4.0 * std::pow(1.5, 3.0)).epsilon(1e-14));
}
