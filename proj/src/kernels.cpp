#include "levytree/kernels.hpp"

#include "levytree/numerics.hpp"

#include <cmath>
#include <sstream>

namespace levytree::kernels {

using mechanism::DomainError;
namespace mc = levytree::mechanism;

namespace {

constexpr double kLog2 = 0.69314718055994531;

num::RootOptions x_root_options()
{
    num::RootOptions o;
    o.rtol = 1e-13;
    o.atol = 1e-15;
    o.lower_limit = 0.0;
    return o;
}

}  // namespace

KappaSolution kappa_solve(const BranchingMechanism& mech, double a, double lambda, double mu)
{
    if (!(a >= 0.0) || !(lambda >= 0.0) || !(mu >= 0.0))
        throw DomainError("kappa_solve: a, lambda and mu must be nonnegative");
    KappaSolution sol{a, lambda, mu, mu, Route::ode, 0.0, true, 0.0, 0};
    if (a == 0.0) return sol;
    const double q = mc::psi_inverse(mech, lambda);
    if (mu == q) {
        sol.certified = false;
        sol.log_gap_decay = mc::psi_prime(mech, q) * a;
        return sol;
    }
    const double K = std::max(mu, q);
    auto rhs = [&](double, const std::array<double, 2>& y, std::array<double, 2>& dy) {
        double k = std::max(0.0, K * y[0]);
        dy[0] = (lambda - mc::psi(mech, k)) / K;
        dy[1] = mc::psi_prime(mech, k);
    };
    num::OdeOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-13;
    num::OdeResult<2> res;
    try {
        res = num::integrate_dp45<2>(rhs, 0.0, a, {mu / K, 0.0}, opt);
    } catch (const num::OdeError& e) {
        std::ostringstream os;
        os << "kappa_solve: " << e.what() << " at a = " << e.t << ", kappa = " << K * e.y[0];
        throw num::OdeError(os.str(), e.t, {K * e.y[0], e.y[1]});
    }
    sol.value = K * res.y[0];
    sol.log_gap_decay = res.y[1];
    sol.steps = res.steps;
    sol.residual = kappa_integral(mech, lambda, mu, sol.value, sol.log_gap_decay) - a;
    return sol;
}

double kappa_integral(const BranchingMechanism& mech, double lambda, double mu, double kappa,
                      double log_gap_decay)
{
    if (kappa == mu) return 0.0;
    const double d0 = lambda - mc::psi(mech, mu);
    const double sigma = d0 > 0.0 ? 1.0 : -1.0;
    auto direct = [&](double from, double to) {
        auto f = [&](double u) { return 1.0 / (lambda - mc::psi(mech, u)); };
        double lo = std::min(from, to), hi = std::max(from, to);
        double v = num::integrate_singular(f, lo, hi, 1e-13).value;
        return to > from ? v : -v;
    };
    if (log_gap_decay <= kLog2) return direct(mu, kappa);

    const double s_mu = std::log(std::abs(d0));
    const double s_m = s_mu - kLog2;
    const double s_k = s_mu - log_gap_decay;
    const double u_m = mc::psi_inverse(mech, lambda - sigma * std::exp(s_m));
    num::KahanSum acc;
    acc.add(direct(mu, u_m));
    auto g = [&](double s) { return 1.0 / mc::phi_forward(mech, lambda - sigma * std::exp(s)); };
    double lo = s_k;
    while (lo < s_m) {
        double hi = std::min(lo + 8.0, s_m);
        acc.add(num::integrate_smooth(g, lo, hi, 1e-13).value);
        lo = hi;
    }
    return acc.value();
}

double minus_log_L(const BranchingMechanism& mech, double r, double lambda)
{
    if (!(r >= 0.0) || !(lambda > 0.0)) throw DomainError("script_L: need r >= 0 and lambda > 0");
    if (r == 0.0) return 0.0;
    return kappa_solve(mech, r, lambda, 0.0).log_gap_decay;
}

double lrl_quadrature(const BranchingMechanism& mech, double lambda, double x)
{
    if (x <= 0.0) return 0.0;
    auto near = [&](double w) {
        if (w <= 0.0) return 0.0;
        return 1.0 / ((1.0 - w) * mc::phi_forward(mech, lambda * w));
    };
    double w = -std::expm1(-std::min(x, kLog2));
    double v = num::integrate_singular(near, 0.0, w, 1e-13).value;
    if (x > kLog2) {
        auto far = [&](double y) { return 1.0 / mc::phi_forward(mech, -lambda * std::expm1(-y)); };
        num::KahanSum acc;
        acc.add(v);
        double lo = kLog2;
        while (lo < x) {
            double hi = std::min(lo + 8.0, x);
            acc.add(num::integrate_smooth(far, lo, hi, 1e-13).value);
            lo = hi;
        }
        v = acc.value();
    }
    return v;
}

double minus_log_L_integral(const BranchingMechanism& mech, double r, double lambda)
{
    if (!(r >= 0.0) || !(lambda > 0.0)) throw DomainError("script_L: need r >= 0 and lambda > 0");
    if (r == 0.0) return 0.0;
    const double head = lrl_quadrature(mech, lambda, kLog2);
    auto F = [&](double x) {
        if (x <= kLog2) return lrl_quadrature(mech, lambda, x) - r;
        auto far = [&](double y) { return 1.0 / mc::phi_forward(mech, -lambda * std::expm1(-y)); };
        num::KahanSum acc;
        acc.add(head);
        double lo = kLog2;
        while (lo < x) {
            double hi = std::min(lo + 8.0, x);
            acc.add(num::integrate_smooth(far, lo, hi, 1e-13).value);
            lo = hi;
        }
        return acc.value() - r;
    };
    double guess = r * mc::phi_forward(mech, lambda);
    return num::solve_bracketed(F, 0.0, std::max(guess, 1e-3), x_root_options()).x;
}

LaplaceFunctional script_L(const BranchingMechanism& mech, double r, double lambda, const ScriptLOptions& opt)
{
    if (!(r > 0.0) || !(lambda > 0.0)) throw DomainError("script_L: need r > 0 and lambda > 0");
    LaplaceFunctional out{};
    out.r = r;
    out.lambda = lambda;
    out.minus_log = minus_log_L(mech, r, lambda);
    out.value = std::exp(-out.minus_log);
    out.agree = true;
    if (opt.integral_route) {
        try {
            out.minus_log_integral = minus_log_L_integral(mech, r, lambda);
            out.value_integral = std::exp(-out.minus_log_integral);
            out.discrepancy = std::abs(-std::expm1(out.minus_log - out.minus_log_integral));
            out.agree = out.discrepancy <= opt.agree_rtol;
            if (!out.agree) {
                std::ostringstream os;
                os << "ODE and integral routes differ by " << out.discrepancy << " (relative)";
                out.note = os.str();
            }
        } catch (const std::exception& e) {
            out.agree = false;
            out.note = std::string("integral route failed: ") + e.what();
        }
    }
    return out;
}

DensityBound density_bound_check(const BranchingMechanism& mech, double r)
{
    DensityBound d{};
    d.r = r;
    if (!(r > 0.0) || r >= 2.0) throw DomainError("density_bound_check: r must lie in (0, 2)");
    double l2 = std::log(2.0 / r);
    double ll2 = l2 > 0.0 ? std::log(l2) : -num::kInf;
    if (!(ll2 >= 2.0)) {
        d.precondition = false;
        d.note = "log log(2/r) < 2: outside the small-r regime, no claim";
        return d;
    }
    d.precondition = true;
    double log_lambda = std::log(kC2) + mc::log_phi_inverse(mech, l2 + std::log(ll2));
    d.lambda = std::exp(log_lambda);
    double ml = minus_log_L(mech, 2.0 * r, d.lambda);
    d.log_lhs = -ml;
    d.log_rhs = -2.0 * ll2;
    d.lhs = std::exp(d.log_lhs);
    d.rhs = std::exp(d.log_rhs);
    d.pass = d.log_lhs <= d.log_rhs;
    return d;
}

Claim1 claim1_check(const BranchingMechanism& mech, double r, double lambda)
{
    Claim1 c{};
    c.minus_log_L = minus_log_L(mech, r, lambda);
    c.conclusion = 2.0 / lambda * mc::psi(mech, r * lambda / 2.0);
    c.hypothesis = c.minus_log_L <= 1.0;
    c.holds = !c.hypothesis || c.conclusion <= 1.0;
    return c;
}

double mean_local_time(const BranchingMechanism& mech, double a)
{
    if (!(a >= 0.0)) throw DomainError("mean_local_time: a must be nonnegative");
    return std::exp(-mech.alpha * a);
}

}  // namespace levytree::kernels
