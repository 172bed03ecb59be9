#include "levytree/mechanism.hpp"

#include "levytree/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace levytree::mechanism {

using num::kInf;
using num::kNegInf;

namespace {

constexpr double kLog2 = 0.69314718055994531;
constexpr double kE = 2.71828182845904524;
constexpr double kLogDblMax = 709.78271289338397;

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double clamp_exp(double l, bool& saturated)
{
    if (l > kLogDblMax) {
        saturated = true;
        return std::numeric_limits<double>::max();
    }
    return std::exp(l);
}

// two-pass log-sum-exp with compensated summation and no heap traffic
template <class Gen>
double lse(Gen&& gen)
{
    double m = kNegInf;
    gen([&](double t) { m = std::max(m, t); });
    if (m == kNegInf || m == kInf) return m;
    num::KahanSum s;
    gen([&](double t) { s.add(std::exp(t - m)); });
    return m + std::log(s.value());
}

// psi(lambda) = c lambda^gamma exactly: StableTail without extra drift or Brownian part
bool pure_power(const BranchingMechanism& mech, double& log_c, double& gamma)
{
    auto st = std::get_if<StableTail>(&mech.levy);
    if (!st || mech.alpha != 0.0) return false;
    gamma = st->gamma;
    if (gamma < 2.0) {
        if (mech.beta != 0.0) return false;
        log_c = 0.0;
    } else {
        log_c = std::log(mech.beta);
    }
    return true;
}

num::RootOptions log_root_options()
{
    num::RootOptions o;
    o.rtol = 4e-16;
    o.atol = 1e-14;
    o.max_iter = 300;
    o.lower_limit = -1e8;
    o.upper_limit = 1e8;
    return o;
}

}  // namespace

double BranchingMechanism::stable_gamma() const
{
    if (auto s = std::get_if<StableTail>(&levy)) return s->gamma;
    throw MechanismError("mechanism '" + label + "' is not StableTail");
}

void validate(const BranchingMechanism& mech)
{
    if (!(mech.alpha >= 0.0) || !std::isfinite(mech.alpha))
        throw MechanismError("alpha must be finite and nonnegative");
    if (!(mech.beta >= 0.0) || !std::isfinite(mech.beta))
        throw MechanismError("beta must be finite and nonnegative");
    bool has_jump = false;
    if (auto s = std::get_if<StableTail>(&mech.levy)) {
        if (!(s->gamma > 1.0 && s->gamma <= 2.0))
            throw MechanismError("StableTail gamma must lie in (1, 2]");
        has_jump = s->gamma < 2.0;
    } else if (auto al = std::get_if<AtomList>(&mech.levy)) {
        if (al->atoms.empty()) throw MechanismError("AtomList must contain at least one atom");
        for (std::size_t i = 0; i < al->atoms.size(); ++i) {
            const auto& at = al->atoms[i];
            if (!std::isfinite(at.log_r) || !std::isfinite(at.log_a))
                throw MechanismError("atom position and weight must be positive and finite");
            if (i > 0 && !(at.log_r < al->atoms[i - 1].log_r))
                throw MechanismError("atom positions must be strictly decreasing");
        }
        has_jump = true;
    }
    if (mech.alpha == 0.0 && mech.beta == 0.0 && !has_jump)
        throw MechanismError("mechanism is identically zero");
}

BranchingMechanism stable(double gamma)
{
    BranchingMechanism m;
    m.levy = StableTail{gamma};
    m.beta = gamma == 2.0 ? 1.0 : 0.0;
    std::ostringstream os;
    os << "stable-" << gamma;
    m.label = os.str();
    validate(m);
    return m;
}

BranchingMechanism null_mechanism(double alpha, double beta)
{
    BranchingMechanism m;
    m.alpha = alpha;
    m.beta = beta;
    m.levy = Null{};
    m.label = "null";
    validate(m);
    return m;
}

BranchingMechanism atom_mechanism(std::vector<Atom> atoms, double alpha, double beta, std::string label)
{
    BranchingMechanism m;
    m.alpha = alpha;
    m.beta = beta;
    m.levy = AtomList{std::move(atoms)};
    m.label = std::move(label);
    validate(m);
    return m;
}

BranchingMechanism build_counterexample(double gamma, int n_max)
{
    if (!(gamma > 1.0 && gamma <= 2.0)) throw MechanismError("counterexample gamma must lie in (1, 2]");
    if (n_max < 5) throw MechanismError("counterexample n_max must be at least 5");
    std::vector<Atom> atoms;
    if (gamma < 2.0) {
        for (int n = 3; n <= n_max; ++n) {
            double theta = n * std::log(static_cast<double>(n));
            atoms.push_back({-theta, gamma * theta});
        }
    } else {
        for (int n = 2; n <= n_max; ++n) {
            double n2 = static_cast<double>(n) * n;
            atoms.push_back({-n2, 2.0 * n2 - n * std::log(static_cast<double>(n))});
        }
    }
    std::ostringstream os;
    os << "counterexample-" << gamma << "-" << n_max;
    return atom_mechanism(std::move(atoms), 0.0, 0.0, os.str());
}

BranchingMechanism build_mechanism(const MechanismDescriptor& spec)
{
    BranchingMechanism m;
    if (spec.kind.empty()) throw MechanismError("empty mechanism descriptor");
    if (spec.kind == "stable") {
        m = stable(spec.gamma);
    } else if (spec.kind == "null") {
        m = null_mechanism(spec.alpha, spec.beta);
    } else if (spec.kind == "atoms") {
        m = atom_mechanism(spec.atoms, spec.alpha, spec.beta);
    } else if (spec.kind == "counterexample") {
        m = build_counterexample(spec.gamma, spec.n_max);
    } else {
        throw MechanismError("unknown mechanism kind '" + spec.kind + "'");
    }
    if (!spec.label.empty()) m.label = spec.label;
    return m;
}

// ---- evaluation ---------------------------------------------------------

double log_psi(const BranchingMechanism& mech, double l)
{
    if (l == kNegInf) return kNegInf;
    return lse([&](auto&& emit) {
        if (mech.alpha > 0.0) emit(std::log(mech.alpha) + l);
        if (mech.beta > 0.0) emit(std::log(mech.beta) + 2.0 * l);
        if (auto s = std::get_if<StableTail>(&mech.levy)) {
            if (s->gamma < 2.0) emit(s->gamma * l);
        } else if (auto al = std::get_if<AtomList>(&mech.levy)) {
            for (const auto& at : al->atoms) emit(at.log_a + num::log_compensated_exp(l + at.log_r));
        }
    });
}

double log_psi_prime(const BranchingMechanism& mech, double l)
{
    if (l == kNegInf) return safe_log(mech.alpha);
    return lse([&](auto&& emit) {
        if (mech.alpha > 0.0) emit(std::log(mech.alpha));
        if (mech.beta > 0.0) emit(std::log(2.0 * mech.beta) + l);
        if (auto s = std::get_if<StableTail>(&mech.levy)) {
            if (s->gamma < 2.0) emit(std::log(s->gamma) + (s->gamma - 1.0) * l);
        } else if (auto al = std::get_if<AtomList>(&mech.levy)) {
            for (const auto& at : al->atoms)
                emit(at.log_a + at.log_r + num::log_one_minus_exp_neg(l + at.log_r));
        }
    });
}

double psi(const BranchingMechanism& mech, double lambda)
{
    if (lambda < 0.0) throw DomainError("psi: lambda must be nonnegative");
    if (lambda == 0.0) return 0.0;
    if (std::holds_alternative<Null>(mech.levy)) return mech.alpha * lambda + mech.beta * lambda * lambda;
    if (auto s = std::get_if<StableTail>(&mech.levy)) {
        double v = mech.alpha * lambda + mech.beta * lambda * lambda;
        if (s->gamma < 2.0) v += std::pow(lambda, s->gamma);
        return v;
    }
    bool sat = false;
    return clamp_exp(log_psi(mech, std::log(lambda)), sat);
}

double psi_prime(const BranchingMechanism& mech, double lambda)
{
    if (lambda < 0.0) throw DomainError("psi_prime: lambda must be nonnegative");
    if (std::holds_alternative<Null>(mech.levy)) return mech.alpha + 2.0 * mech.beta * lambda;
    if (auto s = std::get_if<StableTail>(&mech.levy)) {
        double v = mech.alpha + 2.0 * mech.beta * lambda;
        if (s->gamma < 2.0 && lambda > 0.0) v += s->gamma * std::pow(lambda, s->gamma - 1.0);
        return v;
    }
    bool sat = false;
    return clamp_exp(log_psi_prime(mech, safe_log(lambda)), sat);
}

PsiValues psi_family_eval(const BranchingMechanism& mech, double lambda)
{
    if (!(lambda >= 0.0)) throw DomainError("psi_family_eval: lambda must be nonnegative");
    PsiValues v{};
    if (lambda == 0.0) {
        v.psi = 0.0;
        v.log_psi = kNegInf;
        v.psi_prime = v.psi_tilde = mech.alpha;
        v.log_psi_prime = v.log_psi_tilde = safe_log(mech.alpha);
        return v;
    }
    double l = std::log(lambda);
    v.log_psi = log_psi(mech, l);
    v.log_psi_prime = log_psi_prime(mech, l);
    v.log_psi_tilde = v.log_psi - l;
    v.psi = clamp_exp(v.log_psi, v.saturated);
    v.psi_prime = clamp_exp(v.log_psi_prime, v.saturated);
    v.psi_tilde = clamp_exp(v.log_psi_tilde, v.saturated);
    return v;
}

double log_psi_prime_sup(const BranchingMechanism& mech)
{
    if (mech.beta > 0.0) return kInf;
    if (auto s = std::get_if<StableTail>(&mech.levy)) return s->gamma < 2.0 ? kInf : safe_log(mech.alpha);
    if (auto al = std::get_if<AtomList>(&mech.levy)) {
        return lse([&](auto&& emit) {
            if (mech.alpha > 0.0) emit(std::log(mech.alpha));
            for (const auto& at : al->atoms) emit(at.log_a + at.log_r);
        });
    }
    return safe_log(mech.alpha);
}

// ---- inverses ------------------------------------------------------------

double log_psi_inverse(const BranchingMechanism& mech, double log_y)
{
    if (log_y == kNegInf) return kNegInf;
    if (std::isnan(log_y)) throw DomainError("psi_inverse: NaN argument");
    double log_c, gamma;
    if (pure_power(mech, log_c, gamma)) return (log_y - log_c) / gamma;
    auto f = [&](double l) { return log_psi(mech, l) - log_y; };
    double g = 0.5 * log_y;
    auto r = num::solve_bracketed(f, g - 1.0, g + 1.0, log_root_options());
    return r.x;
}

double psi_inverse(const BranchingMechanism& mech, double y)
{
    if (!(y >= 0.0)) throw DomainError("psi_inverse: y must be nonnegative");
    if (y == 0.0) return 0.0;
    return std::exp(log_psi_inverse(mech, std::log(y)));
}

double log_phi(const BranchingMechanism& mech, double log_lambda)
{
    return log_psi_prime(mech, log_psi_inverse(mech, log_lambda));
}

double phi_forward(const BranchingMechanism& mech, double lambda)
{
    if (!(lambda >= 0.0)) throw DomainError("phi: lambda must be nonnegative");
    if (lambda == 0.0) return mech.alpha;
    bool sat = false;
    return clamp_exp(log_phi(mech, std::log(lambda)), sat);
}

double log_phi_inverse(const BranchingMechanism& mech, double log_y)
{
    double log_alpha = safe_log(mech.alpha);
    if (std::isnan(log_y)) throw DomainError("phi_inverse: NaN argument");
    if (log_y < log_alpha - 1e-15) throw DomainError("phi_inverse: y below alpha");
    if (log_y <= log_alpha + 1e-15) return kNegInf;
    double sup = log_psi_prime_sup(mech);
    if (log_y >= sup) {
        std::ostringstream os;
        os << "phi_inverse: log y = " << log_y << " is beyond sup log phi = " << sup;
        throw DomainError(os.str());
    }
    double log_c, gamma;
    if (pure_power(mech, log_c, gamma)) {
        double l = (log_y - log_c - std::log(gamma)) / (gamma - 1.0);
        return log_c + gamma * l;
    }
    auto f = [&](double l) { return log_psi_prime(mech, l) - log_y; };
    double g = log_y;
    if (auto s = std::get_if<StableTail>(&mech.levy); s && s->gamma < 2.0) g = log_y / (s->gamma - 1.0);
    auto r = num::solve_bracketed(f, g - 1.0, g + 1.0, log_root_options());
    return log_psi(mech, r.x);
}

double phi_inverse(const BranchingMechanism& mech, double y)
{
    if (y == mech.alpha) return 0.0;
    if (!(y > 0.0)) throw DomainError("phi_inverse: y below alpha");
    bool sat = false;
    return clamp_exp(log_phi_inverse(mech, std::log(y)), sat);
}

// ---- integrals ---------------------------------------------------------

namespace {

// int over [s0, s1] of e^s / psi(e^s) ds
double shell(const BranchingMechanism& mech, double s0, double s1)
{
    auto f = [&](double s) { return std::exp(s - log_psi(mech, s)); };
    return num::integrate_smooth(f, s0, s1, 1e-13).value;
}

struct TailSum {
    double value;
    bool finite;
    double upper;
    std::string note;
};

TailSum tail_sum(const BranchingMechanism& mech, double log_lower, double cap)
{
    constexpr int kMaxShells = 5000;
    num::KahanSum total;
    double s = log_lower;
    double prev = -1.0, q_prev = -1.0;
    for (int k = 0; k < kMaxShells; ++k) {
        double c = shell(mech, s, s + 1.0);
        s += 1.0;
        total.add(c);
        double tot = total.value();
        if (!std::isfinite(tot) || tot > cap)
            return {tot, false, s, "partial sums exceeded the divergence cap"};
        if (c <= 1e-17 * tot) return {tot, true, s, ""};
        if (prev > 0.0 && k >= 2) {
            double q = c / prev;
            if (q < 0.999 && q_prev > 0.0) {
                double tail = c * q / (1.0 - q);
                double tail_err = tail * std::abs(q - q_prev) / (q * (1.0 - q));
                if (tail_err <= 1e-14 * tot && tail <= 1e-3 * tot) {
                    total.add(tail);
                    return {total.value(), true, s, "geometric tail extrapolation"};
                }
            }
            q_prev = q;
        }
        prev = c;
    }
    return {total.value(), false, s, "tail did not converge within the shell budget"};
}

}  // namespace

ExtinctionResult extinction_integral(const BranchingMechanism& mech, double lower, double divergence_cap)
{
    if (!(lower > 0.0)) throw DomainError("extinction_integral: lower must be positive");
    auto t = tail_sum(mech, std::log(lower), divergence_cap);
    return {t.value, t.finite, t.upper, t.note};
}

double log_tail_integral(const BranchingMechanism& mech, double log_lower)
{
    auto t = tail_sum(mech, log_lower, 1e300);
    if (!t.finite) throw num::QuadratureError("tail integral diverges: " + t.note, t.value, kInf);
    return std::log(t.value);
}

double log_solve_v(const BranchingMechanism& mech, double a)
{
    if (!(a > 0.0)) throw DomainError("solve_v: a must be positive");
    double log_a = std::log(a);
    auto f = [&](double l) { return log_tail_integral(mech, l) - log_a; };
    auto o = log_root_options();
    o.lower_limit = -700.0;
    o.upper_limit = 700.0;
    double g = -log_a;
    return num::solve_bracketed(f, g - 1.0, g + 1.0, o).x;
}

double solve_v(const BranchingMechanism& mech, double a) { return std::exp(log_solve_v(mech, a)); }

double solve_u(const BranchingMechanism& mech, double t, double lambda)
{
    if (!(t >= 0.0) || !(lambda >= 0.0)) throw DomainError("solve_u: t and lambda must be nonnegative");
    if (t == 0.0 || lambda == 0.0) return lambda;
    const double top = std::log(lambda);
    const double log_t = std::log(t);
    // unknown: log w with log u = top - w; int_u^lambda dw/psi(w) is increasing in w
    auto F = [&](double w) {
        num::KahanSum acc;
        double s = top - w;
        while (s < top) {
            double e = std::min(s + 1.0, top);
            acc.add(shell(mech, s, e));
            s = e;
        }
        return acc.value();
    };
    auto f = [&](double log_w) { return std::log(F(std::exp(log_w))) - log_t; };
    auto o = log_root_options();
    o.lower_limit = -745.0;
    o.upper_limit = std::log(1500.0);
    // small-t guess: w ~ t psi(lambda) / lambda
    double g = std::min(log_t + log_psi(mech, top) - top, 0.0);
    double log_w = num::solve_bracketed(f, g - 1.0, g + 1.0, o).x;
    return std::exp(top - std::exp(log_w));
}

// ---- gauge -------------------------------------------------------------

GaugeFunction make_gauge(const BranchingMechanism& mech)
{
    double lr0 = -kE;
    if (mech.alpha > 0.0) lr0 = std::min(lr0, -std::log(mech.alpha));
    return {mech, lr0};
}

GaugeValue gauge_g_log(const GaugeFunction& gauge, double log_r)
{
    if (!(log_r < gauge.log_r0)) {
        std::ostringstream os;
        os << "gauge: log r = " << log_r << " outside (0, r0), log r0 = " << gauge.log_r0;
        throw DomainError(os.str());
    }
    double log_ll = std::log(std::log(-log_r));
    double log_arg = log_ll - log_r;
    double lg = log_ll - log_phi_inverse(gauge.mech, log_arg);
    return {std::exp(lg), lg};
}

GaugeValue gauge_g(const GaugeFunction& gauge, double r)
{
    if (!(r > 0.0)) throw DomainError("gauge: r must be positive");
    return gauge_g_log(gauge, std::log(r));
}

// ---- exponents ---------------------------------------------------------

std::pair<double, double> default_exponent_range(const BranchingMechanism& mech)
{
    if (auto al = std::get_if<AtomList>(&mech.levy)) return {0.0, -al->atoms.back().log_r};
    return {0.0, 460.0};
}

ExponentReport estimate_exponents(const BranchingMechanism& mech, double lo, double hi, int n_points,
                                  const ExponentOptions& opt)
{
    ExponentReport rep{};
    rep.floor_q = opt.floor_q;
    rep.c_step = opt.c_step;
    std::ostringstream notes;
    if (n_points < 4) n_points = 4;
    if (hi <= lo) throw DomainError("estimate_exponents: empty range");
    for (int i = 0; i < n_points; ++i) {
        double l = lo + (hi - lo) * i / (n_points - 1);
        rep.scan_grid.push_back({l, log_psi(mech, l)});
    }
    double span_decades = (hi - std::max(lo, 0.0)) / std::log(10.0);
    if (span_decades < 6.0) notes << "range spans fewer than 6 decades above lambda = 1; ";

    double tail_start = hi - opt.tail_fraction * (hi - std::max(lo, 0.0));
    rep.gamma_hat = kInf;
    rep.eta_hat = -kInf;
    for (const auto& p : rep.scan_grid) {
        if (p.log_lambda < tail_start || p.log_lambda <= 0.0) continue;
        double e = p.log_psi / p.log_lambda;
        rep.gamma_hat = std::min(rep.gamma_hat, e);
        rep.eta_hat = std::max(rep.eta_hat, e);
    }

    const double log_q = std::log(opt.floor_q);
    auto holds = [&](double c) {
        double run_max = -kInf, worst = kInf;
        for (const auto& p : rep.scan_grid) {
            if (p.log_lambda < 0.0) continue;
            double s = p.log_psi - c * p.log_lambda;
            run_max = std::max(run_max, s);
            worst = std::min(worst, s - run_max);
        }
        return worst >= log_q;
    };
    rep.delta_hat = 0.0;
    int steps = static_cast<int>(std::lround(3.0 / opt.c_step));
    for (int k = 0; k <= steps; ++k) {
        double c = k * opt.c_step;
        if (!holds(c)) break;
        rep.delta_hat = c;
    }
    notes << "gamma/eta from min/max of log psi / log lambda over the upper " << opt.tail_fraction
          << " of the grid; delta from a c-grid with step " << opt.c_step << " and floor Q = " << opt.floor_q;
    rep.notes = notes.str();
    return rep;
}

DoublingReport doubling_report(const GaugeFunction& gauge, const std::vector<double>& log_r)
{
    DoublingReport rep{};
    rep.max_ratio = 0.0;
    for (double lr : log_r) {
        DoublingScale sc{lr, 0.0, 0.0, false, ""};
        if (!(lr + kLog2 < gauge.log_r0)) {
            sc.note = "2r outside (0, r0)";
        } else {
            try {
                double a = gauge_g_log(gauge, lr + kLog2).log_g;
                double b = gauge_g_log(gauge, lr).log_g;
                sc.log_ratio = a - b;
                sc.ratio = std::exp(sc.log_ratio);
                sc.in_domain = true;
                rep.max_ratio = std::max(rep.max_ratio, sc.ratio);
            } catch (const DomainError& e) {
                sc.note = e.what();
            }
        }
        if (!sc.in_domain) ++rep.skipped;
        rep.scales.push_back(sc);
    }
    return rep;
}

// ---- auxiliary ---------------------------------------------------------

SandwichPoint convexity_sandwich(const BranchingMechanism& mech, double lambda)
{
    const double l = std::log(lambda);
    const double l4 = std::log(4.0);
    const double e = kSandwichLogSlack;
    const double lp = log_psi(mech, l);
    const double lt = lp - l;
    const double ld = log_psi_prime(mech, l);
    const double li = log_psi_inverse(mech, l);
    const double lf = log_psi_prime(mech, li);
    SandwichPoint p{lambda, false, false, false};
    p.doubling = log_psi(mech, l + std::log(2.0)) <= l4 + lp + e;
    p.derivative = lt <= ld + e && ld <= l4 + lt + e;
    p.phi = l - li <= lf + e && lf <= l4 + l - li + e;
    return p;
}

int convexity_violations(const BranchingMechanism& mech, const std::vector<double>& lambdas)
{
    int bad = 0;
    for (double x : lambdas)
        if (!convexity_sandwich(mech, x).ok()) ++bad;
    return bad;
}

double log_second_moment(const BranchingMechanism& mech)
{
    auto al = std::get_if<AtomList>(&mech.levy);
    if (!al) throw MechanismError("second moment is defined here for atom lists only");
    return lse([&](auto&& emit) {
        for (const auto& at : al->atoms) emit(at.log_a + 2.0 * at.log_r);
    });
}

double log_j_psi_prime(const BranchingMechanism& mech, double log_x)
{
    auto al = std::get_if<AtomList>(&mech.levy);
    if (!al) throw MechanismError("J is defined here for atom lists only");
    return lse([&](auto&& emit) {
        for (const auto& at : al->atoms) {
            if (at.log_r <= log_x)
                emit(at.log_a + 2.0 * at.log_r);
            else
                emit(log_x + at.log_a + at.log_r);
        }
    });
}

double log_j_psi_tilde(const BranchingMechanism& mech, double log_x)
{
    auto al = std::get_if<AtomList>(&mech.levy);
    if (!al) throw MechanismError("J is defined here for atom lists only");
    return lse([&](auto&& emit) {
        for (const auto& at : al->atoms) {
            if (at.log_r <= log_x)
                emit(at.log_a + 2.0 * at.log_r - kLog2);
            else
                emit(at.log_a + log_x + at.log_r + std::log1p(-0.5 * std::exp(log_x - at.log_r)));
        }
    });
}

double stable_controlvg_constant(double gamma)
{
    return std::pow(gamma - 1.0, -1.0 / (gamma - 1.0)) * std::pow(gamma, gamma / (gamma - 1.0));
}

}  // namespace levytree::mechanism
