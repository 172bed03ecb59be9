#include "levytree/samplers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace levytree::samplers {

namespace mc = levytree::mechanism;

namespace {
constexpr long kTable = 64;
}

// ---- discrete height process -------------------------------------------

std::vector<long> discrete_height(const std::vector<int>& steps)
{
    std::vector<long> out;
    out.reserve(steps.size());
    std::vector<long> stack;
    long s = 0;
    for (std::size_t n = 0; n < steps.size(); ++n) {
        if (steps[n] < -1) throw SamplerError("discrete_height: step below -1 at index " + std::to_string(n));
        while (!stack.empty() && stack.back() > s) stack.pop_back();
        out.push_back(static_cast<long>(stack.size()));
        stack.push_back(s);
        s += steps[n];
    }
    return out;
}

// ---- offspring laws ----------------------------------------------------

OffspringLaw::OffspringLaw(double gamma) : gamma_(gamma)
{
    if (!(gamma > 1.0 && gamma <= 2.0)) throw SamplerError("offspring law: gamma must lie in (1, 2]");
    if (!geometric()) {
        tail_.resize(kTable + 1);
        tail_[0] = 1.0 - 1.0 / gamma;
        tail_[1] = tail_[0];
        for (long k = 1; k < kTable; ++k) tail_[k + 1] = tail_[k] * (k + 1 - gamma) / (k + 1);
    }
}

double OffspringLaw::tail(long k) const
{
    if (k < 0) return 1.0;
    if (geometric()) return std::ldexp(1.0, static_cast<int>(-std::min<long>(k + 1, 1100)));
    if (k <= kTable) return tail_[k];
    double kk = static_cast<double>(k);
    return std::exp(std::log((gamma_ - 1.0) / gamma_) + std::lgamma(kk + 1.0 - gamma_) - std::lgamma(2.0 - gamma_) -
                    std::lgamma(kk + 1.0));
}

double OffspringLaw::pmf(long k) const
{
    if (k < 0) return 0.0;
    if (geometric()) return std::ldexp(1.0, static_cast<int>(-std::min<long>(k + 1, 1100)));
    return tail(k - 1) - tail(k);
}

long OffspringLaw::sample(rng::Engine& eng) const
{
    if (geometric()) {
        long k = 0;
        for (;;) {
            std::uint64_t w = eng();
            if (w != 0) return k + std::countr_zero(w);
            k += 64;
        }
    }
    double u = rng::open01(eng);
    if (u > tail_[0]) return 0;
    for (long k = 2; k <= kTable; ++k)
        if (tail_[k] < u) return k;
    long lo = kTable, hi = 2 * kTable;  // tail(lo) >= u
    while (tail(hi) >= u) {
        lo = hi;
        if (hi > (1L << 60)) return hi;
        hi *= 2;
    }
    while (hi - lo > 1) {
        long mid = lo + (hi - lo) / 2;
        if (tail(mid) < u)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

long OffspringLaw::sample_sum(long n, rng::Engine& eng) const
{
    if (geometric() && n > 32) return std::negative_binomial_distribution<long>(n, 0.5)(eng);
    long s = 0;
    for (long i = 0; i < n; ++i) s += sample(eng);
    return s;
}

// ---- walk excursions ---------------------------------------------------

double height_unit(double gamma, long p)
{
    double c = gamma == 2.0 ? 1.0 : std::pow(gamma, 1.0 / gamma);
    return 1.0 / (c * std::pow(static_cast<double>(p), 1.0 - 1.0 / gamma));
}

double trees_per_unit(double gamma, long p)
{
    double c = gamma == 2.0 ? 1.0 : std::pow(gamma, 1.0 / gamma);
    return std::pow(static_cast<double>(p), 1.0 / gamma) / c;
}

WalkExcursion sample_walk(const WalkOptions& opt, rng::Engine& eng)
{
    if (opt.p < 1) throw SamplerError("sample_walk: p must be at least 1");
    if (opt.min_length < 1) throw SamplerError("sample_walk: min_length must be at least 1");
    const long max_len = opt.max_length > 0 ? opt.max_length : 4 * opt.min_length;
    if (max_len < opt.min_length) throw SamplerError("sample_walk: max_length below min_length");
    OffspringLaw law(opt.gamma);
    WalkExcursion w;
    w.p = opt.p;
    w.gamma = opt.gamma;
    w.dt = 1.0 / static_cast<double>(opt.p);
    w.height_unit = height_unit(opt.gamma, opt.p);
    std::vector<long> stack;
    for (long attempt = 1; attempt <= opt.max_attempts; ++attempt) {
        w.heights.clear();
        w.steps.clear();
        stack.clear();
        long s = 0, n = 0;
        bool too_long = false;
        for (;;) {
            if (n >= max_len) {
                too_long = true;
                break;
            }
            while (!stack.empty() && stack.back() > s) stack.pop_back();
            w.heights.push_back(static_cast<std::int32_t>(stack.size()));
            stack.push_back(s);
            long xi = law.sample(eng);
            if (opt.keep_steps) w.steps.push_back(static_cast<int>(xi - 1));
            s += xi - 1;
            ++n;
            if (s == -1) break;
        }
        if (!too_long && n >= opt.min_length) {
            w.attempts = attempt;
            return w;
        }
    }
    throw BudgetError("sample_walk: resample budget exhausted after " + std::to_string(opt.max_attempts) +
                          " attempts",
                      opt.max_attempts);
}

realtree::ExcursionPath to_path(const WalkExcursion& w)
{
    realtree::ExcursionPath p;
    p.dt = w.dt;
    p.origin = realtree::Origin::simulated;
    p.h.resize(w.heights.size() + 1);
    for (std::size_t i = 0; i < w.heights.size(); ++i) p.h[i] = w.heights[i] * w.height_unit;
    p.h.back() = 0.0;
    return p;
}

realtree::ExcursionPath sample_walk_excursion(double gamma, long p, long min_length, std::uint64_t seed,
                                              std::uint64_t index, long max_length)
{
    auto eng = rng::make_stream(seed, index);
    WalkOptions o;
    o.gamma = gamma;
    o.p = p;
    o.min_length = min_length;
    o.max_length = max_length;
    return to_path(sample_walk(o, eng));
}

// ---- subordinators -----------------------------------------------------

double log_sample_positive_stable(double a, rng::Engine& eng)
{
    if (!(a > 0.0 && a < 1.0)) throw SamplerError("positive stable index must lie in (0, 1)");
    double u = std::numbers::pi * rng::open01(eng);
    double e = rng::exp1(eng);
    return std::log(std::sin(a * u)) - std::log(std::sin(u)) / a +
           (1.0 - a) / a * (std::log(std::sin((1.0 - a) * u)) - std::log(e));
}

double sample_positive_stable(double a, rng::Engine& eng) { return std::exp(log_sample_positive_stable(a, eng)); }

double sample_inverse_gaussian(double mu, double shape, rng::Engine& eng)
{
    double nu = std::normal_distribution<double>(0.0, 1.0)(eng);
    double y = nu * nu;
    double x = mu + mu * mu * y / (2.0 * shape) - mu / (2.0 * shape) * std::sqrt(4.0 * mu * shape * y + mu * mu * y * y);
    if (rng::open01(eng) <= mu / (mu + x)) return x;
    return mu * mu / x;
}

double phi_star(const BranchingMechanism& mech, double lambda)
{
    if (auto s = std::get_if<mc::StableTail>(&mech.levy); s && mech.alpha == 0.0) {
        double g = s->gamma;
        if (g == 2.0) return 2.0 * std::sqrt(mech.beta * lambda);
        return g * std::pow(lambda, (g - 1.0) / g);
    }
    if (std::holds_alternative<mc::Null>(mech.levy))
        return std::sqrt(mech.alpha * mech.alpha + 4.0 * mech.beta * lambda) - mech.alpha;
    return mc::phi_forward(mech, lambda) - mech.alpha;
}

double subordinator_increment(const BranchingMechanism& mech, double len, rng::Engine& eng)
{
    if (len <= 0.0) return 0.0;
    if (auto s = std::get_if<mc::StableTail>(&mech.levy); s && mech.alpha == 0.0) {
        double g = s->gamma;
        if (g == 2.0) return 4.0 * len * len * mech.beta * sample_positive_stable(0.5, eng);
        double a = (g - 1.0) / g;
        return std::exp(std::log(len * g) / a + log_sample_positive_stable(a, eng));
    }
    if (std::holds_alternative<mc::Null>(mech.levy)) {
        if (mech.beta == 0.0) return 0.0;
        if (mech.alpha == 0.0) return 4.0 * len * len * mech.beta * sample_positive_stable(0.5, eng);
        return sample_inverse_gaussian(2.0 * mech.beta * len / mech.alpha, 2.0 * mech.beta * len * len, eng);
    }
    throw SamplerError("sample_subordinator: unsupported exponent kind for mechanism '" + mech.label +
                       "' (exact sampling needs a stable or Gaussian mechanism)");
}

SubordinatorPath sample_subordinator(const BranchingMechanism& mech, int nmax, std::uint64_t seed,
                                     std::uint64_t index, int top)
{
    if (nmax < top) throw SamplerError("sample_subordinator: nmax below top level");
    auto eng = rng::make_stream(seed, index);
    SubordinatorPath out;
    out.r.push_back(0.0);
    out.S.push_back(0.0);
    double acc = 0.0;
    double prev = 0.0;
    for (int k = nmax; k >= top; --k) {
        double r = std::ldexp(1.0, -k);
        acc += subordinator_increment(mech, r - prev, eng);
        out.r.push_back(r);
        out.S.push_back(acc);
        prev = r;
    }
    std::ostringstream os;
    os << "phi* of " << mech.label;
    out.exponent = os.str();
    return out;
}

// ---- spine -------------------------------------------------------------

SpineSample sample_spine(const BranchingMechanism& mech, double r_max, std::uint64_t seed, std::uint64_t index,
                         const SpineOptions& opt)
{
    const auto* st = std::get_if<mc::StableTail>(&mech.levy);
    if (!st || mech.alpha != 0.0) throw SamplerError("sample_spine: requires a StableTail mechanism");
    if (!(r_max > 0.0)) throw SamplerError("sample_spine: r_max must be positive");
    const double gamma = st->gamma;
    auto eng = rng::make_stream(seed, index);
    OffspringLaw law(gamma);

    SpineSample s;
    s.r_max = r_max;
    s.p = opt.p;
    s.dt = 1.0 / static_cast<double>(opt.p);
    s.height_unit = height_unit(gamma, opt.p);
    const double rate = trees_per_unit(gamma, opt.p);
    const long kmax = static_cast<long>(std::floor(r_max / s.height_unit));

    std::vector<double> pos;
    if (gamma == 2.0) {
        s.u_total = 2.0 * mech.beta * r_max;
        long n = std::poisson_distribution<long>(s.u_total * rate)(eng);
        if (n > opt.max_trees) throw BudgetError("sample_spine: tree budget exhausted", n);
        pos.resize(n);
        for (auto& x : pos) x = r_max * rng::open01(eng);
    } else {
        const double h = r_max / opt.u_cells;
        const double a = gamma - 1.0;
        s.u_total = 0.0;
        for (int c = 0; c < opt.u_cells; ++c) {
            double du = std::exp(std::log(h * gamma) / a + log_sample_positive_stable(a, eng));
            s.u_increments.push_back(du);
            s.u_total += du;
            long n = std::poisson_distribution<long>(du * rate)(eng);
            if (static_cast<long>(pos.size()) + n > opt.max_trees)
                throw BudgetError("sample_spine: tree budget exhausted", static_cast<long>(pos.size()) + n);
            for (long i = 0; i < n; ++i) pos.push_back(h * (c + rng::open01(eng)));
        }
    }
    std::sort(pos.begin(), pos.end());

    long generations = 0;
    s.decorations.reserve(pos.size());
    for (double x : pos) {
        Decoration d{x, 0.0, false, {1}};
        long z = 1;
        for (long k = 1; k <= kmax; ++k) {
            z = law.sample_sum(z, eng);
            if (++generations > opt.max_generations)
                throw BudgetError("sample_spine: generation budget exhausted", generations);
            if (z == 0) break;
            d.cumulative.push_back(d.cumulative.back() + z);
        }
        d.extinct = z == 0;
        d.lifetime = s.dt * static_cast<double>(d.cumulative.back());
        s.decorations.push_back(std::move(d));
    }

    const int n = std::max(1, opt.n_grid);
    s.radius_grid.resize(n + 1);
    s.mstar.assign(n + 1, 0.0);
    s.lifetimes.assign(n + 1, 0.0);
    for (int i = 0; i <= n; ++i) s.radius_grid[i] = r_max * i / n;
    for (const auto& d : s.decorations) {
        for (int i = 0; i <= n; ++i) {
            double r = s.radius_grid[i];
            if (r < d.position) continue;
            auto k = static_cast<std::size_t>(std::floor((r - d.position) / s.height_unit));
            k = std::min(k, d.cumulative.size() - 1);
            s.mstar[i] += s.dt * static_cast<double>(d.cumulative[k]);
            s.lifetimes[i] += d.lifetime;
        }
    }
    return s;
}

double mstar_at(const SpineSample& s, double r)
{
    if (!(r >= 0.0) || r > s.r_max) throw SamplerError("mstar_at: r outside [0, r_max]");
    double m = 0.0;
    for (const auto& d : s.decorations) {
        if (d.position > r) break;
        auto k = static_cast<std::size_t>(std::floor((r - d.position) / s.height_unit));
        k = std::min(k, d.cumulative.size() - 1);
        m += s.dt * static_cast<double>(d.cumulative[k]);
    }
    return m;
}

// ---- liminf ratios -----------------------------------------------------

LiminfResult liminf_ratio(const std::vector<double>& r, const std::vector<double>& values, const GaugeFunction& gauge,
                          double r_lo, double r_hi)
{
    if (r.size() != values.size()) throw SamplerError("liminf_ratio: grid and values differ in length");
    if (!(r_lo > 0.0) || !(r_hi >= r_lo) || !(std::log(r_hi) < gauge.log_r0))
        throw mc::DomainError("liminf_ratio: window outside (0, r0)");
    LiminfResult res{0.0, std::numeric_limits<double>::infinity(), 0.0, {}};
    const double tol = 1e-12;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < r_lo * (1.0 - tol) || r[i] > r_hi * (1.0 + tol)) continue;
        if (values[i] < 0.0) throw SamplerError("liminf_ratio: negative value");
        double lg = mc::gauge_g(gauge, r[i]).log_g;
        double lr = values[i] > 0.0 ? std::log(values[i]) - lg : -std::numeric_limits<double>::infinity();
        res.profile.push_back({r[i], values[i], lr});
        if (lr < res.log_min_ratio) {
            res.log_min_ratio = lr;
            res.argmin_r = r[i];
        }
    }
    if (res.profile.empty()) throw SamplerError("liminf_ratio: no grid point inside the window");
    res.min_ratio = std::exp(res.log_min_ratio);
    return res;
}

}  // namespace levytree::samplers
