#include "levytree/numerics.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <sstream>

namespace levytree::num {

double log_add(double a, double b)
{
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

double logsumexp(const std::vector<double>& terms)
{
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (m == kNegInf || !std::isfinite(m)) return m;
    KahanSum s;
    for (double t : terms) s.add(std::exp(t - m));
    return m + std::log(s.value());
}

void KahanSum::add(double v)
{
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
        comp_ += (sum_ - t) + v;
    else
        comp_ += (v - t) + sum_;
    sum_ = t;
}

double log_compensated_exp(double log_x)
{
    if (log_x == kNegInf) return kNegInf;
    if (log_x > 700.0) return log_x;
    double x = std::exp(log_x);
    if (x <= 1.0) {
        // e^{-x}-1+x = (x^2/2) * sum_k 2(-x)^k/(k+2)!
        double term = 1.0, sum = 1.0;
        for (int k = 1; k <= 22; ++k) {
            term *= -x / (k + 2);
            sum += term;
        }
        return 2.0 * log_x - std::log(2.0) + std::log(sum);
    }
    if (log_x < 40.0) return std::log(std::expm1(-x) + x);
    return log_x + std::log1p(-1.0 / x);
}

double log_one_minus_exp_neg(double log_x)
{
    if (log_x == kNegInf) return kNegInf;
    if (log_x < -700.0) return log_x;
    double x = std::exp(log_x);
    if (x < 0.6931471805599453) return std::log(-std::expm1(-x));
    return std::log1p(-std::exp(-x));
}

RootError::RootError(const std::string& what, double a, double b, double fa, double fb, int iterations)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << what << " [bracket a=" << a << " b=" << b << " f(a)=" << fa << " f(b)=" << fb
             << " iterations=" << iterations << "]";
          return os.str();
      }()),
      a(a), b(b), fa(fa), fb(fb), iterations(iterations)
{
}

RootResult solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                           const RootOptions& opt)
{
    if (lo > hi) std::swap(lo, hi);
    lo = std::max(lo, opt.lower_limit);
    hi = std::min(hi, opt.upper_limit);
    double flo = f(lo), fhi = f(hi);
    int expand = 0;
    while (std::signbit(flo) == std::signbit(fhi) && flo != 0.0 && fhi != 0.0) {
        if (expand++ >= opt.max_expand)
            throw RootError("root bracket expansion failed", lo, hi, flo, fhi, expand);
        double w = hi - lo;
        bool lo_stuck = lo <= opt.lower_limit;
        bool hi_stuck = hi >= opt.upper_limit;
        if (lo_stuck && hi_stuck)
            throw RootError("root not bracketed within limits", lo, hi, flo, fhi, expand);
        bool move_lo = !lo_stuck && (hi_stuck || std::abs(flo) < std::abs(fhi) || !std::isfinite(fhi));
        if (!std::isfinite(flo) && !hi_stuck) move_lo = false;
        if (move_lo) {
            hi = lo;
            fhi = flo;
            lo = std::max(lo - 2.0 * w, opt.lower_limit);
            flo = f(lo);
        } else {
            lo = hi;
            flo = fhi;
            hi = std::min(hi + 2.0 * w, opt.upper_limit);
            fhi = f(hi);
        }
    }
    if (flo == 0.0) return {lo, 0.0, 0};
    if (fhi == 0.0) return {hi, 0.0, 0};

    double a = lo, b = hi, fa = flo, fb = fhi;
    int side = 0;
    double last_width = b - a;
    for (int it = 1; it <= opt.max_iter; ++it) {
        double x;
        if (std::isfinite(fa) && std::isfinite(fb))
            x = (a * fb - b * fa) / (fb - fa);
        else
            x = 0.5 * (a + b);
        if (!(x > a && x < b)) x = 0.5 * (a + b);
        double fx = f(x);
        if (fx == 0.0 || (opt.ftol > 0.0 && std::abs(fx) <= opt.ftol)) return {x, fx, it};
        if (std::signbit(fx) == std::signbit(fa)) {
            a = x;
            fa = fx;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            b = x;
            fb = fx;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
        double width = b - a;
        if (width <= opt.atol + opt.rtol * std::max(std::abs(a), std::abs(b)))
            return {std::abs(fa) < std::abs(fb) ? a : b, std::abs(fa) < std::abs(fb) ? fa : fb, it};
        if (width > 0.5 * last_width && it % 3 == 0) {
            double m = 0.5 * (a + b);
            double fm = f(m);
            if (fm == 0.0) return {m, 0.0, it};
            if (std::signbit(fm) == std::signbit(fa)) {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
            side = 0;
        }
        if (it % 3 == 0) last_width = b - a;
    }
    throw RootError("root finder did not converge", a, b, fa, fb, opt.max_iter);
}

namespace {

using GK15 = boost::math::quadrature::gauss_kronrod<double, 15>;

// one GK15 panel; boost reports the panel error on the reference interval, so rescale it
Integral gk_panel(const std::function<double(double)>& f, double a, double b)
{
    double err = 0.0;
    double v = GK15::integrate(f, a, b, 0, 0.0, &err);
    return {v, err * std::abs(b - a) / 2.0};
}

void gk_adapt(const std::function<double(double)>& f, double a, double b, const Integral& panel, double density,
              double rtol, int depth, KahanSum& value, double& error)
{
    const double width = std::abs(b - a);
    if (depth == 0 || panel.error <= std::max(rtol * std::abs(panel.value), density * width) ||
        !std::isfinite(panel.value)) {
        value.add(panel.value);
        error += panel.error;
        return;
    }
    const double m = 0.5 * (a + b);
    gk_adapt(f, a, m, gk_panel(f, a, m), density, rtol, depth - 1, value, error);
    gk_adapt(f, m, b, gk_panel(f, m, b), density, rtol, depth - 1, value, error);
}

}  // namespace

Integral integrate_smooth(const std::function<double(double)>& f, double a, double b, double rtol)
{
    if (a == b) return {0.0, 0.0};
    Integral top = gk_panel(f, a, b);
    KahanSum value;
    double err = 0.0;
    gk_adapt(f, a, b, top, rtol * std::abs(top.value) / std::abs(b - a), rtol, 30, value, err);
    double v = value.value();
    if (!std::isfinite(v) || err > std::max(1e3 * rtol * std::abs(v), 1e-300))
        throw QuadratureError("gauss-kronrod did not reach tolerance", v, err);
    return {v, err};
}

Integral integrate_singular(const std::function<double(double)>& f, double a, double b, double rtol)
{
    if (a == b) return {0.0, 0.0};
    boost::math::quadrature::tanh_sinh<double> ts(15);
    double err = 0.0, l1 = 0.0;
    std::size_t levels = 0;
    // integrate on [0, 1]: boost's error estimate is not scaled to the interval width
    const double w = b - a;
    auto g = [&](double u, double uc) {
        double x = u <= 0.5 ? a + w * u : b - w * uc;
        return w * f(x);
    };
    double v = ts.integrate(g, 0.0, 1.0, rtol, &err, &l1, &levels);
    if (!std::isfinite(v) || err > std::max(1e3 * rtol * std::abs(v), 1e-300))
        throw QuadratureError("tanh-sinh did not reach tolerance", v, err);
    return {v, err};
}

}  // namespace levytree::num
