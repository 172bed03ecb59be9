#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace levytree::num {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogMax = 709.0;

// ---- log-domain helpers ------------------------------------------------

double log_add(double a, double b);
double logsumexp(const std::vector<double>& terms);

// log(e^{-x} - 1 + x) for x = exp(log_x)
double log_compensated_exp(double log_x);
// log(1 - e^{-x}) for x = exp(log_x)
double log_one_minus_exp_neg(double log_x);

// Neumaier compensated accumulator
class KahanSum {
public:
    void add(double v);
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// ---- bracketing root finder --------------------------------------------

struct RootOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double ftol = 0.0;
    int max_iter = 200;
    int max_expand = 200;
    double lower_limit = -kInf;
    double upper_limit = kInf;
};

class RootError : public std::runtime_error {
public:
    RootError(const std::string& what, double a, double b, double fa, double fb, int iterations);
    double a, b, fa, fb;
    int iterations;
};

struct RootResult {
    double x;
    double fx;
    int iterations;
};

// Expands [lo, hi] geometrically until f changes sign, then runs Illinois
// regula falsi with bisection safeguards.
RootResult solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                           const RootOptions& opt = {});

// ---- quadrature --------------------------------------------------------

class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double partial, double error)
        : std::runtime_error(what), partial(partial), error(error) {}
    double partial;
    double error;
};

struct Integral {
    double value;
    double error;
};

// Adaptive Gauss-Kronrod (15 point) on a finite interval.
Integral integrate_smooth(const std::function<double(double)>& f, double a, double b,
                          double rtol = 1e-12);
// tanh-sinh for integrable endpoint singularities on a finite interval.
Integral integrate_singular(const std::function<double(double)>& f, double a, double b,
                            double rtol = 1e-12);

// ---- Dormand-Prince 5(4) -----------------------------------------------

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-10;
    double h0 = 0.0;
    double hmin_rel = 1e-13;
    long max_steps = 5'000'000;
};

class OdeError : public std::runtime_error {
public:
    OdeError(const std::string& what, double t, std::vector<double> y)
        : std::runtime_error(what), t(t), y(std::move(y)) {}
    double t;
    std::vector<double> y;
};

template <std::size_t N>
struct OdeResult {
    std::array<double, N> y;
    long steps = 0;
    long rejected = 0;
};

template <std::size_t N, class F>
OdeResult<N> integrate_dp45(F&& rhs, double t0, double t1, std::array<double, N> y,
                            const OdeOptions& opt = {})
{
    using S = std::array<double, N>;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    OdeResult<N> res;
    res.y = y;
    const double span = t1 - t0;
    if (span <= 0.0) return res;

    double t = t0;
    double h = opt.h0 > 0.0 ? opt.h0 : span * 1e-3;
    const double hmin = std::max(span * opt.hmin_rel, 1e-300);
    S k1, k2, k3, k4, k5, k6, k7, tmp, ynew;
    rhs(t, y, k1);
    double err_prev = 1e-4;

    while (t < t1) {
        if (res.steps + res.rejected > opt.max_steps)
            throw OdeError("dp45: step budget exhausted", t, std::vector<double>(y.begin(), y.end()));
        if (t + h > t1) h = t1 - t;

        for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k1[i];
        rhs(t + c2 * h, tmp, k2);
        for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        rhs(t + c3 * h, tmp, k3);
        for (std::size_t i = 0; i < N; ++i)
            tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(t + c4 * h, tmp, k4);
        for (std::size_t i = 0; i < N; ++i)
            tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(t + c5 * h, tmp, k5);
        for (std::size_t i = 0; i < N; ++i)
            tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        rhs(t + h, tmp, k6);
        for (std::size_t i = 0; i < N; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(t + h, ynew, k7);

        double err = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err = std::max(err, std::abs(ei) / sc);
        }
        if (!std::isfinite(err)) err = 1e10;

        if (err <= 1.0) {
            t += h;
            y = ynew;
            k1 = k7;
            ++res.steps;
            // PI controller
            double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5) * std::pow(err_prev, 0.4 / 5);
            fac = std::clamp(fac, 0.2, 5.0);
            h *= fac;
            err_prev = std::max(err, 1e-4);
        } else {
            ++res.rejected;
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        }
        if (h < hmin && t < t1)
            throw OdeError("dp45: step size underflow", t, std::vector<double>(y.begin(), y.end()));
    }
    res.y = y;
    return res;
}

}  // namespace levytree::num
