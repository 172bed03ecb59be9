#include "levytree/kernels.hpp"
#include "levytree/samplers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace levytree;
using namespace levytree::samplers;
using mechanism::stable;

namespace {

// quadratic-time evaluation of H_n = #{0 <= j < n : S_j = min_{j<=k<=n} S_k}
std::vector<long> brute_height(const std::vector<int>& steps)
{
    std::vector<long> S(steps.size() + 1, 0);
    for (std::size_t k = 0; k < steps.size(); ++k) S[k + 1] = S[k] + steps[k];
    std::vector<long> H(steps.size());
    for (std::size_t n = 0; n < steps.size(); ++n) {
        long c = 0;
        for (std::size_t j = 0; j < n; ++j)
            c += S[j] == *std::min_element(S.begin() + j, S.begin() + n + 1);
        H[n] = c;
    }
    return H;
}

// P(max of the normalized Brownian excursion <= x)
double excursion_max_cdf(double x)
{
    if (x <= 0.0) return 0.0;
    double s = 1.0;
    for (int k = 1; k < 200; ++k) {
        double t = 2.0 * k * k * x * x;
        if (t > 800) break;
        s += 2.0 * (1.0 - 2.0 * t) * std::exp(-t);
    }
    return std::clamp(s, 0.0, 1.0);
}

struct MeanSe {
    double mean, se;
};

MeanSe mean_se(const std::vector<double>& x)
{
    double m = 0.0, q = 0.0;
    for (double v : x) m += v;
    m /= x.size();
    for (double v : x) q += (v - m) * (v - m);
    return {m, std::sqrt(q / (x.size() - 1) / x.size())};
}

constexpr double kSigmas = 3.0;

}  // namespace

TEST_CASE("discrete height examples")
{
    CHECK(discrete_height({1, 1, -1, 1, -1, -1}) == std::vector<long>{0, 1, 2, 2, 3, 3});
    CHECK(discrete_height({1, -1}) == std::vector<long>{0, 1});
    CHECK(discrete_height({}).empty());
    CHECK_THROWS_AS(discrete_height({1, -2}), SamplerError);
}

TEST_CASE("discrete height matches the brute-force count")
{
    auto eng = rng::make_stream(99, 0);
    std::uniform_int_distribution<int> len(1, 40), step(-1, 3);
    for (int k = 0; k < 1000; ++k) {
        std::vector<int> s(len(eng));
        for (auto& v : s) v = step(eng);
        REQUIRE(discrete_height(s) == brute_height(s));
    }
}

TEST_CASE("offspring laws")
{
    OffspringLaw g15(1.5), g2(2.0);
    CHECK(g15.pmf(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(g15.pmf(1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    // p_k = (-1)^k binom(gamma, k) / gamma for k >= 2
    for (long k = 2; k < 30; ++k) {
        double lb = std::lgamma(2.5) - std::lgamma(k + 1.0) - std::lgamma(2.5 - k);
        double sign = (k % 2 == 0 ? 1.0 : -1.0) * (std::tgamma(2.5 - k) < 0 ? -1.0 : 1.0);
        double ref = sign * std::exp(lb) / 1.5;
        CHECK(g15.pmf(k) == doctest::Approx(ref).epsilon(1e-10));
    }
    for (long k = 0; k < 20; ++k) CHECK(g2.pmf(k) == doctest::Approx(std::ldexp(1.0, -(k + 1))).epsilon(1e-15));

    auto eng = rng::make_stream(5, 0);
    const int n = 200000;
    double s = 0.0, q = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = static_cast<double>(g2.sample(eng));
        s += x;
        q += x * x;
    }
    double m = s / n, se = std::sqrt((q / n - m * m) / n);
    CHECK(std::abs(m - 1.0) <= kSigmas * se);

    // empirical frequencies of the first few values for gamma = 1.5
    std::vector<long> cnt(6, 0);
    for (int i = 0; i < n; ++i) {
        long x = g15.sample(eng);
        if (x < 6) cnt[x]++;
    }
    for (long k = 0; k < 6; ++k) {
        double p = g15.pmf(k);
        CHECK(std::abs(cnt[k] / double(n) - p) <= 4.0 * std::sqrt(p * (1 - p) / n) + 1e-12);
    }
}

TEST_CASE("walk heights agree with the discrete height process")
{
    WalkOptions opt;
    opt.gamma = 1.5;
    opt.p = 1000;
    opt.min_length = 500;
    opt.keep_steps = true;
    auto eng = rng::make_stream(3, 0);
    auto w = sample_walk(opt, eng);
    auto h = discrete_height(w.steps);
    REQUIRE(h.size() == w.heights.size());
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == w.heights[i]);
    long sum = 0;
    for (int s : w.steps) sum += s;
    CHECK(sum == -1);
}

TEST_CASE("gamma = 2 walk excursions: scaled maximum follows the Brownian excursion law")
{
    // max / sqrt(2 zeta) for the geometric walk converges to the normalized excursion maximum
    const int n = 500;
    std::vector<double> stat;
    for (int i = 0; i < n; ++i) {
        auto p = sample_walk_excursion(2.0, 4096, 4096, 2024, i);
        double mx = *std::max_element(p.h.begin(), p.h.end());
        stat.push_back(mx / std::sqrt(2.0 * p.zeta()));
    }
    std::sort(stat.begin(), stat.end());
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        double F = excursion_max_cdf(stat[i]);
        d = std::max({d, std::abs(F - double(i) / n), std::abs(F - double(i + 1) / n)});
    }
    const double crit = 1.63 / std::sqrt(double(n));  // 1% level
    CHECK(d <= crit);
}

TEST_CASE("walk excursion determinism and budget")
{
    auto a = sample_walk_excursion(1.5, 1000, 2000, 8, 1);
    auto b = sample_walk_excursion(1.5, 1000, 2000, 8, 1);
    CHECK(a.h == b.h);
    CHECK(a.h.front() == 0.0);
    CHECK(a.h.back() == 0.0);
    WalkOptions opt;
    opt.min_length = 1 << 20;
    opt.max_attempts = 3;
    auto eng = rng::make_stream(1, 1);
    CHECK_THROWS_AS(sample_walk(opt, eng), BudgetError);
}

TEST_CASE("positive stable sampler Laplace transform")
{
    for (double a : {1.0 / 3.0, 0.5, 0.8}) {
        auto eng = rng::make_stream(12, 0);
        for (double l : {0.5, 1.0, 3.0}) {
            std::vector<double> x(20000);
            for (auto& v : x) v = std::exp(-l * sample_positive_stable(a, eng));
            auto ms = mean_se(x);
            CHECK(std::abs(ms.mean - std::exp(-std::pow(l, a))) <= kSigmas * ms.se);
        }
    }
}

TEST_CASE("subordinator Laplace transforms and paths")
{
    for (double gam : {1.5, 2.0}) {
        auto m = stable(gam);
        std::vector<double> x(10000);
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto eng = rng::make_stream(77, i);
            x[i] = std::exp(-subordinator_increment(m, 1.0, eng));
        }
        auto ms = mean_se(x);
        double exact = std::exp(-phi_star(m, 1.0));
        CHECK(std::abs(ms.mean - exact) <= kSigmas * ms.se);
    }
    CHECK(phi_star(stable(2.0), 1.0) == doctest::Approx(2.0));

    auto p = sample_subordinator(stable(1.5), 20, 4, 0);
    CHECK(p.S.front() == 0.0);
    CHECK(p.r.front() == 0.0);
    for (std::size_t k = 1; k < p.S.size(); ++k) {
        CHECK(p.S[k] >= p.S[k - 1]);
        CHECK(p.r[k] > p.r[k - 1]);
    }
    auto q = sample_subordinator(stable(1.5), 20, 4, 0);
    CHECK(p.S == q.S);
    CHECK_THROWS(sample_subordinator(mechanism::build_counterexample(1.5, 20), 10, 1, 0));
}

TEST_CASE("liminf ratio")
{
    auto gauge = mechanism::make_gauge(stable(2.0));
    std::vector<double> r, g, c;
    for (int k = 30; k >= 5; --k) {
        r.push_back(std::ldexp(1.0, -k));
        g.push_back(mechanism::gauge_g(gauge, r.back()).g);
        c.push_back(3.0);
    }
    auto eq = liminf_ratio(r, g, gauge, r.front(), r.back());
    CHECK(eq.min_ratio == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& pt : eq.profile) CHECK(std::abs(pt.log_ratio) <= 1e-12);
    auto cst = liminf_ratio(r, c, gauge, r.front(), r.back());
    CHECK(cst.argmin_r == r.back());
    CHECK_THROWS_AS(liminf_ratio(r, c, gauge, 1e-3, 0.5), mechanism::DomainError);
}

TEST_CASE("spine samples: monotone, dominated, deterministic")
{
    SpineOptions opt;
    opt.p = 10000;
    for (double gam : {1.5, 2.0}) {
        for (std::uint64_t i = 0; i < 20; ++i) {
            auto s = sample_spine(stable(gam), 1.0, 31, i, opt);
            CHECK(s.mstar.front() == 0.0);
            CHECK(mstar_at(s, 0.0) == 0.0);
            for (std::size_t k = 1; k < s.mstar.size(); ++k) CHECK(s.mstar[k] >= s.mstar[k - 1]);
            for (std::size_t k = 0; k < s.mstar.size(); ++k) CHECK(s.mstar[k] <= s.lifetimes[k] * (1 + 1e-12));
        }
        auto a = sample_spine(stable(gam), 1.0, 31, 5, opt);
        auto b = sample_spine(stable(gam), 1.0, 31, 5, opt);
        CHECK(a.mstar == b.mstar);
    }

    // results do not depend on the worker count
    std::vector<double> one(16), four(16);
    rng::parallel_for(16, 1, [&](std::size_t i) { one[i] = mstar_at(sample_spine(stable(2.0), 1.0, 9, i, opt), 0.7); });
    rng::parallel_for(16, 4, [&](std::size_t i) { four[i] = mstar_at(sample_spine(stable(2.0), 1.0, 9, i, opt), 0.7); });
    CHECK(one == four);
}

TEST_CASE("spine Laplace identity at r = 1, lambda = 1")
{
    auto m = stable(2.0);
    const int n = 3000;
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = std::exp(-mstar_at(sample_spine(m, 1.0, 555, i), 1.0));
    auto ms = mean_se(x);
    double c = std::cosh(1.0);
    CHECK(std::abs(ms.mean - 1.0 / (c * c)) <= kSigmas * ms.se);
}
