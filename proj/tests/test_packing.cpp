#include "levytree/packing.hpp"
#include "levytree/rng.hpp"
#include "levytree/samplers.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

using namespace levytree;
using namespace levytree::packing;

namespace {

const Gauge kLinear = [](double r) { return r; };
const Gauge kSquare = [](double r) { return r * r; };

std::vector<std::vector<double>> line_metric(const std::vector<double>& x)
{
    std::vector<std::vector<double>> d(x.size(), std::vector<double>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) d[i][j] = std::abs(x[i] - x[j]);
    return d;
}

// depth-first enumeration: each point gets no ball or one ball of some admissible radius
double enumerate(const PackingInstance& inst)
{
    const std::size_t n = inst.n_points(), nr = inst.radius_grid.size();
    std::vector<int> choice(n, -1);
    double best = 0.0;
    std::function<void(std::size_t, double)> rec = [&](std::size_t i, double value) {
        if (i == n) {
            best = std::max(best, value);
            return;
        }
        rec(i + 1, value);
        for (std::size_t k = 0; k < nr; ++k) {
            bool ok = true;
            for (std::size_t j = 0; j < i && ok; ++j)
                if (choice[j] >= 0) ok = inst.dist(i, j) > inst.radius_grid[k] + inst.radius_grid[choice[j]];
            if (!ok) continue;
            choice[i] = static_cast<int>(k);
            rec(i + 1, value + inst.weights[k]);
            choice[i] = -1;
        }
    };
    rec(0, 0.0);
    return best;
}

}  // namespace

TEST_CASE("exact packing examples")
{
    auto three = make_matrix_instance(line_metric({0, 1, 2}), kLinear, 0.4, {0.2, 0.4});
    auto e = packing_value_exact(three);
    CHECK(e.value == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(e.balls.size() == 3);
    CHECK(packing_value_greedy(three).value == doctest::Approx(1.2).epsilon(1e-15));

    auto single = make_matrix_instance(line_metric({0}), kSquare, 0.3, {0.1, 0.3});
    CHECK(packing_value_exact(single).value == doctest::Approx(0.09).epsilon(1e-15));

    auto pair = make_matrix_instance(line_metric({0, 0.5}), kLinear, 0.3, {0.3});
    CHECK(packing_value_exact(pair).value == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(packing_value_greedy(pair).value <= packing_value_exact(pair).value);

    auto empty = make_matrix_instance({}, kLinear, 0.3, {0.3});
    CHECK(packing_value_greedy(empty).value == 0.0);
    CHECK(packing_value_exact(empty).value == 0.0);
}

TEST_CASE("instance validation and cap")
{
    CHECK_THROWS(make_matrix_instance(line_metric({0, 1}), kLinear, 0.3, {0.5}));
    CHECK_THROWS(make_matrix_instance(line_metric({0, 1}), kLinear, 0.3, {}));
    std::vector<double> x(30);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * i;
    auto big = make_matrix_instance(line_metric(x), kLinear, 0.3, dyadic_radii(0.3, 3));
    CHECK_THROWS_AS(packing_value_exact(big), CapExceeded);
    CHECK(packing_value(big).method == Method::greedy);
}

TEST_CASE("exact matches enumeration on a bank of small instances")
{
    auto eng = rng::make_stream(2025, 0);
    for (int k = 0; k < 50; ++k) {
        int n = std::uniform_int_distribution<int>(2, 6)(eng);
        int levels = std::uniform_int_distribution<int>(1, std::max(1, 12 / n))(eng);
        std::vector<double> x(n);
        for (auto& v : x) v = rng::open01(eng);
        double eps = 0.05 + 0.3 * rng::open01(eng);
        auto inst = make_matrix_instance(line_metric(x), kSquare, eps, dyadic_radii(eps, levels));
        REQUIRE(inst.n_pairs() <= 12);
        auto ex = packing_value_exact(inst);
        auto gr = packing_value_greedy(inst);
        CHECK(ex.value == doctest::Approx(enumerate(inst)).epsilon(1e-14));
        CHECK(gr.value <= ex.value + 1e-15);
        CHECK(packing_violations(inst, ex) == 0);
        CHECK(packing_violations(inst, gr) == 0);
    }
}

TEST_CASE("monotone in the point set and additive for separated sets")
{
    auto eng = rng::make_stream(8, 0);
    const double eps = 0.1;
    auto radii = dyadic_radii(eps, 3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(6), b(6);
        for (auto& v : a) v = rng::open01(eng);
        for (auto& v : b) v = 10.0 + rng::open01(eng);  // more than 2 eps away from a
        double pa = packing_value_exact(make_matrix_instance(line_metric(a), kSquare, eps, radii)).value;
        double pb = packing_value_exact(make_matrix_instance(line_metric(b), kSquare, eps, radii)).value;
        auto ab = a;
        ab.insert(ab.end(), b.begin(), b.end());
        double pab = packing_value_exact(make_matrix_instance(line_metric(ab), kSquare, eps, radii)).value;
        CHECK(pab == doctest::Approx(pa + pb).epsilon(1e-14));

        auto a5 = std::vector<double>(a.begin(), a.begin() + 5);
        double p5 = packing_value_exact(make_matrix_instance(line_metric(a5), kSquare, eps, radii)).value;
        CHECK(p5 <= pa + 1e-15);
    }
}

TEST_CASE("pre-measure on a tree")
{
    // an increasing flank of length 1: a segment in the tree metric
    auto tree = realtree::code_tree(realtree::piecewise_linear({{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.0}}, 1e-3));
    std::vector<std::size_t> flank;
    for (std::size_t t = 0; t <= 1000; ++t) flank.push_back(t);
    const Gauge twice = [](double r) { return 2 * r; };
    auto seq = pre_measure_estimate(tree, flank, twice, {0.02, 0.01}, 1);
    for (const auto& e : seq) CHECK(e.value == doctest::Approx(1.0).epsilon(0.1));

    std::vector<std::size_t> few;
    for (std::size_t t = 0; t < 10; ++t) few.push_back(100 * t);
    auto ex = pre_measure_estimate(tree, few, kSquare, {0.2, 0.1, 0.05, 0.025}, 3);
    for (std::size_t k = 0; k < ex.size(); ++k) {
        CHECK(ex[k].method == Method::exact);
        if (k) CHECK(ex[k].value <= ex[k - 1].value + 1e-15);
    }
    auto one = pre_measure_estimate(tree, {500}, kSquare, {0.04, 0.02, 0.01}, 1);
    CHECK(one[2].value == doctest::Approx(1e-4));
    CHECK_THROWS(pre_measure_estimate(tree, few, kSquare, {0.01, 0.02}, 1));
}

TEST_CASE("greedy is fast on a simulated tree")
{
    auto tree = realtree::code_tree(samplers::sample_walk_excursion(2.0, 1000, 1000, 4));
    std::vector<std::size_t> times;
    for (std::size_t t = 0; t < 1000; ++t) times.push_back(t);
    auto t0 = std::chrono::steady_clock::now();
    auto inst = make_tree_instance(tree, times, kSquare, 0.05, dyadic_radii(0.05, 4));
    auto g = packing_value_greedy(inst);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(g.value > 0.0);
    CHECK(secs < 1.0);
    CHECK(packing_violations(inst, g) == 0);
}

TEST_CASE("density profile")
{
    auto gauge = mechanism::make_gauge(mechanism::stable(2.0));
    auto tree = realtree::code_tree(realtree::piecewise_linear({{0.0, 0.0}, {0.05, 0.05}, {0.1, 0.0}}, 1e-4));
    auto p = density_profile(tree, 500, gauge, 4, 8);
    REQUIRE(p.radii.back() == 0.0625);
    CHECK(p.masses.back() == doctest::Approx(tree.path().zeta()).epsilon(1e-12));
    CHECK(std::exp(p.log_ratios.back()) ==
          doctest::Approx(tree.path().zeta() / mechanism::gauge_g(gauge, 0.0625).g).epsilon(1e-12));
    for (std::size_t k = 1; k < p.masses.size(); ++k) CHECK(p.masses[k] >= p.masses[k - 1]);
    CHECK_THROWS(density_profile(tree, 500, gauge, 1, 8));
}

TEST_CASE("packing versus mass")
{
    // two identical tents: isometric subtrees give equal ratios
    auto tree = realtree::code_tree(realtree::piecewise_linear(
        {{0.0, 0.0}, {0.0625, 0.0625}, {0.125, 0.0}, {0.1875, 0.0625}, {0.25, 0.0}}, 1.0 / 1024));
    PackingVsMassOptions opt;
    opt.subsample = 10;
    opt.levels = 3;
    const Gauge g = kSquare;
    auto pv = packing_vs_mass(tree, {{1, 128}, {129, 256}}, g, 0.01, opt);
    REQUIRE(pv.rows.size() == 2);
    CHECK(pv.rows[0].method == Method::exact);
    CHECK(pv.rows[0].ratio == pv.rows[1].ratio);
    CHECK(pv.max_over_min == 1.0);

    auto cover = packing_vs_mass(tree, {{0, 128}, {128, tree.mass_points()}}, g, 0.01, opt);
    CHECK(cover.rows[0].mass + cover.rows[1].mass == doctest::Approx(tree.path().zeta()).epsilon(1e-14));
    CHECK_THROWS(packing_vs_mass(tree, {{0, 140}, {100, 150}}, g, 0.01, opt));
}
