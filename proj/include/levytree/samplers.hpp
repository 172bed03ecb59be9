#pragma once

#include "levytree/mechanism.hpp"
#include "levytree/realtree.hpp"
#include "levytree/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace levytree::samplers {

using mechanism::BranchingMechanism;
using mechanism::GaugeFunction;

class SamplerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BudgetError : public SamplerError {
public:
    BudgetError(const std::string& what, long attempts) : SamplerError(what), attempts(attempts) {}
    long attempts;
};

// ---- discrete height process -------------------------------------------

// H_n = #{0 <= j < n : S_j = min_{j<=k<=n} S_k} for the walk S_0 = 0,
// S_{k+1} = S_k + steps[k]; returns H_0 .. H_{m-1}.
std::vector<long> discrete_height(const std::vector<int>& steps);

// ---- offspring laws ----------------------------------------------------

// gamma < 2: f(s) = s + (1-s)^gamma / gamma; gamma = 2: geometric 2^{-(k+1)}.
class OffspringLaw {
public:
    explicit OffspringLaw(double gamma);
    double gamma() const { return gamma_; }
    bool geometric() const { return gamma_ == 2.0; }
    double pmf(long k) const;
    double tail(long k) const;  // P(xi > k)
    long sample(rng::Engine& eng) const;
    // sum of n independent copies
    long sample_sum(long n, rng::Engine& eng) const;

private:
    double gamma_;
    std::vector<double> tail_;  // Q_0 .. Q_{kTable}
};

// ---- walk excursions ---------------------------------------------------

struct WalkOptions {
    double gamma = 2.0;
    long p = 1 << 20;           // time scale: dt = 1/p
    long min_length = 1 << 20;  // vertices
    long max_length = 0;        // 0 means 4 * min_length
    long max_attempts = 10'000'000;
    bool keep_steps = false;
};

struct WalkExcursion {
    std::vector<int> steps;       // xi - 1 for each vertex (kept on request)
    std::vector<std::int32_t> heights;
    long p = 1;
    double gamma = 2.0;
    double dt = 1.0;              // time per vertex
    double height_unit = 1.0;     // space per generation
    long attempts = 0;
};

// 1 / (c p^{1-1/gamma}), c = gamma^{1/gamma} for gamma < 2 and 1 for gamma = 2
double height_unit(double gamma, long p);
// number of trees per unit of local time, p^{1/gamma} / c
double trees_per_unit(double gamma, long p);

WalkExcursion sample_walk(const WalkOptions& opt, rng::Engine& eng);
realtree::ExcursionPath to_path(const WalkExcursion& w);

realtree::ExcursionPath sample_walk_excursion(double gamma, long p, long min_length, std::uint64_t seed,
                                              std::uint64_t index = 0, long max_length = 0);

// ---- subordinators -----------------------------------------------------

// positive stable: E exp(-lambda S) = exp(-lambda^a), a in (0, 1)
double sample_positive_stable(double a, rng::Engine& eng);
double log_sample_positive_stable(double a, rng::Engine& eng);
double sample_inverse_gaussian(double mu, double shape, rng::Engine& eng);

struct SubordinatorPath {
    std::vector<double> r;  // r[0] = 0, then 2^{-nmax}, ..., 2^{-top}
    std::vector<double> S;
    std::string exponent;   // description of phi*
};

// phi*(lambda) = phi(lambda) - alpha in closed form where supported
double phi_star(const BranchingMechanism& mech, double lambda);

SubordinatorPath sample_subordinator(const BranchingMechanism& mech, int nmax, std::uint64_t seed,
                                     std::uint64_t index = 0, int top = 0);

// S over one interval of length len
double subordinator_increment(const BranchingMechanism& mech, double len, rng::Engine& eng);

// ---- spine -------------------------------------------------------------

struct Decoration {
    double position;               // r_j
    double lifetime;               // mass of the decoration up to the height cap
    bool extinct;                  // lifetime is exact
    std::vector<std::int64_t> cumulative;  // vertices in generations 0..k
};

struct SpineOptions {
    long p = 1'000'000;      // decoration scale
    int n_grid = 64;         // radius grid points (excluding 0)
    int u_cells = 4096;      // cells for the jump subordinator U (gamma < 2)
    long max_trees = 50'000'000;
    long max_generations = 2'000'000'000;
};

struct SpineSample {
    double r_max;
    long p;
    double dt;
    double height_unit;
    double u_total;                      // U_{r_max}
    std::vector<double> u_increments;    // per cell (gamma < 2), empty for gamma = 2
    std::vector<Decoration> decorations; // sorted by position
    std::vector<double> radius_grid;     // 0, r_max/n, ..., r_max
    std::vector<double> mstar;           // M*_r on the grid
    std::vector<double> lifetimes;       // sum of decoration lifetimes up to r on the grid
};

SpineSample sample_spine(const BranchingMechanism& mech, double r_max, std::uint64_t seed, std::uint64_t index = 0,
                         const SpineOptions& opt = {});

// M*_r for arbitrary r in [0, r_max]
double mstar_at(const SpineSample& s, double r);

// ---- liminf ratios -----------------------------------------------------

struct RatioPoint {
    double r;
    double value;
    double log_ratio;
};

struct LiminfResult {
    double min_ratio;
    double log_min_ratio;
    double argmin_r;
    std::vector<RatioPoint> profile;
};

LiminfResult liminf_ratio(const std::vector<double>& r, const std::vector<double>& values, const GaugeFunction& gauge,
                          double r_lo, double r_hi);

}  // namespace levytree::samplers
