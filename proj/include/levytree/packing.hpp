#pragma once

#include "levytree/mechanism.hpp"
#include "levytree/realtree.hpp"

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace levytree::packing {

class CapExceeded : public std::length_error {
public:
    using std::length_error::length_error;
};

using Gauge = std::function<double(double)>;
using Metric = std::function<double(std::size_t, std::size_t)>;

Gauge gauge_of(const mechanism::GaugeFunction& g);

// Dyadic radius grid eps, eps/2, ..., eps/2^{levels-1}.
std::vector<double> dyadic_radii(double eps, int levels);

struct PackingInstance {
    std::vector<std::size_t> labels;  // grid times (or any tag) of the points
    Metric dist;                      // over instance indices 0..n-1
    std::vector<double> radius_grid;  // decreasing, inside (0, eps]
    std::vector<double> weights;      // g(r) for each radius
    double epsilon = 0.0;

    std::size_t n_points() const { return labels.size(); }
    std::size_t n_pairs() const { return labels.size() * radius_grid.size(); }
};

PackingInstance make_instance(std::vector<std::size_t> labels, Metric dist, const Gauge& g, double eps,
                              std::vector<double> radii);
PackingInstance make_tree_instance(const realtree::CodedTree& tree, std::vector<std::size_t> times, const Gauge& g,
                                   double eps, std::vector<double> radii);
PackingInstance make_matrix_instance(std::vector<std::vector<double>> d, const Gauge& g, double eps,
                                     std::vector<double> radii);

void validate_instance(const PackingInstance& inst);

enum class Method { exact, greedy };

struct Ball {
    std::size_t point;  // instance index
    std::size_t label;
    double radius;
    double weight;
};

struct PackingEstimate {
    double value = 0.0;
    std::vector<Ball> balls;
    Method method = Method::greedy;
    double bound_gap = -1.0;  // 0 for exact, -1 when unknown
    long nodes = 0;
};

inline constexpr std::size_t kExactCap = 64;

PackingEstimate packing_value_exact(const PackingInstance& inst, std::size_t cap = kExactCap);
PackingEstimate packing_value_greedy(const PackingInstance& inst);
// exact when within the cap, greedy otherwise
PackingEstimate packing_value(const PackingInstance& inst, std::size_t cap = kExactCap);

// number of ball pairs violating d > r_i + r_j
long packing_violations(const PackingInstance& inst, const PackingEstimate& est);

// Radii come from one dyadic grid below eps_sequence[0], down to eps_sequence.back() / 2^{levels-1}.
std::vector<PackingEstimate> pre_measure_estimate(const realtree::CodedTree& tree,
                                                  const std::vector<std::size_t>& times, const Gauge& g,
                                                  const std::vector<double>& eps_sequence, int levels,
                                                  std::size_t cap = kExactCap);

struct DensityProfile {
    std::size_t center;
    std::vector<double> radii;
    std::vector<double> masses;
    std::vector<double> log_gauge;
    std::vector<double> log_ratios;
    double min_ratio;
    double argmin_r;
};

// radii 2^{-k} for k_hi >= k >= k_lo, i.e. the window [2^{-k_hi}, 2^{-k_lo}]
DensityProfile density_profile(const realtree::CodedTree& tree, std::size_t center,
                               const mechanism::GaugeFunction& gauge, int k_lo, int k_hi);

struct IntervalRatio {
    std::size_t interval_id;
    std::size_t begin;
    std::size_t end;
    double estimate;
    double mass;
    double ratio;
    Method method;
    std::size_t n_points;
};

struct PackingVsMass {
    std::vector<IntervalRatio> rows;
    double max_over_min;
    std::vector<std::string> notes;
};

struct PackingVsMassOptions {
    std::size_t subsample = 4096;
    int levels = 6;
    std::size_t cap = kExactCap;
};

// intervals are half-open ranges [begin, end) of grid times
PackingVsMass packing_vs_mass(const realtree::CodedTree& tree,
                              const std::vector<std::pair<std::size_t, std::size_t>>& intervals, const Gauge& g,
                              double eps, const PackingVsMassOptions& opt = {});

}  // namespace levytree::packing
