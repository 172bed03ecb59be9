#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace levytree::realtree {

class TreeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Origin : std::uint32_t { synthetic = 0, simulated = 1 };

// Samples h(i dt), i = 0..n-1, with h(0) = h((n-1) dt) = 0. Sample i carries
// mass dt for i < n-1, so the total mass is zeta = (n-1) dt.
struct ExcursionPath {
    std::vector<double> h;
    double dt = 1.0;
    Origin origin = Origin::synthetic;

    std::size_t size() const { return h.size(); }
    double zeta() const { return h.empty() ? 0.0 : (h.size() - 1) * dt; }
};

void validate_path(const ExcursionPath& path);

// Sparse-table range minimum over the samples.
class RangeMin {
public:
    RangeMin() = default;
    explicit RangeMin(const std::vector<double>& v);
    double min(std::size_t i, std::size_t j) const;  // inclusive, any order

private:
    std::vector<std::vector<double>> table_;
    std::vector<std::uint8_t> log2_;
};

class CodedTree {
public:
    explicit CodedTree(ExcursionPath path);

    const ExcursionPath& path() const { return path_; }
    std::size_t size() const { return path_.h.size(); }
    std::size_t mass_points() const { return path_.h.size() - 1; }
    double dt() const { return path_.dt; }
    double height(std::size_t i) const { return path_.h[i]; }

    double distance(std::size_t s, std::size_t t) const;
    double min_between(std::size_t s, std::size_t t) const { return rmq_.min(s, t); }

private:
    ExcursionPath path_;
    RangeMin rmq_;
};

CodedTree code_tree(ExcursionPath path);

double tree_distance(const CodedTree& tree, std::size_t s, std::size_t t);

// dt * #{s : d(s, t) <= r} over the mass points
double ball_mass(const CodedTree& tree, std::size_t t, double r);

// Ball masses at every radius of an increasing radius list, one pass.
std::vector<double> ball_masses(const CodedTree& tree, std::size_t t, const std::vector<double>& radii);

struct LocalTimeEstimate {
    double level;
    double epsilon;
    long count;
    double v_eps;
    double value;
};

LocalTimeEstimate local_time_estimate(const CodedTree& tree, double a, double epsilon, double v_eps);

// sum over levels k*da, k = 0.., of local_time_estimate * da
double local_time_mass(const CodedTree& tree, double da, double epsilon, double v_eps);

bool four_point_check(const CodedTree& tree, std::size_t s1, std::size_t s2, std::size_t s3, std::size_t s4,
                      double tol = 1e-12);

bool is_leaf_time(const CodedTree& tree, std::size_t t, std::size_t eps_steps);

// ---- serialization -----------------------------------------------------

void write_binary(const ExcursionPath& path, std::ostream& os);
ExcursionPath read_binary(std::istream& is);
void write_csv(const ExcursionPath& path, std::ostream& os);

// ---- synthetic paths ---------------------------------------------------

// piecewise-linear path through (time, height) knots sampled at step dt
ExcursionPath piecewise_linear(const std::vector<std::pair<double, double>>& knots, double dt);

}  // namespace levytree::realtree
