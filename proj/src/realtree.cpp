#include "levytree/realtree.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace levytree::realtree {

namespace {
constexpr std::size_t kBlock = 32;
}

void validate_path(const ExcursionPath& path)
{
    if (path.h.size() < 2) throw TreeError("excursion path needs at least two samples");
    if (!(path.dt > 0.0) || !std::isfinite(path.dt)) throw TreeError("excursion path needs dt > 0");
    if (path.h.front() != 0.0 || path.h.back() != 0.0)
        throw TreeError("excursion path must start and end at 0");
    bool positive = false;
    for (double v : path.h) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw TreeError("excursion path has a negative or non-finite sample");
        positive = positive || v > 0.0;
    }
    if (!positive) throw TreeError("excursion path is identically zero (zeta = 0)");
}

RangeMin::RangeMin(const std::vector<double>& v)
{
    const std::size_t nb = (v.size() + kBlock - 1) / kBlock;
    log2_.assign(nb + 1, 0);
    for (std::size_t i = 2; i <= nb; ++i) log2_[i] = static_cast<std::uint8_t>(log2_[i / 2] + 1);
    table_.emplace_back(v);  // level "-1": the raw values
    std::vector<double> blocks(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        std::size_t lo = b * kBlock, hi = std::min(v.size(), lo + kBlock);
        blocks[b] = *std::min_element(v.begin() + lo, v.begin() + hi);
    }
    table_.push_back(std::move(blocks));
    for (std::size_t k = 1; (std::size_t{1} << k) <= nb; ++k) {
        const auto& prev = table_.back();
        std::size_t len = nb - (std::size_t{1} << k) + 1;
        std::vector<double> cur(len);
        for (std::size_t i = 0; i < len; ++i) cur[i] = std::min(prev[i], prev[i + (std::size_t{1} << (k - 1))]);
        table_.push_back(std::move(cur));
    }
}

double RangeMin::min(std::size_t i, std::size_t j) const
{
    if (i > j) std::swap(i, j);
    const auto& v = table_[0];
    std::size_t bi = i / kBlock, bj = j / kBlock;
    if (bj - bi <= 1) return *std::min_element(v.begin() + i, v.begin() + j + 1);
    double m = *std::min_element(v.begin() + i, v.begin() + (bi + 1) * kBlock);
    m = std::min(m, *std::min_element(v.begin() + bj * kBlock, v.begin() + j + 1));
    std::size_t lo = bi + 1, hi = bj - 1;
    std::size_t k = log2_[hi - lo + 1];
    const auto& lvl = table_[k + 1];
    return std::min({m, lvl[lo], lvl[hi + 1 - (std::size_t{1} << k)]});
}

CodedTree::CodedTree(ExcursionPath path) : path_(std::move(path))
{
    validate_path(path_);
    rmq_ = RangeMin(path_.h);
}

double CodedTree::distance(std::size_t s, std::size_t t) const
{
    if (s >= size() || t >= size()) throw TreeError("tree_distance: time outside [0, zeta]");
    if (s == t) return 0.0;
    return path_.h[s] + path_.h[t] - 2.0 * rmq_.min(s, t);
}

CodedTree code_tree(ExcursionPath path) { return CodedTree(std::move(path)); }

double tree_distance(const CodedTree& tree, std::size_t s, std::size_t t) { return tree.distance(s, t); }

std::vector<double> ball_masses(const CodedTree& tree, std::size_t t, const std::vector<double>& radii)
{
    if (t >= tree.size()) throw TreeError("ball_mass: time outside [0, zeta]");
    if (radii.empty()) return {};
    const auto& h = tree.path().h;
    const std::size_t last = tree.mass_points();
    const double ht = h[t];
    // slack for rounding at exact ties
    const double rmax = radii.back() * (1.0 + 1e-12) + 1e-300;
    std::vector<long> hits(radii.size() + 1, 0);
    auto visit = [&](std::size_t s, double m) {
        double d = h[s] + ht - 2.0 * m;
        auto it = std::lower_bound(radii.begin(), radii.end(), d);
        ++hits[static_cast<std::size_t>(it - radii.begin())];
    };
    double m = ht;
    for (std::size_t s = t; s < last; ++s) {
        m = std::min(m, h[s]);
        if (ht - m > rmax) break;
        visit(s, m);
    }
    m = ht;
    for (std::size_t s = t; s-- > 0;) {
        m = std::min(m, h[s]);
        if (ht - m > rmax) break;
        visit(s, m);
    }
    std::vector<double> out(radii.size());
    long acc = 0;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        acc += hits[k];
        out[k] = acc * tree.dt();
    }
    return out;
}

double ball_mass(const CodedTree& tree, std::size_t t, double r)
{
    if (!(r >= 0.0)) throw TreeError("ball_mass: radius must be nonnegative");
    return ball_masses(tree, t, {r})[0];
}

LocalTimeEstimate local_time_estimate(const CodedTree& tree, double a, double epsilon, double v_eps)
{
    if (!(a >= 0.0) || !(epsilon > 0.0) || !(v_eps > 0.0))
        throw TreeError("local_time_estimate: need a >= 0, epsilon > 0, v_eps > 0");
    const auto& h = tree.path().h;
    long count = 0;
    bool inside = false;
    double run_max = 0.0;
    for (double v : h) {
        if (v > a) {
            run_max = inside ? std::max(run_max, v) : v;
            inside = true;
        } else if (inside) {
            if (run_max >= a + epsilon) ++count;
            inside = false;
        }
    }
    if (inside && run_max >= a + epsilon) ++count;
    return {a, epsilon, count, v_eps, count / v_eps};
}

double local_time_mass(const CodedTree& tree, double da, double epsilon, double v_eps)
{
    const auto& h = tree.path().h;
    double top = *std::max_element(h.begin(), h.end());
    double total = 0.0;
    for (long k = 0; k * da < top; ++k) total += local_time_estimate(tree, k * da, epsilon, v_eps).value * da;
    return total;
}

bool four_point_check(const CodedTree& tree, std::size_t s1, std::size_t s2, std::size_t s3, std::size_t s4,
                      double tol)
{
    double lhs = tree.distance(s1, s2) + tree.distance(s3, s4);
    double rhs = std::max(tree.distance(s1, s3) + tree.distance(s2, s4), tree.distance(s1, s4) + tree.distance(s2, s3));
    return lhs <= rhs + tol;
}

bool is_leaf_time(const CodedTree& tree, std::size_t t, std::size_t eps_steps)
{
    const std::size_t last = tree.size() - 1;
    if (t == 0 || t >= last) throw TreeError("is_leaf_time: t must lie strictly inside (0, zeta)");
    if (eps_steps == 0 || eps_steps >= std::min(t, last - t))
        throw TreeError("is_leaf_time: epsilon must be positive and below min(t, zeta - t)");
    double ht = tree.height(t);
    return tree.min_between(t - eps_steps, t) < ht && tree.min_between(t, t + eps_steps) < ht;
}

// ---- serialization -----------------------------------------------------

namespace {

template <class T>
void put_le(std::ostream& os, T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        os.write(reinterpret_cast<const char*>(b), sizeof(T));
    } else {
        os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

template <class T>
T get_le(std::istream& is)
{
    T v;
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw TreeError("LTEX: truncated input");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
}

constexpr std::uint32_t kLtexVersion = 1;

}  // namespace

void write_binary(const ExcursionPath& path, std::ostream& os)
{
    os.write("LTEX", 4);
    put_le<std::uint32_t>(os, kLtexVersion);
    put_le<std::uint64_t>(os, path.h.size());
    put_le<double>(os, path.dt);
    for (double v : path.h) put_le<double>(os, v);
}

ExcursionPath read_binary(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "LTEX", 4) != 0) throw TreeError("LTEX: bad magic");
    auto version = get_le<std::uint32_t>(is);
    if (version != kLtexVersion) throw TreeError("LTEX: unsupported version");
    auto n = get_le<std::uint64_t>(is);
    ExcursionPath p;
    p.dt = get_le<double>(is);
    p.h.resize(n);
    for (auto& v : p.h) v = get_le<double>(is);
    p.origin = Origin::simulated;
    return p;
}

void write_csv(const ExcursionPath& path, std::ostream& os)
{
    os << "t,h\n";
    os.precision(17);
    for (std::size_t i = 0; i < path.h.size(); ++i) os << i * path.dt << ',' << path.h[i] << '\n';
}

ExcursionPath piecewise_linear(const std::vector<std::pair<double, double>>& knots, double dt)
{
    if (knots.size() < 2) throw TreeError("piecewise_linear: need at least two knots");
    ExcursionPath p;
    p.dt = dt;
    const double T = knots.back().first;
    const auto n = static_cast<std::size_t>(std::llround(T / dt)) + 1;
    p.h.resize(n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = i * dt;
        while (k + 2 < knots.size() && t > knots[k + 1].first) ++k;
        auto [t0, h0] = knots[k];
        auto [t1, h1] = knots[k + 1];
        double w = t1 > t0 ? std::clamp((t - t0) / (t1 - t0), 0.0, 1.0) : 1.0;
        p.h[i] = h0 + w * (h1 - h0);
    }
    p.h.front() = 0.0;
    p.h.back() = 0.0;
    return p;
}

}  // namespace levytree::realtree
