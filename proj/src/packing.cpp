#include "levytree/packing.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

namespace levytree::packing {

Gauge gauge_of(const mechanism::GaugeFunction& g)
{
    return [g](double r) { return mechanism::gauge_g(g, r).g; };
}

std::vector<double> dyadic_radii(double eps, int levels)
{
    if (!(eps > 0.0) || levels < 1) throw std::invalid_argument("dyadic_radii: need eps > 0 and levels >= 1");
    std::vector<double> r(levels);
    for (int k = 0; k < levels; ++k) r[k] = std::ldexp(eps, -k);
    return r;
}

void validate_instance(const PackingInstance& inst)
{
    if (inst.radius_grid.empty()) throw std::invalid_argument("packing: radius grid is empty");
    if (inst.weights.size() != inst.radius_grid.size()) throw std::invalid_argument("packing: weights do not match radii");
    for (std::size_t k = 0; k < inst.radius_grid.size(); ++k) {
        double r = inst.radius_grid[k];
        if (!(r > 0.0) || r > inst.epsilon) throw std::invalid_argument("packing: radius outside (0, eps]");
        if (k > 0 && !(r < inst.radius_grid[k - 1])) throw std::invalid_argument("packing: radius grid must decrease");
        if (!(inst.weights[k] >= 0.0)) throw std::invalid_argument("packing: gauge value must be nonnegative");
    }
}

PackingInstance make_instance(std::vector<std::size_t> labels, Metric dist, const Gauge& g, double eps,
                              std::vector<double> radii)
{
    PackingInstance inst;
    inst.labels = std::move(labels);
    inst.dist = std::move(dist);
    std::sort(radii.begin(), radii.end(), std::greater<>());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    inst.radius_grid = std::move(radii);
    inst.epsilon = eps;
    for (double r : inst.radius_grid) inst.weights.push_back(g(r));
    validate_instance(inst);
    return inst;
}

PackingInstance make_tree_instance(const realtree::CodedTree& tree, std::vector<std::size_t> times, const Gauge& g,
                                   double eps, std::vector<double> radii)
{
    for (auto t : times)
        if (t >= tree.size()) throw std::invalid_argument("packing: time outside the tree");
    auto shared = std::make_shared<std::vector<std::size_t>>(times);
    Metric d = [&tree, shared](std::size_t i, std::size_t j) { return tree.distance((*shared)[i], (*shared)[j]); };
    return make_instance(std::move(times), std::move(d), g, eps, std::move(radii));
}

PackingInstance make_matrix_instance(std::vector<std::vector<double>> d, const Gauge& g, double eps,
                                     std::vector<double> radii)
{
    std::vector<std::size_t> labels(d.size());
    std::iota(labels.begin(), labels.end(), 0);
    auto m = std::make_shared<std::vector<std::vector<double>>>(std::move(d));
    Metric dist = [m](std::size_t i, std::size_t j) { return (*m)[i][j]; };
    return make_instance(std::move(labels), std::move(dist), g, eps, std::move(radii));
}

namespace {

struct Candidate {
    std::size_t point;
    std::size_t rk;
    double weight;
};

std::vector<Candidate> candidates(const PackingInstance& inst)
{
    std::vector<Candidate> c;
    c.reserve(inst.n_pairs());
    for (std::size_t i = 0; i < inst.n_points(); ++i)
        for (std::size_t k = 0; k < inst.radius_grid.size(); ++k) c.push_back({i, k, inst.weights[k]});
    std::stable_sort(c.begin(), c.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.weight != b.weight) return a.weight > b.weight;
        return inst.radius_grid[a.rk] > inst.radius_grid[b.rk];
    });
    return c;
}

bool compatible(const PackingInstance& inst, const Candidate& a, const Candidate& b)
{
    if (a.point == b.point) return false;
    return inst.dist(a.point, b.point) > inst.radius_grid[a.rk] + inst.radius_grid[b.rk];
}

class BranchAndBound {
public:
    BranchAndBound(const PackingInstance& inst, std::vector<Candidate> cand) : inst_(inst), cand_(std::move(cand))
    {
        const std::size_t n = cand_.size();
        adj_.assign(n, 0);
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (!compatible(inst_, cand_[a], cand_[b])) {
                    adj_[a] |= bit(b);
                    adj_[b] |= bit(a);
                }
        center_mask_.assign(inst_.n_points(), 0);
        for (std::size_t a = 0; a < n; ++a) center_mask_[cand_[a].point] |= bit(a);
    }

    void run()
    {
        std::uint64_t all = cand_.size() == 64 ? ~std::uint64_t{0} : (bit(cand_.size()) - 1);
        search(all, 0.0, 0);
    }

    double best = -1.0;
    std::uint64_t best_set = 0;
    long nodes = 0;

private:
    static std::uint64_t bit(std::size_t i) { return std::uint64_t{1} << i; }

    double bound(std::uint64_t mask) const
    {
        double b = 0.0;
        for (std::uint64_t cm : center_mask_) {
            std::uint64_t m = mask & cm;
            if (m) b += cand_[std::countr_zero(m)].weight;
        }
        return b;
    }

    void search(std::uint64_t mask, double cur, std::uint64_t chosen)
    {
        ++nodes;
        if (mask == 0) {
            if (cur > best) {
                best = cur;
                best_set = chosen;
            }
            return;
        }
        if (cur + bound(mask) <= best) return;
        std::size_t v = std::countr_zero(mask);
        search(mask & ~adj_[v] & ~bit(v), cur + cand_[v].weight, chosen | bit(v));
        search(mask & ~bit(v), cur, chosen);
    }

    const PackingInstance& inst_;
    std::vector<Candidate> cand_;
    std::vector<std::uint64_t> adj_;
    std::vector<std::uint64_t> center_mask_;

public:
    const std::vector<Candidate>& cand() const { return cand_; }
};

}  // namespace

PackingEstimate packing_value_exact(const PackingInstance& inst, std::size_t cap)
{
    validate_instance(inst);
    cap = std::min<std::size_t>(cap, 64);
    if (inst.n_pairs() > cap) {
        std::ostringstream os;
        os << "packing_value_exact: " << inst.n_pairs() << " center-radius pairs exceed the exact-solver cap of "
           << cap << "; use packing_value_greedy";
        throw CapExceeded(os.str());
    }
    PackingEstimate est;
    est.method = Method::exact;
    est.bound_gap = 0.0;
    if (inst.n_pairs() == 0) return est;
    BranchAndBound bb(inst, candidates(inst));
    bb.run();
    est.value = 0.0;
    for (std::size_t a = 0; a < bb.cand().size(); ++a) {
        if (!(bb.best_set >> a & 1)) continue;
        const auto& c = bb.cand()[a];
        est.balls.push_back({c.point, inst.labels[c.point], inst.radius_grid[c.rk], c.weight});
        est.value += c.weight;
    }
    est.nodes = bb.nodes;
    return est;
}

PackingEstimate packing_value_greedy(const PackingInstance& inst)
{
    validate_instance(inst);
    PackingEstimate est;
    est.method = Method::greedy;
    std::vector<Candidate> chosen;
    for (const auto& c : candidates(inst)) {
        bool ok = std::all_of(chosen.begin(), chosen.end(), [&](const Candidate& o) { return compatible(inst, c, o); });
        if (!ok) continue;
        chosen.push_back(c);
        est.balls.push_back({c.point, inst.labels[c.point], inst.radius_grid[c.rk], c.weight});
        est.value += c.weight;
    }
    return est;
}

PackingEstimate packing_value(const PackingInstance& inst, std::size_t cap)
{
    if (inst.n_pairs() <= std::min<std::size_t>(cap, 64)) return packing_value_exact(inst, cap);
    return packing_value_greedy(inst);
}

long packing_violations(const PackingInstance& inst, const PackingEstimate& est)
{
    long bad = 0;
    for (std::size_t a = 0; a < est.balls.size(); ++a)
        for (std::size_t b = a + 1; b < est.balls.size(); ++b) {
            const auto& x = est.balls[a];
            const auto& y = est.balls[b];
            if (x.point == y.point || !(inst.dist(x.point, y.point) > x.radius + y.radius)) ++bad;
        }
    return bad;
}

std::vector<PackingEstimate> pre_measure_estimate(const realtree::CodedTree& tree,
                                                  const std::vector<std::size_t>& times, const Gauge& g,
                                                  const std::vector<double>& eps_sequence, int levels,
                                                  std::size_t cap)
{
    for (std::size_t i = 1; i < eps_sequence.size(); ++i)
        if (!(eps_sequence[i] < eps_sequence[i - 1]))
            throw std::invalid_argument("pre_measure_estimate: epsilon sequence must decrease");
    std::vector<PackingEstimate> out;
    if (eps_sequence.empty()) return out;
    // one dyadic grid below the largest epsilon, so the families are nested
    const double floor = eps_sequence.back() * std::ldexp(1.0, -(levels - 1)) * (1.0 - 1e-12);
    std::vector<double> grid;
    for (double r = eps_sequence.front(); r >= floor; r *= 0.5) grid.push_back(r);
    for (double eps : eps_sequence) {
        std::vector<double> radii;
        for (double r : grid)
            if (r <= eps) radii.push_back(r);
        auto inst = make_tree_instance(tree, times, g, eps, radii);
        out.push_back(packing_value(inst, cap));
    }
    return out;
}

DensityProfile density_profile(const realtree::CodedTree& tree, std::size_t center,
                               const mechanism::GaugeFunction& gauge, int k_lo, int k_hi)
{
    if (k_hi < k_lo) throw std::invalid_argument("density_profile: empty window");
    if (!(-k_lo * std::log(2.0) < gauge.log_r0)) throw mechanism::DomainError("density_profile: window exceeds (0, r0)");
    DensityProfile p;
    p.center = center;
    for (int k = k_hi; k >= k_lo; --k) p.radii.push_back(std::ldexp(1.0, -k));
    p.masses = realtree::ball_masses(tree, center, p.radii);
    p.min_ratio = std::numeric_limits<double>::infinity();
    double log_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.radii.size(); ++i) {
        double lg = mechanism::gauge_g(gauge, p.radii[i]).log_g;
        double lr = std::log(p.masses[i]) - lg;
        p.log_gauge.push_back(lg);
        p.log_ratios.push_back(lr);
        if (lr < log_min) {
            log_min = lr;
            p.argmin_r = p.radii[i];
        }
    }
    p.min_ratio = std::exp(log_min);
    return p;
}

PackingVsMass packing_vs_mass(const realtree::CodedTree& tree,
                              const std::vector<std::pair<std::size_t, std::size_t>>& intervals, const Gauge& g,
                              double eps, const PackingVsMassOptions& opt)
{
    for (std::size_t a = 0; a < intervals.size(); ++a)
        for (std::size_t b = a + 1; b < intervals.size(); ++b) {
            auto [s0, e0] = intervals[a];
            auto [s1, e1] = intervals[b];
            if (std::max(s0, s1) < std::min(e0, e1)) throw std::invalid_argument("packing_vs_mass: intervals overlap");
        }
    PackingVsMass out;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    const std::size_t last = tree.mass_points();
    for (std::size_t id = 0; id < intervals.size(); ++id) {
        auto [b, e] = intervals[id];
        e = std::min(e, last);
        if (e <= b) {
            out.notes.push_back("interval " + std::to_string(id) + " is degenerate and was skipped");
            continue;
        }
        std::size_t len = e - b;
        std::size_t k = std::min(opt.subsample, len);
        std::vector<std::size_t> times(k);
        for (std::size_t i = 0; i < k; ++i) times[i] = b + (i * len) / k;
        auto inst = make_tree_instance(tree, times, g, eps, dyadic_radii(eps, opt.levels));
        auto est = packing_value(inst, opt.cap);
        double mass = len * tree.dt();
        IntervalRatio row{id, b, e, est.value, mass, est.value / mass, est.method, k};
        lo = std::min(lo, row.ratio);
        hi = std::max(hi, row.ratio);
        out.rows.push_back(row);
    }
    out.max_over_min = out.rows.empty() ? 0.0 : hi / lo;
    return out;
}

}  // namespace levytree::packing
