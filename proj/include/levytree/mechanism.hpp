#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace levytree::mechanism {

class MechanismError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Null {};

struct StableTail {
    double gamma = 2.0;
};

struct Atom {
    double log_r;
    double log_a;
};

struct AtomList {
    std::vector<Atom> atoms;  // positions strictly decreasing
};

using LevyMeasureSpec = std::variant<Null, StableTail, AtomList>;

struct BranchingMechanism {
    double alpha = 0.0;
    double beta = 0.0;
    LevyMeasureSpec levy = Null{};
    std::string label;

    bool is_stable() const { return std::holds_alternative<StableTail>(levy); }
    double stable_gamma() const;  // throws unless StableTail
};

// Descriptor read from configuration; kind is "stable", "atoms", "null"
// or "counterexample".
struct MechanismDescriptor {
    std::string kind;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 2.0;
    int n_max = 0;
    std::vector<Atom> atoms;
    std::string label;
};

BranchingMechanism build_mechanism(const MechanismDescriptor& spec);
BranchingMechanism stable(double gamma);
BranchingMechanism null_mechanism(double alpha, double beta);
BranchingMechanism atom_mechanism(std::vector<Atom> atoms, double alpha = 0.0, double beta = 0.0,
                                  std::string label = "atoms");
BranchingMechanism build_counterexample(double gamma, int n_max);

void validate(const BranchingMechanism& mech);

// ---- evaluation ---------------------------------------------------------

// log psi(e^l) and log psi'(e^l); -inf at l = -inf except psi'(0) = alpha.
double log_psi(const BranchingMechanism& mech, double log_lambda);
double log_psi_prime(const BranchingMechanism& mech, double log_lambda);

struct PsiValues {
    double psi;
    double psi_prime;
    double psi_tilde;
    double log_psi;
    double log_psi_prime;
    double log_psi_tilde;
    bool saturated;  // some double value was clamped to DBL_MAX
};

PsiValues psi_family_eval(const BranchingMechanism& mech, double lambda);

double psi(const BranchingMechanism& mech, double lambda);
double psi_prime(const BranchingMechanism& mech, double lambda);

// log of sup psi' (finite only for bounded-variation truncated atom lists)
double log_psi_prime_sup(const BranchingMechanism& mech);

// ---- inverses ------------------------------------------------------------

double log_psi_inverse(const BranchingMechanism& mech, double log_y);
double psi_inverse(const BranchingMechanism& mech, double y);

double log_phi(const BranchingMechanism& mech, double log_lambda);
double phi_forward(const BranchingMechanism& mech, double lambda);

// log phi^{-1}(e^{log_y}) for e^{log_y} > alpha; throws DomainError if
// y < alpha or y >= sup phi.
double log_phi_inverse(const BranchingMechanism& mech, double log_y);
double phi_inverse(const BranchingMechanism& mech, double y);

// ---- integrals ---------------------------------------------------------

struct ExtinctionResult {
    double value;
    bool finite;
    double upper_log;  // log of the largest u reached
    std::string note;
};

ExtinctionResult extinction_integral(const BranchingMechanism& mech, double lower,
                                     double divergence_cap = 1e15);

// log of int_{e^l}^infinity du / psi(u)
double log_tail_integral(const BranchingMechanism& mech, double log_lower);

double solve_v(const BranchingMechanism& mech, double a);
double log_solve_v(const BranchingMechanism& mech, double a);
double solve_u(const BranchingMechanism& mech, double t, double lambda);

// ---- gauge -------------------------------------------------------------

struct GaugeFunction {
    BranchingMechanism mech;
    double log_r0;
};

struct GaugeValue {
    double g;
    double log_g;
};

GaugeFunction make_gauge(const BranchingMechanism& mech);
GaugeValue gauge_g_log(const GaugeFunction& gauge, double log_r);
GaugeValue gauge_g(const GaugeFunction& gauge, double r);

// ---- exponents ---------------------------------------------------------

struct ScanPoint {
    double log_lambda;
    double log_psi;
};

struct ExponentReport {
    double delta_hat;
    double gamma_hat;
    double eta_hat;
    double floor_q;
    double c_step;
    std::vector<ScanPoint> scan_grid;
    std::string notes;
};

struct ExponentOptions {
    double floor_q = 1e-3;
    double c_step = 0.01;
    double tail_fraction = 0.5;
};

// Suggested log-lambda range: wide for closed forms, up to 1/r_min for atom lists.
std::pair<double, double> default_exponent_range(const BranchingMechanism& mech);

ExponentReport estimate_exponents(const BranchingMechanism& mech, double log_lambda_lo,
                                  double log_lambda_hi, int n_points, const ExponentOptions& opt = {});

// ---- doubling ----------------------------------------------------------

struct DoublingScale {
    double log_r;
    double ratio;
    double log_ratio;
    bool in_domain;
    std::string note;
};

struct DoublingReport {
    double max_ratio;
    std::vector<DoublingScale> scales;
    int skipped;
};

DoublingReport doubling_report(const GaugeFunction& gauge, const std::vector<double>& log_r);

// ---- convexity sandwich ------------------------------------------------

struct SandwichPoint {
    double lambda;
    bool doubling;   // psi(2l) <= 4 psi(l)
    bool derivative; // psi~ <= psi' <= 4 psi~
    bool phi;        // l/psi^{-1}(l) <= phi(l) <= 4 l/psi^{-1}(l)
    bool ok() const { return doubling && derivative && phi; }
};

inline constexpr double kSandwichLogSlack = 1e-10;

SandwichPoint convexity_sandwich(const BranchingMechanism& mech, double lambda);
int convexity_violations(const BranchingMechanism& mech, const std::vector<double>& lambdas);

// ---- auxiliary ---------------------------------------------------------

// log of sum a_k r_k^2 for atom lists (the moment of r^2 under pi)
double log_second_moment(const BranchingMechanism& mech);

// log J(x) for the subordinator exponents psi' - alpha and psi~ - alpha of an
// atom-list mechanism; x = e^{log_x}.
double log_j_psi_prime(const BranchingMechanism& mech, double log_x);
double log_j_psi_tilde(const BranchingMechanism& mech, double log_x);

inline constexpr double kJLower = 0.63212055882855767;  // 1 - e^{-1}
inline constexpr double kJUpper = 1.0;

// (gamma-1)^{-1/(gamma-1)} gamma^{gamma/(gamma-1)} for the stable family
double stable_controlvg_constant(double gamma);

}  // namespace levytree::mechanism
