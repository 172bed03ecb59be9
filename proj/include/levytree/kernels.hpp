#pragma once

#include "levytree/mechanism.hpp"

#include <string>

namespace levytree::kernels {

using mechanism::BranchingMechanism;

enum class Route { ode, integral };

struct KappaSolution {
    double a;
    double lambda;
    double mu;
    double value;
    Route route;
    double residual;        // int_mu^kappa du/(lambda - psi(u)) - a
    bool certified;         // residual computed (false at the fixed point)
    double log_gap_decay;   // int_0^a psi'(kappa_s) ds = log|lambda-psi(mu)| - log|lambda-psi(kappa)|
    long steps;
};

KappaSolution kappa_solve(const BranchingMechanism& mech, double a, double lambda, double mu);

// signed integral int_mu^kappa du / (lambda - psi(u)); kappa between mu and psi^{-1}(lambda)
double kappa_integral(const BranchingMechanism& mech, double lambda, double mu, double kappa,
                      double log_gap_decay);

struct LaplaceFunctional {
    double r;
    double lambda;
    double value;           // ODE route
    double minus_log;       // ODE route, -log value
    double value_integral;  // integral route
    double minus_log_integral;
    double discrepancy;     // relative difference of the minus-log values
    bool agree;
    std::string note;
};

struct ScriptLOptions {
    bool integral_route = true;
    double agree_rtol = 1e-6;
};

LaplaceFunctional script_L(const BranchingMechanism& mech, double r, double lambda,
                           const ScriptLOptions& opt = {});

// -log L_r(lambda) from the ODE route only
double minus_log_L(const BranchingMechanism& mech, double r, double lambda);

// int_0^x dy / phi(lambda (1 - e^{-y}))
double lrl_quadrature(const BranchingMechanism& mech, double lambda, double x);

// -log L_r(lambda) from the integral route
double minus_log_L_integral(const BranchingMechanism& mech, double r, double lambda);

struct DensityBound {
    double r;
    double lambda;
    double lhs;
    double rhs;
    double log_lhs;
    double log_rhs;
    bool precondition;
    bool pass;
    std::string note;
};

inline constexpr double kC2 = 1.5819767068693265;  // (1 - e^{-1})^{-1}

DensityBound density_bound_check(const BranchingMechanism& mech, double r);

struct Claim1 {
    double minus_log_L;
    double conclusion;  // (2/lambda) psi(r lambda / 2)
    bool hypothesis;
    bool holds;
};

Claim1 claim1_check(const BranchingMechanism& mech, double r, double lambda);

double mean_local_time(const BranchingMechanism& mech, double a);

}  // namespace levytree::kernels
