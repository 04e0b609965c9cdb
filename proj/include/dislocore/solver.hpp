#pragma once

#include <string>
#include <vector>

#include "dislocore/energy.hpp"

namespace dislo {

enum class Method { LBFGS, NonlinearCG };

Method parse_method(const std::string& s);

struct SolverConfig {
    Method method = Method::LBFGS;
    double force_tol = 1e-8;     // max interior force component
    int max_iter = 20000;
    int history = 10;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    double max_step = 0.1;       // largest atom move per line-search trial
    bool precondition = true;
    bool verbose = false;
};

struct RelaxResult {
    DisplacementField field;
    double energy = 0.0;
    int iterations = 0;
    double final_force_inf = 0.0;
    bool converged = false;
    std::string status;
    std::vector<double> trace;   // energy after each accepted step, starting with the initial energy
};

// minimizes the energy over interior degrees of freedom; zero initial field when none is given
RelaxResult relax(const EnergyModel& model, const SolverConfig& cfg, const DisplacementField* initial = nullptr);

// relaxes each model in turn, warm-starting from the zero-padded previous solution
std::vector<RelaxResult> hierarchy_relax(const std::vector<const EnergyModel*>& models, const SolverConfig& cfg);

} // namespace dislo
