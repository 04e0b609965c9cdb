#pragma once

#include <memory>
#include <string>

#include "dislocore/cbmodel.hpp"
#include "dislocore/energy.hpp"
#include "dislocore/lattice.hpp"
#include "dislocore/potential.hpp"
#include "dislocore/predictor.hpp"

namespace dislo {

struct ProblemConfig {
    std::string crystal = "silicon";   // builtin name (silicon, toy) or crystal file
    std::string potential = "sw-si";
    Vec3 burgers = Vec3(-0.5, 0.5, 0.0);   // crystal axes
    Vec3 line = Vec3(1.0, 1.0, 2.0);
    Vec2 core_offset = Vec2(0.25, 0.25);   // in units of the projected cell
    double stencil_range = 0.0;            // 0 picks the builtin range for the crystal
    double r_hat = 0.0;                    // 0 means 4 |b|
    TensorSource mode = TensorSource::CauchyBorn;
    double nu = 0.22;
    std::string table;                     // Voigt table file, empty for the builtin silicon constants
    int threads = 0;
};

ProblemConfig silicon_edge_config();
ProblemConfig toy_edge_config();

// everything that does not depend on the domain radius
struct Problem {
    ProblemConfig config;
    ProjectedMultilattice ml;
    InteractionStencil st;
    PotentialPtr V;
    CBDerivatives cbd;
    ElasticTensor C;
    std::unique_ptr<Predictor> predictor;
    double r_hat = 0.0;
};

std::unique_ptr<Problem> make_problem(const ProblemConfig& cfg);
// lattice, stencil and potential only; no elastic data or predictor
std::unique_ptr<Problem> make_lattice_problem(const ProblemConfig& cfg);

// a clamped domain of radius R with its energy
struct Cell {
    std::unique_ptr<Domain> domain;
    std::unique_ptr<EnergyModel> model;
    double R = 0.0;
};

Cell make_cell(const Problem& p, double R);

} // namespace dislo
