#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dislocore/cbmodel.hpp"
#include "dislocore/energy.hpp"
#include "dislocore/solver.hpp"

namespace dislo {

struct DecayBin {
    double r = 0.0;      // geometric mid-radius
    double mean = 0.0;
    double max = 0.0;
    int count = 0;
};

struct DecayFit {
    std::string name;
    std::vector<DecayBin> bins;
    double slope = 0.0;       // fit on bin means
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_max = 0.0;   // same fit on bin maxima, for diagnostics
    double r_min = 0.0, r_max = 0.0;
    bool log_correction = false;
};

// geometric annuli of ratio 1.3 on [r_min, r_max]; fits |q| = c r^s (log r if log_correction);
// throws EmptyWindow with fewer than 5 occupied bins
DecayFit decay_fit(const std::vector<double>& r, const std::vector<double>& q, double r_min, double r_max,
                   bool log_correction, const std::string& name = "q", double ratio = 1.3);

// throws EmptyWindow unless r_min >= r_hat + b1 + r_cut and r_max <= R - 2 r_cut
void check_window(const Domain& d, double r_cut, double r_min, double r_max);

// per-site distance to the core, interior sites only, paired with a scalar
struct SiteSeries {
    std::vector<double> r, q;
};

// |D~U| over distinct stencil offsets, |p|, |D~D~U| and |D~p| of a corrector field
SiteSeries dtilde_U_series(const DisplacementField& f, const InteractionStencil& st);
SiteSeries shift_series(const DisplacementField& f);
SiteSeries second_difference_series(const DisplacementField& f, const InteractionStencil& st);
SiteSeries shift_difference_series(const DisplacementField& f, const InteractionStencil& st);
// |e(l)| and |D~_{-rho} e(l)| of the predictor strains
SiteSeries elastic_strain_series(const EnergyModel& m);
SiteSeries strain_difference_series(const EnergyModel& m);
// |D~U0| of the predictor, the jump across the cut removed by the relabelling
SiteSeries predictor_dtilde_series(const EnergyModel& m);
// forces at the predictor: net site force and largest per-species force
SiteSeries net_force_series(const EnergyModel& m, const ForceField& F);
SiteSeries species_force_series(const EnergyModel& m, const ForceField& F);

struct DecayWindow {
    double r_min = 12.0;
    double r_max = 60.0;
};

// |D~U|, |p| (log-corrected) and the second differences of a converged result
std::vector<DecayFit> strain_decay_report(const EnergyModel& m, const RelaxResult& res, const DecayWindow& w);
// net-force and per-species force fits at zero corrector
std::vector<DecayFit> residual_decay_report(const EnergyModel& m, const DecayWindow& w);
// |e| and |D~_{-rho} e| fits
std::vector<DecayFit> predictor_rate_report(const EnergyModel& m, const DecayWindow& w);

struct ConvergenceRow {
    double R = 0.0;
    double distance = 0.0;
    double energy = 0.0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double reference_R = 0.0;
    double slope = 0.0;           // log-log slope of distance against R, reference row excluded
    double slope_halfwidth = 0.0; // 95% bootstrap half-width
};

// a1 distances of the zero-padded solutions to the largest-R solution
ConvergenceTable convergence_study(const std::vector<const EnergyModel*>& models,
                                   const std::vector<RelaxResult>& results, const InteractionStencil& st,
                                   unsigned seed = 1, int resamples = 2000);

// least-squares slope of log y against log x
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// decay of the Green's blocks on a periodic supercell: |D_rho G_UU| (rho the shortest lattice vector),
// |G_Up| and |G_pp|, with distances in units of the mean site spacing, minimum image
std::vector<DecayFit> green_decay_report(const GreenSupercell& G, const Mat2& A, double r_min, double r_max);

// CSV writers; header lines start with '#'
void write_decay_csv(std::ostream& out, const std::vector<DecayFit>& fits, const std::string& provenance);
void write_convergence_csv(std::ostream& out, const ConvergenceTable& t, const std::string& provenance);
// gnuplot script plotting the CSV on log-log axes
void write_decay_plt(std::ostream& out, const std::string& csv, const std::vector<DecayFit>& fits);
void write_convergence_plt(std::ostream& out, const std::string& csv);

} // namespace dislo
