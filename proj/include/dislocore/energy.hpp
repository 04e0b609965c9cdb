#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dislocore/lattice.hpp"
#include "dislocore/potential.hpp"

namespace dislo {

// corrector degrees of freedom; per site [U, p_1 .. p_{S-1}], p_0 = 0
struct DisplacementField {
    const Domain* domain = nullptr;
    int species = 1;
    Eigen::VectorXd x;

    DisplacementField() = default;
    DisplacementField(const Domain& d, int S);

    int dofs_per_site() const { return 3 * species; }
    int size() const { return domain ? domain->size() : 0; }
    Vec3 U(int s) const { return x.segment<3>(static_cast<Eigen::Index>(s) * 3 * species); }
    Vec3 p(int s, int alpha) const;
    // u_alpha = U + p_alpha
    Vec3 u(int s, int alpha) const { return alpha == 0 ? U(s) : Vec3(U(s) + p(s, alpha)); }
    void set_U(int s, const Vec3& v) { x.segment<3>(static_cast<Eigen::Index>(s) * 3 * species) = v; }
    void set_p(int s, int alpha, const Vec3& v);
    // sites x 3S matrix of u_alpha
    Eigen::MatrixXd atoms() const;
    // zero every exterior degree of freedom
    void clamp();
};

// copy onto a larger domain, zero where the smaller domain has no site
DisplacementField zero_pad(const DisplacementField& f, const Domain& larger);

// lattice relabelings of per-site data (rows = sites); rows without a stored source are NaN
// (S v)(l) = v(l - b12) below the cut
Eigen::MatrixXd slip_S(const Domain& d, const Eigen::MatrixXd& v);
// (R v)(l) = v(l + b12) below the cut
Eigen::MatrixXd slip_R(const Domain& d, const Eigen::MatrixXd& v);
// (S0 w)_alpha(l) = w_alpha(l - b12) - b below the cut; w holds 3S columns
Eigen::MatrixXd slip_S0(const Domain& d, const Eigen::MatrixXd& w, const Vec3& b);

// throws MisalignedBurgers if b12 is not a projected lattice vector
void check_burgers_alignment(const ProjectedMultilattice& ml);

// D~_(rho alpha beta) u(l); plain difference off the slip region
Vec3 dtilde(const DisplacementField& f, int site, const Triple& t);
// scalar-per-site version D~_rho v(l) for a lattice function with 3 columns
Vec3 dtilde_rho(const Domain& d, const Eigen::MatrixXd& v, int site, const Vec2i& m);

// a1 seminorm with plain differences, clamped exterior
double a1_norm(const DisplacementField& f, const InteractionStencil& st);

struct ForceField {
    Eigen::MatrixXd species_force;   // sites x 3S, force on each u_alpha
    Eigen::VectorXd dof;             // force on [U, p_1 ..] per site, zero on clamped sites

    Vec3 net(int s) const;
    Vec3 on(int s, int alpha) const { return species_force.row(s).segment<3>(3 * alpha).transpose(); }
};

struct EnergyOptions {
    int threads = 0;        // 0 = hardware concurrency
    double skin = 0.05;     // neighbour-list skin for finite-range potentials
    double m_admissible = 0.4;
    double r_admissible = -1.0;   // default 2 r_hat
};

// E(u) = sum_l V(g0 + e(l) + D~u(l)) - V(g0 + e(l)) on a clamped domain
class EnergyModel {
public:
    EnergyModel(PotentialPtr V, const InteractionStencil& st, const Domain& d, Eigen::MatrixXd u0,
                const Vec3& burgers, EnergyOptions opt = {});

    double energy(const DisplacementField& f) const;
    double energy_gradient(const DisplacementField& f, Eigen::VectorXd& grad) const;
    ForceField forces(const DisplacementField& f) const;
    std::vector<double> site_energies(const DisplacementField& f) const;
    // plain-difference site energy V(D(u0 + u)(l)) - V(g0 + e(l)) for the slip-invariance check
    double plain_site_energy(const DisplacementField& f, int site) const;

    // gaps e(l) for every stencil triple, NaN when a neighbour is not stored
    Gapsd elastic_strain(int site) const;
    // sites breaking the admissibility bounds (bond strain or shift above m_A, above 1/2 beyond r_A)
    int admissibility_warnings(const DisplacementField& f) const;

    const Domain& domain() const { return *d_; }
    const InteractionStencil& stencil() const { return *st_; }
    const SitePotential& potential() const { return *V_; }
    const Eigen::MatrixXd& predictor() const { return u0_; }
    const Vec3& burgers() const { return b_; }
    int species() const { return st_->species; }
    int dofs() const { return d_->size() * 3 * st_->species; }
    // sites whose energy can depend on interior degrees of freedom
    const std::vector<int>& evaluated_sites() const { return eval_; }

    struct Link {
        int triple;
        int nb;
        int k;
    };
    std::vector<Link> links(int site) const;

    void set_threads(int n) { opt_.threads = n; }

private:
    void build_active(const Eigen::MatrixXd& w) const;
    void ensure_active(const Eigen::MatrixXd& w) const;
    Eigen::MatrixXd total(const DisplacementField& f) const;
    void gaps(const Eigen::MatrixXd& w, int site, const std::vector<Link>& ls, Gapsd& g) const;
    double evaluate(const DisplacementField& f, Eigen::MatrixXd* dw, std::vector<double>* sites) const;

    PotentialPtr V_;
    const InteractionStencil* st_;
    const Domain* d_;
    Eigen::MatrixXd u0_;
    Vec3 b_;
    EnergyOptions opt_;
    std::vector<int> eval_;
    std::vector<double> ref_;
    bool finite_range_;

    mutable std::vector<std::vector<Link>> active_;   // per evaluated site
    mutable std::vector<std::vector<int>> active_ids_;
    mutable std::vector<Gapsd> dg_;
    mutable Eigen::MatrixXd w_at_build_;
    mutable bool have_active_ = false;
};

// extended XYZ with species, reference and displaced positions
void write_xyz(std::ostream& out, const EnergyModel& model, const ProjectedMultilattice& ml,
               const DisplacementField& f, const std::string& comment);

} // namespace dislo
