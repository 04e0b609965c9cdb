#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dislo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec2i = Eigen::Vector2i;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

struct MultilatticeSpec {
    Mat3 cell = Mat3::Identity();   // columns are the Bravais vectors
    std::vector<Vec3> shifts;       // shifts[0] is the origin
    std::vector<std::string> labels;
    double lattice_constant = 1.0;  // Angstrom per length unit

    int species() const { return static_cast<int>(shifts.size()); }
    // throws on a bad cell; reduces shifts into the unit cell
    void validate();
};

MultilatticeSpec silicon_spec();
MultilatticeSpec toy_spec();
MultilatticeSpec fcc_spec();
MultilatticeSpec load_crystal(const std::string& path);

struct DislocationFrame {
    Mat3 rotation = Mat3::Identity();   // crystal -> frame
    Vec3 burgers = Vec3::Zero();        // frame coordinates, second entry zero
    Vec2 core = Vec2::Zero();
    double line_period = 0.0;
    Vec3 line_vector = Vec3::Zero();    // shortest lattice vector along the line, crystal axes
    bool screw = false;                 // projected Burgers vector vanishes

    Vec2 b12() const { return burgers.head<2>(); }
};

DislocationFrame build_frame(const MultilatticeSpec& spec, const Vec3& burgers_crystal,
                             const Vec3& line_crystal, const Vec2& core = Vec2::Zero());

struct BasisAtom {
    Vec3 offset;    // frame coordinates, third entry in [0, line_period)
    int species;    // parent species index
};

struct ProjectedMultilattice {
    Mat2 A = Mat2::Identity();              // columns span the 2D lattice
    Eigen::Matrix<double, 3, 2> lift;       // 3D lattice vectors projecting onto the columns of A
    std::vector<BasisAtom> basis;
    MultilatticeSpec parent;
    DislocationFrame frame;
    Vec2i burgers_index = Vec2i::Zero();    // b12 = A * burgers_index
    bool burgers_on_lattice = false;

    int species() const { return static_cast<int>(basis.size()); }
    Vec2 site(const Vec2i& n) const { return A * n.cast<double>(); }
    Vec3 lift_site(const Vec2i& n) const { return lift * n.cast<double>(); }
    // smallest distance from x to a lattice site
    double distance_to_lattice(const Vec2& x) const;
};

ProjectedMultilattice project(const MultilatticeSpec& spec, const DislocationFrame& frame);

// core placed at A * offset; throws if closer than 0.1 to a site
void place_core(ProjectedMultilattice& ml, const Vec2& offset);

struct Triple {
    Vec2i m;        // integer lattice offset
    Vec2 rho;       // A * m
    int alpha = 0;
    int beta = 0;
    Vec3 g0;        // reference gap rho + p_beta - p_alpha including the line component
    int reverse = -1;
    bool coupled = true;  // false for entries added only to satisfy the span conditions
};

struct InteractionStencil {
    std::vector<Triple> triples;
    double r_cut = 0.0;
    int species = 0;
    std::vector<std::vector<int>> by_source;   // triple ids grouped by alpha

    int size() const { return static_cast<int>(triples.size()); }
    bool cond1() const;
    bool cond2() const;
    bool closed() const;
    double max_rho() const;
};

InteractionStencil build_stencil(const ProjectedMultilattice& ml, double r_cut);

struct Domain {
    std::vector<Vec2i> index;
    std::vector<Vec2> sites;
    std::vector<char> interior;
    std::vector<char> gamma;
    double R = 0.0;
    double r_hat = 0.0;
    double r_store = 0.0;
    Vec2 core = Vec2::Zero();
    Vec2i burgers_index = Vec2i::Zero();
    Vec2 b12 = Vec2::Zero();

    int size() const { return static_cast<int>(sites.size()); }
    int find(const Vec2i& n) const;
    bool below(int i) const { return sites[i](1) < core(1); }
    int interior_count() const;

    Vec2i lo = Vec2i::Zero();
    int width = 0, height = 0;
    std::vector<int> grid;
    Mat2 A = Mat2::Identity();
};

struct Neighbour {
    int site = -1;   // -1 when not stored
    int k = 0;       // number of Burgers vectors added by the slip relabelling
};

// l + rho + k b12 with k = s(l) - s(l + rho) on the slip region, plain neighbour elsewhere;
// s marks sites below the cut
Neighbour slip_neighbour(const Domain& d, int site, const Vec2i& m);
inline Neighbour plain_neighbour(const Domain& d, int site, const Vec2i& m)
{
    return {d.find(d.index[site] + m), 0};
}

bool in_gamma_region(const Vec2& x, const Vec2& core, double r_hat, double b1);

// interior = B_R(core), storage radius R + 2 (r_cut + |b12|)
Domain build_domain(const ProjectedMultilattice& ml, const InteractionStencil& st, double R,
                    double r_hat);

} // namespace dislo
