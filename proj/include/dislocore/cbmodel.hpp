#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "dislocore/lattice.hpp"
#include "dislocore/potential.hpp"

namespace dislo {

using Mat32 = Eigen::Matrix<double, 3, 2>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// F is flattened column-major: F(i, j) -> i + 3 j
inline Eigen::Matrix<double, 6, 1> flatten(const Mat32& F)
{
    return Eigen::Map<const Eigen::Matrix<double, 6, 1>>(F.data());
}
inline Mat32 unflatten(const Eigen::Matrix<double, 6, 1>& f)
{
    return Eigen::Map<const Mat32>(f.data());
}

// d g / d(F, p_0 .. p_{S-1}) for g_t = g0_t + F rho_t + p_beta - p_alpha
Eigen::MatrixXd cb_jacobian(const InteractionStencil& st);

double cb_density(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                  const std::vector<Vec3>& p);

// gradient with respect to (F, p_0 .. p_{S-1})
Eigen::VectorXd cb_gradient(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                            const std::vector<Vec3>& p);

// min over shifts of W(F, p) by Newton iteration; p receives the minimizer
double cb_relaxed_density(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                          std::vector<Vec3>* p = nullptr);

struct CBDerivatives {
    int species = 1;
    Mat6 FF = Mat6::Zero();
    Eigen::MatrixXd Fp;     // 6 x 3(S-1), shifts of species 1..S-1
    Eigen::MatrixXd pp;     // 3(S-1) x 3(S-1)
    Eigen::MatrixXd Hg;     // Hessian of V at the reference gaps, only active columns are nonzero
    std::vector<int> active;

    int nshift() const { return 3 * (species - 1); }
    // p0 = shift_response * vec(grad U)
    Eigen::MatrixXd shift_response() const;
};

CBDerivatives cb_derivatives(const SitePotential& V, const InteractionStencil& st);

struct ElasticTensor {
    Mat6 C = Mat6::Zero();

    double operator()(int i, int j, int k, int l) const { return C(i + 3 * j, k + 3 * l); }
    // (n C n)_ik = C_ijkl n_j n_l
    Mat3 acoustic(const Vec2& n) const;
    double legendre_hadamard(int samples = 720) const;
    double major_asymmetry() const { return (C - C.transpose()).cwiseAbs().maxCoeff(); }
};

ElasticTensor elastic_tensor(const CBDerivatives& cbd);

// per-site degrees of freedom (U, p_1 .. p_{S-1})
class DynamicalMatrix {
public:
    DynamicalMatrix(const SitePotential& V, const InteractionStencil& st);

    int dim() const { return 3 * st_->species; }
    const InteractionStencil& stencil() const { return *st_; }
    // xi in reduced reciprocal coordinates, phase exp(2 pi i xi . m)
    Eigen::MatrixXcd operator()(const Vec2& xi) const;
    Eigen::MatrixXcd a1_symbol(const Vec2& xi) const;
    // H v on an N x N periodic supercell, v has one row per site (index i*N + j) and dim() columns
    Eigen::MatrixXd apply_periodic(int N, const Eigen::MatrixXd& v) const;
    double quadratic_form(int N, const Eigen::MatrixXd& v) const;

private:
    Eigen::MatrixXcd difference_symbol(const Vec2& xi, const std::vector<int>& cols) const;

    const InteractionStencil* st_;
    std::vector<int> active_;
    Eigen::MatrixXd Hact_;
};

struct StabilityReport {
    int grid = 0;
    double min_normalized = 0.0;
    Vec2 argmin = Vec2::Zero();
    double h00_at_zero = 0.0;   // max |entry| of the U-U block at xi = 0
};

// throws UnstablePotential if a sampled normalized eigenvalue is negative
StabilityReport stability_scan(const DynamicalMatrix& H, int grid_n);
// same scan without throwing
StabilityReport stability_values(const DynamicalMatrix& H, int grid_n);

struct GreenSupercell {
    int N = 0;
    int dim = 0;
    std::vector<Eigen::MatrixXd> G;   // site i*N + j

    const Eigen::MatrixXd& at(int i, int j) const
    {
        i = ((i % N) + N) % N;
        j = ((j % N) + N) % N;
        return G[static_cast<size_t>(i) * N + j];
    }
};

GreenSupercell greens_supercell(const DynamicalMatrix& H, int N);

// periodic real fields on the unit torus sampled on an N x N grid, one column per component
struct PeriodicField {
    int N = 0;
    Eigen::MatrixXd values;   // row i*N + j at x = (i, j) / N

    // column c + comp*2 holds d/dx_d of component comp, d in {0, 1}
    Eigen::MatrixXd gradient() const;
};

PeriodicField trig_field(int N, int components, int modes, unsigned seed);

struct EquivalenceResult {
    double mixed = 0.0;      // relative residual of the mixed weak form
    double standard = 0.0;   // relative residual of the standard strong form
};

// source f = -div(C grad U) and shifts solving the shift equation for the given U
void manufacture_standard(const CBDerivatives& cbd, const ElasticTensor& C, const PeriodicField& U,
                          PeriodicField& p, PeriodicField& f);
// solves the mixed form with source f exactly in Fourier space
void solve_mixed(const CBDerivatives& cbd, const PeriodicField& f, PeriodicField& U, PeriodicField& p);

EquivalenceResult cb_equivalence_check(const CBDerivatives& cbd, const ElasticTensor& C,
                                       const PeriodicField& U, const PeriodicField& p,
                                       const PeriodicField& f, int tests, unsigned seed);

} // namespace dislo
