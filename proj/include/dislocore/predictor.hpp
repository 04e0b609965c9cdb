#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dislocore/cbmodel.hpp"
#include "dislocore/lattice.hpp"

namespace dislo {

// angle of x - core in [0, 2 pi), cut along the positive x1 ray
double branch_arg(const Vec2& x, const Vec2& core);

enum class TensorSource { CauchyBorn, Isotropic, Table };

TensorSource parse_tensor_source(const std::string& s);
std::string to_string(TensorSource s);

// 21 Voigt constants in crystal axes, row-major upper triangle
Eigen::Matrix<double, 6, 6> read_voigt_table(const std::string& path);
// silicon room temperature constants in GPa
Eigen::Matrix<double, 6, 6> silicon_voigt_table();
// rotates a crystal-axis Voigt matrix into the frame and keeps the in-plane derivative columns
ElasticTensor tensor_from_voigt(const Eigen::Matrix<double, 6, 6>& voigt, const Mat3& rotation);

// straight dislocation in an anisotropic linear elastic medium
class CLESolution {
public:
    // sextic (Stroh) solution; perturbs a degenerate tensor by 1e-8 relative
    static CLESolution anisotropic(const ElasticTensor& C, const Vec3& b, const Vec2& core);
    // closed-form isotropic solution
    static CLESolution isotropic(double nu, const Vec3& b, const Vec2& core);

    Vec3 value(const Vec2& x) const;
    Mat32 gradient(const Vec2& x) const;

    const Vec3& burgers() const { return b_; }
    const Vec2& core() const { return core_; }
    TensorSource source() const { return source_; }
    bool perturbed() const { return perturbed_; }
    // Stroh roots with positive imaginary part
    const Eigen::Vector3cd& roots() const { return p_; }

    void set_source(TensorSource s) { source_ = s; }

private:
    Vec3 b_ = Vec3::Zero();
    Vec2 core_ = Vec2::Zero();
    TensorSource source_ = TensorSource::CauchyBorn;
    bool iso_ = false;
    bool perturbed_ = false;
    double nu_ = 0.25;
    Eigen::Vector3cd p_;
    Eigen::Matrix3cd coef_;   // column alpha: a_alpha (b_alpha . b) / pi
};

// minimum separation of the three Stroh roots of C
double sextic_root_separation(const ElasticTensor& C);

CLESolution solve_cle(TensorSource mode, const ElasticTensor& C, const Vec3& b, const Vec2& core,
                      double nu = 0.22);

// zeta(x) = x - b12 eta(|x - core| / r_hat) arg(x - core) / (2 pi)
class CoreMap {
public:
    CoreMap(const Vec2& b12, const Vec2& core, double r_hat);

    static double eta(double t);
    static double deta(double t);

    Vec2 operator()(const Vec2& x) const;
    Mat2 jacobian(const Vec2& x) const;
    // damped Newton from y; throws InversionFailure after 50 iterations
    Vec2 inverse(const Vec2& y) const;

    double r_hat() const { return r_hat_; }
    const Vec2& b12() const { return b12_; }
    const Vec2& core() const { return core_; }

private:
    Vec2 b12_, core_;
    double r_hat_;
};

// p0 = -(d2_pp)^-1 d2_pF vec(grad U), species 1..S-1
Eigen::VectorXd predictor_p0(const CBDerivatives& cbd, const Mat32& gradU);

class Predictor {
public:
    Predictor(CLESolution cle, CoreMap zeta, const CBDerivatives& cbd);

    Vec3 U0(const Vec2& x) const;
    Mat32 gradU0(const Vec2& x) const;
    // p0 for every species, entry 0 is zero
    std::vector<Vec3> p0(const Vec2& x) const;
    // U0 + p0_alpha
    Vec3 u0(const Vec2& x, int alpha) const;

    const CLESolution& cle() const { return cle_; }
    const CoreMap& zeta() const { return zeta_; }
    int species() const { return species_; }
    double r_hat() const { return zeta_.r_hat(); }
    const Eigen::MatrixXd& shift_response() const { return P_; }

private:
    CLESolution cle_;
    CoreMap zeta_;
    Eigen::MatrixXd P_;
    int species_;
};

// u0_alpha at every stored site, columns 3 alpha .. 3 alpha + 2
Eigen::MatrixXd sample_predictor(const Predictor& pred, const Domain& d);

// e_t(l) = u0_beta(l + rho + k b12) - u0_alpha(l) + k b for the listed triples;
// columns of a site without stored neighbours are NaN
Gapsd elastic_strain(const Domain& d, const InteractionStencil& st, const Eigen::MatrixXd& u0,
                     const Vec3& burgers, int site, const std::vector<int>& triples);

// per-site strains for the listed triples
std::vector<Gapsd> elastic_strains(const Predictor& pred, const Domain& d, const InteractionStencil& st,
                                   const std::vector<int>& triples);

} // namespace dislo
