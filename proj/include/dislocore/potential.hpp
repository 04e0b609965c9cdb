#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "dislocore/lattice.hpp"

namespace dislo {

template <class T>
using Gaps = Eigen::Matrix<T, 3, Eigen::Dynamic>;
using Gapsd = Gaps<double>;

// columns of a gap matrix refer to stencil triples tid[0..n)
struct SiteView {
    const InteractionStencil* st = nullptr;
    const int* tid = nullptr;
    int n = 0;

    const Triple& triple(int c) const { return st->triples[tid[c]]; }
    int alpha(int c) const { return triple(c).alpha; }
};

// view over every triple of a stencil
class FullView {
public:
    explicit FullView(const InteractionStencil& st);
    SiteView view() const { return {st_, ids_.data(), static_cast<int>(ids_.size())}; }
    operator SiteView() const { return view(); }

private:
    const InteractionStencil* st_;
    std::vector<int> ids_;
};

class SitePotential {
public:
    virtual ~SitePotential() = default;
    virtual std::string name() const = 0;
    // interaction range of the energy; infinite when the stencil fixes the partners
    virtual double cutoff() const = 0;
    virtual double energy(const SiteView& v, const Gapsd& g) const = 0;
    // returns the energy, writes dV/dg column-wise
    virtual double gradient(const SiteView& v, const Gapsd& g, Gapsd& dg) const = 0;
    // dense 3n x 3n Hessian, column c occupies rows 3c..3c+2
    virtual Eigen::MatrixXd hessian(const SiteView& v, const Gapsd& g) const = 0;
    // columns that can carry a nonzero derivative
    virtual std::vector<int> active(const SiteView& v, const Gapsd& g) const = 0;
};

using PotentialPtr = std::shared_ptr<const SitePotential>;

template <class T>
inline double value_of(const T& x) { return x.value(); }
template <>
inline double value_of<double>(const double& x) { return x; }

// energy and gradient come from Derived::eval<T>; the Hessian is forward-mode AD of the gradient
template <class Derived>
class PotentialBase : public SitePotential {
public:
    double energy(const SiteView& v, const Gapsd& g) const override
    {
        return self().template eval<double>(v, g, nullptr);
    }

    double gradient(const SiteView& v, const Gapsd& g, Gapsd& dg) const override
    {
        return self().template eval<double>(v, g, &dg);
    }

    Eigen::MatrixXd hessian(const SiteView& v, const Gapsd& g) const override
    {
        using AD = Eigen::AutoDiffScalar<Eigen::VectorXd>;
        std::vector<int> act = active(v, g);
        const int na = static_cast<int>(act.size());
        std::vector<int> ids(na);
        for (int c = 0; c < na; ++c) ids[c] = v.tid[act[c]];
        SiteView sub{v.st, ids.data(), na};
        Gaps<AD> ga(3, na);
        for (int c = 0; c < na; ++c)
            for (int i = 0; i < 3; ++i) {
                ga(i, c) = AD(g(i, act[c]), 3 * na, 3 * c + i);
            }
        Gaps<AD> dga(3, na);
        self().template eval<AD>(sub, ga, &dga);
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3 * v.n, 3 * v.n);
        for (int c = 0; c < na; ++c)
            for (int i = 0; i < 3; ++i) {
                Eigen::VectorXd d = dga(i, c).derivatives();
                if (d.size() == 0) continue;
                for (int e = 0; e < na; ++e)
                    for (int j = 0; j < 3; ++j) {
                        H(3 * act[c] + i, 3 * act[e] + j) = d(3 * e + j);
                    }
            }
        // symmetrize away rounding
        Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
        return Hs;
    }

private:
    const Derived& self() const { return static_cast<const Derived&>(*this); }
};

struct SWParams {
    double epsilon = 2.1683;      // eV
    double sigma = 2.0951;        // Angstrom
    double a = 1.80;
    double lambda = 21.0;
    double gamma = 1.20;
    double A = 7.049556277;
    double B = 0.6022245584;
    double p = 4.0;
    double q = 0.0;
    double cos0 = -1.0 / 3.0;
};

// Stillinger-Weber: pair terms split between both ends, three-body terms on the apex atom
class StillingerWeber : public PotentialBase<StillingerWeber> {
public:
    StillingerWeber(const SWParams& p, double length_unit);

    std::string name() const override { return "sw-si"; }
    double cutoff() const override { return a_sigma_; }
    std::vector<int> active(const SiteView& v, const Gapsd& g) const override;

    template <class T>
    T eval(const SiteView& v, const Gaps<T>& g, Gaps<T>* dg) const;

    const SWParams& params() const { return p_; }

private:
    SWParams p_;
    double sigma_;      // in length units
    double a_sigma_;    // cutoff in length units
};

struct ToyParams {
    double depth = 1.0;       // eV
    double stiffness = 2.0;   // Morse exponent, 1/length
    double rest_ratio = 0.95; // Morse minimum as a fraction of the reference bond
    double penalty = 1.0;     // eV/length^2 on intra-cell gaps
};

// Morse pairs on all coupled triples plus a harmonic penalty on the intra-cell gaps
class ToyPairML : public PotentialBase<ToyPairML> {
public:
    explicit ToyPairML(const ToyParams& p) : p_(p) {}

    std::string name() const override { return "toy"; }
    double cutoff() const override { return std::numeric_limits<double>::infinity(); }
    std::vector<int> active(const SiteView& v, const Gapsd& g) const override;

    template <class T>
    T eval(const SiteView& v, const Gaps<T>& g, Gaps<T>* dg) const;

private:
    ToyParams p_;
};

PotentialPtr sw_silicon(double lattice_constant = 5.431);
PotentialPtr toy_pair_ml(bool flipped = false);
PotentialPtr make_potential(const std::string& name, const MultilatticeSpec& spec);

struct ReferenceState {
    Gapsd g0;
    double energy_per_site = 0.0;
    Gapsd d1;                        // dV/dg at g0
    std::vector<Vec3> shift_force;   // per species
    double max_shift_force() const;
};

Gapsd reference_gaps(const InteractionStencil& st);
ReferenceState reference_state(const SitePotential& V, const InteractionStencil& st);

// V(g0 + e + du) - V(g0 + e)
double v_ell(const SitePotential& V, const InteractionStencil& st, const Gapsd& e, const Gapsd& du);

} // namespace dislo
