#include "dislocore/potential.hpp"

#include <cmath>

#include "dislocore/errors.hpp"

namespace dislo {

FullView::FullView(const InteractionStencil& st) : st_(&st), ids_(st.size())
{
    for (int i = 0; i < st.size(); ++i) ids_[i] = i;
}

StillingerWeber::StillingerWeber(const SWParams& p, double length_unit)
    : p_(p), sigma_(p.sigma / length_unit), a_sigma_(p.a * p.sigma / length_unit)
{
}

std::vector<int> StillingerWeber::active(const SiteView& v, const Gapsd& g) const
{
    std::vector<int> out;
    for (int c = 0; c < v.n; ++c) {
        if (g.col(c).squaredNorm() < a_sigma_ * a_sigma_) out.push_back(c);
    }
    return out;
}

template <class T>
T StillingerWeber::eval(const SiteView& v, const Gaps<T>& g, Gaps<T>* dg) const
{
    using std::exp;
    using std::pow;
    using std::sqrt;
    const double eps = p_.epsilon;
    const double s = sigma_;
    const double ac = a_sigma_;
    if (dg) {
        dg->resize(3, v.n);
        for (int c = 0; c < v.n; ++c)
            for (int i = 0; i < 3; ++i) (*dg)(i, c) = T(0.0);
    }
    T E(0.0);
    std::vector<int> nb;
    std::vector<T> r, ex3, dex3;
    nb.reserve(16);
    for (int a = 0; a < v.st->species; ++a) {
        nb.clear();
        r.clear();
        ex3.clear();
        dex3.clear();
        for (int c = 0; c < v.n; ++c) {
            if (v.alpha(c) != a) continue;
            T r2 = g.col(c).squaredNorm();
            if (!(value_of(r2) < ac * ac)) continue;
            T rc = sqrt(r2);
            nb.push_back(c);
            r.push_back(rc);
            T inv = T(1.0) / (rc - ac);
            T e3 = exp(p_.gamma * s * inv);
            ex3.push_back(e3);
            // d e3 / dr
            dex3.push_back(-p_.gamma * s * inv * inv * e3);

            T sr = s / rc;
            T srp = pow(sr, p_.p);
            T srq = pow(sr, p_.q);
            T e2 = exp(s * inv);
            T f = p_.B * srp - srq;
            T phi = p_.A * eps * f * e2;
            E += 0.5 * phi;
            if (dg) {
                T df = (-p_.p * p_.B * srp + p_.q * srq) / rc;
                T de2 = -s * inv * inv * e2;
                T dphi = p_.A * eps * (df * e2 + f * de2);
                dg->col(c) += (0.5 * dphi / rc) * g.col(c);
            }
        }
        const int m = static_cast<int>(nb.size());
        for (int j = 0; j < m; ++j)
            for (int k = j + 1; k < m; ++k) {
                const int cj = nb[j], ck = nb[k];
                T rjk = r[j] * r[k];
                T cs = g.col(cj).dot(g.col(ck)) / rjk;
                T d = cs - p_.cos0;
                T ee = ex3[j] * ex3[k];
                E += p_.lambda * eps * d * d * ee;
                if (dg) {
                    T pre = 2.0 * p_.lambda * eps * d * ee;
                    T rad = p_.lambda * eps * d * d;
                    dg->col(cj) += pre * (g.col(ck) / rjk - cs * g.col(cj) / (r[j] * r[j]))
                                   + rad * dex3[j] * ex3[k] * g.col(cj) / r[j];
                    dg->col(ck) += pre * (g.col(cj) / rjk - cs * g.col(ck) / (r[k] * r[k]))
                                   + rad * dex3[k] * ex3[j] * g.col(ck) / r[k];
                }
            }
    }
    return E;
}

std::vector<int> ToyPairML::active(const SiteView& v, const Gapsd&) const
{
    std::vector<int> out;
    for (int c = 0; c < v.n; ++c) {
        if (v.triple(c).coupled) out.push_back(c);
    }
    return out;
}

template <class T>
T ToyPairML::eval(const SiteView& v, const Gaps<T>& g, Gaps<T>* dg) const
{
    using std::exp;
    using std::sqrt;
    if (dg) {
        dg->resize(3, v.n);
        for (int c = 0; c < v.n; ++c)
            for (int i = 0; i < 3; ++i) (*dg)(i, c) = T(0.0);
    }
    T E(0.0);
    const double D = p_.depth, a = p_.stiffness;
    for (int c = 0; c < v.n; ++c) {
        const Triple& t = v.triple(c);
        if (!t.coupled) continue;
        T r = sqrt(g.col(c).squaredNorm());
        double r0 = p_.rest_ratio * t.g0.norm();
        T x = exp(-a * (r - r0));
        T phi = D * ((1.0 - x) * (1.0 - x) - 1.0);
        E += 0.5 * phi;
        if (dg) {
            T dphi = 2.0 * D * a * (1.0 - x) * x;
            dg->col(c) += (0.5 * dphi / r) * g.col(c);
        }
        if (t.m.isZero() && t.alpha != t.beta) {
            Eigen::Matrix<T, 3, 1> diff = g.col(c) - t.g0.cast<T>();
            E += 0.25 * p_.penalty * diff.squaredNorm();
            if (dg) dg->col(c) += (0.5 * p_.penalty) * diff;
        }
    }
    return E;
}

template double StillingerWeber::eval<double>(const SiteView&, const Gaps<double>&, Gaps<double>*) const;
template double ToyPairML::eval<double>(const SiteView&, const Gaps<double>&, Gaps<double>*) const;

PotentialPtr sw_silicon(double lattice_constant)
{
    return std::make_shared<StillingerWeber>(SWParams{}, lattice_constant);
}

PotentialPtr toy_pair_ml(bool flipped)
{
    ToyParams p;
    if (flipped) p.depth = -p.depth;
    return std::make_shared<ToyPairML>(p);
}

PotentialPtr make_potential(const std::string& name, const MultilatticeSpec& spec)
{
    if (name == "sw-si") return sw_silicon(spec.lattice_constant);
    if (name == "toy") return toy_pair_ml(false);
    if (name == "toy-flipped") return toy_pair_ml(true);
    throw usage_error("unknown potential " + name);
}

double ReferenceState::max_shift_force() const
{
    double m = 0;
    for (const auto& f : shift_force) m = std::max(m, f.norm());
    return m;
}

Gapsd reference_gaps(const InteractionStencil& st)
{
    Gapsd g(3, st.size());
    for (int t = 0; t < st.size(); ++t) g.col(t) = st.triples[t].g0;
    return g;
}

ReferenceState reference_state(const SitePotential& V, const InteractionStencil& st)
{
    ReferenceState rs;
    rs.g0 = reference_gaps(st);
    FullView fv(st);
    rs.energy_per_site = V.gradient(fv, rs.g0, rs.d1);
    rs.shift_force.assign(st.species, Vec3::Zero());
    for (int t = 0; t < st.size(); ++t) {
        const auto& tr = st.triples[t];
        rs.shift_force[tr.beta] += rs.d1.col(t);
        rs.shift_force[tr.alpha] -= rs.d1.col(t);
    }
    return rs;
}

double v_ell(const SitePotential& V, const InteractionStencil& st, const Gapsd& e, const Gapsd& du)
{
    Gapsd g0 = reference_gaps(st);
    Gapsd ge = g0 + e;
    Gapsd gu = ge + du;
    for (int t = 0; t < st.size(); ++t) {
        if (gu.col(t).norm() > 3.0 * st.r_cut || ge.col(t).norm() > 3.0 * st.r_cut) {
            throw Error("DomainEscape", "gap exceeds three cut-off radii");
        }
    }
    FullView fv(st);
    return V.energy(fv, gu) - V.energy(fv, ge);
}

} // namespace dislo
