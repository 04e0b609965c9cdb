#include "dislocore/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Neumaier compensated sum in the given order
double compensated_sum(const std::vector<double>& v)
{
    double s = 0.0, c = 0.0;
    for (double x : v) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    return s + c;
}

int thread_count(int requested, int work)
{
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    n = std::max(1, n);
    return std::min(n, std::max(1, work / 256));
}

template <class F>
void parallel_for(int n, int threads, F&& body)
{
    const int T = thread_count(threads, n);
    if (T == 1) {
        body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const int chunk = (n + T - 1) / T;
    for (int t = 0; t < T; ++t) {
        const int lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

Eigen::MatrixXd relabel(const Domain& d, const Eigen::MatrixXd& v, int sign)
{
    Eigen::MatrixXd out = v;
    for (int s = 0; s < d.size(); ++s) {
        if (!d.below(s)) continue;
        int src = d.find(d.index[s] + sign * d.burgers_index);
        if (src < 0)
            out.row(s).setConstant(kNaN);
        else
            out.row(s) = v.row(src);
    }
    return out;
}

} // namespace

DisplacementField::DisplacementField(const Domain& d, int S) : domain(&d), species(S)
{
    x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.size()) * 3 * S);
}

Vec3 DisplacementField::p(int s, int alpha) const
{
    if (alpha == 0) return Vec3::Zero();
    return x.segment<3>(static_cast<Eigen::Index>(s) * 3 * species + 3 * alpha);
}

void DisplacementField::set_p(int s, int alpha, const Vec3& v)
{
    if (alpha == 0) throw usage_error("p_0 is fixed to zero");
    x.segment<3>(static_cast<Eigen::Index>(s) * 3 * species + 3 * alpha) = v;
}

Eigen::MatrixXd DisplacementField::atoms() const
{
    Eigen::MatrixXd w(size(), 3 * species);
    for (int s = 0; s < size(); ++s)
        for (int a = 0; a < species; ++a) w.row(s).segment<3>(3 * a) = u(s, a).transpose();
    return w;
}

void DisplacementField::clamp()
{
    const int n = dofs_per_site();
    for (int s = 0; s < size(); ++s)
        if (!domain->interior[s]) x.segment(static_cast<Eigen::Index>(s) * n, n).setZero();
}

DisplacementField zero_pad(const DisplacementField& f, const Domain& larger)
{
    DisplacementField out(larger, f.species);
    const int n = f.dofs_per_site();
    for (int s = 0; s < larger.size(); ++s) {
        int src = f.domain->find(larger.index[s]);
        if (src >= 0) out.x.segment(static_cast<Eigen::Index>(s) * n, n) = f.x.segment(static_cast<Eigen::Index>(src) * n, n);
    }
    return out;
}

Eigen::MatrixXd slip_S(const Domain& d, const Eigen::MatrixXd& v) { return relabel(d, v, -1); }

Eigen::MatrixXd slip_R(const Domain& d, const Eigen::MatrixXd& v) { return relabel(d, v, 1); }

Eigen::MatrixXd slip_S0(const Domain& d, const Eigen::MatrixXd& w, const Vec3& b)
{
    Eigen::MatrixXd out = relabel(d, w, -1);
    for (int s = 0; s < d.size(); ++s) {
        if (!d.below(s)) continue;
        for (int a = 0; a < w.cols() / 3; ++a) out.row(s).segment<3>(3 * a) -= b.transpose();
    }
    return out;
}

void check_burgers_alignment(const ProjectedMultilattice& ml)
{
    const Vec2 b12 = ml.frame.b12();
    const Vec2 c = ml.A.inverse() * b12;
    const Vec2 r = c.array().round().matrix();
    if ((ml.A * r - b12).norm() > 1e-10 || !ml.burgers_on_lattice)
        throw Error("MisalignedBurgers", "projected Burgers vector is not a lattice vector");
}

Vec3 dtilde(const DisplacementField& f, int site, const Triple& t)
{
    Neighbour nb = slip_neighbour(*f.domain, site, t.m);
    if (nb.site < 0) throw Error("OutOfDomain", "neighbour not stored");
    return f.u(nb.site, t.beta) - f.u(site, t.alpha);
}

Vec3 dtilde_rho(const Domain& d, const Eigen::MatrixXd& v, int site, const Vec2i& m)
{
    Neighbour nb = slip_neighbour(d, site, m);
    if (nb.site < 0) throw Error("OutOfDomain", "neighbour not stored");
    return (v.row(nb.site) - v.row(site)).transpose();
}

double a1_norm(const DisplacementField& f, const InteractionStencil& st)
{
    const Domain& d = *f.domain;
    std::vector<double> terms;
    terms.reserve(d.size());
    for (int s = 0; s < d.size(); ++s) {
        double acc = 0.0;
        for (const auto& t : st.triples) {
            int nb = d.find(d.index[s] + t.m);
            Vec3 ub = nb < 0 ? Vec3::Zero() : f.u(nb, t.beta);
            acc += (ub - f.u(s, t.alpha)).squaredNorm();
        }
        terms.push_back(acc);
    }
    return std::sqrt(compensated_sum(terms));
}

Vec3 ForceField::net(int s) const
{
    Vec3 n = Vec3::Zero();
    for (int a = 0; a < species_force.cols() / 3; ++a) n += on(s, a);
    return n;
}

EnergyModel::EnergyModel(PotentialPtr V, const InteractionStencil& st, const Domain& d, Eigen::MatrixXd u0,
                         const Vec3& burgers, EnergyOptions opt)
    : V_(std::move(V)), st_(&st), d_(&d), u0_(std::move(u0)), b_(burgers), opt_(opt)
{
    if (u0_.rows() != d.size() || u0_.cols() != 3 * st.species)
        throw usage_error("predictor samples do not match the domain");
    if (opt_.r_admissible < 0) opt_.r_admissible = 2.0 * d.r_hat;
    finite_range_ = std::isfinite(V_->cutoff());
    const double reach = d.R + st.max_rho() + d.b12.norm() + 1e-9;
    for (int s = 0; s < d.size(); ++s)
        if ((d.sites[s] - d.core).norm() <= reach) eval_.push_back(s);
    for (int s : eval_)
        for (const auto& l : links(s))
            if (l.nb < 0) throw Error("DomainTooSmall", "storage ring does not cover the stencil");

    build_active(u0_);
    ref_.assign(eval_.size(), 0.0);
    parallel_for(static_cast<int>(eval_.size()), opt_.threads, [&](int lo, int hi) {
        Gapsd g;
        for (int i = lo; i < hi; ++i) {
            gaps(u0_, eval_[i], active_[i], g);
            SiteView v{st_, active_ids_[i].data(), static_cast<int>(active_ids_[i].size())};
            ref_[i] = V_->energy(v, g);
        }
    });
}

std::vector<EnergyModel::Link> EnergyModel::links(int site) const
{
    std::vector<Link> out(st_->size());
    const bool slip = b_.squaredNorm() > 0;
    for (int t = 0; t < st_->size(); ++t) {
        Neighbour nb = slip ? slip_neighbour(*d_, site, st_->triples[t].m) : plain_neighbour(*d_, site, st_->triples[t].m);
        out[t] = {t, nb.site, nb.k};
    }
    return out;
}

void EnergyModel::gaps(const Eigen::MatrixXd& w, int site, const std::vector<Link>& ls, Gapsd& g) const
{
    g.resize(3, ls.size());
    for (size_t c = 0; c < ls.size(); ++c) {
        const Triple& t = st_->triples[ls[c].triple];
        g.col(c) = t.g0 + (w.row(ls[c].nb).segment<3>(3 * t.beta) - w.row(site).segment<3>(3 * t.alpha)).transpose()
                   + ls[c].k * b_;
    }
}

void EnergyModel::build_active(const Eigen::MatrixXd& w) const
{
    const int n = static_cast<int>(eval_.size());
    active_.assign(n, {});
    active_ids_.assign(n, {});
    dg_.resize(n);
    const double reach = V_->cutoff() + opt_.skin;
    parallel_for(n, opt_.threads, [&](int lo, int hi) {
        Gapsd g;
        for (int i = lo; i < hi; ++i) {
            std::vector<Link> all = links(eval_[i]);
            gaps(w, eval_[i], all, g);
            std::vector<int> keep;
            if (finite_range_) {
                for (size_t c = 0; c < all.size(); ++c)
                    if (g.col(c).norm() < reach) keep.push_back(static_cast<int>(c));
            } else {
                std::vector<int> ids(all.size());
                for (size_t c = 0; c < all.size(); ++c) ids[c] = all[c].triple;
                keep = V_->active(SiteView{st_, ids.data(), static_cast<int>(ids.size())}, g);
            }
            for (int c : keep) {
                active_[i].push_back(all[c]);
                active_ids_[i].push_back(all[c].triple);
            }
        }
    });
    w_at_build_ = w;
    have_active_ = true;
}

void EnergyModel::ensure_active(const Eigen::MatrixXd& w) const
{
    if (!finite_range_ && have_active_) return;
    if (have_active_) {
        double moved = 0.0;
        for (Eigen::Index s = 0; s < w.rows(); ++s)
            for (int a = 0; a < species(); ++a)
                moved = std::max(moved, (w.row(s).segment<3>(3 * a) - w_at_build_.row(s).segment<3>(3 * a)).norm());
        if (2.0 * moved < opt_.skin) return;
    }
    build_active(w);
}

Eigen::MatrixXd EnergyModel::total(const DisplacementField& f) const
{
    if (f.domain != d_ || f.species != species()) throw usage_error("field does not belong to this domain");
    return u0_ + f.atoms();
}

double EnergyModel::evaluate(const DisplacementField& f, Eigen::MatrixXd* dw, std::vector<double>* sites) const
{
    const Eigen::MatrixXd w = total(f);
    ensure_active(w);
    const int n = static_cast<int>(eval_.size());
    std::vector<double> e(n, 0.0);
    const double escape = 3.0 * st_->r_cut;
    std::vector<char> escaped(n, 0);
    parallel_for(n, opt_.threads, [&](int lo, int hi) {
        Gapsd g;
        for (int i = lo; i < hi; ++i) {
            gaps(w, eval_[i], active_[i], g);
            for (Eigen::Index c = 0; c < g.cols(); ++c)
                if (!(g.col(c).norm() <= escape)) escaped[i] = 1;
            SiteView v{st_, active_ids_[i].data(), static_cast<int>(active_ids_[i].size())};
            double Vl = dw ? V_->gradient(v, g, dg_[i]) : V_->energy(v, g);
            e[i] = Vl - ref_[i];
        }
    });
    for (int i = 0; i < n; ++i)
        if (escaped[i] || !std::isfinite(e[i]))
            throw Error("DomainEscape", "strain left the potential domain at site " + std::to_string(eval_[i]));
    if (dw) {
        dw->setZero(d_->size(), 3 * species());
        for (int i = 0; i < n; ++i) {
            const int s = eval_[i];
            const auto& ls = active_[i];
            for (size_t c = 0; c < ls.size(); ++c) {
                const Triple& t = st_->triples[ls[c].triple];
                dw->row(ls[c].nb).segment<3>(3 * t.beta) += dg_[i].col(c).transpose();
                dw->row(s).segment<3>(3 * t.alpha) -= dg_[i].col(c).transpose();
            }
        }
    }
    if (sites) {
        sites->assign(d_->size(), 0.0);
        for (int i = 0; i < n; ++i) (*sites)[eval_[i]] = e[i];
    }
    return compensated_sum(e);
}

double EnergyModel::energy(const DisplacementField& f) const { return evaluate(f, nullptr, nullptr); }

double EnergyModel::energy_gradient(const DisplacementField& f, Eigen::VectorXd& grad) const
{
    Eigen::MatrixXd dw;
    double E = evaluate(f, &dw, nullptr);
    const int S = species(), n = 3 * S;
    grad.setZero(static_cast<Eigen::Index>(d_->size()) * n);
    for (int s = 0; s < d_->size(); ++s) {
        if (!d_->interior[s]) continue;
        auto gs = grad.segment(static_cast<Eigen::Index>(s) * n, n);
        for (int a = 0; a < S; ++a) {
            gs.head<3>() += dw.row(s).segment<3>(3 * a).transpose();
            if (a > 0) gs.segment<3>(3 * a) = dw.row(s).segment<3>(3 * a).transpose();
        }
    }
    return E;
}

ForceField EnergyModel::forces(const DisplacementField& f) const
{
    Eigen::MatrixXd dw;
    evaluate(f, &dw, nullptr);
    ForceField F;
    F.species_force = -dw;
    for (int s = 0; s < d_->size(); ++s)
        if (!d_->interior[s]) F.species_force.row(s).setZero();
    const int S = species(), n = 3 * S;
    F.dof.setZero(static_cast<Eigen::Index>(d_->size()) * n);
    for (int s = 0; s < d_->size(); ++s) {
        if (!d_->interior[s]) continue;
        for (int a = 0; a < S; ++a) {
            F.dof.segment<3>(static_cast<Eigen::Index>(s) * n) += F.on(s, a);
            if (a > 0) F.dof.segment<3>(static_cast<Eigen::Index>(s) * n + 3 * a) = F.on(s, a);
        }
    }
    return F;
}

std::vector<double> EnergyModel::site_energies(const DisplacementField& f) const
{
    std::vector<double> out;
    evaluate(f, nullptr, &out);
    return out;
}

double EnergyModel::plain_site_energy(const DisplacementField& f, int site) const
{
    auto it = std::lower_bound(eval_.begin(), eval_.end(), site);
    if (it == eval_.end() || *it != site) return 0.0;
    const Eigen::MatrixXd w = total(f);
    FullView fv(*st_);
    Gapsd g(3, st_->size());
    for (int t = 0; t < st_->size(); ++t) {
        const Triple& tr = st_->triples[t];
        int nb = d_->find(d_->index[site] + tr.m);
        if (nb < 0) throw Error("OutOfDomain", "neighbour not stored");
        g.col(t) = tr.g0 + (w.row(nb).segment<3>(3 * tr.beta) - w.row(site).segment<3>(3 * tr.alpha)).transpose();
    }
    return V_->energy(fv, g) - ref_[it - eval_.begin()];
}

Gapsd EnergyModel::elastic_strain(int site) const
{
    std::vector<Link> ls = links(site);
    Gapsd e(3, ls.size());
    for (size_t c = 0; c < ls.size(); ++c) {
        const Triple& t = st_->triples[ls[c].triple];
        if (ls[c].nb < 0) {
            e.col(c).setConstant(kNaN);
            continue;
        }
        e.col(c) = (u0_.row(ls[c].nb).segment<3>(3 * t.beta) - u0_.row(site).segment<3>(3 * t.alpha)).transpose()
                   + ls[c].k * b_;
    }
    return e;
}

int EnergyModel::admissibility_warnings(const DisplacementField& f) const
{
    int bad = 0;
    for (int s : eval_) {
        const double r = (d_->sites[s] - d_->core).norm();
        const double bound = r > opt_.r_admissible ? std::min(0.5, opt_.m_admissible) : opt_.m_admissible;
        double worst = 0.0;
        for (int a = 1; a < species(); ++a) worst = std::max(worst, f.p(s, a).norm());
        for (const auto& l : links(s)) {
            const Triple& t = st_->triples[l.triple];
            if (finite_range_ && t.g0.norm() >= V_->cutoff()) continue;
            worst = std::max(worst, (f.u(l.nb, t.beta) - f.u(s, t.alpha)).norm());
        }
        if (worst > bound) ++bad;
    }
    return bad;
}

void write_xyz(std::ostream& out, const EnergyModel& model, const ProjectedMultilattice& ml,
               const DisplacementField& f, const std::string& comment)
{
    const Domain& d = model.domain();
    const int S = model.species();
    const Eigen::MatrixXd w = model.predictor() + f.atoms();
    out << d.size() * S << "\n";
    out << "Properties=species:S:1:pos:R:3:ref:R:3:interior:I:1 " << comment << "\n";
    out.precision(10);
    for (int s = 0; s < d.size(); ++s)
        for (int a = 0; a < S; ++a) {
            const int sp = ml.basis[a].species;
            const std::string label = sp < static_cast<int>(ml.parent.labels.size()) ? ml.parent.labels[sp] : "X";
            Vec3 ref = ml.basis[a].offset;
            ref.head<2>() += d.sites[s];
            const Vec3 pos = ref + w.row(s).segment<3>(3 * a).transpose();
            out << label << " " << pos(0) << " " << pos(1) << " " << pos(2) << " " << ref(0) << " " << ref(1) << " "
                << ref(2) << " " << int(d.interior[s]) << "\n";
        }
}

} // namespace dislo
