#include "dislocore/solver.hpp"

#include <cmath>
#include <deque>
#include <iostream>

#include <Eigen/Sparse>

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

// scalar graph Laplacian on interior atoms over the bonds of the potential, clamped neighbours as
// Dirichlet data; acts on (U, p) through u_alpha = U + p_alpha
class Preconditioner {
public:
    explicit Preconditioner(const EnergyModel& m) : S_(m.species()), n_(m.domain().size())
    {
        const Domain& d = m.domain();
        const auto& st = m.stencil();
        atom_.assign(static_cast<size_t>(n_) * S_, -1);
        int na = 0;
        for (int s = 0; s < n_; ++s)
            if (d.interior[s])
                for (int a = 0; a < S_; ++a) atom_[static_cast<size_t>(s) * S_ + a] = na++;
        const double cut = m.potential().cutoff();
        const bool finite = std::isfinite(cut);
        std::vector<Eigen::Triplet<double>> T;
        std::vector<double> diag(na, 0.0);
        for (int s : m.evaluated_sites())
            for (const auto& l : m.links(s)) {
                const Triple& t = st.triples[l.triple];
                if (finite ? t.g0.norm() >= cut : !t.coupled) continue;
                const int i = atom_[static_cast<size_t>(s) * S_ + t.alpha];
                const int j = atom_[static_cast<size_t>(l.nb) * S_ + t.beta];
                if (i >= 0) diag[i] += 1.0;
                if (j >= 0) diag[j] += 1.0;
                if (i >= 0 && j >= 0 && i != j) {
                    T.emplace_back(i, j, -1.0);
                    T.emplace_back(j, i, -1.0);
                }
            }
        double mean = 0;
        for (double v : diag) mean += v;
        mean = na ? mean / na : 1.0;
        for (int i = 0; i < na; ++i) T.emplace_back(i, i, diag[i] + 1e-8 * mean);
        L_.resize(na, na);
        L_.setFromTriplets(T.begin(), T.end());
        solver_.compute(L_);
        if (solver_.info() != Eigen::Success) throw Error("LineSearchFailure", "preconditioner factorization failed");
        na_ = na;
    }

    // z = P^-1 g
    Eigen::VectorXd solve(const Eigen::VectorXd& g) const
    {
        Eigen::MatrixXd gu = Eigen::MatrixXd::Zero(na_, 3);
        const int n = 3 * S_;
        for (int s = 0; s < n_; ++s) {
            const int i0 = atom_[static_cast<size_t>(s) * S_];
            if (i0 < 0) continue;
            Vec3 g0 = g.segment<3>(static_cast<Eigen::Index>(s) * n);
            for (int a = 1; a < S_; ++a) {
                Vec3 ga = g.segment<3>(static_cast<Eigen::Index>(s) * n + 3 * a);
                g0 -= ga;
                gu.row(atom_[static_cast<size_t>(s) * S_ + a]) = ga.transpose();
            }
            gu.row(i0) = g0.transpose();
        }
        Eigen::MatrixXd z = solver_.solve(gu);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(g.size());
        for (int s = 0; s < n_; ++s) {
            const int i0 = atom_[static_cast<size_t>(s) * S_];
            if (i0 < 0) continue;
            out.segment<3>(static_cast<Eigen::Index>(s) * n) = z.row(i0).transpose();
            for (int a = 1; a < S_; ++a)
                out.segment<3>(static_cast<Eigen::Index>(s) * n + 3 * a) =
                    (z.row(atom_[static_cast<size_t>(s) * S_ + a]) - z.row(i0)).transpose();
        }
        return out;
    }

    // s^T P s
    double energy_norm(const Eigen::VectorXd& x) const
    {
        Eigen::MatrixXd u = Eigen::MatrixXd::Zero(na_, 3);
        const int n = 3 * S_;
        for (int s = 0; s < n_; ++s)
            for (int a = 0; a < S_; ++a) {
                const int i = atom_[static_cast<size_t>(s) * S_ + a];
                if (i < 0) continue;
                Vec3 v = x.segment<3>(static_cast<Eigen::Index>(s) * n);
                if (a > 0) v += x.segment<3>(static_cast<Eigen::Index>(s) * n + 3 * a);
                u.row(i) = v.transpose();
            }
        return (u.transpose() * (L_ * u)).trace();
    }

private:
    int S_, n_, na_ = 0;
    std::vector<int> atom_;
    Eigen::SparseMatrix<double> L_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

double max_atom_move(const Eigen::VectorXd& d, int S)
{
    double m = 0;
    const int n = 3 * S;
    for (Eigen::Index s = 0; s < d.size() / n; ++s) {
        Vec3 U = d.segment<3>(s * n);
        m = std::max(m, U.norm());
        for (int a = 1; a < S; ++a) m = std::max(m, (U + d.segment<3>(s * n + 3 * a)).norm());
    }
    return m;
}

} // namespace

Method parse_method(const std::string& s)
{
    if (s == "lbfgs") return Method::LBFGS;
    if (s == "nonlinear-cg" || s == "cg") return Method::NonlinearCG;
    throw usage_error("unknown solver method " + s);
}

RelaxResult relax(const EnergyModel& model, const SolverConfig& cfg, const DisplacementField* initial)
{
    if (!(cfg.force_tol > 0) || cfg.max_iter < 1) throw usage_error("force_tol must be positive and max_iter at least 1");
    const int S = model.species();
    RelaxResult res;
    res.field = initial ? *initial : DisplacementField(model.domain(), S);
    res.field.clamp();
    DisplacementField& f = res.field;

    Eigen::VectorXd g;
    double E = model.energy_gradient(f, g);
    res.trace.push_back(E);
    auto finish = [&](bool ok, const std::string& why) {
        res.energy = E;
        res.final_force_inf = g.cwiseAbs().maxCoeff();
        res.converged = ok;
        res.status = why;
        return res;
    };
    if (g.cwiseAbs().maxCoeff() <= cfg.force_tol) return finish(true, "converged");

    std::unique_ptr<Preconditioner> P;
    if (cfg.precondition) P = std::make_unique<Preconditioner>(model);
    auto precond = [&](const Eigen::VectorXd& v) { return P ? P->solve(v) : v; };

    std::deque<Eigen::VectorXd> Ss, Ys;
    std::deque<double> rhos;
    Eigen::VectorXd d, z_prev, g_prev;
    double gamma = 1.0;
    double cg_t = 1.0;
    int failures = 0;

    for (int it = 1; it <= cfg.max_iter; ++it) {
        // search direction
        if (cfg.method == Method::LBFGS) {
            Eigen::VectorXd q = g;
            std::vector<double> alpha(Ss.size());
            for (int i = static_cast<int>(Ss.size()) - 1; i >= 0; --i) {
                alpha[i] = rhos[i] * Ss[i].dot(q);
                q -= alpha[i] * Ys[i];
            }
            Eigen::VectorXd r = gamma * precond(q);
            for (size_t i = 0; i < Ss.size(); ++i) {
                double beta = rhos[i] * Ys[i].dot(r);
                r += Ss[i] * (alpha[i] - beta);
            }
            d = -r;
        } else {
            Eigen::VectorXd z = precond(g);
            if (z_prev.size() == 0) {
                d = -z;
            } else {
                double beta = std::max(0.0, z.dot(g - g_prev) / z_prev.dot(g_prev));
                d = -z + beta * d;
            }
            z_prev = z;
        }
        double slope = g.dot(d);
        if (!(slope < 0)) {
            Ss.clear();
            Ys.clear();
            rhos.clear();
            z_prev.resize(0);
            d = -precond(g);
            slope = g.dot(d);
        }

        // backtracking Armijo; near round-off, accept steps that reduce the directional derivative
        double t = cfg.method == Method::NonlinearCG ? cg_t : 1.0;
        const double move = max_atom_move(d, S);
        if (t * move > cfg.max_step) t = cfg.max_step / move;
        const double noise = 1e-13 * std::max(1.0, std::abs(E)) + 1e-15 * model.evaluated_sites().size();
        DisplacementField trial = f;
        Eigen::VectorXd gt;
        double Et = 0;
        bool accepted = false;
        int trials = 0;
        for (int k = 0; k < 60; ++k) {
            ++trials;
            trial.x = f.x + t * d;
            try {
                Et = model.energy_gradient(trial, gt);
            } catch (const Error& e) {
                if (e.code() != "DomainEscape") throw;
                t *= cfg.backtrack;
                continue;
            }
            if (Et <= E + cfg.armijo_c * t * slope) {
                accepted = true;
                break;
            }
            if (Et <= E + noise && std::abs(gt.dot(d)) < std::abs(slope)) {
                accepted = true;
                break;
            }
            t *= cfg.backtrack;
        }
        if (!accepted) {
            if (++failures >= 2 || (Ss.empty() && z_prev.size() == 0)) {
                res.iterations = it;
                if (g.cwiseAbs().maxCoeff() <= cfg.force_tol) return finish(true, "converged");
                return finish(false, "line search failed");
            }
            Ss.clear();
            Ys.clear();
            rhos.clear();
            z_prev.resize(0);
            continue;
        }
        failures = 0;
        if (cfg.method == Method::NonlinearCG) {
            // one secant step on the directional derivative, kept if it lowers the energy further
            const double st = gt.dot(d);
            if (slope - st > 0 && std::abs(st) > 0.1 * std::abs(slope)) {
                double t2 = std::min(t * slope / (slope - st), 4.0 * t);
                if (t2 * move > cfg.max_step) t2 = cfg.max_step / move;
                DisplacementField alt = f;
                alt.x = f.x + t2 * d;
                Eigen::VectorXd g2;
                try {
                    const double E2 = model.energy_gradient(alt, g2);
                    if (E2 < Et) {
                        trial = alt;
                        Et = E2;
                        gt = g2;
                        t = t2;
                    }
                } catch (const Error& e) {
                    if (e.code() != "DomainEscape") throw;
                }
            }
            cg_t = 2.0 * t;
        }
        Eigen::VectorXd s = trial.x - f.x, y = gt - g;
        g_prev = g;
        f.x = trial.x;
        E = Et;
        g = gt;
        res.trace.push_back(E);
        res.iterations = it;
        const double sy = s.dot(y);
        if (cfg.method == Method::LBFGS && sy > 0) {
            Ss.push_back(s);
            Ys.push_back(y);
            rhos.push_back(1.0 / sy);
            if (static_cast<int>(Ss.size()) > cfg.history) {
                Ss.pop_front();
                Ys.pop_front();
                rhos.pop_front();
            }
            gamma = P ? P->energy_norm(s) / sy : sy / y.squaredNorm();
        }
        const double finf = g.cwiseAbs().maxCoeff();
        if (cfg.verbose && it % 50 == 0)
            std::cerr << "iter " << it << " E " << E << " |f|inf " << finf << " t " << t << " trials " << trials
                      << "\n";
        if (finf <= cfg.force_tol) return finish(true, "converged");
    }
    return finish(false, "maximum iterations reached");
}

std::vector<RelaxResult> hierarchy_relax(const std::vector<const EnergyModel*>& models, const SolverConfig& cfg)
{
    std::vector<RelaxResult> out;
    for (size_t i = 0; i < models.size(); ++i) {
        if (i > 0 && models[i]->domain().R < models[i - 1]->domain().R)
            throw usage_error("radii must be ascending");
        if (i == 0) {
            out.push_back(relax(*models[i], cfg));
        } else {
            DisplacementField warm = zero_pad(out.back().field, models[i]->domain());
            out.push_back(relax(*models[i], cfg, &warm));
        }
    }
    return out;
}

} // namespace dislo
