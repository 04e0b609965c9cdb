#include "dislocore/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <set>

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

struct LineFit {
    double slope = 0, intercept = 0, r2 = 0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y)
{
    const int n = static_cast<int>(x.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
    return f;
}

std::vector<Vec2i> distinct_offsets(const InteractionStencil& st)
{
    std::set<std::pair<int, int>> seen;
    std::vector<Vec2i> out;
    for (const auto& t : st.triples) {
        if (t.m.isZero()) continue;
        if (seen.insert({t.m(0), t.m(1)}).second) out.push_back(t.m);
    }
    return out;
}

Eigen::MatrixXd column_block(const DisplacementField& f, int alpha)
{
    Eigen::MatrixXd v(f.size(), 3);
    for (int s = 0; s < f.size(); ++s) v.row(s) = (alpha < 0 ? f.U(s) : f.p(s, alpha)).transpose();
    return v;
}

double radius(const Domain& d, int s) { return (d.sites[s] - d.core).norm(); }

// sqrt of the sum over offsets of |D~_m v(l)|^2, interior sites with every neighbour stored
SiteSeries difference_series(const Domain& d, const std::vector<Eigen::MatrixXd>& fields,
                             const std::vector<Vec2i>& offsets, int order)
{
    SiteSeries out;
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        double acc = 0;
        bool ok = true;
        for (const auto& v : fields) {
            for (const auto& m : offsets) {
                Neighbour a = slip_neighbour(d, s, m);
                if (a.site < 0) {
                    ok = false;
                    break;
                }
                Eigen::RowVector3d diff = v.row(a.site) - v.row(s);
                if (order == 2) {
                    Neighbour b = slip_neighbour(d, a.site, m);
                    if (b.site < 0) {
                        ok = false;
                        break;
                    }
                    diff = (v.row(b.site) - v.row(a.site)) - diff;
                }
                acc += diff.squaredNorm();
            }
            if (!ok) break;
        }
        if (!ok) continue;
        out.r.push_back(radius(d, s));
        out.q.push_back(std::sqrt(acc));
    }
    return out;
}

DecayFit fit_series(const SiteSeries& s, const DecayWindow& w, bool log_corr, const std::string& name)
{
    return decay_fit(s.r, s.q, w.r_min, w.r_max, log_corr, name);
}

} // namespace

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    std::vector<double> lx, ly;
    for (size_t i = 0; i < x.size(); ++i) {
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    return least_squares(lx, ly).slope;
}

DecayFit decay_fit(const std::vector<double>& r, const std::vector<double>& q, double r_min, double r_max,
                   bool log_correction, const std::string& name, double ratio)
{
    if (!(r_min > 0) || !(r_max > r_min)) throw Error("EmptyWindow", "invalid window for " + name);
    if (log_correction && r_min <= 1.0) throw Error("EmptyWindow", "log-corrected fits need r_min > 1");
    std::vector<double> edges{r_min};
    while (edges.back() < r_max) edges.push_back(std::min(edges.back() * ratio, r_max));
    if (edges.back() - edges[edges.size() - 2] < 1e-9) edges.pop_back();
    const int nb = static_cast<int>(edges.size()) - 1;
    std::vector<double> sum(nb, 0.0), mx(nb, 0.0);
    std::vector<int> cnt(nb, 0);
    for (size_t i = 0; i < r.size(); ++i) {
        if (r[i] < r_min || r[i] >= r_max || !std::isfinite(q[i])) continue;
        int k = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), r[i]) - edges.begin()) - 1;
        k = std::clamp(k, 0, nb - 1);
        const double a = std::abs(q[i]);
        sum[k] += a;
        mx[k] = std::max(mx[k], a);
        ++cnt[k];
    }
    DecayFit f;
    f.name = name;
    f.r_min = r_min;
    f.r_max = r_max;
    f.log_correction = log_correction;
    std::vector<double> x, y, ym;
    for (int k = 0; k < nb; ++k) {
        if (cnt[k] == 0) continue;
        DecayBin b;
        b.r = std::sqrt(edges[k] * edges[k + 1]);
        b.mean = sum[k] / cnt[k];
        b.max = mx[k];
        b.count = cnt[k];
        f.bins.push_back(b);
        if (!(b.mean > 0)) continue;
        const double lc = log_correction ? std::log(std::log(b.r)) : 0.0;
        x.push_back(std::log(b.r));
        y.push_back(std::log(b.mean) - lc);
        ym.push_back(std::log(b.max) - lc);
    }
    if (x.size() < 5) throw Error("EmptyWindow", "fewer than 5 occupied annuli for " + name);
    LineFit lf = least_squares(x, y);
    f.slope = lf.slope;
    f.intercept = lf.intercept;
    f.r2 = lf.r2;
    f.slope_max = least_squares(x, ym).slope;
    if (!std::isfinite(f.slope)) throw Error("EmptyWindow", "non-finite slope for " + name);
    return f;
}

void check_window(const Domain& d, double r_cut, double r_min, double r_max)
{
    const double lo = d.r_hat + std::abs(d.b12(0)) + r_cut;
    const double hi = d.R - 2.0 * r_cut;
    if (r_min < lo - 1e-12 || r_max > hi + 1e-12)
        throw Error("EmptyWindow", "window [" + std::to_string(r_min) + ", " + std::to_string(r_max) +
                                       "] outside the valid annulus [" + std::to_string(lo) + ", " +
                                       std::to_string(hi) + "]");
}

SiteSeries dtilde_U_series(const DisplacementField& f, const InteractionStencil& st)
{
    return difference_series(*f.domain, {column_block(f, -1)}, distinct_offsets(st), 1);
}

SiteSeries second_difference_series(const DisplacementField& f, const InteractionStencil& st)
{
    return difference_series(*f.domain, {column_block(f, -1)}, distinct_offsets(st), 2);
}

SiteSeries shift_difference_series(const DisplacementField& f, const InteractionStencil& st)
{
    std::vector<Eigen::MatrixXd> ps;
    for (int a = 1; a < f.species; ++a) ps.push_back(column_block(f, a));
    return difference_series(*f.domain, ps, distinct_offsets(st), 1);
}

SiteSeries shift_series(const DisplacementField& f)
{
    SiteSeries out;
    const Domain& d = *f.domain;
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        double acc = 0;
        for (int a = 1; a < f.species; ++a) acc += f.p(s, a).squaredNorm();
        out.r.push_back(radius(d, s));
        out.q.push_back(std::sqrt(acc));
    }
    return out;
}

SiteSeries elastic_strain_series(const EnergyModel& m)
{
    SiteSeries out;
    const Domain& d = m.domain();
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        Gapsd e = m.elastic_strain(s);
        if (e.hasNaN()) continue;
        out.r.push_back(radius(d, s));
        out.q.push_back(e.norm());
    }
    return out;
}

SiteSeries strain_difference_series(const EnergyModel& m)
{
    SiteSeries out;
    const Domain& d = m.domain();
    const auto& st = m.stencil();
    const Eigen::MatrixXd& u0 = m.predictor();
    const Vec3 b = m.burgers();
    auto strain = [&](int site, const Triple& t, bool& ok) -> Vec3 {
        Neighbour nb = slip_neighbour(d, site, t.m);
        if (nb.site < 0) {
            ok = false;
            return Vec3::Zero();
        }
        return (u0.row(nb.site).segment<3>(3 * t.beta) - u0.row(site).segment<3>(3 * t.alpha)).transpose() + nb.k * b;
    };
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        double acc = 0;
        bool ok = true;
        for (const auto& t : st.triples) {
            Neighbour back = slip_neighbour(d, s, -t.m);
            if (back.site < 0) {
                ok = false;
                break;
            }
            Vec3 diff = strain(back.site, t, ok) - strain(s, t, ok);
            if (!ok) break;
            acc += diff.squaredNorm();
        }
        if (!ok) continue;
        out.r.push_back(radius(d, s));
        out.q.push_back(std::sqrt(acc));
    }
    return out;
}

SiteSeries predictor_dtilde_series(const EnergyModel& m)
{
    SiteSeries out;
    const Domain& d = m.domain();
    const Eigen::MatrixXd& u0 = m.predictor();
    const Vec3 b = m.burgers();
    const std::vector<Vec2i> offsets = distinct_offsets(m.stencil());
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        double acc = 0;
        bool ok = true;
        for (const auto& off : offsets) {
            Neighbour nb = slip_neighbour(d, s, off);
            if (nb.site < 0) {
                ok = false;
                break;
            }
            acc += ((u0.row(nb.site).head<3>() - u0.row(s).head<3>()).transpose() + nb.k * b).squaredNorm();
        }
        if (!ok) continue;
        out.r.push_back(radius(d, s));
        out.q.push_back(std::sqrt(acc));
    }
    return out;
}

SiteSeries net_force_series(const EnergyModel& m, const ForceField& F)
{
    SiteSeries out;
    const Domain& d = m.domain();
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        out.r.push_back(radius(d, s));
        out.q.push_back(F.net(s).norm());
    }
    return out;
}

SiteSeries species_force_series(const EnergyModel& m, const ForceField& F)
{
    SiteSeries out;
    const Domain& d = m.domain();
    for (int s = 0; s < d.size(); ++s) {
        if (!d.interior[s]) continue;
        double mx = 0;
        for (int a = 0; a < m.species(); ++a) mx = std::max(mx, F.on(s, a).norm());
        out.r.push_back(radius(d, s));
        out.q.push_back(mx);
    }
    return out;
}

std::vector<DecayFit> strain_decay_report(const EnergyModel& m, const RelaxResult& res, const DecayWindow& w)
{
    if (!res.converged) throw Error("NotConverged", "decay fits need a converged relaxation");
    if (m.domain().R < 40) throw usage_error("decay fits need R >= 40");
    check_window(m.domain(), m.stencil().max_rho(), w.r_min, w.r_max);
    std::vector<DecayFit> out;
    out.push_back(fit_series(dtilde_U_series(res.field, m.stencil()), w, true, "DU"));
    out.push_back(fit_series(shift_series(res.field), w, true, "p"));
    out.push_back(fit_series(second_difference_series(res.field, m.stencil()), w, true, "DDU"));
    out.push_back(fit_series(shift_difference_series(res.field, m.stencil()), w, true, "Dp"));
    return out;
}

std::vector<DecayFit> residual_decay_report(const EnergyModel& m, const DecayWindow& w)
{
    check_window(m.domain(), m.stencil().max_rho(), w.r_min, w.r_max);
    DisplacementField zero(m.domain(), m.species());
    ForceField F = m.forces(zero);
    std::vector<DecayFit> out;
    out.push_back(fit_series(net_force_series(m, F), w, false, "net_force"));
    out.push_back(fit_series(species_force_series(m, F), w, false, "species_force"));
    return out;
}

std::vector<DecayFit> predictor_rate_report(const EnergyModel& m, const DecayWindow& w)
{
    check_window(m.domain(), m.stencil().max_rho(), w.r_min, w.r_max);
    std::vector<DecayFit> out;
    out.push_back(fit_series(elastic_strain_series(m), w, false, "e"));
    out.push_back(fit_series(strain_difference_series(m), w, false, "De"));
    return out;
}

ConvergenceTable convergence_study(const std::vector<const EnergyModel*>& models,
                                   const std::vector<RelaxResult>& results, const InteractionStencil& st,
                                   unsigned seed, int resamples)
{
    if (models.size() != results.size() || models.size() < 2) throw usage_error("convergence study needs matching levels");
    for (const auto& r : results)
        if (!r.converged) throw Error("NotConverged", "a level of the convergence study did not converge");
    ConvergenceTable t;
    const EnergyModel& ref = *models.back();
    const DisplacementField& uref = results.back().field;
    t.reference_R = ref.domain().R;
    for (size_t i = 0; i < models.size(); ++i) {
        DisplacementField diff = zero_pad(results[i].field, ref.domain());
        diff.x -= uref.x;
        t.rows.push_back({models[i]->domain().R, i + 1 == models.size() ? 0.0 : a1_norm(diff, st), results[i].energy});
    }
    std::vector<double> R, D;
    for (size_t i = 0; i + 1 < t.rows.size(); ++i) {
        R.push_back(t.rows[i].R);
        D.push_back(t.rows[i].distance);
    }
    if (R.size() >= 2) {
        t.slope = loglog_slope(R, D);
        std::mt19937 rng(seed);
        std::uniform_int_distribution<size_t> pick(0, R.size() - 1);
        std::vector<double> slopes;
        for (int b = 0; b < resamples; ++b) {
            std::vector<double> r, d;
            for (size_t k = 0; k < R.size(); ++k) {
                size_t j = pick(rng);
                r.push_back(R[j]);
                d.push_back(D[j]);
            }
            if (*std::min_element(r.begin(), r.end()) == *std::max_element(r.begin(), r.end())) continue;
            slopes.push_back(loglog_slope(r, d));
        }
        if (!slopes.empty()) {
            std::sort(slopes.begin(), slopes.end());
            auto q = [&](double p) { return slopes[static_cast<size_t>(p * (slopes.size() - 1))]; };
            t.slope_halfwidth = 0.5 * (q(0.975) - q(0.025));
        }
    }
    return t;
}

std::vector<DecayFit> green_decay_report(const GreenSupercell& G, const Mat2& A, double r_min, double r_max)
{
    const int N = G.N, dim = G.dim, np = dim - 3;
    const double spacing = std::sqrt(std::abs(A.determinant()));
    Vec2i rho = Vec2i(1, 0);
    double best = std::numeric_limits<double>::infinity();
    for (int i = -3; i <= 3; ++i)
        for (int j = -3; j <= 3; ++j) {
            if (i == 0 && j == 0) continue;
            double l = (A * Vec2(i, j)).norm();
            if (l < best - 1e-12) {
                best = l;
                rho = Vec2i(i, j);
            }
        }
    SiteSeries dg, up, pp;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            if (i == 0 && j == 0) continue;
            double r = std::numeric_limits<double>::infinity();
            for (int a = -1; a <= 1; ++a)
                for (int b = -1; b <= 1; ++b) r = std::min(r, (A * Vec2(i + a * N, j + b * N)).norm());
            r /= spacing;
            const Eigen::MatrixXd& g = G.at(i, j);
            const Eigen::MatrixXd& gn = G.at(i + rho(0), j + rho(1));
            dg.r.push_back(r);
            dg.q.push_back((gn.topLeftCorner(3, 3) - g.topLeftCorner(3, 3)).norm());
            if (np > 0) {
                up.r.push_back(r);
                up.q.push_back(g.topRightCorner(3, np).norm());
                pp.r.push_back(r);
                pp.q.push_back(g.bottomRightCorner(np, np).norm());
            }
        }
    std::vector<DecayFit> out;
    out.push_back(decay_fit(dg.r, dg.q, r_min, r_max, false, "DG00"));
    if (np > 0) {
        out.push_back(decay_fit(up.r, up.q, r_min, r_max, false, "G0p"));
        out.push_back(decay_fit(pp.r, pp.q, r_min, r_max, false, "Gpp"));
    }
    return out;
}

void write_decay_csv(std::ostream& out, const std::vector<DecayFit>& fits, const std::string& provenance)
{
    out << provenance;
    for (const auto& f : fits)
        out << "# fit " << f.name << " slope " << f.slope << " slope_max " << f.slope_max << " r2 " << f.r2
            << " window " << f.r_min << " " << f.r_max << (f.log_correction ? " log" : "") << "\n";
    out << "quantity,r,mean,max,count\n";
    out.precision(12);
    for (const auto& f : fits)
        for (const auto& b : f.bins) out << f.name << "," << b.r << "," << b.mean << "," << b.max << "," << b.count << "\n";
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& t, const std::string& provenance)
{
    out << provenance;
    out << "# reference_R " << t.reference_R << " slope " << t.slope << " halfwidth " << t.slope_halfwidth << "\n";
    out << "R,dist,energy\n";
    out.precision(12);
    for (const auto& r : t.rows) out << r.R << "," << r.distance << "," << r.energy << "\n";
}

void write_decay_plt(std::ostream& out, const std::string& csv, const std::vector<DecayFit>& fits)
{
    out << "set datafile separator ','\nset logscale xy\nset xlabel 'r'\nset ylabel 'annulus mean'\n";
    out << "plot ";
    for (size_t i = 0; i < fits.size(); ++i) {
        if (i) out << ", \\\n     ";
        out << "'< grep \"^" << fits[i].name << ",\" " << csv << "' using 2:3 with linespoints title '" << fits[i].name
            << " (" << fits[i].slope << ")'";
    }
    out << "\npause -1\n";
}

void write_convergence_plt(std::ostream& out, const std::string& csv)
{
    out << "set datafile separator ','\nset logscale xy\nset xlabel 'R'\nset ylabel 'a1 distance'\n";
    out << "plot '" << csv << "' every ::1 using 1:2 with linespoints title 'distance', "
        << "'" << csv << "' every ::1 using 1:(1.0/$1) with lines title 'R^-1'\npause -1\n";
}

} // namespace dislo
