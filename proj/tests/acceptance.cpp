// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if a blocking criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dislocore/analysis.hpp"
#include "dislocore/cbmodel.hpp"
#include "dislocore/errors.hpp"
#include "dislocore/pipeline.hpp"

using namespace dislo;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_s;   // runtime limit, part of the criterion
    bool warning_only;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

bool in(double v, double lo, double hi) { return v >= lo && v <= hi; }

const Problem& silicon()
{
    static auto p = make_problem(silicon_edge_config());
    return *p;
}

const Problem& toy()
{
    static auto p = make_problem(toy_edge_config());
    return *p;
}

DisplacementField random_field(const Domain& d, int S, double amp, std::mt19937& rng)
{
    DisplacementField f(d, S);
    std::uniform_real_distribution<double> u(-amp, amp);
    for (Eigen::Index i = 0; i < f.x.size(); ++i) f.x(i) = u(rng);
    f.clamp();
    return f;
}

Outcome gradient_consistency()
{
    const Problem& p = toy();
    Cell c = make_cell(p, 15.0);
    const int S = p.st.species;
    std::mt19937 rng(11);
    DisplacementField f = random_field(*c.domain, S, 0.03, rng);
    Eigen::VectorXd g;
    c.model->energy_gradient(f, g);
    std::vector<int> dofs;
    for (int s = 0; s < c.domain->size(); ++s)
        if (c.domain->interior[s])
            for (int k = 0; k < 3 * S; ++k) dofs.push_back(s * 3 * S + k);
    std::uniform_int_distribution<size_t> pick(0, dofs.size() - 1);
    const double h = 1e-6, floor = 1e-3 * g.cwiseAbs().maxCoeff();
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
        const int i = dofs[pick(rng)];
        DisplacementField a = f, b = f;
        a.x(i) += h;
        b.x(i) -= h;
        const double fd = (c.model->energy(a) - c.model->energy(b)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(i)) / std::max(std::abs(g(i)), floor));
    }
    return {worst <= 1e-6, "max relative error " + fmt("%.2e", worst) + " (limit 1e-6)"};
}

Outcome slip_identity()
{
    const Problem& p = silicon();
    Domain d = build_domain(p.ml, p.st, 8.0, p.r_hat);
    const int S = p.st.species;
    std::vector<int> gam, off;
    for (int s = 0; s < d.size(); ++s)
        if (d.interior[s]) (d.gamma[s] ? gam : off).push_back(s);
    std::mt19937 rng(5);
    std::normal_distribution<double> nd(0, 1);
    long checks[2] = {0, 0};
    double worst = 0;
    for (int field = 0; field < 1000; ++field) {
        DisplacementField f(d, S);
        for (Eigen::Index i = 0; i < f.x.size(); ++i) f.x(i) = nd(rng);
        Eigen::MatrixXd w = f.atoms();
        Eigen::MatrixXd Sw = slip_S(d, w);
        Eigen::MatrixXd U(d.size(), 3);
        std::vector<Eigen::MatrixXd> P(S, Eigen::MatrixXd(d.size(), 3));
        for (int s = 0; s < d.size(); ++s) {
            U.row(s) = f.U(s).transpose();
            for (int a = 0; a < S; ++a) P[a].row(s) = f.p(s, a).transpose();
        }
        for (int branch = 0; branch < 2; ++branch) {
            const auto& pool = branch ? gam : off;
            std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
            for (int k = 0; k < 4; ++k) {
                const int s = pool[pick(rng)];
                int at = s;
                if (d.gamma[s] && d.below(s)) at = d.find(d.index[s] + d.burgers_index);
                const Eigen::MatrixXd& src = d.gamma[s] ? Sw : w;
                for (const auto& t : p.st.triples) {
                    int nb = at < 0 ? -1 : d.find(d.index[at] + t.m);
                    if (nb < 0 || src.row(nb).hasNaN() || src.row(at).hasNaN()) continue;
                    Vec3 direct = (src.row(nb).segment<3>(3 * t.beta) - src.row(at).segment<3>(3 * t.alpha)).transpose();
                    Vec3 ident = dtilde_rho(d, U, s, t.m) + dtilde_rho(d, P[t.beta], s, t.m) + f.p(s, t.beta) -
                                 f.p(s, t.alpha);
                    worst = std::max({worst, (direct - ident).norm(), (dtilde(f, s, t) - direct).norm()});
                    ++checks[branch];
                }
            }
        }
    }
    const bool ok = worst <= 1e-13 && checks[0] > 0 && checks[1] > 0;
    return {ok, "max deviation " + fmt("%.2e", worst) + " over " + std::to_string(checks[1]) + " slipped and " +
                    std::to_string(checks[0]) + " plain differences (limit 1e-13)"};
}

Outcome cauchy_born_equivalence()
{
    const Problem& p = toy();
    const CBDerivatives& cbd = p.cbd;
    const ElasticTensor& C = p.C;
    auto U = trig_field(32, 3, 5, 21);
    PeriodicField sp, f;
    manufacture_standard(cbd, C, U, sp, f);
    auto r = cb_equivalence_check(cbd, C, U, sp, f, 10, 3);

    const double h = 2e-4;
    Mat6 Cfd;
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
            auto w = [&](double sa, double sb) {
                Eigen::Matrix<double, 6, 1> x = Eigen::Matrix<double, 6, 1>::Zero();
                x(a) += sa * h;
                x(b) += sb * h;
                return cb_relaxed_density(*p.V, p.st, unflatten(x));
            };
            Cfd(a, b) = (w(1, 1) - w(1, -1) - w(-1, 1) + w(-1, -1)) / (4 * h * h);
        }
    const double schur = (C.C - Cfd).cwiseAbs().maxCoeff() / Cfd.cwiseAbs().maxCoeff();
    return {r.mixed <= 1e-8 && schur <= 1e-6, "mixed residual " + fmt("%.2e", r.mixed) + " (limit 1e-8), Schur vs FD " +
                                                   fmt("%.2e", schur) + " (limit 1e-6)"};
}

Outcome stability()
{
    const Problem& p = silicon();
    StabilityReport rep = stability_values(DynamicalMatrix(*p.V, p.st), 32);
    return {rep.min_normalized > 0 && rep.h00_at_zero == 0.0,
            "min normalized eigenvalue " + fmt("%.4e", rep.min_normalized) + ", |H00(0)| " + fmt("%.1e", rep.h00_at_zero)};
}

// shared R = 80 silicon cell and its relaxation
struct Large {
    Cell cell;
    RelaxResult relaxed;
    bool relaxed_done = false;
};

Large& large()
{
    static Large L{make_cell(silicon(), 80.0), {}, false};
    return L;
}

const RelaxResult& large_relaxed()
{
    Large& L = large();
    if (!L.relaxed_done) {
        L.relaxed = relax(*L.cell.model, SolverConfig{});
        L.relaxed_done = true;
    }
    return L.relaxed;
}

const DecayWindow kWindow{12.0, 60.0};

Outcome net_force_cancellation()
{
    auto fits = residual_decay_report(*large().cell.model, kWindow);
    const double net = fits[0].slope, sp = fits[1].slope;
    const bool ok = in(net, -3.5, -2.5) && in(sp, -2.5, -1.6) && sp - net >= 0.5;
    return {ok, "net-force slope " + fmt("%.3f", net) + " (in [-3.5, -2.5]), per-species slope " + fmt("%.3f", sp) +
                    " (in [-2.5, -1.6]), separation " + fmt("%.3f", sp - net) + " (>= 0.5)"};
}

Outcome predictor_rates()
{
    auto fits = predictor_rate_report(*large().cell.model, kWindow);
    const double e = fits[0].slope, de = fits[1].slope;
    return {in(e, -1.3, -0.8) && in(de, -2.4, -1.7),
            "|e| slope " + fmt("%.3f", e) + " (in [-1.3, -0.8]), |D e| slope " + fmt("%.3f", de) + " (in [-2.4, -1.7])"};
}

std::vector<DecayFit> strain_fits;

Outcome corrector_decay()
{
    const RelaxResult& r = large_relaxed();
    if (!r.converged) return {false, "relaxation did not converge: " + r.status};
    strain_fits = strain_decay_report(*large().cell.model, r, kWindow);
    const double du = strain_fits[0].slope, pp = strain_fits[1].slope;
    return {in(du, -2.5, -1.6) && in(pp, -2.5, -1.6), "log-corrected |DU| slope " + fmt("%.3f", du) + ", |p| slope " +
                                                          fmt("%.3f", pp) + " (each in [-2.5, -1.6]), " +
                                                          std::to_string(r.iterations) + " iterations"};
}

double convergence_slope(const Problem& p)
{
    std::vector<Cell> cells;
    std::vector<const EnergyModel*> ms;
    for (double R : {10.0, 14.0, 20.0, 28.0, 40.0, 56.0}) {
        cells.push_back(make_cell(p, R));
        ms.push_back(cells.back().model.get());
    }
    auto rs = hierarchy_relax(ms, SolverConfig{});
    for (const auto& r : rs)
        if (!r.converged) throw Error("NotConverged", r.status);
    return convergence_study(ms, rs, p.st).slope;
}

double cb_slope = std::nan("");

Outcome self_convergence()
{
    const Problem& p = silicon();
    std::vector<Cell> cells;
    std::vector<const EnergyModel*> ms;
    for (double R : {10.0, 14.0, 20.0, 28.0, 40.0, 56.0}) {
        cells.push_back(make_cell(p, R));
        ms.push_back(cells.back().model.get());
    }
    auto rs = hierarchy_relax(ms, SolverConfig{});
    for (const auto& r : rs)
        if (!r.converged) return {false, "a level did not converge: " + r.status};
    ConvergenceTable t = convergence_study(ms, rs, p.st);
    cb_slope = t.slope;
    std::string rows;
    for (const auto& row : t.rows) rows += " " + fmt("%.0f", row.R) + ":" + fmt("%.3e", row.distance);
    return {in(t.slope, -1.4, -0.75), "slope " + fmt("%.3f", t.slope) + " +- " + fmt("%.3f", t.slope_halfwidth) +
                                          " (in [-1.4, -0.75]); distances" + rows};
}

Outcome green_decay()
{
    const Problem& p = silicon();
    DynamicalMatrix H(*p.V, p.st);
    GreenSupercell G = greens_supercell(H, 256);
    auto fits = green_decay_report(G, p.ml.A, 8.0, 64.0);
    const double a = fits[0].slope, b = fits[1].slope, c = fits[2].slope;
    const bool ok = std::abs(a + 1) <= 0.4 && std::abs(b + 1) <= 0.4 && std::abs(c + 2) <= 0.4;
    return {ok, "|D G00| " + fmt("%.3f", a) + " (target -1), |G0p| " + fmt("%.3f", b) + " (target -1), |Gpp| " +
                    fmt("%.3f", c) + " (target -2), tolerance 0.4"};
}

Outcome synthetic_fits()
{
    double worst = 0;
    for (double s : {-1.0, -2.0, -3.0})
        for (bool lg : {false, true}) {
            std::vector<double> r, q;
            for (int i = -120; i <= 120; ++i)
                for (int j = -120; j <= 120; ++j) {
                    const double x = std::hypot(i + 0.3, j + 0.1);
                    r.push_back(x);
                    q.push_back(std::pow(x, s) * (lg ? std::log(x) : 1.0));
                }
            worst = std::max(worst, std::abs(decay_fit(r, q, 8, 64, lg).slope - s));
        }
    return {worst <= 0.05, "max slope error " + fmt("%.4f", worst) + " (limit 0.05)"};
}

Outcome second_differences()
{
    if (strain_fits.empty()) corrector_decay();
    if (strain_fits.empty()) return {false, "no converged relaxation"};
    const double s = strain_fits[2].slope;
    return {in(s, -3.6, -2.5), "log-corrected |DDU| slope " + fmt("%.3f", s) + " (in [-3.6, -2.5])"};
}

// not a numbered criterion: table-constant predictors converge at a lower order
Outcome isotropic_shallower()
{
    if (std::isnan(cb_slope)) return {false, "no Cauchy-Born slope"};
    ProblemConfig cfg = silicon_edge_config();
    cfg.mode = TensorSource::Isotropic;
    auto p = make_problem(cfg);
    const double iso = convergence_slope(*p);
    return {iso > cb_slope, "isotropic predictor slope " + fmt("%.3f", iso) + " vs Cauchy-Born " + fmt("%.3f", cb_slope)};
}

} // namespace

int main(int argc, char** argv)
{
    // optional copy of the report, since ctest hides the output of passing tests
    std::FILE* report = argc > 1 ? std::fopen(argv[1], "w") : nullptr;
    std::vector<Criterion> cs{
        {1, "gradient consistency", 10, false, gradient_consistency},
        {2, "slip identity", 5, false, slip_identity},
        {3, "Cauchy-Born equivalence", 10, false, cauchy_born_equivalence},
        {4, "stability certificate", 30, false, stability},
        {5, "net-force cancellation", 300, false, net_force_cancellation},
        {6, "predictor rates", 300, false, predictor_rates},
        {7, "decay of the relaxed corrector", 1800, false, corrector_decay},
        {8, "self-convergence", 2700, false, self_convergence},
        {9, "Green's block decay", 300, false, green_decay},
        {10, "synthetic fit calibration", 5, false, synthetic_fits},
        {11, "second differences", 1800, true, second_differences},
        {0, "isotropic predictor converges more slowly", 2700, true, isotropic_shallower},
    };
    int failed = 0;
    for (const auto& c : cs) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool on_time = sec <= c.budget_s;
        const bool pass = o.pass && on_time;
        const char* tag = pass ? "PASS" : (c.warning_only ? "WARN" : "FAIL");
        const std::string label = c.id ? fmt("%2.0f", c.id) : std::string("--");
        for (std::FILE* out : {stdout, report})
            if (out)
                std::fprintf(out, "[%s] %s %s: %s; %.1f s (limit %.0f s)\n", tag, label.c_str(), c.name.c_str(),
                             o.detail.c_str(), sec, c.budget_s);
        std::fflush(stdout);
        if (!pass && !c.warning_only) ++failed;
    }
    std::printf("%d blocking criteria failed\n", failed);
    if (report) {
        std::fprintf(report, "%d blocking criteria failed\n", failed);
        std::fclose(report);
    }
    return failed == 0 ? 0 : 1;
}
