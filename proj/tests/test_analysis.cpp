#include "doctest.h"

#include <cmath>
#include <sstream>

#include "dislocore/analysis.hpp"
#include "dislocore/errors.hpp"
#include "dislocore/pipeline.hpp"

using namespace dislo;

namespace {

// |q| = c r^s (log r)^L sampled on the integer square lattice
SiteSeries synthetic(double s, bool log_factor, double c = 3.0)
{
    SiteSeries out;
    for (int i = -120; i <= 120; ++i)
        for (int j = -120; j <= 120; ++j) {
            const double r = std::hypot(i + 0.3, j + 0.1);
            out.r.push_back(r);
            out.q.push_back(c * std::pow(r, s) * (log_factor ? std::log(r) : 1.0));
        }
    return out;
}

} // namespace

TEST_CASE("decay fits recover known exponents")
{
    for (double s : {-1.0, -2.0, -3.0}) {
        SiteSeries a = synthetic(s, false);
        DecayFit f = decay_fit(a.r, a.q, 8, 64, false);
        CHECK(std::abs(f.slope - s) < 0.05);
        CHECK(f.r2 > 0.999);
        CHECK(f.bins.size() >= 5);

        SiteSeries b = synthetic(s, true);
        CHECK(std::abs(decay_fit(b.r, b.q, 8, 64, true).slope - s) < 0.05);
        // without the correction the log factor biases the exponent upward
        CHECK(decay_fit(b.r, b.q, 8, 64, false).slope > s + 0.1);
    }
}

TEST_CASE("decay fit bins are geometric and counted")
{
    SiteSeries a = synthetic(-2, false);
    DecayFit f = decay_fit(a.r, a.q, 10, 50, false, "x");
    for (size_t k = 1; k < f.bins.size(); ++k) CHECK(f.bins[k].r / f.bins[k - 1].r <= 1.3 + 1e-12);
    int n = 0;
    for (double r : a.r) n += (r >= 10 && r < 50);
    int c = 0;
    for (const auto& b : f.bins) c += b.count;
    CHECK(c == n);
    for (const auto& b : f.bins) CHECK(b.max >= b.mean);
}

TEST_CASE("empty windows are rejected")
{
    SiteSeries a = synthetic(-1, false);
    CHECK_THROWS_AS(decay_fit(a.r, a.q, 10, 20, false), Error);     // fewer than 5 annuli
    CHECK_THROWS_AS(decay_fit(a.r, a.q, 200, 400, false), Error);   // no data
    CHECK_THROWS_AS(decay_fit(a.r, a.q, 20, 10, false), Error);
    try {
        decay_fit(a.r, a.q, 10, 20, false);
    } catch (const Error& e) {
        CHECK(e.code() == "EmptyWindow");
    }
}

TEST_CASE("log-log slope of an exact power")
{
    std::vector<double> x{10, 14, 20, 28, 40}, y;
    for (double v : x) y.push_back(2.5 / v);
    CHECK(loglog_slope(x, y) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("window check against the domain")
{
    auto p = make_problem(toy_edge_config());
    Domain d = build_domain(p->ml, p->st, 30.0, p->r_hat);
    const double rc = p->st.max_rho();
    CHECK_NOTHROW(check_window(d, rc, p->r_hat + 1 + rc, 30 - 2 * rc));
    CHECK_THROWS_AS(check_window(d, rc, 1.0, 20.0), Error);
    CHECK_THROWS_AS(check_window(d, rc, 8.0, 30.0), Error);
}

TEST_CASE("convergence study: reference row has zero distance")
{
    auto p = make_problem(toy_edge_config());
    Cell a = make_cell(*p, 10.0), b = make_cell(*p, 12.0), c = make_cell(*p, 15.0);
    std::vector<const EnergyModel*> ms{a.model.get(), b.model.get(), c.model.get()};
    auto rs = hierarchy_relax(ms, SolverConfig{});
    ConvergenceTable t = convergence_study(ms, rs, p->st, 3, 200);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows.back().distance == 0.0);
    CHECK(t.reference_R == 15.0);
    CHECK(t.rows[0].distance > 0);
    CHECK(std::isfinite(t.slope));

    std::ostringstream csv;
    write_convergence_csv(csv, t, "# test\n");
    CHECK(csv.str().find("R,dist,energy") != std::string::npos);
}

TEST_CASE("series on a relaxed toy field")
{
    auto p = make_problem(toy_edge_config());
    Cell c = make_cell(*p, 20.0);
    RelaxResult r = relax(*c.model, SolverConfig{});
    REQUIRE(r.converged);
    SiteSeries du = dtilde_U_series(r.field, p->st);
    SiteSeries e = elastic_strain_series(*c.model);
    CHECK(du.r.size() > 100);
    CHECK(e.r.size() > 100);
    for (double q : du.q) CHECK(std::isfinite(q));
    SiteSeries ps = shift_series(r.field);
    CHECK(static_cast<int>(ps.r.size()) == c.domain->interior_count());
    double pmax = 0;
    for (size_t i = 0; i < ps.q.size(); ++i) pmax = std::max(pmax, ps.q[i]);
    CHECK(pmax > 0);
}

TEST_CASE("decay CSV and plot script")
{
    SiteSeries a = synthetic(-2, false);
    std::vector<DecayFit> fits{decay_fit(a.r, a.q, 8, 64, false, "q2")};
    std::ostringstream csv, plt;
    write_decay_csv(csv, fits, "# provenance\n");
    write_decay_plt(plt, "decay.csv", fits);
    CHECK(csv.str().rfind("# provenance", 0) == 0);
    CHECK(csv.str().find("q2,") != std::string::npos);
    CHECK(plt.str().find("logscale") != std::string::npos);
}
