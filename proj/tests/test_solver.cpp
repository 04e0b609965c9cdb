#include "doctest.h"

#include <cmath>
#include <random>

#include "dislocore/errors.hpp"
#include "dislocore/pipeline.hpp"
#include "dislocore/solver.hpp"

using namespace dislo;

namespace {

const Problem& toy()
{
    static auto p = make_problem(toy_edge_config());
    return *p;
}

const Problem& silicon()
{
    static auto p = make_problem(silicon_edge_config());
    return *p;
}

// five-point derivative of the energy along one degree of freedom
double fd_force(const EnergyModel& m, const DisplacementField& f, int i, double h)
{
    auto E = [&](double t) {
        DisplacementField a = f;
        a.x(i) += t;
        return m.energy(a);
    };
    return (-E(2 * h) + 8 * E(h) - 8 * E(-h) + E(-2 * h)) / (12 * h);
}

} // namespace

TEST_CASE("no defect: already critical")
{
    const Problem& p = toy();
    Domain d = build_domain(p.ml, p.st, 10.0, p.r_hat);
    EnergyModel m(p.V, p.st, d, Eigen::MatrixXd::Zero(d.size(), 3 * p.st.species), Vec3::Zero());
    RelaxResult r = relax(m, SolverConfig{});
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.field.x.norm() == 0.0);
}

TEST_CASE("silicon edge at R = 20 relaxes below the predictor energy to a critical point")
{
    const Problem& p = silicon();
    Cell c = make_cell(p, 20.0);
    SolverConfig cfg;
    RelaxResult r = relax(*c.model, cfg);
    REQUIRE(r.converged);
    CHECK(r.final_force_inf <= cfg.force_tol);
    CHECK(r.energy < 0.0);
    for (size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1] + 1e-12);

    std::vector<int> dofs;
    for (int s = 0; s < c.domain->size(); ++s)
        if (c.domain->interior[s])
            for (int k = 0; k < 3 * p.st.species; ++k) dofs.push_back(s * 3 * p.st.species + k);
    std::mt19937 rng(17);
    std::uniform_int_distribution<size_t> pick(0, dofs.size() - 1);
    for (int t = 0; t < 10; ++t) CHECK(std::abs(fd_force(*c.model, r.field, dofs[pick(rng)], 2.5e-4)) <= 2 * cfg.force_tol);

    // bitwise identical reruns
    RelaxResult again = relax(*c.model, cfg);
    CHECK(again.trace == r.trace);
}

// the toy core has several local minima, so the comparison uses silicon
TEST_CASE("nonlinear CG and L-BFGS reach the same silicon minimizer")
{
    const Problem& p = silicon();
    Cell c = make_cell(p, 14.0);
    SolverConfig a, b;
    b.method = Method::NonlinearCG;
    b.max_iter = 5000;
    RelaxResult ra = relax(*c.model, a), rb = relax(*c.model, b);
    REQUIRE(ra.converged);
    REQUIRE(rb.converged);
    CHECK(ra.energy == doctest::Approx(rb.energy).epsilon(1e-10));
    CHECK((ra.field.x - rb.field.x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("hierarchy relax warm-starts ascending radii")
{
    const Problem& p = toy();
    Cell c10 = make_cell(p, 10.0), c15 = make_cell(p, 15.0);
    SolverConfig cfg;
    auto rs = hierarchy_relax({c10.model.get(), c15.model.get()}, cfg);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].converged);
    CHECK(rs[1].converged);
    DisplacementField diff = zero_pad(rs[0].field, *c15.domain);
    diff.x -= rs[1].field.x;
    const double dist = a1_norm(diff, p.st);
    CHECK(dist > 0);
    CHECK(std::isfinite(dist));

    auto single = hierarchy_relax({c10.model.get()}, cfg);
    CHECK(single[0].trace == relax(*c10.model, cfg).trace);
    CHECK_THROWS_AS(hierarchy_relax({c15.model.get(), c10.model.get()}, cfg), Error);
}

TEST_CASE("solver configuration is validated")
{
    const Problem& p = toy();
    Cell c = make_cell(p, 10.0);
    SolverConfig cfg;
    cfg.force_tol = 0;
    CHECK_THROWS_AS(relax(*c.model, cfg), Error);
    CHECK(parse_method("lbfgs") == Method::LBFGS);
    CHECK(parse_method("nonlinear-cg") == Method::NonlinearCG);
    CHECK_THROWS_AS(parse_method("newton"), Error);
}

TEST_CASE("max iterations returns the best iterate unconverged")
{
    const Problem& p = toy();
    Cell c = make_cell(p, 12.0);
    SolverConfig cfg;
    cfg.max_iter = 2;
    RelaxResult r = relax(*c.model, cfg);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 2);
    CHECK(r.energy <= r.trace.front());
}
