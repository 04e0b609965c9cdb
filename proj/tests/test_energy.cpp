#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "dislocore/errors.hpp"
#include "dislocore/pipeline.hpp"

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

DisplacementField random_field(const Domain& d, int S, double amp, unsigned seed)
{
    DisplacementField f(d, S);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    for (Eigen::Index i = 0; i < f.x.size(); ++i) f.x(i) = u(rng);
    f.clamp();
    return f;
}

std::vector<int> interior_dofs(const Domain& d, int S)
{
    std::vector<int> out;
    for (int s = 0; s < d.size(); ++s)
        if (d.interior[s])
            for (int k = 0; k < 3 * S; ++k) out.push_back(s * 3 * S + k);
    return out;
}

} // namespace

TEST_CASE("energy vanishes at the predictor and forces match central differences")
{
    const Problem& p = toy();
    Cell c = make_cell(p, 15.0);
    const int S = p.st.species;
    DisplacementField zero(*c.domain, S);
    CHECK(c.model->energy(zero) == 0.0);

    DisplacementField f = random_field(*c.domain, S, 0.03, 11);
    Eigen::VectorXd g;
    c.model->energy_gradient(f, g);
    std::vector<int> dofs = interior_dofs(*c.domain, S);
    std::mt19937 rng(3);
    std::uniform_int_distribution<size_t> pick(0, dofs.size() - 1);
    double worst = 0;
    const double h = 1e-6;
    for (int t = 0; t < 50; ++t) {
        const int i = dofs[pick(rng)];
        DisplacementField a = f, b = f;
        a.x(i) += h;
        b.x(i) -= h;
        const double fd = (c.model->energy(a) - c.model->energy(b)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g(i)) / std::max(std::abs(g(i)), 1e-3 * g.cwiseAbs().maxCoeff()));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("single-site perturbation: energy change is first order in the force")
{
    const Problem& p = toy();
    Cell c = make_cell(p, 12.0);
    const int S = p.st.species;
    DisplacementField f = random_field(*c.domain, S, 0.02, 5);
    Eigen::VectorXd g;
    const double E0 = c.model->energy_gradient(f, g);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(f.x.size());
    const int site = 7;
    REQUIRE(c.domain->interior[site]);
    delta.segment(site * 3 * S, 3 * S) = Eigen::VectorXd::LinSpaced(3 * S, -1.0, 1.0);
    std::vector<double> hs, rs;
    for (double h : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
        DisplacementField a = f;
        a.x += h * delta;
        rs.push_back(std::abs(c.model->energy(a) - E0 - h * g.dot(delta)));
        hs.push_back(h);
    }
    // remainder is quadratic
    for (size_t k = 1; k < rs.size(); ++k) CHECK(std::log2(rs[k - 1] / rs[k]) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("no defect: zero forces, translation invariance of site energies and clamping")
{
    const Problem& p = toy();
    Domain d = build_domain(p.ml, p.st, 10.0, p.r_hat);
    const int S = p.st.species;
    EnergyModel m(p.V, p.st, d, Eigen::MatrixXd::Zero(d.size(), 3 * S), Vec3::Zero());
    DisplacementField zero(d, S);
    ForceField F = m.forces(zero);
    CHECK(F.dof.cwiseAbs().maxCoeff() < 1e-12);
    for (int s = 0; s < d.size(); ++s)
        if (d.interior[s]) CHECK(F.net(s).norm() < 1e-12);

    // a constant shift of every atom, clamped ring included, leaves all gaps and the energy unchanged
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d.size(), 3 * S);
    for (int a = 0; a < S; ++a) c.block(0, 3 * a, d.size(), 3).rowwise() = Eigen::RowVector3d(0.3, -0.2, 0.7);
    EnergyModel shifted(p.V, p.st, d, c, Vec3::Zero());
    CHECK(shifted.energy(zero) == 0.0);

    DisplacementField f = random_field(d, S, 0.05, 2);
    ForceField Ff = m.forces(f);
    for (int s = 0; s < d.size(); ++s)
        if (!d.interior[s]) {
            CHECK(Ff.species_force.row(s).norm() == 0.0);
            CHECK(Ff.dof.segment(s * 3 * S, 3 * S).norm() == 0.0);
        }
}

TEST_CASE("slip relabelings")
{
    const Problem& p = silicon();
    Domain d = build_domain(p.ml, p.st, 12.0, p.r_hat);
    std::mt19937 rng(1);
    std::normal_distribution<double> n(0, 1);
    Eigen::MatrixXd v(d.size(), 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = n(rng);
    Eigen::MatrixXd rs = slip_R(d, slip_S(d, v));
    int checked = 0;
    for (int s = 0; s < d.size(); ++s) {
        if (rs.row(s).hasNaN()) continue;
        CHECK((rs.row(s) - v.row(s)).norm() == 0.0);
        ++checked;
    }
    CHECK(checked > d.size() / 2);

    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(d.size(), 6, 0.25);
    const Vec3 b = p.ml.frame.burgers;
    Eigen::MatrixXd s0 = slip_S0(d, c, b);
    for (int s = 0; s < d.size(); ++s) {
        if (s0.row(s).hasNaN()) continue;
        Eigen::RowVectorXd expect = c.row(s);
        if (d.below(s))
            for (int a = 0; a < 2; ++a) expect.segment<3>(3 * a) -= b.transpose();
        CHECK((s0.row(s) - expect).norm() == 0.0);
    }

    // S moves an indicator at l below the cut to l + b12
    int src = -1;
    for (int s = 0; s < d.size(); ++s)
        if (d.below(s) && d.interior[s]) {
            src = s;
            break;
        }
    REQUIRE(src >= 0);
    Eigen::MatrixXd ind = Eigen::MatrixXd::Zero(d.size(), 1);
    ind(src, 0) = 1.0;
    Eigen::MatrixXd Sind = slip_S(d, ind);
    const int dst = d.find(d.index[src] + d.burgers_index);
    REQUIRE(dst >= 0);
    CHECK(Sind(dst, 0) == 1.0);
    CHECK(Sind.array().isNaN().select(0.0, Sind.array()).sum() == 1.0);
}

TEST_CASE("D-tilde through the relabelings equals the displacement-shift identity")
{
    const Problem& p = silicon();
    Domain d = build_domain(p.ml, p.st, 10.0, p.r_hat);
    const int S = p.st.species;
    std::mt19937 rng(8);
    int in_gamma = 0, off_gamma = 0;
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        DisplacementField f = random_field(d, S, 1.0, 100 + trial);
        f.x = f.x.unaryExpr([&](double) { return std::normal_distribution<double>(0, 1)(rng); });
        Eigen::MatrixXd w = f.atoms();
        Eigen::MatrixXd Sw = slip_S(d, w);
        Eigen::MatrixXd U(d.size(), 3);
        std::vector<Eigen::MatrixXd> P(S, Eigen::MatrixXd(d.size(), 3));
        for (int s = 0; s < d.size(); ++s) {
            U.row(s) = f.U(s).transpose();
            for (int a = 0; a < S; ++a) P[a].row(s) = f.p(s, a).transpose();
        }
        for (int s = 0; s < d.size(); ++s) {
            if (!d.interior[s]) continue;
            for (const auto& t : p.st.triples) {
                // R D S u(l): evaluate D S u at l, or at l + b12 below the cut
                int at = s;
                if (d.gamma[s] && d.below(s)) at = d.find(d.index[s] + d.burgers_index);
                const Eigen::MatrixXd& src = d.gamma[s] ? Sw : w;
                int nb = d.find(d.index[at] + t.m);
                if (at < 0 || nb < 0 || src.row(nb).hasNaN() || src.row(at).hasNaN()) continue;
                Vec3 direct = (src.row(nb).segment<3>(3 * t.beta) - src.row(at).segment<3>(3 * t.alpha)).transpose();
                Vec3 ident = dtilde_rho(d, U, s, t.m) + dtilde_rho(d, P[t.beta], s, t.m) + f.p(s, t.beta) - f.p(s, t.alpha);
                worst = std::max({worst, (direct - ident).norm(), (dtilde(f, s, t) - direct).norm()});
                (d.gamma[s] ? in_gamma : off_gamma)++;
            }
        }
    }
    CHECK(in_gamma > 1000);
    CHECK(off_gamma > 1000);
    CHECK(worst <= 1e-13);
}

TEST_CASE("slip invariance: plain and relabelled site energies agree")
{
    const Problem& p = silicon();
    Cell c = make_cell(p, 16.0);
    const Domain& d = *c.domain;
    const int S = p.st.species;
    DisplacementField f = random_field(d, S, 0.01, 4);
    std::vector<double> slip = c.model->site_energies(f);
    int compared = 0;
    double worst = 0;
    for (int s = 0; s < d.size(); ++s) {
        if (!d.gamma[s] || !d.interior[s]) continue;
        if (std::abs(d.sites[s](1) - d.core(1)) > 1.6) continue;   // near the cut, where the forms differ
        worst = std::max(worst, std::abs(c.model->plain_site_energy(f, s) - slip[s]));
        ++compared;
    }
    CHECK(compared > 20);
    CHECK(worst < 1e-11);
}

TEST_CASE("a1 seminorm of a single displaced site counts the touching triples")
{
    const Problem& p = toy();
    Domain d = build_domain(p.ml, p.st, 10.0, p.r_hat);
    const int S = p.st.species;
    DisplacementField f(d, S);
    CHECK(a1_norm(f, p.st) == 0.0);
    const int site = 3;
    f.set_U(site, Vec3(1, 0, 0));
    int touching = 0, outgoing = 0;
    for (int s = 0; s < d.size(); ++s)
        for (const auto& t : p.st.triples) {
            int nb = d.find(d.index[s] + t.m);
            if ((s == site) != (nb == site)) ++touching;
            if (s == site && nb != site) ++outgoing;
        }
    CHECK(a1_norm(f, p.st) == doctest::Approx(std::sqrt(double(touching))).epsilon(1e-14));
    CHECK(touching == 2 * outgoing);
    f.x *= 3.0;
    CHECK(a1_norm(f, p.st) == doctest::Approx(3.0 * std::sqrt(double(touching))).epsilon(1e-14));
}

TEST_CASE("net force at the predictor is much smaller than the per-species forces")
{
    const Problem& p = silicon();
    Cell c = make_cell(p, 24.0);
    DisplacementField zero(*c.domain, p.st.species);
    ForceField F = c.model->forces(zero);
    double net = 0, species = 0;
    for (int s = 0; s < c.domain->size(); ++s) {
        const double r = (c.domain->sites[s] - c.domain->core).norm();
        if (r < 14 || r > 18) continue;
        net = std::max(net, F.net(s).norm());
        species = std::max(species, F.on(s, 0).norm());
    }
    CHECK(species > 0);
    CHECK(net < 0.5 * species);
}

TEST_CASE("energies are bitwise identical across thread counts")
{
    const Problem& p = silicon();
    Cell c = make_cell(p, 14.0);
    DisplacementField f = random_field(*c.domain, p.st.species, 0.01, 9);
    c.model->set_threads(1);
    Eigen::VectorXd g1, g3;
    const double e1 = c.model->energy_gradient(f, g1);
    c.model->set_threads(3);
    const double e3 = c.model->energy_gradient(f, g3);
    CHECK(e1 == e3);
    CHECK((g1 - g3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("extended XYZ dump lists every atom")
{
    const Problem& p = toy();
    Cell c = make_cell(p, 10.0);
    DisplacementField f(*c.domain, p.st.species);
    std::ostringstream os;
    write_xyz(os, *c.model, p.ml, f, "test");
    std::istringstream in(os.str());
    int n;
    in >> n;
    CHECK(n == c.domain->size() * p.st.species);
    std::string line;
    int lines = 0;
    std::getline(in, line);
    while (std::getline(in, line)) ++lines;
    CHECK(lines == n + 1);
}

TEST_CASE("misaligned Burgers vector is rejected")
{
    auto spec = silicon_spec();
    auto fr = build_frame(spec, Vec3(-0.5, 0.5, 0.0), Vec3(1, 1, 2));
    auto ml = project(spec, fr);
    CHECK_NOTHROW(check_burgers_alignment(ml));
    ml.frame.burgers(0) += 1e-3;
    CHECK_THROWS_AS(check_burgers_alignment(ml), Error);
}
