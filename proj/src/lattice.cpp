#include "dislocore/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include "json.hpp"

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

constexpr int kSearch = 16;

Vec3 reduce_into_cell(const Mat3& cell, const Vec3& x)
{
    Vec3 f = cell.lu().solve(x);
    for (int i = 0; i < 3; ++i) {
        f(i) -= std::floor(f(i) + 1e-12);
    }
    return cell * f;
}

bool is_lattice_vector(const Mat3& cell, const Vec3& v, double tol)
{
    Vec3 f = cell.lu().solve(v);
    return (f - f.array().round().matrix()).cwiseAbs().maxCoeff() < tol;
}

double wrap(double x, double period)
{
    double y = std::fmod(x, period);
    if (y < 0) y += period;
    if (period - y < 1e-10) y = 0.0;
    return y;
}

} // namespace

void MultilatticeSpec::validate()
{
    if (!(cell.determinant() > 0)) {
        throw Error("InvalidCell", "cell matrix must have positive determinant");
    }
    if (shifts.empty()) {
        throw Error("InvalidCell", "at least one species is required");
    }
    Vec3 origin = shifts[0];
    for (auto& p : shifts) {
        p = reduce_into_cell(cell, p - origin);
    }
    if (labels.size() != shifts.size()) {
        labels.resize(shifts.size(), "X");
    }
}

MultilatticeSpec silicon_spec()
{
    MultilatticeSpec s;
    s.cell << 0.0, 0.5, 0.5,
              0.5, 0.0, 0.5,
              0.5, 0.5, 0.0;
    s.shifts = {Vec3::Zero(), Vec3(0.25, 0.25, 0.25)};
    s.labels = {"Si", "Si"};
    s.lattice_constant = 5.431;
    s.validate();
    return s;
}

MultilatticeSpec toy_spec()
{
    MultilatticeSpec s;
    s.cell = Vec3(1.0, 1.0, 4.0).asDiagonal();
    s.shifts = {Vec3::Zero(), Vec3(0.5, 0.5, 0.0)};
    s.labels = {"A", "B"};
    s.validate();
    return s;
}

MultilatticeSpec fcc_spec()
{
    MultilatticeSpec s;
    s.cell << 0.0, 0.5, 0.5,
              0.5, 0.0, 0.5,
              0.5, 0.5, 0.0;
    s.shifts = {Vec3::Zero()};
    s.labels = {"X"};
    s.validate();
    return s;
}

MultilatticeSpec load_crystal(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open crystal file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw io_error("cannot parse crystal file " + path + ": " + e.what());
    }
    MultilatticeSpec s;
    try {
        auto rows = j.at("cell");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                // rows of the file are Bravais vectors
                s.cell(c, r) = rows.at(r).at(c).get<double>();
            }
        }
        for (auto& p : j.at("shifts")) {
            s.shifts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
        }
        if (j.contains("labels")) {
            for (auto& l : j["labels"]) s.labels.push_back(l.get<std::string>());
        }
        s.lattice_constant = j.value("lattice_constant", 1.0);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed crystal file " + path + ": " + e.what());
    }
    s.validate();
    return s;
}

DislocationFrame build_frame(const MultilatticeSpec& spec, const Vec3& burgers_crystal,
                             const Vec3& line_crystal, const Vec2& core)
{
    if (line_crystal.norm() < 1e-12) {
        throw Error("DegenerateFrame", "line direction is zero");
    }
    if (!is_lattice_vector(spec.cell, burgers_crystal, 1e-10)) {
        throw Error("NotALatticeVector", "Burgers vector is not a lattice vector");
    }
    const Vec3 t = line_crystal.normalized();

    DislocationFrame fr;
    double best = 1e300;
    for (int i = -kSearch; i <= kSearch; ++i)
        for (int j = -kSearch; j <= kSearch; ++j)
            for (int k = -kSearch; k <= kSearch; ++k) {
                Vec3 v = spec.cell * Vec3(i, j, k);
                double n = v.norm();
                if (n < 1e-12 || v.dot(t) <= 0) continue;
                if (v.cross(t).norm() > 1e-10 * n) continue;
                if (n < best - 1e-12) {
                    best = n;
                    fr.line_vector = v;
                }
            }
    if (best > 1e299) {
        throw Error("PeriodSearchFailed", "no lattice vector along the line direction");
    }
    fr.line_period = best;

    Vec3 bperp = burgers_crystal - burgers_crystal.dot(t) * t;
    Vec3 e1;
    if (bperp.norm() < 1e-10) {
        fr.screw = true;
        // any lattice direction normal to the line
        double shortest = 1e300;
        for (int i = -4; i <= 4; ++i)
            for (int j = -4; j <= 4; ++j)
                for (int k = -4; k <= 4; ++k) {
                    Vec3 v = spec.cell * Vec3(i, j, k);
                    double n = v.norm();
                    if (n < 1e-12 || std::abs(v.dot(t)) > 1e-10 * n) continue;
                    if (n < shortest - 1e-12) {
                        shortest = n;
                        e1 = v / n;
                    }
                }
    } else {
        e1 = bperp.normalized();
    }
    Vec3 e2 = t.cross(e1);
    fr.rotation.row(0) = e1.transpose();
    fr.rotation.row(1) = e2.transpose();
    fr.rotation.row(2) = t.transpose();
    fr.burgers = fr.rotation * burgers_crystal;
    fr.burgers(1) = 0.0;
    fr.core = core;
    return fr;
}

double ProjectedMultilattice::distance_to_lattice(const Vec2& x) const
{
    Vec2 f = A.lu().solve(x);
    double best = 1e300;
    for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j) {
            Vec2i n(static_cast<int>(std::floor(f(0))) + i, static_cast<int>(std::floor(f(1))) + j);
            best = std::min(best, (site(n) - x).norm());
        }
    return best;
}

ProjectedMultilattice project(const MultilatticeSpec& spec, const DislocationFrame& frame)
{
    ProjectedMultilattice ml;
    ml.parent = spec;
    ml.frame = frame;
    const Mat3& Q = frame.rotation;
    const double period = frame.line_period;
    const double area = spec.cell.determinant() / period;

    // projected lattice vectors with their 3D representatives
    std::vector<std::pair<Vec2, Vec3>> cand;
    const int K = 8;
    for (int i = -K; i <= K; ++i)
        for (int j = -K; j <= K; ++j)
            for (int k = -K; k <= K; ++k) {
                Vec3 v = Q * (spec.cell * Vec3(i, j, k));
                v(2) = wrap(v(2), period);
                Vec2 p = v.head<2>();
                if (p.norm() < 1e-9) continue;
                cand.emplace_back(p, v);
            }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        double na = a.first.squaredNorm(), nb = b.first.squaredNorm();
        if (std::abs(na - nb) > 1e-12) return na < nb;
        if (std::abs(a.first(0) - b.first(0)) > 1e-12) return a.first(0) > b.first(0);
        return a.first(1) > b.first(1);
    });
    if (cand.empty()) {
        throw Error("PeriodSearchFailed", "projection produced no lattice vectors");
    }
    Vec2 a1 = cand.front().first;
    Vec3 l1 = cand.front().second;
    bool found = false;
    Vec2 a2;
    Vec3 l2;
    for (const auto& c : cand) {
        double cr = a1(0) * c.first(1) - a1(1) * c.first(0);
        if (std::abs(cr) > 1e-9) {
            a2 = c.first;
            l2 = c.second;
            found = true;
            break;
        }
    }
    if (!found) {
        throw Error("PeriodSearchFailed", "projected lattice is degenerate");
    }
    if (a1(0) * a2(1) - a1(1) * a2(0) < 0) {
        a2 = -a2;
        l2 = -l2;
        l2(2) = wrap(l2(2), period);
    }
    ml.A.col(0) = a1;
    ml.A.col(1) = a2;
    ml.lift.col(0) = l1;
    ml.lift.col(1) = l2;
    if (std::abs(ml.A.determinant() - area) > 1e-8 * area) {
        throw Error("PeriodSearchFailed", "projected cell area does not match volume / period");
    }

    for (int s = 0; s < spec.species(); ++s) {
        Vec3 off = Q * spec.shifts[s];
        off(2) = wrap(off(2), period);
        ml.basis.push_back({off, s});
    }

    Vec2 nb = ml.A.lu().solve(frame.b12());
    Vec2 rn = nb.array().round().matrix();
    ml.burgers_on_lattice = (nb - rn).cwiseAbs().maxCoeff() < 1e-10;
    ml.burgers_index = rn.cast<int>();
    return ml;
}

void place_core(ProjectedMultilattice& ml, const Vec2& offset)
{
    Vec2 c = ml.A * offset;
    if (ml.distance_to_lattice(c) < 0.1) {
        throw Error("CoreOnLattice", "core position is within 0.1 of a lattice site");
    }
    ml.frame.core = c;
}

bool InteractionStencil::cond1() const
{
    for (int a = 0; a < species; ++a) {
        Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
        for (const auto& t : triples) {
            if (t.alpha == a && t.beta == a) M += t.rho * t.rho.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(M);
        if (es.eigenvalues()(0) < 1e-10) return false;
    }
    return true;
}

bool InteractionStencil::cond2() const
{
    for (int a = 0; a < species; ++a)
        for (int b = 0; b < species; ++b) {
            if (a == b) continue;
            bool ok = false;
            for (const auto& t : triples) {
                if (t.alpha == a && t.beta == b && t.m.isZero()) {
                    ok = true;
                    break;
                }
            }
            if (!ok) return false;
        }
    return true;
}

bool InteractionStencil::closed() const
{
    for (int i = 0; i < size(); ++i) {
        int r = triples[i].reverse;
        if (r < 0) return false;
        const auto& t = triples[i];
        const auto& u = triples[r];
        if (u.m != -t.m || u.alpha != t.beta || u.beta != t.alpha) return false;
        if ((u.g0 + t.g0).norm() > 1e-10) return false;
    }
    return true;
}

double InteractionStencil::max_rho() const
{
    double m = 0;
    for (const auto& t : triples) m = std::max(m, t.rho.norm());
    return m;
}

namespace {

struct RawTriple {
    Triple t;
    double len;
};

std::vector<RawTriple> enumerate_triples(const ProjectedMultilattice& ml, double radius)
{
    std::vector<RawTriple> out;
    const double period = ml.frame.line_period;
    Mat2 Ainv = ml.A.inverse();
    int M = static_cast<int>(std::ceil(radius * (Ainv.row(0).norm() + Ainv.row(1).norm()))) + 2;
    for (int a = 0; a < ml.species(); ++a)
        for (int b = 0; b < ml.species(); ++b)
            for (int i = -M; i <= M; ++i)
                for (int j = -M; j <= M; ++j) {
                    Vec2i m(i, j);
                    Vec3 base = ml.lift_site(m) + ml.basis[b].offset - ml.basis[a].offset;
                    if (base.head<2>().norm() > radius + 1e-12) continue;
                    int K = static_cast<int>(std::ceil(radius / period)) + 2;
                    for (int k = -K; k <= K; ++k) {
                        Vec3 g = base + Vec3(0, 0, k * period);
                        double n = g.norm();
                        if (n < 1e-10 || n > radius + 1e-12) continue;
                        Triple t;
                        t.m = m;
                        t.rho = ml.site(m);
                        t.alpha = a;
                        t.beta = b;
                        t.g0 = g;
                        out.push_back({t, n});
                    }
                }
    return out;
}

} // namespace

InteractionStencil build_stencil(const ProjectedMultilattice& ml, double r_cut)
{
    if (!(r_cut > 0)) {
        throw usage_error("r_cut must be positive");
    }
    InteractionStencil st;
    st.r_cut = r_cut;
    st.species = ml.species();
    for (auto& r : enumerate_triples(ml, r_cut)) st.triples.push_back(r.t);

    auto key = [](const Triple& t) {
        return std::make_tuple(t.alpha, t.beta, t.m(0), t.m(1), std::lround(t.g0(2) * 1e8));
    };
    auto contains = [&](const Triple& t) {
        for (const auto& u : st.triples)
            if (key(u) == key(t)) return true;
        return false;
    };

    if (!st.cond1()) {
        // zero-coupling same-species entries up to twice the range
        for (auto& r : enumerate_triples(ml, 2.0 * r_cut)) {
            if (r.t.alpha != r.t.beta || r.len <= r_cut + 1e-12) continue;
            r.t.coupled = false;
            st.triples.push_back(r.t);
        }
        if (!st.cond1()) {
            throw Error("Cond1Violation", "same-species offsets do not span the plane");
        }
    }
    if (!st.cond2()) {
        const double period = ml.frame.line_period;
        for (int a = 0; a < st.species; ++a)
            for (int b = 0; b < st.species; ++b) {
                if (a == b) continue;
                Vec3 base = ml.basis[b].offset - ml.basis[a].offset;
                // shortest lift along the line
                double k = std::round(-base(2) / period);
                Triple t;
                t.m = Vec2i::Zero();
                t.rho = Vec2::Zero();
                t.alpha = a;
                t.beta = b;
                t.g0 = base + Vec3(0, 0, k * period);
                t.coupled = false;
                bool present = false;
                for (const auto& u : st.triples)
                    if (u.alpha == a && u.beta == b && u.m.isZero()) present = true;
                if (!present && !contains(t)) st.triples.push_back(t);
            }
    }

    std::sort(st.triples.begin(), st.triples.end(), [&](const Triple& x, const Triple& y) {
        return key(x) < key(y);
    });
    for (int i = 0; i < st.size(); ++i) {
        const auto& t = st.triples[i];
        for (int j = 0; j < st.size(); ++j) {
            const auto& u = st.triples[j];
            if (u.alpha == t.beta && u.beta == t.alpha && u.m == -t.m && (u.g0 + t.g0).norm() < 1e-9) {
                st.triples[i].reverse = j;
                break;
            }
        }
    }
    st.by_source.assign(st.species, {});
    for (int i = 0; i < st.size(); ++i) st.by_source[st.triples[i].alpha].push_back(i);
    return st;
}

int Domain::find(const Vec2i& n) const
{
    int i = n(0) - lo(0), j = n(1) - lo(1);
    if (i < 0 || j < 0 || i >= width || j >= height) return -1;
    return grid[static_cast<size_t>(i) * height + j];
}

int Domain::interior_count() const
{
    return static_cast<int>(std::count(interior.begin(), interior.end(), 1));
}

Neighbour slip_neighbour(const Domain& d, int site, const Vec2i& m)
{
    if (!d.gamma[site]) return plain_neighbour(d, site, m);
    const Vec2i n = d.index[site] + m;
    const double y = (d.A * n.cast<double>())(1);
    const int k = (d.below(site) ? 1 : 0) - (y < d.core(1) ? 1 : 0);
    return {d.find(n + k * d.burgers_index), k};
}

bool in_gamma_region(const Vec2& x, const Vec2& core, double r_hat, double b1)
{
    return x(0) >= core(0) && (x - core).norm() > r_hat + b1;
}

Domain build_domain(const ProjectedMultilattice& ml, const InteractionStencil& st, double R,
                    double r_hat)
{
    const double rc = st.max_rho();
    const double b = ml.frame.b12().norm();
    if (!(R > r_hat + 2 * rc)) {
        throw Error("DomainTooSmall", "R must exceed r_hat + 2 r_cut");
    }
    Domain d;
    d.R = R;
    d.r_hat = r_hat;
    d.core = ml.frame.core;
    d.burgers_index = ml.burgers_index;
    d.b12 = ml.frame.b12();
    d.r_store = R + 2.0 * (rc + b);
    d.A = ml.A;

    Mat2 Ainv = ml.A.inverse();
    Vec2 fc = Ainv * d.core;
    int M = static_cast<int>(std::ceil(d.r_store * (Ainv.row(0).norm() + Ainv.row(1).norm()))) + 2;
    struct Item {
        double r;
        Vec2i n;
    };
    std::vector<Item> items;
    for (int i = static_cast<int>(fc(0)) - M; i <= static_cast<int>(fc(0)) + M; ++i)
        for (int j = static_cast<int>(fc(1)) - M; j <= static_cast<int>(fc(1)) + M; ++j) {
            Vec2i n(i, j);
            double r = (ml.site(n) - d.core).norm();
            if (r <= d.r_store) items.push_back({r, n});
        }
    // by distance, ties lexicographic, so smaller domains are prefixes of larger ones
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& c) {
        if (a.r != c.r) return a.r < c.r;
        if (a.n(0) != c.n(0)) return a.n(0) < c.n(0);
        return a.n(1) < c.n(1);
    });
    const double b1 = std::abs(ml.frame.burgers(0));
    Vec2i lo = items.front().n, hi = items.front().n;
    for (const auto& it : items) {
        d.index.push_back(it.n);
        Vec2 x = ml.site(it.n);
        d.sites.push_back(x);
        d.interior.push_back(it.r <= R ? 1 : 0);
        d.gamma.push_back(in_gamma_region(x, d.core, r_hat, b1) ? 1 : 0);
        lo = lo.cwiseMin(it.n);
        hi = hi.cwiseMax(it.n);
    }
    d.lo = lo;
    d.width = hi(0) - lo(0) + 1;
    d.height = hi(1) - lo(1) + 1;
    d.grid.assign(static_cast<size_t>(d.width) * d.height, -1);
    for (int s = 0; s < d.size(); ++s) {
        Vec2i q = d.index[s] - lo;
        d.grid[static_cast<size_t>(q(0)) * d.height + q(1)] = s;
    }
    if (d.interior_count() < 10) {
        throw Error("DomainTooSmall", "fewer than 10 interior sites");
    }
    return d;
}

} // namespace dislo
