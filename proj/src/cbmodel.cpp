#include "dislocore/cbmodel.hpp"

#include <cmath>
#include <random>

#include <unsupported/Eigen/FFT>

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

using cplx = std::complex<double>;

Gapsd deformed_gaps(const InteractionStencil& st, const Mat32& F, const std::vector<Vec3>& p)
{
    Gapsd g(3, st.size());
    for (int t = 0; t < st.size(); ++t) {
        const auto& tr = st.triples[t];
        g.col(t) = tr.g0 + F * tr.rho + p[tr.beta] - p[tr.alpha];
        if (g.col(t).norm() > 3.0 * st.r_cut) {
            throw Error("DomainEscape", "deformed gap exceeds three cut-off radii");
        }
    }
    return g;
}

// in-place 2D transform of an N x N row-major array
void fft2(std::vector<cplx>& a, int N, bool inverse)
{
    Eigen::FFT<double> fft;
    std::vector<cplx> in(N), out(N);
    for (int pass = 0; pass < 2; ++pass) {
        for (int r = 0; r < N; ++r) {
            for (int c = 0; c < N; ++c) in[c] = pass == 0 ? a[r * N + c] : a[c * N + r];
            if (inverse) fft.inv(out, in);
            else fft.fwd(out, in);
            for (int c = 0; c < N; ++c) {
                if (pass == 0) a[r * N + c] = out[c];
                else a[c * N + r] = out[c];
            }
        }
    }
}

int wave_number(int i, int N) { return i < N / 2 ? i : i - N; }

std::vector<cplx> to_complex(const Eigen::VectorXd& v)
{
    std::vector<cplx> out(v.size());
    for (int i = 0; i < v.size(); ++i) out[i] = v(i);
    return out;
}

Eigen::VectorXd real_part(const std::vector<cplx>& v)
{
    Eigen::VectorXd out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out(i) = v[i].real();
    return out;
}

// spectral transform of each column
std::vector<std::vector<cplx>> forward(const PeriodicField& f)
{
    std::vector<std::vector<cplx>> out;
    for (int c = 0; c < f.values.cols(); ++c) {
        out.push_back(to_complex(f.values.col(c)));
        fft2(out.back(), f.N, false);
    }
    return out;
}

PeriodicField backward(const std::vector<std::vector<cplx>>& hat, int N)
{
    PeriodicField f;
    f.N = N;
    f.values.resize(N * N, hat.size());
    for (size_t c = 0; c < hat.size(); ++c) {
        auto a = hat[c];
        fft2(a, N, true);
        f.values.col(c) = real_part(a);
    }
    return f;
}

double mean_dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return (a.array() * b.array()).sum() / a.rows();
}

} // namespace

Eigen::MatrixXd cb_jacobian(const InteractionStencil& st)
{
    const int S = st.species;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * st.size(), 6 + 3 * S);
    for (int t = 0; t < st.size(); ++t) {
        const auto& tr = st.triples[t];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 2; ++j) J(3 * t + i, i + 3 * j) = tr.rho(j);
            J(3 * t + i, 6 + 3 * tr.beta + i) += 1.0;
            J(3 * t + i, 6 + 3 * tr.alpha + i) -= 1.0;
        }
    }
    return J;
}

double cb_density(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                  const std::vector<Vec3>& p)
{
    return V.energy(FullView(st), deformed_gaps(st, F, p));
}

Eigen::VectorXd cb_gradient(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                            const std::vector<Vec3>& p)
{
    Gapsd dg;
    V.gradient(FullView(st), deformed_gaps(st, F, p), dg);
    Eigen::Map<const Eigen::VectorXd> d(dg.data(), dg.size());
    return cb_jacobian(st).transpose() * d;
}

double cb_relaxed_density(const SitePotential& V, const InteractionStencil& st, const Mat32& F,
                          std::vector<Vec3>* pout)
{
    const int S = st.species;
    std::vector<Vec3> p(S, Vec3::Zero());
    if (S > 1) {
        const Eigen::MatrixXd J = cb_jacobian(st);
        const Eigen::MatrixXd Jp = J.rightCols(3 * (S - 1));
        FullView fv(st);
        for (int it = 0; it < 50; ++it) {
            Gapsd g = deformed_gaps(st, F, p), dg;
            V.gradient(fv, g, dg);
            Eigen::Map<const Eigen::VectorXd> d(dg.data(), dg.size());
            Eigen::VectorXd grad = Jp.transpose() * d;
            if (grad.norm() < 1e-14 * (1.0 + d.norm())) break;
            // only active columns carry curvature
            std::vector<int> act = V.active(fv, g);
            const int na = static_cast<int>(act.size());
            SiteView sub{&st, act.data(), na};
            Gapsd ga(3, na);
            Eigen::MatrixXd Ja(3 * na, Jp.cols());
            for (int c = 0; c < na; ++c) {
                ga.col(c) = g.col(act[c]);
                Ja.middleRows<3>(3 * c) = Jp.middleRows<3>(3 * act[c]);
            }
            Eigen::MatrixXd H = Ja.transpose() * V.hessian(sub, ga) * Ja;
            Eigen::VectorXd step = H.ldlt().solve(-grad);
            for (int s = 1; s < S; ++s) p[s] += step.segment<3>(3 * (s - 1));
        }
    }
    if (pout) *pout = p;
    return cb_density(V, st, F, p);
}

Eigen::MatrixXd CBDerivatives::shift_response() const
{
    if (species == 1) return Eigen::MatrixXd::Zero(0, 6);
    Eigen::LLT<Eigen::MatrixXd> llt(pp);
    if (llt.info() != Eigen::Success) {
        throw Error("SingularShiftHessian", "shift Hessian is not positive definite");
    }
    return -llt.solve(Fp.transpose());
}

CBDerivatives cb_derivatives(const SitePotential& V, const InteractionStencil& st)
{
    CBDerivatives cbd;
    cbd.species = st.species;
    FullView fv(st);
    Gapsd g0 = reference_gaps(st);
    cbd.Hg = V.hessian(fv, g0);
    cbd.active = V.active(fv, g0);
    const Eigen::MatrixXd J = cb_jacobian(st);
    const Eigen::MatrixXd W = J.transpose() * cbd.Hg * J;
    const int ns = cbd.nshift();
    cbd.FF = W.topLeftCorner<6, 6>();
    cbd.Fp = W.block(0, 9, 6, ns);
    cbd.pp = W.block(9, 9, ns, ns);
    if (ns > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cbd.pp);
        if (es.eigenvalues()(0) <= 1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
            throw Error("SingularShiftHessian", "shift Hessian is not positive definite");
        }
    }
    return cbd;
}

Mat3 ElasticTensor::acoustic(const Vec2& n) const
{
    Mat3 A = Mat3::Zero();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 2; ++j)
                for (int l = 0; l < 2; ++l) A(i, k) += (*this)(i, j, k, l) * n(j) * n(l);
    return A;
}

double ElasticTensor::legendre_hadamard(int samples) const
{
    double m = 1e300;
    for (int s = 0; s < samples; ++s) {
        double th = M_PI * s / samples;
        Mat3 A = acoustic(Vec2(std::cos(th), std::sin(th)));
        Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (A + A.transpose()));
        m = std::min(m, es.eigenvalues()(0));
    }
    return m;
}

ElasticTensor elastic_tensor(const CBDerivatives& cbd)
{
    ElasticTensor C;
    C.C = cbd.FF;
    if (cbd.species > 1) C.C += cbd.Fp * cbd.shift_response();
    return C;
}

DynamicalMatrix::DynamicalMatrix(const SitePotential& V, const InteractionStencil& st) : st_(&st)
{
    FullView fv(st);
    Gapsd g0 = reference_gaps(st);
    active_ = V.active(fv, g0);
    Eigen::MatrixXd H = V.hessian(fv, g0);
    const int na = static_cast<int>(active_.size());
    Hact_.resize(3 * na, 3 * na);
    for (int a = 0; a < na; ++a)
        for (int b = 0; b < na; ++b) Hact_.block<3, 3>(3 * a, 3 * b) = H.block<3, 3>(3 * active_[a], 3 * active_[b]);
}

Eigen::MatrixXcd DynamicalMatrix::difference_symbol(const Vec2& xi, const std::vector<int>& cols) const
{
    const int n = static_cast<int>(cols.size());
    Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(3 * n, dim());
    for (int c = 0; c < n; ++c) {
        const auto& tr = st_->triples[cols[c]];
        const double th = 2.0 * M_PI * (xi(0) * tr.m(0) + xi(1) * tr.m(1));
        const cplx ph(std::cos(th), std::sin(th));
        for (int i = 0; i < 3; ++i) {
            B(3 * c + i, i) = ph - 1.0;
            if (tr.beta > 0) B(3 * c + i, 3 * tr.beta + i) += ph;
            if (tr.alpha > 0) B(3 * c + i, 3 * tr.alpha + i) -= 1.0;
        }
    }
    return B;
}

Eigen::MatrixXcd DynamicalMatrix::operator()(const Vec2& xi) const
{
    Eigen::MatrixXcd B = difference_symbol(xi, active_);
    Eigen::MatrixXcd M = B.adjoint() * Hact_.cast<cplx>() * B;
    return 0.5 * (M + M.adjoint());
}

Eigen::MatrixXcd DynamicalMatrix::a1_symbol(const Vec2& xi) const
{
    std::vector<int> all(st_->size());
    for (int t = 0; t < st_->size(); ++t) all[t] = t;
    Eigen::MatrixXcd B = difference_symbol(xi, all);
    Eigen::MatrixXcd M = B.adjoint() * B;
    return 0.5 * (M + M.adjoint());
}

Eigen::MatrixXd DynamicalMatrix::apply_periodic(int N, const Eigen::MatrixXd& v) const
{
    const int S = st_->species;
    const int na = static_cast<int>(active_.size());
    auto idx = [N](int i, int j) { return ((i % N + N) % N) * N + ((j % N + N) % N); };
    // forces on u_gamma = U + p_gamma
    Eigen::MatrixXd fu = Eigen::MatrixXd::Zero(N * N, 3 * S);
    auto u = [&](int site, int a) -> Vec3 {
        Vec3 x = v.row(site).segment<3>(0).transpose();
        if (a > 0) x += v.row(site).segment<3>(3 * a).transpose();
        return x;
    };
    Eigen::VectorXd D(3 * na);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const int s0 = idx(i, j);
            for (int c = 0; c < na; ++c) {
                const auto& tr = st_->triples[active_[c]];
                D.segment<3>(3 * c) = u(idx(i + tr.m(0), j + tr.m(1)), tr.beta) - u(s0, tr.alpha);
            }
            Eigen::VectorXd w = Hact_ * D;
            for (int c = 0; c < na; ++c) {
                const auto& tr = st_->triples[active_[c]];
                const int s1 = idx(i + tr.m(0), j + tr.m(1));
                fu.row(s1).segment<3>(3 * tr.beta) += w.segment<3>(3 * c).transpose();
                fu.row(s0).segment<3>(3 * tr.alpha) -= w.segment<3>(3 * c).transpose();
            }
        }
    Eigen::MatrixXd out(N * N, dim());
    out.leftCols<3>().setZero();
    for (int g = 0; g < S; ++g) out.leftCols<3>() += fu.middleCols<3>(3 * g);
    for (int g = 1; g < S; ++g) out.middleCols<3>(3 * g) = fu.middleCols<3>(3 * g);
    return out;
}

double DynamicalMatrix::quadratic_form(int N, const Eigen::MatrixXd& v) const
{
    return (v.array() * apply_periodic(N, v).array()).sum();
}

StabilityReport stability_values(const DynamicalMatrix& H, int grid_n)
{
    if (grid_n < 8) throw usage_error("stability grid must be at least 8");
    StabilityReport rep;
    rep.grid = grid_n;
    rep.min_normalized = 1e300;
    rep.h00_at_zero = H(Vec2::Zero()).topLeftCorner<3, 3>().cwiseAbs().maxCoeff();
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            if (i == 0 && j == 0) continue;
            Vec2 xi(double(i) / grid_n, double(j) / grid_n);
            Eigen::MatrixXcd A = H.a1_symbol(xi);
            Eigen::LLT<Eigen::MatrixXcd> llt(A);
            Eigen::MatrixXcd Li = llt.matrixL().solve(Eigen::MatrixXcd::Identity(A.rows(), A.cols()));
            Eigen::MatrixXcd M = Li * H(xi) * Li.adjoint();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (M + M.adjoint()), Eigen::EigenvaluesOnly);
            double lo = es.eigenvalues()(0);
            if (lo < rep.min_normalized) {
                rep.min_normalized = lo;
                rep.argmin = xi;
            }
        }
    return rep;
}

StabilityReport stability_scan(const DynamicalMatrix& H, int grid_n)
{
    StabilityReport rep = stability_values(H, grid_n);
    if (rep.min_normalized < 0) {
        throw Error("UnstablePotential", "negative normalized eigenvalue " + std::to_string(rep.min_normalized)
                                             + " at xi = (" + std::to_string(rep.argmin(0)) + ", "
                                             + std::to_string(rep.argmin(1)) + ")");
    }
    return rep;
}

GreenSupercell greens_supercell(const DynamicalMatrix& H, int N)
{
    if (N < 2 || (N & (N - 1)) != 0) throw usage_error("supercell size must be a power of two");
    const int d = H.dim();
    std::vector<std::vector<cplx>> comp(d * d, std::vector<cplx>(static_cast<size_t>(N) * N));
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            Vec2 xi(double(i) / N, double(j) / N);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H(xi));
            const auto& ev = es.eigenvalues();
            const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
            int zero = 0;
            Eigen::MatrixXcd Hinv = Eigen::MatrixXcd::Zero(d, d);
            for (int k = 0; k < d; ++k) {
                if (std::abs(ev(k)) < tol) {
                    ++zero;
                    continue;
                }
                Hinv += es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint() / ev(k);
            }
            const int expected = (i == 0 && j == 0) ? 3 : 0;
            if (zero != expected) {
                throw Error("SingularMode", "unexpected zero mode at xi = (" + std::to_string(xi(0)) + ", "
                                                + std::to_string(xi(1)) + ")");
            }
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) comp[a * d + b][static_cast<size_t>(i) * N + j] = Hinv(a, b);
        }
    GreenSupercell G;
    G.N = N;
    G.dim = d;
    G.G.assign(static_cast<size_t>(N) * N, Eigen::MatrixXd::Zero(d, d));
    for (int c = 0; c < d * d; ++c) {
        fft2(comp[c], N, true);
        for (size_t s = 0; s < comp[c].size(); ++s) G.G[s](c / d, c % d) = comp[c][s].real();
    }
    return G;
}

Eigen::MatrixXd PeriodicField::gradient() const
{
    auto hat = forward(*this);
    std::vector<std::vector<cplx>> out;
    for (const auto& h : hat)
        for (int d = 0; d < 2; ++d) {
            std::vector<cplx> g(h.size());
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) {
                    // the Nyquist row carries no derivative for real fields
                    int k = wave_number(d == 0 ? i : j, N);
                    if (2 * std::abs(k) == N) k = 0;
                    g[i * N + j] = h[i * N + j] * cplx(0.0, 2.0 * M_PI * k);
                }
            out.push_back(g);
        }
    return backward(out, N).values;
}

PeriodicField trig_field(int N, int components, int modes, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    std::uniform_int_distribution<int> wave(-3, 3);
    PeriodicField f;
    f.N = N;
    f.values = Eigen::MatrixXd::Zero(N * N, components);
    for (int c = 0; c < components; ++c)
        for (int m = 0; m < modes; ++m) {
            int k1 = wave(rng), k2 = wave(rng);
            if (k1 == 0 && k2 == 0) k1 = 1;
            double a = amp(rng), b = amp(rng);
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j) {
                    double th = 2.0 * M_PI * (k1 * i + k2 * j) / N;
                    f.values(i * N + j, c) += a * std::cos(th) + b * std::sin(th);
                }
        }
    return f;
}

void manufacture_standard(const CBDerivatives& cbd, const ElasticTensor& C, const PeriodicField& U,
                          PeriodicField& p, PeriodicField& f)
{
    const int N = U.N;
    Eigen::MatrixXd G = U.gradient();   // column i*2 + d
    Eigen::MatrixXd g(N * N, 6);         // vec(grad U), i + 3 d
    for (int i = 0; i < 3; ++i)
        for (int d = 0; d < 2; ++d) g.col(i + 3 * d) = G.col(2 * i + d);
    p.N = N;
    p.values = g * cbd.shift_response().transpose();
    PeriodicField sigma;
    sigma.N = N;
    sigma.values = g * C.C.transpose();
    Eigen::MatrixXd ds = sigma.gradient();   // column 2 * (i + 3 j) + d
    f.N = N;
    f.values = Eigen::MatrixXd::Zero(N * N, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) f.values.col(i) -= ds.col(2 * (i + 3 * j) + j);
}

void solve_mixed(const CBDerivatives& cbd, const PeriodicField& f, PeriodicField& U, PeriodicField& p)
{
    const int N = f.N;
    const int ns = cbd.nshift();
    auto fh = forward(f);
    std::vector<std::vector<cplx>> Uh(3, std::vector<cplx>(N * N)), ph(ns, std::vector<cplx>(N * N));
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const int s = i * N + j;
            int k1 = wave_number(i, N), k2 = wave_number(j, N);
            if (2 * std::abs(k1) == N || 2 * std::abs(k2) == N || (k1 == 0 && k2 == 0)) continue;
            Vec2 k = 2.0 * M_PI * Vec2(k1, k2);
            Eigen::Matrix<double, 6, 3> K = Eigen::Matrix<double, 6, 3>::Zero();
            for (int a = 0; a < 3; ++a)
                for (int d = 0; d < 2; ++d) K(a + 3 * d, a) = k(d);
            const cplx I(0.0, 1.0);
            Eigen::MatrixXcd M(3 + ns, 3 + ns);
            M.topLeftCorner(3, 3) = (K.transpose() * cbd.FF * K).cast<cplx>();
            if (ns > 0) {
                M.topRightCorner(3, ns) = -I * (K.transpose() * cbd.Fp).cast<cplx>();
                M.bottomLeftCorner(ns, 3) = I * (cbd.Fp.transpose() * K).cast<cplx>();
                M.bottomRightCorner(ns, ns) = cbd.pp.cast<cplx>();
            }
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(3 + ns);
            for (int a = 0; a < 3; ++a) rhs(a) = fh[a][s];
            Eigen::VectorXcd x = M.partialPivLu().solve(rhs);
            for (int a = 0; a < 3; ++a) Uh[a][s] = x(a);
            for (int a = 0; a < ns; ++a) ph[a][s] = x(3 + a);
        }
    U = backward(Uh, N);
    p = backward(ph, N);
    if (ns == 0) p.values.resize(N * N, 0);
}

EquivalenceResult cb_equivalence_check(const CBDerivatives& cbd, const ElasticTensor& C,
                                       const PeriodicField& U, const PeriodicField& p,
                                       const PeriodicField& f, int tests, unsigned seed)
{
    const int N = U.N;
    const int ns = cbd.nshift();
    Eigen::MatrixXd G = U.gradient();
    Eigen::MatrixXd g(N * N, 6);
    for (int i = 0; i < 3; ++i)
        for (int d = 0; d < 2; ++d) g.col(i + 3 * d) = G.col(2 * i + d);
    Eigen::MatrixXd P = ns > 0 ? p.values : Eigen::MatrixXd::Zero(N * N, 0);

    EquivalenceResult r;
    // mixed form against random test pairs
    Eigen::MatrixXd sig = g * cbd.FF.transpose();
    Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(N * N, ns);
    if (ns > 0) {
        sig += P * cbd.Fp.transpose();
        tau = g * cbd.Fp + P * cbd.pp.transpose();
    }
    for (int t = 0; t < tests; ++t) {
        PeriodicField V = trig_field(N, 3, 4, seed + 17 * t);
        PeriodicField q = trig_field(N, std::max(ns, 1), 4, seed + 17 * t + 5);
        Eigen::MatrixXd GV = V.gradient();
        Eigen::MatrixXd gv(N * N, 6);
        for (int i = 0; i < 3; ++i)
            for (int d = 0; d < 2; ++d) gv.col(i + 3 * d) = GV.col(2 * i + d);
        double a = mean_dot(sig, gv);
        double b = ns > 0 ? mean_dot(tau, q.values.leftCols(ns)) : 0.0;
        double c = mean_dot(f.values, V.values);
        double scale = (sig.array() * gv.array()).abs().sum() / (N * N)
                       + (ns > 0 ? (tau.array() * q.values.leftCols(ns).array()).abs().sum() / (N * N) : 0.0)
                       + (f.values.array() * V.values.array()).abs().sum() / (N * N);
        r.mixed = std::max(r.mixed, std::abs(a + b - c) / scale);
    }

    // strong form: -div(C grad U) = f and the shift equation
    PeriodicField sigma;
    sigma.N = N;
    sigma.values = g * C.C.transpose();
    Eigen::MatrixXd ds = sigma.gradient();
    Eigen::MatrixXd res = f.values;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) res.col(i) += ds.col(2 * (i + 3 * j) + j);
    double s1 = res.cwiseAbs().maxCoeff() / std::max(f.values.cwiseAbs().maxCoeff(), 1e-300);
    double s2 = 0.0;
    if (ns > 0) {
        Eigen::MatrixXd pr = g * cbd.Fp + P * cbd.pp.transpose();
        double scale = (g * cbd.Fp).cwiseAbs().maxCoeff() + (P * cbd.pp.transpose()).cwiseAbs().maxCoeff();
        s2 = scale > 0 ? pr.cwiseAbs().maxCoeff() / scale : 0.0;
    }
    r.standard = std::max(s1, s2);
    return r;
}

} // namespace dislo
