#include "dislocore/predictor.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dislocore/errors.hpp"

namespace dislo {

namespace {

using cplx = std::complex<double>;

int voigt(int i, int j)
{
    if (i == j) return i;
    if (i + j == 3) return 3;   // 1,2
    if (i + j == 2) return 4;   // 0,2
    return 5;                   // 0,1
}

struct StrohRoots {
    Eigen::Vector3cd p;
    Eigen::Matrix3cd a, b;
    double separation = 0.0;
};

StrohRoots stroh_roots(const ElasticTensor& C)
{
    Mat3 Q, R, T;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) {
            Q(i, k) = C(i, 0, k, 0);
            R(i, k) = C(i, 0, k, 1);
            T(i, k) = C(i, 1, k, 1);
        }
    const Mat3 Ti = T.inverse();
    Eigen::Matrix<double, 6, 6> N;
    N.topLeftCorner<3, 3>() = -Ti * R.transpose();
    N.topRightCorner<3, 3>() = Ti;
    N.bottomLeftCorner<3, 3>() = R * Ti * R.transpose() - Q;
    N.bottomRightCorner<3, 3>() = -R * Ti;
    Eigen::EigenSolver<Eigen::Matrix<double, 6, 6>> es(N);
    StrohRoots out;
    int n = 0;
    for (int k = 0; k < 6 && n < 3; ++k) {
        if (es.eigenvalues()(k).imag() <= 0) continue;
        out.p(n) = es.eigenvalues()(k);
        Eigen::Matrix<cplx, 6, 1> xi = es.eigenvectors().col(k);
        out.a.col(n) = xi.head<3>();
        out.b.col(n) = xi.tail<3>();
        ++n;
    }
    if (n != 3) throw Error("DegenerateSextic", "sextic roots do not split into conjugate pairs");
    out.separation = 1e300;
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) out.separation = std::min(out.separation, std::abs(out.p(i) - out.p(j)));
    return out;
}

} // namespace

double branch_arg(const Vec2& x, const Vec2& core)
{
    double th = std::atan2(x(1) - core(1), x(0) - core(0));
    if (th < 0) th += 2.0 * M_PI;
    return th;
}

TensorSource parse_tensor_source(const std::string& s)
{
    if (s == "cb") return TensorSource::CauchyBorn;
    if (s == "isotropic") return TensorSource::Isotropic;
    if (s == "table") return TensorSource::Table;
    throw usage_error("unknown predictor mode " + s);
}

std::string to_string(TensorSource s)
{
    switch (s) {
    case TensorSource::CauchyBorn: return "cb";
    case TensorSource::Isotropic: return "isotropic";
    case TensorSource::Table: return "table";
    }
    return "cb";
}

Eigen::Matrix<double, 6, 6> read_voigt_table(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw io_error("cannot open elastic table " + path);
    std::vector<double> v;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        for (auto& c : line)
            if (c == ',' || c == ';') c = ' ';
        std::istringstream ls(line);
        double x;
        while (ls >> x) v.push_back(x);
    }
    if (v.size() != 21) throw io_error("elastic table must hold 21 Voigt entries, found " + std::to_string(v.size()));
    Eigen::Matrix<double, 6, 6> M;
    int n = 0;
    for (int i = 0; i < 6; ++i)
        for (int j = i; j < 6; ++j) M(i, j) = M(j, i) = v[n++];
    return M;
}

Eigen::Matrix<double, 6, 6> silicon_voigt_table()
{
    Eigen::Matrix<double, 6, 6> M = Eigen::Matrix<double, 6, 6>::Zero();
    const double c11 = 165.7, c12 = 63.9, c44 = 79.6;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) M(i, j) = i == j ? c11 : c12;
        M(3 + i, 3 + i) = c44;
    }
    return M;
}

ElasticTensor tensor_from_voigt(const Eigen::Matrix<double, 6, 6>& V, const Mat3& Q)
{
    double c[3][3][3][3];
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int cc = 0; cc < 3; ++cc)
                for (int d = 0; d < 3; ++d) c[a][b][cc][d] = V(voigt(a, b), voigt(cc, d));
    ElasticTensor C;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 2; ++l) {
                    double v = 0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            for (int cc = 0; cc < 3; ++cc)
                                for (int d = 0; d < 3; ++d) v += Q(i, a) * Q(j, b) * Q(k, cc) * Q(l, d) * c[a][b][cc][d];
                    C.C(i + 3 * j, k + 3 * l) = v;
                }
    return C;
}

double sextic_root_separation(const ElasticTensor& C) { return stroh_roots(C).separation; }

CLESolution CLESolution::anisotropic(const ElasticTensor& C0, const Vec3& b, const Vec2& core)
{
    CLESolution s;
    s.b_ = b;
    s.core_ = core;
    ElasticTensor C = C0;
    StrohRoots r = stroh_roots(C);
    if (r.separation < 1e-6) {
        std::mt19937 rng(12345);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Mat6 D;
        for (int i = 0; i < 6; ++i)
            for (int j = i; j < 6; ++j) D(i, j) = D(j, i) = u(rng);
        C.C += 1e-8 * C.C.cwiseAbs().maxCoeff() * D;
        r = stroh_roots(C);
        if (r.separation < 1e-6) throw Error("DegenerateSextic", "Stroh roots coincide");
        s.perturbed_ = true;
        std::cerr << "warning: degenerate sextic, elastic tensor perturbed by 1e-8\n";
    }
    s.p_ = r.p;
    for (int k = 0; k < 3; ++k) {
        cplx n = std::sqrt(2.0 * (r.a.col(k).transpose() * r.b.col(k))(0, 0));
        Eigen::Vector3cd a = r.a.col(k) / n, bb = r.b.col(k) / n;
        cplx q = (bb.transpose() * b.cast<cplx>())(0, 0);
        s.coef_.col(k) = a * q / M_PI;
    }
    return s;
}

CLESolution CLESolution::isotropic(double nu, const Vec3& b, const Vec2& core)
{
    if (!(nu > -1.0 && nu < 0.5)) throw usage_error("Poisson ratio must lie in (-1, 0.5)");
    CLESolution s;
    s.b_ = b;
    s.core_ = core;
    s.iso_ = true;
    s.nu_ = nu;
    s.source_ = TensorSource::Isotropic;
    return s;
}

Vec3 CLESolution::value(const Vec2& x) const
{
    const Vec2 d = x - core_;
    const double th = branch_arg(x, core_);
    if (iso_) {
        const double r2 = d.squaredNorm();
        const double k = 1.0 / (4.0 * (1.0 - nu_));
        Vec3 u;
        u(0) = b_(0) / (2 * M_PI) * (th + std::sin(2 * th) * k);
        u(1) = -b_(0) / (2 * M_PI) * ((1 - 2 * nu_) * k * std::log(r2) + std::cos(2 * th) * k);
        u(2) = b_(2) * th / (2 * M_PI);
        return u;
    }
    Vec3 u = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        cplx z(d(0) + p_(k).real() * d(1), p_(k).imag() * d(1));
        double a = std::atan2(z.imag(), z.real());
        if (a < 0) a += 2 * M_PI;
        cplx lz(std::log(std::abs(z)), a);
        u += (coef_.col(k) * lz).imag();
    }
    return u;
}

Mat32 CLESolution::gradient(const Vec2& x) const
{
    const Vec2 d = x - core_;
    Mat32 G;
    if (iso_) {
        const double X = d(0), Y = d(1);
        const double r2 = d.squaredNorm(), r4 = r2 * r2;
        const double k = 1.0 / (4.0 * (1.0 - nu_));
        const double c1 = b_(0) / (2 * M_PI), c3 = b_(2) / (2 * M_PI);
        G(0, 0) = c1 * (-Y / r2 + k * 2 * Y * (Y * Y - X * X) / r4);
        G(0, 1) = c1 * (X / r2 + k * 2 * X * (X * X - Y * Y) / r4);
        G(1, 0) = -c1 * ((1 - 2 * nu_) * k * 2 * X / r2 + k * 4 * X * Y * Y / r4);
        G(1, 1) = -c1 * ((1 - 2 * nu_) * k * 2 * Y / r2 - k * 4 * X * X * Y / r4);
        G(2, 0) = -c3 * Y / r2;
        G(2, 1) = c3 * X / r2;
        return G;
    }
    G.setZero();
    for (int k = 0; k < 3; ++k) {
        cplx z(d(0) + p_(k).real() * d(1), p_(k).imag() * d(1));
        G.col(0) += (coef_.col(k) / z).imag();
        G.col(1) += (coef_.col(k) * p_(k) / z).imag();
    }
    return G;
}

CLESolution solve_cle(TensorSource mode, const ElasticTensor& C, const Vec3& b, const Vec2& core, double nu)
{
    if (b.norm() == 0) throw usage_error("Burgers vector is zero");
    if (mode == TensorSource::Isotropic) return CLESolution::isotropic(nu, b, core);
    if (!(C.legendre_hadamard() > 0)) throw Error("UnstablePotential", "elastic tensor is not strongly elliptic");
    CLESolution s = CLESolution::anisotropic(C, b, core);
    s.set_source(mode);
    return s;
}

CoreMap::CoreMap(const Vec2& b12, const Vec2& core, double r_hat) : b12_(b12), core_(core), r_hat_(r_hat)
{
    if (!(r_hat > b12.norm())) throw usage_error("core radius must exceed |b12|");
}

double CoreMap::eta(double t)
{
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

double CoreMap::deta(double t)
{
    if (t <= 0 || t >= 1) return 0.0;
    return 30.0 * t * t * (1.0 - t) * (1.0 - t);
}

Vec2 CoreMap::operator()(const Vec2& x) const
{
    const double r = (x - core_).norm();
    return x - b12_ * eta(r / r_hat_) * branch_arg(x, core_) / (2.0 * M_PI);
}

Mat2 CoreMap::jacobian(const Vec2& x) const
{
    const Vec2 d = x - core_;
    const double r = d.norm();
    if (r < 1e-14) return Mat2::Identity();
    const double th = branch_arg(x, core_);
    const Vec2 grad = deta(r / r_hat_) / r_hat_ * d / r * th / (2 * M_PI)
                      + eta(r / r_hat_) / (2 * M_PI) * Vec2(-d(1), d(0)) / (r * r);
    return Mat2::Identity() - b12_ * grad.transpose();
}

Vec2 CoreMap::inverse(const Vec2& y) const
{
    Vec2 x = y;
    Vec2 res = (*this)(x) - y;
    for (int it = 0; it < 50; ++it) {
        if (res.norm() <= 1e-13 * (1.0 + y.norm())) return x;
        Vec2 dx = -jacobian(x).lu().solve(res);
        double t = 1.0;
        Vec2 xn = x + dx, rn = (*this)(xn) - y;
        for (int k = 0; k < 30 && rn.norm() >= res.norm(); ++k) {
            t *= 0.5;
            xn = x + t * dx;
            rn = (*this)(xn) - y;
        }
        x = xn;
        res = rn;
    }
    if (res.norm() <= 1e-13 * (1.0 + y.norm())) return x;
    throw Error("InversionFailure", "core map inversion did not converge");
}

Eigen::VectorXd predictor_p0(const CBDerivatives& cbd, const Mat32& gradU)
{
    return cbd.shift_response() * flatten(gradU);
}

Predictor::Predictor(CLESolution cle, CoreMap zeta, const CBDerivatives& cbd)
    : cle_(std::move(cle)), zeta_(std::move(zeta)), P_(cbd.shift_response()), species_(cbd.species)
{
}

Vec3 Predictor::U0(const Vec2& x) const { return cle_.value(zeta_.inverse(x)); }

Mat32 Predictor::gradU0(const Vec2& x) const
{
    const Vec2 y = zeta_.inverse(x);
    return cle_.gradient(y) * zeta_.jacobian(y).inverse();
}

std::vector<Vec3> Predictor::p0(const Vec2& x) const
{
    std::vector<Vec3> p(species_, Vec3::Zero());
    if (species_ > 1) {
        Eigen::VectorXd v = P_ * flatten(gradU0(x));
        for (int a = 1; a < species_; ++a) p[a] = v.segment<3>(3 * (a - 1));
    }
    return p;
}

Vec3 Predictor::u0(const Vec2& x, int alpha) const
{
    Vec3 u = U0(x);
    if (alpha > 0) u += p0(x)[alpha];
    return u;
}

Eigen::MatrixXd sample_predictor(const Predictor& pred, const Domain& d)
{
    const int S = pred.species();
    Eigen::MatrixXd out(d.size(), 3 * S);
    for (int s = 0; s < d.size(); ++s) {
        const Vec2 y = pred.zeta().inverse(d.sites[s]);
        const Vec3 U = pred.cle().value(y);
        for (int a = 0; a < S; ++a) out.row(s).segment<3>(3 * a) = U.transpose();
        if (S > 1) {
            Mat32 G = pred.cle().gradient(y) * pred.zeta().jacobian(y).inverse();
            Eigen::VectorXd p = pred.shift_response() * flatten(G);
            for (int a = 1; a < S; ++a) out.row(s).segment<3>(3 * a) += p.segment<3>(3 * (a - 1)).transpose();
        }
    }
    return out;
}

Gapsd elastic_strain(const Domain& d, const InteractionStencil& st, const Eigen::MatrixXd& u0,
                     const Vec3& burgers, int site, const std::vector<int>& triples)
{
    Gapsd e(3, triples.size());
    for (size_t c = 0; c < triples.size(); ++c) {
        const auto& tr = st.triples[triples[c]];
        Neighbour nb = slip_neighbour(d, site, tr.m);
        if (nb.site < 0) {
            e.col(c).setConstant(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        e.col(c) = u0.row(nb.site).segment<3>(3 * tr.beta).transpose()
                   - u0.row(site).segment<3>(3 * tr.alpha).transpose() + nb.k * burgers;
    }
    return e;
}

std::vector<Gapsd> elastic_strains(const Predictor& pred, const Domain& d, const InteractionStencil& st,
                                   const std::vector<int>& triples)
{
    Eigen::MatrixXd u0 = sample_predictor(pred, d);
    std::vector<Gapsd> out(d.size());
    for (int s = 0; s < d.size(); ++s) out[s] = elastic_strain(d, st, u0, pred.cle().burgers(), s, triples);
    return out;
}

} // namespace dislo
