#include "geometry/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include "kernels/kernels.hpp"

namespace prcaps::geom {

namespace {
double norm2(std::span<const double> v) {
    return kernels::ops().dot(v.data(), v.data(), v.size());
}
double norm(std::span<const double> v) { return std::sqrt(norm2(v)); }
} // namespace

Signature::Signature(int s_, int t_) : s(s_), t(t_) {
    if (s < 1 || t < 1) {
        throw std::invalid_argument("Signature requires s >= 1 and t >= 1");
    }
}

Curvature::Curvature(double b) : beta(b) {
    if (b == 0.0) throw std::invalid_argument("curvature beta must be nonzero");
}

double Curvature::radius() const { return std::sqrt(std::fabs(beta)); }

PseudoPoint::PseudoPoint(Signature sig_, Curvature beta_, std::vector<double> coords)
    : sig(sig_), beta(beta_), x(std::move(coords)) {
    if (static_cast<int>(x.size()) != sig.ambient()) {
        throw std::invalid_argument("PseudoPoint coordinate length does not match signature");
    }
}

double ps_inner(std::span<const double> x, std::span<const double> y, const Signature& sig) {
    if (static_cast<int>(x.size()) != sig.ambient() || x.size() != y.size()) {
        throw std::invalid_argument("ps_inner: dimension mismatch");
    }
    const auto& k = kernels::ops();
    const std::size_t td = static_cast<std::size_t>(sig.time_dim());
    double time_part = k.dot(x.data(), y.data(), td);
    double space_part = k.dot(x.data() + td, y.data() + td, static_cast<std::size_t>(sig.s));
    return -time_part + space_part;
}

bool on_manifold(const PseudoPoint& p, double tol) {
    double q = ps_inner(p.x, p.x, p.sig);
    return std::fabs(q - p.beta.beta) <= tol * std::max(1.0, std::fabs(p.beta.beta));
}

PseudoPoint origin(const Signature& sig, const Curvature& beta) {
    if (beta.beta >= 0.0) throw std::invalid_argument("origin: base manifold requires beta < 0");
    std::vector<double> x(sig.ambient(), 0.0);
    x[0] = beta.radius();
    return PseudoPoint(sig, beta, std::move(x));
}

ProductPoint psi(const PseudoPoint& p) {
    if (p.beta.beta >= 0.0) throw std::invalid_argument("psi: requires beta < 0");
    auto t = p.time();
    double tn = norm(t);
    if (tn <= 0.0) throw std::invalid_argument("psi undefined: zero time-block norm");
    double scale = p.beta.radius() / tn;
    ProductPoint pp;
    pp.sphere.assign(t.begin(), t.end());
    kernels::ops().scale(scale, pp.sphere.data(), pp.sphere.size());
    auto sp = p.space();
    pp.euclid.assign(sp.begin(), sp.end());
    return pp;
}

PseudoPoint psi_inv(const ProductPoint& pp, const Signature& sig, const Curvature& beta) {
    if (static_cast<int>(pp.sphere.size()) != sig.time_dim() ||
        static_cast<int>(pp.euclid.size()) != sig.s) {
        throw std::invalid_argument("psi_inv: component dimensions do not match signature");
    }
    double r = beta.radius();
    double sn = norm(pp.sphere);
    if (std::fabs(sn - r) > default_policy().sphere_tol * std::max(1.0, r)) {
        throw std::invalid_argument("psi_inv: sphere component off the sphere beyond tolerance");
    }
    double vn2 = norm2(pp.euclid);
    double f = std::sqrt(std::fabs(beta.beta) + vn2) / r;
    std::vector<double> x(sig.ambient());
    for (int i = 0; i < sig.time_dim(); ++i) x[i] = f * pp.sphere[i];
    for (int i = 0; i < sig.s; ++i) x[sig.time_dim() + i] = pp.euclid[i];
    return PseudoPoint(sig, beta, std::move(x));
}

std::vector<double> sph_log(std::span<const double> base, std::span<const double> p,
                            double radius) {
    if (base.size() != p.size()) throw std::invalid_argument("sph_log: dimension mismatch");
    const auto& k = kernels::ops();
    double c = k.dot(base.data(), p.data(), base.size()) / (radius * radius);
    if (c < -1.0 + default_policy().cut_locus_guard) {
        throw std::domain_error("sph_log undefined at cut locus (antipodal input)");
    }
    c = std::min(c, 1.0);
    double theta = std::acos(c);
    // theta/sin(theta), series near zero
    double alpha = theta < 1e-9 ? 1.0 : theta / std::sin(theta);
    std::vector<double> out(p.begin(), p.end());
    k.axpy(-c, base.data(), out.data(), out.size());
    k.scale(alpha, out.data(), out.size());
    return out;
}

std::vector<double> sph_exp(std::span<const double> base, std::span<const double> v,
                            double radius) {
    if (base.size() != v.size()) throw std::invalid_argument("sph_exp: dimension mismatch");
    const auto& k = kernels::ops();
    double n = norm(v);
    std::vector<double> out(base.begin(), base.end());
    if (n > 0.0) {
        double a = n / radius;
        k.scale(std::cos(a), out.data(), out.size());
        k.axpy(std::sin(a) * radius / n, v.data(), out.data(), out.size());
    }
    // land exactly on the sphere
    double on = norm(out);
    if (on > 0.0) k.scale(radius / on, out.data(), out.size());
    return out;
}

TangentVector diffeo_log_o(const PseudoPoint& y) {
    ProductPoint py = psi(y);
    double r = y.beta.radius();
    std::vector<double> pole(y.sig.time_dim(), 0.0);
    pole[0] = r;
    std::vector<double> sph = sph_log(pole, py.sphere, r);
    TangentVector out;
    out.coords.reserve(y.sig.ambient());
    out.coords.insert(out.coords.end(), sph.begin(), sph.end());
    out.coords.insert(out.coords.end(), py.euclid.begin(), py.euclid.end());
    return out;
}

PseudoPoint diffeo_exp_o(const TangentVector& xi, const Signature& sig, const Curvature& beta) {
    if (static_cast<int>(xi.coords.size()) != sig.ambient()) {
        throw std::invalid_argument("diffeo_exp_o: tangent length does not match signature");
    }
    double r = beta.radius();
    std::vector<double> pole(sig.time_dim(), 0.0);
    pole[0] = r;
    std::span<const double> sph_block{xi.coords.data(), static_cast<size_t>(sig.time_dim())};
    ProductPoint pp;
    pp.sphere = sph_exp(pole, sph_block, r);
    pp.euclid.assign(xi.coords.begin() + sig.time_dim(), xi.coords.end());
    return psi_inv(pp, sig, beta);
}

PseudoPoint project_to_q(std::span<const double> x, const Signature& sig, const Curvature& beta) {
    if (static_cast<int>(x.size()) != sig.ambient()) {
        throw std::invalid_argument("project_to_q: dimension mismatch");
    }
    const std::size_t td = static_cast<std::size_t>(sig.time_dim());
    double tn2 = kernels::ops().dot(x.data(), x.data(), td);
    if (tn2 <= default_policy().denom_guard * default_policy().denom_guard) {
        throw std::domain_error("project_to_q: zero time block");
    }
    double sp2 = kernels::ops().dot(x.data() + td, x.data() + td, static_cast<std::size_t>(sig.s));
    double f = std::sqrt((std::fabs(beta.beta) + sp2) / tn2);
    std::vector<double> out(x.begin(), x.end());
    kernels::ops().scale(f, out.data(), td);
    return PseudoPoint(sig, beta, std::move(out));
}

double ps_norm(const TangentVector& v) {
    return std::sqrt(kernels::ops().dot(v.coords.data(), v.coords.data(), v.coords.size()));
}

} // namespace prcaps::geom
