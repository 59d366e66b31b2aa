#pragma once

#include <span>
#include <vector>

#include "common/numeric_policy.hpp"

namespace prcaps::geom {

// Metric signature of the ambient pseudo-Euclidean space. The minus sign of
// the bilinear form attaches to the t+1 time-like coordinates, stored first;
// the s space-like coordinates follow. This ordering is the one under which
// the sphere x Euclidean factorization below holds exactly.
struct Signature {
    int s; // space-like (Euclidean) dimensions, >= 1
    int t; // sphere dimension; the time-like block has t+1 coordinates

    Signature(int s_, int t_);
    int ambient() const { return s + t + 1; }
    int time_dim() const { return t + 1; }
    bool operator==(const Signature&) const = default;
};

// Curvature of the base manifold. The factorization into a sphere and a
// Euclidean factor requires beta < 0 here; perspective curvatures elsewhere
// are unconstrained scalars.
struct Curvature {
    double beta;

    explicit Curvature(double b);
    double radius() const; // sqrt(|beta|)
};

// Ambient point, layout [time(t+1) | space(s)]. Membership on the level set
// <x,x> = beta is checked by on_manifold, not enforced at construction, so
// off-manifold probes remain expressible in tests.
struct PseudoPoint {
    Signature sig;
    Curvature beta;
    std::vector<double> x;

    PseudoPoint(Signature sig_, Curvature beta_, std::vector<double> coords);
    std::span<const double> time() const { return {x.data(), static_cast<size_t>(sig.time_dim())}; }
    std::span<const double> space() const {
        return {x.data() + sig.time_dim(), static_cast<size_t>(sig.s)};
    }
};

// Image of a point under the sphere x Euclidean factorization.
struct ProductPoint {
    std::vector<double> sphere; // length t+1, norm sqrt(|beta|)
    std::vector<double> euclid; // length s
};

// Tangent vector at the reference origin, layout
// [sphere-tangent(t+1) | euclid(s)]; the sphere-tangent block is orthogonal
// to the origin's sphere direction (first coordinate ~ 0).
struct TangentVector {
    std::vector<double> coords;
};

double ps_inner(std::span<const double> x, std::span<const double> y, const Signature& sig);

bool on_manifold(const PseudoPoint& p, double tol = default_policy().manifold_tol);

PseudoPoint origin(const Signature& sig, const Curvature& beta);

ProductPoint psi(const PseudoPoint& p);
PseudoPoint psi_inv(const ProductPoint& pp, const Signature& sig, const Curvature& beta);

// Sphere log/exp at an arbitrary base point, radius r. log rejects inputs at
// the cut locus (antipode); exp renormalizes its output onto the sphere.
std::vector<double> sph_log(std::span<const double> base, std::span<const double> p, double radius);
std::vector<double> sph_exp(std::span<const double> base, std::span<const double> v, double radius);

TangentVector diffeo_log_o(const PseudoPoint& y);
PseudoPoint diffeo_exp_o(const TangentVector& xi, const Signature& sig, const Curvature& beta);

// Rescales the time block so the membership identity holds exactly; space
// block untouched; idempotent.
PseudoPoint project_to_q(std::span<const double> x, const Signature& sig, const Curvature& beta);

// Norm under the product-space tangent metric, which is positive definite,
// so this is the Euclidean norm of the coordinates.
double ps_norm(const TangentVector& v);

} // namespace prcaps::geom
