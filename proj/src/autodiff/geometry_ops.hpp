#pragma once

#include "autodiff/tape.hpp"
#include "geometry/geometry.hpp"

namespace prcaps::ad {

// Differentiable manifold operations over row-batched points: each row of a
// Var is one ambient point [time(t+1) | space(s)] or one tangent vector
// [sphere-tangent(t+1) | euclid(s)]. All maps are anchored at the pole
// origin, matching the value-level kernel in geometry/.

// sphere component of the factorization, rows renormalized to radius
Var psi_sphere(Tape& t, Var x, const geom::Signature& sig, double radius);
Var psi_euclid(Tape& t, Var x, const geom::Signature& sig);

// reassemble an ambient point from factors
Var psi_inverse(Tape& t, Var sphere, Var euclid, double radius);

Var diffeo_log(Tape& t, Var x, const geom::Signature& sig, double radius);
Var diffeo_exp(Tape& t, Var xi, const geom::Signature& sig, double radius);

// rescale rows of a sphere block back onto the radius-r sphere
Var renorm_rows(Tape& t, Var x, double radius);

Var project_q(Tape& t, Var x, const geom::Signature& sig, double radius);

// capsule squashing: ||out|| = n2/(1+n2), direction preserved
Var squash_rows(Tape& t, Var s);

// row-wise Euclidean norm with an additive guard under the sqrt
Var row_norm(Tape& t, Var x, double eps);

// constant leaf holding m copies of the origin point
Var origin_rows(Tape& t, int m, const geom::Signature& sig, double radius);

} // namespace prcaps::ad
