#include "autodiff/geometry_ops.hpp"

namespace prcaps::ad {

Var psi_sphere(Tape& t, Var x, const geom::Signature& sig, double radius) {
    Var time = t.slice_cols(x, 0, sig.time_dim());
    // time norm >= radius on the manifold, so no guard is needed
    Var n = t.sqrt_guard(t.rowdot(time, time), 0.0);
    return t.mul_col(time, t.scale(t.recip(n), radius));
}

Var psi_euclid(Tape& t, Var x, const geom::Signature& sig) {
    return t.slice_cols(x, sig.time_dim(), sig.s);
}

Var psi_inverse(Tape& t, Var sphere, Var euclid, double radius) {
    Var f = t.scale(t.sqrt_guard(t.add_scalar(t.rowdot(euclid, euclid), radius * radius), 0.0),
                    1.0 / radius);
    return t.concat_cols({t.mul_col(sphere, f), euclid});
}

Var renorm_rows(Tape& t, Var x, double radius) {
    Var n = t.sqrt_guard(t.rowdot(x, x), 0.0);
    return t.mul_col(x, t.scale(t.recip(n), radius));
}

Var diffeo_log(Tape& t, Var x, const geom::Signature& sig, double radius) {
    Var u = psi_sphere(t, x, sig, radius);
    Var v = psi_euclid(t, x, sig);
    return t.concat_cols({t.sphere_log_origin(u, radius), v});
}

Var diffeo_exp(Tape& t, Var xi, const geom::Signature& sig, double radius) {
    Var sph = t.slice_cols(xi, 0, sig.time_dim());
    Var euc = t.slice_cols(xi, sig.time_dim(), sig.s);
    Var u = renorm_rows(t, t.sphere_exp_origin(sph, radius), radius);
    return psi_inverse(t, u, euc, radius);
}

Var project_q(Tape& t, Var x, const geom::Signature& sig, double radius) {
    Var time = t.slice_cols(x, 0, sig.time_dim());
    Var space = t.slice_cols(x, sig.time_dim(), sig.s);
    Var tn2 = t.rowdot(time, time);
    Var target = t.add_scalar(t.rowdot(space, space), radius * radius);
    Var f = t.sqrt_guard(t.mul(target, t.recip(tn2)), 0.0);
    return t.concat_cols({t.mul_col(time, f), space});
}

Var squash_rows(Tape& t, Var s) {
    Var n2 = t.rowdot(s, s);
    // denominator guard 1e-12 realized as sqrt(n2 + 1e-24)
    Var norm = t.sqrt_guard(n2, 1e-24);
    Var denom = t.mul(t.add_scalar(n2, 1.0), norm);
    return t.mul_col(s, t.mul(n2, t.recip(denom)));
}

Var row_norm(Tape& t, Var x, double eps) { return t.sqrt_guard(t.rowdot(x, x), eps); }

Var origin_rows(Tape& t, int m, const geom::Signature& sig, double radius) {
    Tensor o(m, sig.ambient());
    for (int i = 0; i < m; ++i) o.at(i, 0) = radius;
    return t.leaf(std::move(o));
}

} // namespace prcaps::ad
