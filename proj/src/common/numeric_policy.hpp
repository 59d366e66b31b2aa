#pragma once

namespace prcaps {

// Every tolerance and guard used by the geometric kernels, collected in one
// record so they can be serialized into checkpoints and audited.
struct NumericPolicy {
    double manifold_tol = 1e-6;     // |<x,x> - beta| <= manifold_tol * max(1, |beta|)
    double sphere_tol = 1e-9;       // sphere-radius and orthogonality checks
    double idempotence_tol = 1e-12; // projection idempotence
    double cut_locus_guard = 1e-9;  // reject sphere log when cos(theta) < -1 + guard
    double denom_guard = 1e-12;     // additive guard for norms near zero
    double log_clamp_floor = 1e-12; // coupling coefficients clamped here before log
};

inline const NumericPolicy& default_policy() {
    static const NumericPolicy p{};
    return p;
}

} // namespace prcaps
