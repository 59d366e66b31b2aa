#pragma once

#include <functional>
#include <span>
#include <vector>

#include "autodiff/tape.hpp"
#include "geometry/geometry.hpp"

namespace prcaps::routing {

enum class Mode { Euclidean, Pcr, Acr };

const char* mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct RoutingConfig {
    int iterations = 3;       // T
    int num_perspectives = 4; // K; forced to 1 in PCR mode
    Mode mode = Mode::Acr;
    bool simplified_gate = false; // single-matrix sigmoid gate instead of the three-term gate
    bool force_unit_gates = false; // gamma == 1 everywhere (PCR behaves as if set)
    bool identity_activation = false; // sigma = id instead of tanh in the activation step
    geom::Signature sig_in{9, 9};
    geom::Signature sig_out{9, 9};
    double beta = -1.0;
    int d_align = 8;
    int d_ctx = 16;

    int effective_k() const { return mode == Mode::Acr ? num_perspectives : 1; }
    void validate() const;
};

// ---------------------------------------------------------------------------
// value-level operations
// ---------------------------------------------------------------------------

// ||out|| = n^2/(1+n^2) < 1, direction preserved, squash(0) = 0
std::vector<double> squash(std::span<const double> s);

// Euclidean dynamic routing baseline. weights[j] is [d_out, d_in], shared
// across children. b starts at zero; T iterations of softmax coupling,
// weighted sum, squash, dot-product agreement.
std::vector<std::vector<double>> euclid_route(const std::vector<std::vector<double>>& children,
                                              const std::vector<Tensor>& weights, int iterations);

// transform in decomposed subspaces: sphere block through log/exp at the
// poles, Euclidean block linearly, then reassemble
geom::PseudoPoint pcr_predict(const geom::PseudoPoint& u, const Tensor& w_sph, const Tensor& w_euc,
                              const geom::Signature& sig_out, const geom::Curvature& beta_out);

// exp_o( sum_i c_i * log_o(pred_i) ), raw weights
geom::PseudoPoint pcr_aggregate(const std::vector<geom::PseudoPoint>& preds,
                                std::span<const double> c);

// Proj( exp_o( sigma( log_o(s) ) ) )
geom::PseudoPoint pcr_activate(const geom::PseudoPoint& s,
                               const std::function<double(double)>& sigma);

// b[i][j] += <log_o(v_j), log_o(pred[i][j])>; returns softmax rows of b
Tensor update_logits_pcr(Tensor& b, const std::vector<geom::PseudoPoint>& parents,
                         const std::vector<std::vector<geom::PseudoPoint>>& preds);

// cosine of the two origin tangents; 0 when either is (near) zero
double local_curvature_estimate(const geom::PseudoPoint& u, const geom::PseudoPoint& v_prev);

// -0.5 |kappa - beta_k|^2
double curvature_compat(double kappa_hat, double beta_k);

// w_k^T tanh(W_align [xi_u || xi_v])
double feature_alignment(const geom::TangentVector& xi_u, const geom::TangentVector& xi_v,
                         const Tensor& w_k, const Tensor& w_align);

// log(clamp(c_ij)) * (W_C h_ij)[k]
double routing_consistency(double c_ij, int k, const Tensor& w_c, std::span<const double> h_ij);

// sigmoid(a_curv*C + a_align*A + a_route*R)
double gating_weight(double compat, double align, double consist, double a_curv, double a_align,
                     double a_route);

// composite weights c_i * gamma_{i,k}, renormalized over (i,k); uniform
// fallback when everything underflows to zero
geom::PseudoPoint acr_aggregate(const std::vector<std::vector<geom::PseudoPoint>>& preds,
                                std::span<const double> c, const Tensor& gamma);

// ---------------------------------------------------------------------------
// full routing loop
// ---------------------------------------------------------------------------

// Plain-tensor weights for one routing layer; indexing for the per-(j,k)
// matrices is j*K + k.
struct LayerWeights {
    std::vector<Tensor> w_sph; // [t_out, t_in]
    std::vector<Tensor> w_euc; // [s_out, s_in]
    std::vector<Tensor> w_full; // Euclidean mode, per parent [d_out, d_in]
    std::vector<double> beta_k;
    std::vector<Tensor> w_align_vec; // per k, [1, d_align]
    std::vector<Tensor> w_align_mat; // per k, [d_align, tan_in + tan_out]
    Tensor w_ctx;                    // [d_ctx, tan_in + tan_out]
    Tensor w_consist;                // [K, d_ctx]
    double alpha_curv = 1.0, alpha_align = 1.0, alpha_route = 1.0;
    std::vector<Tensor> w_gate; // per k, [1, tan_in + tan_out], simplified gate
};

// Reference implementation on single capsule banks. Serves as the
// independent oracle for the batched tape builder below; keep the two in
// lockstep (same formulas, same summation order).
std::vector<geom::PseudoPoint> prr_routing(const std::vector<geom::PseudoPoint>& children,
                                           const LayerWeights& w, const RoutingConfig& cfg);

// Same weights as tape variables.
struct RoutingVars {
    std::vector<Var> w_sph;
    std::vector<Var> w_euc;
    std::vector<Var> w_full;
    std::vector<Var> beta_k; // [1,1] each
    std::vector<Var> w_align_vec;
    std::vector<Var> w_align_mat;
    Var w_ctx;
    Var w_consist;
    Var alpha; // [1,3] = (curv, align, route)
    std::vector<Var> w_gate;
};

// Batched differentiable routing: children[i] is [m, ambient_in], one row
// per graph node; returns parents[j] of shape [m, ambient_out].
std::vector<Var> build_routing(Tape& t, const std::vector<Var>& children, const RoutingVars& w,
                               const RoutingConfig& cfg);

} // namespace prcaps::routing
