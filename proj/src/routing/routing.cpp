#include "routing/routing.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "autodiff/geometry_ops.hpp"
#include "common/errors.hpp"
#include "kernels/kernels.hpp"

namespace prcaps::routing {

namespace {
const kernels::Ops& K() { return kernels::ops(); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> matvec(const Tensor& w, std::span<const double> x) {
    std::vector<double> out(w.rows);
    for (int i = 0; i < w.rows; ++i) out[i] = K().dot(w.row(i), x.data(), x.size());
    return out;
}

void softmax_row(double* r, int n) {
    double mx = r[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    double z = 0;
    for (int j = 0; j < n; ++j) {
        r[j] = std::exp(r[j] - mx);
        z += r[j];
    }
    for (int j = 0; j < n; ++j) r[j] /= z;
}
} // namespace

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Euclidean: return "euclidean";
        case Mode::Pcr: return "pcr";
        case Mode::Acr: return "acr";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    if (s == "euclidean") return Mode::Euclidean;
    if (s == "pcr") return Mode::Pcr;
    if (s == "acr") return Mode::Acr;
    throw ConfigError("unknown routing mode: " + s);
}

void RoutingConfig::validate() const {
    if (iterations < 1) throw ConfigError("routing iterations must be >= 1");
    if (num_perspectives < 1) throw ConfigError("routing perspectives K must be >= 1");
    if (beta >= 0.0) throw ConfigError("routing base curvature must be negative");
    if (mode == Mode::Acr && !simplified_gate && sig_in.ambient() != sig_out.ambient()) {
        throw ConfigError("curvature gating needs equal input/output tangent dimensions");
    }
}

// ---------------------------------------------------------------------------
// value-level operations
// ---------------------------------------------------------------------------

std::vector<double> squash(std::span<const double> s) {
    double n2 = K().dot(s.data(), s.data(), s.size());
    double factor = n2 / ((1.0 + n2) * std::sqrt(n2 + 1e-24));
    std::vector<double> out(s.begin(), s.end());
    K().scale(factor, out.data(), out.size());
    return out;
}

std::vector<std::vector<double>> euclid_route(const std::vector<std::vector<double>>& children,
                                              const std::vector<Tensor>& weights, int iterations) {
    const int nc = static_cast<int>(children.size());
    const int np = static_cast<int>(weights.size());
    if (nc == 0 || np == 0) throw std::invalid_argument("euclid_route: empty layer");
    const int d_out = weights[0].rows;
    for (const Tensor& w : weights) {
        if (w.cols != static_cast<int>(children[0].size()) || w.rows != d_out) {
            throw std::invalid_argument("euclid_route: weight shape mismatch");
        }
    }

    std::vector<std::vector<std::vector<double>>> preds(nc);
    for (int i = 0; i < nc; ++i) {
        preds[i].resize(np);
        for (int j = 0; j < np; ++j) preds[i][j] = matvec(weights[j], children[i]);
    }

    Tensor b(nc, np);
    std::vector<std::vector<double>> parents(np, std::vector<double>(d_out, 0.0));
    for (int it = 0; it < iterations; ++it) {
        Tensor c = b;
        for (int i = 0; i < nc; ++i) softmax_row(c.row(i), np);
        for (int j = 0; j < np; ++j) {
            std::vector<double> s(d_out, 0.0);
            for (int i = 0; i < nc; ++i) K().axpy(c.at(i, j), preds[i][j].data(), s.data(), d_out);
            parents[j] = squash(s);
        }
        for (int i = 0; i < nc; ++i) {
            for (int j = 0; j < np; ++j) {
                b.at(i, j) += K().dot(parents[j].data(), preds[i][j].data(), d_out);
            }
        }
    }
    return parents;
}

geom::PseudoPoint pcr_predict(const geom::PseudoPoint& u, const Tensor& w_sph, const Tensor& w_euc,
                              const geom::Signature& sig_out, const geom::Curvature& beta_out) {
    if (w_sph.cols != u.sig.t || w_sph.rows != sig_out.t || w_euc.cols != u.sig.s ||
        w_euc.rows != sig_out.s) {
        throw std::invalid_argument("pcr_predict: weight shapes do not match signatures");
    }
    geom::ProductPoint pp = geom::psi(u);
    double r_in = u.beta.radius();
    std::vector<double> pole_in(u.sig.time_dim(), 0.0);
    pole_in[0] = r_in;
    std::vector<double> lg = geom::sph_log(pole_in, pp.sphere, r_in);
    std::span<const double> lg_free{lg.data() + 1, static_cast<size_t>(u.sig.t)};
    std::vector<double> s_free = matvec(w_sph, lg_free);
    std::vector<double> s_pad(sig_out.time_dim(), 0.0);
    std::copy(s_free.begin(), s_free.end(), s_pad.begin() + 1);

    double r_out = beta_out.radius();
    std::vector<double> pole_out(sig_out.time_dim(), 0.0);
    pole_out[0] = r_out;
    geom::ProductPoint out;
    out.sphere = geom::sph_exp(pole_out, s_pad, r_out);
    out.euclid = matvec(w_euc, pp.euclid);
    return geom::psi_inv(out, sig_out, beta_out);
}

geom::PseudoPoint pcr_aggregate(const std::vector<geom::PseudoPoint>& preds,
                                std::span<const double> c) {
    if (preds.empty() || preds.size() != c.size()) {
        throw std::invalid_argument("pcr_aggregate: weight/prediction count mismatch");
    }
    const geom::Signature sig = preds[0].sig;
    std::vector<double> acc(sig.ambient(), 0.0);
    for (size_t i = 0; i < preds.size(); ++i) {
        geom::TangentVector xi = geom::diffeo_log_o(preds[i]);
        K().axpy(c[i], xi.coords.data(), acc.data(), acc.size());
    }
    return geom::diffeo_exp_o(geom::TangentVector{std::move(acc)}, sig, preds[0].beta);
}

geom::PseudoPoint pcr_activate(const geom::PseudoPoint& s,
                               const std::function<double(double)>& sigma) {
    geom::TangentVector xi = geom::diffeo_log_o(s);
    for (double& x : xi.coords) x = sigma(x);
    geom::PseudoPoint e = geom::diffeo_exp_o(xi, s.sig, s.beta);
    return geom::project_to_q(e.x, s.sig, s.beta);
}

Tensor update_logits_pcr(Tensor& b, const std::vector<geom::PseudoPoint>& parents,
                         const std::vector<std::vector<geom::PseudoPoint>>& preds) {
    const int nc = b.rows;
    const int np = b.cols;
    std::vector<geom::TangentVector> zeta;
    zeta.reserve(parents.size());
    for (const auto& v : parents) zeta.push_back(geom::diffeo_log_o(v));
    for (int i = 0; i < nc; ++i) {
        for (int j = 0; j < np; ++j) {
            geom::TangentVector xi = geom::diffeo_log_o(preds[i][j]);
            b.at(i, j) += K().dot(zeta[j].coords.data(), xi.coords.data(), xi.coords.size());
        }
    }
    Tensor c = b;
    for (int i = 0; i < nc; ++i) softmax_row(c.row(i), np);
    return c;
}

double local_curvature_estimate(const geom::PseudoPoint& u, const geom::PseudoPoint& v_prev) {
    geom::TangentVector a = geom::diffeo_log_o(u);
    geom::TangentVector b = geom::diffeo_log_o(v_prev);
    if (a.coords.size() != b.coords.size()) {
        throw std::invalid_argument("local_curvature_estimate: tangent dimension mismatch");
    }
    double num = K().dot(a.coords.data(), b.coords.data(), a.coords.size());
    double na = std::sqrt(K().dot(a.coords.data(), a.coords.data(), a.coords.size()) + 1e-24);
    double nb = std::sqrt(K().dot(b.coords.data(), b.coords.data(), b.coords.size()) + 1e-24);
    return num / (na * nb);
}

double curvature_compat(double kappa_hat, double beta_k) {
    double d = kappa_hat - beta_k;
    return -0.5 * d * d;
}

double feature_alignment(const geom::TangentVector& xi_u, const geom::TangentVector& xi_v,
                         const Tensor& w_k, const Tensor& w_align) {
    std::vector<double> cat;
    cat.reserve(xi_u.coords.size() + xi_v.coords.size());
    cat.insert(cat.end(), xi_u.coords.begin(), xi_u.coords.end());
    cat.insert(cat.end(), xi_v.coords.begin(), xi_v.coords.end());
    if (w_align.cols != static_cast<int>(cat.size()) || w_k.cols != w_align.rows) {
        throw std::invalid_argument("feature_alignment: shape mismatch");
    }
    std::vector<double> hidden = matvec(w_align, cat);
    for (double& x : hidden) x = std::tanh(x);
    return K().dot(w_k.row(0), hidden.data(), hidden.size());
}

double routing_consistency(double c_ij, int k, const Tensor& w_c, std::span<const double> h_ij) {
    if (k < 0 || k >= w_c.rows || w_c.cols != static_cast<int>(h_ij.size())) {
        throw std::invalid_argument("routing_consistency: shape mismatch");
    }
    double clamped = std::min(1.0, std::max(1e-12, c_ij));
    return std::log(clamped) * K().dot(w_c.row(k), h_ij.data(), h_ij.size());
}

double gating_weight(double compat, double align, double consist, double a_curv, double a_align,
                     double a_route) {
    return sigmoid(a_curv * compat + a_align * align + a_route * consist);
}

geom::PseudoPoint acr_aggregate(const std::vector<std::vector<geom::PseudoPoint>>& preds,
                                std::span<const double> c, const Tensor& gamma) {
    const int nc = static_cast<int>(preds.size());
    if (nc == 0 || static_cast<int>(c.size()) != nc) {
        throw std::invalid_argument("acr_aggregate: weight/prediction count mismatch");
    }
    const int kk = static_cast<int>(preds[0].size());
    if (gamma.rows != nc || gamma.cols != kk) {
        throw std::invalid_argument("acr_aggregate: gate shape mismatch");
    }
    double z = 0.0;
    for (int i = 0; i < nc; ++i) {
        for (int k = 0; k < kk; ++k) z += c[i] * gamma.at(i, k);
    }
    const geom::Signature sig = preds[0][0].sig;
    std::vector<double> acc(sig.ambient(), 0.0);
    if (z <= 1e-300) {
        double w = 1.0 / (nc * kk);
        for (int i = 0; i < nc; ++i) {
            for (int k = 0; k < kk; ++k) {
                geom::TangentVector xi = geom::diffeo_log_o(preds[i][k]);
                K().axpy(w, xi.coords.data(), acc.data(), acc.size());
            }
        }
    } else {
        double rz = 1.0 / z;
        for (int i = 0; i < nc; ++i) {
            for (int k = 0; k < kk; ++k) {
                geom::TangentVector xi = geom::diffeo_log_o(preds[i][k]);
                K().axpy(c[i] * gamma.at(i, k) * rz, xi.coords.data(), acc.data(), acc.size());
            }
        }
    }
    return geom::diffeo_exp_o(geom::TangentVector{std::move(acc)}, sig, preds[0][0].beta);
}

// ---------------------------------------------------------------------------
// reference loop
// ---------------------------------------------------------------------------

std::vector<geom::PseudoPoint> prr_routing(const std::vector<geom::PseudoPoint>& children,
                                           const LayerWeights& w, const RoutingConfig& cfg) {
    cfg.validate();
    const int nc = static_cast<int>(children.size());
    if (nc == 0) throw std::invalid_argument("prr_routing: no children");
    const geom::Curvature beta(cfg.beta);
    const double r = beta.radius();

    if (cfg.mode == Mode::Euclidean) {
        std::vector<std::vector<double>> flat(nc);
        for (int i = 0; i < nc; ++i) flat[i] = children[i].x;
        auto outs = euclid_route(flat, w.w_full, cfg.iterations);
        std::vector<geom::PseudoPoint> parents;
        parents.reserve(outs.size());
        for (auto& o : outs) parents.emplace_back(cfg.sig_out, beta, std::move(o));
        return parents;
    }

    const int kk = cfg.effective_k();
    const int np = static_cast<int>(w.w_sph.size()) / kk;
    const bool unit_gates = cfg.mode == Mode::Pcr;
    const int d_out = cfg.sig_out.ambient();

    // per-child decomposition and origin tangents
    std::vector<std::vector<double>> xi_in(nc);
    std::vector<std::vector<double>> lg_free(nc), v_in(nc);
    std::vector<double> xi_norm(nc);
    std::vector<double> pole_in(cfg.sig_in.time_dim(), 0.0);
    pole_in[0] = r;
    for (int i = 0; i < nc; ++i) {
        geom::ProductPoint pp = geom::psi(children[i]);
        std::vector<double> lg = geom::sph_log(pole_in, pp.sphere, r);
        lg_free[i].assign(lg.begin() + 1, lg.end());
        v_in[i] = pp.euclid;
        xi_in[i] = lg;
        xi_in[i].insert(xi_in[i].end(), pp.euclid.begin(), pp.euclid.end());
        xi_norm[i] =
            std::sqrt(K().dot(xi_in[i].data(), xi_in[i].data(), xi_in[i].size()) + 1e-24);
    }

    // predictions and their origin tangents, fixed (i, j, k) layout
    std::vector<double> pole_out(cfg.sig_out.time_dim(), 0.0);
    pole_out[0] = r;
    auto idx = [&](int i, int j, int k) { return (i * np + j) * kk + k; };
    std::vector<geom::PseudoPoint> preds;
    std::vector<std::vector<double>> xi_pred(static_cast<size_t>(nc) * np * kk);
    preds.reserve(xi_pred.size());
    for (int i = 0; i < nc; ++i) {
        for (int j = 0; j < np; ++j) {
            for (int k = 0; k < kk; ++k) {
                const Tensor& ws = w.w_sph[j * kk + k];
                const Tensor& we = w.w_euc[j * kk + k];
                std::vector<double> s_free = matvec(ws, lg_free[i]);
                std::vector<double> s_pad(cfg.sig_out.time_dim(), 0.0);
                std::copy(s_free.begin(), s_free.end(), s_pad.begin() + 1);
                geom::ProductPoint out;
                out.sphere = geom::sph_exp(pole_out, s_pad, r);
                out.euclid = matvec(we, v_in[i]);
                preds.push_back(geom::psi_inv(out, cfg.sig_out, beta));
                xi_pred[idx(i, j, k)] = geom::diffeo_log_o(preds.back()).coords;
            }
        }
    }

    Tensor b(nc, np);
    std::vector<geom::PseudoPoint> parents;
    std::vector<std::vector<double>> zeta(np, std::vector<double>(d_out, 0.0));
    std::vector<double> zeta_norm(np, std::sqrt(1e-24));

    for (int it = 0; it < cfg.iterations; ++it) {
        try {
            Tensor c = b;
            for (int i = 0; i < nc; ++i) softmax_row(c.row(i), np);

            // gates
            Tensor gamma(nc * np, kk);
            if (!unit_gates) {
                for (int i = 0; i < nc; ++i) {
                    for (int j = 0; j < np; ++j) {
                        std::vector<double> cat = xi_in[i];
                        cat.insert(cat.end(), zeta[j].begin(), zeta[j].end());
                        if (cfg.simplified_gate) {
                            for (int k = 0; k < kk; ++k) {
                                double z = K().dot(w.w_gate[k].row(0), cat.data(), cat.size());
                                gamma.at(i * np + j, k) = sigmoid(z);
                            }
                        } else {
                            double kap =
                                K().dot(xi_in[i].data(), zeta[j].data(), zeta[j].size()) /
                                (xi_norm[i] * zeta_norm[j]);
                            std::vector<double> h = matvec(w.w_ctx, cat);
                            std::vector<double> wch = matvec(w.w_consist, h);
                            double logc = std::log(std::min(1.0, std::max(1e-12, c.at(i, j))));
                            for (int k = 0; k < kk; ++k) {
                                double compat = curvature_compat(kap, w.beta_k[k]);
                                std::vector<double> hidden = matvec(w.w_align_mat[k], cat);
                                for (double& x : hidden) x = std::tanh(x);
                                double align =
                                    K().dot(w.w_align_vec[k].row(0), hidden.data(), hidden.size());
                                double consist = logc * wch[k];
                                gamma.at(i * np + j, k) =
                                    sigmoid(w.alpha_curv * compat + w.alpha_align * align +
                                            w.alpha_route * consist);
                            }
                        }
                    }
                }
            }

            // per-parent normalized tangent aggregation, children outer,
            // perspectives inner
            parents.clear();
            std::vector<std::vector<double>> zeta_next(np);
            for (int j = 0; j < np; ++j) {
                double z = 0.0;
                for (int i = 0; i < nc; ++i) {
                    for (int k = 0; k < kk; ++k) {
                        z += unit_gates ? c.at(i, j) : c.at(i, j) * gamma.at(i * np + j, k);
                    }
                }
                double rz = 1.0 / (z + 1e-300);
                std::vector<double> acc(d_out, 0.0);
                for (int i = 0; i < nc; ++i) {
                    for (int k = 0; k < kk; ++k) {
                        double wt =
                            (unit_gates ? c.at(i, j) : c.at(i, j) * gamma.at(i * np + j, k)) * rz;
                        K().axpy(wt, xi_pred[idx(i, j, k)].data(), acc.data(), d_out);
                    }
                }
                geom::PseudoPoint s_j =
                    geom::diffeo_exp_o(geom::TangentVector{std::move(acc)}, cfg.sig_out, beta);
                geom::TangentVector act = geom::diffeo_log_o(s_j);
                if (!cfg.identity_activation) {
                    for (double& x : act.coords) x = std::tanh(x);
                }
                geom::PseudoPoint pre = geom::diffeo_exp_o(act, cfg.sig_out, beta);
                parents.push_back(geom::project_to_q(pre.x, cfg.sig_out, beta));
                zeta_next[j] = geom::diffeo_log_o(parents.back()).coords;
            }

            // agreement update with this iteration's gates
            for (int i = 0; i < nc; ++i) {
                for (int j = 0; j < np; ++j) {
                    double inc = 0.0;
                    for (int k = 0; k < kk; ++k) {
                        double agree = K().dot(zeta_next[j].data(), xi_pred[idx(i, j, k)].data(),
                                               static_cast<size_t>(d_out));
                        inc += unit_gates ? agree : gamma.at(i * np + j, k) * agree;
                    }
                    b.at(i, j) += inc;
                }
            }

            zeta = std::move(zeta_next);
            for (int j = 0; j < np; ++j) {
                zeta_norm[j] =
                    std::sqrt(K().dot(zeta[j].data(), zeta[j].data(), zeta[j].size()) + 1e-24);
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("prr_routing: iteration " + std::to_string(it) + ": " +
                                     e.what());
        }
    }
    return parents;
}

// ---------------------------------------------------------------------------
// batched differentiable loop
// ---------------------------------------------------------------------------

std::vector<Var> build_routing(Tape& t, const std::vector<Var>& children, const RoutingVars& w,
                               const RoutingConfig& cfg) {
    cfg.validate();
    const int nc = static_cast<int>(children.size());
    if (nc == 0) throw std::invalid_argument("build_routing: no children");
    const int m = children[0].rows;

    if (cfg.mode == Mode::Euclidean) {
        const int np = static_cast<int>(w.w_full.size());
        std::vector<std::vector<Var>> preds(nc, std::vector<Var>(np));
        for (int i = 0; i < nc; ++i) {
            for (int j = 0; j < np; ++j) preds[i][j] = t.matmul_nt(children[i], w.w_full[j]);
        }
        std::vector<Var> b(nc);
        for (int i = 0; i < nc; ++i) b[i] = t.zeros(m, np);
        std::vector<Var> parents(np);
        for (int it = 0; it < cfg.iterations; ++it) {
            std::vector<Var> c(nc);
            for (int i = 0; i < nc; ++i) c[i] = t.softmax_rows(b[i]);
            for (int j = 0; j < np; ++j) {
                Var s;
                for (int i = 0; i < nc; ++i) {
                    Var term = t.mul_col(preds[i][j], t.slice_cols(c[i], j, 1));
                    s = i == 0 ? term : t.add(s, term);
                }
                parents[j] = ad::squash_rows(t, s);
            }
            for (int i = 0; i < nc; ++i) {
                std::vector<Var> incs(np);
                for (int j = 0; j < np; ++j) incs[j] = t.rowdot(parents[j], preds[i][j]);
                b[i] = t.add(b[i], t.concat_cols(incs));
            }
        }
        return parents;
    }

    const int kk = cfg.effective_k();
    const int np = static_cast<int>(w.w_sph.size()) / kk;
    const bool unit_gates = cfg.mode == Mode::Pcr || cfg.force_unit_gates;
    const double r = geom::Curvature(cfg.beta).radius();

    Var zero_col = t.zeros(m, 1);

    // decomposition shared across iterations
    std::vector<Var> xi_in(nc), lg_free(nc), v_in(nc), xi_norm(nc);
    for (int i = 0; i < nc; ++i) {
        Var u = ad::psi_sphere(t, children[i], cfg.sig_in, r);
        Var v = ad::psi_euclid(t, children[i], cfg.sig_in);
        Var lg = t.sphere_log_origin(u, r);
        lg_free[i] = t.slice_cols(lg, 1, cfg.sig_in.t);
        v_in[i] = v;
        xi_in[i] = t.concat_cols({lg, v});
        xi_norm[i] = t.sqrt_guard(t.rowdot(xi_in[i], xi_in[i]), 1e-24);
    }

    // perspective predictions, fixed (i, j, k) layout
    auto idx = [&](int i, int j, int k) { return (i * np + j) * kk + k; };
    std::vector<Var> xi_pred(static_cast<size_t>(nc) * np * kk);
    for (int i = 0; i < nc; ++i) {
        for (int j = 0; j < np; ++j) {
            for (int k = 0; k < kk; ++k) {
                Var s_free = t.matmul_nt(lg_free[i], w.w_sph[j * kk + k]);
                Var s_pad = t.concat_cols({zero_col, s_free});
                Var u = ad::renorm_rows(t, t.sphere_exp_origin(s_pad, r), r);
                Var v = t.matmul_nt(v_in[i], w.w_euc[j * kk + k]);
                Var uhat = ad::psi_inverse(t, u, v, r);
                xi_pred[idx(i, j, k)] = ad::diffeo_log(t, uhat, cfg.sig_out, r);
            }
        }
    }

    Var a_curv, a_align, a_route;
    if (!unit_gates && !cfg.simplified_gate) {
        a_curv = t.slice_cols(w.alpha, 0, 1);
        a_align = t.slice_cols(w.alpha, 1, 1);
        a_route = t.slice_cols(w.alpha, 2, 1);
    }

    std::vector<Var> b(nc);
    for (int i = 0; i < nc; ++i) b[i] = t.zeros(m, np);
    std::vector<Var> zeta(np), zeta_norm(np), parents(np);
    for (int j = 0; j < np; ++j) {
        zeta[j] = t.zeros(m, cfg.sig_out.ambient());
        zeta_norm[j] = t.sqrt_guard(t.rowdot(zeta[j], zeta[j]), 1e-24);
    }

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<Var> c(nc);
        for (int i = 0; i < nc; ++i) c[i] = t.softmax_rows(b[i]);

        // gates for this iteration, [m,1] per (i,j,k)
        std::vector<Var> gamma(static_cast<size_t>(nc) * np * kk);
        if (!unit_gates) {
            for (int i = 0; i < nc; ++i) {
                for (int j = 0; j < np; ++j) {
                    Var cat = t.concat_cols({xi_in[i], zeta[j]});
                    if (cfg.simplified_gate) {
                        for (int k = 0; k < kk; ++k) {
                            gamma[idx(i, j, k)] = t.sigmoid_(t.matmul_nt(cat, w.w_gate[k]));
                        }
                    } else {
                        Var kap = t.mul(t.rowdot(xi_in[i], zeta[j]),
                                        t.recip(t.mul(xi_norm[i], zeta_norm[j])));
                        Var wch = t.matmul_nt(t.matmul_nt(cat, w.w_ctx), w.w_consist);
                        Var logc = t.log_clamp(t.slice_cols(c[i], j, 1), 1e-12, 1.0);
                        for (int k = 0; k < kk; ++k) {
                            Var compat = t.scale(t.square(t.sub_sv(kap, w.beta_k[k])), -0.5);
                            Var align = t.matmul_nt(t.tanh_(t.matmul_nt(cat, w.w_align_mat[k])),
                                                    w.w_align_vec[k]);
                            Var consist = t.mul(logc, t.slice_cols(wch, k, 1));
                            Var pre = t.add(t.add(t.mul_sv(compat, a_curv), t.mul_sv(align, a_align)),
                                            t.mul_sv(consist, a_route));
                            gamma[idx(i, j, k)] = t.sigmoid_(pre);
                        }
                    }
                }
            }
        }

        std::vector<Var> zeta_next(np);
        for (int j = 0; j < np; ++j) {
            // composite weights and their normalizer
            std::vector<Var> w_raw(static_cast<size_t>(nc) * kk);
            Var z;
            for (int i = 0; i < nc; ++i) {
                Var cj = t.slice_cols(c[i], j, 1);
                for (int k = 0; k < kk; ++k) {
                    Var wr = unit_gates ? cj : t.mul(cj, gamma[idx(i, j, k)]);
                    w_raw[i * kk + k] = wr;
                    z = (i == 0 && k == 0) ? wr : t.add(z, wr);
                }
            }
            Var rz = t.recip(t.add_scalar(z, 1e-300));
            Var s;
            for (int i = 0; i < nc; ++i) {
                for (int k = 0; k < kk; ++k) {
                    Var term = t.mul_col(xi_pred[idx(i, j, k)], t.mul(w_raw[i * kk + k], rz));
                    s = (i == 0 && k == 0) ? term : t.add(s, term);
                }
            }
            Var s_point = ad::diffeo_exp(t, s, cfg.sig_out, r);
            Var act = ad::diffeo_log(t, s_point, cfg.sig_out, r);
            if (!cfg.identity_activation) act = t.tanh_(act);
            Var pre = ad::diffeo_exp(t, act, cfg.sig_out, r);
            parents[j] = ad::project_q(t, pre, cfg.sig_out, r);
            zeta_next[j] = ad::diffeo_log(t, parents[j], cfg.sig_out, r);
        }

        for (int i = 0; i < nc; ++i) {
            std::vector<Var> incs(np);
            for (int j = 0; j < np; ++j) {
                Var inc;
                for (int k = 0; k < kk; ++k) {
                    Var agree = t.rowdot(zeta_next[j], xi_pred[idx(i, j, k)]);
                    Var term = unit_gates ? agree : t.mul(gamma[idx(i, j, k)], agree);
                    inc = k == 0 ? term : t.add(inc, term);
                }
                incs[j] = inc;
            }
            b[i] = t.add(b[i], t.concat_cols(incs));
        }

        zeta = std::move(zeta_next);
        for (int j = 0; j < np; ++j) {
            zeta_norm[j] = t.sqrt_guard(t.rowdot(zeta[j], zeta[j]), 1e-24);
        }
    }
    return parents;
}

} // namespace prcaps::routing
