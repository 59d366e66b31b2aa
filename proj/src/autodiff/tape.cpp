#include "autodiff/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "kernels/kernels.hpp"

namespace prcaps {

namespace {
const kernels::Ops& K() { return kernels::ops(); }
} // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
    Node n;
    n.val = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    int id = static_cast<int>(nodes_.size()) - 1;
    return Var{id, nodes_[id].val.rows, nodes_[id].val.cols};
}

void Tape::touch(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
}

Tensor& Tape::grad_ref(Var x) {
    touch(x.id);
    return nodes_[x.id].grad;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw std::logic_error(std::string(op) + ": shape mismatch");
    }
}

Var Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::param(Param& p) {
    Var v = push(p.value, nullptr);
    nodes_[v.id].bound = &p;
    return v;
}

void Tape::reset() { nodes_.clear(); }

void Tape::backward(Var root) {
    if (root.rows != 1 || root.cols != 1) {
        throw std::logic_error("backward: root must be a scalar [1,1]");
    }
    touch(root.id);
    nodes_[root.id].grad.v[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        if (n.back) n.back(*this, id);
        if (n.bound) {
            K().add(n.bound->grad.v.data(), n.grad.v.data(), n.bound->grad.v.data(),
                    n.grad.v.size());
        }
    }
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor out(a.rows, a.cols);
    K().add(val(a).v.data(), val(b).v.data(), out.v.data(), out.v.size());
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        K().add(ga.v.data(), g.v.data(), ga.v.data(), g.v.size());
        K().add(gb.v.data(), g.v.data(), gb.v.data(), g.v.size());
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.rows, a.cols);
    K().sub(val(a).v.data(), val(b).v.data(), out.v.data(), out.v.size());
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        K().add(ga.v.data(), g.v.data(), ga.v.data(), g.v.size());
        K().axpy(-1.0, g.v.data(), gb.v.data(), g.v.size());
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.rows, a.cols);
    K().mul(val(a).v.data(), val(b).v.data(), out.v.data(), out.v.size());
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& av = t.val(a);
        const Tensor& bv = t.val(b);
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (int i = 0; i < g.size(); ++i) {
            ga.v[i] += g.v[i] * bv.v[i];
            gb.v[i] += g.v[i] * av.v[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    K().scale(c, out.v.data(), out.v.size());
    return push(std::move(out), [a, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        K().axpy(c, g.v.data(), t.grad_ref(a).v.data(), g.v.size());
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x += c;
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        K().add(ga.v.data(), g.v.data(), ga.v.data(), g.v.size());
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var Tape::matmul_nt(Var x, Var w) {
    if (x.cols != w.cols) throw std::logic_error("matmul_nt: inner dimension mismatch");
    Tensor out(x.rows, w.rows);
    kernels::matmul_nt(val(x).v.data(), val(w).v.data(), out.v.data(), x.rows, x.cols, w.rows);
    return push(std::move(out), [x, w](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad; // [m,n]
        // dX += G * W ; dW += G^T * X
        Tensor& gx = t.grad_ref(x);
        Tensor& gw = t.grad_ref(w);
        const Tensor& wv = t.val(w);
        const Tensor& xv = t.val(x);
        Tensor tmp(x.rows, x.cols);
        kernels::matmul_nn(g.v.data(), wv.v.data(), tmp.v.data(), g.rows, g.cols, wv.cols);
        K().add(gx.v.data(), tmp.v.data(), gx.v.data(), gx.v.size());
        kernels::matmul_tn_acc(g.v.data(), xv.v.data(), gw.v.data(), g.rows, g.cols, xv.cols);
    });
}

Var Tape::add_rowvec(Var x, Var b) {
    if (b.rows != 1 || b.cols != x.cols) throw std::logic_error("add_rowvec: shape mismatch");
    Tensor out = val(x);
    const Tensor& bv = val(b);
    for (int i = 0; i < x.rows; ++i) {
        K().add(out.row(i), bv.v.data(), out.row(i), out.cols);
    }
    return push(std::move(out), [x, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(x);
        Tensor& gb = t.grad_ref(b);
        K().add(gx.v.data(), g.v.data(), gx.v.data(), g.v.size());
        for (int i = 0; i < g.rows; ++i) K().add(gb.v.data(), g.row(i), gb.v.data(), g.cols);
    });
}

Var Tape::mul_col(Var x, Var s) {
    if (s.rows != x.rows || s.cols != 1) throw std::logic_error("mul_col: shape mismatch");
    Tensor out = val(x);
    const Tensor& sv = val(s);
    for (int i = 0; i < x.rows; ++i) K().scale(sv.v[i], out.row(i), out.cols);
    return push(std::move(out), [x, s](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.val(x);
        const Tensor& sv = t.val(s);
        Tensor& gx = t.grad_ref(x);
        Tensor& gs = t.grad_ref(s);
        for (int i = 0; i < g.rows; ++i) {
            K().axpy(sv.v[i], g.row(i), gx.row(i), g.cols);
            gs.v[i] += K().dot(g.row(i), xv.row(i), g.cols);
        }
    });
}

Var Tape::rowdot(Var a, Var b) {
    check_same_shape(a, b, "rowdot");
    Tensor out(a.rows, 1);
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    for (int i = 0; i < a.rows; ++i) out.v[i] = K().dot(av.row(i), bv.row(i), a.cols);
    return push(std::move(out), [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& av = t.val(a);
        const Tensor& bv = t.val(b);
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (int i = 0; i < g.rows; ++i) {
            K().axpy(g.v[i], bv.row(i), ga.row(i), av.cols);
            K().axpy(g.v[i], av.row(i), gb.row(i), av.cols);
        }
    });
}

Var Tape::rowsum(Var a) {
    Tensor out(a.rows, 1);
    const Tensor& av = val(a);
    for (int i = 0; i < a.rows; ++i) out.v[i] = K().sum(av.row(i), a.cols);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.rows; ++i) {
            for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.v[i];
        }
    });
}

Var Tape::colmean(Var a) {
    Tensor out(1, a.cols);
    const Tensor& av = val(a);
    for (int i = 0; i < a.rows; ++i) K().add(out.v.data(), av.row(i), out.v.data(), a.cols);
    K().scale(1.0 / a.rows, out.v.data(), a.cols);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        double inv = 1.0 / ga.rows;
        for (int i = 0; i < ga.rows; ++i) K().axpy(inv, g.v.data(), ga.row(i), ga.cols);
    });
}

Var Tape::sum_all(Var a) {
    Tensor out = Tensor::scalar(K().sum(val(a).v.data(), val(a).v.size()));
    return push(std::move(out), [a](Tape& t, int self) {
        double g = t.nodes_[self].grad.v[0];
        Tensor& ga = t.grad_ref(a);
        for (double& x : ga.v) x += g;
    });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Var Tape::slice_cols(Var a, int lo, int n) {
    if (lo < 0 || lo + n > a.cols) throw std::logic_error("slice_cols: out of range");
    Tensor out(a.rows, n);
    const Tensor& av = val(a);
    for (int i = 0; i < a.rows; ++i) {
        std::copy(av.row(i) + lo, av.row(i) + lo + n, out.row(i));
    }
    return push(std::move(out), [a, lo, n](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.rows; ++i) {
            K().add(ga.row(i) + lo, g.row(i), ga.row(i) + lo, n);
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::logic_error("concat_cols: empty");
    int rows = parts[0].rows;
    int cols = 0;
    for (const Var& p : parts) {
        if (p.rows != rows) throw std::logic_error("concat_cols: row mismatch");
        cols += p.cols;
    }
    Tensor out(rows, cols);
    int off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = val(p);
        for (int i = 0; i < rows; ++i) std::copy(pv.row(i), pv.row(i) + p.cols, out.row(i) + off);
        off += p.cols;
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), [ps](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        int off = 0;
        for (const Var& p : ps) {
            Tensor& gp = t.grad_ref(p);
            for (int i = 0; i < g.rows; ++i) {
                K().add(gp.row(i), g.row(i) + off, gp.row(i), p.cols);
            }
            off += p.cols;
        }
    });
}

// ---------------------------------------------------------------------------
// [1,1] broadcasts
// ---------------------------------------------------------------------------

Var Tape::mul_sv(Var x, Var s) {
    if (s.rows != 1 || s.cols != 1) throw std::logic_error("mul_sv: s must be scalar");
    double c = val(s).v[0];
    Tensor out = val(x);
    K().scale(c, out.v.data(), out.v.size());
    return push(std::move(out), [x, s](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        double c = t.val(s).v[0];
        Tensor& gx = t.grad_ref(x);
        Tensor& gs = t.grad_ref(s);
        K().axpy(c, g.v.data(), gx.v.data(), g.v.size());
        gs.v[0] += K().dot(g.v.data(), t.val(x).v.data(), g.v.size());
    });
}

Var Tape::add_sv(Var x, Var s) {
    if (s.rows != 1 || s.cols != 1) throw std::logic_error("add_sv: s must be scalar");
    Tensor out = val(x);
    double c = val(s).v[0];
    for (double& e : out.v) e += c;
    return push(std::move(out), [x, s](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(x);
        Tensor& gs = t.grad_ref(s);
        K().add(gx.v.data(), g.v.data(), gx.v.data(), g.v.size());
        gs.v[0] += K().sum(g.v.data(), g.v.size());
    });
}

Var Tape::sub_sv(Var x, Var s) {
    if (s.rows != 1 || s.cols != 1) throw std::logic_error("sub_sv: s must be scalar");
    Tensor out = val(x);
    double c = val(s).v[0];
    for (double& e : out.v) e -= c;
    return push(std::move(out), [x, s](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(x);
        Tensor& gs = t.grad_ref(s);
        K().add(gx.v.data(), g.v.data(), gx.v.data(), g.v.size());
        gs.v[0] -= K().sum(g.v.data(), g.v.size());
    });
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var Tape::tanh_(Var a) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::tanh(x);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
    });
}

Var Tape::sigmoid_(Var a) {
    Tensor out = val(a);
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
    });
}

Var Tape::exp_(Var a) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::exp(x);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * y.v[i];
    });
}

Var Tape::square(Var a) {
    Tensor out = val(a);
    for (double& x : out.v) x = x * x;
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.val(a);
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += 2.0 * g.v[i] * xv.v[i];
    });
}

Var Tape::sqrt_guard(Var a, double eps) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::sqrt(x + eps);
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] / (2.0 * y.v[i]);
    });
}

Var Tape::recip(Var a) {
    Tensor out = val(a);
    for (double& x : out.v) x = 1.0 / x;
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] -= g.v[i] * y.v[i] * y.v[i];
    });
}

Var Tape::clamp_(Var a, double lo, double hi) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::min(hi, std::max(lo, x));
    return push(std::move(out), [a, lo, hi](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.val(a);
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) {
            if (xv.v[i] >= lo && xv.v[i] <= hi) ga.v[i] += g.v[i];
        }
    });
}

Var Tape::log_clamp(Var a, double lo, double hi) {
    Tensor out = val(a);
    for (double& x : out.v) x = std::log(std::min(hi, std::max(lo, x)));
    return push(std::move(out), [a, lo, hi](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.val(a);
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) {
            if (xv.v[i] > lo && xv.v[i] < hi) ga.v[i] += g.v[i] / xv.v[i];
        }
    });
}

Var Tape::softmax_rows(Var a) {
    Tensor out = val(a);
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row(i);
        double mx = r[0];
        for (int j = 1; j < out.cols; ++j) mx = std::max(mx, r[j]);
        double z = 0.0;
        for (int j = 0; j < out.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            z += r[j];
        }
        for (int j = 0; j < out.cols; ++j) r[j] /= z;
    }
    return push(std::move(out), [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].val;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.rows; ++i) {
            double gy = K().dot(g.row(i), y.row(i), g.cols);
            for (int j = 0; j < g.cols; ++j) {
                ga.at(i, j) += y.at(i, j) * (g.at(i, j) - gy);
            }
        }
    });
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::logic_error("dropout: rate must be < 1");
    auto mask = std::make_shared<std::vector<double>>(val(a).v.size());
    double keep = 1.0 - rate;
    for (double& m : *mask) m = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    Tensor out = val(a);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= (*mask)[i];
    return push(std::move(out), [a, mask](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(a);
        for (int i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * (*mask)[i];
    });
}

// ---------------------------------------------------------------------------
// fused sphere primitives (pole base)
// ---------------------------------------------------------------------------

Var Tape::sphere_log_origin(Var p, double radius) {
    const Tensor& pv = val(p);
    Tensor out(p.rows, p.cols);
    const double guard = 1e-9;
    for (int i = 0; i < p.rows; ++i) {
        const double* r = pv.row(i);
        double c = r[0] / radius;
        if (c < -1.0 + guard) {
            throw std::domain_error("sphere_log_origin: input at cut locus");
        }
        double cc = std::min(c, 1.0);
        double theta = std::acos(std::max(-1.0, cc));
        double alpha = theta < 1e-9 ? 1.0 : theta / std::sin(theta);
        double* o = out.row(i);
        o[0] = alpha * (r[0] - cc * radius);
        for (int j = 1; j < p.cols; ++j) o[j] = alpha * r[j];
    }
    return push(std::move(out), [p, radius](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& pv = t.val(p);
        Tensor& gp = t.grad_ref(p);
        for (int i = 0; i < g.rows; ++i) {
            const double* r = pv.row(i);
            const double* gi = g.row(i);
            double* gpi = gp.row(i);
            double c = r[0] / radius;
            bool clamped = c >= 1.0;
            double cc = std::min(std::max(c, -1.0), 1.0);
            double theta = std::acos(cc);
            double alpha = theta < 1e-9 ? 1.0 : theta / std::sin(theta);
            // d out_j / d p_j = alpha for j >= 1; the p0 channel collects the
            // chain through theta, with the exact cancellation at j = 0.
            double gw = 0.0; // sum_j g_j * w_j, w = out/alpha
            gw += gi[0] * (r[0] - cc * radius);
            for (int j = 1; j < g.cols; ++j) gw += gi[j] * r[j];
            for (int j = 1; j < g.cols; ++j) gpi[j] += alpha * gi[j];
            if (clamped) {
                gpi[0] += alpha * gi[0];
            } else {
                double kappa; // alpha'(theta) * dtheta/dp0 = (th*cos - sin)/(r*sin^3)
                if (theta < 1e-3) {
                    kappa = -(1.0 / radius) * (1.0 / 3.0 + 2.0 * theta * theta / 15.0);
                } else {
                    double s = std::sin(theta);
                    kappa = (theta * std::cos(theta) - s) / (radius * s * s * s);
                }
                // the direct j=0 path cancels against the -alpha*r*dc/dp0 term,
                // leaving only the chain through theta
                gpi[0] += kappa * gw;
            }
        }
    });
}

Var Tape::sphere_exp_origin(Var v, double radius) {
    const Tensor& vv = val(v);
    Tensor out(v.rows, v.cols);
    for (int i = 0; i < v.rows; ++i) {
        const double* r = vv.row(i);
        double n = std::sqrt(K().dot(r, r, v.cols));
        double* o = out.row(i);
        if (n < 1e-12) {
            o[0] = radius + r[0];
            for (int j = 1; j < v.cols; ++j) o[j] = r[j];
        } else {
            double a = n / radius;
            double s = radius * std::sin(a) / n;
            o[0] = radius * std::cos(a) + s * r[0];
            for (int j = 1; j < v.cols; ++j) o[j] = s * r[j];
        }
    }
    return push(std::move(out), [v, radius](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vv = t.val(v);
        Tensor& gv = t.grad_ref(v);
        for (int i = 0; i < g.rows; ++i) {
            const double* r = vv.row(i);
            const double* gi = g.row(i);
            double* gvi = gv.row(i);
            double n = std::sqrt(K().dot(r, r, g.cols));
            if (n < 1e-12) {
                K().add(gvi, gi, gvi, g.cols);
                continue;
            }
            double a = n / radius;
            double s = radius * std::sin(a) / n;
            double gV = K().dot(gi, r, g.cols);
            // C = [-sin(a)*g0 + ds/dn * (g.v)] / n
            double coef;
            if (a < 1e-4) {
                double sin_over_n = (1.0 / radius) * (1.0 - a * a / 6.0);
                double dsdn_over_n = -1.0 / (3.0 * radius * radius);
                coef = -gi[0] * sin_over_n + dsdn_over_n * gV;
            } else {
                double dsdn = (n * std::cos(a) - radius * std::sin(a)) / (n * n);
                coef = (-std::sin(a) * gi[0] + dsdn * gV) / n;
            }
            for (int j = 0; j < g.cols; ++j) gvi[j] += s * gi[j] + coef * r[j];
        }
    });
}

// ---------------------------------------------------------------------------
// graph propagation and loss
// ---------------------------------------------------------------------------

Var Tape::spmm(std::shared_ptr<const NormAdj> adj, Var x) {
    if (adj->n != x.rows) throw std::logic_error("spmm: adjacency/feature row mismatch");
    const Tensor& xv = val(x);
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < adj->n; ++i) {
        for (const auto& [j, w] : adj->rows[i]) {
            K().axpy(w, xv.row(j), out.row(i), x.cols);
        }
    }
    return push(std::move(out), [adj, x](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(x);
        // A_hat is symmetric, so the pullback reuses the same row lists
        for (int i = 0; i < adj->n; ++i) {
            for (const auto& [j, w] : adj->rows[i]) {
                K().axpy(w, g.row(i), gx.row(j), g.cols);
            }
        }
    });
}

Var Tape::ce_with_logits(Var logits, std::shared_ptr<const std::vector<int>> labels,
                         std::shared_ptr<const std::vector<std::uint8_t>> mask) {
    if (static_cast<int>(labels->size()) != logits.rows ||
        static_cast<int>(mask->size()) != logits.rows) {
        throw std::logic_error("ce_with_logits: label/mask length mismatch");
    }
    const Tensor& lv = val(logits);
    int m_cnt = 0;
    double loss = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        if (!(*mask)[i]) continue;
        int y = (*labels)[i];
        if (y < 0 || y >= logits.cols) throw std::out_of_range("ce_with_logits: label out of range");
        const double* r = lv.row(i);
        double mx = r[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, r[j]);
        double z = 0.0;
        for (int j = 0; j < logits.cols; ++j) z += std::exp(r[j] - mx);
        loss += std::log(z) + mx - r[y];
        ++m_cnt;
    }
    if (m_cnt == 0) throw std::logic_error("ce_with_logits: empty mask");
    loss /= m_cnt;
    return push(Tensor::scalar(loss), [logits, labels, mask, m_cnt](Tape& t, int self) {
        double g = t.nodes_[self].grad.v[0] / m_cnt;
        const Tensor& lv = t.val(logits);
        Tensor& gl = t.grad_ref(logits);
        for (int i = 0; i < lv.rows; ++i) {
            if (!(*mask)[i]) continue;
            const double* r = lv.row(i);
            double mx = r[0];
            for (int j = 1; j < lv.cols; ++j) mx = std::max(mx, r[j]);
            double z = 0.0;
            for (int j = 0; j < lv.cols; ++j) z += std::exp(r[j] - mx);
            for (int j = 0; j < lv.cols; ++j) {
                double p = std::exp(r[j] - mx) / z;
                gl.at(i, j) += g * (p - (j == (*labels)[i] ? 1.0 : 0.0));
            }
        }
    });
}

} // namespace prcaps
