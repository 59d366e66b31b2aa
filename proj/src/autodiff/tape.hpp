#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "autodiff/params.hpp"
#include "autodiff/tensor.hpp"
#include "common/rng.hpp"

namespace prcaps {

class Tape;

struct Var {
    int id = -1;
    int rows = 0;
    int cols = 0;
    bool valid() const { return id >= 0; }
};

// Symmetric normalized adjacency in row-list form, shared by value between
// the graph-encoder op and its gradient.
struct NormAdj {
    int n = 0;
    std::vector<std::vector<std::pair<int, double>>> rows;
};

// Eager reverse-mode tape over Tensor values. Ops compute their value at
// creation time and register a pullback closure; backward() walks nodes in
// reverse creation order, which is a topological order by construction.
class Tape {
public:
    Var leaf(Tensor value);
    Var zeros(int rows, int cols) { return leaf(Tensor(rows, cols)); }
    Var param(Param& p);

    const Tensor& val(Var x) const { return nodes_[x.id].val; }
    Tensor& grad_ref(Var x);

    // arithmetic
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);

    // linear algebra
    Var matmul_nt(Var x, Var w); // X[m,k] * W[n,k]^T -> [m,n]
    Var add_rowvec(Var x, Var b);
    Var mul_col(Var x, Var s);  // row i scaled by s[i,0]
    Var rowdot(Var a, Var b);   // [m,1]
    Var rowsum(Var a);          // [m,1]
    Var colmean(Var a);         // [1,n]
    Var sum_all(Var a);         // [1,1]

    // shape
    Var slice_cols(Var a, int lo, int n);
    Var concat_cols(const std::vector<Var>& parts);

    // [1,1] broadcasts
    Var mul_sv(Var x, Var s);
    Var add_sv(Var x, Var s);
    Var sub_sv(Var x, Var s);

    // elementwise
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var exp_(Var a);
    Var square(Var a);
    Var sqrt_guard(Var a, double eps); // sqrt(x + eps)
    Var recip(Var a);                  // caller keeps x away from zero
    Var clamp_(Var a, double lo, double hi);
    Var log_clamp(Var a, double lo, double hi);
    Var softmax_rows(Var a);
    Var dropout(Var a, double rate, Rng& rng);

    // fused geometric primitives at the pole of a radius-r sphere; stable
    // pullbacks including theta -> 0 series
    Var sphere_log_origin(Var p, double radius);
    Var sphere_exp_origin(Var v, double radius);

    // graph propagation: Y = A_hat * X, A_hat symmetric
    Var spmm(std::shared_ptr<const NormAdj> adj, Var x);

    // mean over masked rows of (logsumexp - logit at label); [1,1]
    Var ce_with_logits(Var logits, std::shared_ptr<const std::vector<int>> labels,
                       std::shared_ptr<const std::vector<std::uint8_t>> mask);

    void backward(Var root); // root must be [1,1]

    std::size_t node_count() const { return nodes_.size(); }
    void reset();

private:
    struct Node {
        Tensor val;
        Tensor grad; // empty until touched during backward
        std::function<void(Tape&, int)> back;
        Param* bound = nullptr;
    };

    Var push(Tensor value, std::function<void(Tape&, int)> back);
    void touch(int id);
    void check_same_shape(Var a, Var b, const char* op) const;

    std::vector<Node> nodes_;
};

} // namespace prcaps
