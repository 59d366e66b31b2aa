#pragma once

#include <cassert>
#include <vector>

namespace prcaps {

// Dense row-major matrix of doubles. Vectors are [n,1] or [1,n]; scalars [1,1].
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    int size() const { return rows * cols; }
    bool empty() const { return v.empty(); }

    double* row(int i) { return v.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return v.data() + static_cast<size_t>(i) * cols; }

    double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

bool all_finite(const Tensor& t);

} // namespace prcaps
