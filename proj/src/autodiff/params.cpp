#include "autodiff/params.hpp"

#include <cmath>
#include <stdexcept>

namespace prcaps {

bool all_finite(const Tensor& t) {
    for (double x : t.v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Param& ParamStore::create(const std::string& name, int rows, int cols) {
    if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
    items_.push_back(std::make_unique<Param>());
    Param& p = *items_.back();
    p.name = name;
    p.value = Tensor(rows, cols);
    p.grad = Tensor(rows, cols);
    return p;
}

Param& ParamStore::create_glorot(const std::string& name, int rows, int cols, Rng& rng) {
    Param& p = create(name, rows, cols);
    double std = std::sqrt(2.0 / (rows + cols));
    for (double& x : p.value.v) x = std * rng.gaussian();
    return p;
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : items_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : items_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

void ParamStore::zero_grads() {
    for (auto& p : items_) {
        std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);
    }
}

} // namespace prcaps
