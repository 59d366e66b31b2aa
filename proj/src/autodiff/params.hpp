#pragma once

#include <memory>
#include <string>
#include <vector>

#include "autodiff/tensor.hpp"
#include "common/rng.hpp"

namespace prcaps {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Owns all trainable tensors of a model, keyed by unique name. Creation
// order is fixed by construction code, which makes optimizer traversal and
// checkpoint layout deterministic.
class ParamStore {
public:
    Param& create(const std::string& name, int rows, int cols);
    Param& create_glorot(const std::string& name, int rows, int cols, Rng& rng);

    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    std::vector<std::unique_ptr<Param>>& items() { return items_; }
    const std::vector<std::unique_ptr<Param>>& items() const { return items_; }

    std::size_t count() const { return items_.size(); }
    std::size_t scalar_count() const;
    void zero_grads();

private:
    std::vector<std::unique_ptr<Param>> items_;
};

} // namespace prcaps
