#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rgcl/rng.hpp"
#include "rgcl/tensor.hpp"

namespace rgcl {

/// Named parameter tensors. std::map keeps a stable (sorted) iteration order,
/// which the optimizer and checkpoint format rely on.
using ParamMap = std::map<std::string, Tensor>;

/// Parameters placed on a tape for one forward pass.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamMap& params, bool requires_grad);

    const Var& operator[](const std::string& name) const;
    bool contains(const std::string& name) const { return vars_.count(name) != 0; }
    const std::map<std::string, Var>& vars() const { return vars_; }

    /// Collects d(loss)/d(param) for every bound parameter.
    ParamMap gradients(const Gradients& grads) const;

private:
    std::map<std::string, Var> vars_;
};

/// Glorot-uniform fan_in x fan_out matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Merges `src` into `dst`; names must not collide.
void merge_params(ParamMap& dst, const ParamMap& src);

/// Subset of `params` whose names start with `prefix`.
ParamMap params_with_prefix(const ParamMap& params, const std::string& prefix);

double l2_norm(const ParamMap& params);

}  // namespace rgcl
