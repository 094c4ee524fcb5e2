#include "rgcl/params.hpp"

#include <cmath>

#include "rgcl/error.hpp"

namespace rgcl {

BoundParams::BoundParams(Tape& tape, const ParamMap& params, bool requires_grad) {
    for (const auto& [name, value] : params) vars_.emplace(name, tape.leaf(value, requires_grad));
}

const Var& BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw InvalidArgument("missing parameter '" + name + "'");
    return it->second;
}

ParamMap BoundParams::gradients(const Gradients& grads) const {
    ParamMap out;
    for (const auto& [name, var] : vars_)
        out.emplace(name, grads.contains(var) ? grads.of(var) : Tensor(var.rows(), var.cols()));
    return out;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (double& v : w.values()) v = bound * (2.0 * uniform_open01(rng) - 1.0);
    return w;
}

void merge_params(ParamMap& dst, const ParamMap& src) {
    for (const auto& [name, value] : src)
        if (!dst.emplace(name, value).second)
            throw InvalidArgument("duplicate parameter name '" + name + "'");
}

ParamMap params_with_prefix(const ParamMap& params, const std::string& prefix) {
    ParamMap out;
    for (auto it = params.lower_bound(prefix); it != params.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.emplace(it->first, it->second);
    }
    return out;
}

double l2_norm(const ParamMap& params) {
    double s = 0.0;
    for (const auto& [_, t] : params)
        for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace rgcl
