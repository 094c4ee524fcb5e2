#include "rgcl/contrastive.hpp"

#include <cmath>

#include "rgcl/encoder.hpp"
#include "rgcl/error.hpp"

namespace rgcl {

using nlohmann::json;

void ProjectorConfig::validate() const {
    if (hidden < 1 || out < 1) throw InvalidArgument("projector widths must be >= 1");
}

json to_json(const ProjectorConfig& c) { return {{"hidden", c.hidden}, {"out", c.out}}; }

ProjectorConfig projector_config_from_json(const json& j) {
    ProjectorConfig c;
    c.hidden = j.value("hidden", c.hidden);
    c.out = j.value("out", c.out);
    return c;
}

ParamMap init_projector_params(std::size_t in_dim, const ProjectorConfig& config,
                               std::uint64_t seed, const std::string& prefix) {
    config.validate();
    Rng rng(seed);
    ParamMap p;
    p[prefix + ".w1"] = glorot_uniform(in_dim, config.hidden, rng);
    p[prefix + ".b1"] = Tensor(1, config.hidden);
    p[prefix + ".w2"] = glorot_uniform(config.hidden, config.out, rng);
    p[prefix + ".b2"] = Tensor(1, config.out);
    return p;
}

Var project(const Var& x, const BoundParams& params, const std::string& prefix) {
    const Var& w1 = params[prefix + ".w1"];
    if (x.cols() != w1.rows())
        throw InvalidArgument("project: input width " + std::to_string(x.cols()) +
                              " != projector input " + std::to_string(w1.rows()));
    return ad::l2_normalize(mlp2(x, w1, params[prefix + ".b1"], params[prefix + ".w2"],
                                 params[prefix + ".b2"]));
}

std::vector<ViewRef> sufficiency_denominator(std::size_t num_anchors, std::size_t anchor) {
    std::vector<ViewRef> refs;
    refs.reserve(2 * (num_anchors - 1));
    for (std::size_t i = 0; i < num_anchors; ++i) {
        if (i == anchor) continue;
        refs.push_back({ViewRef::Set::first, i});
        refs.push_back({ViewRef::Set::second, i});
    }
    return refs;
}

std::vector<ViewRef> independence_denominator(std::size_t num_anchors, std::size_t anchor) {
    std::vector<ViewRef> refs;
    refs.reserve(num_anchors + 1);
    refs.push_back({ViewRef::Set::second, anchor});
    for (std::size_t i = 0; i < num_anchors; ++i) refs.push_back({ViewRef::Set::complement, i});
    return refs;
}

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("temperature tau must be > 0");
}

void check_views(const BatchViews& v) {
    const std::size_t n = v.first.rows();
    if (v.second.rows() != n || v.second.cols() != v.first.cols())
        throw InvalidArgument("rationale view matrices differ in shape");
    if (v.complement && (v.complement->rows() != n || v.complement->cols() != v.first.cols()))
        throw InvalidArgument("complement matrix shape differs from rationale views");
}

// Similarities of each r'_n against the rows of `keys`, divided by tau.
Var scaled_similarity(const Var& queries, const Var& keys, double tau) {
    return ad::scale(ad::matmul(queries, ad::transpose(keys)), 1.0 / tau);
}

// Column of `set` block within the concatenated similarity matrix.
std::size_t column_of(const ViewRef& r, std::size_t n, ViewRef::Set left) {
    return (r.set == left ? 0 : n) + r.index;
}

Var positive_logits(const Var& s_second, std::size_t n) {
    std::vector<std::pair<std::size_t, std::size_t>> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = {i, i};
    return ad::gather_entries(s_second, diag);
}

}  // namespace

Var sufficiency_losses(const BatchViews& views, double tau) {
    check_tau(tau);
    check_views(views);
    const std::size_t n = views.size();
    if (n < 2) throw InvalidArgument("sufficiency loss needs N >= 2 anchors for negatives");
    Var s_first = scaled_similarity(views.first, views.first, tau);
    Var s_second = scaled_similarity(views.first, views.second, tau);
    Var all = ad::concat_cols(s_first, s_second);
    std::vector<std::vector<bool>> mask(n, std::vector<bool>(2 * n, false));
    for (std::size_t a = 0; a < n; ++a)
        for (const ViewRef& r : sufficiency_denominator(n, a))
            mask[a][column_of(r, n, ViewRef::Set::first)] = true;
    return ad::sub(ad::masked_row_logsumexp(all, mask), positive_logits(s_second, n));
}

Var independence_losses(const BatchViews& views, double tau) {
    check_tau(tau);
    check_views(views);
    if (!views.complement) throw InvalidArgument("independence loss needs complement views");
    const std::size_t n = views.size();
    if (n < 1) throw InvalidArgument("independence loss needs at least one anchor");
    Var s_second = scaled_similarity(views.first, views.second, tau);
    Var s_comp = scaled_similarity(views.first, *views.complement, tau);
    Var all = ad::concat_cols(s_second, s_comp);
    std::vector<std::vector<bool>> mask(n, std::vector<bool>(2 * n, false));
    for (std::size_t a = 0; a < n; ++a)
        for (const ViewRef& r : independence_denominator(n, a))
            mask[a][column_of(r, n, ViewRef::Set::second)] = true;
    return ad::sub(ad::masked_row_logsumexp(all, mask), positive_logits(s_second, n));
}

Var sufficiency_loss(const BatchViews& views, std::size_t anchor, double tau) {
    if (anchor >= views.size()) throw InvalidArgument("anchor index out of range");
    const std::size_t row[] = {anchor};
    return ad::gather_rows(sufficiency_losses(views, tau), row);
}

Var independence_loss(const BatchViews& views, std::size_t anchor, double tau) {
    if (anchor >= views.size()) throw InvalidArgument("anchor index out of range");
    const std::size_t row[] = {anchor};
    return ad::gather_rows(independence_losses(views, tau), row);
}

json to_json(const LossReport& r, std::size_t step) {
    return {{"step", step}, {"l_su", r.l_su}, {"l_in", r.l_in}, {"total", r.total}};
}

RgclLoss rgcl_loss(const BatchViews& views, double tau, double lambda) {
    if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
    if (!views.complement && lambda != 0.0)
        throw InvalidArgument("lambda > 0 requires complement views");
    const double n = static_cast<double>(views.size());
    Var su = sufficiency_losses(views, tau);
    RgclLoss out;
    out.report.tau = tau;
    out.report.lambda = lambda;
    double su_sum = 0.0;
    for (double v : su.value().values()) su_sum += v;
    out.report.l_su = su_sum / n;

    Var per_anchor = su;
    if (views.complement) {
        Var in = independence_losses(views, tau);
        double in_sum = 0.0;
        for (double v : in.value().values()) in_sum += v;
        out.report.l_in = in_sum / n;
        per_anchor = ad::add(su, ad::scale(in, lambda));
    }
    out.total = ad::mean(per_anchor);
    out.report.total = out.total.value().item();
    return out;
}

}  // namespace rgcl
