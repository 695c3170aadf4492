#include "edgesplat/densify.hpp"
#include "edgesplat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace edgesplat {

namespace {

constexpr double kEasEpsilon = 1e-12;
constexpr double kBaselineShrink = 1.6;

double positive_uniform(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double x = u(rng);
    return x > 0.0 ? x : std::numeric_limits<double>::min();
}

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError("densify policy: " + what);
    }
}

} // namespace

void DensifyPolicy::validate() const {
    require(std::isfinite(abs_grad_threshold) && abs_grad_threshold >= 0.0, "abs_grad_threshold must be >= 0");
    require(eas_sample_views >= 1, "eas_sample_views must be >= 1");
    require(las_d_fraction > 0.0 && las_d_fraction <= 0.5, "las_d_fraction must lie in (0, 0.5]");
    require(las_opacity_factor > 0.0 && las_opacity_factor <= 1.0, "las_opacity_factor must lie in (0, 1]");
    require(budget_max >= 1, "budget_max must be >= 1");
    require(densify_start_iter >= 0 && densify_end_iter > densify_start_iter,
            "densify window must satisfy 0 <= start < end");
    require(densify_interval >= 1, "densify_interval must be >= 1");
    require(reset_interval >= 1, "reset_interval must be >= 1");
    for (std::size_t i = 0; i < rap_iters.size(); ++i) {
        require(rap_iters[i] >= 0 && rap_iters[i] < densify_end_iter, "rap_iters must lie before densify_end_iter");
        require(i == 0 || rap_iters[i] > rap_iters[i - 1], "rap_iters must be strictly increasing");
    }
    require(rap_fraction > 0.0 && rap_fraction < 1.0, "rap_fraction must lie in (0, 1)");
    require(reset_opacity_value > 0.0 && reset_opacity_value < 1.0, "reset_opacity_value must lie in (0, 1)");
    require(reset_eligibility_threshold > 0.0 && reset_eligibility_threshold < 1.0,
            "reset_eligibility_threshold must lie in (0, 1)");
    require(min_opacity_prune >= 0.0 && min_opacity_prune < 1.0, "min_opacity_prune must lie in [0, 1)");
    require(!rs_multiplier || (*rs_multiplier > 0.0 && std::isfinite(*rs_multiplier)),
            "rs_multiplier must be positive");
    require(clone_scale_fraction > 0.0, "clone_scale_fraction must be positive");
    require(large_prune_fraction > 0.0, "large_prune_fraction must be positive");
}

double average_abs_grad(const DensifyStats& s) {
    return s.view_count > 0 ? s.sum_abs_grad / static_cast<double>(s.view_count) : 0.0;
}

double average_grad(const DensifyStats& s) {
    return s.view_count > 0 ? s.sum_grad / static_cast<double>(s.view_count) : 0.0;
}

void accumulate_view_stats(GaussianScene& scene, std::span<const std::uint8_t> hit, std::span<const double> grad,
                           std::span<const double> abs_grad) {
    const std::size_t n = scene.size();
    if (hit.size() != n || grad.size() != n || abs_grad.size() != n) {
        throw InvalidParameter("accumulate_view_stats: arrays not aligned with the scene");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (hit[i]) {
            DensifyStats& s = scene.stats[i];
            s.sum_grad += grad[i];
            s.sum_abs_grad += abs_grad[i];
            ++s.view_count;
        }
    }
}

std::vector<double> accumulate_eas(const GaussianScene& scene, std::span<const EasView> views, int n_s,
                                   std::mt19937_64& rng, const RenderSettings& settings) {
    if (views.empty()) {
        throw InvalidParameter("accumulate_eas: empty view set");
    }
    if (n_s < 1) {
        throw InvalidParameter("accumulate_eas: n_s must be >= 1");
    }
    const std::size_t take = std::min(static_cast<std::size_t>(n_s), views.size());
    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<std::size_t> chosen;
    if (take == views.size()) {
        chosen = order;
    } else {
        std::sample(order.begin(), order.end(), std::back_inserter(chosen), take, rng);
    }

    std::vector<double> eas(scene.size(), 0.0);
    for (std::size_t v : chosen) {
        const RenderOutput out = render(scene, *views[v].camera, views[v].edges, settings);
        for (std::size_t i = 0; i < eas.size(); ++i) {
            eas[i] += out.bundle.per_gaussian_eas[i];
        }
    }
    for (double& e : eas) {
        e /= static_cast<double>(take);
    }
    return eas;
}

std::vector<std::size_t> select_split_set(const GaussianScene& scene, std::span<const double> eas,
                                          std::int64_t budget_now, const DensifyPolicy& policy,
                                          std::mt19937_64& rng) {
    if (eas.size() != scene.size()) {
        throw InvalidParameter("select_split_set: eas not aligned with the scene");
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (average_abs_grad(scene.stats[i]) > policy.abs_grad_threshold) {
            candidates.push_back(i);
        }
    }
    const std::int64_t headroom = std::max<std::int64_t>(0, budget_now - static_cast<std::int64_t>(scene.size()));
    if (static_cast<std::int64_t>(candidates.size()) <= headroom) {
        return candidates;
    }
    // Weighted sampling without replacement: keep the largest log(u) / w keys.
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(candidates.size());
    for (std::size_t i : candidates) {
        keys.emplace_back(std::log(positive_uniform(rng)) / (std::max(eas[i], 0.0) + kEasEpsilon), i);
    }
    const auto k = static_cast<std::ptrdiff_t>(headroom);
    std::partial_sort(keys.begin(), keys.begin() + k, keys.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::size_t> picked;
    picked.reserve(static_cast<std::size_t>(k));
    for (std::ptrdiff_t j = 0; j < k; ++j) {
        picked.push_back(keys[static_cast<std::size_t>(j)].second);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

std::pair<GaussianPrimitive, GaussianPrimitive> long_axis_split(const GaussianPrimitive& g, double d_fraction,
                                                                double opacity_factor,
                                                                std::optional<double> rs_multiplier) {
    if (!(d_fraction > 0.0 && d_fraction <= 0.5)) {
        throw InvalidParameter("long_axis_split: d_fraction must lie in (0, 0.5]");
    }
    if (!(opacity_factor > 0.0 && opacity_factor <= 1.0)) {
        throw InvalidParameter("long_axis_split: opacity_factor must lie in (0, 1]");
    }
    const AxisInfo axis = longest_axis(g);
    const double l0 = axis.semi_length;
    const double d = d_fraction * l0;
    const double minor = rs_multiplier ? *rs_multiplier : std::sqrt(1.0 - d_fraction * d_fraction);

    GaussianPrimitive child = g;
    for (int k = 0; k < 3; ++k) {
        child.log_scale[k] = k == axis.index ? std::log(l0 - d) : g.log_scale[k] + std::log(minor);
    }
    child.opacity_logit = inverse_sigmoid(opacity_factor * g.opacity());
    GaussianPrimitive a = child, b = child;
    a.mean = g.mean + d * axis.direction;
    b.mean = g.mean - d * axis.direction;
    return {a, b};
}

void baseline_clone(GaussianScene& scene, std::size_t index) {
    if (index >= scene.size()) {
        throw InvalidParameter("baseline_clone: index out of range");
    }
    const GaussianPrimitive copy = scene.primitives[index];
    scene.append(copy);
}

std::pair<GaussianPrimitive, GaussianPrimitive> baseline_split(const GaussianPrimitive& g, std::mt19937_64& rng) {
    const Mat3 r = g.rotation_matrix();
    const Vec3 s = g.scale();
    auto child = [&] {
        std::normal_distribution<double> n(0.0, 1.0);
        GaussianPrimitive c = g;
        const Vec3 z(n(rng), n(rng), n(rng));
        c.mean = g.mean + r * s.cwiseProduct(z);
        c.log_scale = g.log_scale.array() - std::log(kBaselineShrink);
        return c;
    };
    GaussianPrimitive a = child();
    GaussianPrimitive b = child();
    return {a, b};
}

std::int64_t growth_curve(int iter, const DensifyPolicy& policy) {
    const double span = static_cast<double>(policy.densify_end_iter - policy.densify_start_iter);
    const double ratio = std::clamp((iter - policy.densify_start_iter) / span, 0.0, 1.0);
    return static_cast<std::int64_t>(std::floor(static_cast<double>(policy.budget_max) * std::sqrt(ratio)));
}

std::int64_t growth_budget(int iter, const DensifyPolicy& policy, std::int64_t current_count,
                           std::int64_t initial_count) {
    return std::max({growth_curve(iter, policy), current_count, initial_count});
}

PruneReport recovery_aware_prune(GaussianScene& scene, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw InvalidParameter("recovery_aware_prune: fraction must lie in (0, 1)");
    }
    const std::size_t n = scene.size();
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scene.primitives[a].opacity() < scene.primitives[b].opacity();
    });
    PruneReport rep;
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t j = 0; j < k; ++j) {
        mask[order[j]] = 1;
        rep.removed_max_opacity = std::max(rep.removed_max_opacity, scene.primitives[order[j]].opacity());
    }
    for (std::size_t j = k; j < n; ++j) {
        rep.kept_min_opacity = std::min(rep.kept_min_opacity, scene.primitives[order[j]].opacity());
    }
    rep.removed = scene.remove_masked(mask);
    return rep;
}

std::size_t reset_opacity(GaussianScene& scene, const DensifyPolicy& policy) {
    const double logit = inverse_sigmoid(policy.reset_opacity_value);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (scene.primitives[i].opacity() > policy.reset_eligibility_threshold) {
            scene.primitives[i].opacity_logit = logit;
            scene.moments[i].first[param::kOpacity] = 0.0;
            scene.moments[i].second[param::kOpacity] = 0.0;
            ++changed;
        }
    }
    return changed;
}

std::size_t prune_transparent(GaussianScene& scene, double min_opacity) {
    std::vector<std::uint8_t> mask(scene.size(), 0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        mask[i] = scene.primitives[i].opacity() < min_opacity;
    }
    return scene.remove_masked(mask);
}

std::size_t prune_large(GaussianScene& scene, double max_scale) {
    std::vector<std::uint8_t> mask(scene.size(), 0);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        mask[i] = scene.primitives[i].scale().maxCoeff() > max_scale;
    }
    return scene.remove_masked(mask);
}

namespace {

// Removes the listed parents and appends their children, keeping the
// survivors' order and optimiser state.
void replace_with_children(GaussianScene& scene, const std::vector<std::size_t>& parents,
                           const std::vector<std::pair<GaussianPrimitive, GaussianPrimitive>>& children) {
    std::vector<std::uint8_t> mask(scene.size(), 0);
    for (std::size_t i : parents) {
        mask[i] = 1;
    }
    scene.remove_masked(mask);
    for (const auto& [a, b] : children) {
        scene.append(a);
        scene.append(b);
    }
}

DensifyRoundReport improved_round(GaussianScene& scene, const DensifyContext& ctx, int iter,
                                  const DensifyPolicy& policy, std::mt19937_64& rng) {
    DensifyRoundReport rep;
    const auto count = static_cast<std::int64_t>(scene.size());
    rep.budget = policy.growth_control ? growth_budget(iter, policy, count, ctx.initial_count)
                                       : std::max(policy.budget_max, count);
    for (const DensifyStats& s : scene.stats) {
        rep.candidates += average_abs_grad(s) > policy.abs_grad_threshold;
    }
    if (rep.candidates == 0 || rep.budget <= count) {
        return rep;
    }
    std::vector<double> eas(scene.size(), 0.0);
    if (static_cast<std::int64_t>(rep.candidates) > rep.budget - count) {
        eas = accumulate_eas(scene, ctx.views, policy.eas_sample_views, rng, ctx.render_settings);
    }
    const std::vector<std::size_t> selected = select_split_set(scene, eas, rep.budget, policy, rng);
    std::vector<std::pair<GaussianPrimitive, GaussianPrimitive>> children;
    children.reserve(selected.size());
    for (std::size_t i : selected) {
        children.push_back(long_axis_split(scene.primitives[i], policy.las_d_fraction, policy.las_opacity_factor,
                                           policy.rs_multiplier));
    }
    replace_with_children(scene, selected, children);
    rep.splits = selected.size();
    return rep;
}

DensifyRoundReport baseline_round(GaussianScene& scene, const DensifyContext& ctx, const DensifyPolicy& policy,
                                  std::mt19937_64& rng) {
    DensifyRoundReport rep;
    const auto count = static_cast<std::int64_t>(scene.size());
    rep.budget = std::max(policy.budget_max, count);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (average_grad(scene.stats[i]) > policy.abs_grad_threshold) {
            candidates.push_back(i);
        }
    }
    rep.candidates = candidates.size();
    const auto headroom = static_cast<std::size_t>(rep.budget - count);
    if (candidates.size() > headroom) {
        std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
            return average_grad(scene.stats[a]) > average_grad(scene.stats[b]);
        });
        candidates.resize(headroom);
        std::sort(candidates.begin(), candidates.end());
    }

    const double clone_limit = policy.clone_scale_fraction * ctx.scene_extent;
    std::vector<std::size_t> to_clone, to_split;
    for (std::size_t i : candidates) {
        (scene.primitives[i].scale().maxCoeff() <= clone_limit ? to_clone : to_split).push_back(i);
    }
    std::vector<std::pair<GaussianPrimitive, GaussianPrimitive>> children;
    children.reserve(to_split.size());
    for (std::size_t i : to_split) {
        children.push_back(baseline_split(scene.primitives[i], rng));
    }
    // Clones first so their indices are still valid, then the splits.
    for (std::size_t i : to_clone) {
        baseline_clone(scene, i);
    }
    replace_with_children(scene, to_split, children);
    rep.clones = to_clone.size();
    rep.splits = to_split.size();
    return rep;
}

} // namespace

DensifyRoundReport densify_round(GaussianScene& scene, const DensifyContext& ctx, int iter,
                                 const DensifyPolicy& policy, DensifyMode mode, std::mt19937_64& rng) {
    scene.check_aligned();
    const std::size_t before = scene.size();
    DensifyRoundReport rep = mode == DensifyMode::improved ? improved_round(scene, ctx, iter, policy, rng)
                                                           : baseline_round(scene, ctx, policy, rng);
    rep.iter = iter;
    rep.count_before = before;
    rep.pruned = prune_transparent(scene, policy.min_opacity_prune);
    if (mode == DensifyMode::baseline_adc && iter > policy.reset_interval) {
        rep.pruned += prune_large(scene, policy.large_prune_fraction * ctx.scene_extent);
    }
    scene.reset_stats();
    rep.count_after = scene.size();
    return rep;
}

} // namespace edgesplat
