#pragma once

#include "edgesplat/camera.hpp"
#include "edgesplat/imaging.hpp"
#include "edgesplat/renderer.hpp"
#include "edgesplat/scene.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace edgesplat {

enum class DensifyMode { baseline_adc, improved };

/// Schedule and threshold constants. Iteration fields are absolute iteration
/// counts; the trainer resolves them from fractions of the run length.
struct DensifyPolicy {
    // Mean screen-space gradient norm in pixel units, calibrated for ~128 px images.
    double abs_grad_threshold = 0.0001;
    int eas_sample_views = 8;
    double las_d_fraction = 0.45;
    double las_opacity_factor = 0.6;
    std::int64_t budget_max = 100000;
    int densify_start_iter = 500;
    int densify_end_iter = 15000;
    std::vector<int> rap_iters{3300, 6300};
    double rap_fraction = 0.2;
    int reset_interval = 3000;
    double reset_opacity_value = 0.05;
    double reset_eligibility_threshold = 0.05; // opacities above this are reset
    double min_opacity_prune = 0.005;
    int densify_interval = 100;

    bool growth_control = true;
    /// Replaces the minor-axis factor sqrt(1 - f^2) with this constant when set.
    std::optional<double> rs_multiplier;
    /// Baseline clone-versus-split size test, as a fraction of scene extent.
    double clone_scale_fraction = 0.01;
    /// Baseline removal of Gaussians wider than this fraction of scene extent
    /// (after the first opacity reset). Not used in improved mode.
    double large_prune_fraction = 0.1;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

/// sum_abs_grad / view_count, or 0 without views.
double average_abs_grad(const DensifyStats& s);
/// sum_grad / view_count, or 0 without views.
double average_grad(const DensifyStats& s);

/// Adds one view's per-Gaussian gradient norms to the running statistics of
/// every primitive that took part in the view.
void accumulate_view_stats(GaussianScene& scene, std::span<const std::uint8_t> hit,
                           std::span<const double> grad, std::span<const double> abs_grad);

/// One training view as seen by the edge-aware score.
struct EasView {
    const ViewCamera* camera = nullptr;
    const EdgeWeightMap* edges = nullptr;
};

/// Mean per-view edge-aware score over min(n_s, |views|) views drawn without
/// replacement. Throws InvalidParameter on an empty view set or n_s < 1.
std::vector<double> accumulate_eas(const GaussianScene& scene, std::span<const EasView> views, int n_s,
                                   std::mt19937_64& rng, const RenderSettings& settings = {});

/// Candidates are the primitives whose mean absolute gradient exceeds the
/// threshold. When they outnumber the headroom, `headroom` of them are drawn
/// without replacement with probability proportional to eas + 1e-12.
/// Returned indices are ascending.
std::vector<std::size_t> select_split_set(const GaussianScene& scene, std::span<const double> eas,
                                          std::int64_t budget_now, const DensifyPolicy& policy,
                                          std::mt19937_64& rng);

/// Children along the longest axis at +-d, long scale L0 - d, other scales
/// multiplied by sqrt(1 - f^2) (or `rs_multiplier` when given), opacity scaled by
/// `opacity_factor`. Throws InvalidParameter for f outside (0, 0.5] or a factor
/// outside (0, 1].
std::pair<GaussianPrimitive, GaussianPrimitive> long_axis_split(const GaussianPrimitive& g, double d_fraction,
                                                                double opacity_factor,
                                                                std::optional<double> rs_multiplier = std::nullopt);

/// Appends an exact copy of primitive `index` with zeroed optimiser state.
void baseline_clone(GaussianScene& scene, std::size_t index);

/// Two children with scales / 1.6 and means drawn from N(mean, Sigma).
std::pair<GaussianPrimitive, GaussianPrimitive> baseline_split(const GaussianPrimitive& g, std::mt19937_64& rng);

/// floor(N_max sqrt(clamp((I - I_start) / (I_end - I_start), 0, 1))).
std::int64_t growth_curve(int iter, const DensifyPolicy& policy);

/// growth_curve, raised to the current and initial counts.
std::int64_t growth_budget(int iter, const DensifyPolicy& policy, std::int64_t current_count,
                           std::int64_t initial_count);

struct PruneReport {
    std::size_t removed = 0;
    double removed_max_opacity = 0.0; // 0 when nothing was removed
    double kept_min_opacity = 1.0;    // 1 when nothing is left
};

/// Removes the floor(fraction n) least opaque primitives (lower index first on ties).
PruneReport recovery_aware_prune(GaussianScene& scene, double fraction);

/// Sets every opacity above the eligibility threshold to the reset value and
/// clears the opacity moments of the affected primitives. Returns how many changed.
std::size_t reset_opacity(GaussianScene& scene, const DensifyPolicy& policy);

/// Removes primitives with opacity below `min_opacity`. Returns how many.
std::size_t prune_transparent(GaussianScene& scene, double min_opacity);

/// Removes primitives whose largest scale exceeds `max_scale`. Returns how many.
std::size_t prune_large(GaussianScene& scene, double max_scale);

struct DensifyContext {
    std::span<const EasView> views;   // training views (improved mode)
    double scene_extent = 1.0;
    std::int64_t initial_count = 0;
    RenderSettings render_settings{};
};

struct DensifyRoundReport {
    int iter = 0;
    std::size_t candidates = 0;
    std::size_t splits = 0;
    std::size_t clones = 0;
    std::size_t pruned = 0;
    std::size_t count_before = 0;
    std::size_t count_after = 0;
    std::int64_t budget = 0;
};

/// One densification round followed by pruning and a statistics reset.
DensifyRoundReport densify_round(GaussianScene& scene, const DensifyContext& ctx, int iter,
                                 const DensifyPolicy& policy, DensifyMode mode, std::mt19937_64& rng);

} // namespace edgesplat
