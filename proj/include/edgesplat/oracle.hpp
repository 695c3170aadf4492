#pragma once

#include "edgesplat/camera.hpp"
#include "edgesplat/imaging.hpp"
#include "edgesplat/model.hpp"
#include "edgesplat/renderer.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

// Brute-force checkers. Nothing in here calls the densifier or the analytic
// backward pass; they exist to be compared against those.
namespace edgesplat::oracle {

using ChildPair = std::pair<GaussianPrimitive, GaussianPrimitive>;

/// 3D: 1-sigma ellipsoid solids. 2D: their sections by the plane through the
/// parent mean spanned by its longest and middle principal axes.
enum class ShapeMode { volume3d, cross_section2d };

struct ShapeDiffReport {
    std::int64_t mc_samples = 0;
    double box_measure = 0.0;                 // volume (3D) or area (2D) of the sampling box
    double parent_volume_estimate = 0.0;
    double union_volume_estimate = 0.0;
    double symmetric_difference_estimate = 0.0;
    double standard_error = 0.0;              // of the symmetric difference estimate
};

/// |parent xor (child_a or child_b)| by uniform sampling in a box around all three shapes.
ShapeDiffReport mc_shape_difference(const GaussianPrimitive& parent, const ChildPair& children,
                                    std::int64_t samples, std::uint64_t seed,
                                    ShapeMode mode = ShapeMode::volume3d);

/// Same quantity by counting cell centres of a regular grid with `resolution`
/// cells per box side.
double grid_shape_difference(const GaussianPrimitive& parent, const ChildPair& children, int resolution,
                             ShapeMode mode = ShapeMode::volume3d);

/// Children placed at +-d_fraction * L0 along the parent's longest axis with
/// long semi-axis L0 - d and both minor semi-axes set to multiplier * R0.
ChildPair children_with_multiplier(const GaussianPrimitive& parent, double d_fraction, double multiplier);

/// sqrt(1 - f^2).
double eq9_multiplier(double d_fraction);

/// Multipliers 0.5, 0.5 + step, ..., up to 1.1 inclusive.
std::vector<double> rs_grid(double step = 0.02);

struct RsSearchResult {
    double best_multiplier = 0.0;
    double expected_multiplier = 0.0; // Eq. 9 value for the searched d_fraction
    std::vector<double> multipliers;
    std::vector<double> differences;
    std::vector<double> standard_errors;
};

/// Evaluates mc_shape_difference at every multiplier with common random numbers.
/// Throws InvalidParameter unless the grid covers [0.5, 1.1] with step <= 0.02.
RsSearchResult grid_search_rs(const GaussianPrimitive& parent, double d_fraction, std::span<const double> grid,
                              std::int64_t samples, std::uint64_t seed,
                              ShapeMode mode = ShapeMode::cross_section2d);

/// True when the discrete slope of `values` changes sign at most once from
/// negative to positive, ignoring steps smaller than `noise`.
bool is_unimodal(std::span<const double> values, double noise);

/// Loss of rendering `prims` against `gt`.
double render_loss(std::span<const GaussianPrimitive> prims, const ViewCamera& cam, const Image& gt, double lambda,
                   const RenderSettings& settings);

/// Central differences of render_loss on every raw parameter.
std::vector<ParamVec> finite_diff_gradients(std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                                            const Image& gt, double lambda, double eps,
                                            const RenderSettings& settings = RenderSettings::smooth());

struct GradientComparison {
    double max_relative_error = 0.0;
    std::size_t worst_primitive = 0;
    int worst_param = 0;
    std::size_t compared = 0;
};

/// Elementwise comparison: |a - n| / max(|a|, |n|) for components whose
/// magnitude exceeds `abs_floor`, |a - n| <= abs_floor otherwise (reported as 0 or inf).
GradientComparison compare_gradients(std::span<const ParamVec> analytic, std::span<const ParamVec> numeric,
                                     double abs_floor = 1e-8);

} // namespace edgesplat::oracle
