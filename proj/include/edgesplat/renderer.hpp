#pragma once

#include "edgesplat/camera.hpp"
#include "edgesplat/imaging.hpp"
#include "edgesplat/scene.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace edgesplat {

/// Rasterisation constants. Defaults are the training renderer.
struct RenderSettings {
    double alpha_min = 1.0 / 255.0;       // contributions below this are skipped
    double alpha_max = 0.99;              // per-splat alpha clamp
    double transmittance_min = 1e-4;      // compositing stops below this
    double footprint_sigma = 3.0;         // AABB half-size in standard deviations; inf = whole image
    double dilation = 0.3;                // added to the 2D covariance diagonal, px^2
    double near_plane = 0.01;             // camera-z culling distance
    int workers = 1;

    /// Ground-truth synthesis: no alpha skip.
    static RenderSettings ground_truth() {
        RenderSettings s;
        s.alpha_min = 0.0;
        return s;
    }

    /// Removes every truncation that makes the image piecewise-smooth in the
    /// parameters (alpha skip, early termination, finite footprint).
    static RenderSettings smooth() {
        RenderSettings s;
        s.alpha_min = 0.0;
        s.transmittance_min = 0.0;
        s.footprint_sigma = std::numeric_limits<double>::infinity();
        return s;
    }
};

struct ProjectedGaussian {
    Vec2 mean2d;         // pixels
    Mat2 cov2d;          // pixels^2, dilated
    double depth = 0.0;  // camera z
    std::size_t parent_index = 0;
};

/// Perspective + EWA projection. Empty when the mean is not beyond the near plane.
std::optional<ProjectedGaussian> project(const GaussianPrimitive& g, const ViewCamera& cam,
                                         const RenderSettings& settings = {}, std::size_t index = 0);

struct RenderBundle {
    Image image;
    std::vector<double> per_gaussian_abs_grad;
    std::vector<double> per_gaussian_grad;
    std::vector<double> per_gaussian_eas;
    std::vector<std::uint8_t> per_gaussian_hit;
    double mean_blend_length = 0.0; // composited splats per pixel
};

/// Intermediate state a backward pass needs; produced by render().
class ForwardState {
public:
    ForwardState() = default;
    bool valid() const { return valid_; }
    std::size_t scene_size() const { return scene_size_; }

private:
    friend struct RasterAccess;

    struct Splat {
        std::uint32_t index = 0;
        double mx = 0.0, my = 0.0;
        double ca = 0.0, cb = 0.0, cc = 0.0; // conic (inverse 2D covariance)
        double opacity = 0.0;
        double r = 0.0, g = 0.0, b = 0.0;
        int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
        double depth = 0.0;
    };
    struct RowEntry {
        std::int32_t x0, x1;
        std::uint32_t splat;
    };

    bool valid_ = false;
    std::size_t scene_size_ = 0;
    int width_ = 0, height_ = 0;
    RenderSettings settings_;
    std::vector<Splat> splats_;          // depth-sorted
    std::vector<std::uint32_t> row_start_;
    std::vector<RowEntry> rows_;
    std::vector<double> final_t_;         // per pixel
    std::vector<std::uint32_t> last_;     // per pixel: one past last row entry visited
};

struct RenderOutput {
    RenderBundle bundle;
    ForwardState state;
};

/// Front-to-back alpha compositing over a black background. With an edge map,
/// per_gaussian_eas accumulates edge weight times compositing weight.
RenderOutput render(std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                    const EdgeWeightMap* edge_map = nullptr, const RenderSettings& settings = {});

inline RenderOutput render(const GaussianScene& scene, const ViewCamera& cam,
                           const EdgeWeightMap* edge_map = nullptr, const RenderSettings& settings = {}) {
    return render(std::span<const GaussianPrimitive>(scene.primitives), cam, edge_map, settings);
}

struct BackwardResult {
    std::vector<ParamVec> param_grads;
    std::vector<double> per_gaussian_grad;     // |sum_p dL/dmean2d|
    std::vector<double> per_gaussian_abs_grad; // |(sum_p |dL/dx|, sum_p |dL/dy|)|
};

/// Analytic gradients for the render recorded in `state`. `pixel_grads` is
/// dL/dC in Image::data layout.
BackwardResult backward(std::span<const GaussianPrimitive> prims, const ViewCamera& cam, const ForwardState& state,
                        std::span<const double> pixel_grads);

inline BackwardResult backward(const GaussianScene& scene, const ViewCamera& cam, const ForwardState& state,
                               std::span<const double> pixel_grads) {
    return backward(std::span<const GaussianPrimitive>(scene.primitives), cam, state, pixel_grads);
}

} // namespace edgesplat
