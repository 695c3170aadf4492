#pragma once

#include "edgesplat/dataset.hpp"
#include "edgesplat/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace edgesplat {

enum class SceneKind { checker_box, textured_plane, blob_field };

std::string_view to_string(SceneKind kind);
/// Accepts "checker-box", "textured-plane", "blob-field". Throws InvalidParameter otherwise.
SceneKind parse_scene_kind(std::string_view name);

/// Procedural scene seen from a ring of cameras around the origin (z up).
struct SyntheticSpec {
    SceneKind kind = SceneKind::checker_box;
    int resolution = 128;           // square images
    int views = 16;
    double ring_radius = 4.0;
    double ring_height = 1.5;
    double focal_factor = 2.0;      // focal length in units of the resolution
    double texture_frequency = 4.0; // stripe cycles per unit length
    int primitive_count = 0;        // 0 = the kind's default
    std::uint64_t seed = 0;

    /// Throws InvalidParameter (fewer than 8 views, bad sizes, non-finite geometry).
    void validate() const;
};

/// Builds the generator scene for `spec` (deterministic in the seed).
std::vector<GaussianPrimitive> build_generator(const SyntheticSpec& spec);

/// Ring cameras looking at the origin.
std::vector<ViewCamera> ring_cameras(const SyntheticSpec& spec);

/// Generator scene rendered from every ring camera without the alpha skip
/// threshold and quantised to 8 bits, so that saving and loading is lossless.
/// The generator primitives are kept in Dataset::generator.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.json, images/view_%04d.png and, when present, generator.ckpt.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Throws IoError naming the offending file on missing or corrupt content and
/// InvalidParameter on inconsistent resolutions.
Dataset load_dataset(const std::filesystem::path& dir);

enum class InitMode { random_in_extent, from_gt_points };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view name);

/// Initial primitives, all with opacity 0.1 and identity rotation.
///   random_in_extent: means uniform in the cube of half-size extent / 2 centred
///     on the point closest to all optical axes; isotropic scale extent / sqrt(count);
///     mid-grey colour.
///   from_gt_points: means drawn from the generator means with Gaussian jitter of
///     1% of the extent; colour of the drawn primitive; isotropic scale from the
///     mean distance to the three nearest initial points.
/// Throws InvalidParameter for count < 1 and for from_gt_points without a generator.
GaussianScene init_scene(const Dataset& ds, int count, InitMode mode, std::uint64_t seed);

/// Point minimising the summed squared distance to every camera's optical axis.
Vec3 optical_axes_focus(const Dataset& ds);

} // namespace edgesplat
