#pragma once

#include "edgesplat/binary_io.hpp"
#include "edgesplat/scene.hpp"

#include <filesystem>
#include <iosfwd>

namespace edgesplat {

/// Scene checkpoint layout (little-endian):
///   magic "EGSSCENE", u32 version, u64 count, i64 adam_step,
///   then per primitive: 14 f64 params, 14 f64 first moments, 14 f64 second
///   moments, f64 sum_abs_grad, f64 sum_grad, i64 view_count, f64 sum_eas, i64 eas_views.
inline constexpr std::uint32_t kSceneFormatVersion = 1;

void write_scene(BinaryWriter& out, const GaussianScene& scene);
GaussianScene read_scene(BinaryReader& in);

void save_scene(const GaussianScene& scene, const std::filesystem::path& path);
GaussianScene load_scene(const std::filesystem::path& path);

} // namespace edgesplat
