#pragma once

#include "edgesplat/camera.hpp"
#include "edgesplat/imaging.hpp"
#include "edgesplat/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace edgesplat {

struct DatasetView {
    ViewCamera camera;
    Image image;
    bool is_test = false;
};

/// Posed images with a train/test split. Every 8th view (index 0, 8, 16, ...)
/// is held out for testing.
struct Dataset {
    std::vector<DatasetView> views;
    double extent = 0.0; // bounding-sphere radius of the camera centres
    std::string kind;    // generator name, informational
    std::optional<std::vector<GaussianPrimitive>> generator; // ground-truth primitives when persisted

    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> test_indices() const;
    int width() const { return views.empty() ? 0 : views.front().camera.width; }
    int height() const { return views.empty() ? 0 : views.front().camera.height; }

    /// Throws InvalidParameter on inconsistent resolutions, invalid cameras,
    /// a missing train or test view, or a non-positive extent.
    void validate() const;
};

/// True for indices held out by the every-8th rule.
inline bool is_holdout_index(std::size_t index) { return index % 8 == 0; }

/// Radius of the smallest sphere centred at the camera-centre mean that
/// contains every camera centre.
double camera_extent(const std::vector<ViewCamera>& cams);

} // namespace edgesplat
