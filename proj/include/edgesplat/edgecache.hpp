#pragma once

#include "edgesplat/dataset.hpp"
#include "edgesplat/imaging.hpp"

#include <cstdint>
#include <vector>

namespace edgesplat {

/// FNV-1a over the raw bytes of the image buffer and its dimensions.
std::uint64_t image_hash(const Image& img);

/// Laplacian edge maps for the training views of a dataset, computed once.
class EdgeCache {
public:
    EdgeCache() = default;

    static EdgeCache build(const Dataset& ds);

    std::size_t size() const { return entries_.size(); }
    bool contains(std::size_t view_index) const;

    /// Throws InvalidParameter for a test view or an unknown index.
    const EdgeWeightMap& map_for(std::size_t view_index) const;

    /// Training view indices in ascending order.
    std::vector<std::size_t> view_indices() const;

    /// False when any cached view's source image changed or the split changed.
    bool is_current(const Dataset& ds) const;

private:
    struct Entry {
        std::size_t view = 0;
        std::uint64_t source_hash = 0;
        EdgeWeightMap map;
    };
    std::vector<Entry> entries_; // sorted by view
};

} // namespace edgesplat
