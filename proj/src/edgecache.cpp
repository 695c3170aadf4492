#include "edgesplat/edgecache.hpp"
#include "edgesplat/errors.hpp"

#include <algorithm>
#include <string>

namespace edgesplat {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

} // namespace

std::uint64_t image_hash(const Image& img) {
    std::uint64_t h = kFnvOffset;
    const std::int32_t dims[2] = {img.width, img.height};
    fnv_mix(h, dims, sizeof dims);
    fnv_mix(h, img.data.data(), img.data.size() * sizeof(double));
    return h;
}

EdgeCache EdgeCache::build(const Dataset& ds) {
    EdgeCache cache;
    for (std::size_t i : ds.train_indices()) {
        cache.entries_.push_back(Entry{i, image_hash(ds.views[i].image), laplacian_edge_map(ds.views[i].image)});
    }
    return cache;
}

bool EdgeCache::contains(std::size_t view_index) const {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), view_index,
                                     [](const Entry& e, std::size_t v) { return e.view < v; });
    return it != entries_.end() && it->view == view_index;
}

const EdgeWeightMap& EdgeCache::map_for(std::size_t view_index) const {
    if (!contains(view_index)) {
        throw InvalidParameter("no cached edge map for view " + std::to_string(view_index));
    }
    return std::lower_bound(entries_.begin(), entries_.end(), view_index,
                            [](const Entry& e, std::size_t v) { return e.view < v; })
        ->map;
}

std::vector<std::size_t> EdgeCache::view_indices() const {
    std::vector<std::size_t> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) {
        out.push_back(e.view);
    }
    return out;
}

bool EdgeCache::is_current(const Dataset& ds) const {
    if (view_indices() != ds.train_indices()) {
        return false;
    }
    return std::all_of(entries_.begin(), entries_.end(),
                       [&](const Entry& e) { return image_hash(ds.views[e.view].image) == e.source_hash; });
}

} // namespace edgesplat
