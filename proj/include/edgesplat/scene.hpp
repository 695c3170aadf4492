#pragma once

#include "edgesplat/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace edgesplat {

/// Adam first/second moments for one primitive.
struct AdamMoments {
    ParamVec first = ParamVec::Zero();
    ParamVec second = ParamVec::Zero();

    bool operator==(const AdamMoments&) const = default;
};

/// Per-primitive densification accumulators, reset after each densification round.
struct DensifyStats {
    double sum_abs_grad = 0.0;   // running sum of per-view absolute-gradient norms
    double sum_grad = 0.0;       // running sum of per-view signed-gradient norms
    std::int64_t view_count = 0; // views the primitive took part in
    double sum_eas = 0.0;
    std::int64_t eas_views = 0;

    bool operator==(const DensifyStats&) const = default;
};

/// Primitives plus optimiser and densification state, kept index-aligned.
struct GaussianScene {
    std::vector<GaussianPrimitive> primitives;
    std::vector<AdamMoments> moments;
    std::vector<DensifyStats> stats;
    std::int64_t adam_step = 0;

    GaussianScene() = default;
    explicit GaussianScene(std::vector<GaussianPrimitive> prims);

    std::size_t size() const { return primitives.size(); }
    bool empty() const { return primitives.empty(); }

    /// Appends with zeroed optimiser moments and statistics.
    void append(const GaussianPrimitive& g);

    /// Removes every index with remove[i] != 0, compacting all arrays in lockstep.
    /// Returns the number removed.
    std::size_t remove_masked(std::span<const std::uint8_t> remove);

    void reset_stats();

    bool aligned() const { return moments.size() == primitives.size() && stats.size() == primitives.size(); }

    /// Throws StateError when the parallel arrays disagree in length.
    void check_aligned() const;

    bool operator==(const GaussianScene&) const;
};

} // namespace edgesplat
