#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace edgesplat::detail {

/// Runs fn(band) for every band in [0, bands). Work split depends only on the
/// band index, so results reduced in band order are independent of `workers`.
template <typename Fn>
void for_each_band(int bands, int workers, Fn&& fn) {
    const int k = std::clamp(workers, 1, std::max(1, bands));
    if (k == 1) {
        for (int b = 0; b < bands; ++b) {
            fn(b);
        }
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(k));
    for (int w = 0; w < k; ++w) {
        pool.emplace_back([&fn, w, k, bands] {
            for (int b = w; b < bands; b += k) {
                fn(b);
            }
        });
    }
}

} // namespace edgesplat::detail
