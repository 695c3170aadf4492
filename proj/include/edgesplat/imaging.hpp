#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace edgesplat {

/// Row-major RGB image with channels in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data; // width * height * 3

    Image() = default;
    Image(int w, int h, double fill = 0.0);

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    /// Throws InvalidParameter on size mismatch or non-finite values.
    void validate() const;

    bool operator==(const Image&) const = default;
};

/// Non-negative per-pixel edge weights.
struct EdgeWeightMap {
    int width = 0;
    int height = 0;
    std::vector<double> weights;

    double at(int x, int y) const { return weights[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const EdgeWeightMap&) const = default;
};

/// 0.299 R + 0.587 G + 0.114 B.
double luminance(const Image& img, int x, int y);

/// |4-neighbour Laplacian| of luminance with replicate padding.
EdgeWeightMap laplacian_edge_map(const Image& img);

/// Value reported for identical images.
inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over pixels and channels (11x11 Gaussian window, sigma 1.5).
/// The window is renormalised over in-bounds pixels at the borders.
double ssim(const Image& a, const Image& b);

struct LossResult {
    double loss = 0.0;
    std::vector<double> pixel_grads; // dL/dC, same layout as Image::data
};

/// (1 - lambda) L1 + lambda (1 - SSIM) with analytic gradients w.r.t. `render`.
LossResult loss_and_pixel_grads(const Image& render, const Image& gt, double lambda);

/// 8-bit PNG I/O. Values map linearly to [0, 255] with rounding; no gamma.
void write_png(const Image& img, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Image as the bytes an 8-bit PNG would store.
std::vector<unsigned char> quantize_8bit(const Image& img);

} // namespace edgesplat
