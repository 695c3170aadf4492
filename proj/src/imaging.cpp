#include "edgesplat/imaging.hpp"
#include "edgesplat/errors.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace edgesplat {

Image::Image(int w, int h, double fill) : width(w), height(h) {
    if (w < 0 || h < 0) {
        throw InvalidParameter("image dimensions must be non-negative");
    }
    data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill);
}

void Image::validate() const {
    if (width < 0 || height < 0 || data.size() != pixel_count() * 3) {
        throw InvalidParameter("image data length does not match its dimensions");
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw InvalidParameter("image contains non-finite values");
        }
    }
}

namespace {

void require_same_size(const Image& a, const Image& b, const char* op) {
    if (a.width != b.width || a.height != b.height || a.data.size() != b.data.size()) {
        throw InvalidParameter(std::string(op) + ": resolution mismatch (" + std::to_string(a.width) + "x" +
                               std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                               std::to_string(b.height) + ")");
    }
}

constexpr int kWindow = 11;
constexpr int kRadius = kWindow / 2;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kRadius;
        g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += g[i];
    }
    for (double& v : g) {
        v /= sum;
    }
    return g;
}

/// Zero-padded separable correlation with the symmetric SSIM window.
class WindowFilter {
public:
    WindowFilter(int w, int h) : w_(w), h_(h), taps_(gaussian_taps()), tmp_(static_cast<std::size_t>(w) * h) {
        // Normaliser of the truncated window at each pixel is separable too.
        zx_.assign(w, 0.0);
        zy_.assign(h, 0.0);
        for (int x = 0; x < w; ++x) {
            for (int k = -kRadius; k <= kRadius; ++k) {
                if (x + k >= 0 && x + k < w) {
                    zx_[x] += taps_[k + kRadius];
                }
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int k = -kRadius; k <= kRadius; ++k) {
                if (y + k >= 0 && y + k < h) {
                    zy_[y] += taps_[k + kRadius];
                }
            }
        }
    }

    double norm(int x, int y) const { return zx_[x] * zy_[y]; }

    void apply(const std::vector<double>& in, std::vector<double>& out) {
        out.assign(in.size(), 0.0);
        for (int y = 0; y < h_; ++y) {
            const double* row = &in[static_cast<std::size_t>(y) * w_];
            double* trow = &tmp_[static_cast<std::size_t>(y) * w_];
            for (int x = 0; x < w_; ++x) {
                double s = 0.0;
                const int k0 = std::max(-kRadius, -x), k1 = std::min(kRadius, w_ - 1 - x);
                for (int k = k0; k <= k1; ++k) {
                    s += taps_[k + kRadius] * row[x + k];
                }
                trow[x] = s;
            }
        }
        for (int y = 0; y < h_; ++y) {
            double* orow = &out[static_cast<std::size_t>(y) * w_];
            const int k0 = std::max(-kRadius, -y), k1 = std::min(kRadius, h_ - 1 - y);
            for (int k = k0; k <= k1; ++k) {
                const double t = taps_[k + kRadius];
                const double* trow = &tmp_[static_cast<std::size_t>(y + k) * w_];
                for (int x = 0; x < w_; ++x) {
                    orow[x] += t * trow[x];
                }
            }
        }
    }

    /// Normalised local mean.
    void mean(const std::vector<double>& in, std::vector<double>& out) {
        apply(in, out);
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                out[static_cast<std::size_t>(y) * w_ + x] /= norm(x, y);
            }
        }
    }

private:
    int w_, h_;
    std::array<double, kWindow> taps_;
    std::vector<double> tmp_;
    std::vector<double> zx_, zy_;
};

struct SsimOutput {
    double value = 0.0;
    std::vector<double> grad; // d(mean ssim)/d a, image layout; empty unless requested
};

SsimOutput ssim_impl(const Image& a, const Image& b, bool with_grad) {
    const int w = a.width, h = a.height;
    const std::size_t n = a.pixel_count();
    SsimOutput res;
    if (n == 0) {
        res.value = 1.0;
        return res;
    }
    if (with_grad) {
        res.grad.assign(n * 3, 0.0);
    }
    WindowFilter filter(w, h);
    std::vector<double> ca(n), cb(n), tmp(n);
    std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
    std::vector<double> d_mu(n), d_aa(n), d_ab(n), back;
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            ca[i] = a.data[i * 3 + c];
            cb[i] = b.data[i * 3 + c];
        }
        filter.mean(ca, mu_a);
        filter.mean(cb, mu_b);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = ca[i] * ca[i];
        filter.mean(tmp, e_aa);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = cb[i] * cb[i];
        filter.mean(tmp, e_bb);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = ca[i] * cb[i];
        filter.mean(tmp, e_ab);

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                const double ma = mu_a[i], mb = mu_b[i];
                const double var_a = e_aa[i] - ma * ma;
                const double var_b = e_bb[i] - mb * mb;
                const double cov = e_ab[i] - ma * mb;
                const double a1 = 2.0 * ma * mb + kC1;
                const double a2 = 2.0 * cov + kC2;
                const double b1 = ma * ma + mb * mb + kC1;
                const double b2 = var_a + var_b + kC2;
                const double s = (a1 * a2) / (b1 * b2);
                total += s;
                if (with_grad) {
                    // Divide by the window normaliser so the adjoint is a plain correlation.
                    const double z = filter.norm(x, y);
                    d_mu[i] = ((2.0 * mb * a2 - 2.0 * mb * a1) / (b1 * b2) - s * (2.0 * ma / b1) +
                               s * (2.0 * ma / b2)) / z;
                    d_aa[i] = (-s / b2) / z;
                    d_ab[i] = (2.0 * a1 / (b1 * b2)) / z;
                }
            }
        }
        if (with_grad) {
            filter.apply(d_mu, back);
            std::vector<double> back_aa, back_ab;
            filter.apply(d_aa, back_aa);
            filter.apply(d_ab, back_ab);
            for (std::size_t i = 0; i < n; ++i) {
                res.grad[i * 3 + c] = back[i] + 2.0 * ca[i] * back_aa[i] + cb[i] * back_ab[i];
            }
        }
    }
    const double denom = static_cast<double>(n) * 3.0;
    res.value = total / denom;
    if (with_grad) {
        for (double& g : res.grad) {
            g /= denom;
        }
    }
    return res;
}

} // namespace

double luminance(const Image& img, int x, int y) {
    return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

EdgeWeightMap laplacian_edge_map(const Image& img) {
    img.validate();
    EdgeWeightMap map;
    map.width = img.width;
    map.height = img.height;
    map.weights.assign(img.pixel_count(), 0.0);
    const int w = img.width, h = img.height;
    std::vector<double> lum(img.pixel_count());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            lum[static_cast<std::size_t>(y) * w + x] = luminance(img, x, y);
        }
    }
    auto at = [&](int x, int y) {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return lum[static_cast<std::size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double lap = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            map.weights[static_cast<std::size_t>(y) * w + x] = std::abs(lap);
        }
    }
    return map;
}

double psnr(const Image& a, const Image& b) {
    require_same_size(a, b, "psnr");
    if (a.data.empty()) {
        return kPsnrCap;
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    require_same_size(a, b, "ssim");
    return ssim_impl(a, b, false).value;
}

LossResult loss_and_pixel_grads(const Image& render, const Image& gt, double lambda) {
    require_same_size(render, gt, "loss");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw InvalidParameter("loss lambda must lie in [0, 1]");
    }
    LossResult out;
    const std::size_t m = render.data.size();
    out.pixel_grads.assign(m, 0.0);
    if (m == 0) {
        return out;
    }
    const double inv = 1.0 / static_cast<double>(m);
    double l1 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = render.data[i] - gt.data[i];
        l1 += std::abs(d);
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        out.pixel_grads[i] = (1.0 - lambda) * sign * inv;
    }
    l1 *= inv;
    out.loss = (1.0 - lambda) * l1;
    if (lambda > 0.0) {
        const SsimOutput s = ssim_impl(render, gt, true);
        out.loss += lambda * (1.0 - s.value);
        for (std::size_t i = 0; i < m; ++i) {
            out.pixel_grads[i] -= lambda * s.grad[i];
        }
    }
    return out;
}

std::vector<unsigned char> quantize_8bit(const Image& img) {
    std::vector<unsigned char> bytes(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    return bytes;
}

void write_png(const Image& img, const std::filesystem::path& path) {
    img.validate();
    std::vector<unsigned char> bytes = quantize_8bit(img);
    png_image pimg{};
    pimg.version = PNG_IMAGE_VERSION;
    pimg.width = static_cast<png_uint_32>(img.width);
    pimg.height = static_cast<png_uint_32>(img.height);
    pimg.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&pimg, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw IoError("failed to write PNG " + path.string() + ": " + pimg.message);
    }
}

Image read_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw IoError("missing PNG file " + path.string());
    }
    png_image pimg{};
    pimg.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pimg, path.string().c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + pimg.message);
    }
    pimg.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(pimg));
    if (!png_image_finish_read(&pimg, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&pimg);
        throw IoError("corrupt PNG " + path.string() + ": " + pimg.message);
    }
    Image img(static_cast<int>(pimg.width), static_cast<int>(pimg.height));
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        img.data[i] = bytes[i] / 255.0;
    }
    return img;
}

} // namespace edgesplat
