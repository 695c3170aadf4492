#include "edgesplat/renderer.hpp"
#include "edgesplat/errors.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace edgesplat {

namespace {

// Fixed band count keeps reductions identical for any worker count.
constexpr int kBands = 16;

struct ProjectionDetail {
    Vec3 t;         // camera-space mean
    Mat3 sigma;     // world covariance
    Eigen::Matrix<double, 2, 3> jw; // J * W
    Vec2 mean2d;
    Mat2 cov2d;     // dilated
};

std::optional<ProjectionDetail> project_detail(const GaussianPrimitive& g, const ViewCamera& cam,
                                               const RenderSettings& s) {
    ProjectionDetail d;
    d.t = cam.to_camera(g.mean);
    if (!(d.t.z() > s.near_plane)) {
        return std::nullopt;
    }
    const double tz = d.t.z(), inv_z = 1.0 / tz;
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * inv_z, 0.0, -cam.fx * d.t.x() * inv_z * inv_z,
         0.0, cam.fy * inv_z, -cam.fy * d.t.y() * inv_z * inv_z;
    d.sigma = build_covariance(g.log_scale, g.rotation);
    d.jw = j * cam.rotation;
    d.cov2d = d.jw * d.sigma * d.jw.transpose();
    d.cov2d(0, 1) = d.cov2d(1, 0) = 0.5 * (d.cov2d(0, 1) + d.cov2d(1, 0));
    d.cov2d(0, 0) += s.dilation;
    d.cov2d(1, 1) += s.dilation;
    d.mean2d = Vec2(cam.fx * d.t.x() * inv_z + cam.cx, cam.fy * d.t.y() * inv_z + cam.cy);
    return d;
}

Mat3 drot_dw(const Vec4& q) {
    const double x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
    return m;
}
Mat3 drot_dx(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
    return m;
}
Mat3 drot_dy(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
    return m;
}
Mat3 drot_dz(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 m;
    m << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
    return m;
}

} // namespace

struct RasterAccess {
    using Splat = ForwardState::Splat;
    using RowEntry = ForwardState::RowEntry;

    static ForwardState& prepare(ForwardState& st, std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                                 const RenderSettings& s) {
        cam.validate();
        st.valid_ = true;
        st.scene_size_ = prims.size();
        st.width_ = cam.width;
        st.height_ = cam.height;
        st.settings_ = s;
        st.splats_.clear();
        st.splats_.reserve(prims.size());
        const bool infinite = std::isinf(s.footprint_sigma);
        for (std::size_t i = 0; i < prims.size(); ++i) {
            const auto d = project_detail(prims[i], cam, s);
            if (!d) {
                continue;
            }
            Splat sp;
            sp.index = static_cast<std::uint32_t>(i);
            sp.mx = d->mean2d.x();
            sp.my = d->mean2d.y();
            const Mat2 conic = d->cov2d.inverse();
            sp.ca = conic(0, 0);
            sp.cb = 0.5 * (conic(0, 1) + conic(1, 0));
            sp.cc = conic(1, 1);
            sp.opacity = prims[i].opacity();
            sp.r = prims[i].color.x();
            sp.g = prims[i].color.y();
            sp.b = prims[i].color.z();
            sp.depth = d->t.z();
            if (infinite) {
                sp.x0 = 0;
                sp.x1 = cam.width - 1;
                sp.y0 = 0;
                sp.y1 = cam.height - 1;
            } else {
                const double rx = s.footprint_sigma * std::sqrt(d->cov2d(0, 0));
                const double ry = s.footprint_sigma * std::sqrt(d->cov2d(1, 1));
                const double fx0 = std::ceil(sp.mx - rx), fx1 = std::floor(sp.mx + rx);
                const double fy0 = std::ceil(sp.my - ry), fy1 = std::floor(sp.my + ry);
                if (!(fx1 >= 0.0 && fy1 >= 0.0 && fx0 <= cam.width - 1.0 && fy0 <= cam.height - 1.0)) {
                    continue;
                }
                sp.x0 = static_cast<int>(std::max(0.0, fx0));
                sp.x1 = static_cast<int>(std::min(cam.width - 1.0, fx1));
                sp.y0 = static_cast<int>(std::max(0.0, fy0));
                sp.y1 = static_cast<int>(std::min(cam.height - 1.0, fy1));
                if (sp.x0 > sp.x1 || sp.y0 > sp.y1) {
                    continue;
                }
            }
            st.splats_.push_back(sp);
        }
        std::sort(st.splats_.begin(), st.splats_.end(), [](const Splat& a, const Splat& b) {
            return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
        });

        const int h = cam.height;
        st.row_start_.assign(static_cast<std::size_t>(h) + 1, 0);
        for (const Splat& sp : st.splats_) {
            for (int y = sp.y0; y <= sp.y1; ++y) {
                ++st.row_start_[static_cast<std::size_t>(y) + 1];
            }
        }
        std::partial_sum(st.row_start_.begin(), st.row_start_.end(), st.row_start_.begin());
        st.rows_.resize(st.row_start_.back());
        std::vector<std::uint32_t> fill(st.row_start_.begin(), st.row_start_.end() - 1);
        for (std::uint32_t k = 0; k < st.splats_.size(); ++k) {
            const Splat& sp = st.splats_[k];
            for (int y = sp.y0; y <= sp.y1; ++y) {
                st.rows_[fill[static_cast<std::size_t>(y)]++] = RowEntry{sp.x0, sp.x1, k};
            }
        }
        st.final_t_.assign(static_cast<std::size_t>(cam.width) * h, 1.0);
        st.last_.assign(static_cast<std::size_t>(cam.width) * h, 0);
        return st;
    }

    static RenderOutput forward(std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                                const EdgeWeightMap* edge_map, const RenderSettings& s) {
        RenderOutput out;
        ForwardState& st = prepare(out.state, prims, cam, s);
        const int w = cam.width, h = cam.height;
        if (edge_map && (edge_map->width != w || edge_map->height != h)) {
            throw InvalidParameter("render: edge map resolution does not match the camera");
        }
        RenderBundle& bundle = out.bundle;
        bundle.image = Image(w, h);
        const std::size_t n = prims.size();
        bundle.per_gaussian_abs_grad.assign(n, 0.0);
        bundle.per_gaussian_grad.assign(n, 0.0);
        bundle.per_gaussian_eas.assign(n, 0.0);
        bundle.per_gaussian_hit.assign(n, 0);

        const int band_rows = (h + kBands - 1) / kBands;
        const std::size_t ns = st.splats_.size();
        std::vector<std::vector<double>> band_eas(edge_map ? kBands : 0);
        std::vector<std::vector<std::uint8_t>> band_hit(kBands);
        std::vector<std::uint64_t> band_blend(kBands, 0);

        detail::for_each_band(kBands, s.workers, [&](int band) {
            const int y_begin = band * band_rows, y_end = std::min(h, y_begin + band_rows);
            if (y_begin >= y_end) {
                return;
            }
            auto& hit = band_hit[band];
            hit.assign(ns, 0);
            std::vector<double>* eas = nullptr;
            if (edge_map) {
                band_eas[band].assign(ns, 0.0);
                eas = &band_eas[band];
            }
            std::uint64_t blended = 0;
            for (int y = y_begin; y < y_end; ++y) {
                const std::uint32_t rb = st.row_start_[y], re = st.row_start_[y + 1];
                for (int x = 0; x < w; ++x) {
                    const double omega = edge_map ? edge_map->at(x, y) : 0.0;
                    double t = 1.0, cr = 0.0, cg = 0.0, cbl = 0.0;
                    std::uint32_t last = 0;
                    for (std::uint32_t k = rb; k < re; ++k) {
                        const RowEntry& e = st.rows_[k];
                        if (x < e.x0 || x > e.x1) {
                            continue;
                        }
                        const Splat& sp = st.splats_[e.splat];
                        const double dx = x - sp.mx, dy = y - sp.my;
                        const double power = -0.5 * (sp.ca * dx * dx + sp.cc * dy * dy) - sp.cb * dx * dy;
                        const double alpha = std::min(s.alpha_max, sp.opacity * std::exp(power));
                        if (alpha < s.alpha_min) {
                            continue;
                        }
                        const double next_t = t * (1.0 - alpha);
                        if (next_t < s.transmittance_min) {
                            break;
                        }
                        const double wgt = alpha * t;
                        cr += sp.r * wgt;
                        cg += sp.g * wgt;
                        cbl += sp.b * wgt;
                        if (eas) {
                            (*eas)[e.splat] += omega * wgt;
                        }
                        hit[e.splat] = 1;
                        ++blended;
                        t = next_t;
                        last = k - rb + 1;
                    }
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    st.final_t_[pix] = t;
                    st.last_[pix] = last;
                    bundle.image.data[pix * 3 + 0] = cr;
                    bundle.image.data[pix * 3 + 1] = cg;
                    bundle.image.data[pix * 3 + 2] = cbl;
                }
            }
            band_blend[band] = blended;
        });

        std::uint64_t blended = 0;
        for (int band = 0; band < kBands; ++band) {
            blended += band_blend[band];
            if (band_hit[band].empty()) {
                continue;
            }
            for (std::size_t k = 0; k < ns; ++k) {
                const std::uint32_t idx = st.splats_[k].index;
                bundle.per_gaussian_hit[idx] |= band_hit[band][k];
                if (edge_map) {
                    bundle.per_gaussian_eas[idx] += band_eas[band][k];
                }
            }
        }
        bundle.mean_blend_length =
            w * h > 0 ? static_cast<double>(blended) / (static_cast<double>(w) * h) : 0.0;
        return out;
    }

    struct Accum {
        double gmx = 0, gmy = 0;       // signed dL/dmean2d
        double amx = 0, amy = 0;       // sum of |dL/dmean2d| per axis
        double ga = 0, gb = 0, gc = 0; // dL/dconic (b counted once)
        double go = 0;                 // dL/dopacity
        double gr = 0, gg = 0, gbl = 0;
    };

    static BackwardResult backward(std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                                   const ForwardState& st, std::span<const double> pixel_grads) {
        if (!st.valid_) {
            throw StateError("backward: no forward state available");
        }
        if (st.scene_size_ != prims.size() || st.width_ != cam.width || st.height_ != cam.height) {
            throw StateError("backward: forward state does not match scene or camera");
        }
        const int w = st.width_, h = st.height_;
        if (pixel_grads.size() != static_cast<std::size_t>(w) * h * 3) {
            throw InvalidParameter("backward: pixel gradient buffer has the wrong size");
        }
        const RenderSettings& s = st.settings_;
        const std::size_t ns = st.splats_.size();
        const int band_rows = (h + kBands - 1) / kBands;
        std::vector<std::vector<Accum>> band_acc(kBands);

        detail::for_each_band(kBands, s.workers, [&](int band) {
            const int y_begin = band * band_rows, y_end = std::min(h, y_begin + band_rows);
            if (y_begin >= y_end) {
                return;
            }
            auto& acc = band_acc[band];
            acc.assign(ns, Accum{});
            for (int y = y_begin; y < y_end; ++y) {
                const std::uint32_t rb = st.row_start_[y];
                for (int x = 0; x < w; ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    const double dr = pixel_grads[pix * 3], dg = pixel_grads[pix * 3 + 1],
                                 db = pixel_grads[pix * 3 + 2];
                    const std::uint32_t last = st.last_[pix];
                    if (last == 0 || (dr == 0.0 && dg == 0.0 && db == 0.0)) {
                        continue;
                    }
                    double t = st.final_t_[pix];
                    double acc_r = 0, acc_g = 0, acc_b = 0;
                    double last_alpha = 0, last_r = 0, last_g = 0, last_b = 0;
                    for (std::uint32_t k = rb + last; k-- > rb;) {
                        const RowEntry& e = st.rows_[k];
                        if (x < e.x0 || x > e.x1) {
                            continue;
                        }
                        const Splat& sp = st.splats_[e.splat];
                        const double dx = x - sp.mx, dy = y - sp.my;
                        const double power = -0.5 * (sp.ca * dx * dx + sp.cc * dy * dy) - sp.cb * dx * dy;
                        const double gauss = std::exp(power);
                        const double raw_alpha = sp.opacity * gauss;
                        const double alpha = std::min(s.alpha_max, raw_alpha);
                        if (alpha < s.alpha_min) {
                            continue;
                        }
                        t = t / (1.0 - alpha);
                        Accum& a = acc[e.splat];
                        const double wgt = alpha * t;
                        a.gr += wgt * dr;
                        a.gg += wgt * dg;
                        a.gbl += wgt * db;

                        acc_r = last_alpha * last_r + (1.0 - last_alpha) * acc_r;
                        acc_g = last_alpha * last_g + (1.0 - last_alpha) * acc_g;
                        acc_b = last_alpha * last_b + (1.0 - last_alpha) * acc_b;
                        last_alpha = alpha;
                        last_r = sp.r;
                        last_g = sp.g;
                        last_b = sp.b;
                        const double dl_dalpha =
                            t * ((sp.r - acc_r) * dr + (sp.g - acc_g) * dg + (sp.b - acc_b) * db);
                        if (raw_alpha > s.alpha_max) {
                            continue; // clamped: flat in opacity and shape
                        }
                        a.go += gauss * dl_dalpha;
                        const double dl_dg = sp.opacity * dl_dalpha;
                        const double k_g = dl_dg * gauss;
                        const double gx = k_g * (sp.ca * dx + sp.cb * dy);
                        const double gy = k_g * (sp.cb * dx + sp.cc * dy);
                        a.gmx += gx;
                        a.gmy += gy;
                        a.amx += std::abs(gx);
                        a.amy += std::abs(gy);
                        a.ga += -0.5 * k_g * dx * dx;
                        a.gb += -k_g * dx * dy;
                        a.gc += -0.5 * k_g * dy * dy;
                    }
                }
            }
        });

        std::vector<Accum> total(ns);
        for (int band = 0; band < kBands; ++band) {
            if (band_acc[band].empty()) {
                continue;
            }
            for (std::size_t k = 0; k < ns; ++k) {
                const Accum& b = band_acc[band][k];
                Accum& t = total[k];
                t.gmx += b.gmx; t.gmy += b.gmy;
                t.amx += b.amx; t.amy += b.amy;
                t.ga += b.ga; t.gb += b.gb; t.gc += b.gc;
                t.go += b.go;
                t.gr += b.gr; t.gg += b.gg; t.gbl += b.gbl;
            }
        }

        BackwardResult res;
        const std::size_t n = prims.size();
        res.param_grads.assign(n, ParamVec::Zero());
        res.per_gaussian_grad.assign(n, 0.0);
        res.per_gaussian_abs_grad.assign(n, 0.0);
        for (std::size_t k = 0; k < ns; ++k) {
            const Splat& sp = st.splats_[k];
            const Accum& a = total[k];
            const GaussianPrimitive& g = prims[sp.index];
            res.per_gaussian_grad[sp.index] = std::hypot(a.gmx, a.gmy);
            res.per_gaussian_abs_grad[sp.index] = std::hypot(a.amx, a.amy);
            res.param_grads[sp.index] = chain_to_params(g, cam, s, a);
        }
        return res;
    }

    static ParamVec chain_to_params(const GaussianPrimitive& g, const ViewCamera& cam, const RenderSettings& s,
                                    const Accum& a) {
        ParamVec out = ParamVec::Zero();
        const auto d = project_detail(g, cam, s);
        if (!d) {
            return out;
        }
        out[param::kColor + 0] = a.gr;
        out[param::kColor + 1] = a.gg;
        out[param::kColor + 2] = a.gbl;
        const double o = g.opacity();
        out[param::kOpacity] = a.go * o * (1.0 - o);

        // conic -> 2D covariance (full-matrix gradients)
        const Mat2 conic = d->cov2d.inverse();
        Mat2 g_conic;
        g_conic << a.ga, 0.5 * a.gb, 0.5 * a.gb, a.gc;
        const Mat2 g_cov2d = -conic * g_conic * conic;

        // cov2d = M Sigma M^T + dilation I, with M = J W
        const Eigen::Matrix<double, 2, 3>& m = d->jw;
        const Mat3 g_sigma = m.transpose() * g_cov2d * m;
        const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_cov2d * m * d->sigma;
        const Eigen::Matrix<double, 2, 3> g_j = g_m * cam.rotation.transpose();

        const double tx = d->t.x(), ty = d->t.y(), tz = d->t.z();
        const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 g_t = Vec3::Zero();
        g_t.z() += g_j(0, 0) * (-cam.fx * iz2);
        g_t.x() += g_j(0, 2) * (-cam.fx * iz2);
        g_t.z() += g_j(0, 2) * (2.0 * cam.fx * tx * iz3);
        g_t.z() += g_j(1, 1) * (-cam.fy * iz2);
        g_t.y() += g_j(1, 2) * (-cam.fy * iz2);
        g_t.z() += g_j(1, 2) * (2.0 * cam.fy * ty * iz3);
        g_t.x() += a.gmx * cam.fx * iz;
        g_t.z() += a.gmx * (-cam.fx * tx * iz2);
        g_t.y() += a.gmy * cam.fy * iz;
        g_t.z() += a.gmy * (-cam.fy * ty * iz2);
        out.segment<3>(param::kMean) = cam.rotation.transpose() * g_t;

        // Sigma = N N^T, N = R S
        const double qn = g.rotation.norm();
        const Vec4 qhat = g.rotation / qn;
        const Mat3 r = rotation_from_unit_quaternion(qhat);
        const Vec3 sc = g.scale();
        const Mat3 nmat = r * sc.asDiagonal();
        const Mat3 g_n = (g_sigma + g_sigma.transpose()) * nmat;
        Mat3 g_r;
        for (int j = 0; j < 3; ++j) {
            g_r.col(j) = g_n.col(j) * sc[j];
            out[param::kLogScale + j] = g_n.col(j).dot(r.col(j)) * sc[j];
        }
        const Vec4 g_qhat(g_r.cwiseProduct(drot_dw(qhat)).sum(), g_r.cwiseProduct(drot_dx(qhat)).sum(),
                          g_r.cwiseProduct(drot_dy(qhat)).sum(), g_r.cwiseProduct(drot_dz(qhat)).sum());
        out.segment<4>(param::kRotation) = (g_qhat - qhat * qhat.dot(g_qhat)) / qn;
        return out;
    }
};

std::optional<ProjectedGaussian> project(const GaussianPrimitive& g, const ViewCamera& cam,
                                         const RenderSettings& settings, std::size_t index) {
    const auto d = project_detail(g, cam, settings);
    if (!d) {
        return std::nullopt;
    }
    return ProjectedGaussian{d->mean2d, d->cov2d, d->t.z(), index};
}

RenderOutput render(std::span<const GaussianPrimitive> prims, const ViewCamera& cam, const EdgeWeightMap* edge_map,
                    const RenderSettings& settings) {
    return RasterAccess::forward(prims, cam, edge_map, settings);
}

BackwardResult backward(std::span<const GaussianPrimitive> prims, const ViewCamera& cam, const ForwardState& state,
                        std::span<const double> pixel_grads) {
    return RasterAccess::backward(prims, cam, state, pixel_grads);
}

} // namespace edgesplat
