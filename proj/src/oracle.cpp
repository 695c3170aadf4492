#include "edgesplat/oracle.hpp"
#include "edgesplat/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace edgesplat::oracle {

namespace {

struct Solid {
    Vec3 center;
    Mat3 inv_cov;
    Mat3 cov;

    bool contains(const Vec3& p) const {
        const Vec3 x = p - center;
        return x.dot(inv_cov * x) <= 1.0;
    }
};

Solid make_solid(const GaussianPrimitive& g) {
    const Mat3 cov = build_covariance(g);
    return Solid{g.mean, cov.inverse(), cov};
}

/// Sampling frame: origin at the parent mean, axes along the parent's principal
/// directions (longest, middle, shortest).
struct Frame {
    Vec3 origin;
    std::array<Vec3, 3> axes;
    std::array<double, 3> half; // box half extents along each axis
    int dims;

    Vec3 point(double a, double b, double c) const {
        return origin + a * axes[0] + b * axes[1] + (dims == 3 ? c : 0.0) * axes[2];
    }
    double measure() const {
        double m = 1.0;
        for (int k = 0; k < dims; ++k) {
            m *= 2.0 * half[static_cast<std::size_t>(k)];
        }
        return m;
    }
};

Frame make_frame(const GaussianPrimitive& parent, std::span<const Solid> solids, ShapeMode mode) {
    Frame f;
    f.origin = parent.mean;
    for (int r = 0; r < 3; ++r) {
        f.axes[static_cast<std::size_t>(r)] = principal_axis(parent, r).direction;
    }
    f.dims = mode == ShapeMode::volume3d ? 3 : 2;
    for (int k = 0; k < 3; ++k) {
        const Vec3& e = f.axes[static_cast<std::size_t>(k)];
        double h = 0.0;
        for (const Solid& s : solids) {
            // support function of the ellipsoid along e
            h = std::max(h, std::abs(e.dot(s.center - f.origin)) + std::sqrt(e.dot(s.cov * e)));
        }
        f.half[static_cast<std::size_t>(k)] = h * (1.0 + 1e-9);
    }
    return f;
}

struct Samples {
    std::vector<Vec3> points;
};

Samples draw(const Frame& f, std::int64_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Samples s;
    s.points.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = u(rng) * f.half[0];
        const double b = u(rng) * f.half[1];
        const double c = f.dims == 3 ? u(rng) * f.half[2] : 0.0;
        s.points.push_back(f.point(a, b, c));
    }
    return s;
}

ShapeDiffReport count(const Frame& f, const Samples& s, const std::vector<std::uint8_t>& in_parent,
                      const Solid& a, const Solid& b) {
    std::int64_t n_parent = 0, n_union = 0, n_diff = 0;
    const std::size_t n = s.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const bool p = in_parent[i] != 0;
        const bool u = a.contains(s.points[i]) || b.contains(s.points[i]);
        n_parent += p;
        n_union += u;
        n_diff += (p != u);
    }
    ShapeDiffReport r;
    r.mc_samples = static_cast<std::int64_t>(n);
    r.box_measure = f.measure();
    const double dn = static_cast<double>(n);
    r.parent_volume_estimate = r.box_measure * n_parent / dn;
    r.union_volume_estimate = r.box_measure * n_union / dn;
    const double p = n_diff / dn;
    r.symmetric_difference_estimate = r.box_measure * p;
    r.standard_error = r.box_measure * std::sqrt(p * (1.0 - p) / dn);
    return r;
}

} // namespace

ShapeDiffReport mc_shape_difference(const GaussianPrimitive& parent, const ChildPair& children, std::int64_t samples,
                                    std::uint64_t seed, ShapeMode mode) {
    if (samples < 10000) {
        throw InvalidParameter("mc_shape_difference needs at least 1e4 samples");
    }
    const std::array<Solid, 3> solids{make_solid(parent), make_solid(children.first), make_solid(children.second)};
    const Frame f = make_frame(parent, solids, mode);
    const Samples s = draw(f, samples, seed);
    std::vector<std::uint8_t> in_parent(s.points.size());
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        in_parent[i] = solids[0].contains(s.points[i]);
    }
    return count(f, s, in_parent, solids[1], solids[2]);
}

double grid_shape_difference(const GaussianPrimitive& parent, const ChildPair& children, int resolution,
                             ShapeMode mode) {
    if (resolution < 2) {
        throw InvalidParameter("grid_shape_difference: resolution must be >= 2");
    }
    const std::array<Solid, 3> solids{make_solid(parent), make_solid(children.first), make_solid(children.second)};
    const Frame f = make_frame(parent, solids, mode);
    const int nz = f.dims == 3 ? resolution : 1;
    std::int64_t n_diff = 0;
    for (int i = 0; i < resolution; ++i) {
        const double a = (-1.0 + (2.0 * i + 1.0) / resolution) * f.half[0];
        for (int j = 0; j < resolution; ++j) {
            const double b = (-1.0 + (2.0 * j + 1.0) / resolution) * f.half[1];
            for (int k = 0; k < nz; ++k) {
                const double c = f.dims == 3 ? (-1.0 + (2.0 * k + 1.0) / resolution) * f.half[2] : 0.0;
                const Vec3 p = f.point(a, b, c);
                const bool in_p = solids[0].contains(p);
                const bool in_u = solids[1].contains(p) || solids[2].contains(p);
                n_diff += (in_p != in_u);
            }
        }
    }
    const double cells = static_cast<double>(resolution) * resolution * nz;
    return f.measure() * static_cast<double>(n_diff) / cells;
}

double eq9_multiplier(double d_fraction) { return std::sqrt(1.0 - d_fraction * d_fraction); }

ChildPair children_with_multiplier(const GaussianPrimitive& parent, double d_fraction, double multiplier) {
    int long_idx = 0;
    for (int k = 1; k < 3; ++k) {
        if (parent.log_scale[k] > parent.log_scale[long_idx]) {
            long_idx = k;
        }
    }
    const Vec3 axis = rotation_from_quaternion(parent.rotation).col(long_idx);
    const double l0 = std::exp(parent.log_scale[long_idx]);
    const double d = d_fraction * l0;
    GaussianPrimitive child = parent;
    for (int k = 0; k < 3; ++k) {
        child.log_scale[k] = k == long_idx ? std::log(l0 - d) : parent.log_scale[k] + std::log(multiplier);
    }
    GaussianPrimitive a = child, b = child;
    a.mean = parent.mean + d * axis;
    b.mean = parent.mean - d * axis;
    return {a, b};
}

std::vector<double> rs_grid(double step) {
    std::vector<double> grid;
    const int n = static_cast<int>(std::floor((1.1 - 0.5) / step + 1e-9));
    for (int i = 0; i <= n; ++i) {
        grid.push_back(0.5 + i * step);
    }
    return grid;
}

RsSearchResult grid_search_rs(const GaussianPrimitive& parent, double d_fraction, std::span<const double> grid,
                              std::int64_t samples, std::uint64_t seed, ShapeMode mode) {
    if (grid.size() < 2) {
        throw InvalidParameter("grid_search_rs: grid needs at least two multipliers");
    }
    std::vector<double> sorted(grid.begin(), grid.end());
    std::sort(sorted.begin(), sorted.end());
    double max_step = 0.0;
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        max_step = std::max(max_step, sorted[i] - sorted[i - 1]);
    }
    if (sorted.front() > 0.5 + 1e-12 || sorted.back() < 1.1 - 1e-12 || max_step > 0.02 + 1e-12) {
        throw InvalidParameter("grid_search_rs: grid must cover [0.5, 1.1] with step <= 0.02");
    }
    if (!(d_fraction > 0.0 && d_fraction <= 0.5)) {
        throw InvalidParameter("grid_search_rs: d_fraction must lie in (0, 0.5]");
    }
    if (samples < 10000) {
        throw InvalidParameter("grid_search_rs needs at least 1e4 samples");
    }

    // One box large enough for every grid point, so all evaluations share samples.
    const ChildPair widest = children_with_multiplier(parent, d_fraction, sorted.back());
    const std::array<Solid, 3> solids{make_solid(parent), make_solid(widest.first), make_solid(widest.second)};
    const Frame f = make_frame(parent, solids, mode);
    const Samples s = draw(f, samples, seed);
    std::vector<std::uint8_t> in_parent(s.points.size());
    for (std::size_t i = 0; i < s.points.size(); ++i) {
        in_parent[i] = solids[0].contains(s.points[i]);
    }

    RsSearchResult res;
    res.expected_multiplier = eq9_multiplier(d_fraction);
    double best = std::numeric_limits<double>::infinity();
    for (double m : sorted) {
        const ChildPair ch = children_with_multiplier(parent, d_fraction, m);
        const ShapeDiffReport r = count(f, s, in_parent, make_solid(ch.first), make_solid(ch.second));
        res.multipliers.push_back(m);
        res.differences.push_back(r.symmetric_difference_estimate);
        res.standard_errors.push_back(r.standard_error);
        if (r.symmetric_difference_estimate < best) {
            best = r.symmetric_difference_estimate;
            res.best_multiplier = m;
        }
    }
    return res;
}

bool is_unimodal(std::span<const double> values, double noise) {
    // Direction of each significant step; allow one switch from down to up.
    int phase = 0; // 0: descending (or flat), 1: ascending
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double step = values[i] - values[i - 1];
        if (std::abs(step) <= noise) {
            continue;
        }
        if (step > 0.0) {
            phase = 1;
        } else if (phase == 1) {
            return false;
        }
    }
    return true;
}

double render_loss(std::span<const GaussianPrimitive> prims, const ViewCamera& cam, const Image& gt, double lambda,
                   const RenderSettings& settings) {
    const RenderOutput out = render(prims, cam, nullptr, settings);
    return loss_and_pixel_grads(out.bundle.image, gt, lambda).loss;
}

std::vector<ParamVec> finite_diff_gradients(std::span<const GaussianPrimitive> prims, const ViewCamera& cam,
                                            const Image& gt, double lambda, double eps,
                                            const RenderSettings& settings) {
    if (!(eps > 0.0)) {
        throw InvalidParameter("finite_diff_gradients: eps must be positive");
    }
    std::vector<GaussianPrimitive> work(prims.begin(), prims.end());
    std::vector<ParamVec> grads(work.size(), ParamVec::Zero());
    for (std::size_t i = 0; i < work.size(); ++i) {
        const ParamVec base = work[i].pack();
        for (int k = 0; k < kParamCount; ++k) {
            ParamVec p = base;
            p[k] = base[k] + eps;
            work[i] = GaussianPrimitive::unpack(p);
            const double plus = render_loss(work, cam, gt, lambda, settings);
            p[k] = base[k] - eps;
            work[i] = GaussianPrimitive::unpack(p);
            const double minus = render_loss(work, cam, gt, lambda, settings);
            grads[i][k] = (plus - minus) / (2.0 * eps);
        }
        work[i] = GaussianPrimitive::unpack(base);
    }
    return grads;
}

GradientComparison compare_gradients(std::span<const ParamVec> analytic, std::span<const ParamVec> numeric,
                                     double abs_floor) {
    if (analytic.size() != numeric.size()) {
        throw InvalidParameter("compare_gradients: size mismatch");
    }
    GradientComparison c;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        for (int k = 0; k < kParamCount; ++k) {
            const double a = analytic[i][k], n = numeric[i][k];
            const double mag = std::max(std::abs(a), std::abs(n));
            const double diff = std::abs(a - n);
            double err;
            if (mag < abs_floor) {
                err = diff <= abs_floor ? 0.0 : diff / abs_floor;
            } else {
                err = diff / mag;
            }
            ++c.compared;
            if (err > c.max_relative_error) {
                c.max_relative_error = err;
                c.worst_primitive = i;
                c.worst_param = k;
            }
        }
    }
    return c;
}

} // namespace edgesplat::oracle
