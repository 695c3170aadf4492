#include "edgesplat/scenes.hpp"
#include "edgesplat/checkpoint.hpp"
#include "edgesplat/errors.hpp"
#include "edgesplat/renderer.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace edgesplat {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Dataset

std::vector<std::size_t> Dataset::train_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (!views[i].is_test) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> Dataset::test_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (views[i].is_test) {
            out.push_back(i);
        }
    }
    return out;
}

void Dataset::validate() const {
    if (views.empty()) {
        throw InvalidParameter("dataset has no views");
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        const DatasetView& v = views[i];
        v.camera.validate();
        v.image.validate();
        if (v.image.width != v.camera.width || v.image.height != v.camera.height) {
            throw InvalidParameter("view " + std::to_string(i) + ": image size does not match its camera");
        }
        if (v.image.width != width() || v.image.height != height()) {
            throw InvalidParameter("view " + std::to_string(i) + ": resolution differs from view 0");
        }
    }
    if (train_indices().empty() || test_indices().empty()) {
        throw InvalidParameter("dataset needs at least one train and one test view");
    }
    if (!(extent > 0.0) || !std::isfinite(extent)) {
        throw InvalidParameter("dataset extent must be positive");
    }
}

double camera_extent(const std::vector<ViewCamera>& cams) {
    if (cams.empty()) {
        return 0.0;
    }
    Vec3 mean = Vec3::Zero();
    for (const ViewCamera& c : cams) {
        mean += c.center();
    }
    mean /= static_cast<double>(cams.size());
    double r = 0.0;
    for (const ViewCamera& c : cams) {
        r = std::max(r, (c.center() - mean).norm());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(SceneKind kind) {
    switch (kind) {
    case SceneKind::checker_box: return "checker-box";
    case SceneKind::textured_plane: return "textured-plane";
    case SceneKind::blob_field: return "blob-field";
    }
    return "unknown";
}

SceneKind parse_scene_kind(std::string_view name) {
    for (SceneKind k : {SceneKind::checker_box, SceneKind::textured_plane, SceneKind::blob_field}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    throw InvalidParameter("unknown scene kind '" + std::string(name) +
                           "' (expected checker-box, textured-plane or blob-field)");
}

std::string_view to_string(InitMode mode) {
    return mode == InitMode::random_in_extent ? "random-in-extent" : "from-gt-points";
}

InitMode parse_init_mode(std::string_view name) {
    if (name == "random-in-extent") {
        return InitMode::random_in_extent;
    }
    if (name == "from-gt-points") {
        return InitMode::from_gt_points;
    }
    throw InvalidParameter("unknown init mode '" + std::string(name) +
                           "' (expected random-in-extent or from-gt-points)");
}

// ---------------------------------------------------------------------------
// Generators

void SyntheticSpec::validate() const {
    if (views < 8) {
        throw InvalidParameter("synthetic spec needs at least 8 views for the every-8th test split");
    }
    if (resolution < 8 || resolution > 4096) {
        throw InvalidParameter("synthetic spec resolution must lie in [8, 4096]");
    }
    if (!(ring_radius > 0.0) || !std::isfinite(ring_radius) || !std::isfinite(ring_height)) {
        throw InvalidParameter("synthetic spec ring radius must be positive and finite");
    }
    if (!(focal_factor > 0.0) || !std::isfinite(focal_factor)) {
        throw InvalidParameter("synthetic spec focal_factor must be positive");
    }
    if (!(texture_frequency >= 0.0) || !std::isfinite(texture_frequency)) {
        throw InvalidParameter("synthetic spec texture_frequency must be >= 0");
    }
    if (primitive_count < 0) {
        throw InvalidParameter("synthetic spec primitive_count must be >= 0");
    }
}

namespace {

Vec4 quaternion_from_frame(const Vec3& a, const Vec3& b, const Vec3& c) {
    Mat3 r;
    r.col(0) = a;
    r.col(1) = b;
    r.col(2) = c;
    const Eigen::Quaterniond q(r);
    return Vec4(q.w(), q.x(), q.y(), q.z());
}

GaussianPrimitive surfel(const Vec3& mean, const Vec3& t1, const Vec3& t2, double tangent, double normal,
                         const Vec3& color, double opacity) {
    GaussianPrimitive g;
    g.mean = mean;
    g.rotation = quaternion_from_frame(t1, t2, t1.cross(t2));
    g.log_scale = Vec3(std::log(tangent), std::log(tangent), std::log(normal));
    g.opacity_logit = inverse_sigmoid(opacity);
    g.color = color;
    return g;
}

double stripe(double u, double frequency) {
    return 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * frequency * u);
}

std::vector<GaussianPrimitive> checker_box(const SyntheticSpec& spec) {
    const int n = spec.primitive_count > 0
                      ? std::max(1, static_cast<int>(std::lround(std::sqrt(spec.primitive_count / 6.0))))
                      : 9;
    const double h = 0.7;
    const double spacing = 2.0 * h / n;
    const std::array<Vec3, 6> normals{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0),
                                      Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
    const std::array<Vec3, 6> hues{Vec3(0.9, 0.25, 0.2), Vec3(0.2, 0.7, 0.3), Vec3(0.25, 0.35, 0.9),
                                   Vec3(0.9, 0.75, 0.2), Vec3(0.7, 0.3, 0.8), Vec3(0.3, 0.8, 0.85)};
    std::vector<GaussianPrimitive> out;
    for (std::size_t f = 0; f < 6; ++f) {
        const Vec3& nrm = normals[f];
        const Vec3 t1 = std::abs(nrm.z()) > 0.5 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
        const Vec3 t2 = nrm.cross(t1);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double u = -h + (i + 0.5) * spacing;
                const double v = -h + (j + 0.5) * spacing;
                const bool dark = ((i * 3 / n) + (j * 3 / n)) % 2 == 0;
                const double s = 0.65 + 0.35 * stripe(u + v, spec.texture_frequency);
                const Vec3 base = dark ? Vec3(0.08, 0.08, 0.1) : hues[f];
                out.push_back(surfel(h * nrm + u * t1 + v * t2, t1, t2, 0.5 * spacing, 0.35 * spacing, base * s,
                                     0.95));
            }
        }
    }
    return out;
}

std::vector<GaussianPrimitive> textured_plane(const SyntheticSpec& spec) {
    const int n = spec.primitive_count > 0
                      ? std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(spec.primitive_count)))))
                      : 20;
    const double h = 1.0;
    const double spacing = 2.0 * h / n;
    std::vector<GaussianPrimitive> out;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = -h + (i + 0.5) * spacing;
            const double y = -h + (j + 0.5) * spacing;
            const bool odd = ((i * 4 / n) + (j * 4 / n)) % 2 == 1;
            const double s = stripe((x + y) / std::numbers::sqrt2, spec.texture_frequency);
            const Vec3 a = odd ? Vec3(0.95, 0.85, 0.3) : Vec3(0.15, 0.3, 0.75);
            const Vec3 b = odd ? Vec3(0.6, 0.15, 0.1) : Vec3(0.85, 0.9, 0.95);
            out.push_back(surfel(Vec3(x, y, 0.0), Vec3(1, 0, 0), Vec3(0, 1, 0), 0.6 * spacing, 0.2 * spacing,
                                 s * a + (1.0 - s) * b, 0.95));
        }
    }
    return out;
}

std::vector<GaussianPrimitive> blob_field(const SyntheticSpec& spec) {
    const int n = spec.primitive_count > 0 ? spec.primitive_count : 60;
    std::mt19937_64 rng(spec.seed ^ 0x5eedb10bULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<GaussianPrimitive> out;
    for (int k = 0; k < n; ++k) {
        GaussianPrimitive g;
        Vec3 dir(nd(rng), nd(rng), nd(rng));
        dir.normalize();
        const double radius = 0.9 * std::cbrt(u(rng));
        g.mean = n == 1 ? Vec3(Vec3::Zero()) : Vec3(radius * dir);
        for (int a = 0; a < 3; ++a) {
            g.log_scale[a] = std::log(0.05) + u(rng) * (std::log(0.25) - std::log(0.05));
        }
        g.rotation = Vec4(nd(rng), nd(rng), nd(rng), nd(rng)).normalized();
        g.opacity_logit = inverse_sigmoid(0.6 + 0.35 * u(rng));
        g.color = Vec3(0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng), 0.1 + 0.85 * u(rng));
        out.push_back(g);
    }
    return out;
}

Image quantized(const Image& img) {
    Image out = img;
    for (double& v : out.data) {
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    }
    return out;
}

} // namespace

std::vector<GaussianPrimitive> build_generator(const SyntheticSpec& spec) {
    spec.validate();
    switch (spec.kind) {
    case SceneKind::checker_box: return checker_box(spec);
    case SceneKind::textured_plane: return textured_plane(spec);
    case SceneKind::blob_field: return blob_field(spec);
    }
    throw InvalidParameter("unknown scene kind");
}

std::vector<ViewCamera> ring_cameras(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<ViewCamera> cams;
    for (int k = 0; k < spec.views; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / spec.views;
        const Vec3 eye(spec.ring_radius * std::cos(theta), spec.ring_radius * std::sin(theta), spec.ring_height);
        cams.push_back(ViewCamera::look_at(eye, Vec3::Zero(), Vec3(0, 0, 1), spec.focal_factor * spec.resolution,
                                           spec.resolution, spec.resolution));
    }
    return cams;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    const std::vector<GaussianPrimitive> gen = build_generator(spec);
    const std::vector<ViewCamera> cams = ring_cameras(spec);
    Dataset ds;
    ds.kind = std::string(to_string(spec.kind));
    ds.extent = camera_extent(cams);
    const RenderSettings settings = RenderSettings::ground_truth();
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const RenderOutput out = render(std::span<const GaussianPrimitive>(gen), cams[i], nullptr, settings);
        ds.views.push_back(DatasetView{cams[i], quantized(out.bundle.image), is_holdout_index(i)});
    }
    ds.generator = gen;
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kGeneratorName = "generator.ckpt";

std::string view_file(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "images/view_%04zu.png", i);
    return buf;
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) {
        throw IoError(where + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw IoError(where + ": bad field '" + key + "': " + e.what());
    }
}

} // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir / "images", ec);
    if (ec) {
        throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
    }
    json manifest;
    manifest["format"] = "edgesplat-dataset";
    manifest["version"] = 1;
    manifest["kind"] = ds.kind;
    manifest["extent"] = ds.extent;
    manifest["width"] = ds.width();
    manifest["height"] = ds.height();
    json views = json::array();
    for (std::size_t i = 0; i < ds.views.size(); ++i) {
        const DatasetView& v = ds.views[i];
        json w2c = json::array();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                w2c.push_back(v.camera.rotation(r, c));
            }
            w2c.push_back(v.camera.translation[r]);
        }
        views.push_back({{"file", view_file(i)},
                         {"split", v.is_test ? "test" : "train"},
                         {"fx", v.camera.fx},
                         {"fy", v.camera.fy},
                         {"cx", v.camera.cx},
                         {"cy", v.camera.cy},
                         {"world_to_camera", w2c}});
        write_png(v.image, dir / view_file(i));
    }
    manifest["views"] = views;
    if (ds.generator) {
        save_scene(GaussianScene(*ds.generator), dir / kGeneratorName);
        manifest["generator"] = kGeneratorName;
    }
    std::ofstream out(dir / kManifestName);
    if (!out) {
        throw IoError("cannot write " + (dir / kManifestName).string());
    }
    out << manifest.dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing " + (dir / kManifestName).string());
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const std::filesystem::path mpath = dir / kManifestName;
    std::ifstream in(mpath);
    if (!in) {
        throw IoError("dataset manifest not found: " + mpath.string());
    }
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("corrupt dataset manifest " + mpath.string() + ": " + e.what());
    }
    const std::string where = mpath.string();
    if (field<std::string>(manifest, "format", where) != "edgesplat-dataset") {
        throw IoError(where + ": not an edgesplat dataset manifest");
    }
    if (field<int>(manifest, "version", where) != 1) {
        throw IoError(where + ": unsupported dataset version");
    }
    Dataset ds;
    ds.kind = manifest.value("kind", std::string());
    ds.extent = field<double>(manifest, "extent", where);
    const int width = field<int>(manifest, "width", where);
    const int height = field<int>(manifest, "height", where);
    const json views = field<json>(manifest, "views", where);
    if (!views.is_array() || views.empty()) {
        throw IoError(where + ": 'views' must be a non-empty array");
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        const json& v = views[i];
        const std::string vw = where + " view " + std::to_string(i);
        DatasetView view;
        const std::string file = field<std::string>(v, "file", vw);
        const std::filesystem::path ipath = dir / file;
        if (!std::filesystem::exists(ipath)) {
            throw IoError(vw + ": image file missing: " + ipath.string());
        }
        view.image = read_png(ipath);
        if (view.image.width != width || view.image.height != height) {
            throw InvalidParameter(vw + ": image " + ipath.string() + " is " + std::to_string(view.image.width) +
                                   "x" + std::to_string(view.image.height) + ", manifest says " +
                                   std::to_string(width) + "x" + std::to_string(height));
        }
        const std::string split = field<std::string>(v, "split", vw);
        if (split != "train" && split != "test") {
            throw IoError(vw + ": split must be 'train' or 'test'");
        }
        view.is_test = split == "test";
        ViewCamera& cam = view.camera;
        cam.fx = field<double>(v, "fx", vw);
        cam.fy = field<double>(v, "fy", vw);
        cam.cx = field<double>(v, "cx", vw);
        cam.cy = field<double>(v, "cy", vw);
        cam.width = width;
        cam.height = height;
        const auto w2c = field<std::vector<double>>(v, "world_to_camera", vw);
        if (w2c.size() != 12) {
            throw IoError(vw + ": world_to_camera must hold 12 numbers (3x4 row-major)");
        }
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                cam.rotation(r, c) = w2c[static_cast<std::size_t>(r * 4 + c)];
            }
            cam.translation[r] = w2c[static_cast<std::size_t>(r * 4 + 3)];
        }
        ds.views.push_back(std::move(view));
    }
    if (manifest.contains("generator")) {
        const std::filesystem::path gpath = dir / field<std::string>(manifest, "generator", where);
        ds.generator = load_scene(gpath).primitives;
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Initialisation

Vec3 optical_axes_focus(const Dataset& ds) {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const DatasetView& v : ds.views) {
        const Vec3 d = v.camera.rotation.row(2).transpose(); // forward axis in world space
        const Mat3 p = Mat3::Identity() - d * d.transpose();
        a += p;
        b += p * v.camera.center();
    }
    const Eigen::FullPivLU<Mat3> lu(a);
    if (!lu.isInvertible()) {
        // Parallel axes: fall back to the mean camera centre.
        Vec3 mean = Vec3::Zero();
        for (const DatasetView& v : ds.views) {
            mean += v.camera.center();
        }
        return mean / static_cast<double>(ds.views.size());
    }
    return lu.solve(b);
}

GaussianScene init_scene(const Dataset& ds, int count, InitMode mode, std::uint64_t seed) {
    if (count < 1) {
        throw InvalidParameter("init_scene: count must be >= 1");
    }
    if (!(ds.extent > 0.0)) {
        throw InvalidParameter("init_scene: dataset extent must be positive");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double opacity_logit = inverse_sigmoid(0.1);
    const double iso_scale = ds.extent / std::sqrt(static_cast<double>(count));
    std::vector<GaussianPrimitive> prims(static_cast<std::size_t>(count));

    if (mode == InitMode::random_in_extent) {
        const Vec3 centre = optical_axes_focus(ds);
        const double half = 0.5 * ds.extent;
        for (GaussianPrimitive& g : prims) {
            g.mean = centre + half * Vec3(u(rng), u(rng), u(rng));
            g.log_scale = Vec3::Constant(std::log(iso_scale));
            g.opacity_logit = opacity_logit;
            g.color = Vec3::Constant(0.5);
        }
        return GaussianScene(std::move(prims));
    }

    if (!ds.generator || ds.generator->empty()) {
        throw InvalidParameter("init_scene: from-gt-points needs a persisted generator scene");
    }
    const std::vector<GaussianPrimitive>& gen = *ds.generator;
    std::uniform_int_distribution<std::size_t> pick(0, gen.size() - 1);
    std::normal_distribution<double> jitter(0.0, 0.01 * ds.extent);
    for (GaussianPrimitive& g : prims) {
        const GaussianPrimitive& src = gen[pick(rng)];
        g.mean = src.mean + Vec3(jitter(rng), jitter(rng), jitter(rng));
        g.color = src.color;
        g.opacity_logit = opacity_logit;
    }
    for (std::size_t i = 0; i < prims.size(); ++i) {
        double scale = iso_scale;
        if (prims.size() > 1) {
            std::array<double, 3> nearest{};
            nearest.fill(std::numeric_limits<double>::infinity());
            for (std::size_t j = 0; j < prims.size(); ++j) {
                if (j == i) {
                    continue;
                }
                const double d = (prims[j].mean - prims[i].mean).norm();
                if (d < nearest[2]) {
                    nearest[2] = d;
                    std::sort(nearest.begin(), nearest.end());
                }
            }
            double sum = 0.0;
            int used = 0;
            for (double d : nearest) {
                if (std::isfinite(d)) {
                    sum += d;
                    ++used;
                }
            }
            scale = std::max(sum / used, 1e-4 * ds.extent);
        }
        prims[i].log_scale = Vec3::Constant(std::log(scale));
    }
    return GaussianScene(std::move(prims));
}

} // namespace edgesplat
