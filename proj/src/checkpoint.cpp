#include "edgesplat/checkpoint.hpp"

#include <fstream>

namespace edgesplat {

namespace {

constexpr char kMagic[8] = {'E', 'G', 'S', 'S', 'C', 'E', 'N', 'E'};

void put_params(BinaryWriter& out, const ParamVec& p) {
    for (int i = 0; i < kParamCount; ++i) {
        out.put(p[i]);
    }
}

ParamVec get_params(BinaryReader& in) {
    ParamVec p;
    for (int i = 0; i < kParamCount; ++i) {
        p[i] = in.get<double>();
    }
    return p;
}

} // namespace

void write_scene(BinaryWriter& out, const GaussianScene& scene) {
    scene.check_aligned();
    out.put_bytes(kMagic, sizeof(kMagic));
    out.put(kSceneFormatVersion);
    out.put<std::uint64_t>(scene.size());
    out.put(scene.adam_step);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        put_params(out, scene.primitives[i].pack());
        put_params(out, scene.moments[i].first);
        put_params(out, scene.moments[i].second);
        const DensifyStats& s = scene.stats[i];
        out.put(s.sum_abs_grad);
        out.put(s.sum_grad);
        out.put(s.view_count);
        out.put(s.sum_eas);
        out.put(s.eas_views);
    }
}

GaussianScene read_scene(BinaryReader& in) {
    in.expect_bytes(kMagic, sizeof(kMagic), "scene checkpoint magic");
    const auto version = in.get<std::uint32_t>();
    if (version != kSceneFormatVersion) {
        throw IoError("unsupported scene checkpoint version " + std::to_string(version));
    }
    const auto count = in.get<std::uint64_t>();
    if (count > (1ull << 32)) {
        throw IoError("scene checkpoint declares an implausible primitive count");
    }
    GaussianScene scene;
    scene.adam_step = in.get<std::int64_t>();
    scene.primitives.reserve(count);
    scene.moments.reserve(count);
    scene.stats.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        scene.primitives.push_back(GaussianPrimitive::unpack(get_params(in)));
        AdamMoments m;
        m.first = get_params(in);
        m.second = get_params(in);
        scene.moments.push_back(m);
        DensifyStats s;
        s.sum_abs_grad = in.get<double>();
        s.sum_grad = in.get<double>();
        s.view_count = in.get<std::int64_t>();
        s.sum_eas = in.get<double>();
        s.eas_views = in.get<std::int64_t>();
        scene.stats.push_back(s);
    }
    return scene;
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    BinaryWriter out(os);
    write_scene(out, scene);
    if (!os) {
        throw IoError("failed writing " + path.string());
    }
}

GaussianScene load_scene(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    BinaryReader in(is);
    return read_scene(in);
}

} // namespace edgesplat
