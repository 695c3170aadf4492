#include "edgesplat/cli.hpp"
#include "edgesplat/checkpoint.hpp"
#include "edgesplat/densify.hpp"
#include "edgesplat/edgecache.hpp"
#include "edgesplat/errors.hpp"
#include "edgesplat/oracle.hpp"
#include "edgesplat/scenes.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace edgesplat {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Strict JSON object reader: every key must be consumed, types are checked.

class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    void number(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (!v->is_number()) {
                throw ConfigError(name(key) + ": expected a number");
            }
            out = v->get<double>();
        }
    }

    void optional_number(const char* key, std::optional<double>& out) {
        if (const json* v = take(key)) {
            if (v->is_null()) {
                out.reset();
            } else if (v->is_number()) {
                out = v->get<double>();
            } else {
                throw ConfigError(name(key) + ": expected a number or null");
            }
        }
    }

    template <class Int>
    void integer(const char* key, Int& out) {
        if (const json* v = take(key)) {
            if (!v->is_number_integer()) {
                throw ConfigError(name(key) + ": expected an integer");
            }
            if constexpr (std::is_unsigned_v<Int>) {
                if (v->is_number_unsigned()) {
                    out = v->get<Int>();
                    return;
                }
                throw ConfigError(name(key) + ": expected a non-negative integer");
            } else {
                const auto x = v->get<std::int64_t>();
                if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max()) {
                    throw ConfigError(name(key) + ": integer out of range");
                }
                out = static_cast<Int>(x);
            }
        }
    }

    void boolean(const char* key, bool& out) {
        if (const json* v = take(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(name(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    std::optional<std::string> string(const char* key) {
        if (const json* v = take(key)) {
            if (!v->is_string()) {
                throw ConfigError(name(key) + ": expected a string");
            }
            return v->get<std::string>();
        }
        return std::nullopt;
    }

    const json* array(const char* key) {
        const json* v = take(key);
        if (v && !v->is_array()) {
            throw ConfigError(name(key) + ": expected an array");
        }
        return v;
    }

    const json* object(const char* key) { return take(key); }

    std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError(name(it.key()) + ": unknown key");
            }
        }
    }

private:
    const json* take(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string_view to_string(DensifyMode mode) {
    return mode == DensifyMode::improved ? "improved" : "baseline_adc";
}

DensifyMode parse_mode(std::string_view s) {
    if (s == "improved") {
        return DensifyMode::improved;
    }
    if (s == "baseline_adc") {
        return DensifyMode::baseline_adc;
    }
    throw ConfigError("mode: expected 'improved' or 'baseline_adc', got '" + std::string(s) + "'");
}

int default_workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

template <class Fn>
auto rethrow_as_config(const std::string& field, Fn&& fn) {
    try {
        return fn();
    } catch (const InvalidParameter& e) {
        throw ConfigError(field + ": " + e.what());
    }
}

void read_lr(const json& j, LearningRates& lr) {
    ObjectReader r(j, "lr");
    r.number("position_init", lr.position_init);
    r.number("position_final", lr.position_final);
    r.number("scale", lr.scale);
    r.number("rotation", lr.rotation);
    r.number("opacity", lr.opacity);
    r.number("color", lr.color);
    r.finish();
}

void read_policy(const json& j, TrainConfig& c) {
    ObjectReader r(j, "policy");
    DensifyPolicy& p = c.policy;
    r.number("abs_grad_threshold", p.abs_grad_threshold);
    r.integer("eas_sample_views", p.eas_sample_views);
    r.number("las_d_fraction", p.las_d_fraction);
    r.number("las_opacity_factor", p.las_opacity_factor);
    r.integer("budget_max", p.budget_max);
    r.number("rap_fraction", p.rap_fraction);
    r.optional_number("reset_opacity_value", c.reset_opacity_value);
    r.number("min_opacity_prune", p.min_opacity_prune);
    r.integer("densify_interval", p.densify_interval);
    r.boolean("growth_control", p.growth_control);
    r.optional_number("rs_multiplier", p.rs_multiplier);
    r.number("clone_scale_fraction", p.clone_scale_fraction);
    r.number("large_prune_fraction", p.large_prune_fraction);
    r.finish();
}

void read_schedule(const json& j, ScheduleFractions& s) {
    ObjectReader r(j, "schedule");
    r.number("densify_start", s.densify_start);
    r.number("densify_end", s.densify_end);
    r.number("reset_interval", s.reset_interval);
    if (const json* rap = r.array("rap")) {
        s.rap.clear();
        for (const json& v : *rap) {
            if (!v.is_number()) {
                throw ConfigError("schedule.rap: expected numbers");
            }
            s.rap.push_back(v.get<double>());
        }
    }
    if (const json* mu = r.array("mu_stages")) {
        s.mu_stages.clear();
        for (std::size_t i = 0; i < mu->size(); ++i) {
            ObjectReader stage((*mu)[i], "schedule.mu_stages[" + std::to_string(i) + "]");
            MuStageFraction f;
            stage.number("start", f.start);
            stage.integer("interval", f.interval);
            stage.finish();
            s.mu_stages.push_back(f);
        }
    }
    r.finish();
}

json config_json(const RunConfig& rc) {
    const TrainConfig& c = rc.train;
    const DensifyPolicy& p = c.policy;
    json mu = json::array();
    for (const MuStageFraction& s : c.schedule.mu_stages) {
        mu.push_back({{"start", s.start}, {"interval", s.interval}});
    }
    json j;
    j["dataset"] = rc.dataset.string();
    j["output"] = rc.output.string();
    j["mode"] = std::string(to_string(c.mode));
    j["total_iters"] = c.total_iters;
    j["lambda"] = c.lambda;
    j["seed"] = c.seed;
    j["eval_interval"] = c.eval_interval;
    j["checkpoint_interval"] = c.checkpoint_interval;
    j["workers"] = c.workers;
    j["densify"] = c.densify;
    j["init"] = {{"mode", std::string(to_string(c.init_mode))}, {"count", c.init_count}};
    j["lr"] = {{"position_init", c.lr.position_init}, {"position_final", c.lr.position_final},
               {"scale", c.lr.scale},                 {"rotation", c.lr.rotation},
               {"opacity", c.lr.opacity},             {"color", c.lr.color}};
    j["policy"] = {{"abs_grad_threshold", p.abs_grad_threshold},
                   {"eas_sample_views", p.eas_sample_views},
                   {"las_d_fraction", p.las_d_fraction},
                   {"las_opacity_factor", p.las_opacity_factor},
                   {"budget_max", p.budget_max},
                   {"rap_fraction", p.rap_fraction},
                   {"reset_opacity_value", c.reset_opacity_value ? json(*c.reset_opacity_value) : json(nullptr)},
                   {"min_opacity_prune", p.min_opacity_prune},
                   {"densify_interval", p.densify_interval},
                   {"growth_control", p.growth_control},
                   {"rs_multiplier", p.rs_multiplier ? json(*p.rs_multiplier) : json(nullptr)},
                   {"clone_scale_fraction", p.clone_scale_fraction},
                   {"large_prune_fraction", p.large_prune_fraction}};
    j["schedule"] = {{"densify_start", c.schedule.densify_start},
                     {"densify_end", c.schedule.densify_end},
                     {"reset_interval", c.schedule.reset_interval},
                     {"rap", c.schedule.rap},
                     {"mu_stages", mu}};
    return j;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os || !(os << text)) {
        throw IoError("cannot write " + path.string());
    }
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot read " + path.string());
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

// ---------------------------------------------------------------------------
// Run configuration

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    ObjectReader r(j, "");
    RunConfig rc;
    TrainConfig& c = rc.train;
    c.workers = default_workers();

    const auto dataset = r.string("dataset");
    if (!dataset || dataset->empty()) {
        throw ConfigError("dataset: required field missing");
    }
    const auto output = r.string("output");
    if (!output || output->empty()) {
        throw ConfigError("output: required field missing");
    }
    rc.dataset = base_dir / *dataset;
    rc.output = base_dir / *output;
    if (const auto mode = r.string("mode")) {
        c.mode = parse_mode(*mode);
    }
    r.integer("total_iters", c.total_iters);
    r.number("lambda", c.lambda);
    r.integer("seed", c.seed);
    r.integer("eval_interval", c.eval_interval);
    r.integer("checkpoint_interval", c.checkpoint_interval);
    r.integer("workers", c.workers);
    r.boolean("densify", c.densify);
    if (const json* init = r.object("init")) {
        ObjectReader ir(*init, "init");
        if (const auto mode = ir.string("mode")) {
            c.init_mode = rethrow_as_config("init.mode", [&] { return parse_init_mode(*mode); });
        }
        ir.integer("count", c.init_count);
        ir.finish();
    }
    if (const json* lr = r.object("lr")) {
        read_lr(*lr, c.lr);
    }
    if (const json* policy = r.object("policy")) {
        read_policy(*policy, c);
    }
    if (const json* schedule = r.object("schedule")) {
        read_schedule(*schedule, c.schedule);
    }
    r.finish();
    rethrow_as_config("policy", [&] { c.validate(); });
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text, path.parent_path());
}

std::string run_config_to_json(const RunConfig& cfg, int indent) { return config_json(cfg).dump(indent); }

std::uint64_t dataset_fingerprint(const Dataset& ds) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h = (h ^ p[i]) * 1099511628211ull;
        }
    };
    for (const DatasetView& v : ds.views) {
        const ViewCamera& c = v.camera;
        mix(c.rotation.data(), sizeof(double) * 9);
        mix(c.translation.data(), sizeof(double) * 3);
        for (double x : {c.fx, c.fy, c.cx, c.cy}) {
            mix(&x, sizeof x);
        }
        const std::uint64_t ih = image_hash(v.image);
        mix(&ih, sizeof ih);
        const unsigned char split = v.is_test ? 1 : 0;
        mix(&split, 1);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Split geometry verification

GaussianPrimitive random_parent(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    GaussianPrimitive g;
    g.mean = Vec3(n(rng), n(rng), n(rng));
    // Long axis at least 1.5x the middle one so the split axis is unambiguous.
    const double mid = 0.1 + 0.4 * u(rng);
    const double small = mid * (0.2 + 0.8 * u(rng));
    const double big = mid * (1.5 + 2.0 * u(rng));
    double s[3] = {big, mid, small};
    std::shuffle(std::begin(s), std::end(s), rng);
    g.log_scale = Vec3(std::log(s[0]), std::log(s[1]), std::log(s[2]));
    g.rotation = Vec4(n(rng), n(rng), n(rng), n(rng)).normalized();
    g.opacity_logit = 0.5;
    g.color = Vec3(0.5, 0.5, 0.5);
    return g;
}

namespace {

// Half-width of the 1-sigma ellipsoid of `g` along unit direction `dir`.
double support(const GaussianPrimitive& g, const Vec3& dir) {
    const Mat3 cov = build_covariance(g);
    return std::sqrt(dir.dot(cov * dir));
}

GeometryCase check_split(const GaussianPrimitive& parent, int index, double f, const GeometryOptions& opt,
                         std::uint64_t seed) {
    GeometryCase gc;
    gc.parent = index;
    gc.d_fraction = f;
    gc.expected_factor = oracle::eq9_multiplier(f);
    gc.best_multiplier = std::numeric_limits<double>::quiet_NaN();

    const Mat3 rot = rotation_from_quaternion(parent.rotation);
    const Vec3 scale = parent.log_scale.array().exp();
    int k = 0;
    scale.maxCoeff(&k);
    const Vec3 axis = rot.col(k);
    const double l0 = scale[k];
    const auto [a, b] = long_axis_split(parent, f, 1.0, opt.multiplier_override);

    double minor_dev = 0.0;
    for (const GaussianPrimitive* child : {&a, &b}) {
        const Vec3 offset = child->mean - parent.mean;
        const double reach = std::abs(offset.dot(axis)) + support(*child, axis);
        gc.tangency_error = std::max(gc.tangency_error, std::abs(reach - l0));
        for (int j = 0; j < 3; ++j) {
            if (j == k) {
                continue;
            }
            const Vec3 minor = rot.col(j);
            const double rs = support(*child, minor);
            const double factor = rs / scale[j];
            gc.minor_factor = factor;
            minor_dev = std::max(minor_dev, std::abs(factor - gc.expected_factor));
            for (double sign : {-1.0, 1.0}) {
                const Vec3 local = rot.transpose() * (offset + sign * rs * minor);
                const double q = (local.array() / scale.array()).square().sum();
                gc.endpoint_error = std::max(gc.endpoint_error, std::abs(q - 1.0));
            }
        }
    }
    gc.las_ok = gc.tangency_error <= kTangencyTolerance && gc.endpoint_error <= kEndpointTolerance &&
                minor_dev <= kMinorFactorTolerance;

    if (opt.grid_search) {
        const std::vector<double> grid = oracle::rs_grid(opt.grid_step);
        const oracle::RsSearchResult rs = oracle::grid_search_rs(parent, f, grid, opt.samples, seed);
        gc.best_multiplier = rs.best_multiplier;
        gc.grid_ok = std::abs(rs.best_multiplier - gc.expected_factor) <= opt.grid_step + 1e-12;
    } else {
        gc.grid_ok = true;
    }
    return gc;
}

} // namespace

GeometryReport verify_geometry(const GeometryOptions& opt) {
    if (opt.parents < 1 || opt.d_fractions.empty() || opt.samples < 1 || !(opt.grid_step > 0.0)) {
        throw InvalidParameter("verify-geometry: need parents >= 1, samples >= 1, a positive grid step and "
                               "at least one d fraction");
    }
    GeometryReport rep;
    for (std::size_t fi = 0; fi < opt.d_fractions.size(); ++fi) {
        std::mt19937_64 rng(opt.seed);
        for (int i = 0; i < opt.parents; ++i) {
            const GaussianPrimitive parent = random_parent(rng);
            const std::uint64_t case_seed = opt.seed * 1000003ull + fi * 1009ull + static_cast<std::uint64_t>(i);
            rep.cases.push_back(check_split(parent, i, opt.d_fractions[fi], opt, case_seed));
            rep.las_failures += rep.cases.back().las_ok ? 0 : 1;
            rep.grid_failures += rep.cases.back().grid_ok ? 0 : 1;
        }
    }
    rep.passed = rep.las_failures == 0 && rep.grid_failures <= opt.max_grid_failures;
    return rep;
}

std::string GeometryReport::to_json(int indent) const {
    json cs = json::array();
    for (const GeometryCase& c : cases) {
        cs.push_back({{"parent", c.parent},
                      {"d_fraction", c.d_fraction},
                      {"tangency_error", c.tangency_error},
                      {"endpoint_error", c.endpoint_error},
                      {"minor_factor", c.minor_factor},
                      {"expected_multiplier", c.expected_factor},
                      {"best_multiplier", std::isnan(c.best_multiplier) ? json(nullptr) : json(c.best_multiplier)},
                      {"las_ok", c.las_ok},
                      {"grid_ok", c.grid_ok}});
    }
    json j{{"passed", passed}, {"las_failures", las_failures}, {"grid_failures", grid_failures}, {"cases", cs}};
    return j.dump(indent);
}

// ---------------------------------------------------------------------------
// Commands

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

json metrics_json(const Metrics& m, std::span<const std::size_t> views, std::size_t count) {
    json per = json::array();
    for (std::size_t i = 0; i < views.size(); ++i) {
        per.push_back({{"view", views[i]}, {"psnr", m.per_view_psnr[i]}, {"ssim", m.per_view_ssim[i]}});
    }
    return json{{"count", count}, {"mean_psnr", m.psnr}, {"mean_ssim", m.ssim}, {"views", per}};
}

std::vector<std::size_t> split_views(const Dataset& ds, const std::string& split) {
    if (split == "test") {
        return ds.test_indices();
    }
    if (split == "train") {
        return ds.train_indices();
    }
    std::vector<std::size_t> all(ds.views.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
}

Dataset load_dataset_checked(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("dataset: directory " + dir.string() + " does not exist");
    }
    return load_dataset(dir);
}

void write_outputs(const Trainer& t, const RunConfig& rc, const Dataset& ds) {
    const auto& out = rc.output;
    save_scene(t.scene(), out / "final.ckpt");
    t.log().write_csv(out);
    std::filesystem::create_directories(out / "renders");
    RenderSettings settings;
    settings.workers = rc.train.workers;
    for (std::size_t v : ds.test_indices()) {
        char name[32];
        std::snprintf(name, sizeof name, "test_%04zu.png", v);
        write_png(render(t.scene(), ds.views[v].camera, nullptr, settings).bundle.image, out / "renders" / name);
    }
    const auto test = ds.test_indices();
    const Metrics m = evaluate_views(t.scene(), ds, test, rc.train.workers);
    write_text(out / "metrics.json", metrics_json(m, test, t.scene().size()).dump(2) + "\n");

    const ResolvedSchedule& s = t.schedule();
    json mu = json::array();
    for (const MuStage& st : s.mu_stages) {
        mu.push_back({{"start", st.start}, {"interval", st.interval}});
    }
    json manifest{{"format", "edgesplat-run"},
                  {"version", 1},
                  {"config", config_json(rc)},
                  {"dataset_fingerprint", hex64(dataset_fingerprint(ds))},
                  {"resolved",
                   {{"densify_start_iter", s.policy.densify_start_iter},
                    {"densify_end_iter", s.policy.densify_end_iter},
                    {"reset_interval", s.policy.reset_interval},
                    {"reset_opacity_value", s.policy.reset_opacity_value},
                    {"rap_iters", s.policy.rap_iters},
                    {"mu_stages", mu},
                    {"expected_optimizer_steps", expected_optimizer_steps(rc.train.total_iters, s.mu_stages)}}},
                  {"initial_count", t.initial_count()},
                  {"final",
                   {{"count", t.scene().size()},
                    {"optimizer_steps", t.log().optimizer_steps},
                    {"test_psnr", m.psnr},
                    {"test_ssim", m.ssim}}}};
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

int cmd_train(const RunConfig& rc, const std::optional<std::filesystem::path>& resume, std::ostream& out) {
    const Dataset ds = load_dataset_checked(rc.dataset);
    std::filesystem::create_directories(rc.output);
    Trainer t = resume ? Trainer::resume(rc.train, ds, *resume) : Trainer(rc.train, ds);
    const int interval = rc.train.checkpoint_interval;
    while (!t.finished()) {
        const int next = interval > 0 ? (t.next_iter() / interval + 1) * interval : rc.train.total_iters;
        t.run_until(next);
        if (interval > 0 && !t.finished()) {
            char name[32];
            std::snprintf(name, sizeof name, "ckpt_%06d.ckpt", t.next_iter());
            save_scene(t.scene(), rc.output / name);
            t.save_state(rc.output / "state.bin");
        }
    }
    write_outputs(t, rc, ds);
    const EvalRecord& last = t.log().evals.back();
    out << "iter " << last.iter << " test_psnr " << last.test_psnr << " test_ssim " << last.test_ssim << " count "
        << last.count << "\n";
    return kExitOk;
}

int cmd_eval(const std::filesystem::path& ckpt, const std::filesystem::path& dataset, const std::string& split,
             const std::optional<std::filesystem::path>& out_path, int workers, std::ostream& out) {
    const Dataset ds = load_dataset_checked(dataset);
    const GaussianScene scene = load_scene(ckpt);
    const auto manifest_path = ckpt.parent_path() / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        json m;
        try {
            m = json::parse(read_text(manifest_path));
        } catch (const json::exception& e) {
            throw IoError(manifest_path.string() + ": " + e.what());
        }
        if (m.contains("dataset_fingerprint") &&
            m["dataset_fingerprint"].get<std::string>() != hex64(dataset_fingerprint(ds))) {
            throw std::runtime_error("checkpoint " + ckpt.string() + " was trained on a different dataset than " +
                                     dataset.string());
        }
    }
    const auto views = split_views(ds, split);
    const Metrics m = evaluate_views(scene, ds, views, workers);
    const std::string text = metrics_json(m, views, scene.size()).dump(2) + "\n";
    if (out_path) {
        write_text(*out_path, text);
    } else {
        out << text;
    }
    return kExitOk;
}

std::vector<double> default_sweep_values(SweepKind kind) {
    switch (kind) {
    case SweepKind::mu_start: return {0.0, 0.25, 0.5, 0.75};
    case SweepKind::opacity_factor: return {0.4, 0.5, 0.6, 0.7, 0.8, 1.0};
    case SweepKind::d_fraction: return {0.1, 0.2, 0.3, 0.45, 0.5};
    case SweepKind::gc_on_off: return {0.0, 1.0};
    case SweepKind::rs_factor: return {0.8, 0.85, 0.893, 0.95, 1.0};
    }
    return {};
}

int cmd_ablate(const RunConfig& rc, SweepKind kind, std::vector<double> values,
               const std::optional<std::filesystem::path>& out_dir, std::ostream& out) {
    if (values.empty()) {
        values = default_sweep_values(kind);
    }
    for (double v : values) {
        apply_sweep(rc.train, kind, v); // reject bad values before any run
    }
    const Dataset ds = load_dataset_checked(rc.dataset);
    const auto dir = out_dir.value_or(rc.output / ("ablation_" + std::string(to_string(kind))));
    std::filesystem::create_directories(dir);
    const AblationResult res = ablate(rc.train, ds, kind, values);

    std::ostringstream csv;
    csv << "setting,value,test_psnr,test_ssim,final_count,peak_count,peak_iter,optimizer_steps,mean_blend_length\n";
    char line[512];
    for (const AblationRow& r : res.rows) {
        std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g,%zu,%zu,%d,%lld,%.17g\n", r.setting.c_str(), r.value,
                      r.test_psnr, r.test_ssim, r.final_count, r.peak_count, r.peak_iter,
                      static_cast<long long>(r.optimizer_steps), r.mean_blend_length);
        csv << line;
    }
    write_text(dir / "ablation.csv", csv.str());
    if (kind == SweepKind::gc_on_off) {
        for (std::size_t i = 0; i < res.rows.size(); ++i) {
            std::ostringstream curve;
            curve << "iter,count,budget\n";
            for (const CountRecord& c : res.logs[i].counts) {
                curve << c.iter << ',' << c.count << ',' << c.budget << '\n';
            }
            write_text(dir / (res.rows[i].value != 0.0 ? "count_curve_gc_on.csv" : "count_curve_gc_off.csv"),
                       curve.str());
        }
    }
    out << csv.str();
    return kExitOk;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) {
            throw ConfigError("--values: '" + item + "' is not a number");
        }
        v.push_back(x);
    }
    return v;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"CPU Gaussian-splatting trainer with edge-aware densification"};
    app.require_subcommand(1);

    // make-scene
    SyntheticSpec spec;
    std::string kind_name = "checker-box";
    std::filesystem::path scene_out;
    auto* mk = app.add_subcommand("make-scene", "Generate a synthetic posed-image dataset");
    mk->add_option("--kind", kind_name, "checker-box | textured-plane | blob-field");
    mk->add_option("--views", spec.views, "Number of ring views (>= 8)");
    mk->add_option("--res", spec.resolution, "Square image resolution");
    mk->add_option("--seed", spec.seed, "Generator seed");
    mk->add_option("--ring-radius", spec.ring_radius);
    mk->add_option("--ring-height", spec.ring_height);
    mk->add_option("--focal-factor", spec.focal_factor);
    mk->add_option("--texture-frequency", spec.texture_frequency);
    mk->add_option("--primitives", spec.primitive_count, "Generator primitive count (0 = default)");
    mk->add_option("--out", scene_out, "Output directory")->required();

    // train
    std::filesystem::path config_path;
    std::optional<std::string> mode_override;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> iters_override, workers_override;
    std::optional<std::filesystem::path> dataset_override, output_override, resume_path;
    auto* tr = app.add_subcommand("train", "Train a scene from a run configuration");
    tr->add_option("--config", config_path, "Run configuration (JSON)")->required();
    tr->add_option("--mode", mode_override, "improved | baseline_adc");
    tr->add_option("--seed", seed_override);
    tr->add_option("--iters", iters_override);
    tr->add_option("--workers", workers_override);
    tr->add_option("--dataset", dataset_override);
    tr->add_option("--output", output_override);
    tr->add_option("--resume", resume_path, "Training state written at a checkpoint (state.bin)");

    // eval
    std::filesystem::path ckpt_path, eval_dataset;
    std::string split = "test";
    std::optional<std::filesystem::path> eval_out;
    int eval_workers = default_workers();
    auto* ev = app.add_subcommand("eval", "Score a checkpoint against a dataset");
    ev->add_option("--checkpoint", ckpt_path)->required();
    ev->add_option("--dataset", eval_dataset)->required();
    ev->add_option("--split", split)->check(CLI::IsMember({"test", "train", "all"}));
    ev->add_option("--out", eval_out, "Metrics JSON path (default: stdout)");
    ev->add_option("--workers", eval_workers);

    // ablate
    std::filesystem::path ablate_config;
    std::string sweep_name, values_text;
    std::optional<std::filesystem::path> ablate_out;
    auto* ab = app.add_subcommand("ablate", "Sweep one setting and tabulate final metrics");
    ab->add_option("--config", ablate_config)->required();
    ab->add_option("--sweep", sweep_name, "mu_start | opacity_factor | d_fraction | gc_on_off | rs_factor")
        ->required();
    ab->add_option("--values", values_text, "Comma-separated sweep values");
    ab->add_option("--out", ablate_out);

    // verify-geometry
    GeometryOptions geo;
    std::string d_text;
    std::optional<double> inject;
    std::optional<std::filesystem::path> geo_out;
    auto* vg = app.add_subcommand("verify-geometry", "Check long-axis split geometry on random primitives");
    vg->add_option("--d-fractions", d_text, "Comma-separated d fractions (default 0.45)");
    vg->add_option("--parents", geo.parents);
    vg->add_option("--samples", geo.samples);
    vg->add_option("--seed", geo.seed);
    vg->add_option("--grid-step", geo.grid_step);
    vg->add_option("--max-grid-failures", geo.max_grid_failures);
    vg->add_flag("!--no-grid-search", geo.grid_search, "Only run the closed-form checks");
    vg->add_option("--inject-multiplier", inject, "Force a fixed minor-axis multiplier (mutation test)");
    vg->add_option("--out", geo_out);

    // render
    std::filesystem::path render_ckpt, render_dataset, render_out;
    std::size_t render_view = 0;
    auto* rd = app.add_subcommand("render", "Render one dataset view of a checkpoint to PNG");
    rd->add_option("--checkpoint", render_ckpt)->required();
    rd->add_option("--dataset", render_dataset)->required();
    rd->add_option("--view", render_view);
    rd->add_option("--out", render_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*mk) {
            spec.kind = rethrow_as_config("--kind", [&] { return parse_scene_kind(kind_name); });
            rethrow_as_config("make-scene", [&] { spec.validate(); });
            save_dataset(generate_synthetic(spec), scene_out);
            out << "wrote " << spec.views << " views to " << scene_out.string() << "\n";
            return kExitOk;
        }
        if (*tr) {
            RunConfig rc = load_run_config(config_path);
            if (mode_override) rc.train.mode = parse_mode(*mode_override);
            if (seed_override) rc.train.seed = *seed_override;
            if (iters_override) rc.train.total_iters = *iters_override;
            if (workers_override) rc.train.workers = *workers_override;
            if (dataset_override) rc.dataset = *dataset_override;
            if (output_override) rc.output = *output_override;
            rethrow_as_config("config", [&] { rc.train.validate(); });
            return cmd_train(rc, resume_path, out);
        }
        if (*ev) {
            return cmd_eval(ckpt_path, eval_dataset, split, eval_out, eval_workers, out);
        }
        if (*ab) {
            const SweepKind kind = parse_sweep_kind(sweep_name);
            const RunConfig rc = load_run_config(ablate_config);
            return cmd_ablate(rc, kind, values_text.empty() ? std::vector<double>{} : parse_values(values_text),
                              ablate_out, out);
        }
        if (*vg) {
            if (!d_text.empty()) {
                geo.d_fractions = parse_values(d_text);
            }
            geo.multiplier_override = inject;
            const GeometryReport rep = rethrow_as_config("verify-geometry", [&] { return verify_geometry(geo); });
            const std::string text = rep.to_json() + "\n";
            if (geo_out) {
                write_text(*geo_out, text);
            }
            out << text;
            return rep.passed ? kExitOk : kExitFailure;
        }
        if (*rd) {
            const Dataset ds = load_dataset_checked(render_dataset);
            if (render_view >= ds.views.size()) {
                throw ConfigError("--view: index " + std::to_string(render_view) + " out of range");
            }
            write_png(render(load_scene(render_ckpt), ds.views[render_view].camera).bundle.image, render_out);
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace edgesplat
