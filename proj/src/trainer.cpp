#include "edgesplat/trainer.hpp"
#include "edgesplat/binary_io.hpp"
#include "edgesplat/checkpoint.hpp"
#include "edgesplat/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace edgesplat {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;

// Tags separating the independent random streams derived from the seed.
constexpr std::uint64_t kViewStream = 0x76696577;   // view order per epoch
constexpr std::uint64_t kDensifyStream = 0x64656e73; // densification round

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw ConfigError(what);
    }
}

int iter_at(double fraction, int total) {
    return static_cast<int>(std::lround(fraction * total));
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
    require(total_iters >= 1, "total_iters must be >= 1");
    require(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
    for (double v : {lr.position_init, lr.position_final, lr.scale, lr.rotation, lr.opacity, lr.color}) {
        require(std::isfinite(v) && v >= 0.0, "learning rates must be finite and >= 0");
    }
    require(lr.position_init > 0.0 && lr.position_final > 0.0, "position learning rates must be positive");
    require(eval_interval >= 1, "eval_interval must be >= 1");
    require(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
    require(workers >= 1, "workers must be >= 1");
    require(init_count >= 1, "init.count must be >= 1");
    require(schedule.densify_start >= 0.0 && schedule.densify_end > schedule.densify_start &&
                schedule.densify_end <= 1.0,
            "schedule: need 0 <= densify_start < densify_end <= 1");
    require(schedule.reset_interval > 0.0, "schedule.reset_interval must be positive");
    for (double r : schedule.rap) {
        require(r > 0.0 && r < schedule.densify_end, "schedule.rap fractions must lie in (0, densify_end)");
    }
    require(!schedule.mu_stages.empty() && schedule.mu_stages.front().start == 0.0,
            "schedule.mu_stages must start at 0");
    for (std::size_t i = 0; i < schedule.mu_stages.size(); ++i) {
        require(schedule.mu_stages[i].interval >= 1, "schedule.mu_stages intervals must be >= 1");
        require(schedule.mu_stages[i].start >= 0.0 && schedule.mu_stages[i].start < 1.0,
                "schedule.mu_stages starts must lie in [0, 1)");
        require(i == 0 || schedule.mu_stages[i].start > schedule.mu_stages[i - 1].start,
                "schedule.mu_stages must be sorted by start");
    }
    require(!reset_opacity_value || (*reset_opacity_value > 0.0 && *reset_opacity_value < 1.0),
            "reset_opacity_value must lie in (0, 1)");
    resolve_schedule(*this).policy.validate();
}

ResolvedSchedule resolve_schedule(const TrainConfig& cfg) {
    const int t = cfg.total_iters;
    ResolvedSchedule r;
    r.policy = cfg.policy;
    r.policy.densify_start_iter = iter_at(cfg.schedule.densify_start, t);
    r.policy.densify_end_iter = std::max(r.policy.densify_start_iter + 1, iter_at(cfg.schedule.densify_end, t));
    r.policy.reset_interval = std::max(1, iter_at(cfg.schedule.reset_interval, t));
    r.policy.rap_iters.clear();
    for (double f : cfg.schedule.rap) {
        const int it = iter_at(f, t);
        if (r.policy.rap_iters.empty() || it > r.policy.rap_iters.back()) {
            r.policy.rap_iters.push_back(it);
        }
    }
    const double reset_default = cfg.mode == DensifyMode::improved ? 0.05 : 0.01;
    r.policy.reset_opacity_value = cfg.reset_opacity_value.value_or(reset_default);
    r.policy.reset_eligibility_threshold = r.policy.reset_opacity_value;
    for (const MuStageFraction& s : cfg.schedule.mu_stages) {
        const int start = iter_at(s.start, t);
        if (!r.mu_stages.empty() && start <= r.mu_stages.back().start) {
            r.mu_stages.back().interval = s.interval; // collapsed by rounding
            continue;
        }
        r.mu_stages.push_back(MuStage{start, s.interval});
    }
    return r;
}

void validate_mu_stages(std::span<const MuStage> stages) {
    if (stages.empty() || stages.front().start != 0) {
        throw InvalidParameter("multi-step stages must start at iteration 0");
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].interval < 1) {
            throw InvalidParameter("multi-step intervals must be >= 1");
        }
        if (i > 0 && stages[i].start <= stages[i - 1].start) {
            throw InvalidParameter("multi-step stages must be strictly increasing");
        }
    }
}

int mu_interval(int iter, std::span<const MuStage> stages) {
    validate_mu_stages(stages);
    int n = stages.front().interval;
    for (const MuStage& s : stages) {
        if (s.start <= iter) {
            n = s.interval;
        }
    }
    return n;
}

std::int64_t expected_optimizer_steps(int total_iters, std::span<const MuStage> stages) {
    validate_mu_stages(stages);
    std::int64_t steps = 0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const int begin = std::min(stages[i].start, total_iters);
        const int end = i + 1 < stages.size() ? std::min(stages[i + 1].start, total_iters) : total_iters;
        const std::int64_t len = end - begin;
        steps += (len + stages[i].interval - 1) / stages[i].interval;
    }
    return steps;
}

ParamVec learning_rate_vector(const LearningRates& lr, int iter, int total_iters, double extent) {
    const double t = std::clamp(static_cast<double>(iter) / std::max(1, total_iters), 0.0, 1.0);
    const double pos = std::exp((1.0 - t) * std::log(lr.position_init) + t * std::log(lr.position_final));
    ParamVec v;
    v.segment<3>(param::kMean).setConstant(pos * extent);
    v.segment<3>(param::kLogScale).setConstant(lr.scale);
    v.segment<4>(param::kRotation).setConstant(lr.rotation);
    v[param::kOpacity] = lr.opacity;
    v.segment<3>(param::kColor).setConstant(lr.color);
    return v;
}

// ---------------------------------------------------------------------------
// Optimiser

void adam_step(GaussianScene& scene, std::span<const ParamVec> grads, const ParamVec& lr) {
    scene.check_aligned();
    if (grads.size() != scene.size()) {
        throw InvalidParameter("adam_step: gradients not aligned with the scene");
    }
    ++scene.adam_step;
    const double t = static_cast<double>(scene.adam_step);
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        AdamMoments& m = scene.moments[i];
        const ParamVec& g = grads[i];
        m.first = kBeta1 * m.first + (1.0 - kBeta1) * g;
        m.second = kBeta2 * m.second + (1.0 - kBeta2) * g.cwiseProduct(g);
        const ParamVec m_hat = m.first / c1;
        const ParamVec v_hat = m.second / c2;
        ParamVec p = scene.primitives[i].pack();
        p.array() -= lr.array() * m_hat.array() / (v_hat.array().sqrt() + kAdamEps);
        GaussianPrimitive next = GaussianPrimitive::unpack(p);
        const double qn = next.rotation.norm();
        next.rotation = qn > 0.0 ? Vec4(next.rotation / qn) : Vec4(1.0, 0.0, 0.0, 0.0);
        next.color = next.color.cwiseMax(0.0).cwiseMin(1.0);
        scene.primitives[i] = next;
    }
}

bool accumulate_and_step(GaussianScene& scene, GradBuffer& buffer, std::span<const ParamVec> view_grads, int n,
                         const ParamVec& lr) {
    if (n < 1) {
        throw InvalidParameter("accumulate_and_step: interval must be >= 1");
    }
    if (buffer.sum.size() != scene.size() || view_grads.size() != scene.size()) {
        throw InvalidParameter("accumulate_and_step: buffers not aligned with the scene");
    }
    for (std::size_t i = 0; i < view_grads.size(); ++i) {
        buffer.sum[i] += view_grads[i];
    }
    ++buffer.pending;
    if (buffer.pending < n) {
        return false;
    }
    return flush(scene, buffer, lr);
}

bool flush(GaussianScene& scene, GradBuffer& buffer, const ParamVec& lr) {
    if (buffer.pending == 0) {
        return false;
    }
    if (buffer.pending > 1) {
        const double inv = 1.0 / buffer.pending;
        for (ParamVec& g : buffer.sum) {
            g *= inv;
        }
    }
    adam_step(scene, buffer.sum, lr);
    buffer.resize(scene.size());
    buffer.pending = 0;
    return true;
}

// ---------------------------------------------------------------------------
// Logs

void TrainLog::write_csv(const std::filesystem::path& dir) const {
    auto open = [&](const char* name) {
        std::FILE* f = std::fopen((dir / name).string().c_str(), "w");
        if (!f) {
            throw IoError("cannot write " + (dir / name).string());
        }
        return f;
    };
    std::FILE* f = open("log.csv");
    std::fprintf(f, "iter,train_psnr,train_ssim,test_psnr,test_ssim,count,optimizer_steps,mean_loss\n");
    for (const EvalRecord& e : evals) {
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%zu,%lld,%.17g\n", e.iter, e.train_psnr, e.train_ssim,
                     e.test_psnr, e.test_ssim, e.count, static_cast<long long>(e.optimizer_steps), e.mean_loss);
    }
    std::fclose(f);

    f = open("densify.csv");
    std::fprintf(f, "iter,candidates,splits,clones,pruned,count_before,count_after,budget\n");
    for (const DensifyRoundReport& d : densify) {
        std::fprintf(f, "%d,%zu,%zu,%zu,%zu,%zu,%zu,%lld\n", d.iter, d.candidates, d.splits, d.clones, d.pruned,
                     d.count_before, d.count_after, static_cast<long long>(d.budget));
    }
    std::fclose(f);

    f = open("prune.csv");
    std::fprintf(f, "iter,kind,count_before,count_after,affected,removed_max_opacity,kept_min_opacity\n");
    for (const PruneRecord& p : prunes) {
        std::fprintf(f, "%d,%s,%zu,%zu,%zu,%.17g,%.17g\n", p.iter, p.kind.c_str(), p.count_before, p.count_after,
                     p.affected, p.removed_max_opacity, p.kept_min_opacity);
    }
    std::fclose(f);

    f = open("count_curve.csv");
    std::fprintf(f, "iter,count,budget,loss\n");
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::fprintf(f, "%d,%zu,%lld,%.17g\n", counts[i].iter, counts[i].count,
                     static_cast<long long>(counts[i].budget), i < losses.size() ? losses[i] : 0.0);
    }
    std::fclose(f);

    f = open("timing.csv");
    std::fprintf(f, "iter,elapsed_seconds\n");
    for (std::size_t i = 0; i < evals.size() && i < eval_seconds.size(); ++i) {
        std::fprintf(f, "%d,%.6f\n", evals[i].iter, eval_seconds[i]);
    }
    std::fclose(f);
}

Metrics evaluate_views(const GaussianScene& scene, const Dataset& ds, std::span<const std::size_t> views,
                       int workers) {
    Metrics m;
    RenderSettings settings;
    settings.workers = workers;
    for (std::size_t v : views) {
        const RenderOutput out = render(scene, ds.views.at(v).camera, nullptr, settings);
        m.per_view_psnr.push_back(psnr(out.bundle.image, ds.views[v].image));
        m.per_view_ssim.push_back(ssim(out.bundle.image, ds.views[v].image));
    }
    if (!views.empty()) {
        const double n = static_cast<double>(views.size());
        m.psnr = std::accumulate(m.per_view_psnr.begin(), m.per_view_psnr.end(), 0.0) / n;
        m.ssim = std::accumulate(m.per_view_ssim.begin(), m.per_view_ssim.end(), 0.0) / n;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(TrainConfig cfg, const Dataset& ds)
    : Trainer(cfg, ds, init_scene(ds, cfg.init_count, cfg.init_mode, cfg.seed)) {}

Trainer::Trainer(TrainConfig cfg, const Dataset& ds, GaussianScene initial)
    : cfg_(std::move(cfg)), ds_(&ds), scene_(std::move(initial)) {
    cfg_.validate();
    ds.validate();
    if (ds.train_indices().size() < 2) {
        throw InvalidParameter("training needs at least two training views");
    }
    scene_.check_aligned();
    sched_ = resolve_schedule(cfg_);
    edges_ = EdgeCache::build(ds);
    train_views_ = ds.train_indices();
    test_views_ = ds.test_indices();
    for (std::size_t v : train_views_) {
        eas_views_.push_back(EasView{&ds.views[v].camera, &edges_.map_for(v)});
    }
    settings_.workers = cfg_.workers;
    buffer_.resize(scene_.size());
    initial_count_ = static_cast<std::int64_t>(scene_.size());
}

std::size_t Trainer::view_for(int iter) {
    const int n = static_cast<int>(train_views_.size());
    const int epoch = iter / n;
    if (epoch != perm_epoch_) {
        perm_ = train_views_;
        std::mt19937_64 rng = stream(cfg_.seed, kViewStream, static_cast<std::uint64_t>(epoch));
        std::shuffle(perm_.begin(), perm_.end(), rng);
        perm_epoch_ = epoch;
    }
    return perm_[static_cast<std::size_t>(iter % n)];
}

std::int64_t Trainer::current_cap(int completed) const {
    if (!cfg_.densify) {
        return initial_count_;
    }
    if (cfg_.mode == DensifyMode::improved && sched_.policy.growth_control) {
        return std::max(growth_curve(completed, sched_.policy), initial_count_);
    }
    return std::max(sched_.policy.budget_max, initial_count_);
}

void Trainer::flush_pending(int iter) {
    if (flush(scene_, buffer_, learning_rate_vector(cfg_.lr, iter, cfg_.total_iters, ds_->extent))) {
        ++log_.optimizer_steps;
    }
}

void Trainer::iteration(int iter) {
    const int completed = iter + 1;
    const std::size_t v = view_for(iter);
    const DatasetView& view = ds_->views[v];

    const RenderOutput out = render(scene_, view.camera, nullptr, settings_);
    const LossResult loss = loss_and_pixel_grads(out.bundle.image, view.image, cfg_.lambda);
    const BackwardResult grads = backward(scene_, view.camera, out.state, loss.pixel_grads);
    const DensifyPolicy& policy = sched_.policy;
    if (cfg_.densify && iter < policy.densify_end_iter) {
        accumulate_view_stats(scene_, out.bundle.per_gaussian_hit, grads.per_gaussian_grad,
                              grads.per_gaussian_abs_grad);
    }

    const ParamVec lr = learning_rate_vector(cfg_.lr, iter, cfg_.total_iters, ds_->extent);
    if (accumulate_and_step(scene_, buffer_, grads.param_grads, mu_interval(iter, sched_.mu_stages), lr)) {
        ++log_.optimizer_steps;
    }
    const bool stage_ends = completed == cfg_.total_iters ||
                            std::any_of(sched_.mu_stages.begin(), sched_.mu_stages.end(),
                                        [&](const MuStage& s) { return s.start == completed; });
    if (stage_ends) {
        flush_pending(iter);
    }

    if (cfg_.densify) {
        const bool in_window = completed >= policy.densify_start_iter && completed < policy.densify_end_iter;
        if (in_window && completed % policy.densify_interval == 0) {
            flush_pending(iter);
            std::mt19937_64 rng = stream(cfg_.seed, kDensifyStream, static_cast<std::uint64_t>(completed));
            DensifyContext ctx;
            ctx.views = eas_views_;
            ctx.scene_extent = ds_->extent;
            ctx.initial_count = initial_count_;
            ctx.render_settings = settings_;
            log_.densify.push_back(densify_round(scene_, ctx, completed, policy, cfg_.mode, rng));
            buffer_.resize(scene_.size());
        }
        if (completed < policy.densify_end_iter && completed % policy.reset_interval == 0) {
            flush_pending(iter);
            PruneRecord rec;
            rec.iter = completed;
            rec.kind = "reset";
            rec.count_before = scene_.size();
            rec.affected = reset_opacity(scene_, policy);
            rec.count_after = scene_.size();
            log_.prunes.push_back(rec);
        }
        if (cfg_.mode == DensifyMode::improved &&
            std::find(policy.rap_iters.begin(), policy.rap_iters.end(), completed) != policy.rap_iters.end()) {
            flush_pending(iter);
            PruneRecord rec;
            rec.iter = completed;
            rec.kind = "rap";
            rec.count_before = scene_.size();
            const PruneReport rep = recovery_aware_prune(scene_, policy.rap_fraction);
            rec.count_after = scene_.size();
            rec.affected = rep.removed;
            rec.removed_max_opacity = rep.removed_max_opacity;
            rec.kept_min_opacity = rep.kept_min_opacity;
            log_.prunes.push_back(rec);
            buffer_.resize(scene_.size());
        }
    }

    log_.counts.push_back(CountRecord{completed, scene_.size(), current_cap(completed)});
    log_.losses.push_back(loss.loss);
    loss_sum_ += loss.loss;
    ++loss_n_;
    if (completed % cfg_.eval_interval == 0 || completed == cfg_.total_iters) {
        evaluate(completed);
    }
}

void Trainer::evaluate(int completed) {
    const Metrics train = evaluate_views(scene_, *ds_, train_views_, cfg_.workers);
    const Metrics test = evaluate_views(scene_, *ds_, test_views_, cfg_.workers);
    EvalRecord r;
    r.iter = completed;
    r.train_psnr = train.psnr;
    r.train_ssim = train.ssim;
    r.test_psnr = test.psnr;
    r.test_ssim = test.ssim;
    r.count = scene_.size();
    r.optimizer_steps = log_.optimizer_steps;
    r.mean_loss = loss_n_ > 0 ? loss_sum_ / loss_n_ : 0.0;
    loss_sum_ = 0.0;
    loss_n_ = 0;
    log_.evals.push_back(r);
    log_.eval_seconds.push_back(elapsed_);
}

void Trainer::run_until(int end) {
    end = std::min(end, cfg_.total_iters);
    const auto t0 = std::chrono::steady_clock::now();
    double base = elapsed_;
    while (next_iter_ < end) {
        iteration(next_iter_);
        ++next_iter_;
        elapsed_ = base + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
}

// ---------------------------------------------------------------------------
// Training state persistence

namespace {

constexpr char kStateMagic[8] = {'E', 'G', 'S', 'T', 'R', 'A', 'I', 'N'};
constexpr std::uint32_t kStateVersion = 1;

void put_u64(BinaryWriter& w, std::size_t v) { w.put<std::uint64_t>(v); }
std::size_t get_u64(BinaryReader& r) { return static_cast<std::size_t>(r.get<std::uint64_t>()); }

std::filesystem::path timing_path(const std::filesystem::path& state) {
    return std::filesystem::path(state.string() + ".timing");
}

std::uint64_t get_count(BinaryReader& r) {
    const auto n = r.get<std::uint64_t>();
    if (n > (1ull << 32)) {
        throw IoError("training state declares an implausible record count");
    }
    return n;
}

} // namespace

void Trainer::save_state(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot write training state " + path.string());
    }
    BinaryWriter w(os);
    w.put_bytes(kStateMagic, sizeof kStateMagic);
    w.put(kStateVersion);
    w.put<std::int32_t>(cfg_.total_iters);
    w.put<std::uint64_t>(cfg_.seed);
    w.put<std::int32_t>(next_iter_);
    w.put<std::int64_t>(initial_count_);
    w.put(loss_sum_);
    w.put<std::int32_t>(loss_n_);
    write_scene(w, scene_);
    w.put<std::int32_t>(buffer_.pending);
    put_u64(w, buffer_.sum.size());
    for (const ParamVec& g : buffer_.sum) {
        for (int k = 0; k < kParamCount; ++k) {
            w.put(g[k]);
        }
    }
    w.put<std::int64_t>(log_.optimizer_steps);
    put_u64(w, log_.evals.size());
    for (const EvalRecord& e : log_.evals) {
        w.put<std::int32_t>(e.iter);
        w.put(e.train_psnr);
        w.put(e.train_ssim);
        w.put(e.test_psnr);
        w.put(e.test_ssim);
        put_u64(w, e.count);
        w.put<std::int64_t>(e.optimizer_steps);
        w.put(e.mean_loss);
    }
    put_u64(w, log_.densify.size());
    for (const DensifyRoundReport& d : log_.densify) {
        w.put<std::int32_t>(d.iter);
        put_u64(w, d.candidates);
        put_u64(w, d.splits);
        put_u64(w, d.clones);
        put_u64(w, d.pruned);
        put_u64(w, d.count_before);
        put_u64(w, d.count_after);
        w.put<std::int64_t>(d.budget);
    }
    put_u64(w, log_.prunes.size());
    for (const PruneRecord& p : log_.prunes) {
        w.put<std::int32_t>(p.iter);
        w.put_string(p.kind);
        put_u64(w, p.count_before);
        put_u64(w, p.count_after);
        put_u64(w, p.affected);
        w.put(p.removed_max_opacity);
        w.put(p.kept_min_opacity);
    }
    put_u64(w, log_.counts.size());
    for (const CountRecord& c : log_.counts) {
        w.put<std::int32_t>(c.iter);
        put_u64(w, c.count);
        w.put<std::int64_t>(c.budget);
    }
    w.put_vector(log_.losses);
    if (!os) {
        throw IoError("failed writing training state " + path.string());
    }

    // Wall-clock data lives beside the state so the state itself is reproducible.
    std::ofstream ts(timing_path(path), std::ios::binary);
    BinaryWriter tw(ts);
    tw.put(elapsed_);
    tw.put_vector(log_.eval_seconds);
}

Trainer Trainer::resume(TrainConfig cfg, const Dataset& ds, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open training state " + path.string());
    }
    BinaryReader r(is);
    r.expect_bytes(kStateMagic, sizeof kStateMagic, "training state magic");
    if (r.get<std::uint32_t>() != kStateVersion) {
        throw IoError("unsupported training state version in " + path.string());
    }
    if (r.get<std::int32_t>() != cfg.total_iters || r.get<std::uint64_t>() != cfg.seed) {
        throw ConfigError("training state " + path.string() + " was written with a different configuration");
    }
    const int next_iter = r.get<std::int32_t>();
    const std::int64_t initial_count = r.get<std::int64_t>();
    const double loss_sum = r.get<double>();
    const int loss_n = r.get<std::int32_t>();
    GaussianScene scene = read_scene(r);

    Trainer t(std::move(cfg), ds, std::move(scene));
    t.next_iter_ = next_iter;
    t.initial_count_ = initial_count;
    t.loss_sum_ = loss_sum;
    t.loss_n_ = loss_n;
    t.buffer_.pending = r.get<std::int32_t>();
    const std::uint64_t nbuf = get_count(r);
    if (nbuf != t.scene_.size()) {
        throw IoError("training state gradient buffer does not match its scene");
    }
    for (std::uint64_t i = 0; i < nbuf; ++i) {
        for (int k = 0; k < kParamCount; ++k) {
            t.buffer_.sum[i][k] = r.get<double>();
        }
    }
    TrainLog& log = t.log_;
    log.optimizer_steps = r.get<std::int64_t>();
    for (std::uint64_t n = get_count(r), i = 0; i < n; ++i) {
        EvalRecord e;
        e.iter = r.get<std::int32_t>();
        e.train_psnr = r.get<double>();
        e.train_ssim = r.get<double>();
        e.test_psnr = r.get<double>();
        e.test_ssim = r.get<double>();
        e.count = get_u64(r);
        e.optimizer_steps = r.get<std::int64_t>();
        e.mean_loss = r.get<double>();
        log.evals.push_back(e);
    }
    for (std::uint64_t n = get_count(r), i = 0; i < n; ++i) {
        DensifyRoundReport d;
        d.iter = r.get<std::int32_t>();
        d.candidates = get_u64(r);
        d.splits = get_u64(r);
        d.clones = get_u64(r);
        d.pruned = get_u64(r);
        d.count_before = get_u64(r);
        d.count_after = get_u64(r);
        d.budget = r.get<std::int64_t>();
        log.densify.push_back(d);
    }
    for (std::uint64_t n = get_count(r), i = 0; i < n; ++i) {
        PruneRecord p;
        p.iter = r.get<std::int32_t>();
        p.kind = r.get_string(64);
        p.count_before = get_u64(r);
        p.count_after = get_u64(r);
        p.affected = get_u64(r);
        p.removed_max_opacity = r.get<double>();
        p.kept_min_opacity = r.get<double>();
        log.prunes.push_back(p);
    }
    for (std::uint64_t n = get_count(r), i = 0; i < n; ++i) {
        CountRecord c;
        c.iter = r.get<std::int32_t>();
        c.count = get_u64(r);
        c.budget = r.get<std::int64_t>();
        log.counts.push_back(c);
    }
    log.losses = r.get_vector<double>();
    log.eval_seconds.assign(log.evals.size(), 0.0);
    if (std::ifstream ts{timing_path(path), std::ios::binary}) {
        BinaryReader tr(ts);
        t.elapsed_ = tr.get<double>();
        log.eval_seconds = tr.get_vector<double>();
    }
    return t;
}

// ---------------------------------------------------------------------------
// Split experiment

std::vector<std::size_t> drop_candidates(const GaussianScene& snapshot, double threshold, std::size_t max_count) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        if (average_abs_grad(snapshot.stats[i]) > threshold) {
            idx.push_back(i);
        }
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return average_abs_grad(snapshot.stats[a]) > average_abs_grad(snapshot.stats[b]);
    });
    if (idx.size() > max_count) {
        idx.resize(max_count);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

GaussianScene split_all(const GaussianScene& snapshot, std::span<const std::size_t> candidates, SplitStrategy s,
                        double d_fraction, double opacity_factor, std::mt19937_64& rng) {
    GaussianScene out = snapshot;
    std::vector<std::uint8_t> mask(out.size(), 0);
    std::vector<GaussianPrimitive> children;
    for (std::size_t i : candidates) {
        if (i >= snapshot.size()) {
            throw InvalidParameter("psnr_drop_experiment: candidate index out of range");
        }
        mask[i] = 1;
        const auto pair = s == SplitStrategy::long_axis
                              ? long_axis_split(snapshot.primitives[i], d_fraction, opacity_factor)
                              : baseline_split(snapshot.primitives[i], rng);
        children.push_back(pair.first);
        children.push_back(pair.second);
    }
    out.remove_masked(mask);
    for (const GaussianPrimitive& c : children) {
        out.append(c);
    }
    return out;
}

} // namespace

PsnrDropResult psnr_drop_experiment(const GaussianScene& snapshot, const Dataset& ds,
                                    std::span<const std::size_t> views, std::span<const std::size_t> candidates,
                                    double d_fraction, double opacity_factor, std::uint64_t seed, int workers) {
    if (candidates.empty()) {
        throw InvalidParameter("psnr_drop_experiment: empty candidate set");
    }
    if (views.empty()) {
        throw InvalidParameter("psnr_drop_experiment: no views to evaluate");
    }
    PsnrDropResult r;
    r.candidates = candidates.size();
    r.psnr_before = evaluate_views(snapshot, ds, views, workers).psnr;
    std::mt19937_64 rng(seed);
    const GaussianScene base = split_all(snapshot, candidates, SplitStrategy::baseline_split, d_fraction,
                                         opacity_factor, rng);
    const GaussianScene las = split_all(snapshot, candidates, SplitStrategy::long_axis, d_fraction, opacity_factor,
                                        rng);
    r.baseline_after = evaluate_views(base, ds, views, workers).psnr;
    r.las_after = evaluate_views(las, ds, views, workers).psnr;
    r.baseline_drop = r.psnr_before - r.baseline_after;
    r.las_drop = r.psnr_before - r.las_after;
    return r;
}

// ---------------------------------------------------------------------------
// Ablations

std::string_view to_string(SweepKind kind) {
    switch (kind) {
    case SweepKind::mu_start: return "mu_start";
    case SweepKind::opacity_factor: return "opacity_factor";
    case SweepKind::d_fraction: return "d_fraction";
    case SweepKind::gc_on_off: return "gc_on_off";
    case SweepKind::rs_factor: return "rs_factor";
    }
    return "unknown";
}

SweepKind parse_sweep_kind(std::string_view name) {
    for (SweepKind k : {SweepKind::mu_start, SweepKind::opacity_factor, SweepKind::d_fraction, SweepKind::gc_on_off,
                        SweepKind::rs_factor}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    throw ConfigError("unknown sweep '" + std::string(name) +
                      "' (expected mu_start, opacity_factor, d_fraction, gc_on_off or rs_factor)");
}

TrainConfig apply_sweep(const TrainConfig& base, SweepKind kind, double value) {
    TrainConfig c = base;
    switch (kind) {
    case SweepKind::mu_start:
        require(value >= 0.0 && value < 1.0, "mu_start values must lie in [0, 1)");
        c.schedule.mu_stages = value == 0.0 ? std::vector<MuStageFraction>{{0.0, 5}}
                                            : std::vector<MuStageFraction>{{0.0, 1}, {value, 5}};
        break;
    case SweepKind::opacity_factor: c.policy.las_opacity_factor = value; break;
    case SweepKind::d_fraction: c.policy.las_d_fraction = value; break;
    case SweepKind::gc_on_off:
        require(value == 0.0 || value == 1.0, "gc_on_off values must be 0 or 1");
        c.policy.growth_control = value != 0.0;
        break;
    case SweepKind::rs_factor: c.policy.rs_multiplier = value; break;
    }
    c.validate();
    return c;
}

AblationResult ablate(const TrainConfig& base, const Dataset& ds, SweepKind kind, std::span<const double> values) {
    if (values.empty()) {
        throw ConfigError("ablation needs at least one sweep value");
    }
    AblationResult res;
    for (double v : values) {
        const TrainConfig cfg = apply_sweep(base, kind, v);
        Trainer t(cfg, ds);
        t.run();
        const TrainLog& log = t.log();
        AblationRow row;
        row.setting = std::string(to_string(kind));
        row.value = v;
        row.test_psnr = log.evals.back().test_psnr;
        row.test_ssim = log.evals.back().test_ssim;
        row.final_count = t.scene().size();
        for (const CountRecord& c : log.counts) {
            if (c.count > row.peak_count) {
                row.peak_count = c.count;
                row.peak_iter = c.iter;
            }
        }
        row.optimizer_steps = log.optimizer_steps;
        double blend = 0.0;
        const auto test = ds.test_indices();
        for (std::size_t i : test) {
            blend += render(t.scene(), ds.views[i].camera).bundle.mean_blend_length;
        }
        row.mean_blend_length = blend / static_cast<double>(test.size());
        res.rows.push_back(row);
        res.logs.push_back(log);
    }
    return res;
}

} // namespace edgesplat
