#pragma once

#include "edgesplat/dataset.hpp"
#include "edgesplat/densify.hpp"
#include "edgesplat/edgecache.hpp"
#include "edgesplat/renderer.hpp"
#include "edgesplat/scene.hpp"
#include "edgesplat/scenes.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace edgesplat {

/// Adam learning rates per parameter group. The position rate decays
/// exponentially from `position_init` to `position_final` over the run and is
/// multiplied by the scene extent.
struct LearningRates {
    double position_init = 4e-5;
    double position_final = 2e-6;
    double scale = 0.005;
    double rotation = 0.001;
    double opacity = 0.05;
    double color = 0.0025;
};

/// One multi-step-update stage: from `start` on, one optimiser step per `interval` views.
struct MuStage {
    int start = 0;
    int interval = 1;
    bool operator==(const MuStage&) const = default;
};

/// Same, with `start` as a fraction of the run length.
struct MuStageFraction {
    double start = 0.0;
    int interval = 1;
};

/// Iteration constants as fractions of total_iters.
struct ScheduleFractions {
    double densify_start = 0.017;
    double densify_end = 0.5;
    double reset_interval = 0.1;
    std::vector<double> rap{0.11, 0.21};
    std::vector<MuStageFraction> mu_stages{{0.0, 1}, {0.5, 5}, {0.75, 20}};
};

struct TrainConfig {
    int total_iters = 4000;
    LearningRates lr;
    double lambda = 0.2;
    DensifyMode mode = DensifyMode::improved;
    bool densify = true;              // false: no densification, resets or pruning
    DensifyPolicy policy;             // iteration fields are overwritten by `schedule`
    ScheduleFractions schedule;
    std::optional<double> reset_opacity_value; // default 0.05 improved, 0.01 baseline
    std::uint64_t seed = 0;
    int eval_interval = 500;
    int checkpoint_interval = 0;      // 0: only the final checkpoint
    int workers = 1;
    InitMode init_mode = InitMode::from_gt_points;
    int init_count = 200;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

struct ResolvedSchedule {
    DensifyPolicy policy;
    std::vector<MuStage> mu_stages;
};

/// Converts fractions to iteration numbers: round(fraction * total_iters),
/// reset interval at least 1, stage starts strictly increasing.
ResolvedSchedule resolve_schedule(const TrainConfig& cfg);

/// Interval of the last stage whose start is <= iter. Throws InvalidParameter
/// unless the stages are strictly increasing, the first starts at 0 and every
/// interval is at least 1.
int mu_interval(int iter, std::span<const MuStage> stages);
void validate_mu_stages(std::span<const MuStage> stages);

/// Sum over stages of ceil(stage length / interval), stage lengths clipped to total_iters.
std::int64_t expected_optimizer_steps(int total_iters, std::span<const MuStage> stages);

/// Per-parameter learning rates for one step.
ParamVec learning_rate_vector(const LearningRates& lr, int iter, int total_iters, double extent);

/// Mean-of-views gradient accumulator for the multi-step update.
struct GradBuffer {
    std::vector<ParamVec> sum;
    int pending = 0;

    void resize(std::size_t n) { sum.assign(n, ParamVec::Zero()); }
};

/// One Adam step (beta1 0.9, beta2 0.999, eps 1e-15, bias corrected by the
/// scene's global step count), then quaternion renormalisation and colour
/// clamping to [0, 1].
void adam_step(GaussianScene& scene, std::span<const ParamVec> grads, const ParamVec& lr);

/// Adds one view's gradients; steps on the buffer mean once `n` views are pending.
/// Returns true when a step was taken.
bool accumulate_and_step(GaussianScene& scene, GradBuffer& buffer, std::span<const ParamVec> view_grads, int n,
                         const ParamVec& lr);

/// Steps on the mean of a partial buffer. Returns false when nothing was pending.
bool flush(GaussianScene& scene, GradBuffer& buffer, const ParamVec& lr);

struct EvalRecord {
    int iter = 0; // completed iterations
    double train_psnr = 0.0;
    double train_ssim = 0.0;
    double test_psnr = 0.0;
    double test_ssim = 0.0;
    std::size_t count = 0;
    std::int64_t optimizer_steps = 0;
    double mean_loss = 0.0; // mean training loss since the previous record
};

/// Opacity reset or recovery-aware pruning event.
struct PruneRecord {
    int iter = 0;
    std::string kind; // "rap" or "reset"
    std::size_t count_before = 0;
    std::size_t count_after = 0;
    std::size_t affected = 0;          // primitives removed (rap) or reset (reset)
    double removed_max_opacity = 0.0;  // rap only
    double kept_min_opacity = 0.0;     // rap only
};

struct CountRecord {
    int iter = 0;
    std::size_t count = 0;
    std::int64_t budget = 0; // growth budget (or fixed cap) in force
};

struct TrainLog {
    std::vector<EvalRecord> evals;
    std::vector<DensifyRoundReport> densify;
    std::vector<PruneRecord> prunes;
    std::vector<CountRecord> counts; // one per iteration
    std::vector<double> losses;      // one per iteration
    std::int64_t optimizer_steps = 0;
    std::vector<double> eval_seconds; // wall time at each eval record; not deterministic

    /// CSV writers; `dir` must exist. timing.csv holds the wall-clock column.
    void write_csv(const std::filesystem::path& dir) const;
};

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
    std::vector<double> per_view_psnr;
    std::vector<double> per_view_ssim;
};

/// Renders the listed views and scores them against the dataset images.
Metrics evaluate_views(const GaussianScene& scene, const Dataset& ds, std::span<const std::size_t> views,
                       int workers = 1);

class Trainer {
public:
    /// Validates the configuration against the dataset and initialises the scene.
    Trainer(TrainConfig cfg, const Dataset& ds);
    /// Starts from a given scene instead of init_scene.
    Trainer(TrainConfig cfg, const Dataset& ds, GaussianScene initial);

    // The edge-score views point into members, so copies would dangle; moves keep
    // the vector buffers in place.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;
    Trainer(Trainer&&) = default;
    Trainer& operator=(Trainer&&) = default;

    /// Restores a state written by save_state. The configuration must match the
    /// one the state was written with.
    static Trainer resume(TrainConfig cfg, const Dataset& ds, const std::filesystem::path& state);

    /// Runs iterations until `next_iter() == end` (clamped to total_iters).
    void run_until(int end);
    void run() { run_until(cfg_.total_iters); }
    bool finished() const { return next_iter_ >= cfg_.total_iters; }

    void save_state(const std::filesystem::path& path) const;

    int next_iter() const { return next_iter_; }
    const GaussianScene& scene() const { return scene_; }
    const TrainLog& log() const { return log_; }
    const ResolvedSchedule& schedule() const { return sched_; }
    const TrainConfig& config() const { return cfg_; }
    std::int64_t initial_count() const { return initial_count_; }

private:
    void iteration(int iter);
    void evaluate(int completed);
    void flush_pending(int iter);
    std::size_t view_for(int iter);
    std::int64_t current_cap(int completed) const;

    TrainConfig cfg_;
    const Dataset* ds_;
    ResolvedSchedule sched_;
    EdgeCache edges_;
    std::vector<std::size_t> train_views_;
    std::vector<std::size_t> test_views_;
    std::vector<EasView> eas_views_;
    RenderSettings settings_;

    GaussianScene scene_;
    GradBuffer buffer_;
    TrainLog log_;
    int next_iter_ = 0;
    std::int64_t initial_count_ = 0;
    double loss_sum_ = 0.0;
    int loss_n_ = 0;
    double elapsed_ = 0.0;
    int perm_epoch_ = -1;
    std::vector<std::size_t> perm_;
};

/// Split-without-reoptimisation experiment on a snapshot.
enum class SplitStrategy { baseline_split, long_axis };

struct PsnrDropResult {
    std::size_t candidates = 0;
    double psnr_before = 0.0;
    double baseline_after = 0.0;
    double las_after = 0.0;
    double baseline_drop = 0.0;
    double las_drop = 0.0;
};

/// Splits the given candidates with each strategy (no re-optimisation) and
/// reports mean PSNR before minus after over `views`. Throws InvalidParameter
/// when `candidates` is empty.
PsnrDropResult psnr_drop_experiment(const GaussianScene& snapshot, const Dataset& ds,
                                    std::span<const std::size_t> views, std::span<const std::size_t> candidates,
                                    double d_fraction, double opacity_factor, std::uint64_t seed, int workers = 1);

/// Candidate set used by the experiment: the `max_count` primitives with the
/// largest mean absolute gradient above the threshold (ascending indices).
std::vector<std::size_t> drop_candidates(const GaussianScene& snapshot, double threshold, std::size_t max_count);

enum class SweepKind { mu_start, opacity_factor, d_fraction, gc_on_off, rs_factor };

std::string_view to_string(SweepKind kind);
/// Throws ConfigError for unknown names.
SweepKind parse_sweep_kind(std::string_view name);

struct AblationRow {
    std::string setting;
    double value = 0.0;
    double test_psnr = 0.0;
    double test_ssim = 0.0;
    std::size_t final_count = 0;
    std::size_t peak_count = 0;
    int peak_iter = 0;
    std::int64_t optimizer_steps = 0;
    double mean_blend_length = 0.0; // over test views
};

/// Applies one sweep value to a copy of the config.
TrainConfig apply_sweep(const TrainConfig& base, SweepKind kind, double value);

struct AblationResult {
    std::vector<AblationRow> rows;
    std::vector<TrainLog> logs;
};

/// One training run per value, all sharing seed and dataset.
AblationResult ablate(const TrainConfig& base, const Dataset& ds, SweepKind kind, std::span<const double> values);

} // namespace edgesplat
