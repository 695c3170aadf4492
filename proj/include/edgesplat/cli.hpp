#pragma once

#include "edgesplat/dataset.hpp"
#include "edgesplat/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace edgesplat {

/// Everything `train` and `ablate` need: the trainer configuration plus where
/// to read the dataset and write results. JSON schema in docs/config.md.
struct RunConfig {
    TrainConfig train;
    std::filesystem::path dataset;
    std::filesystem::path output;
};

/// Parses and validates a run configuration. Unknown keys, wrong types and
/// out-of-range values throw ConfigError naming the offending field.
/// Relative paths are resolved against `base_dir`.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration as JSON (same schema as the input file).
std::string run_config_to_json(const RunConfig& cfg, int indent = 2);

/// Hash over every view's camera, image bytes and split flag.
std::uint64_t dataset_fingerprint(const Dataset& ds);

struct GeometryOptions {
    std::vector<double> d_fractions{0.45};
    int parents = 10;
    std::int64_t samples = 1'000'000;
    std::uint64_t seed = 0;
    double grid_step = 0.02;
    int max_grid_failures = 0;
    bool grid_search = true;
    std::optional<double> multiplier_override; // passed to the splitter instead of the closed form
};

struct GeometryCase {
    int parent = 0;
    double d_fraction = 0.0;
    double tangency_error = 0.0;     // |outer child extent along the long axis - L0|
    double endpoint_error = 0.0;     // |parent quadratic form at the minor endpoints - 1|
    double minor_factor = 0.0;       // child minor scale / parent minor scale
    double expected_factor = 0.0;    // sqrt(1 - f^2)
    double best_multiplier = 0.0;    // grid search, NaN when skipped
    bool las_ok = false;
    bool grid_ok = false;
};

struct GeometryReport {
    std::vector<GeometryCase> cases;
    int las_failures = 0;
    int grid_failures = 0;
    bool passed = false;

    std::string to_json(int indent = 2) const;
};

/// Tolerances of the split-geometry checks.
inline constexpr double kTangencyTolerance = 1e-9;
inline constexpr double kEndpointTolerance = 1e-6;
inline constexpr double kMinorFactorTolerance = 1e-12;

/// Random parent primitive with a strictly longest axis (deterministic in `rng`).
GaussianPrimitive random_parent(std::mt19937_64& rng);

/// Checks long-axis splits of seeded random parents and optionally runs the
/// shape-difference grid search for each.
GeometryReport verify_geometry(const GeometryOptions& options);

/// Entry point of the `edgesplat` tool. Exit codes: 0 success, 1 runtime or
/// check failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace edgesplat
