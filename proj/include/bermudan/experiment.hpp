#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bermudan/hedging.hpp"
#include "bermudan/market.hpp"
#include "bermudan/pricing.hpp"
#include "bermudan/stopping.hpp"

namespace bermudan {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;

enum class Scale { desk, full };

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view text);

struct ExperimentConfig {
    ModelParams model;
    TrainConfig train;
    DualConfig dual;
    HedgeConfig hedge;
    std::size_t lower_paths = 500'000;  // K_L
    double alpha = 0.05;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    Scale scale = Scale::desk;

    /// Copies `seed` into every sub-configuration.
    void set_seed(std::uint64_t value);
    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// d = 5, s0 = 100 max-call with the hyperparameters of the chosen scale.
ExperimentConfig preset(Scale scale);

/// Parses a JSON configuration: the preset named by "scale" (or `scale_override`) is
/// overlaid with the file's entries. Unknown keys and type mismatches raise ConfigError.
ExperimentConfig parse_config(std::string_view json_text, std::optional<Scale> scale_override = {});
ExperimentConfig load_config(const std::filesystem::path& file, std::optional<Scale> scale_override = {});

/// Canonical JSON of every resolved setting.
std::string config_json(const ExperimentConfig& config);
/// 64-bit FNV-1a of config_json.
std::uint64_t config_hash(const ExperimentConfig& config);

struct PriceRun {
    StoppingPolicy policy;
    BoundEstimate lower;
    UpperBoundResult upper;
    PriceEstimate estimate;
    double t_lower_seconds = 0.0;  // policy training plus lower bound
    double t_upper_seconds = 0.0;
};

/// Trains the stopping policy, then computes both bounds, the point estimate and the interval.
PriceRun run_price(const ExperimentConfig& config);

enum class HedgeStatus { hedged, nothing_to_hedge };

struct HedgeRun {
    HedgeStatus status = HedgeStatus::hedged;
    double immediate_value = 0.0;   // g(0, s0) when nothing is hedged
    double v_hat = 0.0;
    std::optional<HedgeErrorStats> interval;  // IHE, IHS
    std::optional<HedgeErrorStats> total;     // HE, HS
    std::optional<Histogram> histogram;
    double t1_seconds = 0.0;
    double t2_seconds = 0.0;
};

/// Interval mode trains and evaluates the [0, t_1] hedge. Full mode does the same and then
/// trains and evaluates the hedge up to the exercise time.
HedgeRun run_hedge(const ExperimentConfig& config, HedgeMode mode, const StoppingPolicy& policy, double v_hat);

struct OracleCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Closed-form, lattice and duality cross-checks plus the configured model's validation.
std::vector<OracleCheck> run_oracle_suite(const ExperimentConfig& config);

// CSV layouts.
std::string price_csv_header();
std::string price_csv_row(const ExperimentConfig& config, const PriceRun& run);
std::string hedge_csv_header();
std::string hedge_csv_row(const ExperimentConfig& config, const HedgeRun& run);
std::string histogram_csv(const Histogram& histogram);
/// "d5_s100_M12"
std::string histogram_tag(const ExperimentConfig& config);
/// path, step, time, x_1..x_dim
std::string paths_csv(const PathBatch& batch);

/// Writes run_manifest.json (config hash, seed, versions, resolved config) into `dir`.
void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& config, std::string_view command);

}  // namespace bermudan
