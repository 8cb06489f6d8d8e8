#pragma once

// Reproducible experiment runs driven by one JSON document.
//
// Every command reads an ExperimentConfig, derives all randomness from its
// root seed, and writes only below config.output_dir:
//
//   dataset.json                  gen-data
//   checkpoint_<mode>.json        train
//   metrics_<mode>.csv            train
//   search_<strategy>_<mode>.csv  search
//   correlate_<mode>.csv          correlate (per-config pairs)
//   correlate_<mode>_summary.csv  correlate (per-band coefficients)
//   eval_<mode>.csv               eval
//   numeric_failure_<mode>.json   train, only when a step diverges

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slimda/datagen.hpp"
#include "slimda/seed_trainer.hpp"
#include "slimda/slimnet.hpp"
#include "slimda/upem_search.hpp"

namespace slimda {

enum class SearchStrategy { Greedy, Random };
std::string to_string(SearchStrategy s);
SearchStrategy parse_search_strategy(const std::string& text);

struct SearchSettings {
    SearchStrategy strategy = SearchStrategy::Greedy;
    std::size_t k = 6;
    std::size_t q = 20;
    std::size_t n_random = 100;
    double tolerance = 0.02;
    /// Explicit budget ratios; empty means k equal FLOPs increments.
    std::vector<double> budgets;
};

struct CorrelateSettings {
    std::size_t n = 100;
    /// FLOPs-ratio bands [lo, hi]; configs are spread evenly in FLOPs within each band.
    std::vector<std::pair<double, double>> bands{{0.0, 1.0}};
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";
    DatasetSpec dataset;
    Architecture architecture;
    TrainerConfig trainer;
    SearchSettings search;
    CorrelateSettings correlate;
    /// When false the metrics `seconds` column is written as 0 so reruns are byte-identical.
    bool record_wall_time = false;

    /// Sets the root seed of the dataset, the trainer and the search streams.
    void set_seed(std::uint64_t s);
    /// Cross-field checks (input_dim == d, class counts agree, ...). Throws ConfigError.
    void validate() const;
};

/// Throws ConfigError naming the first missing or malformed field.
ExperimentConfig experiment_from_json(const nlohmann::json& doc);
nlohmann::json experiment_to_json(const ExperimentConfig& config);
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct RunOptions {
    std::optional<std::filesystem::path> dataset;
    std::optional<std::filesystem::path> checkpoint;
    /// Adds true target accuracies to search reports.
    bool reveal_labels = false;
    /// Widths for eval, each "w0;w1;...". Empty means full and smallest.
    std::vector<std::string> widths;
};

struct CommandResult {
    std::vector<std::filesystem::path> written;
};

std::filesystem::path dataset_path(const ExperimentConfig& config, const RunOptions& options);
std::filesystem::path checkpoint_path(const ExperimentConfig& config, const RunOptions& options);

/// Budget ratios of the search ladder.
std::vector<double> budget_ladder(const ExperimentConfig& config);

CommandResult cmd_gen_data(const ExperimentConfig& config, std::ostream& log);
CommandResult cmd_train(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
CommandResult cmd_search(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
CommandResult cmd_correlate(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);
CommandResult cmd_eval(const ExperimentConfig& config, const RunOptions& options, std::ostream& log);

/// The fixed metrics header.
const std::vector<std::string>& metrics_header();

} // namespace slimda
