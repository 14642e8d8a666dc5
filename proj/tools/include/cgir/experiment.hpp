#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cgir/graph_data.hpp"
#include "cgir/trainer.hpp"

namespace cgir {

/// Where the graph comes from: user-supplied files or the SBM generator.
struct DataSource {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::optional<SbmParams> synthetic;  // used when no edge file is given
  std::string name;                    // dataset name for reports; derived if empty
};

struct ExperimentSpec {
  DataSource data;
  TrainConfig config;
  std::vector<double> ratios = {0.0};
  int repeats = 1;
  std::uint64_t seed = 0;  // repeat r trains with seed + r
  int jobs = 1;
  int kmeans_restarts = 10;
  std::filesystem::path out = "cgir_out";

  /// Throws ArgumentError/ConfigError for invalid values; touches no files.
  void validate() const;
  std::vector<std::uint64_t> seed_list() const;
};

/// One (variant, ratio) cell of an experiment.
struct RatioResult {
  std::string variant;
  double ratio = 0.0;
  MetricsReport metrics;
};

struct ExperimentResult {
  std::vector<RatioResult> cells;
  std::vector<std::filesystem::path> artifacts;  // relative to spec.out
};

/// Loads and validates the graph described by `source` (throws on bad input).
AttributeGraph load_source(const DataSource& source);
std::string dataset_name(const DataSource& source);

/// Variant name for the ablation flags of a config: "full", "wo_gi", "wo_gi+wo_ea", ...
std::string variant_name(const TrainConfig& config);

/// For every ratio and repeat: mask -> train -> k-means -> metrics. Writes
/// metrics JSON per ratio, history CSV and final F (CGIRMAT1) per run, all
/// under `out / subdir`. Throws TrainingDiverged annotated with the run.
ExperimentResult run_experiment(const ExperimentSpec& spec, const AttributeGraph& graph,
                                const std::filesystem::path& subdir = {});

/// Runs the full config plus one ablated variant per requested flag and
/// writes the consolidated sweep CSV: one row per (ratio, metric) with
/// mean/std for the full model and a parallel column pair per ablation.
ExperimentResult sweep(const ExperimentSpec& spec, const AttributeGraph& graph);

/// Writes `manifest.txt` in sha256sum format listing every artifact.
std::filesystem::path write_manifest(const std::filesystem::path& out,
                                     const std::vector<std::filesystem::path>& artifacts);
std::string sha256_file(const std::filesystem::path& path);

/// Thrown when a run diverges; carries the run identity for the exit message.
class RunDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace cgir
