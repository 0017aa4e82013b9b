#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "geomrep/evaluation.hpp"

namespace geomrep {

struct EvalConfig {
  Protocol protocol = Protocol::kP1;
  double pck_threshold_mm = 150.0;
  int n_thresholds = 31;
};

struct SeedConfig {
  std::uint64_t data = 1;
  std::uint64_t train = 1;
};

/// Whole-run configuration; sections data, model, train, eval, seeds,
/// output_dir.
struct RunConfig {
  CorpusConfig data;
  GeneratorConfig model;
  int regressor_hidden = 1024;
  TrainConfig train;
  EvalConfig eval;
  SeedConfig seeds;
  std::filesystem::path output_dir = "run";

  /// Canonical JSON with every default filled in.
  Json to_json() const;
  /// Hash of the canonical JSON.
  std::string hash() const;
  /// Hash of the data section and data seed only; stamped on datasets.
  std::string data_hash() const;
  CorpusConfig corpus() const;
};

/// Parses and validates a config document. Unknown keys and invalid values
/// throw kConfig with the offending field path (e.g. data.torus.azimuth_range).
RunConfig parse_run_config(const Json& j);

/// Applies "section.key=value" overrides; the value is parsed as JSON when
/// possible, otherwise taken as a string.
void apply_override(Json& j, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace geomrep
