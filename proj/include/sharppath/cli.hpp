#pragma once

#include <string>
#include <vector>

#include "sharppath/config.hpp"
#include "sharppath/trainer.hpp"

namespace sharppath::cli {

/// Full dispatcher; argv-style arguments without the program name.
/// Exit codes: 0 success (including diverged-but-logged runs), 2 config
/// error, 3 I/O error, 4 numerical abort.
int run(const std::vector<std::string>& args);

/// One sweep coordinate: the axis values applied on top of the base config.
struct GridPoint {
  std::string id; // stable, filesystem-safe identifier
  ExperimentConfig cfg;
};

/// Parses a manifest into the base experiment plus the sweep grid
/// (cartesian product over the [sweep] axes) without running anything.
std::vector<GridPoint> expand_manifest(const ConfigFile& manifest,
                                       const std::string& data_root);

ExperimentConfig experiment_from_config(const ConfigFile& cf,
                                        const std::string& data_root);

} // namespace sharppath::cli
