#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sharppath/data.hpp"
#include "sharppath/model.hpp"
#include "sharppath/optim.hpp"
#include "sharppath/probes.hpp"
#include "sharppath/spectral.hpp"

#include <json.hpp>

namespace sharppath {

enum class SpectrumCadence : uint8_t { Off, PerEpoch, PerIteration };

const char* cadence_name(SpectrumCadence c);
SpectrumCadence cadence_from_name(const std::string& name);

struct DataConfig {
  std::string source = "synth"; // synth | synth_images | cifar10 | idx
  std::vector<std::string> cifar_paths;
  std::vector<std::string> test_cifar_paths;
  std::string idx_images, idx_labels;
  std::string test_idx_images, test_idx_labels;
  int synth_classes = 10;
  int synth_n = 2000;
  int synth_test_n = 512;
  int synth_dim = 144;
  double synth_separation = 1.0;
  double synth_scale = 1.0;  // affine map into image-like range:
  double synth_offset = 0.0; // x <- offset + scale * x

  int image_h = 0, image_w = 0, image_c = 0; // reshape flat features
  int take_first_n = 0;                      // 0 = whole set
  int val_n = -1;                            // -1 = min(5000, n/5)
  bool augment_enabled = false;
  AugmentConfig augment;
};

struct LoadedData {
  Dataset train, val, test;
};

/// Resolves a DataConfig into train/val/test splits. Relative file paths are
/// joined onto data_root. The validation split is carved off the tail of the
/// training set.
LoadedData load_data(const DataConfig& cfg, uint64_t master_seed,
                     const std::string& data_root);

struct ExperimentConfig {
  std::string name = "run";
  ModelSpec model;
  OptimizerConfig opt;
  LrSchedule schedule;
  DataConfig data;
  int epochs = 5;
  SpectrumCadence cadence = SpectrumCadence::PerEpoch;
  int per_iteration_steps = 400; // per-iteration tracking window
  int k_track = 10;              // eigenvalues logged per record
  double lanczos_tol = 1e-6;
  int lanczos_max_iters = 0; // 0 = auto
  double hessian_subsample_fraction = 0.05;
  int alignment_m = 5;
  bool probes_enabled = false;
  ProbeConfig probe;
  std::vector<int> probe_epochs; // epochs whose iterations get probed
  int probe_every_n_iters = 1;
  int checkpoint_epoch = 50; // summary's "validation accuracy at epoch N"
  uint64_t master_seed = 0;
  std::string data_root;
  std::string checkpoint_path; // optional: final params written here
  void validate() const;
};

/// One log row. Boundary records (t = end of an epoch, plus one at t = 0)
/// carry full train/val/test evaluations; per-iteration records evaluate
/// loss on the Hessian subsample and carry the accuracies forward.
struct CurvatureRecord {
  long t = 0;
  int epoch = 0; // completed epochs at logging time
  bool boundary = true;
  double loss = 0.0;
  double train_acc = 0.0, val_acc = 0.0, test_acc = 0.0;
  std::vector<double> lambdas;
  double frob_trunc = 0.0;
  double alignment_top = 0.0; // mean |cos| over the top alignment_m pairs
  double dist_from_init = 0.0;
  double lr = 0.0;
};

struct RunSummary {
  int best_val_epoch = -1; // epoch with the highest validation accuracy
  double test_acc_at_best = 0.0;
  double val_acc_at_checkpoint = 0.0;
  double frob_at_best = 0.0;
  double frob_final = 0.0;
  double final_loss = 0.0;
  double dist_at_best = 0.0;
  bool diverged = false;
  long diverged_at_t = -1;
};

struct TrainingLog {
  nlohmann::json config_echo;
  std::vector<CurvatureRecord> records;
  std::vector<ProbeResult> probes;
  RunSummary summary;
  ParamVector final_params;
  double wall_seconds = 0.0; // in-memory only; never serialized
};

using StepHook = std::function<void(long t, const OptimizerState& state)>;

/// Runs the full experiment loop: spectrum estimates at every epoch
/// boundary (refreshing the projection basis), optional per-iteration
/// tracking and probes, the configured step rule, and the schedule.
/// Divergence (loss above 1e6 or non-finite) stops the run and leaves a
/// marker in the summary. Fully deterministic in cfg.master_seed.
TrainingLog run_experiment(const ExperimentConfig& cfg,
                           const StepHook& hook = {});

/// Pure function of the records; the trailing summary object is always
/// recomputable from the rows above it.
RunSummary summarize(const std::vector<CurvatureRecord>& records,
                     int checkpoint_epoch, bool diverged, long diverged_at_t);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
nlohmann::json record_to_json(const CurvatureRecord& r);
nlohmann::json probe_to_json(const ProbeResult& p);
nlohmann::json summary_to_json(const RunSummary& s);

/// Newline-delimited JSON: config line, record/probe rows ordered by t,
/// trailing summary object.
void write_log(const TrainingLog& log, std::ostream& os);
TrainingLog read_log(std::istream& is);

} // namespace sharppath
