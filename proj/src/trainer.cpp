#include "sharppath/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sharppath/linalg.hpp"

namespace sharppath {

using nlohmann::json;

const char* cadence_name(SpectrumCadence c) {
  switch (c) {
    case SpectrumCadence::Off: return "off";
    case SpectrumCadence::PerEpoch: return "per_epoch";
    case SpectrumCadence::PerIteration: return "per_iteration";
  }
  return "?";
}

SpectrumCadence cadence_from_name(const std::string& name) {
  if (name == "off") return SpectrumCadence::Off;
  if (name == "per_epoch") return SpectrumCadence::PerEpoch;
  if (name == "per_iteration") return SpectrumCadence::PerIteration;
  throw ConfigError("unknown spectrum cadence: " + name);
}

namespace {

std::string joined(const std::string& root, const std::string& path) {
  if (root.empty() || path.empty()) return path;
  if (std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(root) / path).string();
}

} // namespace

LoadedData load_data(const DataConfig& cfg, uint64_t master_seed,
                     const std::string& data_root) {
  Dataset train, test;
  if (cfg.source == "synth_images") {
    const uint64_t seed = SeededRng(master_seed).split("synthdata").seed();
    Dataset full = synth_images(cfg.synth_classes,
                                cfg.synth_n + cfg.synth_test_n, cfg.image_h,
                                cfg.image_w, cfg.image_c,
                                cfg.synth_separation, seed);
    if (cfg.synth_scale != 1.0 || cfg.synth_offset != 0.0)
      for (double& x : full.inputs.data)
        x = cfg.synth_offset + cfg.synth_scale * x;
    train = take_range(full, 0, cfg.synth_n);
    test = take_range(full, cfg.synth_n, cfg.synth_n + cfg.synth_test_n);
  } else if (cfg.source == "synth") {
    const uint64_t seed = SeededRng(master_seed).split("synthdata").seed();
    Dataset full = synth_gaussian(cfg.synth_classes,
                                  cfg.synth_n + cfg.synth_test_n,
                                  cfg.synth_dim, cfg.synth_separation, seed);
    if (cfg.synth_scale != 1.0 || cfg.synth_offset != 0.0)
      for (double& x : full.inputs.data) x = cfg.synth_offset + cfg.synth_scale * x;
    if (cfg.image_h > 0)
      full = reshape_images(std::move(full), cfg.image_h, cfg.image_w,
                            cfg.image_c);
    train = take_range(full, 0, cfg.synth_n);
    test = take_range(full, cfg.synth_n, cfg.synth_n + cfg.synth_test_n);
  } else if (cfg.source == "cifar10") {
    std::vector<std::string> paths;
    for (const auto& p : cfg.cifar_paths) paths.push_back(joined(data_root, p));
    train = load_cifar10_bin(paths);
    if (!cfg.test_cifar_paths.empty()) {
      std::vector<std::string> tpaths;
      for (const auto& p : cfg.test_cifar_paths)
        tpaths.push_back(joined(data_root, p));
      test = load_cifar10_bin(tpaths);
    }
  } else if (cfg.source == "idx") {
    train = load_idx(joined(data_root, cfg.idx_images),
                     joined(data_root, cfg.idx_labels));
    if (!cfg.test_idx_images.empty())
      test = load_idx(joined(data_root, cfg.test_idx_images),
                      joined(data_root, cfg.test_idx_labels));
  } else {
    throw ConfigError("unknown data source: " + cfg.source);
  }

  if (cfg.take_first_n > 0) train = subsample_first_n(train, cfg.take_first_n);

  int val_n = cfg.val_n;
  if (val_n < 0) val_n = std::min(5000, train.n() / 5);
  if (val_n < 1 || val_n >= train.n())
    throw ConfigError("validation split leaves no training data");
  LoadedData out;
  out.val = take_range(train, train.n() - val_n, train.n());
  out.val.split = "val";
  out.train = take_range(train, 0, train.n() - val_n);
  out.train.split = "train";
  out.test = test.n() > 0 ? std::move(test) : out.val;
  out.test.split = "test";
  return out;
}

void ExperimentConfig::validate() const {
  opt.validate();
  schedule.validate();
  probe.validate();
  if (epochs < 1) throw ConfigError("experiment needs at least one epoch");
  if (k_track < 1) throw ConfigError("k_track must be >= 1");
  if (hessian_subsample_fraction <= 0.0 || hessian_subsample_fraction > 1.0)
    throw ConfigError("hessian subsample fraction must be in (0, 1]");
  if (alignment_m > k_track)
    throw ConfigError("alignment_m cannot exceed k_track");
  if (opt.variant != Variant::Sgd) {
    if (cadence == SpectrumCadence::Off)
      throw ConfigError("projection variants need spectrum estimates");
    if (k_track < opt.k_top)
      throw ConfigError("k_track must cover k_top for projection variants");
  }
  if (probes_enabled) {
    if (probe.eig_index > k_track)
      throw ConfigError("probe eig_index exceeds k_track");
    if (probe_every_n_iters < 1)
      throw ConfigError("probe_every_n_iters must be >= 1");
  }
}

namespace {

struct Trainee {
  Model model;
  ParamVector params;
  ParamVector theta0;
  LoadedData data;
  Dataset hess_sub;
  Batch hess_batch;
  uint64_t subsample_seed = 0;
};

} // namespace

RunSummary summarize(const std::vector<CurvatureRecord>& records,
                     int checkpoint_epoch, bool diverged, long diverged_at_t) {
  RunSummary s;
  s.diverged = diverged;
  s.diverged_at_t = diverged_at_t;
  const CurvatureRecord* best = nullptr;
  const CurvatureRecord* last = nullptr;
  const CurvatureRecord* at_checkpoint = nullptr;
  for (const auto& r : records) {
    if (!r.boundary) continue;
    last = &r;
    if (r.epoch >= 1 && (!best || r.val_acc > best->val_acc)) best = &r;
    if (r.epoch >= 1 && r.epoch <= checkpoint_epoch) at_checkpoint = &r;
  }
  if (best) {
    s.best_val_epoch = best->epoch;
    s.test_acc_at_best = best->test_acc;
    s.frob_at_best = best->frob_trunc;
    s.dist_at_best = best->dist_from_init;
  }
  if (last) {
    s.frob_final = last->frob_trunc;
    s.final_loss = last->loss;
  }
  if (at_checkpoint) s.val_acc_at_checkpoint = at_checkpoint->val_acc;
  return s;
}

TrainingLog run_experiment(const ExperimentConfig& cfg, const StepHook& hook) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();

  Trainee tr;
  tr.data = load_data(cfg.data, cfg.master_seed, cfg.data_root);
  tr.model = Model::build(cfg.model);

  const SeededRng master(cfg.master_seed);
  SeededRng init_rng = master.split("init");
  SeededRng augment_rng = master.split("augment");
  SeededRng align_rng = master.split("alignment");
  SeededRng subsample_rng = master.split("hessian_subsample");
  const uint64_t shuffle_seed = master.split("shuffle").seed();
  const uint64_t lanczos_seed = master.split("lanczos").seed();
  const uint64_t probe_seed = master.split("probe").seed();

  tr.params = init_params(tr.model, init_rng);
  tr.theta0 = tr.params;

  // One fixed subsample per run so the eigenvalue series stays comparable.
  const int sub_n = std::max(
      1, static_cast<int>(std::lround(cfg.hessian_subsample_fraction *
                                      tr.data.train.n())));
  tr.subsample_seed = subsample_rng.seed();
  tr.hess_sub = subsample_random(tr.data.train, sub_n, subsample_rng);
  tr.hess_batch = gather_range(tr.hess_sub, 0, tr.hess_sub.n());

  TrainingLog log;
  log.config_echo = config_to_json(cfg);

  LanczosConfig lanczos;
  lanczos.k = cfg.k_track;
  lanczos.max_iters = cfg.lanczos_max_iters;
  lanczos.tol = cfg.lanczos_tol;
  lanczos.seed = lanczos_seed;

  auto estimate = [&](long t) {
    EigenEstimate est = estimate_spectrum(tr.model, tr.params, tr.hess_batch,
                                          lanczos);
    est.step = t;
    est.subsample_seed = tr.subsample_seed;
    est.subsample_fraction = cfg.hessian_subsample_fraction;
    return est;
  };

  const bool quad = cfg.model.kind == ModelKind::Quadratic;

  auto evaluate_full = [&](CurvatureRecord& r) {
    r.loss = dataset_loss(tr.model, tr.params, tr.data.train);
    if (!quad) {
      r.train_acc = accuracy(tr.model, tr.params, tr.data.train);
      r.val_acc = accuracy(tr.model, tr.params, tr.data.val);
      r.test_acc = accuracy(tr.model, tr.params, tr.data.test);
    }
  };

  auto alignment_of = [&](const EigenEstimate& est) {
    if (est.pairs.empty()) return 0.0;
    const int m = std::min<int>(cfg.alignment_m, est.k());
    std::vector<int> idx =
        align_rng.permutation(tr.data.train.n());
    idx.resize(static_cast<size_t>(
        std::min(cfg.opt.batch_size, tr.data.train.n())));
    const Batch b = gather_batch(tr.data.train, idx);
    const auto [loss, g] = loss_grad(tr.model, tr.params, b);
    (void)loss;
    if (linalg::norm2(g) == 0.0) return 0.0;
    return alignment(g, est, m);
  };

  auto make_record = [&](long t, int epoch, bool boundary,
                         const EigenEstimate* est, double lr) {
    CurvatureRecord r;
    r.t = t;
    r.epoch = epoch;
    r.boundary = boundary;
    r.lr = lr;
    ParamVector delta = tr.params;
    linalg::axpy(-1.0, tr.theta0, delta);
    r.dist_from_init = linalg::norm2(delta);
    if (est) {
      for (const auto& p : est->pairs) r.lambdas.push_back(p.lambda);
      r.frob_trunc = frobenius_trunc(*est);
      r.alignment_top = alignment_of(*est);
    }
    if (boundary) {
      evaluate_full(r);
    } else {
      r.loss = dataset_loss(tr.model, tr.params, tr.hess_sub);
      if (!log.records.empty()) {
        r.train_acc = log.records.back().train_acc;
        r.val_acc = log.records.back().val_acc;
        r.test_acc = log.records.back().test_acc;
      }
    }
    log.records.push_back(std::move(r));
  };

  OptimizerState state;
  std::vector<double> val_history;
  long t = 0;
  bool diverged = false;
  long diverged_at = -1;

  auto finish = [&]() {
    log.summary =
        summarize(log.records, cfg.checkpoint_epoch, diverged, diverged_at);
    log.final_params = tr.params;
    if (!cfg.checkpoint_path.empty())
      save_checkpoint(cfg.checkpoint_path, cfg.model.kind, tr.params);
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    return log;
  };

  double cur_eta = schedule_lr(cfg.schedule, val_history, 0);

  if (cfg.cadence != SpectrumCadence::Off) {
    const EigenEstimate est0 = estimate(0);
    state.set_basis(est0, cfg.opt.k_top, 0);
    make_record(0, 0, true, &est0, cur_eta);
  } else {
    make_record(0, 0, true, nullptr, cur_eta);
  }

  const bool probes_on = cfg.probes_enabled;
  auto probe_now = [&](int epoch, long step_idx) {
    if (!probes_on) return false;
    if (std::find(cfg.probe_epochs.begin(), cfg.probe_epochs.end(), epoch) ==
        cfg.probe_epochs.end())
      return false;
    return step_idx % cfg.probe_every_n_iters == 0;
  };

  for (int epoch = 0; epoch < cfg.epochs && !diverged; ++epoch) {
    cur_eta = schedule_lr(cfg.schedule, val_history, epoch);
    const auto batches = epoch_batches(tr.data.train.n(), cfg.opt.batch_size,
                                       shuffle_seed, epoch, true);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      Batch b = gather_batch(tr.data.train, batches[bi]);
      if (cfg.data.augment_enabled) b = augment(b, cfg.data.augment, augment_rng);
      try {
        const auto [loss, g] = loss_grad(tr.model, tr.params, b);
        if (!std::isfinite(loss) || loss > 1e6)
          throw NumericalError("training loss diverged");
        OptimizerConfig step_cfg = cfg.opt;
        step_cfg.eta = cur_eta;
        tr.params = apply_step(tr.params, g, step_cfg, state);
      } catch (const NumericalError&) {
        diverged = true;
        diverged_at = t;
        break;
      }
      ++t;
      if (hook) hook(t, state);
      const bool last_of_epoch = bi + 1 == batches.size();
      if (probe_now(epoch, static_cast<long>(bi))) {
        const EigenEstimate est = estimate(t);
        if (est.k() < cfg.probe.eig_index)
          throw ConfigError("probe eigenvector index exceeds converged pairs");
        ProbeConfig pc = cfg.probe;
        pc.seed = SeededRng(probe_seed).split("probe_at", static_cast<uint64_t>(t)).seed();
        pc.eta = cur_eta;
        const ParamVector& e_i =
            est.pairs[static_cast<size_t>(cfg.probe.eig_index - 1)].vector;
        log.probes.push_back(run_probe(tr.model, tr.params, e_i, pc,
                                       tr.data.train, tr.hess_sub, t));
      }
      if (cfg.cadence == SpectrumCadence::PerIteration &&
          t <= cfg.per_iteration_steps && !last_of_epoch) {
        const EigenEstimate est = estimate(t);
        make_record(t, epoch, false, &est, cur_eta);
      }
    }
    if (diverged) break;
    if (!quad)
      val_history.push_back(dataset_loss(tr.model, tr.params, tr.data.val));
    else
      val_history.push_back(dataset_loss(tr.model, tr.params, tr.data.train));
    if (cfg.cadence != SpectrumCadence::Off) {
      const EigenEstimate est = estimate(t);
      state.set_basis(est, cfg.opt.k_top, t);
      make_record(t, epoch + 1, true, &est, cur_eta);
    } else {
      make_record(t, epoch + 1, true, nullptr, cur_eta);
    }
  }

  return finish();
}

// --- serialization ----------------------------------------------------------

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["epochs"] = cfg.epochs;
  j["cadence"] = cadence_name(cfg.cadence);
  j["per_iteration_steps"] = cfg.per_iteration_steps;
  j["k_track"] = cfg.k_track;
  j["lanczos_tol"] = cfg.lanczos_tol;
  j["lanczos_max_iters"] = cfg.lanczos_max_iters;
  j["hessian_subsample_fraction"] = cfg.hessian_subsample_fraction;
  j["alignment_m"] = cfg.alignment_m;
  j["checkpoint_epoch"] = cfg.checkpoint_epoch;
  j["master_seed"] = cfg.master_seed;
  json m;
  m["kind"] = model_kind_name(cfg.model.kind);
  m["l2_coefficient"] = cfg.model.l2_coefficient;
  if (cfg.model.kind == ModelKind::SimpleCnn) {
    m["input"] = {cfg.model.input_h, cfg.model.input_w, cfg.model.input_c};
    m["filters"] = cfg.model.filters;
    m["dense_width"] = cfg.model.dense_width;
    m["classes"] = cfg.model.classes;
  } else if (cfg.model.kind == ModelKind::Mlp) {
    m["input_dim"] = cfg.model.input_dim;
    m["hidden"] = cfg.model.hidden;
    m["classes"] = cfg.model.classes;
  }
  m["dim"] = Model::build(cfg.model).dim();
  j["model"] = m;
  json o;
  o["variant"] = variant_name(cfg.opt.variant);
  o["eta"] = cfg.opt.eta;
  o["batch_size"] = cfg.opt.batch_size;
  o["momentum"] = cfg.opt.momentum;
  o["gamma"] = cfg.opt.gamma;
  o["k_top"] = cfg.opt.k_top;
  j["optimizer"] = o;
  json s;
  s["kind"] = cfg.schedule.kind == ScheduleKind::Constant  ? "constant"
              : cfg.schedule.kind == ScheduleKind::Plateau ? "plateau"
                                                           : "staged";
  s["base_eta"] = cfg.schedule.base_eta;
  s["patience"] = cfg.schedule.patience;
  s["factor"] = cfg.schedule.factor;
  s["stage_length"] = cfg.schedule.stage_length;
  s["stage_etas"] = {cfg.schedule.stage_etas[0], cfg.schedule.stage_etas[1]};
  j["schedule"] = s;
  json d;
  d["source"] = cfg.data.source;
  d["synth_classes"] = cfg.data.synth_classes;
  d["synth_n"] = cfg.data.synth_n;
  d["synth_test_n"] = cfg.data.synth_test_n;
  d["synth_dim"] = cfg.data.synth_dim;
  d["synth_separation"] = cfg.data.synth_separation;
  d["synth_scale"] = cfg.data.synth_scale;
  d["synth_offset"] = cfg.data.synth_offset;
  d["image"] = {cfg.data.image_h, cfg.data.image_w, cfg.data.image_c};
  d["take_first_n"] = cfg.data.take_first_n;
  d["val_n"] = cfg.data.val_n;
  d["augment"] = cfg.data.augment_enabled;
  j["data"] = d;
  json p;
  p["enabled"] = cfg.probes_enabled;
  p["alphas"] = cfg.probe.alphas;
  p["n_batches"] = cfg.probe.n_batches;
  p["eig_index"] = cfg.probe.eig_index;
  p["batch_size"] = cfg.probe.batch_size;
  p["epochs"] = cfg.probe_epochs;
  p["every_n_iters"] = cfg.probe_every_n_iters;
  j["probes"] = p;
  return j;
}

json record_to_json(const CurvatureRecord& r) {
  json j;
  j["type"] = "record";
  j["t"] = r.t;
  j["epoch"] = r.epoch;
  j["boundary"] = r.boundary;
  j["loss"] = r.loss;
  j["train_acc"] = r.train_acc;
  j["val_acc"] = r.val_acc;
  j["test_acc"] = r.test_acc;
  j["lambdas"] = r.lambdas;
  j["frob_trunc"] = r.frob_trunc;
  j["alignment"] = r.alignment_top;
  j["dist_from_init"] = r.dist_from_init;
  j["lr"] = r.lr;
  return j;
}

json probe_to_json(const ProbeResult& p) {
  json j;
  j["type"] = "probe";
  j["step"] = p.step;
  j["eig_index"] = p.eig_index;
  json deltas;
  for (const auto& [alpha, delta] : p.alpha_deltas)
    deltas[json(alpha).dump()] = delta;
  j["alpha_deltas"] = deltas;
  j["step_norm"] = p.expected_step_norm;
  json scan = json::array();
  for (const auto& [k, loss] : p.scan) scan.push_back({k, loss});
  j["scan"] = scan;
  j["base_loss"] = p.base_loss;
  return j;
}

json summary_to_json(const RunSummary& s) {
  json j;
  j["type"] = "summary";
  j["best_val_epoch"] = s.best_val_epoch;
  j["test_acc_at_best"] = s.test_acc_at_best;
  j["val_acc_at_checkpoint"] = s.val_acc_at_checkpoint;
  j["frob_at_best"] = s.frob_at_best;
  j["frob_final"] = s.frob_final;
  j["final_loss"] = s.final_loss;
  j["dist_at_best"] = s.dist_at_best;
  j["diverged"] = s.diverged;
  j["diverged_at_t"] = s.diverged_at_t;
  return j;
}

void write_log(const TrainingLog& log, std::ostream& os) {
  json cfg = log.config_echo;
  cfg["type"] = "config";
  os << cfg.dump() << "\n";
  size_t pi = 0;
  for (const auto& r : log.records) {
    while (pi < log.probes.size() && log.probes[pi].step < r.t)
      os << probe_to_json(log.probes[pi++]).dump() << "\n";
    os << record_to_json(r).dump() << "\n";
  }
  while (pi < log.probes.size())
    os << probe_to_json(log.probes[pi++]).dump() << "\n";
  os << summary_to_json(log.summary).dump() << "\n";
}

TrainingLog read_log(std::istream& is) {
  TrainingLog log;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "config") {
      j.erase("type");
      log.config_echo = j;
    } else if (type == "record") {
      CurvatureRecord r;
      r.t = j.at("t").get<long>();
      r.epoch = j.at("epoch").get<int>();
      r.boundary = j.at("boundary").get<bool>();
      r.loss = j.at("loss").get<double>();
      r.train_acc = j.at("train_acc").get<double>();
      r.val_acc = j.at("val_acc").get<double>();
      r.test_acc = j.at("test_acc").get<double>();
      r.lambdas = j.at("lambdas").get<std::vector<double>>();
      r.frob_trunc = j.at("frob_trunc").get<double>();
      r.alignment_top = j.at("alignment").get<double>();
      r.dist_from_init = j.at("dist_from_init").get<double>();
      r.lr = j.at("lr").get<double>();
      log.records.push_back(std::move(r));
    } else if (type == "probe") {
      ProbeResult p;
      p.step = j.at("step").get<long>();
      p.eig_index = j.at("eig_index").get<int>();
      for (const auto& [key, value] : j.at("alpha_deltas").items())
        p.alpha_deltas.emplace_back(std::stod(key), value.get<double>());
      std::sort(p.alpha_deltas.begin(), p.alpha_deltas.end());
      p.expected_step_norm = j.at("step_norm").get<double>();
      for (const auto& kv : j.at("scan"))
        p.scan.emplace_back(kv[0].get<double>(), kv[1].get<double>());
      p.base_loss = j.at("base_loss").get<double>();
      log.probes.push_back(std::move(p));
    } else if (type == "summary") {
      log.summary.best_val_epoch = j.at("best_val_epoch").get<int>();
      log.summary.test_acc_at_best = j.at("test_acc_at_best").get<double>();
      log.summary.val_acc_at_checkpoint =
          j.at("val_acc_at_checkpoint").get<double>();
      log.summary.frob_at_best = j.at("frob_at_best").get<double>();
      log.summary.frob_final = j.at("frob_final").get<double>();
      log.summary.final_loss = j.at("final_loss").get<double>();
      log.summary.dist_at_best = j.at("dist_at_best").get<double>();
      log.summary.diverged = j.at("diverged").get<bool>();
      log.summary.diverged_at_t = j.at("diverged_at_t").get<long>();
    } else {
      throw FormatError("unknown log row type: " + type);
    }
  }
  return log;
}

} // namespace sharppath
