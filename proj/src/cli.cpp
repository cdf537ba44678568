#include "sharppath/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "sharppath/svg.hpp"

namespace sharppath::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kManifestKeys = {
    "experiment.name", "experiment.epochs", "experiment.master_seed",
    "experiment.checkpoint_epoch", "experiment.checkpoint",
    "model.kind", "model.input", "model.filters", "model.dense_width",
    "model.classes", "model.hidden", "model.input_dim", "model.l2_coefficient",
    "model.quad_diag", "model.quad_start", "model.quad_center",
    "data.source", "data.root", "data.synth_classes", "data.synth_n",
    "data.synth_test_n", "data.synth_dim", "data.synth_separation",
    "data.synth_scale", "data.synth_offset",
    "data.image", "data.take_first_n", "data.val_n", "data.augment",
    "data.augment_pad", "data.cifar_paths", "data.test_cifar_paths",
    "data.idx_images", "data.idx_labels", "data.test_idx_images",
    "data.test_idx_labels",
    "optimizer.variant", "optimizer.eta", "optimizer.batch_size",
    "optimizer.momentum", "optimizer.gamma", "optimizer.k_top",
    "schedule.kind", "schedule.patience", "schedule.factor",
    "schedule.stage_length", "schedule.stage_etas",
    "spectrum.cadence", "spectrum.k_track", "spectrum.tol",
    "spectrum.max_iters", "spectrum.subsample_fraction",
    "spectrum.alignment_m", "spectrum.per_iteration_steps",
    "probes.enabled", "probes.alphas", "probes.n_batches", "probes.eig_index",
    "probes.batch_size", "probes.epochs", "probes.every_n_iters",
    "sweep.eta", "sweep.batch_size", "sweep.gamma", "sweep.k_top",
    "sweep.variant", "sweep.schedule_kind",
};

std::string sanitize(const std::string& s) {
  std::string out;
  for (const char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
            c == '-' || c == '_')
               ? c
               : '_';
  return out;
}

std::string num_id(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

} // namespace

ExperimentConfig experiment_from_config(const ConfigFile& cf,
                                        const std::string& data_root) {
  cf.require_known(kManifestKeys);
  ExperimentConfig cfg;
  cfg.name = cf.get_string("experiment.name", "run");
  cfg.epochs = static_cast<int>(cf.get_int("experiment.epochs", 5));
  cfg.master_seed =
      static_cast<uint64_t>(cf.get_int("experiment.master_seed", 0));
  cfg.checkpoint_epoch =
      static_cast<int>(cf.get_int("experiment.checkpoint_epoch", 50));
  cfg.checkpoint_path = cf.get_string("experiment.checkpoint", "");

  const std::string kind = cf.get_string("model.kind", "mlp");
  const double l2 = cf.get_double("model.l2_coefficient", 0.0);
  if (kind == "simple_cnn" || kind == "scaled_cnn") {
    const auto input = cf.get_int_array("model.input");
    if (input.size() != 3)
      throw ConfigError("model.input must be [h, w, c]");
    const int classes = static_cast<int>(cf.get_int("model.classes", 10));
    std::array<int, 4> filters{32, 32, 64, 64};
    if (kind == "scaled_cnn") {
      const auto fl = cf.get_int_array("model.filters");
      if (fl.size() == 4)
        for (int i = 0; i < 4; ++i)
          filters[static_cast<size_t>(i)] = static_cast<int>(fl[static_cast<size_t>(i)]);
      else if (!fl.empty())
        throw ConfigError("model.filters must list 4 widths");
      cfg.model = build_scaled_cnn(
          static_cast<int>(input[0]), static_cast<int>(input[1]),
          static_cast<int>(input[2]), classes, filters,
          static_cast<int>(cf.get_int("model.dense_width", 128)));
    } else {
      cfg.model = build_simple_cnn(static_cast<int>(input[0]),
                                   static_cast<int>(input[1]),
                                   static_cast<int>(input[2]), classes);
    }
  } else if (kind == "mlp") {
    std::vector<int> hidden;
    for (const long long h : cf.get_int_array("model.hidden"))
      hidden.push_back(static_cast<int>(h));
    if (hidden.empty()) hidden = {128};
    cfg.model = build_mlp(static_cast<int>(cf.get_int("model.input_dim", 784)),
                          hidden,
                          static_cast<int>(cf.get_int("model.classes", 10)));
  } else if (kind == "quadratic") {
    QuadraticSpec q;
    q.diag = cf.get_double_array("model.quad_diag");
    q.start = cf.get_double_array("model.quad_start");
    q.center = cf.get_double_array("model.quad_center");
    if (q.start.empty()) q.start.assign(q.diag.size(), 1.0);
    cfg.model = build_quadratic(std::move(q));
  } else {
    throw ConfigError("unknown model.kind: " + kind);
  }
  cfg.model.l2_coefficient = l2;

  cfg.data.source = cf.get_string("data.source", "synth");
  cfg.data.synth_classes = static_cast<int>(cf.get_int("data.synth_classes", 10));
  cfg.data.synth_n = static_cast<int>(cf.get_int("data.synth_n", 2000));
  cfg.data.synth_test_n = static_cast<int>(cf.get_int("data.synth_test_n", 512));
  cfg.data.synth_dim = static_cast<int>(cf.get_int("data.synth_dim", 144));
  cfg.data.synth_separation = cf.get_double("data.synth_separation", 1.0);
  cfg.data.synth_scale = cf.get_double("data.synth_scale", 1.0);
  cfg.data.synth_offset = cf.get_double("data.synth_offset", 0.0);
  const auto img = cf.get_int_array("data.image");
  if (img.size() == 3) {
    cfg.data.image_h = static_cast<int>(img[0]);
    cfg.data.image_w = static_cast<int>(img[1]);
    cfg.data.image_c = static_cast<int>(img[2]);
  } else if (!img.empty()) {
    throw ConfigError("data.image must be [h, w, c]");
  }
  cfg.data.take_first_n = static_cast<int>(cf.get_int("data.take_first_n", 0));
  cfg.data.val_n = static_cast<int>(cf.get_int("data.val_n", -1));
  cfg.data.augment_enabled = cf.get_bool("data.augment", false);
  cfg.data.augment.pad = static_cast<int>(cf.get_int("data.augment_pad", 4));
  cfg.data.augment.random_crop = cfg.data.augment.pad > 0;
  cfg.data.augment.hflip = true;
  cfg.data.cifar_paths = cf.get_string_array("data.cifar_paths");
  cfg.data.test_cifar_paths = cf.get_string_array("data.test_cifar_paths");
  cfg.data.idx_images = cf.get_string("data.idx_images", "");
  cfg.data.idx_labels = cf.get_string("data.idx_labels", "");
  cfg.data.test_idx_images = cf.get_string("data.test_idx_images", "");
  cfg.data.test_idx_labels = cf.get_string("data.test_idx_labels", "");

  cfg.opt.variant = variant_from_name(cf.get_string("optimizer.variant", "sgd"));
  cfg.opt.eta = cf.get_double("optimizer.eta", 0.01);
  cfg.opt.batch_size = static_cast<int>(cf.get_int("optimizer.batch_size", 128));
  cfg.opt.momentum = cf.get_double("optimizer.momentum", 0.0);
  cfg.opt.gamma = cf.get_double("optimizer.gamma", 1.0);
  cfg.opt.k_top = static_cast<int>(cf.get_int("optimizer.k_top",
                                              cfg.opt.variant == Variant::Sgd ? 0 : 1));

  const std::string sk = cf.get_string("schedule.kind", "constant");
  cfg.schedule.kind = sk == "constant"  ? ScheduleKind::Constant
                      : sk == "plateau" ? ScheduleKind::Plateau
                      : sk == "staged"
                          ? ScheduleKind::Staged
                          : throw ConfigError("unknown schedule.kind: " + sk);
  cfg.schedule.base_eta = cfg.opt.eta;
  cfg.schedule.patience = static_cast<int>(cf.get_int("schedule.patience", 100));
  cfg.schedule.factor = cf.get_double("schedule.factor", 10.0);
  cfg.schedule.stage_length = static_cast<int>(cf.get_int("schedule.stage_length", 10));
  const auto etas = cf.get_double_array("schedule.stage_etas");
  if (etas.size() == 2) {
    cfg.schedule.stage_etas[0] = etas[0];
    cfg.schedule.stage_etas[1] = etas[1];
  } else if (!etas.empty()) {
    throw ConfigError("schedule.stage_etas must list two rates");
  }

  cfg.cadence = cadence_from_name(cf.get_string("spectrum.cadence", "per_epoch"));
  cfg.k_track = static_cast<int>(cf.get_int("spectrum.k_track", 10));
  cfg.lanczos_tol = cf.get_double("spectrum.tol", 1e-6);
  cfg.lanczos_max_iters = static_cast<int>(cf.get_int("spectrum.max_iters", 0));
  cfg.hessian_subsample_fraction =
      cf.get_double("spectrum.subsample_fraction", 0.05);
  cfg.alignment_m = static_cast<int>(cf.get_int("spectrum.alignment_m", 5));
  cfg.per_iteration_steps =
      static_cast<int>(cf.get_int("spectrum.per_iteration_steps", 400));

  cfg.probes_enabled = cf.get_bool("probes.enabled", false);
  const auto alphas = cf.get_double_array("probes.alphas");
  if (!alphas.empty()) cfg.probe.alphas = alphas;
  cfg.probe.n_batches = static_cast<int>(cf.get_int("probes.n_batches", 10));
  cfg.probe.eig_index = static_cast<int>(cf.get_int("probes.eig_index", 1));
  cfg.probe.batch_size = static_cast<int>(
      cf.get_int("probes.batch_size", cfg.opt.batch_size));
  for (const long long e : cf.get_int_array("probes.epochs"))
    cfg.probe_epochs.push_back(static_cast<int>(e));
  cfg.probe_every_n_iters =
      static_cast<int>(cf.get_int("probes.every_n_iters", 1));

  cfg.data_root = data_root.empty() ? cf.get_string("data.root", "") : data_root;
  return cfg;
}

std::vector<GridPoint> expand_manifest(const ConfigFile& manifest,
                                       const std::string& data_root) {
  const ExperimentConfig base = experiment_from_config(manifest, data_root);
  struct Axis {
    std::string name;
    std::vector<std::string> values;
  };
  std::vector<Axis> axes;
  if (manifest.has("sweep.eta")) {
    Axis a{"eta", {}};
    for (const double v : manifest.get_double_array("sweep.eta"))
      a.values.push_back(num_id(v));
    axes.push_back(a);
  }
  if (manifest.has("sweep.batch_size")) {
    Axis a{"batch_size", {}};
    for (const long long v : manifest.get_int_array("sweep.batch_size"))
      a.values.push_back(std::to_string(v));
    axes.push_back(a);
  }
  if (manifest.has("sweep.gamma")) {
    Axis a{"gamma", {}};
    for (const double v : manifest.get_double_array("sweep.gamma"))
      a.values.push_back(num_id(v));
    axes.push_back(a);
  }
  if (manifest.has("sweep.k_top")) {
    Axis a{"k_top", {}};
    for (const long long v : manifest.get_int_array("sweep.k_top"))
      a.values.push_back(std::to_string(v));
    axes.push_back(a);
  }
  if (manifest.has("sweep.variant")) {
    Axis a{"variant", manifest.get_string_array("sweep.variant")};
    axes.push_back(a);
  }
  if (manifest.has("sweep.schedule_kind")) {
    Axis a{"schedule_kind", manifest.get_string_array("sweep.schedule_kind")};
    axes.push_back(a);
  }
  for (const auto& a : axes)
    if (a.values.empty())
      throw ConfigError("sweep axis " + a.name + " is empty");

  std::vector<GridPoint> grid;
  std::vector<size_t> counter(axes.size(), 0);
  for (;;) {
    GridPoint gp;
    gp.cfg = base;
    std::string id;
    for (size_t ax = 0; ax < axes.size(); ++ax) {
      const std::string& val = axes[ax].values[counter[ax]];
      if (!id.empty()) id += ",";
      id += axes[ax].name + "=" + val;
      if (axes[ax].name == "eta") {
        gp.cfg.opt.eta = std::stod(val);
        gp.cfg.schedule.base_eta = gp.cfg.opt.eta;
      } else if (axes[ax].name == "batch_size") {
        gp.cfg.opt.batch_size = std::stoi(val);
      } else if (axes[ax].name == "gamma") {
        gp.cfg.opt.gamma = std::stod(val);
      } else if (axes[ax].name == "k_top") {
        gp.cfg.opt.k_top = std::stoi(val);
      } else if (axes[ax].name == "variant") {
        gp.cfg.opt.variant = variant_from_name(val);
        if (gp.cfg.opt.variant != Variant::Sgd && gp.cfg.opt.k_top == 0)
          gp.cfg.opt.k_top = 1;
      } else if (axes[ax].name == "schedule_kind") {
        gp.cfg.schedule.kind = val == "constant"  ? ScheduleKind::Constant
                               : val == "plateau" ? ScheduleKind::Plateau
                               : val == "staged"
                                   ? ScheduleKind::Staged
                                   : throw ConfigError("unknown schedule " + val);
      }
    }
    gp.id = id.empty() ? "base" : sanitize(id);
    grid.push_back(std::move(gp));
    // advance the cartesian counter
    size_t ax = 0;
    for (; ax < axes.size(); ++ax) {
      if (++counter[ax] < axes[ax].values.size()) break;
      counter[ax] = 0;
    }
    if (ax == axes.size()) break;
  }
  return grid;
}

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string kind;
  std::string vectors; // spectrum: path prefix for eigenvector checkpoints
  std::vector<uint64_t> seeds;
  int jobs = 1;
  std::vector<std::string> inputs;
};

CommonArgs parse_args(const std::vector<std::string>& args, size_t from) {
  CommonArgs out;
  for (size_t i = from; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto need_value = [&](const char* flag) -> const std::string& {
      if (i + 1 >= args.size())
        throw ConfigError(std::string(flag) + " needs a value");
      return args[++i];
    };
    if (a == "--config") {
      out.config = need_value("--config");
    } else if (a == "--out") {
      out.out = need_value("--out");
    } else if (a == "--checkpoint") {
      out.checkpoint = need_value("--checkpoint");
    } else if (a == "--kind") {
      out.kind = need_value("--kind");
    } else if (a == "--vectors") {
      out.vectors = need_value("--vectors");
    } else if (a == "--jobs") {
      out.jobs = std::stoi(need_value("--jobs"));
      if (out.jobs < 1) throw ConfigError("--jobs must be >= 1");
    } else if (a == "--seeds") {
      std::istringstream ss(need_value("--seeds"));
      std::string tok;
      while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.seeds.push_back(std::stoull(tok));
      if (out.seeds.empty()) throw ConfigError("--seeds lists no seeds");
    } else if (a.rfind("--", 0) == 0) {
      throw ConfigError("unknown flag " + a);
    } else {
      out.inputs.push_back(a);
    }
  }
  return out;
}

std::string data_root_from_env() {
  const char* env = std::getenv("SHARPPATH_DATA");
  return env ? env : "";
}

int cmd_train(const CommonArgs& args) {
  if (args.config.empty()) throw ConfigError("train needs --config");
  const std::string out_dir = args.out.empty() ? "." : args.out;
  fs::create_directories(out_dir);
  const ConfigFile manifest = ConfigFile::parse_file(args.config);
  std::vector<GridPoint> grid = expand_manifest(manifest, data_root_from_env());
  std::vector<uint64_t> seeds = args.seeds;
  if (seeds.empty())
    seeds.push_back(static_cast<uint64_t>(
        manifest.get_int("experiment.master_seed", 0)));

  struct Job {
    ExperimentConfig cfg;
    std::string grid_id;
    uint64_t seed;
    std::string path;
  };
  std::vector<Job> jobs;
  for (const auto& gp : grid)
    for (const uint64_t seed : seeds) {
      Job j;
      j.cfg = gp.cfg;
      j.cfg.master_seed = seed;
      j.grid_id = gp.id;
      j.seed = seed;
      j.path = (fs::path(out_dir) /
                (sanitize(j.cfg.name) + "__" + gp.id + "__seed" +
                 std::to_string(seed) + ".ndjson"))
                   .string();
      if (!j.cfg.checkpoint_path.empty())
        j.cfg.checkpoint_path =
            (fs::path(out_dir) / (sanitize(j.cfg.name) + "__" + gp.id +
                                  "__seed" + std::to_string(seed) + ".ckpt"))
                .string();
      jobs.push_back(std::move(j));
    }

  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  ErrorClass first_class = ErrorClass::Config;
  std::mutex err_mutex;
  auto worker = [&]() {
    for (;;) {
      const size_t idx = next.fetch_add(1);
      if (idx >= jobs.size() || failed.load()) return;
      try {
        const TrainingLog log = run_experiment(jobs[idx].cfg);
        std::ofstream os(jobs[idx].path, std::ios::binary);
        if (!os) throw IoError("cannot open log for writing: " + jobs[idx].path);
        write_log(log, os);
        std::cout << jobs[idx].path
                  << (log.summary.diverged ? "  [diverged]" : "") << "  ("
                  << log.wall_seconds << " s)\n";
      } catch (const Error& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed.exchange(true)) {
          first_error = e.what();
          first_class = e.cls();
        }
        return;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failed.exchange(true)) {
          first_error = e.what();
          first_class = ErrorClass::Numerical;
        }
        return;
      }
    }
  };
  const int nworkers = std::min<int>(args.jobs, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int i = 1; i < nworkers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failed.load()) throw Error(first_class, first_error);

  json index;
  index["manifest"] = args.config;
  index["runs"] = json::array();
  for (const auto& j : jobs) {
    json r;
    r["grid"] = j.grid_id;
    r["seed"] = j.seed;
    r["path"] = fs::path(j.path).filename().string();
    index["runs"].push_back(r);
  }
  std::ofstream os(fs::path(out_dir) / "index.json", std::ios::binary);
  os << index.dump(2) << "\n";
  return 0;
}

Model model_from_checkpoint(const ConfigFile& cf, const std::string& path,
                            ParamVector& params) {
  auto [kind, loaded] = load_checkpoint(path);
  ExperimentConfig cfg = experiment_from_config(cf, data_root_from_env());
  Model m = Model::build(cfg.model);
  if (m.spec.kind != kind)
    throw ConfigError("checkpoint model kind does not match config");
  if (m.dim() != static_cast<int64_t>(loaded.size()))
    throw ConfigError("checkpoint parameter count does not match config");
  params = std::move(loaded);
  return m;
}

int cmd_spectrum(const CommonArgs& args) {
  if (args.config.empty() || args.checkpoint.empty())
    throw ConfigError("spectrum needs --config and --checkpoint");
  const ConfigFile cf = ConfigFile::parse_file(args.config);
  const ExperimentConfig cfg = experiment_from_config(cf, data_root_from_env());
  ParamVector params;
  const Model m = model_from_checkpoint(cf, args.checkpoint, params);
  const LoadedData data = load_data(cfg.data, cfg.master_seed, cfg.data_root);
  SeededRng sub_rng = SeededRng(cfg.master_seed).split("hessian_subsample");
  const int sub_n = std::max(
      1, static_cast<int>(std::lround(cfg.hessian_subsample_fraction *
                                      data.train.n())));
  const Dataset sub = subsample_random(data.train, sub_n, sub_rng);
  LanczosConfig lc;
  lc.k = cfg.k_track;
  lc.max_iters = cfg.lanczos_max_iters;
  lc.tol = cfg.lanczos_tol;
  lc.seed = SeededRng(cfg.master_seed).split("lanczos").seed();
  EigenEstimate est =
      estimate_spectrum(m, params, gather_range(sub, 0, sub.n()), lc);
  est.subsample_seed = sub_rng.seed();
  est.subsample_fraction = cfg.hessian_subsample_fraction;
  json out;
  out["step"] = est.step;
  out["lambdas"] = json::array();
  out["residuals"] = json::array();
  for (const auto& p : est.pairs) {
    out["lambdas"].push_back(p.lambda);
    out["residuals"].push_back(p.residual);
  }
  out["subsample_seed"] = est.subsample_seed;
  if (!args.vectors.empty()) {
    // eigenvectors in the binary checkpoint format, one file per pair
    for (int i = 0; i < est.k(); ++i)
      save_checkpoint(args.vectors + ".e" + std::to_string(i + 1) + ".ckpt",
                      m.spec.kind, est.pairs[static_cast<size_t>(i)].vector);
  }
  if (args.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream os(args.out, std::ios::binary);
    if (!os) throw IoError("cannot open " + args.out);
    os << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_probe(const CommonArgs& args) {
  if (args.config.empty() || args.checkpoint.empty())
    throw ConfigError("probe needs --config and --checkpoint");
  const ConfigFile cf = ConfigFile::parse_file(args.config);
  const ExperimentConfig cfg = experiment_from_config(cf, data_root_from_env());
  ParamVector params;
  const Model m = model_from_checkpoint(cf, args.checkpoint, params);
  const LoadedData data = load_data(cfg.data, cfg.master_seed, cfg.data_root);
  SeededRng sub_rng = SeededRng(cfg.master_seed).split("hessian_subsample");
  const int sub_n = std::max(
      1, static_cast<int>(std::lround(cfg.hessian_subsample_fraction *
                                      data.train.n())));
  const Dataset sub = subsample_random(data.train, sub_n, sub_rng);
  LanczosConfig lc;
  lc.k = cfg.k_track;
  lc.max_iters = cfg.lanczos_max_iters;
  lc.tol = cfg.lanczos_tol;
  lc.seed = SeededRng(cfg.master_seed).split("lanczos").seed();
  const EigenEstimate est =
      estimate_spectrum(m, params, gather_range(sub, 0, sub.n()), lc);
  int converged = 0;
  for (const auto& p : est.pairs)
    if (p.converged) ++converged;
  if (cfg.probe.eig_index > est.k() || cfg.probe.eig_index > converged)
    throw ConfigError("probe eig_index " + std::to_string(cfg.probe.eig_index) +
                      " exceeds the " + std::to_string(converged) +
                      " converged pairs");
  ProbeConfig pc = cfg.probe;
  pc.eta = cfg.opt.eta;
  pc.seed = SeededRng(cfg.master_seed).split("probe").seed();
  const ParamVector& e_i =
      est.pairs[static_cast<size_t>(cfg.probe.eig_index - 1)].vector;
  const ProbeResult r = run_probe(m, params, e_i, pc, data.train, sub, 0);
  const json out = probe_to_json(r);
  if (args.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    fs::create_directories(fs::path(args.out).parent_path().string().empty()
                               ? "."
                               : fs::path(args.out).parent_path().string());
    std::ofstream os(args.out, std::ios::binary);
    if (!os) throw IoError("cannot open " + args.out);
    os << out.dump(2) << "\n";
  }
  return 0;
}

std::vector<TrainingLog> load_logs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("plot needs at least one log file");
  std::vector<TrainingLog> logs;
  for (const auto& p : paths) {
    std::ifstream is(p);
    if (!is) throw IoError("cannot open log: " + p);
    TrainingLog log = read_log(is);
    if (log.records.empty())
      throw ConfigError("log holds no records: " + p);
    logs.push_back(std::move(log));
  }
  return logs;
}

std::string series_name(const TrainingLog& log, const std::string& path) {
  if (log.config_echo.contains("optimizer")) {
    const auto& o = log.config_echo["optimizer"];
    std::string name = o.value("variant", "sgd");
    if (o.contains("eta")) name += " eta=" + json(o["eta"]).dump();
    name += " seed=" + json(log.config_echo.value("master_seed", 0)).dump();
    return name;
  }
  return fs::path(path).filename().string();
}

int cmd_plot(const CommonArgs& args) {
  if (args.kind.empty()) throw ConfigError("plot needs --kind");
  if (args.out.empty()) throw ConfigError("plot needs --out");
  const std::vector<TrainingLog> logs = load_logs(args.inputs);
  svg::ChartOptions opt;
  std::string body;
  if (args.kind == "eigenvalue-trace") {
    opt.title = "top Hessian eigenvalue along training";
    opt.x_label = "step";
    opt.y_label = "lambda_1";
    opt.log_y = true;
    std::vector<svg::Series> series;
    for (size_t i = 0; i < logs.size(); ++i) {
      svg::Series s;
      s.label = series_name(logs[i], args.inputs[i]);
      for (const auto& r : logs[i].records)
        if (!r.lambdas.empty())
          s.points.emplace_back(static_cast<double>(r.t), r.lambdas[0]);
      series.push_back(std::move(s));
    }
    body = svg::line_chart(series, opt);
  } else if (args.kind == "accuracy") {
    opt.title = "train / validation accuracy";
    opt.x_label = "epoch";
    opt.y_label = "accuracy";
    std::vector<svg::Series> series;
    for (size_t i = 0; i < logs.size(); ++i) {
      svg::Series tr{series_name(logs[i], args.inputs[i]) + " train", {}};
      svg::Series va{series_name(logs[i], args.inputs[i]) + " val", {}};
      for (const auto& r : logs[i].records) {
        if (!r.boundary) continue;
        tr.points.emplace_back(r.epoch, r.train_acc);
        va.points.emplace_back(r.epoch, r.val_acc);
      }
      series.push_back(std::move(tr));
      series.push_back(std::move(va));
    }
    body = svg::line_chart(series, opt);
  } else if (args.kind == "alignment-vs-accuracy") {
    opt.title = "gradient / sharpest-direction alignment";
    opt.x_label = "train accuracy";
    opt.y_label = "mean |cos|, top 5";
    std::vector<svg::Series> series;
    int dim_hint = 0;
    for (size_t i = 0; i < logs.size(); ++i) {
      svg::Series s{series_name(logs[i], args.inputs[i]), {}};
      for (const auto& r : logs[i].records)
        if (!r.lambdas.empty())
          s.points.emplace_back(r.train_acc, r.alignment_top);
      series.push_back(std::move(s));
      if (logs[i].config_echo.contains("model") &&
          logs[i].config_echo["model"].contains("dim"))
        dim_hint = logs[i].config_echo["model"]["dim"].get<int>();
    }
    if (dim_hint > 0) {
      opt.baseline = true;
      opt.baseline_value = random_alignment_baseline(dim_hint);
      opt.baseline_label = "random vector";
    }
    body = svg::line_chart(series, opt);
  } else if (args.kind == "alpha-deltas") {
    opt.title = "loss change along the probed direction";
    opt.x_label = "alpha";
    opt.y_label = "mean delta";
    std::vector<std::string> groups;
    std::vector<svg::Series> series;
    for (size_t i = 0; i < logs.size(); ++i) {
      if (logs[i].probes.empty())
        throw ConfigError("log holds no probes: " + args.inputs[i]);
      svg::Series s{series_name(logs[i], args.inputs[i]), {}};
      // mean over probed iterations per alpha
      std::vector<std::pair<double, double>> acc;
      std::vector<int> count;
      for (const auto& p : logs[i].probes)
        for (size_t a = 0; a < p.alpha_deltas.size(); ++a) {
          if (a >= acc.size()) {
            acc.emplace_back(p.alpha_deltas[a].first, 0.0);
            count.push_back(0);
          }
          acc[a].second += p.alpha_deltas[a].second;
          ++count[a];
        }
      for (size_t a = 0; a < acc.size(); ++a) {
        acc[a].second /= count[a];
        if (i == 0) groups.push_back(json(acc[a].first).dump());
        s.points.emplace_back(acc[a].first, acc[a].second);
      }
      series.push_back(std::move(s));
    }
    body = svg::bar_chart(groups, series, opt);
  } else if (args.kind == "surface-scan") {
    opt.title = "loss along the probed eigenvector";
    opt.x_label = "k (units of expected step norm)";
    opt.y_label = "loss";
    std::vector<svg::Series> series;
    for (const auto& log : logs)
      for (const auto& p : log.probes) {
        svg::Series s{"t=" + std::to_string(p.step), p.scan};
        series.push_back(std::move(s));
      }
    if (series.empty()) throw ConfigError("no surface scans in the logs");
    body = svg::line_chart(series, opt);
  } else {
    throw ConfigError("unknown plot kind: " + args.kind);
  }
  std::ofstream os(args.out, std::ios::binary);
  if (!os) throw IoError("cannot open " + args.out);
  os << body;
  return 0;
}

void usage(std::ostream& os) {
  os << "usage: sharppath <train|probe|spectrum|plot> [flags]\n"
        "  train    --config manifest.toml [--out dir] [--seeds 0,1,2] [--jobs n]\n"
        "  probe    --config cfg.toml --checkpoint file [--out probe.json]\n"
        "  spectrum --config cfg.toml --checkpoint file [--out spectrum.json]\n"
        "  plot     --kind k --out plot.svg log1.ndjson [log2.ndjson ...]\n"
        "           kinds: eigenvalue-trace accuracy alignment-vs-accuracy\n"
        "           (spectrum also takes --vectors prefix to dump eigenvectors)\n"
        "                  alpha-deltas surface-scan\n"
        "  env: SHARPPATH_DATA overrides the dataset root\n";
}

} // namespace

int run(const std::vector<std::string>& args) {
  try {
    if (args.empty()) {
      usage(std::cerr);
      return 2;
    }
    const std::string& cmd = args[0];
    const CommonArgs parsed = parse_args(args, 1);
    if (cmd == "train") return cmd_train(parsed);
    if (cmd == "probe") return cmd_probe(parsed);
    if (cmd == "spectrum") return cmd_spectrum(parsed);
    if (cmd == "plot") return cmd_plot(parsed);
    usage(std::cerr);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.cls());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace sharppath::cli
