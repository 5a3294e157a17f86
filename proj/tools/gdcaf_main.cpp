// Command-line front end: dataset generation, training, evaluation, attention
// export, and the gradient-check suite. Exit codes: 0 success, 2 contract or
// configuration error, 3 numeric abort, 4 IO failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gdcaf/data.hpp"
#include "gdcaf/errors.hpp"
#include "gdcaf/export.hpp"
#include "gdcaf/gradcheck.hpp"
#include "gdcaf/metrics.hpp"
#include "gdcaf/model.hpp"
#include "gdcaf/nn.hpp"
#include "gdcaf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "gdcaf 0.1.0";

struct RunMeta {
  gdcaf::ModelConfig model;
  gdcaf::WindowTask task;
  double value_scale = 1.0;
  std::uint64_t seed = 0;
};

void write_run_meta(const RunMeta& meta, const fs::path& path) {
  json j;
  j["version"] = kVersion;
  j["model"] = json::parse(gdcaf::to_json_string(meta.model));
  j["task"] = {{"t_in", meta.task.t_in},
               {"delta", meta.task.delta},
               {"graph_size", meta.task.graph_size}};
  j["value_scale"] = meta.value_scale;
  j["seed"] = meta.seed;
  std::ofstream out(path);
  if (!out) throw gdcaf::IoError("cannot write run config: " + path.string());
  out << j.dump(2) << "\n";
}

RunMeta read_run_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw gdcaf::IoError("cannot open run config: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw gdcaf::IoError("run config is not valid JSON: " + path.string());
  RunMeta meta;
  meta.model = gdcaf::model_config_from_json(j.at("model").dump());
  meta.task.t_in = j.at("task").at("t_in").get<int>();
  meta.task.delta = j.at("task").at("delta").get<int>();
  meta.task.graph_size = j.at("task").at("graph_size").get<int>();
  meta.value_scale = j.at("value_scale").get<double>();
  meta.seed = j.at("seed").get<std::uint64_t>();
  return meta;
}

// Every command leaves a reproducibility record beside its outputs.
void write_repro(const fs::path& out_dir, const std::string& command, std::uint64_t seed,
                 const json& resolved) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["resolved"] = resolved;
  std::ofstream out(out_dir / "repro.json");
  if (!out) throw gdcaf::IoError("cannot write repro record in " + out_dir.string());
  out << j.dump(2) << "\n";
}

std::vector<int> strided_subset(std::vector<int> starts, int cap) {
  if (cap <= 0 || static_cast<int>(starts.size()) <= cap) return starts;
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(cap));
  const double step = static_cast<double>(starts.size()) / cap;
  for (int i = 0; i < cap; ++i) {
    picked.push_back(starts[static_cast<std::size_t>(i * step)]);
  }
  return picked;
}

double dataset_max(const gdcaf::PrecipDataset& ds) {
  float mx = 0.0f;
  for (const gdcaf::Tensor& f : ds.frames) {
    for (std::size_t i = 0; i < f.size(); ++i) mx = std::max(mx, f[i]);
  }
  return static_cast<double>(mx);
}

gdcaf::metrics::Predictor model_predictor(const gdcaf::GdCaf& model, double value_scale) {
  return [&model, value_scale](const gdcaf::GraphSample& sample) {
    gdcaf::Tensor x = sample.x;
    if (value_scale != 1.0) x = gdcaf::scale(x, static_cast<float>(value_scale));
    gdcaf::Tensor pred = model.predict(x);
    if (value_scale != 1.0) pred = gdcaf::scale(pred, static_cast<float>(1.0 / value_scale));
    return pred;
  };
}

// --- gen -----------------------------------------------------------------------

struct GenArgs {
  std::string out;
  gdcaf::SyntheticParams params;
};

int cmd_gen(const GenArgs& args) {
  const fs::path dir(args.out);
  fs::create_directories(dir);
  gdcaf::PrecipDataset ds = gdcaf::gen_synthetic(args.params);

  const int test_n = ds.frame_count() / 7;
  const int pool_n = ds.frame_count() - test_n;
  const auto [train_n, val_n] = gdcaf::train_val_counts(pool_n);

  gdcaf::DatasetPaths paths{dir / "train.bin", dir / "val.bin", dir / "test.bin"};
  gdcaf::save_split_file(gdcaf::slice_frames(ds, 0, train_n), paths.train);
  gdcaf::save_split_file(gdcaf::slice_frames(ds, train_n, val_n), paths.val);
  gdcaf::save_split_file(gdcaf::slice_frames(ds, pool_n, test_n), paths.test);
  gdcaf::write_manifest(paths, dir / "manifest.json");

  json resolved;
  resolved["hours"] = args.params.hours;
  resolved["nodes"] = args.params.nodes;
  resolved["height"] = args.params.height;
  resolved["width"] = args.params.width;
  resolved["frames"] = {{"train", train_n}, {"val", val_n}, {"test", test_n}};
  write_repro(dir, "gen", args.params.seed, resolved);
  std::printf("wrote %d/%d/%d train/val/test frames under %s\n", train_n, val_n, test_n,
              dir.string().c_str());
  return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string scenario = "single";
  std::string init_from;
  gdcaf::WindowTask task{6, 1, 0};  // graph_size 0 = all dataset nodes
  int heads = 4;
  int blocks = 2;
  bool pool_input = false;
  bool pool_qkv = false;
  float leaky_slope = 0.2f;
  gdcaf::train::TrainConfig train_cfg;
  bool normalize = false;
  int max_train_windows = 0;
  int max_val_windows = 0;
};

int train_one(const TrainArgs& args, const gdcaf::PrecipDataset& train_ds,
              const gdcaf::PrecipDataset& val_ds, const fs::path& run_dir) {
  fs::create_directories(run_dir);
  gdcaf::WindowTask task = args.task;
  if (task.graph_size == 0) task.graph_size = train_ds.nodes;
  task.validate();

  gdcaf::ModelConfig cfg;
  cfg.nodes = task.graph_size;
  cfg.t_in = task.t_in;
  cfg.heads = args.heads;
  cfg.blocks = args.blocks;
  cfg.height = train_ds.height;
  cfg.width = train_ds.width;
  cfg.pool_input = args.pool_input;
  cfg.pool_qkv = args.pool_qkv;
  cfg.leaky_slope = args.leaky_slope;
  cfg.validate();

  gdcaf::train::TrainConfig tc = args.train_cfg;
  if (args.normalize && tc.value_scale == 1.0) {
    const double mx = dataset_max(train_ds);
    if (mx > 0.0) tc.value_scale = 1.0 / mx;
  }

  gdcaf::GdCaf model(cfg, tc.seed);
  if (!args.init_from.empty()) gdcaf::load_checkpoint(model.params(), args.init_from);

  std::vector<int> train_starts = gdcaf::all_window_starts(train_ds, task);
  std::vector<int> val_starts_local = gdcaf::all_window_starts(val_ds, task);
  train_starts = strided_subset(std::move(train_starts), args.max_train_windows);
  val_starts_local = strided_subset(std::move(val_starts_local), args.max_val_windows);
  if (train_starts.empty() || val_starts_local.empty()) {
    throw gdcaf::ContractError("train: dataset too short for the requested task window");
  }

  gdcaf::PrecipDataset joined = train_ds;
  joined.frames.insert(joined.frames.end(), val_ds.frames.begin(), val_ds.frames.end());
  std::vector<int> val_starts;
  for (int s : val_starts_local) val_starts.push_back(s + train_ds.frame_count());

  auto progress = [](const gdcaf::train::EpochRecord& r) {
    std::printf("epoch %3d  train %.6e  val %.6e  lr %.2e  (%.1fs)\n", r.epoch, r.train_mse,
                r.val_mse, r.lr, r.seconds);
    std::fflush(stdout);
    return true;
  };
  gdcaf::train::FitResult result =
      gdcaf::train::fit(model, joined, train_starts, val_starts, task, tc, progress);

  gdcaf::save_checkpoint(model.params(), run_dir / "best.ckpt");
  write_run_meta(RunMeta{cfg, task, tc.value_scale, tc.seed}, run_dir / "config.json");
  gdcaf::train::write_log_csv(result.log, run_dir / "log.csv");

  json resolved;
  resolved["task"] = {{"t_in", task.t_in}, {"delta", task.delta}, {"graph_size", task.graph_size}};
  resolved["model"] = json::parse(gdcaf::to_json_string(cfg));
  resolved["value_scale"] = tc.value_scale;
  resolved["train_windows"] = train_starts.size();
  resolved["val_windows"] = val_starts.size();
  resolved["best_epoch"] = result.best_epoch;
  resolved["best_val"] = result.best_val;
  write_repro(run_dir, "train", tc.seed, resolved);
  std::printf("best epoch %d (val %.6e); artifacts in %s\n", result.best_epoch, result.best_val,
              run_dir.string().c_str());
  return 0;
}

int cmd_train(const TrainArgs& args) {
  const gdcaf::DatasetPaths paths = gdcaf::read_manifest(args.dataset);
  const gdcaf::PrecipDataset train_ds = gdcaf::load_split_file(paths.train);
  const gdcaf::PrecipDataset val_ds = gdcaf::load_split_file(paths.val);
  const fs::path out(args.out);

  if (args.scenario == "single") {
    return train_one(args, train_ds, val_ds, out);
  }
  if (args.scenario == "ablation") {
    // Pooling cases 1..4: neither, projections only, input only, both.
    const bool qkv[4] = {false, true, false, true};
    const bool input[4] = {false, false, true, true};
    for (int c = 0; c < 4; ++c) {
      TrainArgs sub = args;
      sub.pool_qkv = qkv[c];
      sub.pool_input = input[c];
      std::printf("== ablation case %d (pool_qkv=%d pool_input=%d) ==\n", c + 1, qkv[c], input[c]);
      train_one(sub, train_ds, val_ds, out / ("case" + std::to_string(c + 1)));
    }
    return 0;
  }
  if (args.scenario == "graph-size") {
    for (int g : {1, 2, 4, 8, 16}) {
      if (g > train_ds.nodes) break;
      TrainArgs sub = args;
      sub.task.graph_size = g;
      std::printf("== graph size %d ==\n", g);
      train_one(sub, train_ds, val_ds, out / ("gs" + std::to_string(g)));
    }
    return 0;
  }
  if (args.scenario == "window-sweep") {
    for (int t : {6, 9, 12, 15}) {
      for (int d : {1, 3, 6}) {
        TrainArgs sub = args;
        sub.task.t_in = t;
        sub.task.delta = d;
        std::printf("== input %dh, lead %dh ==\n", t, d);
        train_one(sub, train_ds, val_ds,
                  out / ("t" + std::to_string(t) + "_d" + std::to_string(d)));
      }
    }
    return 0;
  }
  throw gdcaf::ContractError("unknown scenario: " + args.scenario);
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string run;
  std::string runs;
  std::string dataset;
  std::string out;
  std::string region;
  int max_windows = 0;
};

int eval_one(const fs::path& run_dir, const gdcaf::PrecipDataset& test_ds, const EvalArgs& args,
             const fs::path& out_dir, std::string label, std::ostream& table) {
  const RunMeta meta = read_run_meta(run_dir / "config.json");
  gdcaf::GdCaf model(meta.model, meta.seed);
  gdcaf::load_checkpoint(model.params(), run_dir / "best.ckpt");

  std::vector<int> starts = gdcaf::all_window_starts(test_ds, meta.task);
  starts = strided_subset(std::move(starts), args.max_windows);
  if (starts.empty()) throw gdcaf::ContractError("eval: test split too short for the task");

  gdcaf::metrics::EvalOptions opts;
  if (!args.region.empty()) {
    int node = -1;
    for (std::size_t i = 0; i < test_ds.regions.size(); ++i) {
      if (test_ds.regions[i].id == args.region) node = static_cast<int>(i);
    }
    if (node < 0) throw gdcaf::ContractError("eval: unknown region id " + args.region);
    if (node >= meta.task.graph_size) {
      throw gdcaf::ContractError("eval: region " + args.region + " is outside the model's graph");
    }
    opts.restrict_node = node;
  }

  const gdcaf::metrics::SkillReport model_report = gdcaf::metrics::evaluate(
      model_predictor(model, meta.value_scale), test_ds, starts, meta.task, opts);
  const gdcaf::metrics::SkillReport persistence_report = gdcaf::metrics::evaluate(
      [](const gdcaf::GraphSample& s) { return gdcaf::metrics::persistence_predict(s.x); },
      test_ds, starts, meta.task, opts);

  std::ofstream js(out_dir / (label + "_report.json"));
  if (!js) throw gdcaf::IoError("cannot write report under " + out_dir.string());
  js << "{\n\"model\": " << gdcaf::metrics::report_json(model_report)
     << ",\n\"persistence\": " << gdcaf::metrics::report_json(persistence_report) << "\n}\n";

  table << gdcaf::metrics::report_csv_row(label + "/model", model_report) << "\n";
  table << gdcaf::metrics::report_csv_row(label + "/persistence", persistence_report) << "\n";
  std::printf("%-24s  model mse %.6e   persistence mse %.6e\n", label.c_str(), model_report.mse,
              persistence_report.mse);
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  const gdcaf::DatasetPaths paths = gdcaf::read_manifest(args.dataset);
  const gdcaf::PrecipDataset test_ds = gdcaf::load_split_file(paths.test);
  const fs::path out(args.out);
  fs::create_directories(out);

  std::ofstream table(out / "table.csv");
  if (!table) throw gdcaf::IoError("cannot write table.csv under " + out.string());
  table << gdcaf::metrics::report_csv_header() << "\n";

  if (!args.run.empty()) {
    eval_one(args.run, test_ds, args, out, fs::path(args.run).filename().string(), table);
  } else if (!args.runs.empty()) {
    std::vector<fs::path> run_dirs;
    for (const auto& entry : fs::directory_iterator(args.runs)) {
      if (entry.is_directory() && fs::exists(entry.path() / "config.json")) {
        run_dirs.push_back(entry.path());
      }
    }
    std::sort(run_dirs.begin(), run_dirs.end());
    if (run_dirs.empty()) throw gdcaf::ContractError("eval: no runs found under " + args.runs);
    for (const auto& dir : run_dirs) eval_one(dir, test_ds, args, out, dir.filename().string(), table);
  } else {
    throw gdcaf::ContractError("eval: pass --run or --runs");
  }

  json resolved;
  resolved["dataset"] = args.dataset;
  resolved["region"] = args.region;
  write_repro(out, "eval", 0, resolved);
  return 0;
}

// --- export-attention -------------------------------------------------------------

struct ExportArgs {
  std::string run;
  std::string dataset;
  std::string out;
  int top_k = 20;
  std::string regions;  // comma-separated ids; empty = all
  int max_windows = 0;
};

int cmd_export(const ExportArgs& args) {
  const RunMeta meta = read_run_meta(fs::path(args.run) / "config.json");
  gdcaf::GdCaf model(meta.model, meta.seed);
  gdcaf::load_checkpoint(model.params(), fs::path(args.run) / "best.ckpt");

  const gdcaf::DatasetPaths paths = gdcaf::read_manifest(args.dataset);
  const gdcaf::PrecipDataset test_ds = gdcaf::load_split_file(paths.test);
  std::vector<int> starts = gdcaf::all_window_starts(test_ds, meta.task);
  starts = strided_subset(std::move(starts), args.max_windows);
  if (starts.empty()) throw gdcaf::ContractError("export: test split too short for the task");

  gdcaf::viz::ExportOptions opts;
  opts.top_k = args.top_k;
  opts.value_scale = meta.value_scale;
  if (!args.regions.empty()) {
    std::stringstream ss(args.regions);
    std::string id;
    while (std::getline(ss, id, ',')) {
      int node = -1;
      for (std::size_t i = 0; i < test_ds.regions.size(); ++i) {
        if (test_ds.regions[i].id == id) node = static_cast<int>(i);
      }
      if (node < 0) throw gdcaf::ContractError("export: unknown region id " + id);
      opts.temporal_nodes.push_back(node);
    }
  }

  const gdcaf::viz::AttentionExport exported =
      gdcaf::viz::export_attention(model, test_ds, starts, meta.task, opts);
  gdcaf::viz::write_export_files(exported, test_ds.regions, args.out);

  json resolved;
  resolved["top_k"] = args.top_k;
  resolved["windows"] = starts.size();
  resolved["regions"] = args.regions;
  write_repro(args.out, "export-attention", meta.seed, resolved);
  std::printf("attention export written to %s\n", args.out.c_str());
  return 0;
}

// --- gradcheck ----------------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed) {
  double worst = 0.0;
  for (const auto& r : gdcaf::gradcheck::check_primitives(seed)) {
    std::printf("%-18s max relative error %.3e\n", r.name.c_str(), r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  const auto full = gdcaf::gradcheck::check_full_model(seed);
  std::printf("%-18s max relative error %.3e\n", full.name.c_str(), full.max_rel_error);
  worst = std::max(worst, full.max_rel_error);
  std::printf("worst overall %.3e (tolerance %.0e)\n", worst, gdcaf::gradcheck::kTolerance);
  return worst < gdcaf::gradcheck::kTolerance ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph nowcaster over gridded precipitation maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic dataset with split files");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.params.seed, "Generator seed");
  gen_cmd->add_option("--hours", gen.params.hours, "Timeline length in hours");
  gen_cmd->add_option("--nodes", gen.params.nodes, "Number of regions");
  gen_cmd->add_option("--height", gen.params.height, "Map height in pixels");
  gen_cmd->add_option("--width", gen.params.width, "Map width in pixels");
  gen_cmd->add_option("--blobs", gen.params.blobs, "Rain cells per region");
  gen_cmd->add_option("--shared-fraction", gen.params.shared_fraction,
                      "Fraction of cells common to all regions");
  gen_cmd->add_option("--sigma", gen.params.sigma_px, "Cell radius in pixels");
  gen_cmd->add_option("--speed", gen.params.speed_px_per_h, "Advection speed in px/h");
  gen_cmd->add_option("--rotation-period", gen.params.rotation_period_h,
                      "Hours per full rotation of the wind direction");
  gen_cmd->add_option("--jitter", gen.params.jitter_px, "Per-hour random walk amplitude");
  gen_cmd->add_option("--amplitude", gen.params.amplitude_mm_h, "Peak rain rate in mm/h");
  gen_cmd->add_option("--start-hour", gen.params.start_hour, "Timeline start, hours since epoch");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model or a scenario grid");
  train_cmd->add_option("--dataset", tr.dataset, "Dataset manifest path")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--scenario", tr.scenario,
                        "single | ablation | graph-size | window-sweep");
  train_cmd->add_option("--t-in", tr.task.t_in, "Input window length (hours)");
  train_cmd->add_option("--delta", tr.task.delta, "Lead time (hours)");
  train_cmd->add_option("--graph-size", tr.task.graph_size, "Regions used (default: all)");
  train_cmd->add_option("--heads", tr.heads, "Attention heads");
  train_cmd->add_option("--blocks", tr.blocks, "Attention blocks");
  train_cmd->add_flag("--pool-input", tr.pool_input, "Pool maps after the input");
  train_cmd->add_flag("--pool-qkv", tr.pool_qkv, "Pool the attention projections");
  train_cmd->add_option("--leaky-slope", tr.leaky_slope, "Negative slope of the score activation");
  train_cmd->add_option("--epochs", tr.train_cfg.max_epochs, "Epoch cap");
  train_cmd->add_option("--batch", tr.train_cfg.batch_size, "Batch size");
  train_cmd->add_option("--lr", tr.train_cfg.lr, "Initial learning rate");
  train_cmd->add_option("--seed", tr.train_cfg.seed, "Training seed");
  train_cmd->add_option("--value-scale", tr.train_cfg.value_scale,
                        "Multiplier applied to values before the model");
  train_cmd->add_flag("--normalize", tr.normalize, "Scale values by 1/max of the train split");
  train_cmd->add_option("--init-from", tr.init_from, "Checkpoint to initialize from");
  train_cmd->add_option("--max-train-windows", tr.max_train_windows,
                        "Cap on train windows (strided subset)");
  train_cmd->add_option("--max-val-windows", tr.max_val_windows, "Cap on validation windows");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate runs against persistence");
  eval_cmd->add_option("--run", ev.run, "One run directory (best.ckpt + config.json)");
  eval_cmd->add_option("--runs", ev.runs, "Directory of run subdirectories");
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset manifest path")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--region", ev.region, "Restrict metrics to one region id");
  eval_cmd->add_option("--max-windows", ev.max_windows, "Cap on test windows");

  ExportArgs ex;
  CLI::App* export_cmd =
      app.add_subcommand("export-attention", "Season-averaged attention matrices and figures");
  export_cmd->add_option("--run", ex.run, "Run directory")->required();
  export_cmd->add_option("--dataset", ex.dataset, "Dataset manifest path")->required();
  export_cmd->add_option("--out", ex.out, "Output directory")->required();
  export_cmd->add_option("--top-k", ex.top_k, "Edges per panel");
  export_cmd->add_option("--regions", ex.regions, "Comma-separated region ids for temporal panels");
  export_cmd->add_option("--max-windows", ex.max_windows, "Cap on test windows");

  std::uint64_t gradcheck_seed = 12345;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "Finite-difference check of every primitive and the model");
  grad_cmd->add_option("--seed", gradcheck_seed, "Seed for the random probes");

  try {
    app.parse(argc, argv);
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (export_cmd->parsed()) return cmd_export(ex);
    if (grad_cmd->parsed()) return cmd_gradcheck(gradcheck_seed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const gdcaf::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const gdcaf::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
