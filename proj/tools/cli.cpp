#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "tjaidl/checkpoint.hpp"
#include "tjaidl/config.hpp"
#include "tjaidl/error.hpp"
#include "tjaidl/experiment.hpp"

namespace fs = std::filesystem;

namespace tjaidl::cli {

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string modes;
  std::string seeds;
  bool no_adapt = false;
  std::string checkpoint;
  std::string source;
  std::string target;
  std::string data;
  bool use_target_labels = false;
  std::size_t threads = 0;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << content;
  if (!f) throw Error("write failed: " + path.string());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamps live only here so every other output stays byte-stable.
class RunLog {
 public:
  RunLog(const fs::path& dir, const std::vector<std::string>& args)
      : path_(dir / "run.log"), start_(std::chrono::steady_clock::now()) {
    std::string line = utc_now() + " start";
    for (std::size_t i = 1; i < args.size(); ++i) line += " " + args[i];
    append(line);
  }
  void finish() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    append(utc_now() + " done in " + std::to_string(secs) + " s");
  }

 private:
  void append(const std::string& line) {
    std::ofstream f(path_, std::ios::app);
    f << line << "\n";
  }
  fs::path path_;
  std::chrono::steady_clock::time_point start_;
};

KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return KeyValueConfig::load(path);
  } catch (const ParseError& e) {
    throw ConfigError(path, e.what());
  }
}

ExperimentSpec load_spec(const Options& o) {
  KeyValueConfig kv = load_config(o.config);
  ExperimentSpec spec = experiment_from(kv);
  if (!o.source.empty()) spec.source_path = o.source;
  if (!o.target.empty()) spec.target_path = o.target;
  if (spec.source_path.has_value() != spec.target_path.has_value()) {
    throw ConfigError("data.source", "source and target datasets must be given together");
  }
  if (o.no_adapt) spec.train.adapt_iterations = 0;
  if (o.seed) spec.train.seed = *o.seed;
  return spec;
}

// Generated data follows the training seed, as in `compare`.
DatasetPair load_data(const ExperimentSpec& spec) { return experiment_data(spec, spec.train.seed); }

fs::path prepare_out(const Options& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

void write_report(const fs::path& dir, const RetrievalReport& report, std::ostream& out) {
  const std::string table = format_report_table(report);
  write_file(dir / "report.txt", table);
  write_file(dir / "report.json", format_report_json(report) + "\n");
  write_file(dir / "cmc.csv", format_cmc_curve(report));
  out << table;
}

std::string summary(const char* name, const Dataset& d) {
  return std::string(name) + ": " + std::to_string(d.size()) + " samples, " +
         std::to_string(d.num_identities()) + " identities, m=" + std::to_string(d.num_attributes()) +
         ", D_in=" + std::to_string(d.feature_dim()) + "\n";
}

int cmd_gen_data(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  KeyValueConfig kv = load_config(o.config);
  kv.reject_unknown(known_config_keys());
  GenConfig gen = gen_config_from(kv);
  if (o.seed) gen.seed = *o.seed;
  const fs::path dir = prepare_out(o);
  RunLog log(dir, args);
  DatasetPair data = generate_pair(gen);
  save_dataset(data.source, dir / "source.jsonl");
  save_dataset(data.target, dir / "target.jsonl");
  out << summary("source", data.source) << summary("target", data.target);
  log.finish();
  return kOk;
}

int cmd_train(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  ExperimentSpec spec = load_spec(o);
  const fs::path dir = prepare_out(o);
  RunLog log(dir, args);
  DatasetPair data = load_data(spec);
  TrainReport report = run(spec.train, data.source, data.target);
  save_checkpoint(report.checkpoint, dir / "checkpoint.txt");
  write_file(dir / "metrics.log", format_metrics_log(report.traces));
  out << "mode: " << mode_name(spec.train.mode) << ", seed " << spec.train.seed << "\n";
  write_report(dir, evaluate_model(report.checkpoint.params, spec.train.mode, data.target, spec.protocol), out);
  log.finish();
  return kOk;
}

int cmd_adapt(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  ExperimentSpec spec = load_spec(o);
  if (o.checkpoint.empty()) throw MissingCheckpointError("adapt needs --checkpoint");
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (ckpt.mode != Mode::kTjAidl) {
    throw ConfigError("train.mode", std::string("adaptation applies to tj-aidl checkpoints, not ") +
                                        mode_name(ckpt.mode));
  }
  const fs::path dir = prepare_out(o);
  RunLog log(dir, args);
  DatasetPair data = load_data(spec);
  Trainer trainer(spec.train, std::move(ckpt));
  // The trainer rejects labelled data; --use-target-labels exists to prove it.
  trainer.adapt(o.use_target_labels ? data.target : data.target.strip_labels());
  const Checkpoint result = trainer.checkpoint();
  save_checkpoint(result, dir / "checkpoint.txt");
  write_file(dir / "metrics.log", format_metrics_log(trainer.traces()));
  write_report(dir, evaluate_model(result.params, result.mode, data.target, spec.protocol), out);
  log.finish();
  return kOk;
}

int cmd_eval(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  ExperimentSpec spec = load_spec(o);
  if (o.checkpoint.empty()) throw MissingCheckpointError("eval needs --checkpoint");
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const fs::path dir = prepare_out(o);
  RunLog log(dir, args);
  const Dataset dataset = o.data.empty() ? load_data(spec).target : load_dataset(o.data);
  write_report(dir, evaluate_model(ckpt.params, ckpt.mode, dataset, spec.protocol), out);
  log.finish();
  return kOk;
}

int cmd_compare(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  ExperimentSpec spec = load_spec(o);
  if (!o.modes.empty()) spec.modes = parse_mode_list(o.modes);
  if (!o.seeds.empty()) {
    spec.seeds = parse_seed_list(o.seeds);
  } else if (o.seed) {
    spec.seeds = {*o.seed};
  }
  spec.validate();
  const fs::path dir = prepare_out(o);
  RunLog log(dir, args);
  const ComparisonResult result = run_comparison(spec, o.threads);
  const std::string table = format_comparison_table(result);
  write_file(dir / "comparison.txt", table);
  write_file(dir / "comparison.jsonl", format_comparison_records(result));
  out << table;
  log.finish();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TJ-AIDL synthetic cross-domain re-identification"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file");
    sub->add_option("--seed", o.seed, "run seed (training and generated data)");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
  };
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--source", o.source, "labelled source dataset (.jsonl or .jsonl.gz)");
    sub->add_option("--target", o.target, "target dataset");
  };

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic source/target pair");
  add_common(gen);
  gen->get_option("--config")->required();

  auto* train = app.add_subcommand("train", "Step I, then Step II unless --no-adapt");
  add_common(train);
  add_data(train);
  train->add_flag("--no-adapt", o.no_adapt, "skip target adaptation");

  auto* adapt = app.add_subcommand("adapt", "Step II from a Step I checkpoint");
  add_common(adapt);
  add_data(adapt);
  adapt->add_option("--checkpoint", o.checkpoint, "checkpoint to resume");
  adapt->add_flag("--use-target-labels", o.use_target_labels,
                  "hand the labelled target to adaptation (always rejected)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the target");
  add_common(eval);
  add_data(eval);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
  eval->add_option("--data", o.data, "labelled dataset to evaluate instead of the target");

  auto* compare = app.add_subcommand("compare", "every mode across every seed");
  add_common(compare);
  add_data(compare);
  compare->add_option("--modes", o.modes, "comma-separated modes");
  compare->add_option("--seeds", o.seeds, "comma-separated seeds");
  compare->add_flag("--no-adapt", o.no_adapt, "disable tj-aidl adaptation");
  compare->add_option("--threads", o.threads, "worker threads (0 = hardware)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, args, out);
    if (train->parsed()) return cmd_train(o, args, out);
    if (adapt->parsed()) return cmd_adapt(o, args, out);
    if (eval->parsed()) return cmd_eval(o, args, out);
    if (compare->parsed()) return cmd_compare(o, args, out);
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kConfigError;
  } catch (const MissingCheckpointError& e) {
    err << "missing checkpoint: " << e.what() << "\n";
    return kMissingCheckpoint;
  } catch (const LabelLeakError& e) {
    err << "label leak: " << e.what() << "\n";
    return kLabelLeak;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace tjaidl::cli
