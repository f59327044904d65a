// Copyright 2026 The Timbre Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "timbre/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "timbre/checkpoint.hpp"
#include "timbre/dataset.hpp"
#include "timbre/feature_cache.hpp"
#include "timbre/metrics.hpp"
#include "timbre/synthetic.hpp"

namespace timbre {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<std::string_view> keys) {
  if (!obj.is_object()) throw Error(Errc::BadFormat, where + " must be an object");
  const std::set<std::string_view> allowed(keys);
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw Error(Errc::BadFormat, "unknown config key " + where + "." + key);
  }
}

template <typename T>
void take(const json& obj, const char* key, T& dst) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, std::string("config key ") + key + ": " + e.what());
  }
}

void take_path(const json& obj, const char* key, fs::path& dst) {
  std::string s;
  take(obj, key, s);
  if (!s.empty()) dst = s;
}

ModelKind parse_kind(const std::string& kind) {
  if (kind == "attention") return ModelKind::FreqAttention;
  if (kind == "fc") return ModelKind::FreqFC;
  throw Error(Errc::BadFormat, "model kind must be 'attention' or 'fc', got '" + kind + "'");
}

std::string_view kind_name(ModelKind kind) { return kind == ModelKind::FreqAttention ? "attention" : "fc"; }

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config, root, work_dir, model, aliases, sample, checkpoint, split = "test";
  int heads = 8, epochs = 0, patience = 0, jobs = 1, classes = 5, per_class = 10;
  std::uint64_t seed = 0;
  CLI::Option *heads_opt = nullptr, *epochs_opt = nullptr, *patience_opt = nullptr, *jobs_opt = nullptr,
              *seed_opt = nullptr;
};

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = load_run_config(f.config, cfg);
  if (!f.root.empty()) cfg.dataset_root = f.root;
  if (!f.work_dir.empty()) {
    cfg.work_dir = f.work_dir;
  } else if (cfg.work_dir.empty()) {
    const char* env = std::getenv("TIMBRE_WORK_DIR");
    cfg.work_dir = env && *env ? fs::path(env) : fs::path("timbre-work");
  }
  if (!f.aliases.empty()) cfg.aliases = f.aliases;
  if (!f.model.empty()) {
    cfg.model.kind = parse_kind(f.model);
    if (cfg.model.kind == ModelKind::FreqFC) cfg.model.heads = 0;
    if (cfg.model.kind == ModelKind::FreqAttention && cfg.model.heads <= 0) cfg.model.heads = 8;
  }
  if (*f.heads_opt && cfg.model.kind == ModelKind::FreqAttention) cfg.model.heads = f.heads;
  if (*f.seed_opt) cfg.seed = f.seed;
  if (*f.epochs_opt) cfg.train.max_epochs = f.epochs;
  if (*f.patience_opt) cfg.train.patience = f.patience;
  if (*f.jobs_opt) cfg.jobs = f.jobs;
  cfg.train.seed = cfg.seed;
  cfg.model.n_mels = cfg.dsp.n_mels;
  cfg.model.n_frames = cfg.dsp.frames;
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.jobs < 1) throw Error(Errc::InvalidRange, "jobs must be positive");
  return cfg;
}

const fs::path& require_root(const RunConfig& cfg) {
  if (cfg.dataset_root.empty()) throw UsageError("--root (or dataset_root in --config) is required");
  return cfg.dataset_root;
}

ClassTable class_table(const RunConfig& cfg) {
  auto table = ClassTable::standard();
  if (!cfg.aliases.empty()) table.load_aliases(cfg.aliases);
  return table;
}

LabeledSet load_split(const WorkLayout& layout, Split split) {
  return to_labeled_set(read_feature_cache(CachePaths::in(layout.cache_dir()).of(split)));
}

void print_histogram(std::ostream& out, const SplitPlan& plan) {
  const auto h = plan.histogram();
  out << std::left << std::setw(22) << "class" << std::right << std::setw(8) << "train" << std::setw(8) << "val"
      << std::setw(8) << "test" << std::setw(8) << "total" << '\n';
  std::array<int, 3> sums{};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& row = h[static_cast<std::size_t>(c)];
    out << std::left << std::setw(22) << ClassTable::name(c) << std::right;
    for (int s = 0; s < 3; ++s) {
      out << std::setw(8) << row[s];
      sums[s] += row[s];
    }
    out << std::setw(8) << row[0] + row[1] + row[2] << '\n';
  }
  out << std::left << std::setw(22) << "total" << std::right << std::setw(8) << sums[0] << std::setw(8) << sums[1]
      << std::setw(8) << sums[2] << std::setw(8) << sums[0] + sums[1] + sums[2] << '\n';
}

int cmd_scan(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto scan = scan_corpus(require_root(cfg), class_table(cfg));
  for (const auto& s : scan.skipped) err << "skipped (no label): " << s << '\n';
  const auto plan = make_split(scan.records, {}, cfg.seed);
  const WorkLayout layout{cfg.work_dir};
  fs::create_directories(layout.root);
  write_manifest(layout.manifest(), plan);
  print_histogram(out, plan);
  out << "manifest: " << layout.manifest().string() << '\n';
  return kExitOk;
}

int cmd_preprocess(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const WorkLayout layout{cfg.work_dir};
  const auto plan = read_manifest(layout.manifest());
  const auto summary = build_cache(plan, require_root(cfg), cfg.dsp, layout.cache_dir(), cfg.jobs);
  for (const auto& [path, reason] : summary.skipped) err << "skipped " << path << ": " << reason << '\n';
  out << "cached train=" << summary.written[0] << " val=" << summary.written[1] << " test=" << summary.written[2]
      << " skipped=" << summary.skipped.size() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const WorkLayout layout{cfg.work_dir};
  const LabeledSet train_set = load_split(layout, Split::Train);
  const LabeledSet val_set = load_split(layout, Split::Val);
  fs::create_directories(layout.checkpoint(cfg.model).parent_path());
  fs::create_directories(layout.train_log(cfg.model).parent_path());

  TrainHooks hooks;
  hooks.checkpoint = layout.checkpoint(cfg.model);
  hooks.on_epoch = [&err](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss << " val_f1 "
        << r.val_f1 << " (" << std::fixed << std::setprecision(1) << r.seconds << "s)" << std::defaultfloat
        << std::setprecision(6) << '\n';
  };
  const auto result = train(cfg.model, train_set, val_set, cfg.train, hooks);
  result.log.write_csv(layout.train_log(cfg.model));
  out << cfg.model.label() << ": best epoch " << result.best_epoch << ", val loss " << result.best_val_loss << '\n'
      << "checkpoint: " << hooks.checkpoint.string() << '\n'
      << "log: " << layout.train_log(cfg.model).string() << '\n';
  return kExitOk;
}

fs::path checkpoint_path(const RunConfig& cfg, const Flags& f) {
  return f.checkpoint.empty() ? WorkLayout{cfg.work_dir}.checkpoint(cfg.model) : fs::path(f.checkpoint);
}

int cmd_eval(const RunConfig& cfg, const Flags& f, std::ostream& out) {
  const WorkLayout layout{cfg.work_dir};
  const Checkpoint ck = load_checkpoint(checkpoint_path(cfg, f));
  const LabeledSet set = load_split(layout, parse_split(f.split));
  if (set.size() == 0) throw Error(Errc::EmptyCache, f.split + " split is empty");
  const EvalReport report = evaluate(ck.spec, ck.params, set);
  const std::vector<std::string_view> names(kClassNames.begin(), kClassNames.end());
  fs::create_directories(layout.report(ck.spec).parent_path());
  write_report_json(layout.report(ck.spec), report, names);
  write_confusion_csv(layout.confusion(ck.spec), report.confusion, names);
  out << ck.spec.label() << " on " << f.split << " (" << set.size() << " samples)\n"
      << "loss " << report.loss << "  accuracy " << report.accuracy << "  P " << report.weighted.precision
      << "  R " << report.weighted.recall << "  F1 " << report.weighted.f1 << '\n'
      << "report: " << layout.report(ck.spec).string() << '\n';
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const WorkLayout layout{cfg.work_dir};
  const LabeledSet train_set = load_split(layout, Split::Train);
  const LabeledSet val_set = load_split(layout, Split::Val);
  const LabeledSet test_set = load_split(layout, Split::Test);
  auto variants = default_ablation_variants();
  for (auto& v : variants) {
    v.n_mels = cfg.dsp.n_mels;
    v.n_frames = cfg.dsp.frames;
  }
  const auto rows = run_ablation(variants, train_set, val_set, test_set, cfg.train,
                                 [&err](const ModelSpec& spec, const EpochRecord& r) {
                                   err << spec.tag() << " epoch " << r.epoch << " val_loss " << r.val_loss << '\n';
                                 });
  fs::create_directories(layout.ablation().parent_path());
  std::ofstream(layout.ablation()) << ablation_csv(rows);
  out << ablation_table(rows) << "table: " << layout.ablation().string() << '\n';
  return kExitOk;
}

int cmd_attend(const RunConfig& cfg, const Flags& f, std::ostream& out) {
  if (f.sample.empty()) throw UsageError("attend needs --sample");
  const WorkLayout layout{cfg.work_dir};
  const Checkpoint ck = load_checkpoint(checkpoint_path(cfg, f));
  if (ck.spec.kind != ModelKind::FreqAttention) {
    throw Error(Errc::WrongModelKind, "attention traces need an attention checkpoint");
  }
  const fs::path wanted(f.sample);
  const auto paths = CachePaths::in(layout.cache_dir());
  for (Split split : {Split::Test, Split::Val, Split::Train}) {
    const FeatureCache cache = read_feature_cache(paths.of(split));
    for (const auto& e : cache.entries) {
      const fs::path p(e.path);
      if (e.path != f.sample && p.filename() != wanted && p.stem() != wanted) continue;
      const Eigen::MatrixXd patch = e.values.cast<double>();
      const auto trace = attention_trace(ck.spec, ck.params.cast<double>(), patch);
      const auto files = export_attention(trace, patch, layout.attention_dir(), p.stem().string());
      out << e.path << " (" << split_name(split) << ", " << ClassTable::name(e.class_index) << ")\n";
      for (const auto& file : files) out << file.string() << '\n';
      return kExitOk;
    }
  }
  throw Error(Errc::UnknownSample, "no cached sample named " + f.sample);
}

int cmd_synth(const RunConfig& cfg, const Flags& f, std::ostream& out) {
  SyntheticSpec spec;
  spec.classes = f.classes;
  const int n = write_synth_corpus(require_root(cfg), spec, f.per_class, cfg.seed);
  out << "wrote " << n << " files to " << cfg.dataset_root.string() << '\n';
  return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, RunConfig cfg) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::BadFormat, std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "config", {"dataset_root", "work_dir", "aliases", "seed", "jobs", "dsp", "train", "model"});
  take_path(j, "dataset_root", cfg.dataset_root);
  take_path(j, "work_dir", cfg.work_dir);
  take_path(j, "aliases", cfg.aliases);
  take(j, "seed", cfg.seed);
  take(j, "jobs", cfg.jobs);
  if (j.contains("dsp")) {
    const json& d = j["dsp"];
    reject_unknown(d, "dsp", {"sample_rate", "window", "hop", "n_mels", "fmin", "fmax", "onset_threshold", "frames"});
    take(d, "sample_rate", cfg.dsp.sample_rate);
    take(d, "window", cfg.dsp.window);
    take(d, "hop", cfg.dsp.hop);
    take(d, "n_mels", cfg.dsp.n_mels);
    take(d, "fmin", cfg.dsp.fmin);
    take(d, "fmax", cfg.dsp.fmax);
    take(d, "onset_threshold", cfg.dsp.onset_threshold);
    take(d, "frames", cfg.dsp.frames);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    reject_unknown(t, "train", {"learning_rate", "weight_decay", "batch_size", "beta1", "beta2", "eps",
                                "max_epochs", "patience"});
    take(t, "learning_rate", cfg.train.learning_rate);
    take(t, "weight_decay", cfg.train.weight_decay);
    take(t, "batch_size", cfg.train.batch_size);
    take(t, "beta1", cfg.train.beta1);
    take(t, "beta2", cfg.train.beta2);
    take(t, "eps", cfg.train.eps);
    take(t, "max_epochs", cfg.train.max_epochs);
    take(t, "patience", cfg.train.patience);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown(m, "model", {"kind", "heads"});
    std::string kind(kind_name(cfg.model.kind));
    take(m, "kind", kind);
    cfg.model.kind = parse_kind(kind);
    take(m, "heads", cfg.model.heads);
    if (cfg.model.kind == ModelKind::FreqFC) cfg.model.heads = 0;
  }
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::FileNotFound, "config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str(), std::move(base));
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Musical instrument recognition with frequency-axis self-attention", "timbre"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--root", f.root, "Corpus root (synth: output directory)");
  app.add_option("--work-dir", f.work_dir, "Manifest, cache, checkpoint and report directory");
  app.add_option("--model", f.model, "Model architecture")->check(CLI::IsMember({"attention", "fc"}));
  f.heads_opt = app.add_option("--heads", f.heads, "Attention heads")->check(CLI::PositiveNumber);
  f.seed_opt = app.add_option("--seed", f.seed, "Split and initialisation seed");
  f.epochs_opt = app.add_option("--epochs", f.epochs, "Maximum training epochs")->check(CLI::NonNegativeNumber);
  f.patience_opt = app.add_option("--patience", f.patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  f.jobs_opt = app.add_option("--jobs", f.jobs, "Preprocessing threads")->check(CLI::PositiveNumber);
  app.add_option("--aliases", f.aliases, "Extra instrument alias file");

  auto* scan = app.add_subcommand("scan", "List the corpus, write the split manifest, print class counts");
  auto* preprocess = app.add_subcommand("preprocess", "Extract and normalize log-mel patches into caches");
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes a checkpoint and a log");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; writes a JSON report and a confusion CSV");
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint file (default: work dir, by model)");
  eval->add_option("--split", f.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  auto* ablate = app.add_subcommand("ablate", "Train and test h=1, 8, 16 and the FC baseline");
  auto* attend = app.add_subcommand("attend", "Export attention weights for one cached sample");
  attend->add_option("--sample", f.sample, "Sample file name, stem or manifest path")->required();
  attend->add_option("--checkpoint", f.checkpoint, "Checkpoint file (default: work dir, by model)");
  auto* synth = app.add_subcommand("synth", "Write a synthetic tone corpus as WAV files under --root");
  synth->add_option("--classes", f.classes, "Number of classes")->check(CLI::Range(1, kNumClasses));
  synth->add_option("--per-class", f.per_class, "Clips per class")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = resolve(f);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*scan) return cmd_scan(cfg, out, err);
    if (*preprocess) return cmd_preprocess(cfg, out, err);
    if (*train_cmd) return cmd_train(cfg, out, err);
    if (*eval) return cmd_eval(cfg, f, out);
    if (*ablate) return cmd_ablate(cfg, out, err);
    if (*attend) return cmd_attend(cfg, f, out);
    if (*synth) return cmd_synth(cfg, f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == Errc::NonFiniteLoss ? kExitNumeric : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace timbre
