// Copyright 2026 The MITVG Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Batch entry point: synth, train, eval, generate, gradcheck.
//
// Exit codes: 0 success, 2 usage/config/data/format error, 3 numerical
// failure (non-finite loss, gradient check above threshold).

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mitvg.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

constexpr double kGradCheckThreshold = 1e-5;

std::string version_string() {
  const std::string describe = MITVG_GIT_DESCRIBE;
  return describe == "unknown" ? std::string("v") + MITVG_VERSION : describe;
}

// Files inside a data directory.
struct DataPaths {
  fs::path dir;
  std::string dataset() const { return (dir / "dataset.jsonl").string(); }
  std::string features() const { return (dir / "features.bin").string(); }
  std::string vocab() const { return (dir / "vocab.txt").string(); }
};

struct LoadedData {
  mitvg::FeatureStore features;
  std::vector<mitvg::DialogueExample> examples;
};

LoadedData load_data(const DataPaths& p, const mitvg::ModelConfig& cfg) {
  LoadedData d;
  d.features = mitvg::load_features(p.features());
  d.examples = mitvg::load_dataset(p.dataset(), mitvg::TruncationLimits::from(cfg), &d.features);
  if (d.examples.empty()) throw mitvg::DataError(p.dataset() + ": no dialogues");
  return d;
}

mitvg::ModelConfig load_config(const std::string& path) {
  try {
    return mitvg::parse_config(mitvg::detail::read_file(path));
  } catch (const mitvg::ConfigError& e) {
    throw mitvg::ConfigError(path + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw mitvg::DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  }
}

// Vocabulary saved next to a checkpoint, unless given explicitly.
mitvg::Vocabulary vocab_for(const std::string& ckpt, const std::string& explicit_path) {
  const std::string path =
      explicit_path.empty() ? (fs::path(ckpt).parent_path() / "vocab.txt").string() : explicit_path;
  return mitvg::Vocabulary::load(path);
}

void write_manifest(const fs::path& path, const std::string& command, const mitvg::ModelConfig& cfg,
                    const json& inputs, const json& outputs) {
  json m;
  m["command"] = command;
  m["version"] = version_string();
  m["seed"] = cfg.seed;
  m["config"] = mitvg::config_to_json(cfg);
  m["inputs"] = inputs;
  m["outputs"] = outputs;
  mitvg::detail::write_file(path.string(), m.dump(2) + "\n");
}

// Template dispatch on the configured precision.
template <typename F>
int with_precision(const mitvg::ModelConfig& cfg, F&& body) {
  if (cfg.precision == mitvg::Precision::f64) return body(double{});
  return body(float{});
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::size_t dialogues = 0;
  std::size_t rounds = 10;
  std::uint64_t seed = 1;
  std::size_t feature_dim = 64;
  std::uint64_t first_id = 1;
  std::size_t min_count = 5;
};

int cmd_synth(const SynthArgs& a, const std::string& command) {
  if (a.dialogues == 0) throw mitvg::ConfigError("--dialogues must be >= 1");
  if (a.rounds == 0) throw mitvg::ConfigError("--rounds must be >= 1");
  const DataPaths p{a.out};
  ensure_dir(p.dir);
  const auto split = mitvg::generate_synthetic(a.dialogues, a.rounds, a.seed, a.feature_dim, a.first_id);
  mitvg::save_dataset(p.dataset(), split.examples);
  mitvg::save_features(p.features(), split.features);
  mitvg::Vocabulary::build(mitvg::dialogue_texts(split.examples), a.min_count).save(p.vocab());

  mitvg::ModelConfig cfg = mitvg::ModelConfig::toy();
  cfg.seed = a.seed;
  cfg.feature_dim = a.feature_dim;
  cfg.vocab_min_count = a.min_count;
  write_manifest(p.dir / "manifest.json", command, cfg,
                 json{{"dialogues", a.dialogues}, {"rounds", a.rounds}, {"first_id", a.first_id}},
                 json{{"dataset", p.dataset()}, {"features", p.features()}, {"vocab", p.vocab()}});
  std::cout << "wrote " << split.examples.size() << " dialogues to " << p.dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  bool no_vg = false;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 100;
};

template <typename T>
int train_impl(const TrainArgs& a, const mitvg::ModelConfig& cfg, const std::string& command) {
  const DataPaths p{a.data};
  const LoadedData data = load_data(p, cfg);
  const auto vocab = mitvg::Vocabulary::build(mitvg::dialogue_texts(data.examples), cfg.vocab_min_count);
  const auto encoded = mitvg::encode_dataset_ids(data.examples, vocab);

  const fs::path out(a.out);
  ensure_dir(out);
  vocab.save((out / "vocab.txt").string());

  mitvg::MitvgModel<T> model(cfg, vocab.size());
  mitvg::Trainer<T> trainer(model, encoded, data.features);
  if (!a.resume.empty()) {
    const auto ck = mitvg::load_checkpoint(a.resume);
    if (ck.config.d_model != cfg.d_model) {
      throw mitvg::ConfigError("checkpoint d_model " + std::to_string(ck.config.d_model) + " != config d_model " +
                               std::to_string(cfg.d_model));
    }
    mitvg::apply_checkpoint(model, ck, &trainer.optimizer());
  }

  const std::string metrics_path = (out / "metrics.jsonl").string();
  std::string metrics;
  std::optional<mitvg::NumericError> failure;
  try {
    trainer.run(cfg.steps, [&](const mitvg::TrainRecord& r) {
      json line;
      line["step"] = r.step;
      line["loss"] = r.loss;
      line["lr"] = r.lr;
      metrics += line.dump() + "\n";
      if (a.log_every && (r.step % a.log_every == 0 || r.step == cfg.steps)) {
        std::cerr << "step " << r.step << " loss " << r.loss << " lr " << r.lr << "\n";
      }
    });
  } catch (const mitvg::NumericError& e) {
    failure = e;
  }
  // The log covers every completed step, including on failure.
  mitvg::detail::write_file(metrics_path, metrics);
  if (failure) throw *failure;

  const std::string ckpt_path = (out / "checkpoint.bin").string();
  mitvg::save_checkpoint(ckpt_path, mitvg::make_checkpoint(model, &trainer.optimizer()));
  json inputs{{"data", a.data}, {"config", a.config}};
  if (!a.resume.empty()) inputs["resume"] = a.resume;
  write_manifest(out / "manifest.json", command, cfg, inputs,
                 json{{"checkpoint", ckpt_path}, {"metrics", metrics_path}, {"vocab", (out / "vocab.txt").string()}});
  std::cout << "trained to step " << trainer.optimizer().steps() << ", checkpoint " << ckpt_path << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& a, const std::string& command) {
  mitvg::ModelConfig cfg = load_config(a.config);
  if (a.no_vg) cfg.use_vg = false;
  if (a.steps) cfg.steps = *a.steps;
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return with_precision(cfg, [&](auto tag) { return train_impl<decltype(tag)>(a, cfg, command); });
}

// ---------------------------------------------------------------------------
// eval / generate

struct ModelArgs {
  std::string data;
  std::string ckpt;
  std::string config;  // optional cross-check against the checkpoint
  std::string vocab;
  bool no_vg = false;
};

// Resolves the model config: the checkpoint's, or a given file whose
// shapes must then agree with the checkpoint.
mitvg::ModelConfig resolve_config(const ModelArgs& a, const mitvg::Checkpoint& ck) {
  mitvg::ModelConfig cfg = ck.config;
  if (!a.config.empty()) {
    cfg = load_config(a.config);
    if (cfg.d_model != ck.config.d_model) {
      throw mitvg::ConfigError("checkpoint d_model " + std::to_string(ck.config.d_model) + " != config d_model " +
                               std::to_string(cfg.d_model));
    }
  }
  if (a.no_vg) cfg.use_vg = false;
  return cfg;
}

template <typename T>
mitvg::MitvgModel<T> restore_model(const mitvg::ModelConfig& cfg, const mitvg::Checkpoint& ck,
                                   const mitvg::Vocabulary& vocab) {
  if (vocab.size() != ck.vocab_size) {
    throw mitvg::DataError("vocabulary has " + std::to_string(vocab.size()) + " tokens, checkpoint expects " +
                           std::to_string(ck.vocab_size));
  }
  mitvg::MitvgModel<T> model(cfg, vocab.size());
  mitvg::apply_checkpoint(model, ck);
  return model;
}

int cmd_eval(const ModelArgs& a, const std::string& out_dir, const std::string& command) {
  const auto ck = mitvg::load_checkpoint(a.ckpt);
  const auto cfg = resolve_config(a, ck);
  const auto vocab = vocab_for(a.ckpt, a.vocab);
  const LoadedData data = load_data(DataPaths{a.data}, cfg);
  const auto encoded = mitvg::encode_dataset_ids(data.examples, vocab);
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    const auto model = restore_model<T>(cfg, ck, vocab);
    const auto report = mitvg::evaluate(model, encoded, data.features, cfg.use_vg, mitvg::worker_threads());
    const std::string summary = report.summary_json().dump(2) + "\n";
    std::cout << summary;
    if (!out_dir.empty()) {
      const fs::path out(out_dir);
      ensure_dir(out);
      mitvg::detail::write_file((out / "report.json").string(), summary);
      mitvg::detail::write_file((out / "detail.jsonl").string(), report.detail_jsonl());
      write_manifest(out / "manifest.json", command, cfg, json{{"data", a.data}, {"checkpoint", a.ckpt}},
                     json{{"report", (out / "report.json").string()}, {"detail", (out / "detail.jsonl").string()}});
    }
    return kExitOk;
  });
}

int cmd_generate(const ModelArgs& a, std::uint64_t image_id, std::size_t round) {
  const auto ck = mitvg::load_checkpoint(a.ckpt);
  const auto cfg = resolve_config(a, ck);
  const auto vocab = vocab_for(a.ckpt, a.vocab);
  const LoadedData data = load_data(DataPaths{a.data}, cfg);
  const auto it = std::find_if(data.examples.begin(), data.examples.end(),
                               [&](const auto& ex) { return ex.image_id == image_id; });
  if (it == data.examples.end()) throw mitvg::DataError("no dialogue with image id " + std::to_string(image_id));
  if (round == 0 || round > it->rounds.size()) {
    throw mitvg::DataError("round " + std::to_string(round) + " outside dialogue of " +
                           std::to_string(it->rounds.size()) + " rounds");
  }
  const auto ex = mitvg::encode_dialogue_ids(*it, vocab);
  return with_precision(cfg, [&](auto tag) {
    using T = decltype(tag);
    const auto model = restore_model<T>(cfg, ck, vocab);
    const auto q = model.encode_dialogue(data.features.at(image_id), ex, round, cfg.use_vg);
    std::cout << vocab.decode(model.generate(q, cfg.max_answer_len)) << "\n";
    return kExitOk;
  });
}

// ---------------------------------------------------------------------------
// gradcheck

// Always runs in 64-bit; the configured precision only affects training.
int cmd_gradcheck(const std::string& config_path, std::size_t rounds) {
  mitvg::ModelConfig cfg = load_config(config_path);
  cfg.dropout = 0.0;
  const auto split = mitvg::generate_synthetic(1, rounds, cfg.seed, cfg.feature_dim);
  const auto vocab = mitvg::Vocabulary::build(mitvg::dialogue_texts(split.examples), 1);
  const auto ex = mitvg::encode_dialogue_ids(split.examples[0], vocab);
  mitvg::MitvgModel<double> model(cfg, vocab.size());
  const auto report = mitvg::model_grad_check(model, split.features.at(ex.image_id), ex, cfg.use_vg);
  json j;
  j["max_rel_error"] = report.max_rel_error;
  j["worst_param"] = report.worst_param;
  j["worst_index"] = report.worst_index;
  j["checked"] = report.checked;
  j["threshold"] = kGradCheckThreshold;
  std::cout << j.dump(2) << "\n";
  return report.max_rel_error < kGradCheckThreshold ? kExitOk : kExitNumeric;
}

std::string joined(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MITVG visual dialogue model: synthetic data, training, evaluation"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic dataset, feature file and vocabulary");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--dialogues", synth.dialogues, "number of dialogues")->required();
  s->add_option("--rounds", synth.rounds, "rounds per dialogue")->capture_default_str();
  s->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  s->add_option("--feature-dim", synth.feature_dim, "object feature width")->capture_default_str();
  s->add_option("--first-id", synth.first_id, "first image id")->capture_default_str();
  s->add_option("--min-count", synth.min_count, "vocabulary count threshold")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model and write checkpoint, metrics log and manifest");
  t->add_option("--data", train.data, "data directory")->required();
  t->add_option("--config", train.config, "config file")->required();
  t->add_option("--out", train.out, "output directory")->required();
  t->add_flag("--no-vg", train.no_vg, "disable visual grounding");
  t->add_option("--steps", train.steps, "override the configured step count");
  t->add_option("--seed", train.seed, "override the configured seed");
  t->add_option("--resume", train.resume, "checkpoint to continue from");
  t->add_option("--log-every", train.log_every, "stderr progress interval (0 = silent)")->capture_default_str();

  ModelArgs eval_args;
  std::string eval_out;
  auto* e = app.add_subcommand("eval", "rank candidate answers and print the report");
  e->add_option("--data", eval_args.data, "data directory")->required();
  e->add_option("--ckpt", eval_args.ckpt, "checkpoint file")->required();
  e->add_option("--config", eval_args.config, "config file to check against the checkpoint");
  e->add_option("--vocab", eval_args.vocab, "vocabulary (default: vocab.txt next to the checkpoint)");
  e->add_flag("--no-vg", eval_args.no_vg, "disable visual grounding");
  e->add_option("--out", eval_out, "directory for report.json, detail.jsonl and manifest.json");

  ModelArgs gen_args;
  std::uint64_t example = 0;
  std::size_t round = 0;
  auto* g = app.add_subcommand("generate", "greedily decode the answer to one question");
  g->add_option("--data", gen_args.data, "data directory")->required();
  g->add_option("--ckpt", gen_args.ckpt, "checkpoint file")->required();
  g->add_option("--example", example, "image id of the dialogue")->required();
  g->add_option("--round", round, "1-based round")->required();
  g->add_option("--config", gen_args.config, "config file to check against the checkpoint");
  g->add_option("--vocab", gen_args.vocab, "vocabulary (default: vocab.txt next to the checkpoint)");
  g->add_flag("--no-vg", gen_args.no_vg, "disable visual grounding");

  std::string gc_config;
  std::size_t gc_rounds = 2;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
  gc->add_option("--config", gc_config, "config file")->required();
  gc->add_option("--rounds", gc_rounds, "dialogue rounds in the probe example")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  const std::string command = joined(argc, argv);
  try {
    if (*s) return cmd_synth(synth, command);
    if (*t) return cmd_train(train, command);
    if (*e) return cmd_eval(eval_args, eval_out, command);
    if (*g) return cmd_generate(gen_args, example, round);
    if (*gc) return cmd_gradcheck(gc_config, gc_rounds);
  } catch (const mitvg::NumericError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const mitvg::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
