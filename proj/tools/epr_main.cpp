// Command-line surface for the rendering pipeline:
//   tokenize  MIDI -> octuple token dump
//   prepare   manifest -> windowed dataset with an 8:1:1 piece split
//   train     dataset -> checkpoints + epoch log
//   render    score + pianist + checkpoint -> performance MIDI
//   eval      checkpoint + dataset test split -> report + KDE curves
//   stats     labelled MIDI set -> per-group KDE files + overlap matrix

#include <CLI11.hpp>

#include "epr/dataset.hpp"
#include "epr/eval.hpp"
#include "epr/training.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace epr;

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

// Input paths resolve against EPR_DATA_ROOT when not found as given.
std::string resolve_input(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* root = std::getenv("EPR_DATA_ROOT")) {
    fs::path joined = fs::path(root) / path;
    if (fs::exists(joined)) return joined.string();
  }
  return path;
}

// Every command records what it wrote under the run directory.
struct RunDir {
  fs::path dir;
  std::vector<std::string> produced;

  explicit RunDir(const std::string& path) : dir(path) {
    fs::create_directories(dir);
  }
  std::string file(const std::string& name) {
    produced.push_back(name);
    return (dir / name).string();
  }
  void finish() {
    std::string text;
    for (const auto& name : produced) text += name + "\n";
    write_file((dir / "files.txt").string(), text);
  }
};

MidiDocument read_midi_file(const std::string& path) {
  MidiDocument doc;
  try {
    doc = read_midi(read_file(resolve_input(path)));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  if (doc.resolution != vocab::kResolution)
    doc = rescale_resolution(doc, vocab::kResolution);
  return doc;
}

// Flat key=value overrides shared by train/render/eval; '#' comments.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  std::ifstream in(resolve_input(path));
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_overrides(const std::map<std::string, std::string>& kv,
                     ModelConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : kv) {
    auto i = [&] { return std::stoi(value); };
    auto d = [&] { return std::stod(value); };
    if (key == "num_layers") model.num_layers = i();
    else if (key == "num_heads") model.num_heads = i();
    else if (key == "hidden_dim") model.hidden_dim = i();
    else if (key == "ff_dim") model.ff_dim = i();
    else if (key == "window") model.window = i();
    else if (key == "positional_encoding") model.positional_encoding = i();
    else if (key == "batch_size") train.batch_size = i();
    else if (key == "max_epochs") train.max_epochs = i();
    else if (key == "patience") train.patience = i();
    else if (key == "learning_rate") {
      train.learning_rate = d();
      train.schedule.base_lr = d();
    } else if (key == "weight_decay") train.weight_decay = d();
    else if (key == "t0") train.schedule.t0 = i();
    else if (key == "t_mult") train.schedule.t_mult = i();
    else if (key == "eta_min") train.schedule.eta_min = d();
    else if (key == "gradnorm_alpha") train.gradnorm_alpha = d();
    else if (key == "gradnorm_lr") train.gradnorm_lr = d();
    else if (key == "seed") {
      train.seed = std::stoull(value);
      model.seed = train.seed;
    } else
      throw std::runtime_error("unknown config key: " + key);
  }
}

int cmd_tokenize(const std::string& midi_path, const std::string& out_path) {
  TokenSequence seq = tokenize(read_midi_file(midi_path));
  write_file(out_path, dump_tokens(seq));
  std::cout << seq.length() << " notes\n";
  return 0;
}

int cmd_prepare(const std::string& manifest_path, const std::string& out_dir,
                uint64_t seed, int window) {
  std::ifstream in(resolve_input(manifest_path));
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path);
  std::stringstream text;
  text << in.rdbuf();
  std::vector<ManifestEntry> entries = parse_manifest(text.str());
  assign_splits(entries, seed);

  // Pianist vocabulary in order of first appearance.
  std::vector<std::string> pianists;
  for (const auto& e : entries)
    if (std::find(pianists.begin(), pianists.end(), e.pianist) ==
        pianists.end())
      pianists.push_back(e.pianist);

  std::map<std::string, std::vector<TrainExample>> splits;
  std::vector<std::string> failures;
  std::string split_lines;
  for (const auto& entry : entries) {
    split_lines += entry.performance_path + "\t" + entry.piece + "\t" +
                   entry.split + "\n";
    try {
      DocumentPair pair;
      pair.performance = read_midi_file(entry.performance_path);
      pair.score = scale_score_to_performance(
          read_midi_file(entry.score_path), pair.performance);
      int index = int(std::find(pianists.begin(), pianists.end(),
                                entry.pianist) -
                      pianists.begin());
      PianistId pianist{index, entry.pianist};
      for (const DocumentPair& copy : augment(pair)) {
        AlignedPair aligned =
            align(tokenize(copy.performance), tokenize(copy.score), pianist);
        for (ModelIO& io : make_windows(aligned, window))
          splits[entry.split].push_back({std::move(io), pianist});
      }
    } catch (const std::exception& e) {
      failures.push_back(entry.performance_path + ": " + e.what());
    }
  }

  RunDir run(out_dir);
  for (const char* split : {"train", "val", "test"})
    write_examples(run.file(std::string(split) + ".bin"), splits[split]);
  DatasetMeta meta;
  meta.pianists = pianists;
  meta.seed = seed;
  meta.window = window;
  write_dataset_meta(out_dir, meta);
  run.produced.push_back("meta.json");
  write_file(run.file("splits.txt"), split_lines);
  run.finish();

  std::cout << "pianists " << pianists.size() << ", windows train "
            << splits["train"].size() << " / val " << splits["val"].size()
            << " / test " << splits["test"].size() << "\n";
  for (const auto& f : failures) std::cerr << "failed: " << f << "\n";
  return failures.empty() ? 0 : 1;
}

int cmd_train(const std::string& dataset_dir, const std::string& out_dir,
              const std::map<std::string, std::string>& overrides,
              const std::string& resume_path) {
  DatasetMeta meta = read_dataset_meta(resolve_input(dataset_dir));
  ModelConfig model;
  model.num_pianists = int(meta.pianists.size());
  model.window = meta.window;
  TrainConfig train;
  train.seed = meta.seed;
  model.seed = meta.seed;
  apply_overrides(overrides, model, train);

  fs::path data(resolve_input(dataset_dir));
  auto train_set = read_examples((data / "train.bin").string(), meta.pianists);
  auto val_set = read_examples((data / "val.bin").string(), meta.pianists);

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resolve_input(resume_path));
    resume_ptr = &resume;
  }
  RunDir run(out_dir);
  FitResult result =
      fit(model, train, train_set, val_set, meta.pianists, out_dir, resume_ptr);
  run.produced = {"best.ckpt", "last.ckpt", "train_log.txt"};
  run.finish();
  std::cout << "stopped at epoch " << result.stopped_epoch
            << ", best validation loss "
            << result.best.best_validation_loss << "\n";
  return 0;
}

int cmd_render(const std::string& score_path, const std::string& pianist_label,
               const std::string& ckpt_path, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(resolve_input(ckpt_path));
  auto& names = ckpt.pianist_names;
  auto it = std::find(names.begin(), names.end(), pianist_label);
  if (it == names.end()) {
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw std::runtime_error("unknown pianist \"" + pianist_label +
                             "\" (known: " + known + ")");
  }
  PianistId pianist{int(it - names.begin()), pianist_label};

  TokenSequence score = tokenize(read_midi_file(score_path));
  if (score.tokens.empty()) throw std::runtime_error("score has no notes");
  AlignedPair pair{score, score, pianist};
  int window = ckpt.params.config.window;
  std::vector<ModelIO> windows = make_windows(pair, window);

  // Windows re-join by continuing the cumulative onset: each chunk is
  // anchored at the previous chunk's last onset plus the score's
  // cross-boundary IOI.
  TokenSequence rendered;
  int64_t prev_onset = -1;
  for (size_t w = 0; w < windows.size(); ++w) {
    Predictions<float> pred = forward(ckpt.params, windows[w], pianist);
    size_t count = size_t(windows[w].mask_sum());
    TokenSequence chunk;
    for (size_t i = 0; i < count; ++i)
      chunk.tokens.push_back(score.tokens[w * window + i]);
    std::vector<double> v(count), dd(count), ioi(count);
    for (size_t i = 0; i < count; ++i) {
      v[i] = pred.velocity.data()[i];
      dd[i] = pred.dd.data()[i];
      ioi[i] = pred.ioi.data()[i];
    }
    int64_t first = onset_time(chunk.tokens.front().bar_tok,
                               chunk.tokens.front().position_tok);
    int64_t anchor;
    if (w == 0) {
      anchor = first;
    } else {
      const OctupleToken& boundary = score.tokens[w * window - 1];
      anchor = prev_onset +
               (first - onset_time(boundary.bar_tok, boundary.position_tok));
    }
    TokenSequence out = reconstruct_performance(chunk, v, dd, ioi, anchor);
    prev_onset = onset_time(out.tokens.back().bar_tok,
                            out.tokens.back().position_tok);
    for (auto& t : out.tokens) rendered.tokens.push_back(t);
  }

  write_file(out_path, write_midi(detokenize(rendered)));
  std::cout << rendered.length() << " notes\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(resolve_input(ckpt_path));
  fs::path data(resolve_input(dataset_dir));
  DatasetMeta meta = read_dataset_meta(data.string());
  auto test_set = read_examples((data / "test.bin").string(), meta.pianists);
  if (test_set.empty()) throw std::runtime_error("empty test split");

  EvalReport report = evaluate(ckpt.params, test_set);
  std::vector<double> target_vel, pred_vel;
  for (const auto& ex : test_set) {
    Predictions<float> pred = forward(ckpt.params, ex.io, ex.pianist);
    for (size_t i = 0; i < ex.io.window(); ++i) {
      if (!ex.io.mask[i]) continue;
      target_vel.push_back(ex.io.targets[i][0] * 2 + 1);
      pred_vel.push_back(double(pred.velocity.data()[i]) * 2 + 1);
    }
  }

  RunDir run(out_dir);
  write_file(run.file("report.txt"), report.to_text());
  write_file(run.file("report.tsv"), report.to_records());
  KdeCurve target_kde = velocity_kde(target_vel, "target");
  KdeCurve pred_kde = velocity_kde(pred_vel, "predicted");
  write_file(run.file("kde_target.txt"),
             curve_to_text(target_kde.grid, target_kde.density));
  write_file(run.file("kde_predicted.txt"),
             curve_to_text(pred_kde.grid, pred_kde.density));
  char overlap[64];
  std::snprintf(overlap, sizeof(overlap), "%.6g\n",
                distribution_overlap(target_kde, pred_kde));
  write_file(run.file("overlap.txt"), overlap);
  run.finish();
  std::cout << report.to_text();
  return 0;
}

int cmd_stats(const std::vector<std::string>& groups,
              const std::string& out_dir) {
  // Each argument is label=path; velocities pool per label.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<double>> velocities;
  for (const auto& spec : groups) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("stats arguments must be label=midi_path, got " +
                               spec);
    std::string label = spec.substr(0, eq);
    if (velocities.find(label) == velocities.end()) labels.push_back(label);
    MidiDocument doc = read_midi_file(spec.substr(eq + 1));
    for (const auto& note : doc.notes)
      velocities[label].push_back(double(note.velocity));
  }
  if (labels.empty()) throw std::runtime_error("no input groups");

  RunDir run(out_dir);
  std::vector<KdeCurve> curves;
  for (const auto& label : labels) {
    curves.push_back(velocity_kde(velocities[label], label));
    write_file(run.file("kde_" + label + ".txt"),
               curve_to_text(curves.back().grid, curves.back().density));
  }
  std::string matrix = "group";
  for (const auto& label : labels) matrix += "\t" + label;
  matrix += "\n";
  for (size_t i = 0; i < curves.size(); ++i) {
    matrix += labels[i];
    for (size_t j = 0; j < curves.size(); ++j) {
      char cell[32];
      std::snprintf(cell, sizeof(cell), "\t%.6g",
                    distribution_overlap(curves[i], curves[j]));
      matrix += cell;
    }
    matrix += "\n";
  }
  write_file(run.file("overlap.tsv"), matrix);
  run.finish();
  std::cout << matrix;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"expressive piano performance rendering toolkit"};
  app.require_subcommand(1);

  std::string config_path, out, input, manifest, checkpoint, pianist, dataset;
  std::string resume;
  uint64_t seed = 0;
  bool seed_given = false;
  int window = kWindowSize;
  std::vector<std::string> groups;

  auto* tok = app.add_subcommand("tokenize", "dump octuple tokens for a MIDI");
  tok->add_option("midi", input, "input MIDI file")->required();
  tok->add_option("--out", out, "token dump path")->required();

  auto* prep = app.add_subcommand("prepare", "build a windowed dataset");
  prep->add_option("manifest", manifest,
                   "tab-separated performance/score/pianist manifest")
      ->required();
  prep->add_option("--out", out, "dataset directory")->required();
  prep->add_option("--seed", seed, "split seed");
  prep->add_option("--window", window, "window length");

  auto* train = app.add_subcommand("train", "train from a prepared dataset");
  train->add_option("dataset", dataset, "dataset directory")->required();
  train->add_option("--out", out, "run directory")->required();
  train->add_option("--config", config_path, "key=value override file");
  train->add_option("--resume", resume, "checkpoint to continue from");
  auto* train_seed = train->add_option("--seed", seed, "training seed");

  auto* render = app.add_subcommand("render", "render a score as a pianist");
  render->add_option("score", input, "score MIDI")->required();
  render->add_option("--pianist", pianist, "pianist label")->required();
  render->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  render->add_option("--out", out, "output MIDI path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate on the test split");
  ev->add_option("dataset", dataset, "dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  ev->add_option("--out", out, "report directory")->required();

  auto* stats = app.add_subcommand("stats", "velocity KDE per labelled group");
  stats->add_option("groups", groups, "label=midi_path entries")->required();
  stats->add_option("--out", out, "report directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (tok->parsed()) return cmd_tokenize(input, out);
    if (prep->parsed()) return cmd_prepare(manifest, out, seed, window);
    if (train->parsed()) {
      auto overrides = parse_config_file(config_path);
      seed_given = train_seed->count() > 0;
      if (seed_given) overrides["seed"] = std::to_string(seed);
      return cmd_train(dataset, out, overrides, resume);
    }
    if (render->parsed()) return cmd_render(input, pianist, checkpoint, out);
    if (ev->parsed()) return cmd_eval(checkpoint, dataset, out);
    if (stats->parsed()) return cmd_stats(groups, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
