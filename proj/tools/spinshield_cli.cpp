// spinshield command-line harness.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.

#include "spinshield/clip_io.hpp"
#include "spinshield/evaluation.hpp"
#include "spinshield/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace spinshield;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct DataFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFailure("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataFailure(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataFailure("cannot open " + path.string() + " for writing");
  out << text;
}

template <class Fn>
void write_stream(const fs::path& path, Fn fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataFailure("cannot open " + path.string() + " for writing");
  fn(out);
}

bool is_csv(const fs::path& p) { return p.extension() == ".csv"; }

PatchSignalClip read_signal(const fs::path& p) { return is_csv(p) ? io::read_clip_csv(p) : io::read_clip_binary(p); }
void write_signal(const fs::path& p, const PatchSignalClip& c) {
  if (is_csv(p))
    io::write_clip_csv(p, c);
  else
    io::write_clip_binary(p, c);
}

models::Checkpoint open_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw DataFailure("checkpoint not found: " + path.string());
  return models::load_checkpoint(path);
}

// Clips of the requested split. The split seed comes from the checkpoint
// metadata so evaluation sees the same held-out clips training did.
struct Selection {
  std::vector<synth::LabeledClip> data;
  std::vector<const synth::LabeledClip*> clips;
};

Selection select_split(const fs::path& manifest, const json& metadata, const std::string& which) {
  Selection s;
  s.data = synth::load_manifest_clips(manifest);
  std::vector<std::size_t> idx;
  if (which == "all") {
    for (std::size_t i = 0; i < s.data.size(); ++i) idx.push_back(i);
  } else {
    const auto seed = metadata.value("split_seed", std::uint64_t{0});
    auto split = training::split_dataset(s.data, seed);
    idx = which == "train" ? split.train : which == "val" ? split.val : split.test;
  }
  for (auto i : idx) s.clips.push_back(&s.data[i]);
  return s;
}

std::vector<eval::AttackEntry> read_suite(const fs::path& path) {
  std::vector<eval::AttackEntry> suite;
  for (const auto& e : read_json(path)) {
    eval::AttackEntry a;
    a.name = e.at("name").get<std::string>();
    a.kind = attacks::attack_kind_from_string(e.at("kind").get<std::string>());
    if (e.contains("fixed")) a.fixed = e.at("fixed").get<attacks::AttackSpec>();
    suite.push_back(std::move(a));
  }
  return suite;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral shortcut robustness harness"};
  app.require_subcommand(1);

  std::string config_path, out_path, manifest_path, ckpt_path, log_path, suite_path, replay_path, attack_path,
      in_path, format = "binary", split = "test", env_attack;
  std::uint64_t split_seed = 0, env_seed = 0;
  int n_seeds = 5, steps = 50;
  double budget = std::log(2.0);
  std::size_t limit = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and write its manifest");
  gen->add_option("--config", config_path, "DatasetSpec JSON (defaults when omitted)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Manifest path")->required();
  gen->add_option("--format", format, "Clip storage: csv or binary")->check(CLI::IsMember({"csv", "binary"}));

  auto* tr = app.add_subcommand("train", "Train a detector and write a checkpoint");
  tr->add_option("--config", config_path, "TrainConfig JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  tr->add_option("--out", out_path, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Loss log CSV");
  tr->add_option("--split-seed", split_seed, "Seed of the train/val/test split");

  auto* ev = app.add_subcommand("eval", "AUC under amplitude attacks");
  ev->add_option("--checkpoint", ckpt_path)->required();
  ev->add_option("--manifest", manifest_path)->required();
  ev->add_option("--attacks", suite_path, "Attack suite JSON; default suite when omitted");
  ev->add_option("--seeds", n_seeds, "Number of attack seeds")->check(CLI::PositiveNumber);
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  ev->add_option("--replay", replay_path, "Regenerate this report from its stored specs");
  ev->add_option("--out", out_path, "Report JSON")->required();

  auto* sw = app.add_subcommand("sweep", "Full-suppression notch at every bin");
  sw->add_option("--checkpoint", ckpt_path)->required();
  sw->add_option("--manifest", manifest_path)->required();
  sw->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  sw->add_option("--out", out_path, "CSV path")->required();

  auto* ad = app.add_subcommand("adaptive", "White-box amplitude modulation attack");
  ad->add_option("--checkpoint", ckpt_path)->required();
  ad->add_option("--manifest", manifest_path)->required();
  ad->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  ad->add_option("--steps", steps)->check(CLI::NonNegativeNumber);
  ad->add_option("--budget", budget, "Bound on |log gain|")->check(CLI::NonNegativeNumber);
  ad->add_option("--limit", limit, "Attack at most this many clips (0 = all)");
  ad->add_option("--out", out_path, "Report JSON")->required();

  auto* at = app.add_subcommand("attack", "Apply one AttackSpec to a signal file");
  at->add_option("--spec", attack_path, "AttackSpec JSON")->required();
  at->add_option("--in", in_path, "Signal file (.csv or binary)")->required();
  at->add_option("--out", out_path, "Output signal file")->required();

  auto* ft = app.add_subcommand("features", "Dump clean and environment-view encoder features");
  ft->add_option("--checkpoint", ckpt_path)->required();
  ft->add_option("--manifest", manifest_path)->required();
  ft->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  ft->add_option("--env-attack", env_attack, "Attack kind for the env view instead of the generator");
  ft->add_option("--env-seed", env_seed);
  ft->add_option("--out", out_path, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      synth::DatasetSpec spec;
      if (!config_path.empty()) spec = read_json(config_path).get<synth::DatasetSpec>();
      spec.validate();
      const auto data = synth::generate_dataset(spec);
      const fs::path manifest = out_path;
      if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
      const auto fmt = synth::format_from_string(format);
      fs::path data_file = manifest.stem().string() + (fmt == synth::ClipFormat::Csv ? ".clips.csv" : ".clips.bin");
      synth::save_clips(manifest.parent_path() / data_file, data, fmt);
      synth::Manifest m{spec, fmt, data_file, {}};
      for (const auto& c : data) m.labels.push_back(c.label);
      synth::write_manifest(manifest, m);
      std::cout << "wrote " << data.size() << " clips to " << (manifest.parent_path() / data_file).string() << "\n";
    } else if (tr->parsed()) {
      const auto config = read_json(config_path).get<training::TrainConfig>();
      config.validate();
      const auto data = synth::load_manifest_clips(manifest_path);
      const auto sp = training::split_dataset(data, split_seed);
      auto result = training::train(config, data, sp);
      const json meta = {{"train_config", config},
                         {"split_seed", split_seed},
                         {"dataset", synth::read_manifest(manifest_path).spec},
                         {"best_epoch", result.best_epoch},
                         {"best_val_auc", result.best_val_auc}};
      if (fs::path(out_path).has_parent_path()) fs::create_directories(fs::path(out_path).parent_path());
      models::save_checkpoint(out_path, result.model, meta);
      if (!log_path.empty()) write_stream(log_path, [&](std::ostream& o) { training::write_log_csv(o, result.log); });
      std::cout << "best epoch " << result.best_epoch << " val auc " << result.best_val_auc << "\n";
    } else if (ev->parsed()) {
      const auto ck = open_checkpoint(ckpt_path);
      const auto sel = select_split(manifest_path, ck.metadata, split);
      eval::EvalReport report;
      if (!replay_path.empty()) {
        report = eval::replay_report(ck.model, sel.clips, read_json(replay_path).get<eval::EvalReport>());
      } else {
        const auto spec = synth::read_manifest(manifest_path).spec;
        const auto suite = suite_path.empty() ? eval::default_suite(spec.shortcut_bin) : read_suite(suite_path);
        std::vector<std::uint64_t> seeds;
        for (int s = 0; s < n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
        const json provenance = {{"checkpoint", ckpt_path}, {"manifest", manifest_path}, {"split", split},
                                 {"checkpoint_metadata", ck.metadata}};
        report = eval::evaluate_under_attacks(ck.model, sel.clips, suite, seeds, provenance);
      }
      write_text(out_path, json(report).dump(1));
      std::cout << "clean auc " << report.clean_auc << "\n";
      for (const auto& r : report.results) std::cout << r.name << " " << r.auc.mean << " +- " << r.auc.std << "\n";
    } else if (sw->parsed()) {
      const auto ck = open_checkpoint(ckpt_path);
      const auto sel = select_split(manifest_path, ck.metadata, split);
      const auto rows = eval::notch_sweep(ck.model, sel.clips);
      write_stream(out_path, [&](std::ostream& o) { eval::write_sweep_csv(o, rows); });
      std::cout << "max drop " << eval::max_sweep_drop(rows) << "\n";
    } else if (ad->parsed()) {
      const auto ck = open_checkpoint(ckpt_path);
      auto sel = select_split(manifest_path, ck.metadata, split);
      if (limit > 0 && sel.clips.size() > limit) sel.clips.resize(limit);
      eval::AdaptiveConfig cfg;
      cfg.steps = steps;
      cfg.budget = budget;
      const auto res = eval::adaptive_attack_batch(ck.model, sel.clips, cfg);
      std::vector<double> before = models::score_clips(ck.model, [&] {
        std::vector<const PatchSignalClip*> v;
        for (auto* c : sel.clips) v.push_back(&c->clip);
        return v;
      }());
      std::vector<double> after;
      std::vector<int> labels;
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < res.size(); ++i) {
        after.push_back(res[i].score);
        labels.push_back(sel.clips[i]->label);
        ids.push_back(sel.clips[i]->index);
      }
      const double auc_before = stats::compute_auc(before, labels);
      const double auc_after = stats::compute_auc(after, labels);
      const json out = {{"checkpoint", ckpt_path}, {"manifest", manifest_path}, {"split", split},
                        {"steps", steps},          {"budget", budget},          {"clip_ids", ids},
                        {"labels", labels},        {"clean_scores", before},    {"attacked_scores", after},
                        {"clean_auc", auc_before}, {"attacked_auc", auc_after}};
      write_text(out_path, out.dump(1));
      std::cout << "clean auc " << auc_before << " attacked auc " << auc_after << "\n";
    } else if (at->parsed()) {
      const auto spec = read_json(attack_path).get<attacks::AttackSpec>();
      write_signal(out_path, attacks::apply_attack(read_signal(in_path), spec));
    } else if (ft->parsed()) {
      const auto ck = open_checkpoint(ckpt_path);
      const auto sel = select_split(manifest_path, ck.metadata, split);
      std::optional<eval::AttackEntry> env;
      if (!env_attack.empty()) env = eval::AttackEntry{env_attack, attacks::attack_kind_from_string(env_attack), {}};
      const auto dump = eval::dump_features(ck.model, sel.clips, env, env_seed);
      write_stream(out_path, [&](std::ostream& o) { eval::write_features_csv(o, dump); });
      std::cout << "mean view gap " << eval::mean_view_gap(dump) << "\n";
    }
  } catch (const training::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ad::AutodiffError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
