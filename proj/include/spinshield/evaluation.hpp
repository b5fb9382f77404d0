#pragma once

// Robustness evaluation: AUC under fixed attacks, notch sweep, adaptive
// white-box modulation attack and feature export. Inference always uses the
// clean single-stream path.

#include "spinshield/attacks.hpp"
#include "spinshield/models.hpp"
#include "spinshield/stats.hpp"
#include "spinshield/synthdata.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace spinshield::eval {

/// Worker count: SPINSHIELD_THREADS if set, else hardware concurrency.
int worker_count();

/// Runs fn(i) for i in [0, n) over contiguous chunks; results must go to
/// per-index slots so the outcome is independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct AttackEntry {
  std::string name;
  attacks::AttackKind kind = attacks::AttackKind::Identity;
  /// When set, every clip gets this exact spec instead of a sampled one.
  std::optional<attacks::AttackSpec> fixed;
};

/// identity, the four sampled attacks, and a forced band over the shortcut bin.
std::vector<AttackEntry> default_suite(int shortcut_bin, double tukey_alpha = 0.5);

struct AttackResult {
  std::string name;
  attacks::AttackKind kind = attacks::AttackKind::Identity;
  bool fixed = false;
  std::vector<double> auc_per_seed;
  stats::MeanStd auc;
  std::vector<std::vector<attacks::AttackSpec>> specs;  // [seed][clip]
  std::vector<std::vector<double>> scores;              // [seed][clip]
};

struct EvalReport {
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  std::vector<std::size_t> clip_ids;
  std::vector<int> labels;
  std::vector<double> clean_scores;
  double clean_auc = 0;
  std::vector<AttackResult> results;

  const AttackResult& result(const std::string& name) const;
};

/// Per-clip spec seed for evaluation seed s and clip id c.
std::uint64_t clip_attack_seed(std::uint64_t seed, std::size_t clip_id);

EvalReport evaluate_under_attacks(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test,
                                  const std::vector<AttackEntry>& suite, const std::vector<std::uint64_t>& seeds,
                                  const nlohmann::json& config = {}, const attacks::AttackDefaults& defaults = {});

/// Re-applies the specs stored in `stored` and rescores; used to check that a
/// report regenerates from its own provenance.
EvalReport replay_report(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test,
                         const EvalReport& stored);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

struct SweepRow {
  std::optional<int> bin;  // empty for the no-suppression row
  double omega = 0;
  double auc = 0;
};

/// Full-suppression notch at every bin in [1, floor(T/2) - 1], preceded by the
/// clean row.
std::vector<SweepRow> notch_sweep(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test);
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
/// Largest AUC decrease relative to the clean row.
double max_sweep_drop(const std::vector<SweepRow>& rows);

struct AdaptiveConfig {
  int steps = 50;
  double budget = std::log(2.0);
  /// Per-step size on the log-amplitude field; 0 picks 2.5 * budget / steps.
  double step_size = 0;
};

struct AdaptiveResult {
  PatchSignalClip clip;
  Eigen::MatrixXd field;  // applied log-amplitude modulation
  double score = 0;       // p(fake) after the attack
};

/// Sign-gradient ascent on a per-clip log-amplitude field u with
/// A-hat = A * exp(clamp(u, +-budget)), pushing the detector toward the wrong
/// label. Phase is fixed; the strongest iterate is returned.
AdaptiveResult adaptive_attack(const models::ModelBundle& model, const PatchSignalClip& clip, int label,
                               const AdaptiveConfig& cfg = {});
/// Batched form; clips are independent so the result matches per-clip calls.
std::vector<AdaptiveResult> adaptive_attack_batch(const models::ModelBundle& model,
                                                  const std::vector<const synth::LabeledClip*>& clips,
                                                  const AdaptiveConfig& cfg = {});

struct FeatureDump {
  std::vector<std::size_t> clip_ids;
  std::vector<int> labels;
  Eigen::MatrixXd clean;  // clips x D
  Eigen::MatrixXd env;
};

/// Features for the clean view and an environment view of every clip. The
/// environment view is the checkpoint's generator output unless env_attack is
/// given, in which case that attack is applied per clip (sampled from
/// env_seed when not fixed).
FeatureDump dump_features(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& clips,
                          const std::optional<AttackEntry>& env_attack = std::nullopt, std::uint64_t env_seed = 0);
/// Rows clip_id,view,y,h0..h(D-1); two rows per clip.
void write_features_csv(std::ostream& out, const FeatureDump& dump);
/// Mean over clips and dimensions of |h_clean - h_env|.
double mean_view_gap(const FeatureDump& dump);

}  // namespace spinshield::eval
