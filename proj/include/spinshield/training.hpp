#pragma once

// Alternating detector / generator training.

#include "spinshield/models.hpp"
#include "spinshield/objectives.hpp"
#include "spinshield/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace spinshield::training {

enum class TrainMode { Baseline, SpinShield, NaiveAug };
std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
  TrainMode mode = TrainMode::SpinShield;
  int epochs = 30;
  int batch_size = 32;
  AdamConfig optimizer;
  AdamConfig generator_optimizer;
  int detector_steps_per_generator_step = 1;
  objectives::LossWeights weights;
  double alpha = 0.6;
  double delta = 1e-8;
  /// Log-amplitude noise std for naive_aug.
  double naive_sigma = 0.6;
  models::ModelDims dims;
  std::uint64_t seed = 0;

  void validate() const;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  /// Descends the gradient; pass ascend to climb it instead.
  void step(const std::vector<ad::Parameter*>& params, bool ascend = false);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<ad::Matrix> m_, v_;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Stratified 80/10/10 split, deterministic in seed.
Split split_dataset(const std::vector<synth::LabeledClip>& data, std::uint64_t seed);

struct LogRow {
  std::int64_t step = 0;
  std::string phase;  // "det" or "gen"
  std::optional<double> L_det, L_sym, L_blind, L_gen, mmd, mask_reg, total;
};

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log);

struct TrainResult {
  models::ModelBundle model;
  std::vector<LogRow> log;
  int best_epoch = -1;
  double best_val_auc = 0;
  std::vector<double> val_auc_per_epoch;
};

TrainResult train(const TrainConfig& config, const std::vector<synth::LabeledClip>& data, const Split& split);

/// Environment views used by a detector step, without gradient. Empty for
/// baseline.
ad::Matrix environment_views(const TrainConfig& config, models::ModelBundle& model, const models::SpectralBatch& batch,
                             std::uint64_t noise_seed);

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace spinshield::training
