#pragma once

// Toy Siamese detector (encoder f, class head g, domain head q) and the
// spectral generator G. Weights are stored input-major so a batch of row
// vectors maps as X * W + b.

#include "spinshield/autodiff.hpp"
#include "spinshield/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace spinshield::models {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

struct ModelDims {
  int patch_count = 16;
  int frame_count = 16;
  int hidden = 64;
  int feature = 32;
  int domain_hidden = 16;
  int generator_hidden = 32;

  int input_width() const { return patch_count * frame_count; }
  int bin_count() const { return frame_count / 2 + 1; }
  bool operator==(const ModelDims&) const = default;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelBundle {
  ModelDims dims;
  double alpha = 0.6;
  double delta = 1e-8;

  Parameter enc_w1, enc_b1, enc_w2, enc_b2;
  Parameter head_w, head_b;
  Parameter dom_w1, dom_b1, dom_w2, dom_b2;
  Parameter gen_w1, gen_b1, gen_w2, gen_b2;

  std::vector<Parameter*> encoder_params();
  std::vector<Parameter*> head_params();
  std::vector<Parameter*> domain_params();
  std::vector<Parameter*> generator_params();
  std::vector<Parameter*> all_params();
  std::vector<const Parameter*> all_params() const;

  void zero_grad();
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases.
ModelBundle init_model(const ModelDims& dims, double alpha, std::uint64_t seed);

enum ParamGroup : unsigned {
  kEncoder = 1u,
  kHead = 2u,
  kDomain = 4u,
  kGenerator = 8u,
  kAllGroups = 15u,
};

/// Parameters placed on a tape. Groups outside `trainable` enter as constants,
/// so no gradient can reach them.
struct Bound {
  Var enc_w1, enc_b1, enc_w2, enc_b2;
  Var head_w, head_b;
  Var dom_w1, dom_b1, dom_w2, dom_b2;
  Var gen_w1, gen_b1, gen_w2, gen_b2;
};

Bound bind(Tape& tape, ModelBundle& model, unsigned trainable);

/// Flattens clips into rows, out(b, m*T + t) = signals(m, t).
Matrix flatten_clips(const std::vector<const PatchSignalClip*>& clips);

constexpr double kStandardizeEps = 1e-8;

/// Standardizes each row (one clip) and runs the shared encoder.
Var encode(const Bound& p, const Var& flat_clips);
Var class_logits(const Bound& p, const Var& features);
Var domain_logits(const Bound& p, const Var& features, bool through_grl);

/// Per-patch generator field G(normalized) before the tanh bound.
Var generator_field(const Bound& p, const Var& normalized_rows);

/// Precomputed spectral views of a batch, one row per (clip, patch).
struct SpectralBatch {
  Matrix amplitude;
  Matrix phase;
  Matrix normalized;
  FrequencyGrid grid{2};
  int patch_count = 1;
};

SpectralBatch spectral_batch(const std::vector<const OneSidedSpectrum*>& spectra);

struct LsaGraph {
  Var amplitude;  // A-hat, rows = clip*patch
  Var mask;       // A-hat / (A + delta)
  Var flat_env;   // clips x (M*T)
};

/// Generator forward on a tape: A-hat = A * exp(alpha * tanh(G(normalized))),
/// rebuilt through recompose with the original phase.
LsaGraph lsa_graph(const Bound& p, const SpectralBatch& batch, double alpha, double delta);

struct LsaResult {
  PatchSignalClip clip;
  Matrix amplitude;
  Matrix mask;
};

/// Single-clip convenience wrapper around lsa_graph.
LsaResult lsa_perturb(ModelBundle& model, const OneSidedSpectrum& spectrum, double fps = 25.0);

/// Number of generator forward passes since process start.
std::uint64_t lsa_invocations();

Eigen::VectorXd encode(const ModelBundle& model, const PatchSignalClip& clip);
/// softmax(g(h)), entries (real, fake).
Eigen::Vector2d classify(const ModelBundle& model, const Eigen::VectorXd& h);
Eigen::Vector2d discriminate_domain(const ModelBundle& model, const Eigen::VectorXd& h);

/// Encoder features, one row per clip.
Matrix features(const ModelBundle& model, const std::vector<const PatchSignalClip*>& clips);

/// Single-stream inference: p(fake) per clip from the clean path only.
std::vector<double> score_clips(const ModelBundle& model, const std::vector<const PatchSignalClip*>& clips);

/// JSON header (dims, alpha, delta, tensor table, metadata) followed by a
/// raw f64 blob.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, const nlohmann::json& metadata = {});
struct Checkpoint {
  ModelBundle model;
  nlohmann::json metadata;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Rejects a checkpoint whose dims differ from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelDims& expected);

void to_json(nlohmann::json& j, const ModelDims& d);
void from_json(const nlohmann::json& j, ModelDims& d);

}  // namespace spinshield::models
