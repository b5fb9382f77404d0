#pragma once

// Small model + batch on which every loss term can be built and differentiated.

#include "spinshield/models.hpp"
#include "spinshield/objectives.hpp"
#include "support.hpp"

namespace spinshield::testing {

inline models::ModelDims small_dims() {
  models::ModelDims d;
  d.patch_count = 4;
  d.frame_count = 8;
  d.hidden = 8;
  d.feature = 6;
  d.domain_hidden = 5;
  d.generator_hidden = 6;
  return d;
}

struct ObjectiveFixture {
  models::ModelBundle model;
  std::vector<PatchSignalClip> clips;
  std::vector<OneSidedSpectrum> spectra;
  std::vector<int> labels;
  models::SpectralBatch batch;
  models::Matrix flat;
  objectives::LossWeights weights;
  double bandwidth = 1.0;

  explicit ObjectiveFixture(std::uint64_t seed, int batch_size = 4) : model(models::init_model(small_dims(), 0.6, seed)) {
    CounterRng rng(seed, 77);
    // Spread the generator so the modulation is far from the identity.
    for (auto* p : model.generator_params()) p->value = random_matrix(rng, p->value.rows(), p->value.cols(), 0.8);
    for (auto* p : model.domain_params()) p->value += random_matrix(rng, p->value.rows(), p->value.cols(), 0.3);
    for (auto* p : model.head_params()) p->value += random_matrix(rng, p->value.rows(), p->value.cols(), 0.3);
    const auto dims = small_dims();
    for (int i = 0; i < batch_size; ++i) {
      clips.push_back(random_clip(rng, dims.patch_count, dims.frame_count));
      labels.push_back(i % 2);
    }
    std::vector<const PatchSignalClip*> cp;
    std::vector<const OneSidedSpectrum*> sp;
    for (const auto& c : clips) spectra.push_back(dft_onesided(c));
    for (std::size_t i = 0; i < clips.size(); ++i) {
      cp.push_back(&clips[i]);
      sp.push_back(&spectra[i]);
    }
    flat = models::flatten_clips(cp);
    batch = models::spectral_batch(sp);
    ad::Tape t;
    auto g = forward(t, 0, true);
    bandwidth = objectives::median_bandwidth(g.h_clean.value(), g.h_env.value());
  }

  struct Graph {
    ad::Var mask, logits_clean, logits_env, h_clean, h_env, dom_clean, dom_env;
  };

  Graph forward(ad::Tape& t, unsigned trainable, bool grl) {
    auto p = models::bind(t, model, trainable);
    auto lsa = models::lsa_graph(p, batch, model.alpha, model.delta);
    Graph g;
    g.mask = lsa.mask;
    g.h_clean = models::encode(p, t.constant(flat));
    g.h_env = models::encode(p, lsa.flat_env);
    g.logits_clean = models::class_logits(p, g.h_clean);
    g.logits_env = models::class_logits(p, g.h_env);
    g.dom_clean = models::domain_logits(p, g.h_clean, grl);
    g.dom_env = models::domain_logits(p, g.h_env, grl);
    return g;
  }

  ad::Var generator_loss(ad::Tape& t) {
    auto g = forward(t, models::kGenerator, true);
    return objectives::generator_loss(objectives::cross_entropy(g.logits_env, labels),
                                      objectives::mmd(g.h_clean, g.h_env, {bandwidth}),
                                      objectives::mask_regularizer(g.mask), weights);
  }
  ad::Var detector_loss(ad::Tape& t, unsigned trainable = models::kEncoder | models::kHead) {
    auto g = forward(t, trainable, true);
    return objectives::detector_loss(g.logits_clean, g.logits_env, labels);
  }
  ad::Var blindness_loss(ad::Tape& t, bool grl, unsigned trainable = models::kEncoder | models::kDomain) {
    auto g = forward(t, trainable, grl);
    return objectives::blindness_loss(g.dom_clean, g.dom_env);
  }
  ad::Var symmetric_kl(ad::Tape& t, unsigned trainable = models::kEncoder | models::kHead) {
    auto g = forward(t, trainable, true);
    return objectives::symmetric_kl(ad::softmax_rows(g.logits_clean), ad::softmax_rows(g.logits_env));
  }
  /// blind_sign -1 gives the value whose plain gradient equals what the GRL
  /// hands the encoder.
  ad::Var total_loss(ad::Tape& t, bool grl, double blind_sign = 1.0,
                     unsigned trainable = models::kEncoder | models::kHead | models::kDomain) {
    auto g = forward(t, trainable, grl);
    auto det = objectives::detector_loss(g.logits_clean, g.logits_env, labels);
    auto sym = objectives::symmetric_kl(ad::softmax_rows(g.logits_clean), ad::softmax_rows(g.logits_env));
    auto blind = objectives::blindness_loss(g.dom_clean, g.dom_env);
    if (blind_sign < 0) blind = -1.0 * blind;
    return objectives::total_loss(det, sym, blind, weights);
  }
};

/// Worst finite-difference error over every objective at one parameter
/// setting. The GRL-engaged total is checked against the sign-flipped value
/// for encoder parameters and the plain value for the heads.
inline double objective_fd_error(std::uint64_t seed) {
  ObjectiveFixture fx(seed);
  CounterRng rng(seed, 5);
  double worst = 0;
  auto acc = [&](double e) { worst = std::max(worst, e); };
  acc(fd_check_params([&](ad::Tape& t) { return fx.generator_loss(t); }, fx.model.generator_params(), rng));
  auto det_params = fx.model.encoder_params();
  for (auto* p : fx.model.head_params()) det_params.push_back(p);
  acc(fd_check_params([&](ad::Tape& t) { return fx.detector_loss(t); }, det_params, rng));
  acc(fd_check_params([&](ad::Tape& t) { return fx.symmetric_kl(t); }, det_params, rng));
  auto blind_params = fx.model.encoder_params();
  for (auto* p : fx.model.domain_params()) blind_params.push_back(p);
  acc(fd_check_params([&](ad::Tape& t) { return fx.blindness_loss(t, false); }, blind_params, rng));
  acc(fd_check_params([&](ad::Tape& t) { return fx.blindness_loss(t, true); }, fx.model.domain_params(), rng));
  acc(fd_check_params([&](ad::Tape& t) { return fx.total_loss(t, false, 1.0, models::kAllGroups); }, fx.model.all_params(), rng, 6));
  // With the GRL engaged.
  ParamLoss surrogate = [&](ad::Tape& t) { return fx.total_loss(t, false, -1.0); };
  acc(fd_check_params([&](ad::Tape& t) { return fx.total_loss(t, true); }, fx.model.encoder_params(), rng, 12, &surrogate));
  auto heads = fx.model.head_params();
  for (auto* p : fx.model.domain_params()) heads.push_back(p);
  acc(fd_check_params([&](ad::Tape& t) { return fx.total_loss(t, true); }, heads, rng));
  return worst;
}

/// Encoder gradients of the blindness loss with and without the GRL; returns
/// the largest |g_grl + g_plain| (0 when the flip is exact) and fills the
/// norm of g_plain so callers can reject a vacuous pass.
inline double grl_pair_residual(std::uint64_t seed, double* plain_norm = nullptr) {
  ObjectiveFixture fx(seed);
  std::vector<models::Matrix> with, without;
  for (bool grl : {true, false}) {
    fx.model.zero_grad();
    ad::Tape t;
    t.backward(fx.blindness_loss(t, grl));
    for (auto* p : fx.model.encoder_params()) (grl ? with : without).push_back(p->grad);
  }
  fx.model.zero_grad();
  double worst = 0, norm = 0;
  for (std::size_t i = 0; i < with.size(); ++i) {
    worst = std::max(worst, (with[i] + without[i]).cwiseAbs().maxCoeff());
    norm += without[i].squaredNorm();
  }
  if (plain_norm) *plain_norm = std::sqrt(norm);
  return worst;
}

}  // namespace spinshield::testing
