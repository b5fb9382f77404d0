#include "spinshield/models.hpp"
#include "objective_graphs.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace spinshield;
using namespace spinshield::models;
using spinshield::testing::random_clip;
using spinshield::testing::random_matrix;
using spinshield::testing::small_dims;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "spinshield_models_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Init, DeterministicAndShaped) {
  auto a = init_model(small_dims(), 0.6, 3), b = init_model(small_dims(), 0.6, 3), c = init_model(small_dims(), 0.6, 4);
  EXPECT_EQ(a.enc_w1.value, b.enc_w1.value);
  EXPECT_NE(a.enc_w1.value, c.enc_w1.value);
  EXPECT_EQ(a.enc_w1.value.rows(), 32);
  EXPECT_EQ(a.head_w.value.cols(), 2);
  EXPECT_EQ(a.dom_w2.value.cols(), 2);
  EXPECT_EQ(a.gen_w1.value.rows(), 5);
  EXPECT_EQ(a.gen_w2.value.cols(), 5);
  EXPECT_EQ(a.enc_b1.value, Matrix::Zero(1, 8));
  EXPECT_LE(a.enc_w1.value.cwiseAbs().maxCoeff(), 1.0 / std::sqrt(32.0));
}

TEST(Encode, ZeroWeightsGiveBiasOnlyFeatures) {
  auto m = init_model(small_dims(), 0.6, 1);
  m.enc_w1.value.setZero();
  m.enc_w2.value.setZero();
  CounterRng rng(2);
  for (auto& v : m.enc_b1.value.reshaped()) v = rng.normal();
  for (auto& v : m.enc_b2.value.reshaped()) v = rng.normal();
  Eigen::VectorXd expect = m.enc_b2.value.array().tanh().transpose();
  EXPECT_LT((encode(m, random_clip(rng, 4, 8)) - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((encode(m, random_clip(rng, 4, 8)) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Encode, IdenticalClipsBitwiseAndTapeMatchesPlain) {
  auto m = init_model(small_dims(), 0.6, 1);
  CounterRng rng(3);
  auto c = random_clip(rng, 4, 8);
  auto c2 = c;
  EXPECT_EQ(encode(m, c), encode(m, c2));
  Tape t;
  auto p = bind(t, m, 0);
  auto h = models::encode(p, t.constant(flatten_clips({&c})));
  EXPECT_LT((h.value().transpose() - encode(m, c)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Encode, NormGradientMatchesFiniteDifferences) {
  auto m = init_model(small_dims(), 0.6, 5);
  CounterRng rng(6);
  auto c = random_clip(rng, 4, 8);
  const Matrix flat = flatten_clips({&c});
  const double err = spinshield::testing::fd_check_params(
      [&](Tape& t) {
        auto h = models::encode(bind(t, m, kEncoder), t.constant(flat));
        return ad::sum(ad::mul(h, h));
      },
      m.encoder_params(), rng, 20);
  EXPECT_LT(err, 1e-4);
}

TEST(Encode, WrongWidthRejected) {
  auto m = init_model(small_dims(), 0.6, 1);
  CounterRng rng(1);
  EXPECT_THROW(encode(m, random_clip(rng, 4, 16)), ModelError);
}

TEST(Classify, UniformSaturationAndSoftmaxOracle) {
  auto m = init_model(small_dims(), 0.6, 1);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(6);
  auto p = classify(m, h);
  EXPECT_EQ(p(0), 0.5);
  EXPECT_EQ(p(1), 0.5);
  m.head_b.value << 20, -20;
  EXPECT_GT(classify(m, h)(0), 1 - 1e-8);
  CounterRng rng(2);
  m.head_w.value = random_matrix(rng, 6, 2);
  m.head_b.value = random_matrix(rng, 1, 2);
  h = random_matrix(rng, 6, 1);
  Eigen::RowVector2d z = h.transpose() * m.head_w.value + m.head_b.value;
  const double e0 = std::exp(z(0)), e1 = std::exp(z(1));
  EXPECT_NEAR(classify(m, h)(0), e0 / (e0 + e1), 1e-15);
}

TEST(Domain, GrlForwardIdentical) {
  spinshield::testing::ObjectiveFixture fx(3);
  Tape t;
  auto p = bind(t, fx.model, kAllGroups);
  auto h = models::encode(p, t.constant(fx.flat));
  EXPECT_EQ(domain_logits(p, h, true).value(), domain_logits(p, h, false).value());
}

TEST(Domain, GrlFlipsEncoderGradients) {
  double norm = 0;
  EXPECT_EQ(spinshield::testing::grl_pair_residual(4, &norm), 0.0);
  EXPECT_GT(norm, 1e-6);
}

TEST(Lsa, NeutralGeneratorIsIdentity) {
  auto m = init_model(small_dims(), 0.6, 1);
  for (auto* p : m.generator_params()) p->value.setZero();
  CounterRng rng(7);
  auto c = random_clip(rng, 4, 8);
  auto s = dft_onesided(c);
  auto r = lsa_perturb(m, s);
  EXPECT_LT((r.clip.signals - c.signals).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(r.amplitude, s.amplitude);
  Matrix expect = s.amplitude.array() / (s.amplitude.array() + m.delta);
  EXPECT_LT((r.mask - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Lsa, BoundPositivityAndPhase) {
  CounterRng rng(8);
  for (int i = 0; i < 50; ++i) {
    auto m = init_model(small_dims(), 0.6, static_cast<std::uint64_t>(i));
    for (auto* p : m.generator_params()) p->value = random_matrix(rng, p->value.rows(), p->value.cols(), 2.0);
    auto c = random_clip(rng, 4, 8);
    auto s = dft_onesided(c);
    auto r = lsa_perturb(m, s);
    EXPECT_TRUE((r.amplitude.array() > 0 || s.amplitude.array() == 0).all());
    EXPECT_TRUE((r.mask.array() <= std::exp(m.alpha)).all());
    for (Eigen::Index j = 0; j < s.amplitude.size(); ++j) {
      if (s.amplitude(j) <= 1e-8) continue;
      EXPECT_LE(std::abs(std::log(r.amplitude(j) / s.amplitude(j))), m.alpha + 1e-12);
    }
    auto back = dft_onesided(r.clip);
    for (Eigen::Index j = 0; j < s.amplitude.size(); ++j) {
      if (s.amplitude(j) <= 1e-8) continue;
      EXPECT_LT(std::abs(std::remainder(back.phase(j) - s.phase(j), 2 * std::numbers::pi)), 1e-6);
    }
  }
}

TEST(Lsa, InvocationCounterAndPlainPathsDoNotTouchGenerator) {
  auto m = init_model(small_dims(), 0.6, 1);
  CounterRng rng(9);
  auto c = random_clip(rng, 4, 8);
  const auto before = lsa_invocations();
  score_clips(m, {&c});
  features(m, {&c});
  EXPECT_EQ(lsa_invocations(), before);
  lsa_perturb(m, dft_onesided(c));
  EXPECT_EQ(lsa_invocations(), before + 1);
}

TEST(Bind, FrozenGroupsReceiveNoGradient) {
  spinshield::testing::ObjectiveFixture fx(2);
  fx.model.zero_grad();
  Tape t;
  t.backward(fx.total_loss(t, true));
  for (auto* p : fx.model.generator_params()) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
  double enc = 0;
  for (auto* p : fx.model.encoder_params()) enc += p->grad.squaredNorm();
  EXPECT_GT(enc, 0.0);
}

TEST(Checkpoint, RoundTripBitwise) {
  spinshield::testing::ObjectiveFixture fx(5);
  const auto path = temp_path("rt.spck");
  save_checkpoint(path, fx.model, {{"note", "x"}});
  auto ck = load_checkpoint(path, small_dims());
  EXPECT_EQ(ck.metadata.at("note"), "x");
  EXPECT_EQ(ck.model.alpha, fx.model.alpha);
  auto a = fx.model.all_params();
  auto b = ck.model.all_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
}

TEST(Checkpoint, Rejections) {
  spinshield::testing::ObjectiveFixture fx(5);
  const auto path = temp_path("bad.spck");
  save_checkpoint(path, fx.model);
  auto other = small_dims();
  other.hidden = 9;
  EXPECT_THROW(load_checkpoint(path, other), ModelError);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  EXPECT_ANY_THROW(load_checkpoint(path));
  save_checkpoint(path, fx.model);
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << "junk";
  }
  EXPECT_ANY_THROW(load_checkpoint(path));
  EXPECT_ANY_THROW(load_checkpoint(temp_path("missing.spck")));
}
