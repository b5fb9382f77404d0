#include "spinshield/attacks.hpp"
#include "spinshield/clip_io.hpp"
#include "spinshield/stats.hpp"
#include "spinshield/synthdata.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace spinshield;
using namespace spinshield::synth;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "spinshield_synth_test";
  std::filesystem::create_directories(dir);
  return dir;
}

double mean_amp(const PatchSignalClip& c, int bin) { return dft_onesided(c).amplitude.col(bin).mean(); }

// Largest wrapped jump of the bin-1 phase between neighbouring patches.
double component1_phase_jump(const PatchSignalClip& c) {
  const auto s = dft_onesided(c);
  double worst = 0;
  for (Eigen::Index m = 1; m < s.phase.rows(); ++m)
    worst = std::max(worst, std::abs(std::remainder(s.phase(m, 1) - s.phase(m - 1, 1), 2 * std::numbers::pi)));
  return worst;
}

DatasetSpec small_spec(int n) {
  DatasetSpec s;
  s.n_clips = n;
  s.seed = 11;
  return s;
}

}  // namespace

TEST(Spec, Validation) {
  DatasetSpec s;
  EXPECT_NO_THROW(s.validate());
  s.shortcut_bin = 8;
  EXPECT_THROW(s.validate(), DataError);
  s.shortcut_bin = 2;
  EXPECT_THROW(s.validate(), DataError);
  s = {};
  s.n_clips = 0;
  EXPECT_THROW(s.validate(), DataError);
  nlohmann::json j = DatasetSpec{};
  EXPECT_EQ(j.get<DatasetSpec>(), DatasetSpec{});
  j["bogus"] = 1;
  EXPECT_ANY_THROW(j.get<DatasetSpec>());
}

TEST(Generate, BalanceAndDeterminism) {
  for (int n : {7, 100}) {
    auto a = generate_dataset(small_spec(n));
    int fakes = 0;
    for (const auto& c : a) fakes += c.label;
    EXPECT_EQ(fakes, (n + 1) / 2);
    auto b = generate_dataset(small_spec(n));
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(a[i].clip.signals, b[i].clip.signals);
      EXPECT_EQ(a[i].label, b[i].label);
    }
    EXPECT_EQ(generate_clip(small_spec(n), 3).clip.signals, a[3].clip.signals);
  }
  auto other = small_spec(5);
  other.seed = 12;
  EXPECT_NE(generate_dataset(other)[0].clip.signals, generate_dataset(small_spec(5))[0].clip.signals);
}

TEST(Generate, ShortcutAmplitudeExcess) {
  auto spec = small_spec(1000);
  auto data = generate_dataset(spec);
  double fake = 0, real = 0;
  for (const auto& c : data) (c.label ? fake : real) += mean_amp(c.clip, spec.shortcut_bin);
  EXPECT_GE((fake - real) / 500.0, spec.shortcut_amplitude * spec.frame_count / 4.0);
}

TEST(Generate, ShortcutSeparabilityProbe) {
  // A one-feature logistic probe is monotone in the feature, so its AUC is
  // the AUC of the feature itself.
  auto spec = small_spec(2000);
  auto data = generate_dataset(spec);
  std::vector<double> score;
  std::vector<int> y;
  for (const auto& c : data) {
    score.push_back(mean_amp(c.clip, spec.shortcut_bin));
    y.push_back(c.label);
  }
  EXPECT_GE(stats::compute_auc(score, y), 0.95);
}

TEST(Generate, CueFreeSpecIsIndistinguishable) {
  auto spec = small_spec(2000);
  spec.shortcut_amplitude = 0;
  spec.phase_cue_strength = 0;
  auto data = generate_dataset(spec);
  std::vector<double> amp, cue, energy;
  std::vector<int> y;
  for (const auto& c : data) {
    amp.push_back(mean_amp(c.clip, spec.shortcut_bin));
    cue.push_back(phase_cue_statistic(c.clip));
    energy.push_back(c.clip.signals.squaredNorm());
    y.push_back(c.label);
  }
  for (const auto* s : {&amp, &cue, &energy}) EXPECT_NEAR(stats::compute_auc(*s, y), 0.5, 0.05);
}

TEST(Generate, PhaseCueSeparatesClasses) {
  auto data = generate_dataset(small_spec(1000));
  std::vector<double> cue;
  std::vector<int> y;
  for (const auto& c : data) {
    cue.push_back(phase_cue_statistic(c.clip));
    y.push_back(c.label);
  }
  EXPECT_GE(stats::compute_auc(cue, y), 0.75);
}

TEST(Generate, BandMaskOverShortcutKeepsPhaseCue) {
  auto spec = small_spec(400);
  auto data = generate_dataset(spec);
  const auto attack = attacks::forced_band(spec.shortcut_bin, 1);
  double real_amp = 0;
  for (const auto& c : data)
    if (!c.label) real_amp += mean_amp(c.clip, spec.shortcut_bin) / 200.0;
  for (const auto& c : data) {
    if (!c.label) continue;
    const auto attacked = attacks::apply_attack(c.clip, attack);
    const double excess_before = mean_amp(c.clip, spec.shortcut_bin) - real_amp;
    const double after = mean_amp(attacked, spec.shortcut_bin);
    EXPECT_LE(after, 0.05 * excess_before);
    const double j0 = component1_phase_jump(c.clip), j1 = component1_phase_jump(attacked);
    EXPECT_LE(std::abs(j1 - j0), 0.05 * std::abs(j0) + 1e-12);
  }
}

TEST(Generate, PhaseCueInvariantUnderAttacks) {
  auto spec = small_spec(1000);
  auto data = generate_dataset(spec);
  const FrequencyGrid grid(spec.frame_count);
  for (auto kind : {attacks::AttackKind::Notch, attacks::AttackKind::RandomBandMask, attacks::AttackKind::SpectralTilt,
                    attacks::AttackKind::SnrNoise}) {
    std::vector<double> before, after;
    for (const auto& c : data) {
      if (!c.label) continue;
      before.push_back(phase_cue_statistic(c.clip));
      auto a = attacks::sample_attack(kind, grid, 1000 + c.index, spec.patch_count);
      after.push_back(phase_cue_statistic(attacks::apply_attack(c.clip, a)));
    }
    EXPECT_LT(stats::ks_statistic(before, after), 0.1) << attacks::to_string(kind);
  }
}

TEST(Storage, BinaryRoundTripBitwise) {
  auto data = generate_dataset(small_spec(50));
  const auto path = temp_dir() / "rt.bin";
  save_clips(path, data, ClipFormat::Binary);
  auto back = load_clips(path, ClipFormat::Binary);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].clip.signals, data[i].clip.signals);
    EXPECT_EQ(back[i].label, data[i].label);
  }
}

TEST(Storage, CsvMatchesBinary) {
  auto data = generate_dataset(small_spec(20));
  const auto csv = temp_dir() / "x.csv", bin = temp_dir() / "x.bin";
  save_clips(csv, data, ClipFormat::Csv);
  save_clips(bin, data, ClipFormat::Binary);
  auto a = load_clips(csv, ClipFormat::Csv), b = load_clips(bin, ClipFormat::Binary);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_LE((a[i].clip.signals - b[i].clip.signals).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

TEST(Storage, CsvNanRejectedWithLine) {
  auto data = generate_dataset(small_spec(2));
  const auto csv = temp_dir() / "nan.csv";
  save_clips(csv, data, ClipFormat::Csv);
  std::vector<std::string> lines;
  {
    std::ifstream in(csv);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  lines[5] = lines[5].substr(0, lines[5].rfind(',') + 1) + "nan";
  {
    std::ofstream out(csv);
    for (const auto& l : lines) out << l << "\n";
  }
  try {
    load_clips(csv, ClipFormat::Csv);
    FAIL() << "expected rejection";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(":6"), std::string::npos) << e.what();
  }
}

TEST(Storage, TruncatedBinaryRejected) {
  auto data = generate_dataset(small_spec(3));
  const auto path = temp_dir() / "trunc.bin";
  save_clips(path, data, ClipFormat::Binary);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_ANY_THROW(load_clips(path, ClipFormat::Binary));
}

TEST(Manifest, RoundTripAndLabelCheck) {
  auto spec = small_spec(10);
  auto data = generate_dataset(spec);
  const auto dir = temp_dir();
  save_clips(dir / "m.bin", data, ClipFormat::Binary);
  Manifest m{spec, ClipFormat::Binary, "m.bin", {}};
  for (const auto& c : data) m.labels.push_back(c.label);
  write_manifest(dir / "m.json", m);
  auto back = read_manifest(dir / "m.json");
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.labels, m.labels);
  auto clips = load_manifest_clips(dir / "m.json");
  EXPECT_EQ(clips.size(), 10u);
  m.labels[0] = 1 - m.labels[0];
  write_manifest(dir / "m2.json", m);
  EXPECT_THROW(load_manifest_clips(dir / "m2.json"), DataError);
}

TEST(ClipIo, SingleClipFormatsRoundTrip) {
  auto c = generate_clip(small_spec(1), 0).clip;
  const auto dir = temp_dir();
  io::write_clip_csv(dir / "one.csv", c);
  io::write_clip_binary(dir / "one.bin", c);
  EXPECT_EQ(io::read_clip_csv(dir / "one.csv").signals, c.signals);
  EXPECT_EQ(io::read_clip_binary(dir / "one.bin").signals, c.signals);
  EXPECT_EQ(io::parse_double(io::format_double(0.1 + 0.2)).value(), 0.1 + 0.2);
  EXPECT_FALSE(io::parse_double("1.5x").has_value());
}
