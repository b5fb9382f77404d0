#pragma once

// Fixed phase-preserving amplitude attacks. Every stochastic draw is made at
// sampling time and stored in the spec, so apply_attack is a pure function of
// (clip, spec).

#include "spinshield/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spinshield::attacks {

enum class AttackKind { Identity, Notch, RandomBandMask, SpectralTilt, SnrNoise };

std::string_view to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct IdentityParams {
  bool operator==(const IdentityParams&) const = default;
};

/// Raised-cosine dip centred on center_bin whose full width at half depth is
/// width_bins; the stopband is {k : |k - center| < width}.
struct NotchParams {
  int center_bin = 1;
  int width_bins = 1;
  double floor = 0.0;
  bool operator==(const NotchParams&) const = default;
};

struct Band {
  int start_bin = 1;
  int width_bins = 1;
  bool operator==(const Band&) const = default;
};

struct BandMaskParams {
  std::vector<Band> bands;  // sorted, disjoint
  double tukey_alpha = 0.5;
  int drawn_band_count = 0;  // B as sampled, before overlapping bands were merged
  bool operator==(const BandMaskParams&) const = default;
};

struct TiltParams {
  double beta1 = 0.0, beta2 = 0.0;
  double eps0 = 1e-8;
  bool operator==(const TiltParams&) const = default;
};

struct NoiseParams {
  double sigma = 0.5;
  double eps0 = 1e-8;
  Eigen::MatrixXd draws;  // eta(m, k), patch x bin
  bool operator==(const NoiseParams& o) const {
    return sigma == o.sigma && eps0 == o.eps0 && draws.rows() == o.draws.rows() && draws.cols() == o.draws.cols() &&
           draws == o.draws;
  }
};

using AttackParams = std::variant<IdentityParams, NotchParams, BandMaskParams, TiltParams, NoiseParams>;

struct AttackSpec {
  AttackKind kind = AttackKind::Identity;
  AttackParams params = IdentityParams{};
  std::uint64_t seed = 0;
  bool operator==(const AttackSpec&) const = default;
};

/// Strengths for parameters the sampler does not draw.
struct AttackDefaults {
  double notch_floor = 0.0;
  double tukey_alpha = 0.5;
  double tilt_limit = 1.5;
  double noise_sigma = 0.5;
  double eps0 = 1e-8;
};

AttackSpec sample_attack(AttackKind kind, const FrequencyGrid& grid, std::uint64_t seed, Eigen::Index patch_count,
                         const AttackDefaults& defaults = {});

/// Multiplicative bin mask for Identity, Notch and RandomBandMask specs.
/// The DC entry is always 1.
Eigen::VectorXd build_mask(const AttackSpec& spec, const FrequencyGrid& grid);

/// Amplitude-only transform; phase is untouched and the clip is rebuilt through
/// recompose. Identity returns the input unchanged.
PatchSignalClip apply_attack(const PatchSignalClip& clip, const AttackSpec& spec);

/// Transformed amplitude for a given spectrum (exposed for property tests).
Eigen::MatrixXd transform_amplitude(const OneSidedSpectrum& spectrum, const AttackSpec& spec);

/// Full-suppression single-bin notch, as used by the notch sweep.
AttackSpec full_notch(int center_bin);
/// Hard single band over [start, start + width), e.g. to force suppression of a known bin.
AttackSpec forced_band(int start_bin, int width_bins, double tukey_alpha = 0.5);

void to_json(nlohmann::json& j, const AttackSpec& spec);
void from_json(const nlohmann::json& j, AttackSpec& spec);

}  // namespace spinshield::attacks
