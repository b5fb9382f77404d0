#include "spinshield/attacks.hpp"

#include "spinshield/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spinshield::attacks {

namespace {

constexpr std::pair<AttackKind, std::string_view> kNames[] = {
    {AttackKind::Identity, "identity"},     {AttackKind::Notch, "notch"},       {AttackKind::RandomBandMask, "band_mask"},
    {AttackKind::SpectralTilt, "tilt"},     {AttackKind::SnrNoise, "snr_noise"},
};

double notch_value(const NotchParams& p, Eigen::Index k) {
  const double d = std::abs(static_cast<double>(k - p.center_bin));
  if (d >= p.width_bins) return 1.0;
  return p.floor + (1.0 - p.floor) * 0.5 * (1.0 - std::cos(std::numbers::pi * d / p.width_bins));
}

/// Tukey window over a band, sampled at bin centres on (0, 1); alpha = 0 is
/// rectangular and a single-bin band is always fully suppressed.
double tukey_value(double alpha, int width, int offset) {
  if (alpha <= 0.0) return 1.0;
  const double x = (offset + 0.5) / width;
  const double edge = std::min(x, 1.0 - x);
  if (edge >= alpha / 2) return 1.0;
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * edge / alpha));
}

void check_bins(const FrequencyGrid& grid, const AttackSpec& spec) {
  const auto last_interior = static_cast<int>(grid.bin_count()) - 2;
  if (const auto* n = std::get_if<NotchParams>(&spec.params)) {
    if (n->width_bins < 1) throw std::invalid_argument("notch width must be >= 1");
    if (n->center_bin - (n->width_bins - 1) < 1 || n->center_bin + (n->width_bins - 1) > last_interior)
      throw std::invalid_argument("notch stopband leaves the non-DC, non-Nyquist bins");
    if (n->floor < 0.0 || n->floor >= 1.0) throw std::invalid_argument("notch floor must lie in [0, 1)");
  }
  if (const auto* b = std::get_if<BandMaskParams>(&spec.params)) {
    for (const auto& band : b->bands)
      if (band.width_bins < 1 || band.start_bin < 1 || band.start_bin + band.width_bins > grid.bin_count())
        throw std::invalid_argument("band lies outside bins 1..floor(T/2)");
    if (b->tukey_alpha < 0.0 || b->tukey_alpha > 1.0) throw std::invalid_argument("tukey_alpha must lie in [0, 1]");
  }
}

}  // namespace

std::string_view to_string(AttackKind kind) {
  for (const auto& [k, name] : kNames)
    if (k == kind) return name;
  return "unknown";
}

AttackKind attack_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown attack kind '" + std::string(name) + "'");
}

AttackSpec sample_attack(AttackKind kind, const FrequencyGrid& grid, std::uint64_t seed, Eigen::Index patch_count,
                         const AttackDefaults& defaults) {
  CounterRng rng(seed, static_cast<std::uint64_t>(kind));
  const auto K = static_cast<int>(grid.bin_count());
  AttackSpec spec{kind, IdentityParams{}, seed};

  switch (kind) {
    case AttackKind::Identity:
      break;
    case AttackKind::Notch: {
      if (K < 3) throw std::invalid_argument("notch needs at least 3 frequency bins");
      const int last_interior = K - 2;
      NotchParams p;
      p.center_bin = static_cast<int>(rng.uniform_int(1, last_interior));
      p.width_bins = static_cast<int>(rng.uniform_int(1, 2));
      // A width-2 stopband touching DC or Nyquist falls back to width 1.
      if (p.center_bin - 1 < 1 || p.center_bin + 1 > last_interior) p.width_bins = 1;
      p.floor = defaults.notch_floor;
      spec.params = p;
      break;
    }
    case AttackKind::RandomBandMask: {
      if (K < 3) throw std::invalid_argument("band mask needs at least 3 frequency bins");
      const int top = K - 1;  // highest maskable bin (Nyquist for even T)
      BandMaskParams p;
      p.tukey_alpha = defaults.tukey_alpha;
      p.drawn_band_count = static_cast<int>(rng.uniform_int(1, 3));
      std::vector<Band> drawn;
      for (int b = 0; b < p.drawn_band_count; ++b) {
        const int width = std::min(static_cast<int>(rng.uniform_int(1, 4)), top);
        const int start = static_cast<int>(rng.uniform_int(1, top - width + 1));
        drawn.push_back({start, width});
      }
      std::sort(drawn.begin(), drawn.end(), [](const Band& a, const Band& b) { return a.start_bin < b.start_bin; });
      for (const auto& band : drawn) {
        if (!p.bands.empty() && band.start_bin <= p.bands.back().start_bin + p.bands.back().width_bins) {
          auto& last = p.bands.back();
          last.width_bins = std::max(last.start_bin + last.width_bins, band.start_bin + band.width_bins) - last.start_bin;
        } else {
          p.bands.push_back(band);
        }
      }
      spec.params = p;
      break;
    }
    case AttackKind::SpectralTilt: {
      TiltParams p;
      p.beta1 = rng.uniform(-defaults.tilt_limit, defaults.tilt_limit);
      p.beta2 = rng.uniform(-defaults.tilt_limit, defaults.tilt_limit);
      p.eps0 = defaults.eps0;
      spec.params = p;
      break;
    }
    case AttackKind::SnrNoise: {
      if (defaults.noise_sigma < 0) throw std::invalid_argument("noise sigma must be >= 0");
      NoiseParams p;
      p.sigma = defaults.noise_sigma;
      p.eps0 = defaults.eps0;
      p.draws.resize(patch_count, K);
      for (Eigen::Index m = 0; m < patch_count; ++m)
        for (Eigen::Index k = 0; k < K; ++k) p.draws(m, k) = p.sigma * rng.normal();
      spec.params = p;
      break;
    }
  }
  return spec;
}

Eigen::VectorXd build_mask(const AttackSpec& spec, const FrequencyGrid& grid) {
  check_bins(grid, spec);
  const Eigen::Index K = grid.bin_count();
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(K);
  if (const auto* n = std::get_if<NotchParams>(&spec.params)) {
    for (Eigen::Index k = 1; k < K; ++k) mask(k) = notch_value(*n, k);
  } else if (const auto* b = std::get_if<BandMaskParams>(&spec.params)) {
    for (const auto& band : b->bands)
      for (int i = 0; i < band.width_bins; ++i) mask(band.start_bin + i) *= 1.0 - tukey_value(b->tukey_alpha, band.width_bins, i);
  } else if (!std::holds_alternative<IdentityParams>(spec.params)) {
    throw std::invalid_argument("build_mask: " + std::string(to_string(spec.kind)) + " is not a mask attack; use apply_attack");
  }
  mask(0) = 1.0;
  return mask;
}

Eigen::MatrixXd transform_amplitude(const OneSidedSpectrum& spectrum, const AttackSpec& spec) {
  const auto& A = spectrum.amplitude;
  const FrequencyGrid& grid = spectrum.grid;
  if (const auto* t = std::get_if<TiltParams>(&spec.params)) {
    Eigen::RowVectorXd shift(grid.bin_count());
    for (Eigen::Index k = 0; k < grid.bin_count(); ++k) {
      const double w = grid.omega(k);
      shift(k) = t->beta1 * w + t->beta2 * w * w;
    }
    return ((A.array() + t->eps0).log().rowwise() + shift.array()).exp();
  }
  if (const auto* n = std::get_if<NoiseParams>(&spec.params)) {
    if (n->draws.rows() != A.rows() || n->draws.cols() != A.cols())
      throw std::invalid_argument("noise draws are " + std::to_string(n->draws.rows()) + "x" + std::to_string(n->draws.cols()) +
                                  " but the clip spectrum is " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    return ((A.array() + n->eps0).log() + n->draws.array()).exp();
  }
  const Eigen::VectorXd mask = build_mask(spec, grid);
  return A.array().rowwise() * mask.transpose().array();
}

PatchSignalClip apply_attack(const PatchSignalClip& clip, const AttackSpec& spec) {
  validate(clip);
  if (std::holds_alternative<IdentityParams>(spec.params)) return clip;
  const OneSidedSpectrum spectrum = dft_onesided(clip);
  return recompose(transform_amplitude(spectrum, spec), spectrum.phase, spectrum.grid, clip.fps);
}

AttackSpec full_notch(int center_bin) { return {AttackKind::Notch, NotchParams{center_bin, 1, 0.0}, 0}; }

AttackSpec forced_band(int start_bin, int width_bins, double tukey_alpha) {
  BandMaskParams p;
  p.bands = {{start_bin, width_bins}};
  p.tukey_alpha = tukey_alpha;
  p.drawn_band_count = 1;
  return {AttackKind::RandomBandMask, p, 0};
}

void to_json(nlohmann::json& j, const AttackSpec& spec) {
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"seed", spec.seed}};
  std::visit(
      [&j](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, NotchParams>) {
          j["center_bin"] = p.center_bin;
          j["width_bins"] = p.width_bins;
          j["floor"] = p.floor;
        } else if constexpr (std::is_same_v<P, BandMaskParams>) {
          auto bands = nlohmann::json::array();
          for (const auto& b : p.bands) bands.push_back({b.start_bin, b.width_bins});
          j["bands"] = bands;
          j["tukey_alpha"] = p.tukey_alpha;
          j["drawn_band_count"] = p.drawn_band_count;
        } else if constexpr (std::is_same_v<P, TiltParams>) {
          j["beta1"] = p.beta1;
          j["beta2"] = p.beta2;
          j["eps0"] = p.eps0;
        } else if constexpr (std::is_same_v<P, NoiseParams>) {
          j["sigma"] = p.sigma;
          j["eps0"] = p.eps0;
          auto rows = nlohmann::json::array();
          for (Eigen::Index m = 0; m < p.draws.rows(); ++m) {
            std::vector<double> row(p.draws.cols());
            for (Eigen::Index k = 0; k < p.draws.cols(); ++k) row[static_cast<std::size_t>(k)] = p.draws(m, k);
            rows.push_back(row);
          }
          j["draws"] = rows;
        }
      },
      spec.params);
}

void from_json(const nlohmann::json& j, AttackSpec& spec) {
  spec.kind = attack_kind_from_string(j.at("kind").get<std::string>());
  spec.seed = j.value("seed", std::uint64_t{0});
  switch (spec.kind) {
    case AttackKind::Identity:
      spec.params = IdentityParams{};
      break;
    case AttackKind::Notch:
      spec.params = NotchParams{j.at("center_bin").get<int>(), j.at("width_bins").get<int>(), j.value("floor", 0.0)};
      break;
    case AttackKind::RandomBandMask: {
      BandMaskParams p;
      for (const auto& b : j.at("bands")) p.bands.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
      p.tukey_alpha = j.value("tukey_alpha", 0.5);
      p.drawn_band_count = j.value("drawn_band_count", static_cast<int>(p.bands.size()));
      spec.params = p;
      break;
    }
    case AttackKind::SpectralTilt:
      spec.params = TiltParams{j.at("beta1").get<double>(), j.at("beta2").get<double>(), j.value("eps0", 1e-8)};
      break;
    case AttackKind::SnrNoise: {
      NoiseParams p;
      p.sigma = j.at("sigma").get<double>();
      p.eps0 = j.value("eps0", 1e-8);
      const auto& rows = j.at("draws");
      const auto cols = rows.empty() ? std::size_t{0} : rows.at(0).size();
      p.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
      for (std::size_t m = 0; m < rows.size(); ++m) {
        if (rows[m].size() != cols) throw std::invalid_argument("ragged noise draws");
        for (std::size_t k = 0; k < cols; ++k) p.draws(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = rows[m][k].get<double>();
      }
      spec.params = p;
      break;
    }
  }
}

}  // namespace spinshield::attacks
