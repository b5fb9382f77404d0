#pragma once

// One-sided temporal DFT of patch intensity profiles, and the phase-preserving
// recomposition every amplitude transform in the library goes through.
//
// Convention: X(k) = sum_t x(t) exp(-j 2 pi k t / T), no forward scaling; the
// inverse carries the 1/T. Bins are k = 0 .. floor(T/2), omega_k = k / T.

#include <Eigen/Core>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinshield {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class SpectralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Patch-mean temporal intensity profiles: signals(m, t).
template <typename Scalar>
struct BasicPatchSignalClip {
  MatrixX<Scalar> signals;
  double fps = 25.0;

  Eigen::Index patch_count() const { return signals.rows(); }
  Eigen::Index frame_count() const { return signals.cols(); }
};

using PatchSignalClip = BasicPatchSignalClip<double>;

struct FrequencyGrid {
  Eigen::Index frame_count = 0;

  explicit FrequencyGrid(Eigen::Index T) : frame_count(T) {
    if (T < 2) throw SpectralError("frequency grid needs at least 2 frames, got " + std::to_string(T));
  }

  Eigen::Index bin_count() const { return frame_count / 2 + 1; }
  bool has_nyquist() const { return frame_count % 2 == 0; }
  Eigen::Index nyquist_bin() const { return frame_count / 2; }

  /// Normalized frequency k / T.
  double omega(Eigen::Index k) const { return static_cast<double>(k) / static_cast<double>(frame_count); }

  Eigen::VectorXd bins() const {
    Eigen::VectorXd out(bin_count());
    for (Eigen::Index k = 0; k < bin_count(); ++k) out(k) = omega(k);
    return out;
  }

  bool operator==(const FrequencyGrid&) const = default;
};

template <typename Scalar>
struct BasicOneSidedSpectrum {
  MatrixX<Scalar> amplitude;  // M x K, >= 0
  MatrixX<Scalar> phase;      // M x K, radians in (-pi, pi]
  FrequencyGrid grid;
};

using OneSidedSpectrum = BasicOneSidedSpectrum<double>;

namespace detail {

/// cos/sin of 2 pi n / T, exact at quarter turns so that e.g. T = 4 produces
/// exact zeros instead of 6e-17.
template <typename Scalar>
struct Twiddles {
  std::vector<Scalar> cos_table, sin_table;

  explicit Twiddles(Eigen::Index T) : cos_table(static_cast<std::size_t>(T)), sin_table(static_cast<std::size_t>(T)) {
    for (Eigen::Index n = 0; n < T; ++n) {
      const auto i = static_cast<std::size_t>(n);
      if ((4 * n) % T == 0) {
        static constexpr int kCos[4] = {1, 0, -1, 0};
        static constexpr int kSin[4] = {0, 1, 0, -1};
        const auto quadrant = static_cast<int>((4 * n) / T);
        cos_table[i] = static_cast<Scalar>(kCos[quadrant]);
        sin_table[i] = static_cast<Scalar>(kSin[quadrant]);
      } else {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(T);
        cos_table[i] = static_cast<Scalar>(std::cos(angle));
        sin_table[i] = static_cast<Scalar>(std::sin(angle));
      }
    }
  }
};

template <typename Scalar>
bool is_real_axis_phase(Scalar phase) {
  constexpr double kTol = 1e-12;
  const double p = static_cast<double>(phase);
  return std::abs(p) <= kTol || std::abs(std::abs(p) - std::numbers::pi) <= kTol;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& values, const char* what) {
  if (!values.allFinite()) throw SpectralError(std::string(what) + " contains non-finite entries");
}

}  // namespace detail

/// Validates the clip invariants (finite entries, T >= 2, M >= 1).
template <typename Scalar>
void validate(const BasicPatchSignalClip<Scalar>& clip) {
  if (clip.patch_count() < 1) throw SpectralError("clip has no patches");
  if (clip.frame_count() < 2) throw SpectralError("clip needs at least 2 frames, got " + std::to_string(clip.frame_count()));
  detail::require_finite(clip.signals, "clip");
}

/// Row-wise one-sided DFT of a real M x T matrix.
template <typename Derived>
BasicOneSidedSpectrum<typename Derived::Scalar> dft_onesided(const Eigen::MatrixBase<Derived>& signals) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index M = signals.rows();
  const Eigen::Index T = signals.cols();
  FrequencyGrid grid(T);
  if (M < 1) throw SpectralError("clip has no patches");
  detail::require_finite(signals, "clip");

  const Eigen::Index K = grid.bin_count();
  const detail::Twiddles<Scalar> tw(T);
  BasicOneSidedSpectrum<Scalar> out{MatrixX<Scalar>(M, K), MatrixX<Scalar>(M, K), grid};
  // Anything below this is rounding noise relative to the largest possible |X|.
  const Scalar eps = Scalar(64) * Eigen::NumTraits<Scalar>::epsilon();

  for (Eigen::Index m = 0; m < M; ++m) {
    const Scalar scale = signals.row(m).cwiseAbs().sum();
    for (Eigen::Index k = 0; k < K; ++k) {
      Scalar re = 0, im = 0;
      for (Eigen::Index t = 0; t < T; ++t) {
        const auto n = static_cast<std::size_t>((k * t) % T);
        re += signals(m, t) * tw.cos_table[n];
        im -= signals(m, t) * tw.sin_table[n];
      }
      const bool real_axis = k == 0 || (grid.has_nyquist() && k == grid.nyquist_bin());
      if (real_axis) im = 0;
      const Scalar amp = std::hypot(re, im);
      if (amp <= eps * scale) {
        out.amplitude(m, k) = 0;
        out.phase(m, k) = 0;
      } else if (real_axis) {
        out.amplitude(m, k) = amp;
        out.phase(m, k) = re >= 0 ? Scalar(0) : Scalar(std::numbers::pi);
      } else {
        out.amplitude(m, k) = amp;
        Scalar p = std::atan2(im, re);
        if (p <= -Scalar(std::numbers::pi)) p = Scalar(std::numbers::pi);
        out.phase(m, k) = p;
      }
    }
  }
  return out;
}

template <typename Scalar>
BasicOneSidedSpectrum<Scalar> dft_onesided(const BasicPatchSignalClip<Scalar>& clip) {
  validate(clip);
  return dft_onesided(clip.signals);
}

/// Inverse of the one-sided spectrum for row-stacked patches: mirrors to the
/// negative frequencies (Nyquist is not mirrored for even T) and applies the
/// 1/T inverse. The imaginary residual is checked, not dropped silently.
template <typename DerivedA, typename DerivedP>
MatrixX<typename DerivedA::Scalar> idft_rows(const Eigen::MatrixBase<DerivedA>& amplitude,
                                             const Eigen::MatrixBase<DerivedP>& phase, const FrequencyGrid& grid) {
  using Scalar = typename DerivedA::Scalar;
  const Eigen::Index T = grid.frame_count;
  const Eigen::Index K = grid.bin_count();
  if (amplitude.cols() != K || phase.cols() != K || amplitude.rows() != phase.rows())
    throw SpectralError("spectrum shape does not match the frequency grid");
  detail::require_finite(amplitude, "amplitude");
  detail::require_finite(phase, "phase");

  const Eigen::Index M = amplitude.rows();
  const detail::Twiddles<Scalar> tw(T);
  MatrixX<Scalar> out(M, T);
  const Scalar max_amp = M > 0 ? amplitude.cwiseAbs().maxCoeff() : Scalar(0);
  const Scalar inv_T = Scalar(1) / static_cast<Scalar>(T);

  for (Eigen::Index m = 0; m < M; ++m) {
    const Eigen::Index last = grid.has_nyquist() ? grid.nyquist_bin() : K;
    for (Eigen::Index k : {Eigen::Index{0}, grid.has_nyquist() ? grid.nyquist_bin() : Eigen::Index{0}}) {
      if (!detail::is_real_axis_phase(phase(m, k)))
        throw SpectralError("DC/Nyquist phase must be 0 or pi for a real signal (patch " + std::to_string(m) +
                            ", bin " + std::to_string(k) + ")");
    }
    // Full spectrum: X(k) for k < K, X(T-k) = conj(X(k)) for the mirrored half.
    std::vector<std::complex<Scalar>> full(static_cast<std::size_t>(T));
    for (Eigen::Index k = 0; k < K; ++k) full[static_cast<std::size_t>(k)] = std::polar(amplitude(m, k), phase(m, k));
    for (Eigen::Index k = 1; k < last; ++k) full[static_cast<std::size_t>(T - k)] = std::conj(full[static_cast<std::size_t>(k)]);

    Scalar max_imag = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      Scalar re = 0, im = 0;
      for (Eigen::Index k = 0; k < T; ++k) {
        const auto n = static_cast<std::size_t>((k * t) % T);
        const auto& X = full[static_cast<std::size_t>(k)];
        re += X.real() * tw.cos_table[n] - X.imag() * tw.sin_table[n];
        im += X.real() * tw.sin_table[n] + X.imag() * tw.cos_table[n];
      }
      out(m, t) = re * inv_T;
      max_imag = std::max(max_imag, std::abs(im * inv_T));
    }
    if (max_imag > Scalar(1e-9) * max_amp)
      throw SpectralError("inverse DFT produced an imaginary residual of " + std::to_string(static_cast<double>(max_imag)));
  }
  return out;
}

template <typename Scalar>
BasicPatchSignalClip<Scalar> idft_real(const BasicOneSidedSpectrum<Scalar>& spectrum, double fps = 25.0) {
  return {idft_rows(spectrum.amplitude, spectrum.phase, spectrum.grid), fps};
}

/// Joint min-max over all (patch, bin) entries; a flat spectrum maps to zeros.
template <typename Derived>
MatrixX<typename Derived::Scalar> minmax_normalize_amplitude(const Eigen::MatrixBase<Derived>& amplitude) {
  using Scalar = typename Derived::Scalar;
  const Scalar lo = amplitude.minCoeff();
  const Scalar hi = amplitude.maxCoeff();
  if (!(hi > lo)) return MatrixX<Scalar>::Zero(amplitude.rows(), amplitude.cols());
  MatrixX<Scalar> out = (amplitude.array() - lo) / (hi - lo);
  // Pin the extremes so min = 0 and max = 1 hold exactly.
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      if (amplitude(i, j) == lo) out(i, j) = 0;
      if (amplitude(i, j) == hi) out(i, j) = 1;
    }
  return out;
}

template <typename Scalar>
MatrixX<Scalar> minmax_normalize_amplitude(const BasicOneSidedSpectrum<Scalar>& spectrum) {
  return minmax_normalize_amplitude(spectrum.amplitude);
}

/// Rebuilds time-domain rows from a new amplitude and the original phase.
/// Negative amplitude is rejected: a sign flip would be a hidden phase edit.
template <typename DerivedA, typename DerivedP>
MatrixX<typename DerivedA::Scalar> recompose_rows(const Eigen::MatrixBase<DerivedA>& amplitude,
                                                  const Eigen::MatrixBase<DerivedP>& phase, const FrequencyGrid& grid) {
  if ((amplitude.array() < 0).any()) throw SpectralError("recompose: negative amplitude");
  return idft_rows(amplitude, phase, grid);
}

template <typename Scalar>
BasicPatchSignalClip<Scalar> recompose(const MatrixX<Scalar>& amplitude, const MatrixX<Scalar>& phase,
                                       const FrequencyGrid& grid, double fps = 25.0) {
  return {recompose_rows(amplitude, phase, grid), fps};
}

/// Dense frame stack, row-major (t, y, x, c) with c in {1, 3}.
struct FrameStack {
  Eigen::Index frame_count = 0, height = 0, width = 0, channels = 1;
  std::vector<double> data;

  double at(Eigen::Index t, Eigen::Index y, Eigen::Index x, Eigen::Index c = 0) const {
    return data[static_cast<std::size_t>(((t * height + y) * width + x) * channels + c)];
  }
};

struct Roi {
  Eigen::Index x = 0, y = 0, width = 0, height = 0;
};

struct PatchGridSpec {
  Eigen::Index rows = 4, cols = 4;
  Roi roi;

  Eigen::Index patch_count() const { return rows * cols; }
};

/// Mean luminance of each grid patch per frame, patches in row-major order.
/// Remainder pixels on the right/bottom edges belong to the last patch.
PatchSignalClip extract_patch_signals(const FrameStack& frames, const PatchGridSpec& grid, double fps = 25.0);

}  // namespace spinshield
