#pragma once

// Planted-shortcut clips. Both classes share a base of low-frequency
// sinusoids and carry a one-sided decaying transient; fakes play it
// time-reversed, which leaves amplitude spectra unchanged and puts the class
// difference in phase only. Fakes also carry an extra sinusoid at the
// shortcut bin, an amplitude cue any amplitude attack can remove.

#include "spinshield/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spinshield::synth {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  int n_clips = 2000;
  int frame_count = 16;
  int patch_count = 16;
  int shortcut_bin = 5;
  double shortcut_amplitude = 0.8;
  double phase_cue_strength = 3.0;
  std::vector<double> base_amplitudes{1.0, 0.6, 0.3};
  std::vector<int> base_bins{1, 2, 3};
  double noise_std = 0.6;
  double offset_low = 0.3, offset_high = 0.7;  // per-patch DC level b_m
  double cue_decay = 1.5;                       // transient time constant, frames
  double fps = 25.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

struct LabeledClip {
  PatchSignalClip clip;
  int label = 0;  // 0 real, 1 fake
  std::size_t index = 0;
  int cue_onset = 0;  // t0 of the transient (in forward time)
};

/// Clip `index` of the dataset; labels alternate starting with fake, so a
/// dataset of n clips holds exactly ceil(n/2) fakes.
LabeledClip generate_clip(const DatasetSpec& spec, std::size_t index);
std::vector<LabeledClip> generate_dataset(const DatasetSpec& spec);

/// Signed time-asymmetry of the phase-only reconstruction, averaged over
/// patches. Negative for a sharp drop followed by slow recovery (real),
/// positive for the reverse. Depends on the phase spectrum alone.
double phase_cue_statistic(const PatchSignalClip& clip);

enum class ClipFormat { Csv, Binary };
ClipFormat format_from_string(const std::string& name);
std::string to_string(ClipFormat f);

/// CSV: header clip,label,m,t,value plus sidecar {M, T, fps, n_clips}.
/// Binary: repeated SPSC records each followed by a u32 label.
void save_clips(const std::filesystem::path& path, const std::vector<LabeledClip>& clips, ClipFormat format);
std::vector<LabeledClip> load_clips(const std::filesystem::path& path, ClipFormat format);

struct Manifest {
  DatasetSpec spec;
  ClipFormat format = ClipFormat::Binary;
  std::filesystem::path data_file;  // relative to the manifest's directory
  std::vector<int> labels;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
/// Loads the clips a manifest points at and checks them against its labels.
std::vector<LabeledClip> load_manifest_clips(const std::filesystem::path& manifest_path);

void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);

}  // namespace spinshield::synth
