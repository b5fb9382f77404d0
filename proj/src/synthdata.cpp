#include "spinshield/synthdata.hpp"

#include "spinshield/clip_io.hpp"
#include "spinshield/rng.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace spinshield::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int grid_rows(int patch_count) {
  int rows = 1;
  for (int r = 1; r * r <= patch_count; ++r)
    if (patch_count % r == 0) rows = r;
  return rows;
}

}  // namespace

void DatasetSpec::validate() const {
  if (n_clips < 1) throw DataError("n_clips must be positive");
  if (frame_count < 4) throw DataError("frame_count must be at least 4");
  if (patch_count < 1) throw DataError("patch_count must be positive");
  const int half = frame_count / 2;
  if (shortcut_bin < 1 || shortcut_bin > half - 1)
    throw DataError("shortcut_bin must lie in [1, " + std::to_string(half - 1) + "]");
  if (base_amplitudes.size() != base_bins.size()) throw DataError("base_amplitudes and base_bins differ in length");
  for (int k : base_bins) {
    if (k < 1 || k > half) throw DataError("base bin " + std::to_string(k) + " out of range");
    if (k == shortcut_bin) throw DataError("shortcut_bin collides with a base component bin");
  }
  if (!(shortcut_amplitude >= 0) || !(phase_cue_strength >= 0) || !(noise_std >= 0))
    throw DataError("amplitudes and noise_std must be non-negative");
  if (!(offset_low <= offset_high)) throw DataError("offset range is empty");
  if (!(cue_decay > 0)) throw DataError("cue_decay must be positive");
  if (!(fps > 0)) throw DataError("fps must be positive");
}

LabeledClip generate_clip(const DatasetSpec& spec, std::size_t index) {
  const int T = spec.frame_count, M = spec.patch_count;
  const int rows = grid_rows(M), cols = M / rows;
  CounterRng rng(spec.seed, index + 1);
  const bool fake = index % 2 == 0;

  Eigen::MatrixXd x(M, T);
  for (int m = 0; m < M; ++m) x.row(m).setConstant(rng.uniform(spec.offset_low, spec.offset_high));
  const int t0 = static_cast<int>(rng.uniform_int(T / 4, 3 * T / 4));

  for (std::size_t i = 0; i < spec.base_bins.size(); ++i) {
    const double base = rng.uniform(0, kTwoPi);
    const double slope_r = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    const double slope_c = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    for (int m = 0; m < M; ++m) {
      const double phase = base + slope_r * (m / cols) / rows + slope_c * (m % cols) / cols;
      for (int t = 0; t < T; ++t)
        x(m, t) += spec.base_amplitudes[i] * std::sin(kTwoPi * spec.base_bins[i] * t / T + phase);
    }
  }

  for (int m = 0; m < M; ++m) {
    const double weight = spec.phase_cue_strength * rng.uniform(0.5, 1.0);
    for (int t = 0; t < T; ++t) {
      const int tt = fake ? T - 1 - t : t;
      if (tt >= t0) x(m, t) -= weight * std::exp(-(tt - t0) / spec.cue_decay);
    }
  }

  if (fake) {
    const double psi = rng.uniform(0, kTwoPi);
    for (int t = 0; t < T; ++t) x.col(t).array() += spec.shortcut_amplitude * std::sin(kTwoPi * spec.shortcut_bin * t / T + psi);
  }

  for (int m = 0; m < M; ++m)
    for (int t = 0; t < T; ++t) x(m, t) += spec.noise_std * rng.normal();

  return {PatchSignalClip{std::move(x), spec.fps}, fake ? 1 : 0, index, t0};
}

std::vector<LabeledClip> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<LabeledClip> out;
  out.reserve(static_cast<std::size_t>(spec.n_clips));
  for (int i = 0; i < spec.n_clips; ++i) out.push_back(generate_clip(spec, static_cast<std::size_t>(i)));
  return out;
}

double phase_cue_statistic(const PatchSignalClip& clip) {
  const auto spec = dft_onesided(clip);
  const auto T = clip.frame_count();
  const auto K = spec.grid.bin_count();
  double total = 0;
  for (Eigen::Index m = 0; m < clip.patch_count(); ++m) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(T);
    for (Eigen::Index k = 1; k < K; ++k) {
      if (spec.amplitude(m, k) == 0) continue;
      for (Eigen::Index t = 0; t < T; ++t)
        y(t) += std::cos(kTwoPi * static_cast<double>((k * t) % T) / static_cast<double>(T) + spec.phase(m, k));
    }
    const Eigen::VectorXd d = y.tail(T - 1) - y.head(T - 1);
    const double s2 = d.squaredNorm();
    if (s2 > 0) total += d.array().cube().sum() / std::pow(s2, 1.5);
  }
  return total / static_cast<double>(clip.patch_count());
}

ClipFormat format_from_string(const std::string& name) {
  if (name == "csv") return ClipFormat::Csv;
  if (name == "binary" || name == "bin") return ClipFormat::Binary;
  throw DataError("unknown clip format '" + name + "' (expected csv or binary)");
}

std::string to_string(ClipFormat f) { return f == ClipFormat::Csv ? "csv" : "binary"; }

void save_clips(const std::filesystem::path& path, const std::vector<LabeledClip>& clips, ClipFormat format) {
  if (clips.empty()) throw DataError("no clips to save");
  const auto M = clips.front().clip.patch_count(), T = clips.front().clip.frame_count();
  for (const auto& c : clips) {
    validate(c.clip);
    if (c.clip.patch_count() != M || c.clip.frame_count() != T) throw DataError("clips differ in shape");
  }
  if (format == ClipFormat::Binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io::FormatError("cannot open " + path.string() + " for writing");
    for (const auto& c : clips) {
      io::write_binary_record(out, c.clip);
      io::write_u32(out, static_cast<std::uint32_t>(c.label));
    }
    return;
  }
  std::ofstream out(path);
  if (!out) throw io::FormatError("cannot open " + path.string() + " for writing");
  out << "clip,label,m,t,value\n";
  for (std::size_t i = 0; i < clips.size(); ++i)
    for (Eigen::Index m = 0; m < M; ++m)
      for (Eigen::Index t = 0; t < T; ++t)
        out << i << ',' << clips[i].label << ',' << m << ',' << t << ',' << io::format_double(clips[i].clip.signals(m, t)) << '\n';
  const nlohmann::json meta = {{"M", M}, {"T", T}, {"fps", clips.front().clip.fps}, {"n_clips", clips.size()}};
  std::ofstream side(io::sidecar_path(path));
  side << meta.dump(2) << '\n';
}

namespace {

std::vector<LabeledClip> load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("cannot open " + path.string() + " for reading");
  std::vector<LabeledClip> out;
  while (true) {
    std::optional<PatchSignalClip> clip;
    try {
      clip = io::read_binary_record(in);
    } catch (const io::FormatError& e) {
      throw io::FormatError(path.string() + ": record " + std::to_string(out.size()) + ": " + e.what());
    }
    if (!clip) break;
    const auto label = io::read_u32(in, "label");
    if (label > 1) throw io::FormatError(path.string() + ": record " + std::to_string(out.size()) + ": label must be 0 or 1");
    out.push_back({std::move(*clip), static_cast<int>(label), out.size(), 0});
  }
  if (out.empty()) throw io::FormatError(path.string() + ": no records");
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> f;
  std::size_t start = 0;
  for (std::size_t pos; (pos = line.find(',', start)) != std::string_view::npos; start = pos + 1) f.push_back(line.substr(start, pos - start));
  f.push_back(line.substr(start));
  return f;
}

std::vector<LabeledClip> load_csv(const std::filesystem::path& path) {
  nlohmann::json meta;
  {
    std::ifstream side(io::sidecar_path(path));
    if (!side) throw io::FormatError("missing sidecar " + io::sidecar_path(path).string());
    try {
      meta = nlohmann::json::parse(side);
    } catch (const nlohmann::json::exception& e) {
      throw io::FormatError("bad sidecar for " + path.string() + ": " + e.what());
    }
  }
  const auto M = meta.at("M").get<Eigen::Index>(), T = meta.at("T").get<Eigen::Index>();
  const auto n = meta.at("n_clips").get<std::size_t>();
  const double fps = meta.value("fps", 25.0);
  if (M < 1 || T < 2 || n < 1) throw io::FormatError("sidecar declares an invalid shape");

  std::vector<LabeledClip> out(n);
  std::vector<Eigen::Index> filled(n, 0);
  std::vector<std::vector<bool>> seen(n, std::vector<bool>(static_cast<std::size_t>(M * T), false));
  for (std::size_t i = 0; i < n; ++i) out[i] = {PatchSignalClip{Eigen::MatrixXd::Zero(M, T), fps}, -1, i, 0};

  std::ifstream in(path);
  if (!in) throw io::FormatError("cannot open " + path.string() + " for reading");
  std::string line;
  if (!std::getline(in, line) || line.rfind("clip,label,m,t,value", 0) != 0)
    throw io::FormatError(path.string() + ":1: expected header clip,label,m,t,value");
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty() || line == "\r") continue;
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    const auto f = split_fields(line);
    if (f.size() != 5) throw io::FormatError(where + "expected 5 fields");
    std::array<double, 5> v{};
    for (int i = 0; i < 5; ++i) {
      const auto parsed = io::parse_double(f[static_cast<std::size_t>(i)]);
      if (!parsed) throw io::FormatError(where + "malformed number in field " + std::to_string(i + 1));
      v[static_cast<std::size_t>(i)] = *parsed;
    }
    if (!std::isfinite(v[4])) throw io::FormatError(where + "non-finite value");
    if (v[0] < 0 || v[0] >= static_cast<double>(n) || v[2] < 0 || v[2] >= static_cast<double>(M) || v[3] < 0 ||
        v[3] >= static_cast<double>(T) || v[0] != std::floor(v[0]) || v[2] != std::floor(v[2]) || v[3] != std::floor(v[3]))
      throw io::FormatError(where + "index out of range");
    if (v[1] != 0 && v[1] != 1) throw io::FormatError(where + "label must be 0 or 1");
    const auto c = static_cast<std::size_t>(v[0]);
    const auto m = static_cast<Eigen::Index>(v[2]), t = static_cast<Eigen::Index>(v[3]);
    auto& clip = out[c];
    if (clip.label >= 0 && clip.label != static_cast<int>(v[1])) throw io::FormatError(where + "label changes within clip");
    clip.label = static_cast<int>(v[1]);
    auto&& slot = seen[c][static_cast<std::size_t>(m * T + t)];
    if (slot) throw io::FormatError(where + "duplicate sample");
    slot = true;
    ++filled[c];
    clip.clip.signals(m, t) = v[4];
  }
  for (std::size_t i = 0; i < n; ++i)
    if (filled[i] != M * T) throw io::FormatError(path.string() + ": clip " + std::to_string(i) + " is missing samples");
  return out;
}

}  // namespace

std::vector<LabeledClip> load_clips(const std::filesystem::path& path, ClipFormat format) {
  return format == ClipFormat::Binary ? load_binary(path) : load_csv(path);
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = {{"n_clips", s.n_clips},
       {"frame_count", s.frame_count},
       {"patch_count", s.patch_count},
       {"shortcut_bin", s.shortcut_bin},
       {"shortcut_amplitude", s.shortcut_amplitude},
       {"phase_cue_strength", s.phase_cue_strength},
       {"base_amplitudes", s.base_amplitudes},
       {"base_bins", s.base_bins},
       {"noise_std", s.noise_std},
       {"offset_low", s.offset_low},
       {"offset_high", s.offset_high},
       {"cue_decay", s.cue_decay},
       {"fps", s.fps},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  static const std::set<std::string> known = {"n_clips",     "frame_count", "patch_count", "shortcut_bin", "shortcut_amplitude",
                                              "phase_cue_strength", "base_amplitudes", "base_bins", "noise_std",
                                              "offset_low",  "offset_high", "cue_decay",   "fps",          "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw DataError("unknown dataset field '" + key + "'");
  DatasetSpec d;
  s.n_clips = j.value("n_clips", d.n_clips);
  s.frame_count = j.value("frame_count", d.frame_count);
  s.patch_count = j.value("patch_count", d.patch_count);
  s.shortcut_bin = j.value("shortcut_bin", d.shortcut_bin);
  s.shortcut_amplitude = j.value("shortcut_amplitude", d.shortcut_amplitude);
  s.phase_cue_strength = j.value("phase_cue_strength", d.phase_cue_strength);
  s.base_amplitudes = j.value("base_amplitudes", d.base_amplitudes);
  s.base_bins = j.value("base_bins", d.base_bins);
  s.noise_std = j.value("noise_std", d.noise_std);
  s.offset_low = j.value("offset_low", d.offset_low);
  s.offset_high = j.value("offset_high", d.offset_high);
  s.cue_decay = j.value("cue_decay", d.cue_decay);
  s.fps = j.value("fps", d.fps);
  s.seed = j.value("seed", d.seed);
  s.validate();
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const nlohmann::json j = {{"spec", manifest.spec},
                            {"seed", manifest.spec.seed},
                            {"format", to_string(manifest.format)},
                            {"data_file", manifest.data_file.generic_string()},
                            {"labels", manifest.labels}};
  std::ofstream out(path);
  if (!out) throw io::FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io::FormatError("cannot open manifest " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("spec").get<DatasetSpec>(), format_from_string(j.at("format").get<std::string>()),
            j.at("data_file").get<std::string>(), j.at("labels").get<std::vector<int>>()};
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError("bad manifest " + path.string() + ": " + e.what());
  }
}

std::vector<LabeledClip> load_manifest_clips(const std::filesystem::path& manifest_path) {
  const auto manifest = read_manifest(manifest_path);
  auto data = manifest.data_file;
  if (data.is_relative()) data = manifest_path.parent_path() / data;
  auto clips = load_clips(data, manifest.format);
  if (clips.size() != manifest.labels.size())
    throw DataError(manifest_path.string() + ": manifest lists " + std::to_string(manifest.labels.size()) + " clips, data file holds " +
                    std::to_string(clips.size()));
  for (std::size_t i = 0; i < clips.size(); ++i)
    if (clips[i].label != manifest.labels[i]) throw DataError(manifest_path.string() + ": label mismatch at clip " + std::to_string(i));
  return clips;
}

}  // namespace spinshield::synth
