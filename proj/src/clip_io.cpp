#include "spinshield/clip_io.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace spinshield::io {

static_assert(std::endian::native == std::endian::little, "binary clip format assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'P', 'S', 'C'};

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw FormatError("cannot format value");
  return std::string(buf.data(), ptr);
}

std::optional<double> parse_double(std::string_view token) {
  while (!token.empty() && (token.back() == '\r' || token.back() == ' ')) token.remove_suffix(1);
  while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) return std::nullopt;
  return value;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void write_clip_csv(const std::filesystem::path& csv_path, const PatchSignalClip& clip) {
  validate(clip);
  auto out = open_out(csv_path);
  out << "m,t,value\n";
  for (Eigen::Index m = 0; m < clip.patch_count(); ++m)
    for (Eigen::Index t = 0; t < clip.frame_count(); ++t) out << m << ',' << t << ',' << format_double(clip.signals(m, t)) << '\n';
  nlohmann::json meta = {{"M", clip.patch_count()}, {"T", clip.frame_count()}, {"fps", clip.fps}};
  open_out(sidecar_path(csv_path)) << meta.dump(2) << '\n';
}

PatchSignalClip read_clip_csv(const std::filesystem::path& csv_path) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(open_in(sidecar_path(csv_path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad sidecar for " + csv_path.string() + ": " + e.what());
  }
  const auto M = meta.at("M").get<Eigen::Index>();
  const auto T = meta.at("T").get<Eigen::Index>();
  if (M < 1 || T < 2) throw FormatError("sidecar declares an invalid shape");
  PatchSignalClip clip{Eigen::MatrixXd::Constant(M, T, std::numeric_limits<double>::quiet_NaN()), meta.value("fps", 25.0)};
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen = decltype(seen)::Constant(M, T, false);

  auto in = open_in(csv_path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("m,t,value", 0) != 0)
    throw FormatError(csv_path.string() + ":1: expected header m,t,value");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line, ',');
    const auto where = csv_path.string() + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != 3) throw FormatError(where + "expected 3 fields");
    const auto m = parse_double(fields[0]);
    const auto t = parse_double(fields[1]);
    const auto v = parse_double(fields[2]);
    if (!m || !t || !v) throw FormatError(where + "malformed number");
    if (*m < 0 || *m >= static_cast<double>(M) || *t < 0 || *t >= static_cast<double>(T))
      throw FormatError(where + "index out of range");
    if (!std::isfinite(*v)) throw FormatError(where + "non-finite value");
    const auto mi = static_cast<Eigen::Index>(*m);
    const auto ti = static_cast<Eigen::Index>(*t);
    if (seen(mi, ti)) throw FormatError(where + "duplicate sample");
    seen(mi, ti) = true;
    clip.signals(mi, ti) = *v;
  }
  if (!seen.all()) throw FormatError(csv_path.string() + ": missing samples");
  return clip;
}

void write_u32(std::ostream& out, std::uint32_t value) { out.write(reinterpret_cast<const char*>(&value), sizeof value); }

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t value = 0;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw FormatError(std::string("truncated ") + what);
  return value;
}

void write_binary_record(std::ostream& out, const PatchSignalClip& clip) {
  validate(clip);
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, static_cast<std::uint32_t>(clip.patch_count()));
  write_u32(out, static_cast<std::uint32_t>(clip.frame_count()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = clip.signals;
  out.write(reinterpret_cast<const char*>(row_major.data()), static_cast<std::streamsize>(row_major.size() * sizeof(double)));
}

std::optional<PatchSignalClip> read_binary_record(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() == 0 && in.eof()) return std::nullopt;
  if (in.gcount() != 4 || magic != kMagic) throw FormatError("bad magic: expected SPSC");
  const auto M = read_u32(in, "header");
  const auto T = read_u32(in, "header");
  if (M < 1 || T < 2) throw FormatError("record declares an invalid shape");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(M, T);
  if (!in.read(reinterpret_cast<char*>(row_major.data()), static_cast<std::streamsize>(row_major.size() * sizeof(double))))
    throw FormatError("truncated signal payload");
  PatchSignalClip clip{row_major, 25.0};
  if (!clip.signals.allFinite()) throw FormatError("record contains non-finite values");
  return clip;
}

void write_clip_binary(const std::filesystem::path& path, const PatchSignalClip& clip) {
  auto out = open_out(path, std::ios::binary);
  write_binary_record(out, clip);
}

PatchSignalClip read_clip_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  auto clip = read_binary_record(in);
  if (!clip) throw FormatError(path.string() + ": empty file");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after record");
  return *clip;
}

}  // namespace spinshield::io
