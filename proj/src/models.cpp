#include "spinshield/models.hpp"

#include "spinshield/clip_io.hpp"
#include "spinshield/rng.hpp"

#include <atomic>
#include <cmath>
#include <fstream>

namespace spinshield::models {

namespace {

std::atomic<std::uint64_t> g_lsa_calls{0};

Parameter make_weight(const std::string& name, int fan_in, int fan_out, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix w(fan_in, fan_out);
  for (int i = 0; i < fan_in; ++i)
    for (int j = 0; j < fan_out; ++j) w(i, j) = rng.uniform(-bound, bound);
  return {name, std::move(w)};
}

Parameter make_bias(const std::string& name, int width) { return {name, Matrix::Zero(1, width)}; }

Var put(Tape& tape, Parameter& p, bool trainable) { return trainable ? tape.param(p) : tape.constant(p.value); }

Matrix affine(const Matrix& x, const Parameter& w, const Parameter& b) {
  Matrix y = x * w.value;
  y.rowwise() += b.value.row(0);
  return y;
}

Matrix standardize(const Matrix& x) {
  const auto n = static_cast<double>(x.cols());
  const Eigen::VectorXd mu = x.rowwise().mean();
  const Matrix centered = x.colwise() - mu;
  const Eigen::VectorXd inv_sd = ((centered.array().square().rowwise().sum() / n) + kStandardizeEps).rsqrt();
  return centered.array().colwise() * inv_sd.array();
}

Matrix features_of(const ModelBundle& m, const Matrix& flat) {
  if (flat.cols() != m.enc_w1.value.rows())
    throw ModelError("encode: input width " + std::to_string(flat.cols()) + ", expected " +
                     std::to_string(m.enc_w1.value.rows()));
  const Matrix h1 = affine(standardize(flat), m.enc_w1, m.enc_b1).array().tanh();
  return affine(h1, m.enc_w2, m.enc_b2).array().tanh();
}

Eigen::Vector2d softmax2(const Eigen::RowVectorXd& logits) {
  const double mx = logits.maxCoeff();
  const Eigen::RowVectorXd e = (logits.array() - mx).exp();
  return (e / e.sum()).transpose();
}

constexpr std::array<char, 4> kCheckpointMagic = {'S', 'P', 'C', 'K'};

}  // namespace

std::vector<Parameter*> ModelBundle::encoder_params() { return {&enc_w1, &enc_b1, &enc_w2, &enc_b2}; }
std::vector<Parameter*> ModelBundle::head_params() { return {&head_w, &head_b}; }
std::vector<Parameter*> ModelBundle::domain_params() { return {&dom_w1, &dom_b1, &dom_w2, &dom_b2}; }
std::vector<Parameter*> ModelBundle::generator_params() { return {&gen_w1, &gen_b1, &gen_w2, &gen_b2}; }

std::vector<Parameter*> ModelBundle::all_params() {
  return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &head_w, &head_b, &dom_w1,
          &dom_b1, &dom_w2, &dom_b2, &gen_w1, &gen_b1, &gen_w2, &gen_b2};
}

std::vector<const Parameter*> ModelBundle::all_params() const {
  return {&enc_w1, &enc_b1, &enc_w2, &enc_b2, &head_w, &head_b, &dom_w1,
          &dom_b1, &dom_w2, &dom_b2, &gen_w1, &gen_b1, &gen_w2, &gen_b2};
}

void ModelBundle::zero_grad() {
  for (auto* p : all_params()) p->zero_grad();
}

ModelBundle init_model(const ModelDims& dims, double alpha, std::uint64_t seed) {
  if (dims.patch_count < 1 || dims.frame_count < 2 || dims.hidden < 1 || dims.feature < 1 || dims.domain_hidden < 1 ||
      dims.generator_hidden < 1)
    throw ModelError("invalid model dimensions");
  if (!(alpha > 0)) throw ModelError("alpha must be positive");
  CounterRng rng(seed, 0x6d6f64656cULL);
  ModelBundle m;
  m.dims = dims;
  m.alpha = alpha;
  const int K = dims.bin_count();
  m.enc_w1 = make_weight("enc_w1", dims.input_width(), dims.hidden, rng);
  m.enc_b1 = make_bias("enc_b1", dims.hidden);
  m.enc_w2 = make_weight("enc_w2", dims.hidden, dims.feature, rng);
  m.enc_b2 = make_bias("enc_b2", dims.feature);
  m.head_w = make_weight("head_w", dims.feature, 2, rng);
  m.head_b = make_bias("head_b", 2);
  m.dom_w1 = make_weight("dom_w1", dims.feature, dims.domain_hidden, rng);
  m.dom_b1 = make_bias("dom_b1", dims.domain_hidden);
  m.dom_w2 = make_weight("dom_w2", dims.domain_hidden, 2, rng);
  m.dom_b2 = make_bias("dom_b2", 2);
  m.gen_w1 = make_weight("gen_w1", K, dims.generator_hidden, rng);
  m.gen_b1 = make_bias("gen_b1", dims.generator_hidden);
  m.gen_w2 = make_weight("gen_w2", dims.generator_hidden, K, rng);
  m.gen_b2 = make_bias("gen_b2", K);
  return m;
}

Bound bind(Tape& tape, ModelBundle& m, unsigned trainable) {
  const bool e = trainable & kEncoder, h = trainable & kHead, d = trainable & kDomain, g = trainable & kGenerator;
  return {put(tape, m.enc_w1, e), put(tape, m.enc_b1, e), put(tape, m.enc_w2, e), put(tape, m.enc_b2, e),
          put(tape, m.head_w, h), put(tape, m.head_b, h),
          put(tape, m.dom_w1, d), put(tape, m.dom_b1, d), put(tape, m.dom_w2, d), put(tape, m.dom_b2, d),
          put(tape, m.gen_w1, g), put(tape, m.gen_b1, g), put(tape, m.gen_w2, g), put(tape, m.gen_b2, g)};
}

Matrix flatten_clips(const std::vector<const PatchSignalClip*>& clips) {
  if (clips.empty()) throw ModelError("flatten_clips: empty batch");
  const auto M = clips.front()->patch_count();
  const auto T = clips.front()->frame_count();
  Matrix out(static_cast<Eigen::Index>(clips.size()), M * T);
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const auto& s = clips[b]->signals;
    if (s.rows() != M || s.cols() != T) throw ModelError("flatten_clips: clips differ in shape");
    for (Eigen::Index m = 0; m < M; ++m) out.block(static_cast<Eigen::Index>(b), m * T, 1, T) = s.row(m);
  }
  return out;
}

Var encode(const Bound& p, const Var& flat_clips) {
  if (flat_clips.cols() != p.enc_w1.rows())
    throw ModelError("encode: input width " + std::to_string(flat_clips.cols()) + ", expected " +
                     std::to_string(p.enc_w1.rows()));
  const Var x = ad::standardize_rows(flat_clips, kStandardizeEps);
  const Var h1 = ad::tanh(ad::add_row(ad::matmul(x, p.enc_w1), p.enc_b1));
  return ad::tanh(ad::add_row(ad::matmul(h1, p.enc_w2), p.enc_b2));
}

Var class_logits(const Bound& p, const Var& features) { return ad::add_row(ad::matmul(features, p.head_w), p.head_b); }

Var domain_logits(const Bound& p, const Var& features, bool through_grl) {
  const Var in = through_grl ? ad::grl(features) : features;
  const Var h = ad::tanh(ad::add_row(ad::matmul(in, p.dom_w1), p.dom_b1));
  return ad::add_row(ad::matmul(h, p.dom_w2), p.dom_b2);
}

Var generator_field(const Bound& p, const Var& normalized_rows) {
  const Var h = ad::tanh(ad::add_row(ad::matmul(normalized_rows, p.gen_w1), p.gen_b1));
  return ad::add_row(ad::matmul(h, p.gen_w2), p.gen_b2);
}

SpectralBatch spectral_batch(const std::vector<const OneSidedSpectrum*>& spectra) {
  if (spectra.empty()) throw ModelError("spectral_batch: empty batch");
  const auto M = spectra.front()->amplitude.rows();
  const auto K = spectra.front()->amplitude.cols();
  const auto rows = M * static_cast<Eigen::Index>(spectra.size());
  SpectralBatch out{Matrix(rows, K), Matrix(rows, K), Matrix(rows, K), spectra.front()->grid, static_cast<int>(M)};
  for (std::size_t b = 0; b < spectra.size(); ++b) {
    const auto& s = *spectra[b];
    if (s.amplitude.rows() != M || !(s.grid == out.grid)) throw ModelError("spectral_batch: spectra differ in shape");
    const auto r = static_cast<Eigen::Index>(b) * M;
    out.amplitude.middleRows(r, M) = s.amplitude;
    out.phase.middleRows(r, M) = s.phase;
    out.normalized.middleRows(r, M) = minmax_normalize_amplitude(s);
  }
  return out;
}

LsaGraph lsa_graph(const Bound& p, const SpectralBatch& batch, double alpha, double delta) {
  ++g_lsa_calls;
  Tape& tape = p.gen_w1.tape();
  const Var field = generator_field(p, tape.constant(batch.normalized));
  const Var gain = ad::exp(ad::scale(ad::tanh(field), alpha));
  const Var amp = ad::mul(tape.constant(batch.amplitude), gain);
  const Matrix inv = (batch.amplitude.array() + delta).inverse();
  const Var mask = ad::mul(amp, tape.constant(inv));
  const Var rows = ad::recompose_with_phase(amp, batch.phase, batch.grid);
  return {amp, mask, ad::fold_rows(rows, batch.patch_count)};
}

LsaResult lsa_perturb(ModelBundle& model, const OneSidedSpectrum& spectrum, double fps) {
  Tape tape;
  const Bound p = bind(tape, model, 0);
  const auto batch = spectral_batch({&spectrum});
  const auto g = lsa_graph(p, batch, model.alpha, model.delta);
  PatchSignalClip clip{recompose_rows(g.amplitude.value(), spectrum.phase, spectrum.grid), fps};
  return {std::move(clip), g.amplitude.value(), g.mask.value()};
}

std::uint64_t lsa_invocations() { return g_lsa_calls.load(); }

Eigen::VectorXd encode(const ModelBundle& model, const PatchSignalClip& clip) {
  return features_of(model, flatten_clips({&clip})).row(0).transpose();
}

Eigen::Vector2d classify(const ModelBundle& model, const Eigen::VectorXd& h) {
  return softmax2(affine(h.transpose(), model.head_w, model.head_b).row(0));
}

Eigen::Vector2d discriminate_domain(const ModelBundle& model, const Eigen::VectorXd& h) {
  const Matrix hidden = affine(h.transpose(), model.dom_w1, model.dom_b1).array().tanh();
  return softmax2(affine(hidden, model.dom_w2, model.dom_b2).row(0));
}

Matrix features(const ModelBundle& model, const std::vector<const PatchSignalClip*>& clips) {
  return features_of(model, flatten_clips(clips));
}

std::vector<double> score_clips(const ModelBundle& model, const std::vector<const PatchSignalClip*>& clips) {
  if (clips.empty()) return {};
  const Matrix logits = affine(features_of(model, flatten_clips(clips)), model.head_w, model.head_b);
  std::vector<double> out(clips.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = softmax2(logits.row(i))(1);
  return out;
}

void to_json(nlohmann::json& j, const ModelDims& d) {
  j = {{"patch_count", d.patch_count}, {"frame_count", d.frame_count}, {"hidden", d.hidden},
       {"feature", d.feature}, {"domain_hidden", d.domain_hidden}, {"generator_hidden", d.generator_hidden}};
}

void from_json(const nlohmann::json& j, ModelDims& d) {
  ModelDims def;
  d.patch_count = j.value("patch_count", def.patch_count);
  d.frame_count = j.value("frame_count", def.frame_count);
  d.hidden = j.value("hidden", def.hidden);
  d.feature = j.value("feature", def.feature);
  d.domain_hidden = j.value("domain_hidden", def.domain_hidden);
  d.generator_hidden = j.value("generator_hidden", def.generator_hidden);
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model, const nlohmann::json& metadata) {
  nlohmann::json header = {{"dims", model.dims}, {"alpha", model.alpha}, {"delta", model.delta},
                           {"metadata", metadata}, {"tensors", nlohmann::json::array()}};
  std::size_t offset = 0;
  for (const auto* p : model.all_params()) {
    header["tensors"].push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(p->value.size());
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::FormatError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  io::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : model.all_params()) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = p->value;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  }
  if (!out) throw io::FormatError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::FormatError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw io::FormatError(path.string() + ": not a checkpoint (bad magic)");
  const auto len = io::read_u32(in, "checkpoint header");
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw io::FormatError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(path.string() + ": bad header: " + e.what());
  }
  const auto dims = header.at("dims").get<ModelDims>();
  Checkpoint ck{init_model(dims, header.at("alpha").get<double>(), 0), header.value("metadata", nlohmann::json::object())};
  ck.model.delta = header.at("delta").get<double>();
  const auto& tensors = header.at("tensors");
  auto params = ck.model.all_params();
  if (tensors.size() != params.size()) throw ModelError(path.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<Eigen::Index>() != p.value.rows() ||
        t.at("cols").get<Eigen::Index>() != p.value.cols())
      throw ModelError(path.string() + ": tensor " + t.at("name").get<std::string>() + " does not match the declared dims");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(p.value.rows(), p.value.cols());
    if (!in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double))))
      throw io::FormatError(path.string() + ": truncated tensor blob");
    p.value = rm;
    p.zero_grad();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw io::FormatError(path.string() + ": trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelDims& expected) {
  auto ck = load_checkpoint(path);
  if (!(ck.model.dims == expected))
    throw ModelError(path.string() + ": checkpoint dims " + nlohmann::json(ck.model.dims).dump() + " do not match expected " +
                     nlohmann::json(expected).dump());
  return ck;
}

}  // namespace spinshield::models
