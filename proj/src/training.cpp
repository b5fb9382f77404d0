#include "spinshield/training.hpp"

#include "spinshield/clip_io.hpp"
#include "spinshield/rng.hpp"
#include "spinshield/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spinshield::training {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using models::Bound;
using models::ModelBundle;

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::SpinShield: return "spinshield";
    case TrainMode::NaiveAug: return "naive_aug";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "spinshield") return TrainMode::SpinShield;
  if (name == "naive_aug") return TrainMode::NaiveAug;
  throw std::invalid_argument("unknown mode '" + name + "' (expected baseline, spinshield or naive_aug)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (detector_steps_per_generator_step < 1) throw std::invalid_argument("detector_steps_per_generator_step must be positive");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (!(delta > 0)) throw std::invalid_argument("delta must be positive");
  if (!(naive_sigma >= 0)) throw std::invalid_argument("naive_sigma must be non-negative");
  for (const auto* o : {&optimizer, &generator_optimizer})
    if (!(o->lr > 0) || !(o->beta1 >= 0 && o->beta1 < 1) || !(o->beta2 >= 0 && o->beta2 < 1) || !(o->eps > 0))
      throw std::invalid_argument("invalid optimizer settings");
  weights.validate();
}

void Adam::step(const std::vector<ad::Parameter*>& params, bool ascend) {
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double sign = ascend ? 1.0 : -1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() += sign * cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

Split split_dataset(const std::vector<synth::LabeledClip>& data, std::uint64_t seed) {
  Split split;
  CounterRng rng(seed, 0x73706c6974ULL);
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].label == label) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    const std::size_t n_train = idx.size() * 8 / 10, n_val = idx.size() / 10;
    split.train.insert(split.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.insert(split.val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                     idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.insert(split.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& log) {
  out << "step,phase,L_det,L_sym,L_blind,L_gen,mmd,mask_reg,total\n";
  auto field = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << io::format_double(*v);
  };
  for (const auto& r : log) {
    out << r.step << ',' << r.phase;
    for (const auto* v : {&r.L_det, &r.L_sym, &r.L_blind, &r.L_gen, &r.mmd, &r.mask_reg, &r.total}) field(*v);
    out << '\n';
  }
}

namespace {

Matrix fold_numeric(const Matrix& rows, Eigen::Index group) {
  const Eigen::Index B = rows.rows() / group, T = rows.cols();
  Matrix out(B, group * T);
  for (Eigen::Index b = 0; b < B; ++b)
    for (Eigen::Index g = 0; g < group; ++g) out.block(b, g * T, 1, T) = rows.row(b * group + g);
  return out;
}

void check_finite(const LogRow& row) {
  for (const auto* v : {&row.L_det, &row.L_sym, &row.L_blind, &row.L_gen, &row.mmd, &row.mask_reg, &row.total})
    if (*v && !std::isfinite(**v))
      throw NumericalError("non-finite loss at step " + std::to_string(row.step) + " (" + row.phase + " phase)");
}

void require_zero_grads(const std::vector<ad::Parameter*>& params, const char* what) {
  for (const auto* p : params)
    if (!p->grad.isZero(0.0)) throw std::logic_error(std::string("alternation violated: ") + what + " received a gradient");
}

std::vector<int> labels_of(const std::vector<synth::LabeledClip>& data, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(data[i].label);
  return out;
}

}  // namespace

Matrix environment_views(const TrainConfig& config, ModelBundle& model, const models::SpectralBatch& batch,
                         std::uint64_t noise_seed) {
  switch (config.mode) {
    case TrainMode::Baseline: return {};
    case TrainMode::SpinShield: {
      Tape tape;
      const Bound p = models::bind(tape, model, 0);
      return models::lsa_graph(p, batch, model.alpha, model.delta).flat_env.value();
    }
    case TrainMode::NaiveAug: {
      CounterRng rng(noise_seed, 0x6e61697665ULL);
      Matrix amp = batch.amplitude;
      for (Eigen::Index r = 0; r < amp.rows(); ++r)
        for (Eigen::Index k = 0; k < amp.cols(); ++k) amp(r, k) *= std::exp(config.naive_sigma * rng.normal());
      return fold_numeric(recompose_rows(amp, batch.phase, batch.grid), batch.patch_count);
    }
  }
  return {};
}

TrainResult train(const TrainConfig& config, const std::vector<synth::LabeledClip>& data, const Split& split) {
  config.validate();
  if (split.train.empty() || split.val.empty()) throw std::invalid_argument("train: empty train or validation split");
  const auto& first = data.at(split.train.front()).clip;
  models::ModelDims dims = config.dims;
  dims.patch_count = static_cast<int>(first.patch_count());
  dims.frame_count = static_cast<int>(first.frame_count());

  ModelBundle model = models::init_model(dims, config.alpha, config.seed);
  model.delta = config.delta;
  ModelBundle best = model;
  TrainResult result{{}, {}, -1, -1.0, {}};

  std::vector<OneSidedSpectrum> spectra;
  spectra.reserve(split.train.size());
  for (auto i : split.train) spectra.push_back(dft_onesided(data[i].clip));

  std::vector<const PatchSignalClip*> val_clips;
  for (auto i : split.val) val_clips.push_back(&data[i].clip);
  const auto val_labels = labels_of(data, split.val);

  auto det_params = model.encoder_params();
  for (auto* p : model.head_params()) det_params.push_back(p);
  for (auto* p : model.domain_params()) det_params.push_back(p);
  const auto gen_params = model.generator_params();
  Adam det_opt(config.optimizer), gen_opt(config.generator_optimizer);

  const bool adversarial = config.mode == TrainMode::SpinShield;
  const bool paired = config.mode != TrainMode::Baseline;
  std::int64_t step = 0;
  std::vector<std::size_t> order(split.train.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng shuffle(config.seed, 0x65706f6368ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      if (end - start < 2) continue;
      std::vector<const PatchSignalClip*> clips;
      std::vector<const OneSidedSpectrum*> specs;
      std::vector<int> labels;
      for (std::size_t b = start; b < end; ++b) {
        const auto idx = split.train[order[b]];
        clips.push_back(&data[idx].clip);
        specs.push_back(&spectra[order[b]]);
        labels.push_back(data[idx].label);
      }
      const Matrix flat_clean = models::flatten_clips(clips);
      const auto batch = models::spectral_batch(specs);

      // Detector step: generator frozen, env views enter as constants.
      {
        model.zero_grad();
        Tape tape;
        const Bound p = models::bind(tape, model, models::kEncoder | models::kHead | models::kDomain);
        const Var hc = models::encode(p, tape.constant(flat_clean));
        const Var lc = models::class_logits(p, hc);
        LogRow row{step, "det", {}, {}, {}, {}, {}, {}, {}};
        Var loss;
        if (!paired) {
          loss = objectives::cross_entropy(lc, labels);
          row.L_det = loss.scalar();
        } else {
          const Matrix env = environment_views(config, model, batch, CounterRng::mix(config.seed ^ CounterRng::mix(static_cast<std::uint64_t>(step))));
          const Var he = models::encode(p, tape.constant(env));
          const Var le = models::class_logits(p, he);
          const Var det = objectives::detector_loss(lc, le, labels);
          const Var sym = objectives::symmetric_kl(ad::softmax_rows(lc), ad::softmax_rows(le));
          const Var blind = objectives::blindness_loss(models::domain_logits(p, hc, true), models::domain_logits(p, he, true));
          loss = objectives::total_loss(det, sym, blind, config.weights);
          row.L_det = det.scalar();
          row.L_sym = sym.scalar();
          row.L_blind = blind.scalar();
        }
        row.total = loss.scalar();
        check_finite(row);
        tape.backward(loss);
        require_zero_grads(gen_params, "generator");
        det_opt.step(det_params);
        result.log.push_back(row);
      }

      // Generator step: detector frozen, ascend L_gen.
      if (adversarial && (step + 1) % config.detector_steps_per_generator_step == 0) {
        model.zero_grad();
        Tape tape;
        const Bound p = models::bind(tape, model, models::kGenerator);
        const Var hc = models::encode(p, tape.constant(flat_clean));
        const auto lsa = models::lsa_graph(p, batch, model.alpha, model.delta);
        const Var he = models::encode(p, lsa.flat_env);
        const Var ce = objectives::cross_entropy(models::class_logits(p, he), labels);
        const Var d = objectives::mmd(hc, he);
        const Var reg = objectives::mask_regularizer(lsa.mask);
        const Var gen = objectives::generator_loss(ce, d, reg, config.weights);
        LogRow row{step, "gen", {}, {}, {}, gen.scalar(), d.scalar(), reg.scalar(), gen.scalar()};
        check_finite(row);
        tape.backward(gen);
        require_zero_grads(det_params, "detector");
        gen_opt.step(gen_params, /*ascend=*/true);
        result.log.push_back(row);
      }
      ++step;
    }

    const double auc = stats::compute_auc(models::score_clips(model, val_clips), val_labels);
    result.val_auc_per_epoch.push_back(auc);
    if (auc > result.best_val_auc) {
      result.best_val_auc = auc;
      result.best_epoch = epoch;
      best = model;
    }
  }
  best.zero_grad();
  result.model = std::move(best);
  return result;
}

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"optimizer", c.optimizer},
       {"generator_optimizer", c.generator_optimizer},
       {"detector_steps_per_generator_step", c.detector_steps_per_generator_step},
       {"weights", c.weights},
       {"alpha", c.alpha},
       {"delta", c.delta},
       {"naive_sigma", c.naive_sigma},
       {"dims", c.dims},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.mode = train_mode_from_string(j.value("mode", to_string(d.mode)));
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.optimizer = j.value("optimizer", d.optimizer);
  c.generator_optimizer = j.value("generator_optimizer", c.optimizer);
  c.detector_steps_per_generator_step = j.value("detector_steps_per_generator_step", d.detector_steps_per_generator_step);
  c.weights = j.value("weights", d.weights);
  c.alpha = j.value("alpha", d.alpha);
  c.delta = j.value("delta", d.delta);
  c.naive_sigma = j.value("naive_sigma", d.naive_sigma);
  c.dims = j.value("dims", d.dims);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

}  // namespace spinshield::training
