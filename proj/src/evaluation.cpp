#include "spinshield/evaluation.hpp"

#include "spinshield/clip_io.hpp"
#include "spinshield/rng.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <thread>

namespace spinshield::eval {

using attacks::AttackKind;
using attacks::AttackSpec;

int worker_count() {
  if (const char* env = std::getenv("SPINSHIELD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w * chunk; i < std::min(n, (w + 1) * chunk); ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<AttackEntry> default_suite(int shortcut_bin, double tukey_alpha) {
  return {{"identity", AttackKind::Identity, AttackSpec{}},
          {"notch", AttackKind::Notch, std::nullopt},
          {"band_mask", AttackKind::RandomBandMask, std::nullopt},
          {"tilt", AttackKind::SpectralTilt, std::nullopt},
          {"snr_noise", AttackKind::SnrNoise, std::nullopt},
          {"band_mask_shortcut", AttackKind::RandomBandMask, attacks::forced_band(shortcut_bin, 1, tukey_alpha)}};
}

const AttackResult& EvalReport::result(const std::string& name) const {
  for (const auto& r : results)
    if (r.name == name) return r;
  throw std::out_of_range("no attack named '" + name + "' in report");
}

std::uint64_t clip_attack_seed(std::uint64_t seed, std::size_t clip_id) {
  return CounterRng::mix(seed ^ CounterRng::mix(0x636c6970ULL + clip_id));
}

namespace {

std::vector<int> labels_of(const std::vector<const synth::LabeledClip*>& test) {
  std::vector<int> out;
  for (const auto* c : test) out.push_back(c->label);
  return out;
}

std::vector<double> score_attacked(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test,
                                   const std::vector<AttackSpec>& specs) {
  std::vector<PatchSignalClip> attacked(test.size());
  parallel_for(test.size(), [&](std::size_t i) { attacked[i] = attacks::apply_attack(test[i]->clip, specs[i]); });
  std::vector<const PatchSignalClip*> ptrs;
  for (const auto& c : attacked) ptrs.push_back(&c);
  return models::score_clips(model, ptrs);
}

std::vector<double> score_clean(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test) {
  std::vector<const PatchSignalClip*> ptrs;
  for (const auto* c : test) ptrs.push_back(&c->clip);
  return models::score_clips(model, ptrs);
}

void finish(AttackResult& r, const std::vector<int>& labels) {
  r.auc_per_seed.clear();
  for (const auto& s : r.scores) r.auc_per_seed.push_back(stats::compute_auc(s, labels));
  r.auc = stats::mean_std(r.auc_per_seed);
}

}  // namespace

EvalReport evaluate_under_attacks(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test,
                                  const std::vector<AttackEntry>& suite, const std::vector<std::uint64_t>& seeds,
                                  const nlohmann::json& config, const attacks::AttackDefaults& defaults) {
  if (test.empty()) throw std::invalid_argument("evaluate_under_attacks: empty test set");
  if (seeds.empty()) throw std::invalid_argument("evaluate_under_attacks: no seeds");
  EvalReport report;
  report.config = config;
  report.seeds = seeds;
  for (const auto* c : test) report.clip_ids.push_back(c->index);
  report.labels = labels_of(test);
  report.clean_scores = score_clean(model, test);
  report.clean_auc = stats::compute_auc(report.clean_scores, report.labels);

  const FrequencyGrid grid{test.front()->clip.frame_count()};
  const auto M = test.front()->clip.patch_count();
  for (const auto& entry : suite) {
    AttackResult r{entry.name, entry.kind, entry.fixed.has_value(), {}, {}, {}, {}};
    for (auto seed : seeds) {
      std::vector<AttackSpec> specs(test.size());
      parallel_for(test.size(), [&](std::size_t i) {
        specs[i] = entry.fixed ? *entry.fixed
                               : attacks::sample_attack(entry.kind, grid, clip_attack_seed(seed, test[i]->index), M, defaults);
      });
      r.scores.push_back(score_attacked(model, test, specs));
      r.specs.push_back(std::move(specs));
    }
    finish(r, report.labels);
    report.results.push_back(std::move(r));
  }
  return report;
}

EvalReport replay_report(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test,
                         const EvalReport& stored) {
  if (test.size() != stored.clip_ids.size()) throw std::invalid_argument("replay_report: test set size differs from report");
  for (std::size_t i = 0; i < test.size(); ++i)
    if (test[i]->index != stored.clip_ids[i]) throw std::invalid_argument("replay_report: clip order differs from report");
  EvalReport out = stored;
  out.clean_scores = score_clean(model, test);
  out.clean_auc = stats::compute_auc(out.clean_scores, out.labels);
  for (auto& r : out.results) {
    for (std::size_t s = 0; s < r.specs.size(); ++s) r.scores[s] = score_attacked(model, test, r.specs[s]);
    finish(r, out.labels);
  }
  return out;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"config", r.config}, {"seeds", r.seeds}, {"clip_ids", r.clip_ids}, {"labels", r.labels},
       {"clean_scores", r.clean_scores}, {"clean_auc", r.clean_auc}, {"results", nlohmann::json::array()}};
  for (const auto& a : r.results) {
    j["results"].push_back({{"name", a.name},
                            {"kind", attacks::to_string(a.kind)},
                            {"fixed", a.fixed},
                            {"auc_per_seed", a.auc_per_seed},
                            {"auc_mean", a.auc.mean},
                            {"auc_std", a.auc.std},
                            {"specs", a.specs},
                            {"scores", a.scores}});
  }
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  r.config = j.at("config");
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.clip_ids = j.at("clip_ids").get<std::vector<std::size_t>>();
  r.labels = j.at("labels").get<std::vector<int>>();
  r.clean_scores = j.at("clean_scores").get<std::vector<double>>();
  r.clean_auc = j.at("clean_auc").get<double>();
  r.results.clear();
  for (const auto& a : j.at("results")) {
    AttackResult ar;
    ar.name = a.at("name").get<std::string>();
    ar.kind = attacks::attack_kind_from_string(a.at("kind").get<std::string>());
    ar.fixed = a.at("fixed").get<bool>();
    ar.auc_per_seed = a.at("auc_per_seed").get<std::vector<double>>();
    ar.auc = {a.at("auc_mean").get<double>(), a.at("auc_std").get<double>()};
    ar.specs = a.at("specs").get<std::vector<std::vector<AttackSpec>>>();
    ar.scores = a.at("scores").get<std::vector<std::vector<double>>>();
    r.results.push_back(std::move(ar));
  }
}

std::vector<SweepRow> notch_sweep(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& test) {
  if (test.empty()) throw std::invalid_argument("notch_sweep: empty test set");
  const auto labels = labels_of(test);
  const auto T = test.front()->clip.frame_count();
  std::vector<SweepRow> rows{{std::nullopt, 0.0, stats::compute_auc(score_clean(model, test), labels)}};
  for (int k = 1; k <= static_cast<int>(T / 2) - 1; ++k) {
    const std::vector<AttackSpec> specs(test.size(), attacks::full_notch(k));
    rows.push_back({k, static_cast<double>(k) / static_cast<double>(T), stats::compute_auc(score_attacked(model, test, specs), labels)});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "omega_k,auc\n";
  for (const auto& r : rows) out << (r.bin ? io::format_double(r.omega) : std::string("none")) << ',' << io::format_double(r.auc) << '\n';
}

double max_sweep_drop(const std::vector<SweepRow>& rows) {
  double drop = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) drop = std::max(drop, rows.front().auc - rows[i].auc);
  return drop;
}

std::vector<AdaptiveResult> adaptive_attack_batch(const models::ModelBundle& model,
                                                  const std::vector<const synth::LabeledClip*>& clips, const AdaptiveConfig& cfg) {
  if (cfg.steps < 0 || !(cfg.budget >= 0)) throw std::invalid_argument("adaptive attack: steps and budget must be non-negative");
  std::vector<AdaptiveResult> out;
  if (clips.empty()) return out;
  const auto n = clips.size();
  const auto M = clips.front()->clip.patch_count();
  if (cfg.budget == 0 || cfg.steps == 0) {
    const auto scores = score_clean(model, clips);
    for (std::size_t i = 0; i < n; ++i)
      out.push_back({clips[i]->clip, Eigen::MatrixXd::Zero(M, clips[i]->clip.frame_count() / 2 + 1), scores[i]});
    return out;
  }
  const double eta = cfg.step_size > 0 ? cfg.step_size : 2.5 * cfg.budget / cfg.steps;

  std::vector<OneSidedSpectrum> spectra;
  std::vector<const OneSidedSpectrum*> ptrs;
  std::vector<int> wrong;
  for (const auto* c : clips) {
    spectra.push_back(dft_onesided(c->clip));
    wrong.push_back(1 - c->label);
  }
  for (const auto& s : spectra) ptrs.push_back(&s);
  const auto batch = models::spectral_batch(ptrs);
  models::ModelBundle m = model;

  ad::Matrix u = ad::Matrix::Zero(batch.amplitude.rows(), batch.amplitude.cols());
  ad::Matrix best_u = u;
  std::vector<double> best_loss(n, std::numeric_limits<double>::infinity());

  for (int step = 0; step <= cfg.steps; ++step) {
    ad::Tape tape;
    const auto p = models::bind(tape, m, 0);
    const ad::Var uv = tape.input(u);
    const ad::Var amp = ad::mul(tape.constant(batch.amplitude), ad::exp(uv));
    const ad::Var flat = ad::fold_rows(ad::recompose_with_phase(amp, batch.phase, batch.grid), M);
    const ad::Var logits = models::class_logits(p, models::encode(p, flat));
    const auto& lv = logits.value();
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = lv.row(static_cast<Eigen::Index>(i));
      const double mx = row.maxCoeff();
      const double loss = mx + std::log((row.array() - mx).exp().sum()) - row(wrong[i]);
      if (!std::isfinite(loss)) throw std::runtime_error("adaptive attack: non-finite loss at step " + std::to_string(step));
      if (loss < best_loss[i]) {
        best_loss[i] = loss;
        best_u.middleRows(static_cast<Eigen::Index>(i) * M, M) = u.middleRows(static_cast<Eigen::Index>(i) * M, M);
      }
    }
    if (step == cfg.steps) break;
    const ad::Var loss = ad::cross_entropy_logits(logits, wrong);
    tape.backward(loss);
    const ad::Matrix g = uv.grad();
    if (!g.allFinite()) throw std::runtime_error("adaptive attack: non-finite gradient at step " + std::to_string(step));
    u = (u.array() - eta * g.array().sign()).cwiseMax(-cfg.budget).cwiseMin(cfg.budget);
  }

  const ad::Matrix amp = batch.amplitude.array() * best_u.array().exp();
  std::vector<PatchSignalClip> attacked(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i) * M;
    attacked[i] = {recompose_rows(ad::Matrix(amp.middleRows(r, M)), spectra[i].phase, spectra[i].grid), clips[i]->clip.fps};
  }
  std::vector<const PatchSignalClip*> aptr;
  for (const auto& c : attacked) aptr.push_back(&c);
  const auto scores = models::score_clips(model, aptr);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({std::move(attacked[i]), best_u.middleRows(static_cast<Eigen::Index>(i) * M, M), scores[i]});
  return out;
}

AdaptiveResult adaptive_attack(const models::ModelBundle& model, const PatchSignalClip& clip, int label,
                               const AdaptiveConfig& cfg) {
  const synth::LabeledClip lc{clip, label, 0, 0};
  return adaptive_attack_batch(model, {&lc}, cfg).front();
}

FeatureDump dump_features(const models::ModelBundle& model, const std::vector<const synth::LabeledClip*>& clips,
                          const std::optional<AttackEntry>& env_attack, std::uint64_t env_seed) {
  FeatureDump d;
  if (clips.empty()) return d;
  std::vector<const PatchSignalClip*> clean;
  for (const auto* c : clips) {
    d.clip_ids.push_back(c->index);
    d.labels.push_back(c->label);
    clean.push_back(&c->clip);
  }
  d.clean = models::features(model, clean);

  std::vector<PatchSignalClip> env(clips.size());
  if (env_attack) {
    const FrequencyGrid grid{clips.front()->clip.frame_count()};
    const auto M = clips.front()->clip.patch_count();
    parallel_for(clips.size(), [&](std::size_t i) {
      const auto spec = env_attack->fixed ? *env_attack->fixed
                                          : attacks::sample_attack(env_attack->kind, grid, clip_attack_seed(env_seed, clips[i]->index), M);
      env[i] = attacks::apply_attack(clips[i]->clip, spec);
    });
  } else {
    models::ModelBundle m = model;
    for (std::size_t i = 0; i < clips.size(); ++i) env[i] = models::lsa_perturb(m, dft_onesided(clips[i]->clip), clips[i]->clip.fps).clip;
  }
  std::vector<const PatchSignalClip*> eptr;
  for (const auto& c : env) eptr.push_back(&c);
  d.env = models::features(model, eptr);
  return d;
}

void write_features_csv(std::ostream& out, const FeatureDump& dump) {
  out << "clip_id,view,y";
  for (Eigen::Index k = 0; k < dump.clean.cols(); ++k) out << ",h" << k;
  out << '\n';
  for (std::size_t i = 0; i < dump.clip_ids.size(); ++i) {
    for (const auto* view : {&dump.clean, &dump.env}) {
      out << dump.clip_ids[i] << ',' << (view == &dump.clean ? "clean" : "env") << ',' << dump.labels[i];
      for (Eigen::Index k = 0; k < view->cols(); ++k) out << ',' << io::format_double((*view)(static_cast<Eigen::Index>(i), k));
      out << '\n';
    }
  }
}

double mean_view_gap(const FeatureDump& dump) {
  if (dump.clean.size() == 0) return 0;
  return (dump.clean - dump.env).cwiseAbs().mean();
}

}  // namespace spinshield::eval
