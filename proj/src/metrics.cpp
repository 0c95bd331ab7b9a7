#include "asabf/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "asabf/errors.hpp"
#include "asabf/fft.hpp"
#include "asabf/rng.hpp"
#include "asabf/wav.hpp"
#include "json.hpp"

namespace asabf {
namespace metrics {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cap_db(double num, double den) {
  if (den <= 0.0) return 60.0;
  if (num <= 0.0) return -60.0;
  return std::clamp(10.0 * std::log10(num / den), -60.0, 60.0);
}

// FNV-1a over a string, hex-encoded.
std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

double si_snr(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size()) {
    throw DimensionError("si_snr: length mismatch");
  }
  const double ref_energy = dot(ref, ref);
  if (ref_energy <= 0.0) throw InputError("si_snr: zero reference");
  const double scale = dot(est, ref) / ref_energy;
  double target_energy = 0.0, error_energy = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = scale * ref[i];
    const double e = est[i] - t;
    target_energy += t * t;
    error_energy += e * e;
  }
  return cap_db(target_energy, error_energy);
}

double sdr_tif(const std::vector<double>& est, const std::vector<double>& ref,
               int filter_len) {
  if (filter_len < 1) throw InputError("sdr_tif: filter_len must be >= 1");
  if (est.size() != ref.size()) {
    throw DimensionError("sdr_tif: length mismatch");
  }
  if (static_cast<int>(ref.size()) < filter_len) {
    throw InputError("sdr_tif: signals shorter than the filter");
  }
  const int L = static_cast<int>(ref.size());
  const int K = filter_len;

  // Covariance method: minimize ||est - g * ref||^2 over the observed
  // support [0, L) only, so a pure delay or any FIR distortion within the
  // filter span is exactly representable. The Gram matrix is the full
  // autocorrelation minus the tail terms that fall beyond L.
  std::size_t n = 1;
  while (n < static_cast<std::size_t>(2 * L)) n <<= 1;
  std::vector<std::complex<double>> fr(n, {0.0, 0.0}), fe(n, {0.0, 0.0});
  for (int i = 0; i < L; ++i) {
    fr[i] = {ref[i], 0.0};
    fe[i] = {est[i], 0.0};
  }
  fft::transform(fr, false);
  fft::transform(fe, false);
  std::vector<std::complex<double>> acf(n), ccf(n);
  for (std::size_t i = 0; i < n; ++i) {
    acf[i] = fr[i] * std::conj(fr[i]);
    ccf[i] = fe[i] * std::conj(fr[i]);
  }
  fft::transform(acf, true);
  fft::transform(ccf, true);

  const double r0 = acf[0].real();
  if (!(r0 > 0.0) || !std::isfinite(r0)) {
    throw NumericError("sdr_tif: degenerate reference autocorrelation");
  }

  Eigen::MatrixXd R(K, K);
  Eigen::VectorXd rhs(K);
  for (int i = 0; i < K; ++i) {
    rhs(i) = ccf[i].real();  // sum_{n<L} est[n] ref[n-i]
    for (int j = 0; j <= i; ++j) {
      double tail = 0.0;
      for (int m = 0; m < j; ++m) {
        tail += ref[L + m - i] * ref[L + m - j];
      }
      const double v = acf[i - j].real() - tail;
      R(i, j) = v;
      R(j, i) = v;
    }
  }
  R.diagonal().array() += 1e-10 * r0;
  Eigen::LDLT<Eigen::MatrixXd> solver(R);
  if (solver.info() != Eigen::Success) {
    throw NumericError("sdr_tif: normal equations not solvable");
  }
  Eigen::VectorXd g = solver.solve(rhs);

  // energies over [0, L)
  std::vector<double> fitted(L, 0.0);
  for (int i = 0; i < K; ++i) {
    const double gi = g(i);
    if (gi == 0.0) continue;
    for (int nn = 0; nn + i < L; ++nn) fitted[nn + i] += gi * ref[nn];
  }
  double fit_energy = 0.0, err_energy = 0.0;
  for (int i = 0; i < L; ++i) {
    const double e = est[i] - fitted[i];
    fit_energy += fitted[i] * fitted[i];
    err_energy += e * e;
  }
  return cap_db(fit_energy, err_energy);
}

void MetricReport::finalize() {
  summaries.clear();
  std::vector<std::string> order;
  for (const auto& row : rows) {
    if (std::find(order.begin(), order.end(), row.condition) == order.end()) {
      order.push_back(row.condition);
    }
  }
  for (const auto& cond : order) {
    ConditionSummary s;
    s.condition = cond;
    for (const auto& row : rows) {
      if (row.condition != cond) continue;
      ++s.count;
      s.si_snr_mean += row.si_snr_db;
      s.sdr_mean += row.sdr_db;
      s.mixture_sdr_mean += row.mixture_sdr_db;
    }
    if (s.count > 0) {
      s.si_snr_mean /= s.count;
      s.sdr_mean /= s.count;
      s.mixture_sdr_mean /= s.count;
    }
    summaries.push_back(s);
  }
}

void MetricReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "id,condition,si_snr_db,sdr_db,mixture_sdr_db,fallback_rate\n";
  for (const auto& r : rows) {
    out << r.id << "," << r.condition << "," << r.si_snr_db << "," << r.sdr_db
        << "," << r.mixture_sdr_db << "," << r.fallback_rate << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

std::string MetricReport::summary_json() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["config_hash"] = config_hash;
  j["conditions"] = nlohmann::json::array();
  for (const auto& s : summaries) {
    j["conditions"].push_back({{"condition", s.condition},
                               {"count", s.count},
                               {"si_snr_mean_db", s.si_snr_mean},
                               {"sdr_mean_db", s.sdr_mean},
                               {"mixture_sdr_mean_db", s.mixture_sdr_mean}});
  }
  return j.dump(2);
}

namespace {

std::vector<int> condition_indices(const EvalCondition& cond, int channels,
                                   std::uint64_t utt_stream) {
  std::vector<int> idx(channels);
  std::iota(idx.begin(), idx.end(), 0);
  switch (cond.type) {
    case EvalCondition::Type::kIdentity:
      return idx;
    case EvalCondition::Type::kPermute: {
      auto rng = make_rng(cond.seed, utt_stream);
      for (int i = channels - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(idx[i], idx[pick(rng)]);
      }
      return idx;
    }
    case EvalCondition::Type::kFirstK: {
      if (cond.k < 1 || cond.k > channels) {
        throw InputError("condition k out of range");
      }
      idx.resize(cond.k);
      return idx;
    }
    case EvalCondition::Type::kRandomK: {
      if (cond.k < 1 || cond.k > channels) {
        throw InputError("condition k out of range");
      }
      auto rng = make_rng(cond.seed, utt_stream);
      for (int i = channels - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(idx[i], idx[pick(rng)]);
      }
      idx.resize(cond.k);
      return idx;
    }
  }
  throw InputError("unknown condition type");
}

AudioBuffer select_channels(const AudioBuffer& audio,
                            const std::vector<int>& idx) {
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  for (int i : idx) out.samples.push_back(audio.samples[i]);
  return out;
}

}  // namespace

MetricReport evaluate_dataset(const std::string& manifest_path,
                              const std::vector<EvalCondition>& conditions,
                              const beamform::EnhanceOptions& base_options,
                              int filter_len, int workers) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  const auto& utts = manifest.at("utterances");

  struct Task {
    int utt_index;
    int cond_index;
  };
  std::vector<Task> tasks;
  for (int u = 0; u < static_cast<int>(utts.size()); ++u) {
    for (int c = 0; c < static_cast<int>(conditions.size()); ++c) {
      tasks.push_back({u, c});
    }
  }
  std::vector<UtteranceRow> rows(tasks.size());
  std::vector<std::string> errors(tasks.size());

  auto run_task = [&](int ti) {
    const Task& task = tasks[ti];
    const auto& utt = utts[task.utt_index];
    const EvalCondition& cond = conditions[task.cond_index];
    try {
      AudioBuffer mixture = wav::read(utt.at("mixture").get<std::string>());
      AudioBuffer speech = wav::read(utt.at("speech_image").get<std::string>());
      AudioBuffer noise = wav::read(utt.at("noise_image").get<std::string>());
      const int ref_orig = utt.at("reference_index").get<int>();

      const std::vector<int> idx = condition_indices(
          cond, mixture.channels(), static_cast<std::uint64_t>(task.utt_index));
      AudioBuffer mix_c = select_channels(mixture, idx);
      AudioBuffer sp_c = select_channels(speech, idx);
      AudioBuffer nz_c = select_channels(noise, idx);
      int ref = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] == ref_orig) {
          ref = static_cast<int>(k);
          break;
        }
      }

      beamform::EnhanceOptions opts = base_options;
      opts.ref = ref;
      beamform::MaskSource masks;
      masks.speech_image = &sp_c;
      masks.noise_image = &nz_c;
      beamform::EnhanceResult enh = beamform::enhance(mix_c, masks, opts);

      const std::vector<double>& clean = sp_c.samples[ref];
      UtteranceRow row;
      row.id = utt.at("id").get<std::string>();
      row.condition = cond.name;
      row.si_snr_db = si_snr(enh.audio.samples[0], clean);
      row.sdr_db = sdr_tif(enh.audio.samples[0], clean, filter_len);
      row.mixture_sdr_db = sdr_tif(mix_c.samples[ref], clean, filter_len);
      row.fallback_rate = enh.diagnostics.fallback_rate;
      rows[ti] = row;
    } catch (const std::exception& e) {
      errors[ti] = std::string(e.what()) + " (utterance " +
                   utt.at("id").get<std::string>() + ")";
    }
  };

  if (workers <= 1) {
    for (int ti = 0; ti < static_cast<int>(tasks.size()); ++ti) run_task(ti);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int ti = next.fetch_add(1);
          if (ti >= static_cast<int>(tasks.size())) return;
          run_task(ti);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::string missing;
  for (const auto& e : errors) {
    if (!e.empty()) missing += e + "; ";
  }
  if (!missing.empty()) {
    throw IoError("evaluation failed for: " + missing);
  }

  MetricReport report;
  report.rows = std::move(rows);
  if (base_options.model) {
    auto it = base_options.model->meta.find("model_id");
    report.model_id =
        it != base_options.model->meta.end() ? it->second : "unnamed";
  } else {
    report.model_id = "none";
  }
  nlohmann::json cfg_fingerprint = {
      {"mode", static_cast<int>(base_options.mode)},
      {"frame_len", base_options.frame_len},
      {"hop", base_options.hop},
      {"lambda", base_options.lambda},
      {"filter_len", filter_len}};
  report.config_hash = fnv1a_hex(cfg_fingerprint.dump());
  report.finalize();
  return report;
}

}  // namespace metrics
}  // namespace asabf
