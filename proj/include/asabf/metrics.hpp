#ifndef ASABF_METRICS_HPP_
#define ASABF_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "asabf/beamform.hpp"

namespace asabf {
namespace metrics {

// Scale-invariant SNR in dB against the projection of `est` onto `ref`,
// capped to [-60, 60].
double si_snr(const std::vector<double>& est, const std::vector<double>& ref);

// SDR allowing a time-invariant FIR distortion of the reference: a
// least-squares filter of `filter_len` taps is fitted to est ~ g * ref and
// the ratio ||g*ref||^2 / ||est - g*ref||^2 is reported in dB, capped to
// [-60, 60].
double sdr_tif(const std::vector<double>& est, const std::vector<double>& ref,
               int filter_len = 512);

struct EvalCondition {
  enum class Type { kIdentity, kPermute, kFirstK, kRandomK };
  Type type = Type::kIdentity;
  std::string name = "identity";
  int k = 0;             // kFirstK / kRandomK subset size
  std::uint64_t seed = 0;  // kPermute / kRandomK draws
};

struct UtteranceRow {
  std::string id;
  std::string condition;
  double si_snr_db = 0.0;
  double sdr_db = 0.0;
  double mixture_sdr_db = 0.0;  // mixture-vs-clean baseline
  double fallback_rate = 0.0;
};

struct ConditionSummary {
  std::string condition;
  int count = 0;
  double si_snr_mean = 0.0;
  double sdr_mean = 0.0;
  double mixture_sdr_mean = 0.0;
};

struct MetricReport {
  std::vector<UtteranceRow> rows;
  std::vector<ConditionSummary> summaries;  // recomputed from rows
  std::string model_id;
  std::string config_hash;

  void finalize();  // fills summaries from rows
  void write_csv(const std::string& path) const;
  std::string summary_json() const;
};

// Runs `enhance` per utterance and condition against the manifest's clean
// reference-channel speech image. base_options.mode/model select the SCM
// path; channel transforms come from the conditions.
MetricReport evaluate_dataset(const std::string& manifest_path,
                              const std::vector<EvalCondition>& conditions,
                              const beamform::EnhanceOptions& base_options,
                              int filter_len = 512, int workers = 1);

}  // namespace metrics
}  // namespace asabf

#endif  // ASABF_METRICS_HPP_
