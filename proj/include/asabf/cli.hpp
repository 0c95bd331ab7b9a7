#ifndef ASABF_CLI_HPP_
#define ASABF_CLI_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "asabf/beamform.hpp"
#include "asabf/metrics.hpp"
#include "asabf/scene.hpp"
#include "asabf/training.hpp"

namespace asabf {
namespace cli {

// Exit codes: 0 ok, 2 config, 3 I/O, 4 model/input mismatch, 5 numeric.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitMismatch = 4;
inline constexpr int kExitNumeric = 5;

// Whole-run configuration parsed from a JSON file. Unknown keys anywhere
// raise ConfigError naming the offending path.
struct RunConfig {
  std::uint64_t seed = 0;
  scene::DatasetParams simulate;
  EstimatorConfig estimator;
  int frame_len = 1024;
  int hop = 256;
  TrainConfig training;
  std::vector<metrics::EvalCondition> conditions;
  int filter_len = 512;
  beamform::ScmMode enhance_mode = beamform::ScmMode::kAsa;
  double lambda = 0.9900498337491681;
  double loading = 1e-6;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

int exit_code_for(const std::exception& error);

// Entry point used by the binary; never throws.
int run(int argc, const char* const* argv);

}  // namespace cli
}  // namespace asabf

#endif  // ASABF_CLI_HPP_
