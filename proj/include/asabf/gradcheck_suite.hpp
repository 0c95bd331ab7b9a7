#ifndef ASABF_GRADCHECK_SUITE_HPP_
#define ASABF_GRADCHECK_SUITE_HPP_

#include <string>
#include <vector>

namespace asabf {
namespace gradcheck {

struct CheckRow {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
  bool expect_failure = false;  // the broken-rule self-test
};

// Finite-difference verification of every autodiff primitive plus the full
// differentiable pipeline (features -> attention -> aggregation -> MVDR ->
// synthesis -> SNR loss) on a C=2, F=5, T=6 instance. `small` adds a second,
// larger end-to-end instance.
std::vector<CheckRow> run_suite(bool small = false);

// Max relative error of the end-to-end gradient on the tiny instance.
double end_to_end_error(bool tac_variant);

bool all_passed(const std::vector<CheckRow>& rows);
std::string format_table(const std::vector<CheckRow>& rows);

}  // namespace gradcheck
}  // namespace asabf

#endif  // ASABF_GRADCHECK_SUITE_HPP_
