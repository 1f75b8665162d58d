#pragma once

#include <cstdint>
#include <string>

namespace tomcoord::ad {

struct SuiteReport {
  std::size_t programs = 0;
  std::size_t second_order = 0;  // programs that differentiate through an sgd step
  std::size_t checked = 0;       // scalar coordinates compared
  double max_rel_err = 0.0;
  std::string worst;             // "<program>/<segment>"
  bool passed = true;
};

// grad_check on n randomly composed small programs (layers, activations,
// heads drawn per program); every fourth one takes a recorded inner sgd
// step before its loss, so the check covers second-order gradients.
SuiteReport grad_check_suite(std::size_t n, std::uint64_t seed, double tolerance = 1e-4);

}  // namespace tomcoord::ad
