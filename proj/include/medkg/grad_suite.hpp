#pragma once

#include <string>
#include <vector>

#include "medkg/grad_check.hpp"

namespace medkg {

struct GradSuiteCase {
  std::string name;
  GradCheckReport report;
  double eps = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Finite-difference validation across every trainable surface: the four
// scoring kinds, masked multi-head attention, encoder classification and
// language-model losses, and both fusion models end to end. Runs in 64-bit
// arithmetic; deterministic.
std::vector<GradSuiteCase> run_grad_check_suite();

}  // namespace medkg
