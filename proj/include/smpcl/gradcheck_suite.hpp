#pragma once

#include <functional>
#include <string>
#include <vector>

#include "smpcl/gradcheck.hpp"

namespace smpcl {

/// One named 64-bit gradient check with its acceptance threshold.
struct GradCheckCase {
  std::string name;
  double threshold;
  std::function<GradCheckReport()> run;
};

struct GradCheckOutcome {
  std::string name;
  double threshold = 0.0;
  GradCheckReport report;
  bool passed = false;
};

/// Every differentiable op and composite: elementwise ops, matmul, the
/// convolutions, resize, softmax, layer norm, S6, the SMB in both scan modes,
/// dual attention, the losses, the guide decoder with projection, and a
/// micro network. Composites use 1e-4, single ops 1e-5.
std::vector<GradCheckCase> gradcheck_suite();

/// Runs the cases whose name contains `filter` (all when empty).
std::vector<GradCheckOutcome> run_gradcheck_suite(const std::string& filter = "");

}  // namespace smpcl
