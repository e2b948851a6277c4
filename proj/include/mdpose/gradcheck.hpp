#pragma once

#include <string>
#include <vector>

#include "mdpose/runconfig.hpp"

namespace mdpose {

struct GradCheckRow {
  std::string component;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckRow> rows;
  bool all_pass() const;
};

// Finite-difference verification of every network configuration the pipeline
// trains (dropout disabled, double precision), the adversarial losses, and
// the analytic weighted-loss derivative.
GradCheckReport run_grad_checks(const RunConfig& cfg);

}  // namespace mdpose
