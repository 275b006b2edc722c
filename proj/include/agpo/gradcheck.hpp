#pragma once

#include <string>
#include <vector>

#include "agpo/graph.hpp"

namespace agpo {

struct GradCheckFailure {
  std::string leaf;
  int component = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  int components_checked = 0;
  double tolerance = 0.0;
  std::vector<GradCheckFailure> failures;
};

// |a - n| scaled by max(|a|, |n|, 1e-6); the floor keeps finite-difference
// noise on near-zero components from registering as error.
double grad_relative_error(double analytic, double numeric);

// Compares reverse-mode gradients against central finite differences,
// componentwise over every differentiable leaf. `analytic_override`, when
// given, replaces the graph's own gradients (test harnesses use it to
// verify the checker catches wrong backward rules).
GradCheckReport check_gradient(const Graph& graph, const Bindings& binds,
                               double step, double tolerance,
                               const std::vector<Tensor>* analytic_override = nullptr);

}  // namespace agpo
