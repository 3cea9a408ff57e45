#pragma once

#include <functional>
#include <map>
#include <string>

#include "precut/graph.hpp"

namespace precut {

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool pass = true;
};

// Builds a scalar loss from parameter nodes; must be deterministic and free of
// external side effects given the parameter values (each finite-difference
// probe re-invokes it on a fresh graph).
using LossBuilder = std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>;

// Central finite differences against the tape gradients, per parameter
// element. Relative error uses |a - n| / max(1, |a|, |n|) so that near-zero
// gradients are judged on an absolute scale. Empty `params` yields an empty
// passing report.
GradCheckReport check_gradients(const LossBuilder& build, const std::map<std::string, Tensor>& params,
                                double step = 1e-5, double tol = 1e-4);

}  // namespace precut
