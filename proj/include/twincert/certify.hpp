#pragma once

#include <optional>
#include <vector>

#include "twincert/encode.hpp"

namespace twincert {

struct CertifyConfig {
  Scheme scheme = Scheme::Itne;
  double delta = 0.0;
  int window = 2;       // how many layers each bounding problem looks back
  int refine = 0;       // exact ReLUs granted per window
  bool target_refine = true;
  bool include_hat_relaxation = true;
  long node_limit = 100;  // branch and bound budget per integer solve
  int jobs = 1;
  std::optional<std::vector<double>> local_x0;  // pointwise mode around x0
  std::optional<std::vector<int>> outputs;      // restrict certified outputs
};

struct CertifyStats {
  long lp_solves = 0;
  long milp_solves = 0;
  long bb_nodes = 0;
  long refined_neurons = 0;
};

struct CertReport {
  std::vector<int> output_indices;
  std::vector<double> epsilon_upper;  // parallel to output_indices
  RangeTable ranges;
  CertifyStats stats;
  double wall_time_seconds = 0.0;
};

// Layer-by-layer certification sweep. Every layer first gets single-layer
// twin bounds for y and dy, then its post-activation distance is bounded by
// a window looking back min(layer, window) levels; truncated integer solves
// contribute their proven dual bound, so the result is sound at any budget.
CertReport certify(const Network& net, const Box& domain, const CertifyConfig& cfg);

}  // namespace twincert
