#pragma once

#include <vector>

#include "twincert/lincore.hpp"
#include "twincert/model.hpp"

namespace twincert {

struct NeuronRef {
  int layer = 0;
  int index = 0;
  friend bool operator==(const NeuronRef&, const NeuronRef&) = default;
  friend auto operator<=>(const NeuronRef&, const NeuronRef&) = default;
};

// Itne keeps one base copy plus per-neuron distance variables; the perturbed
// copy exists only as the linear expressions y+dy and x+dx. Btne builds two
// full independent copies coupled solely at the window input.
enum class Scheme { Itne, Btne };

struct EncodingConfig {
  Scheme scheme = Scheme::Itne;
  bool exact_all = false;        // binaries on every unstable ReLU
  std::vector<NeuronRef> refine; // binaries on these neurons only
  bool include_hat_relaxation = true;
  bool local = false;            // pointwise mode: no input coupling rows
};

struct LinExpr {
  std::vector<LinTerm> terms;
  double constant = 0.0;
};

// The window runs from level `source_level` (its input) through
// `target_layer`. Stage::PreAct leaves the target layer as expressions over
// the previous level, for bounding y and dy of any of its neurons;
// Stage::PostAct materializes one target neuron through its ReLU.
struct WindowSpec {
  int source_level = 0;
  int target_layer = 1;
  int target_neuron = -1;
  Stage stage = Stage::PreAct;
};

// Which ReLU copy a branching variable controls, for embedding witnesses.
struct BinaryRef {
  int layer = 0;
  int index = 0;
  bool hat = false;
};

struct TwinEncoding {
  ConstraintSystem cs;
  WindowSpec window;
  Scheme scheme = Scheme::Itne;
  const Network* net = nullptr;

  // Variable ids per window level; slot k covers layer source_level + k,
  // slot 0 is the window input. Unused slots stay empty: dx/dy only for
  // Itne, xh/yh only for Btne, and a PostAct target materializes just the
  // target neuron (stored at its neuron index, -1 elsewhere).
  std::vector<std::vector<int>> x, dx, y, dy, xh, yh;
  std::vector<int> binaries;
  std::vector<BinaryRef> binary_refs;

  LinExpr base_pre(int neuron) const;    // y_j at the target layer
  LinExpr delta_pre(int neuron) const;   // yhat_j - y_j
  LinExpr base_post(int neuron) const;   // x_j, PostAct targets only
  LinExpr delta_post(int neuron) const;  // xhat_j - x_j
};

TwinEncoding encode_twin_window(const Network& net, const RangeTable& ranges,
                                const EncodingConfig& cfg, const WindowSpec& win);

// Lift a concrete pair of executions (both copies entering the window at
// x_src / xhat_src) to a full assignment of the encoding's variables.
std::vector<double> embed_pair(const TwinEncoding& enc, const Network& net,
                               const std::vector<double>& x_src,
                               const std::vector<double>& xhat_src);

// x = max(0, y) exactly, one binary, valid when ylo < 0 < yhi.
void encode_relu_exact(ConstraintSystem& cs, int y, int x, double ylo, double yhi);
// Triangle relaxation of the same graph.
void encode_relu_lpr(ConstraintSystem& cs, int y, int x, double ylo, double yhi);
// Chord relaxation of dx = relu(y+dy)-relu(y) as a function of dy alone.
void encode_dist_lpr(ConstraintSystem& cs, int dy, int dx, double dylo, double dyhi);

enum class ReluPhase { Dead, Active, Unstable };
ReluPhase relu_phase(double lo, double hi);

// Area of the triangle between relu and its chord; 0 for stable neurons.
double unstable_area(double ylo, double yhi);

// Top `budget` window neurons by unstable area + distance reach, strictly
// between source level and target layer.
std::vector<NeuronRef> select_refinement(const Network& net, const RangeTable& ranges,
                                         Scheme scheme, const WindowSpec& win,
                                         int budget);

}  // namespace twincert
