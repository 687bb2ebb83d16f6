#pragma once

#include <string>
#include <vector>

#include "twincert/common.hpp"

namespace twincert {

// Layers are numbered 1..n in every public API; level 0 is the network input.
// Image tensors are flattened channel-major: flat = (c*H + h)*W + w.

enum class LayerKind { Dense, Conv2d, Flatten };

struct Layer {
  LayerKind kind = LayerKind::Dense;
  bool relu = false;

  // dense
  std::vector<std::vector<double>> weights;  // [out][in]
  std::vector<double> bias;                  // dense: [out]; conv: [out_c]

  // conv2d
  std::vector<std::vector<std::vector<std::vector<double>>>> kernel;  // [oc][ic][kh][kw]
  int stride_h = 1;
  int stride_w = 1;
  bool same_padding = false;

  // resolved by Network::validate()
  std::vector<int> in_shape;
  std::vector<int> out_shape;
  int in_size = 0;
  int out_size = 0;
};

struct SparseTerm {
  int col;
  double coef;
};

// One affine map y = Rows * x + bias with sparse rows.
struct SparseAffine {
  std::vector<std::vector<SparseTerm>> rows;
  std::vector<double> bias;
};

SparseAffine lower_conv(const Layer& layer, const std::vector<int>& in_shape);

class Network {
 public:
  std::string name;
  std::vector<int> input_shape;
  std::vector<Layer> layers;

  int depth() const { return static_cast<int>(layers.size()); }
  int input_size() const;
  int output_size() const { return layers.back().out_size; }
  // Width of layer i (1..n); i = 0 gives the input width.
  int width(int i) const;
  bool has_relu(int i) const { return layers[i - 1].relu; }

  // Resolves layer shapes, checks dimension and finiteness invariants, and
  // precomputes the affine form of every layer. Must be called once before
  // any evaluation; load_network does so.
  void validate();

  // Affine form of layer i (conv layers lowered, flatten = identity).
  const SparseAffine& affine(int i) const { return affine_[i - 1]; }

 private:
  std::vector<SparseAffine> affine_;
};

Network load_network(const std::string& path);
void save_network(const Network& net, const std::string& path);

struct ForwardTrace {
  std::vector<double> input;
  std::vector<std::vector<double>> y;  // y[i-1] = pre-activation of layer i
  std::vector<std::vector<double>> x;  // x[i-1] = post-activation of layer i
  const std::vector<double>& output() const { return x.back(); }
};

ForwardTrace forward(const Network& net, const std::vector<double>& input);

// d F_j / d input, reverse accumulation; ReLU subgradient at 0 is 0.
std::vector<double> gradient(const Network& net, const std::vector<double>& input,
                             int output_index);

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;
  int dim() const { return static_cast<int>(lower.size()); }
};

Box load_box(const std::string& path);
void save_box(const Box& box, const std::string& path);
std::vector<double> load_vector(const std::string& path);

enum class Stage { PreAct, PostAct };

// The slice of `net` from level source_level to one neuron of target_layer.
// Stage::PreAct stops at y of the target; Stage::PostAct applies its ReLU.
struct SubNetwork {
  const Network* net = nullptr;
  int source_level = 0;
  int target_layer = 0;
  int target_neuron = 0;
  Stage stage = Stage::PostAct;

  double eval(const std::vector<double>& x_source) const;
};

SubNetwork decompose(const Network& net, int layer, int neuron, Stage stage, int w);

struct LayerRanges {
  std::vector<double> ylo, yhi, xlo, xhi;
  std::vector<double> dylo, dyhi, dxlo, dxhi;
  void resize(int m);
};

// Per-neuron intervals for y, x, dy=yhat-y, dx=xhat-x across all layers;
// the input level keeps x0 in `input` and dx0 in `dinput`.
struct RangeTable {
  Box input;
  Box dinput;
  std::vector<LayerRanges> layers;  // layers[i-1] for layer i
};

// Interval arithmetic sweep: sound but coarse bounds for every layer.
RangeTable propagate_intervals(const Network& net, const Box& X, double delta);

}  // namespace twincert
