#include "twincert/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace twincert {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FileError(path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  out << text;
}

std::string layer_tag(int i, LayerKind kind) {
  const char* k = kind == LayerKind::Dense    ? "dense"
                  : kind == LayerKind::Conv2d ? "conv2d"
                                              : "flatten";
  return "layer " + std::to_string(i) + " (" + k + ")";
}

void check_finite(const std::vector<double>& v, const std::string& where) {
  for (double d : v)
    if (!std::isfinite(d)) throw ShapeError(where + ": non-finite value");
}

std::vector<double> number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw FileError(where + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) throw FileError(where + ": expected an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

double affine_row(const std::vector<SparseTerm>& terms, double bias,
                  const std::vector<double>& x) {
  double s = bias;
  for (const auto& t : terms) s += t.coef * x[t.col];
  return s;
}

int shape_product(const std::vector<int>& shape) {
  int p = 1;
  for (int d : shape) p *= d;
  return p;
}

}  // namespace

SparseAffine lower_conv(const Layer& layer, const std::vector<int>& in_shape) {
  if (layer.kind != LayerKind::Conv2d) throw ShapeError("lower_conv on a non-conv layer");
  if (in_shape.size() != 3) throw ShapeError("conv layer needs a (channels, height, width) input");
  const int C = in_shape[0], H = in_shape[1], W = in_shape[2];
  const int oc = static_cast<int>(layer.kernel.size());
  const int ic = static_cast<int>(layer.kernel[0].size());
  const int kh = static_cast<int>(layer.kernel[0][0].size());
  const int kw = static_cast<int>(layer.kernel[0][0][0].size());
  const int sh = layer.stride_h, sw = layer.stride_w;
  (void)C;

  int oh, ow, pad_top, pad_left;
  if (layer.same_padding) {
    oh = (H + sh - 1) / sh;
    ow = (W + sw - 1) / sw;
    pad_top = std::max((oh - 1) * sh + kh - H, 0) / 2;
    pad_left = std::max((ow - 1) * sw + kw - W, 0) / 2;
  } else {
    oh = (H - kh) / sh + 1;
    ow = (W - kw) / sw + 1;
    pad_top = pad_left = 0;
  }

  SparseAffine out;
  out.rows.resize(static_cast<std::size_t>(oc) * oh * ow);
  out.bias.resize(out.rows.size());
  for (int c = 0; c < oc; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const int r = (c * oh + y) * ow + x;
        out.bias[r] = layer.bias[c];
        auto& row = out.rows[r];
        for (int i = 0; i < ic; ++i) {
          for (int u = 0; u < kh; ++u) {
            const int iy = y * sh - pad_top + u;
            if (iy < 0 || iy >= H) continue;
            for (int v = 0; v < kw; ++v) {
              const int ix = x * sw - pad_left + v;
              if (ix < 0 || ix >= W) continue;
              const double w = layer.kernel[c][i][u][v];
              if (w != 0.0) row.push_back({(i * H + iy) * W + ix, w});
            }
          }
        }
      }
    }
  }
  return out;
}

int Network::input_size() const { return shape_product(input_shape); }

int Network::width(int i) const {
  return i == 0 ? input_size() : layers[i - 1].out_size;
}

void Network::validate() {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (input_shape.empty()) throw ShapeError("network has an empty input shape");
  for (int d : input_shape)
    if (d <= 0) throw ShapeError("network input shape has a non-positive entry");

  std::vector<int> shape = input_shape;
  affine_.clear();
  for (int i = 1; i <= depth(); ++i) {
    Layer& L = layers[i - 1];
    const std::string tag = layer_tag(i, L.kind);
    L.in_shape = shape;
    L.in_size = shape_product(shape);

    switch (L.kind) {
      case LayerKind::Dense: {
        if (L.weights.empty()) throw ShapeError(tag + ": empty weight matrix");
        const int rows = static_cast<int>(L.weights.size());
        for (int r = 0; r < rows; ++r) {
          if (static_cast<int>(L.weights[r].size()) != L.in_size)
            throw ShapeError(tag + ": weight row " + std::to_string(r) + " has length " +
                             std::to_string(L.weights[r].size()) + ", expected " +
                             std::to_string(L.in_size));
          check_finite(L.weights[r], tag);
        }
        if (static_cast<int>(L.bias.size()) != rows)
          throw ShapeError(tag + ": bias length " + std::to_string(L.bias.size()) +
                           ", expected " + std::to_string(rows));
        check_finite(L.bias, tag);
        L.out_shape = {rows};
        L.out_size = rows;

        SparseAffine a;
        a.rows.resize(rows);
        a.bias = L.bias;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < L.in_size; ++c)
            if (L.weights[r][c] != 0.0) a.rows[r].push_back({c, L.weights[r][c]});
        affine_.push_back(std::move(a));
        break;
      }
      case LayerKind::Conv2d: {
        if (shape.size() != 3)
          throw ShapeError(tag + ": input is not a (channels, height, width) tensor");
        if (L.kernel.empty() || L.kernel[0].empty() || L.kernel[0][0].empty() ||
            L.kernel[0][0][0].empty())
          throw ShapeError(tag + ": empty kernel");
        const int oc = static_cast<int>(L.kernel.size());
        const int ic = static_cast<int>(L.kernel[0].size());
        const int kh = static_cast<int>(L.kernel[0][0].size());
        const int kw = static_cast<int>(L.kernel[0][0][0].size());
        for (const auto& per_in : L.kernel) {
          if (static_cast<int>(per_in.size()) != ic) throw ShapeError(tag + ": ragged kernel");
          for (const auto& k : per_in) {
            if (static_cast<int>(k.size()) != kh) throw ShapeError(tag + ": ragged kernel");
            for (const auto& row : k) {
              if (static_cast<int>(row.size()) != kw) throw ShapeError(tag + ": ragged kernel");
              check_finite(row, tag);
            }
          }
        }
        if (ic != shape[0])
          throw ShapeError(tag + ": kernel expects " + std::to_string(ic) +
                           " input channels, input has " + std::to_string(shape[0]));
        if (static_cast<int>(L.bias.size()) != oc)
          throw ShapeError(tag + ": bias length " + std::to_string(L.bias.size()) +
                           ", expected " + std::to_string(oc));
        check_finite(L.bias, tag);
        if (L.stride_h < 1 || L.stride_w < 1) throw ShapeError(tag + ": stride must be >= 1");
        if (!L.same_padding && (kh > shape[1] || kw > shape[2]))
          throw ShapeError(tag + ": kernel larger than input under valid padding");

        SparseAffine a = lower_conv(L, shape);
        int oh, ow;
        if (L.same_padding) {
          oh = (shape[1] + L.stride_h - 1) / L.stride_h;
          ow = (shape[2] + L.stride_w - 1) / L.stride_w;
        } else {
          oh = (shape[1] - kh) / L.stride_h + 1;
          ow = (shape[2] - kw) / L.stride_w + 1;
        }
        if (oh < 1 || ow < 1) throw ShapeError(tag + ": output spatial dims are not positive");
        L.out_shape = {oc, oh, ow};
        L.out_size = oc * oh * ow;
        affine_.push_back(std::move(a));
        break;
      }
      case LayerKind::Flatten: {
        if (L.relu) throw ShapeError(tag + ": flatten cannot carry a ReLU");
        L.out_shape = {L.in_size};
        L.out_size = L.in_size;
        SparseAffine a;
        a.rows.resize(L.in_size);
        a.bias.assign(L.in_size, 0.0);
        for (int r = 0; r < L.in_size; ++r) a.rows[r].push_back({r, 1.0});
        affine_.push_back(std::move(a));
        break;
      }
    }
    shape = L.out_shape;
  }
}

Network load_network(const std::string& path) {
  const json j = parse_file(path);
  if (!j.is_object()) throw FileError(path + ": expected a JSON object");

  Network net;
  net.name = j.value("name", "");
  if (!j.contains("input_shape")) throw FileError(path + ": missing input_shape");
  for (const auto& e : j.at("input_shape")) {
    if (!e.is_number_integer()) throw FileError(path + ": input_shape must hold integers");
    net.input_shape.push_back(e.get<int>());
  }
  if (!j.contains("layers") || !j.at("layers").is_array())
    throw FileError(path + ": missing layers array");

  int idx = 0;
  for (const auto& lj : j.at("layers")) {
    ++idx;
    const std::string where = path + ", layer " + std::to_string(idx);
    if (!lj.is_object() || !lj.contains("kind"))
      throw FileError(where + ": missing kind");
    const std::string kind = lj.at("kind").get<std::string>();

    Layer L;
    L.relu = lj.value("relu", false);
    if (kind == "dense") {
      L.kind = LayerKind::Dense;
      if (!lj.contains("weights") || !lj.at("weights").is_array())
        throw FileError(where + ": dense layer needs a weights matrix");
      for (const auto& row : lj.at("weights"))
        L.weights.push_back(number_list(row, where));
      L.bias = number_list(lj.at("bias"), where);
    } else if (kind == "conv2d") {
      L.kind = LayerKind::Conv2d;
      if (!lj.contains("weights") || !lj.at("weights").is_array())
        throw FileError(where + ": conv layer needs a weights tensor");
      for (const auto& per_out : lj.at("weights")) {
        L.kernel.emplace_back();
        if (!per_out.is_array()) throw FileError(where + ": conv weights must nest 4 deep");
        for (const auto& per_in : per_out) {
          L.kernel.back().emplace_back();
          if (!per_in.is_array()) throw FileError(where + ": conv weights must nest 4 deep");
          for (const auto& krow : per_in)
            L.kernel.back().back().push_back(number_list(krow, where));
        }
      }
      L.bias = number_list(lj.at("bias"), where);
      if (lj.contains("stride")) {
        const auto s = lj.at("stride");
        if (!s.is_array() || s.size() != 2) throw FileError(where + ": stride must be [sh, sw]");
        L.stride_h = s[0].get<int>();
        L.stride_w = s[1].get<int>();
      }
      const std::string pad = lj.value("padding", "valid");
      if (pad == "same")
        L.same_padding = true;
      else if (pad != "valid")
        throw FileError(where + ": padding must be \"valid\" or \"same\"");
    } else if (kind == "flatten") {
      L.kind = LayerKind::Flatten;
    } else {
      throw FileError(where + ": unknown kind \"" + kind + "\"");
    }
    net.layers.push_back(std::move(L));
  }

  net.validate();
  return net;
}

void save_network(const Network& net, const std::string& path) {
  json j;
  j["name"] = net.name;
  j["input_shape"] = net.input_shape;
  j["layers"] = json::array();
  for (const Layer& L : net.layers) {
    json lj;
    switch (L.kind) {
      case LayerKind::Dense:
        lj["kind"] = "dense";
        lj["weights"] = L.weights;
        lj["bias"] = L.bias;
        lj["relu"] = L.relu;
        break;
      case LayerKind::Conv2d:
        lj["kind"] = "conv2d";
        lj["weights"] = L.kernel;
        lj["bias"] = L.bias;
        lj["stride"] = {L.stride_h, L.stride_w};
        lj["padding"] = L.same_padding ? "same" : "valid";
        lj["relu"] = L.relu;
        break;
      case LayerKind::Flatten:
        lj["kind"] = "flatten";
        break;
    }
    j["layers"].push_back(std::move(lj));
  }
  write_file(path, j.dump(2) + "\n");
}

ForwardTrace forward(const Network& net, const std::vector<double>& input) {
  if (static_cast<int>(input.size()) != net.input_size())
    throw ShapeError("input length " + std::to_string(input.size()) + ", expected " +
                     std::to_string(net.input_size()));
  ForwardTrace t;
  t.input = input;
  const std::vector<double>* cur = &t.input;
  for (int i = 1; i <= net.depth(); ++i) {
    const Layer& L = net.layers[i - 1];
    std::vector<double> y(L.out_size);
    switch (L.kind) {
      case LayerKind::Dense:
        for (int r = 0; r < L.out_size; ++r) {
          double s = L.bias[r];
          for (int c = 0; c < L.in_size; ++c) s += L.weights[r][c] * (*cur)[c];
          y[r] = s;
        }
        break;
      case LayerKind::Conv2d: {
        const int H = L.in_shape[1], W = L.in_shape[2];
        const int oc = L.out_shape[0], oh = L.out_shape[1], ow = L.out_shape[2];
        const int ic = static_cast<int>(L.kernel[0].size());
        const int kh = static_cast<int>(L.kernel[0][0].size());
        const int kw = static_cast<int>(L.kernel[0][0][0].size());
        int pad_top = 0, pad_left = 0;
        if (L.same_padding) {
          pad_top = std::max((oh - 1) * L.stride_h + kh - H, 0) / 2;
          pad_left = std::max((ow - 1) * L.stride_w + kw - W, 0) / 2;
        }
        for (int c = 0; c < oc; ++c)
          for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
              double s = L.bias[c];
              for (int i2 = 0; i2 < ic; ++i2)
                for (int u = 0; u < kh; ++u) {
                  const int iy = yy * L.stride_h - pad_top + u;
                  if (iy < 0 || iy >= H) continue;
                  for (int v = 0; v < kw; ++v) {
                    const int ix = xx * L.stride_w - pad_left + v;
                    if (ix < 0 || ix >= W) continue;
                    s += L.kernel[c][i2][u][v] * (*cur)[(i2 * H + iy) * W + ix];
                  }
                }
              y[(c * oh + yy) * ow + xx] = s;
            }
        break;
      }
      case LayerKind::Flatten:
        y = *cur;
        break;
    }
    std::vector<double> x = y;
    if (L.relu)
      for (double& v : x) v = std::max(v, 0.0);
    t.y.push_back(std::move(y));
    t.x.push_back(std::move(x));
    cur = &t.x.back();
  }
  return t;
}

std::vector<double> gradient(const Network& net, const std::vector<double>& input,
                             int output_index) {
  if (output_index < 0 || output_index >= net.output_size())
    throw ShapeError("output index " + std::to_string(output_index) + " out of range");
  const ForwardTrace t = forward(net, input);

  std::vector<double> g(net.output_size(), 0.0);
  g[output_index] = 1.0;
  for (int i = net.depth(); i >= 1; --i) {
    if (net.has_relu(i))
      for (int k = 0; k < net.width(i); ++k)
        if (t.y[i - 1][k] <= 0.0) g[k] = 0.0;
    const SparseAffine& a = net.affine(i);
    std::vector<double> prev(net.width(i - 1), 0.0);
    for (int r = 0; r < static_cast<int>(a.rows.size()); ++r)
      for (const SparseTerm& term : a.rows[r]) prev[term.col] += term.coef * g[r];
    g = std::move(prev);
  }
  return g;
}

Box load_box(const std::string& path) {
  const json j = parse_file(path);
  if (!j.is_object() || !j.contains("lower") || !j.contains("upper"))
    throw FileError(path + ": expected {\"lower\": [...], \"upper\": [...]}");
  Box b;
  b.lower = number_list(j.at("lower"), path);
  b.upper = number_list(j.at("upper"), path);
  if (b.lower.size() != b.upper.size())
    throw ShapeError(path + ": lower and upper have different lengths");
  check_finite(b.lower, path);
  check_finite(b.upper, path);
  for (std::size_t i = 0; i < b.lower.size(); ++i)
    if (b.lower[i] > b.upper[i]) throw ShapeError(path + ": lower exceeds upper");
  return b;
}

void save_box(const Box& box, const std::string& path) {
  json j;
  j["lower"] = box.lower;
  j["upper"] = box.upper;
  write_file(path, j.dump(2) + "\n");
}

std::vector<double> load_vector(const std::string& path) {
  const json j = parse_file(path);
  if (!j.is_array()) throw FileError(path + ": expected a JSON array of numbers");
  std::vector<double> v = number_list(j, path);
  check_finite(v, path);
  return v;
}

double SubNetwork::eval(const std::vector<double>& x_source) const {
  if (static_cast<int>(x_source.size()) != net->width(source_level))
    throw ShapeError("sub-network input length mismatch");
  std::vector<double> cur = x_source;
  for (int i = source_level + 1; i < target_layer; ++i) {
    const SparseAffine& a = net->affine(i);
    std::vector<double> nxt(net->width(i));
    for (int r = 0; r < static_cast<int>(nxt.size()); ++r)
      nxt[r] = affine_row(a.rows[r], a.bias[r], cur);
    if (net->has_relu(i))
      for (double& v : nxt) v = std::max(v, 0.0);
    cur = std::move(nxt);
  }
  const SparseAffine& a = net->affine(target_layer);
  double y = affine_row(a.rows[target_neuron], a.bias[target_neuron], cur);
  if (stage == Stage::PostAct && net->has_relu(target_layer)) y = std::max(y, 0.0);
  return y;
}

SubNetwork decompose(const Network& net, int layer, int neuron, Stage stage, int w) {
  if (layer < 1 || layer > net.depth())
    throw ShapeError("decompose: layer " + std::to_string(layer) + " out of range");
  if (w < 1 || w > layer)
    throw ShapeError("decompose: window " + std::to_string(w) + " out of range");
  if (neuron < 0 || neuron >= net.width(layer))
    throw ShapeError("decompose: neuron " + std::to_string(neuron) + " out of range");
  return SubNetwork{&net, layer - w, layer, neuron, stage};
}

void LayerRanges::resize(int m) {
  ylo.assign(m, 0.0);
  yhi.assign(m, 0.0);
  xlo.assign(m, 0.0);
  xhi.assign(m, 0.0);
  dylo.assign(m, 0.0);
  dyhi.assign(m, 0.0);
  dxlo.assign(m, 0.0);
  dxhi.assign(m, 0.0);
}

RangeTable propagate_intervals(const Network& net, const Box& X, double delta) {
  if (X.dim() != net.input_size()) throw ShapeError("domain dimension mismatch");
  if (delta < 0) throw ShapeError("delta must be >= 0");

  RangeTable table;
  table.input = X;
  table.dinput.lower.assign(X.dim(), -delta);
  table.dinput.upper.assign(X.dim(), delta);

  std::vector<double> xlo = X.lower, xhi = X.upper;
  std::vector<double> dxlo = table.dinput.lower, dxhi = table.dinput.upper;

  for (int i = 1; i <= net.depth(); ++i) {
    const SparseAffine& a = net.affine(i);
    LayerRanges r;
    r.resize(net.width(i));
    for (int k = 0; k < net.width(i); ++k) {
      double lo = a.bias[k], hi = a.bias[k], dlo = 0.0, dhi = 0.0;
      for (const SparseTerm& t : a.rows[k]) {
        if (t.coef > 0) {
          lo += t.coef * xlo[t.col];
          hi += t.coef * xhi[t.col];
          dlo += t.coef * dxlo[t.col];
          dhi += t.coef * dxhi[t.col];
        } else {
          lo += t.coef * xhi[t.col];
          hi += t.coef * xlo[t.col];
          dlo += t.coef * dxhi[t.col];
          dhi += t.coef * dxlo[t.col];
        }
      }
      r.ylo[k] = lo;
      r.yhi[k] = hi;
      r.dylo[k] = dlo;
      r.dyhi[k] = dhi;
      if (net.has_relu(i)) {
        r.xlo[k] = std::max(0.0, lo);
        r.xhi[k] = std::max(0.0, hi);
        r.dxlo[k] = std::min(0.0, dlo);
        r.dxhi[k] = std::max(0.0, dhi);
      } else {
        r.xlo[k] = lo;
        r.xhi[k] = hi;
        r.dxlo[k] = dlo;
        r.dxhi[k] = dhi;
      }
    }
    xlo = r.xlo;
    xhi = r.xhi;
    dxlo = r.dxlo;
    dxhi = r.dxhi;
    table.layers.push_back(std::move(r));
  }
  return table;
}

}  // namespace twincert
