#include "twincert/baseline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "twincert/encode.hpp"

namespace twincert {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_output(const Network& net, int output) {
  if (output < 0 || output >= net.output_size())
    throw GuardError("output index out of range");
}

void check_domain(const Network& net, const Box& domain, double delta) {
  if (domain.dim() != net.input_size())
    throw ShapeError("domain dimension does not match the network input");
  if (delta < 0.0) throw GuardError("delta must be nonnegative");
}

void check_inside(const std::vector<double>& x, const Box& domain) {
  if (static_cast<int>(x.size()) != domain.dim())
    throw ShapeError("point dimension does not match the domain");
  for (int d = 0; d < domain.dim(); ++d)
    if (x[d] < domain.lower[d] - 1e-12 || x[d] > domain.upper[d] + 1e-12)
      throw GuardError("point lies outside the domain");
}

int count_unstable(const Network& net, const RangeTable& rt) {
  int n = 0;
  for (int i = 1; i <= net.depth(); ++i) {
    if (!net.has_relu(i)) continue;
    const LayerRanges& lr = rt.layers[i - 1];
    for (int j = 0; j < net.width(i); ++j)
      if (relu_phase(lr.ylo[j], lr.yhi[j]) == ReluPhase::Unstable) ++n;
  }
  return n;
}

double output_at(const Network& net, const std::vector<double>& x, int j) {
  return forward(net, x).output()[j];
}

// Extremes of buf over the index windows [i-radius, i+radius] clipped to the
// array, via a monotone deque (both window edges are non-decreasing in i).
std::vector<double> sliding_extreme(const std::vector<double>& buf, int radius,
                                    bool take_max) {
  const int n = static_cast<int>(buf.size());
  std::vector<double> out(n);
  std::deque<int> dq;
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int hi = std::min(n - 1, i + radius);
    for (; next <= hi; ++next) {
      while (!dq.empty() && (take_max ? buf[dq.back()] <= buf[next]
                                      : buf[dq.back()] >= buf[next]))
        dq.pop_back();
      dq.push_back(next);
    }
    while (dq.front() < i - radius) dq.pop_front();
    out[i] = buf[dq.front()];
  }
  return out;
}

struct GridAxes {
  std::vector<std::vector<double>> pts;
  bool uniform = true;  // every axis a perfect lattice of the common pitch
};

GridAxes build_axes(const Box& domain, double step) {
  GridAxes g;
  g.pts.resize(domain.dim());
  for (int d = 0; d < domain.dim(); ++d) {
    const double lo = domain.lower[d], hi = domain.upper[d];
    const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    auto& axis = g.pts[d];
    axis.resize(n);
    for (int i = 0; i < n; ++i) axis[i] = std::min(lo + i * step, hi);
    if (hi - axis.back() > 1e-9 * std::max(1.0, std::abs(hi))) {
      axis.push_back(hi);
      g.uniform = false;
    }
  }
  return g;
}

// Perturbed-point lattice indices coincide with base indices shifted by at
// most round(delta/step) exactly when delta is a pitch multiple.
bool aligned_radius(double delta, double step, int* radius) {
  const double r = delta / step;
  const long k = std::lround(r);
  if (std::abs(r - k) > 1e-9 * std::max(1.0, r)) return false;
  *radius = static_cast<int>(k);
  return true;
}

double grid_fast(const Network& net, const GridAxes& g, int output, int radius) {
  const int m = static_cast<int>(g.pts.size());
  std::vector<int> shape(m);
  long total = 1;
  for (int d = 0; d < m; ++d) {
    shape[d] = static_cast<int>(g.pts[d].size());
    total *= shape[d];
  }
  std::vector<double> f(total);
  std::vector<double> pt(m);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int d = m - 1; d >= 0; --d) {
      pt[d] = g.pts[d][rem % shape[d]];
      rem /= shape[d];
    }
    f[idx] = output_at(net, pt, output);
  }

  // Box-window extremes compose one axis at a time.
  std::vector<double> fmax = f, fmin = f;
  for (int axis = 0; axis < m; ++axis) {
    long inner = 1;
    for (int d = axis + 1; d < m; ++d) inner *= shape[d];
    const long outer = total / (inner * shape[axis]);
    std::vector<double> row(shape[axis]);
    for (long o = 0; o < outer; ++o) {
      for (long in = 0; in < inner; ++in) {
        const long base = o * shape[axis] * inner + in;
        for (int i = 0; i < shape[axis]; ++i) row[i] = fmax[base + i * inner];
        std::vector<double> mx = sliding_extreme(row, radius, true);
        for (int i = 0; i < shape[axis]; ++i) fmax[base + i * inner] = mx[i];
        for (int i = 0; i < shape[axis]; ++i) row[i] = fmin[base + i * inner];
        std::vector<double> mn = sliding_extreme(row, radius, false);
        for (int i = 0; i < shape[axis]; ++i) fmin[base + i * inner] = mn[i];
      }
    }
  }

  double best = 0.0;
  for (long idx = 0; idx < total; ++idx)
    best = std::max(best, std::max(fmax[idx] - f[idx], f[idx] - fmin[idx]));
  return best;
}

double grid_naive(const Network& net, const Box& domain, double delta,
                  int output, double step, const GridAxes& g) {
  const int m = static_cast<int>(g.pts.size());
  std::vector<double> x(m), xh(m);
  double best = 0.0;

  auto hat_axis = [&](int d) {
    const double lo = std::max(domain.lower[d], x[d] - delta);
    const double hi = std::min(domain.upper[d], x[d] + delta);
    std::vector<double> pts;
    for (double v = lo; v < hi - 1e-12; v += step) pts.push_back(v);
    pts.push_back(hi);
    return pts;
  };

  std::function<void(int, double)> hat_loop = [&](int d, double fx) {
    if (d == m) {
      best = std::max(best, std::abs(output_at(net, xh, output) - fx));
      return;
    }
    for (double v : hat_axis(d)) {
      xh[d] = v;
      hat_loop(d + 1, fx);
    }
  };
  std::function<void(int)> base_loop = [&](int d) {
    if (d == m) {
      hat_loop(0, output_at(net, x, output));
      return;
    }
    for (double v : g.pts[d]) {
      x[d] = v;
      base_loop(d + 1);
    }
  };
  base_loop(0);
  return best;
}

Objective to_objective(const LinExpr& e, Sense sense) {
  Objective o;
  o.terms = e.terms;
  o.constant = e.constant;
  o.sense = sense;
  return o;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open dataset: " + path);
  Dataset rows;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t,") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (first_line) {
        first_line = false;
        continue;
      }
      throw FileError("dataset has a non-numeric cell: " + path);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FileError("dataset rows have inconsistent lengths: " + path);
    rows.push_back(std::move(row));
    first_line = false;
  }
  if (rows.empty()) throw FileError("dataset has no rows: " + path);
  return rows;
}

double exact_epsilon(const Network& net, const Box& domain, double delta,
                     int output, bool force) {
  check_domain(net, domain, delta);
  check_output(net, output);

  RangeTable rt = propagate_intervals(net, domain, delta);
  const int unstable = count_unstable(net, rt);
  if (!force && unstable > 24)
    throw GuardError("network has " + std::to_string(unstable) +
                     " unstable relu neurons, above the exact-search limit of 24");

  WindowSpec win;
  win.source_level = 0;
  win.target_layer = net.depth();
  win.target_neuron = output;
  win.stage = net.has_relu(net.depth()) ? Stage::PostAct : Stage::PreAct;

  EncodingConfig ec;
  ec.scheme = Scheme::Btne;
  ec.exact_all = true;

  TwinEncoding enc = encode_twin_window(net, rt, ec, win);
  const LinExpr obj = win.stage == Stage::PostAct ? enc.delta_post(output)
                                                  : enc.delta_pre(output);
  LpEngine eng(enc.cs);
  double worst = 0.0;
  for (Sense sense : {Sense::Maximize, Sense::Minimize}) {
    SolveResult r = eng.solve(to_objective(obj, sense), kUnlimitedNodes);
    if (r.status != SolveStatus::Optimal)
      throw SolverError("exact twin search did not reach an optimum");
    worst = std::max(worst, std::abs(r.objective_value));
  }
  return worst;
}

double grid_oracle(const Network& net, const Box& domain, double delta,
                   int output, double step) {
  check_domain(net, domain, delta);
  check_output(net, output);
  if (net.input_size() > 3)
    throw GuardError("grid oracle supports at most 3 input dimensions");
  if (step <= 0.0) throw GuardError("grid step must be positive");

  GridAxes g = build_axes(domain, step);
  int radius = 0;
  if (g.uniform && aligned_radius(delta, step, &radius))
    return grid_fast(net, g, output, radius);
  return grid_naive(net, domain, delta, output, step, g);
}

double pgd_epsilon(const Network& net, const Dataset& data, const Box& domain,
                   double delta, int output, const AttackConfig& ac) {
  check_domain(net, domain, delta);
  check_output(net, output);
  if (data.empty()) throw GuardError("dataset is empty");
  if (ac.steps < 1 || ac.restarts < 1)
    throw GuardError("attack needs steps >= 1 and restarts >= 1");
  const double step = ac.step_size > 0.0 ? ac.step_size : delta / 8.0;

  const int m = net.input_size();
  std::vector<double> lo(m), hi(m), eta(m), pt(m);
  double best = 0.0;

  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::vector<double>& x = data[s];
    check_inside(x, domain);
    const double fx = output_at(net, x, output);
    for (int d = 0; d < m; ++d) {
      lo[d] = std::max(-delta, domain.lower[d] - x[d]);
      hi[d] = std::min(delta, domain.upper[d] - x[d]);
    }
    for (int restart = 0; restart < ac.restarts; ++restart) {
      for (int sense = 0; sense < 2; ++sense) {
        std::mt19937_64 rng(ac.rng_seed + 1000003ull * s + 101ull * restart +
                            static_cast<std::uint64_t>(sense));
        for (int d = 0; d < m; ++d) {
          std::uniform_real_distribution<double> u(lo[d], hi[d]);
          eta[d] = lo[d] < hi[d] ? u(rng) : lo[d];
        }
        const double dir = sense == 0 ? 1.0 : -1.0;
        for (int d = 0; d < m; ++d) pt[d] = x[d] + eta[d];
        best = std::max(best, std::abs(output_at(net, pt, output) - fx));
        for (int it = 0; it < ac.steps; ++it) {
          std::vector<double> grad = gradient(net, pt, output);
          for (int d = 0; d < m; ++d) {
            eta[d] = std::clamp(eta[d] + dir * step * sgn(grad[d]), lo[d], hi[d]);
            pt[d] = x[d] + eta[d];
          }
          best = std::max(best, std::abs(output_at(net, pt, output) - fx));
        }
      }
    }
  }
  return best;
}

std::vector<double> fgsm_perturb(const Network& net, const std::vector<double>& x,
                                 const Box& domain, double delta, int output,
                                 Sense sense) {
  check_domain(net, domain, delta);
  check_output(net, output);
  check_inside(x, domain);

  std::vector<double> grad = gradient(net, x, output);
  const double dir = sense == Sense::Maximize ? 1.0 : -1.0;
  std::vector<double> out(x.size());
  for (std::size_t d = 0; d < x.size(); ++d)
    out[d] = std::clamp(x[d] + dir * delta * sgn(grad[d]), domain.lower[d],
                        domain.upper[d]);
  return out;
}

}  // namespace twincert
