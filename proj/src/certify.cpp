#include "twincert/certify.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

namespace twincert {

namespace {

struct SolveCounters {
  long lp = 0;
  long milp = 0;
  long nodes = 0;
};

Objective to_objective(const LinExpr& e, Sense sense) {
  return Objective{e.terms, sense, e.constant};
}

double bound_expr(LpEngine& eng, const LinExpr& expr, Sense sense, bool integer,
                  long node_limit, SolveCounters& acc, int layer, int neuron,
                  const char* what) {
  SolveResult r;
  if (integer) {
    r = eng.solve(to_objective(expr, sense), node_limit);
    acc.milp += 1;
    acc.nodes += r.nodes_explored;
  } else {
    r = eng.solve_relaxed(to_objective(expr, sense));
    acc.lp += 1;
  }
  if (r.status == SolveStatus::Infeasible)
    throw SolverError("certify: window system infeasible at layer " +
                      std::to_string(layer) + " neuron " + std::to_string(neuron) +
                      " while bounding " + what);
  // A truncated search still proves a bound in the objective sense, which is
  // exactly the side the certificate needs.
  if (r.status == SolveStatus::BoundOnly) return r.dual_bound;
  return r.objective_value;
}

// fn(k) for k in [0,n) on up to `jobs` threads. Work items write only their
// own slots, so the merged result does not depend on scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int k = next.fetch_add(1);
        if (k >= n) return;
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Both intervals bound the same true range, so their intersection does too;
// tiny numeric crossings collapse to the midpoint.
void intersect_into(double& lo, double& hi, double cand_lo, double cand_hi,
                    int layer, int neuron) {
  lo = std::max(lo, cand_lo);
  hi = std::min(hi, cand_hi);
  if (lo > hi) {
    if (lo - hi > 1e-6)
      throw SolverError("certify: contradictory bounds at layer " +
                        std::to_string(layer) + " neuron " +
                        std::to_string(neuron));
    lo = hi = 0.5 * (lo + hi);
  }
}

}  // namespace

CertReport certify(const Network& net, const Box& domain, const CertifyConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  if (net.depth() == 0) throw ShapeError("certify: empty network");
  const int m0 = net.input_size();
  if (domain.dim() != m0)
    throw ShapeError("certify: domain dimension " + std::to_string(domain.dim()) +
                     " does not match network input " + std::to_string(m0));
  for (int j = 0; j < m0; ++j)
    if (!(domain.lower[j] <= domain.upper[j]))
      throw ShapeError("certify: empty domain interval at index " + std::to_string(j));
  if (!(cfg.delta >= 0.0)) throw GuardError("certify: delta must be nonnegative");
  if (cfg.window < 1) throw GuardError("certify: window must be at least 1");
  if (cfg.refine < 0) throw GuardError("certify: refine must be nonnegative");
  if (cfg.node_limit < 1) throw GuardError("certify: node limit must be at least 1");
  if (cfg.jobs < 1) throw GuardError("certify: jobs must be at least 1");
  if (cfg.local_x0) {
    if (static_cast<int>(cfg.local_x0->size()) != m0)
      throw ShapeError("certify: local point has dimension " +
                       std::to_string(cfg.local_x0->size()) + ", expected " +
                       std::to_string(m0));
    for (int j = 0; j < m0; ++j) {
      const double v = (*cfg.local_x0)[j];
      if (!(domain.lower[j] <= v && v <= domain.upper[j]))
        throw GuardError("certify: local point leaves the domain at index " +
                         std::to_string(j));
    }
  }
  std::vector<int> out_sel;
  if (cfg.outputs) {
    out_sel = *cfg.outputs;
    std::sort(out_sel.begin(), out_sel.end());
    out_sel.erase(std::unique(out_sel.begin(), out_sel.end()), out_sel.end());
    if (out_sel.empty()) throw GuardError("certify: empty output selection");
    for (int j : out_sel)
      if (j < 0 || j >= net.output_size())
        throw GuardError("certify: output index " + std::to_string(j) +
                         " out of range");
  } else {
    out_sel.resize(net.output_size());
    std::iota(out_sel.begin(), out_sel.end(), 0);
  }

  CertReport rep;
  RangeTable& R = rep.ranges;
  R.input = cfg.local_x0 ? Box{*cfg.local_x0, *cfg.local_x0} : domain;
  R.dinput.lower.assign(m0, -cfg.delta);
  R.dinput.upper.assign(m0, cfg.delta);
  R.layers.resize(net.depth());

  EncodingConfig base_cfg;
  base_cfg.scheme = cfg.scheme;
  base_cfg.include_hat_relaxation = cfg.include_hat_relaxation;
  base_cfg.local = cfg.local_x0.has_value();

  SolveCounters total;
  long refined_total = 0;

  for (int i = 1; i <= net.depth(); ++i) {
    const int width = net.width(i);
    LayerRanges& lr = R.layers[i - 1];
    lr.resize(width);
    const bool final_layer = (i == net.depth());

    if (net.layers[i - 1].kind == LayerKind::Flatten) {
      for (int j = 0; j < width; ++j) {
        const double xl = (i == 1) ? R.input.lower[j] : R.layers[i - 2].xlo[j];
        const double xu = (i == 1) ? R.input.upper[j] : R.layers[i - 2].xhi[j];
        const double dl = (i == 1) ? R.dinput.lower[j] : R.layers[i - 2].dxlo[j];
        const double du = (i == 1) ? R.dinput.upper[j] : R.layers[i - 2].dxhi[j];
        lr.ylo[j] = xl;
        lr.yhi[j] = xu;
        lr.xlo[j] = xl;
        lr.xhi[j] = xu;
        lr.dylo[j] = dl;
        lr.dyhi[j] = du;
        lr.dxlo[j] = dl;
        lr.dxhi[j] = du;
      }
      continue;
    }

    // Single-layer twin bounds for y and dy of every neuron; one system,
    // objectives swapped on a warm engine.
    {
      WindowSpec win{i - 1, i, -1, Stage::PreAct};
      TwinEncoding enc = encode_twin_window(net, R, base_cfg, win);
      LpEngine eng(enc.cs);
      for (int j = 0; j < width; ++j) {
        lr.ylo[j] = bound_expr(eng, enc.base_pre(j), Sense::Minimize, false, 0,
                               total, i, j, "y");
        lr.yhi[j] = bound_expr(eng, enc.base_pre(j), Sense::Maximize, false, 0,
                               total, i, j, "y");
        lr.dylo[j] = bound_expr(eng, enc.delta_pre(j), Sense::Minimize, false, 0,
                                total, i, j, "dy");
        lr.dyhi[j] = bound_expr(eng, enc.delta_pre(j), Sense::Maximize, false, 0,
                                total, i, j, "dy");
      }
    }

    const int reach = std::min(i, cfg.window);
    std::vector<int> targets(width);
    std::iota(targets.begin(), targets.end(), 0);
    if (final_layer && cfg.outputs) targets = out_sel;
    const int n = static_cast<int>(targets.size());

    if (net.has_relu(i)) {
      for (int j = 0; j < width; ++j) {
        lr.xlo[j] = std::max(0.0, lr.ylo[j]);
        lr.xhi[j] = std::max(0.0, lr.yhi[j]);
        lr.dxlo[j] = std::min(0.0, lr.dylo[j]);
        lr.dxhi[j] = std::max(0.0, lr.dyhi[j]);
      }

      WindowSpec probe{i - reach, i, targets.front(), Stage::PostAct};
      const std::vector<NeuronRef> shared =
          select_refinement(net, R, cfg.scheme, probe, cfg.refine);

      std::vector<double> lo_v(n), hi_v(n);
      std::vector<SolveCounters> accs(n);
      std::vector<char> target_refined(n, 0);
      parallel_for(n, cfg.jobs, [&](int k) {
        const int t = targets[k];
        EncodingConfig ec = base_cfg;
        ec.refine = shared;
        if (cfg.target_refine) ec.refine.push_back(NeuronRef{i, t});
        WindowSpec win{i - reach, i, t, Stage::PostAct};
        TwinEncoding enc = encode_twin_window(net, R, ec, win);
        for (const BinaryRef& b : enc.binary_refs)
          if (b.layer == i && b.index == t) {
            target_refined[k] = 1;
            break;
          }
        LpEngine eng(enc.cs);
        const bool integer = enc.cs.has_binaries();
        hi_v[k] = bound_expr(eng, enc.delta_post(t), Sense::Maximize, integer,
                             cfg.node_limit, accs[k], i, t, "dx");
        lo_v[k] = bound_expr(eng, enc.delta_post(t), Sense::Minimize, integer,
                             cfg.node_limit, accs[k], i, t, "dx");
      });
      for (int k = 0; k < n; ++k) {
        const int t = targets[k];
        intersect_into(lr.dxlo[t], lr.dxhi[t], lo_v[k], hi_v[k], i, t);
        total.lp += accs[k].lp;
        total.milp += accs[k].milp;
        total.nodes += accs[k].nodes;
        refined_total += target_refined[k];
      }
      refined_total += static_cast<long>(shared.size());
    } else {
      for (int j = 0; j < width; ++j) {
        lr.xlo[j] = lr.ylo[j];
        lr.xhi[j] = lr.yhi[j];
        lr.dxlo[j] = lr.dylo[j];
        lr.dxhi[j] = lr.dyhi[j];
      }

      // A deeper window can still tighten a linear layer by tracking how its
      // inputs move together; solved per neuron, intersected with the
      // single-layer values.
      if (reach > 1) {
        WindowSpec win{i - reach, i, -1, Stage::PreAct};
        EncodingConfig ec = base_cfg;
        ec.refine = select_refinement(net, R, cfg.scheme, win, cfg.refine);
        refined_total += static_cast<long>(ec.refine.size());
        TwinEncoding enc = encode_twin_window(net, R, ec, win);
        const bool integer = enc.cs.has_binaries();

        std::vector<double> yl(n), yh(n), dl(n), dh(n);
        std::vector<SolveCounters> accs(n);
        parallel_for(n, cfg.jobs, [&](int k) {
          const int t = targets[k];
          LpEngine eng(enc.cs);
          yl[k] = bound_expr(eng, enc.base_pre(t), Sense::Minimize, integer,
                             cfg.node_limit, accs[k], i, t, "y");
          yh[k] = bound_expr(eng, enc.base_pre(t), Sense::Maximize, integer,
                             cfg.node_limit, accs[k], i, t, "y");
          dl[k] = bound_expr(eng, enc.delta_pre(t), Sense::Minimize, integer,
                             cfg.node_limit, accs[k], i, t, "dy");
          dh[k] = bound_expr(eng, enc.delta_pre(t), Sense::Maximize, integer,
                             cfg.node_limit, accs[k], i, t, "dy");
        });
        for (int k = 0; k < n; ++k) {
          const int t = targets[k];
          intersect_into(lr.ylo[t], lr.yhi[t], yl[k], yh[k], i, t);
          intersect_into(lr.dylo[t], lr.dyhi[t], dl[k], dh[k], i, t);
          lr.xlo[t] = lr.ylo[t];
          lr.xhi[t] = lr.yhi[t];
          lr.dxlo[t] = lr.dylo[t];
          lr.dxhi[t] = lr.dyhi[t];
          total.lp += accs[k].lp;
          total.milp += accs[k].milp;
          total.nodes += accs[k].nodes;
        }
      }
    }
  }

  const LayerRanges& out_lr = R.layers[net.depth() - 1];
  rep.output_indices = out_sel;
  rep.epsilon_upper.reserve(out_sel.size());
  for (int j : out_sel)
    rep.epsilon_upper.push_back(std::max(out_lr.dxhi[j], -out_lr.dxlo[j]));

  rep.stats.lp_solves = total.lp;
  rep.stats.milp_solves = total.milp;
  rep.stats.bb_nodes = total.nodes;
  rep.stats.refined_neurons = refined_total;
  rep.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rep;
}

}  // namespace twincert
