#include "twincert/encode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "twincert/common.hpp"

namespace twincert {

namespace {

LinExpr vx(int id) { return LinExpr{{{id, 1.0}}, 0.0}; }

LinExpr scaled(const LinExpr& a, double f) {
  LinExpr r;
  r.constant = a.constant * f;
  r.terms.reserve(a.terms.size());
  for (const LinTerm& t : a.terms) r.terms.push_back({t.var, t.coef * f});
  return r;
}

LinExpr sum(const LinExpr& a, const LinExpr& b) {
  LinExpr r = a;
  r.terms.insert(r.terms.end(), b.terms.begin(), b.terms.end());
  r.constant += b.constant;
  return r;
}

LinExpr diff(const LinExpr& a, const LinExpr& b) { return sum(a, scaled(b, -1.0)); }

std::vector<LinTerm> merged(const LinExpr& e) {
  std::map<int, double> acc;
  for (const LinTerm& t : e.terms) acc[t.var] += t.coef;
  std::vector<LinTerm> out;
  out.reserve(acc.size());
  for (const auto& [v, c] : acc)
    if (c != 0.0) out.push_back({v, c});
  return out;
}

void emit_le(ConstraintSystem& cs, const LinExpr& e, double rhs) {
  cs.add_le(merged(e), rhs - e.constant);
}
void emit_ge(ConstraintSystem& cs, const LinExpr& e, double rhs) {
  cs.add_ge(merged(e), rhs - e.constant);
}
void emit_eq(ConstraintSystem& cs, const LinExpr& e, double rhs) {
  cs.add_eq(merged(e), rhs - e.constant);
}

int relu_exact_expr(ConstraintSystem& cs, const LinExpr& ye, const LinExpr& xe,
                    double ylo, double yhi) {
  if (!(ylo < 0.0 && yhi > 0.0))
    throw SolverError("exact relu encoding needs ylo < 0 < yhi");
  const int z = cs.add_var(0.0, 1.0, true);
  emit_ge(cs, xe, 0.0);
  emit_ge(cs, diff(xe, ye), 0.0);
  LinExpr big = diff(xe, ye);  // x <= y - ylo(1-z)
  big.terms.push_back({z, -ylo});
  emit_le(cs, big, -ylo);
  LinExpr cap = xe;  // x <= yhi z
  cap.terms.push_back({z, -yhi});
  emit_le(cs, cap, 0.0);
  return z;
}

void relu_lpr_expr(ConstraintSystem& cs, const LinExpr& ye, const LinExpr& xe,
                   double ylo, double yhi) {
  if (!(ylo < 0.0 && yhi > 0.0))
    throw SolverError("relu relaxation needs ylo < 0 < yhi");
  emit_ge(cs, xe, 0.0);
  emit_ge(cs, diff(xe, ye), 0.0);
  // x <= yhi (y - ylo) / (yhi - ylo), cleared of the denominator
  emit_le(cs, diff(scaled(xe, yhi - ylo), scaled(ye, yhi)), -yhi * ylo);
}

void dist_lpr_expr(ConstraintSystem& cs, const LinExpr& dye, const LinExpr& dxe,
                   double dylo, double dyhi) {
  const double l = std::min(0.0, dylo);
  const double u = std::max(0.0, dyhi);
  if (u - l <= 0.0) {
    emit_eq(cs, dxe, 0.0);
    return;
  }
  // chords of the 1-Lipschitz dx(dy) graph through (l, l)-(u, 0) and (l, 0)-(u, u)
  emit_ge(cs, sum(scaled(dxe, u - l), scaled(dye, l)), l * u);
  emit_le(cs, diff(scaled(dxe, u - l), scaled(dye, u)), -u * l);
}

}  // namespace

void encode_relu_exact(ConstraintSystem& cs, int y, int x, double ylo, double yhi) {
  relu_exact_expr(cs, vx(y), vx(x), ylo, yhi);
}

void encode_relu_lpr(ConstraintSystem& cs, int y, int x, double ylo, double yhi) {
  relu_lpr_expr(cs, vx(y), vx(x), ylo, yhi);
}

void encode_dist_lpr(ConstraintSystem& cs, int dy, int dx, double dylo, double dyhi) {
  dist_lpr_expr(cs, vx(dy), vx(dx), dylo, dyhi);
}

ReluPhase relu_phase(double lo, double hi) {
  if (hi <= 0.0) return ReluPhase::Dead;
  if (lo >= 0.0) return ReluPhase::Active;
  return ReluPhase::Unstable;
}

double unstable_area(double ylo, double yhi) {
  if (ylo < 0.0 && yhi > 0.0) return -yhi * ylo / (yhi - ylo);
  return 0.0;
}

TwinEncoding encode_twin_window(const Network& net, const RangeTable& ranges,
                                const EncodingConfig& cfg, const WindowSpec& win) {
  const int p = win.source_level;
  const int i = win.target_layer;
  if (p < 0 || i < 1 || i > net.depth() || p >= i)
    throw ShapeError("window must satisfy 0 <= source < target <= depth");
  if (static_cast<int>(ranges.layers.size()) < i)
    throw ShapeError("range table does not cover the window");
  const bool post = win.stage == Stage::PostAct;
  if (post) {
    if (!net.has_relu(i))
      throw ShapeError("post-activation target needs a relu layer");
    if (win.target_neuron < 0 || win.target_neuron >= net.width(i))
      throw ShapeError("target neuron out of range");
  }
  const bool btne = cfg.scheme == Scheme::Btne;
  const int K = i - p;

  TwinEncoding enc;
  enc.window = win;
  enc.scheme = cfg.scheme;
  enc.net = &net;
  enc.x.resize(K + 1);
  enc.dx.resize(K + 1);
  enc.y.resize(K + 1);
  enc.dy.resize(K + 1);
  enc.xh.resize(K + 1);
  enc.yh.resize(K + 1);

  std::set<std::pair<int, int>> refined;
  for (const NeuronRef& r : cfg.refine) refined.insert({r.layer, r.index});
  auto use_exact = [&](int layer, int j) {
    return cfg.exact_all || refined.count({layer, j}) != 0;
  };

  ConstraintSystem& cs = enc.cs;

  const int mp = (p == 0) ? net.input_size() : net.width(p);
  if (p == 0) {
    if (ranges.input.dim() != mp || ranges.dinput.dim() != mp)
      throw ShapeError("input boxes do not match the network input size");
  } else {
    const LayerRanges& lr = ranges.layers[p - 1];
    if (static_cast<int>(lr.xlo.size()) != mp ||
        static_cast<int>(lr.dxlo.size()) != mp)
      throw ShapeError("source level ranges are incomplete");
  }

  enc.x[0].assign(mp, -1);
  if (!btne)
    enc.dx[0].assign(mp, -1);
  else
    enc.xh[0].assign(mp, -1);
  for (int j = 0; j < mp; ++j) {
    double xl, xu, dl, du;
    if (p == 0) {
      xl = ranges.input.lower[j];
      xu = ranges.input.upper[j];
      dl = ranges.dinput.lower[j];
      du = ranges.dinput.upper[j];
    } else {
      const LayerRanges& lr = ranges.layers[p - 1];
      xl = lr.xlo[j];
      xu = lr.xhi[j];
      dl = lr.dxlo[j];
      du = lr.dxhi[j];
    }
    enc.x[0][j] = cs.add_var(xl, xu);
    if (!btne) {
      enc.dx[0][j] = cs.add_var(dl, du);
      if (!cfg.local) {
        // perturbed point stays inside the certified source region
        const LinExpr hat = sum(vx(enc.x[0][j]), vx(enc.dx[0][j]));
        emit_ge(cs, hat, xl);
        emit_le(cs, hat, xu);
      }
    } else {
      const double hl = cfg.local ? xl + dl : xl;
      const double hu = cfg.local ? xu + du : xu;
      enc.xh[0][j] = cs.add_var(hl, hu);
      if (!cfg.local && p == 0) {
        const LinExpr d = diff(vx(enc.xh[0][j]), vx(enc.x[0][j]));
        emit_ge(cs, d, dl);
        emit_le(cs, d, du);
      }
    }
  }

  for (int k = 1; k <= K; ++k) {
    const int l = p + k;
    const bool is_target = (k == K);
    if (is_target && !post) break;  // target layer stays as expressions

    const LayerRanges& lr = ranges.layers[l - 1];
    const SparseAffine& aff = net.affine(l);
    const int w = net.width(l);
    if (static_cast<int>(lr.ylo.size()) != w ||
        static_cast<int>(lr.dylo.size()) != w)
      throw ShapeError("layer ranges are incomplete inside the window");

    auto hat_range = [&](int j) -> std::pair<double, double> {
      if (btne && !cfg.local) return {lr.ylo[j], lr.yhi[j]};
      return {lr.ylo[j] + lr.dylo[j], lr.yhi[j] + lr.dyhi[j]};
    };

    const int j0 = is_target ? win.target_neuron : 0;
    const int j1 = is_target ? win.target_neuron + 1 : w;

    enc.y[k].assign(w, -1);
    if (!btne)
      enc.dy[k].assign(w, -1);
    else
      enc.yh[k].assign(w, -1);

    for (int j = j0; j < j1; ++j) {
      LinExpr base_aff, other_aff;
      base_aff.constant = aff.bias[j];
      if (btne) other_aff.constant = aff.bias[j];
      for (const SparseTerm& t : aff.rows[j]) {
        base_aff.terms.push_back({enc.x[k - 1][t.col], t.coef});
        if (!btne)
          other_aff.terms.push_back({enc.dx[k - 1][t.col], t.coef});
        else
          other_aff.terms.push_back({enc.xh[k - 1][t.col], t.coef});
      }
      const int yv = cs.add_var(lr.ylo[j], lr.yhi[j]);
      enc.y[k][j] = yv;
      emit_eq(cs, diff(vx(yv), base_aff), 0.0);
      if (!btne) {
        const int dyv = cs.add_var(lr.dylo[j], lr.dyhi[j]);
        enc.dy[k][j] = dyv;
        emit_eq(cs, diff(vx(dyv), other_aff), 0.0);
      } else {
        const auto [hl, hu] = hat_range(j);
        const int yhv = cs.add_var(hl, hu);
        enc.yh[k][j] = yhv;
        emit_eq(cs, diff(vx(yhv), other_aff), 0.0);
      }
    }

    if (!net.has_relu(l)) {
      enc.x[k] = enc.y[k];
      if (!btne)
        enc.dx[k] = enc.dy[k];
      else
        enc.xh[k] = enc.yh[k];
      continue;
    }

    enc.x[k].assign(w, -1);
    if (!btne)
      enc.dx[k].assign(w, -1);
    else
      enc.xh[k].assign(w, -1);

    for (int j = j0; j < j1; ++j) {
      const double ylo = lr.ylo[j], yhi = lr.yhi[j];
      const auto [hlo, hhi] = hat_range(j);
      const ReluPhase base = relu_phase(ylo, yhi);
      const ReluPhase hat = relu_phase(hlo, hhi);
      const bool exact = use_exact(l, j);

      double xl = std::max(0.0, ylo), xu = std::max(0.0, yhi);
      if (base == ReluPhase::Dead) xl = xu = 0.0;
      const int xv = cs.add_var(xl, xu);
      enc.x[k][j] = xv;

      const LinExpr ye = vx(enc.y[k][j]);
      const LinExpr xe = vx(xv);

      if (!btne) {
        double dxl = std::min(0.0, lr.dylo[j]);
        double dxu = std::max(0.0, lr.dyhi[j]);
        if (!is_target && !lr.dxlo.empty()) {
          dxl = std::max(dxl, lr.dxlo[j]);
          dxu = std::min(dxu, lr.dxhi[j]);
        }
        const int dxv = cs.add_var(dxl, dxu);
        enc.dx[k][j] = dxv;
        const LinExpr dye = vx(enc.dy[k][j]);
        const LinExpr dxe = vx(dxv);
        const LinExpr yhe = sum(ye, dye);
        const LinExpr xhe = sum(xe, dxe);

        if (base == ReluPhase::Active) {
          emit_eq(cs, diff(xe, ye), 0.0);
        } else if (base == ReluPhase::Unstable) {
          if (exact) {
            enc.binaries.push_back(relu_exact_expr(cs, ye, xe, ylo, yhi));
            enc.binary_refs.push_back({l, j, false});
          } else {
            relu_lpr_expr(cs, ye, xe, ylo, yhi);
          }
        }

        if (hat == ReluPhase::Dead) {
          emit_eq(cs, xhe, 0.0);
        } else if (hat == ReluPhase::Active) {
          emit_eq(cs, diff(xhe, yhe), 0.0);
        } else if (base != ReluPhase::Unstable || exact) {
          if (exact) {
            enc.binaries.push_back(relu_exact_expr(cs, yhe, xhe, hlo, hhi));
            enc.binary_refs.push_back({l, j, true});
          } else {
            relu_lpr_expr(cs, yhe, xhe, hlo, hhi);
          }
        } else {
          dist_lpr_expr(cs, dye, dxe, lr.dylo[j], lr.dyhi[j]);
          if (cfg.include_hat_relaxation) relu_lpr_expr(cs, yhe, xhe, hlo, hhi);
        }
      } else {
        const int xhv = cs.add_var(std::max(0.0, hlo), std::max(0.0, hhi));
        enc.xh[k][j] = xhv;
        const LinExpr yhe = vx(enc.yh[k][j]);
        const LinExpr xhe = vx(xhv);

        if (base == ReluPhase::Active) {
          emit_eq(cs, diff(xe, ye), 0.0);
        } else if (base == ReluPhase::Unstable) {
          if (exact) {
            enc.binaries.push_back(relu_exact_expr(cs, ye, xe, ylo, yhi));
            enc.binary_refs.push_back({l, j, false});
          } else {
            relu_lpr_expr(cs, ye, xe, ylo, yhi);
          }
        }

        if (hat == ReluPhase::Active) {
          emit_eq(cs, diff(xhe, yhe), 0.0);
        } else if (hat == ReluPhase::Unstable) {
          if (exact) {
            enc.binaries.push_back(relu_exact_expr(cs, yhe, xhe, hlo, hhi));
            enc.binary_refs.push_back({l, j, true});
          } else {
            relu_lpr_expr(cs, yhe, xhe, hlo, hhi);
          }
        }
      }
    }
  }

  return enc;
}

LinExpr TwinEncoding::base_pre(int neuron) const {
  if (window.stage != Stage::PreAct)
    throw ShapeError("base_pre needs a pre-activation window");
  const SparseAffine& aff = net->affine(window.target_layer);
  const auto& xs = x[x.size() - 2];
  LinExpr e;
  e.constant = aff.bias[neuron];
  for (const SparseTerm& t : aff.rows[neuron]) e.terms.push_back({xs[t.col], t.coef});
  return e;
}

LinExpr TwinEncoding::delta_pre(int neuron) const {
  if (window.stage != Stage::PreAct)
    throw ShapeError("delta_pre needs a pre-activation window");
  const SparseAffine& aff = net->affine(window.target_layer);
  LinExpr e;
  if (scheme == Scheme::Itne) {
    const auto& ds = dx[dx.size() - 2];
    for (const SparseTerm& t : aff.rows[neuron]) e.terms.push_back({ds[t.col], t.coef});
  } else {
    const auto& hs = xh[xh.size() - 2];
    const auto& xs = x[x.size() - 2];
    for (const SparseTerm& t : aff.rows[neuron]) {
      e.terms.push_back({hs[t.col], t.coef});
      e.terms.push_back({xs[t.col], -t.coef});
    }
  }
  return e;
}

LinExpr TwinEncoding::base_post(int neuron) const {
  if (window.stage != Stage::PostAct || neuron != window.target_neuron)
    throw ShapeError("base_post is only defined for the materialized target");
  return vx(x.back()[neuron]);
}

LinExpr TwinEncoding::delta_post(int neuron) const {
  if (window.stage != Stage::PostAct || neuron != window.target_neuron)
    throw ShapeError("delta_post is only defined for the materialized target");
  if (scheme == Scheme::Itne) return vx(dx.back()[neuron]);
  return diff(vx(xh.back()[neuron]), vx(x.back()[neuron]));
}

std::vector<double> embed_pair(const TwinEncoding& enc, const Network& net,
                               const std::vector<double>& x_src,
                               const std::vector<double>& xhat_src) {
  const int p = enc.window.source_level;
  const int i = enc.window.target_layer;
  const int K = i - p;
  const int mp = static_cast<int>(enc.x[0].size());
  if (static_cast<int>(x_src.size()) != mp ||
      static_cast<int>(xhat_src.size()) != mp)
    throw ShapeError("source vectors do not match the window input size");

  std::vector<double> a(enc.cs.num_vars(), 0.0);
  std::vector<std::vector<double>> yb(K + 1), yh(K + 1);
  std::vector<double> cb = x_src, ch = xhat_src;

  for (int j = 0; j < mp; ++j) {
    a[enc.x[0][j]] = cb[j];
    if (enc.scheme == Scheme::Itne)
      a[enc.dx[0][j]] = ch[j] - cb[j];
    else
      a[enc.xh[0][j]] = ch[j];
  }

  for (int k = 1; k <= K; ++k) {
    const int l = p + k;
    const SparseAffine& aff = net.affine(l);
    const int w = net.width(l);
    yb[k].assign(w, 0.0);
    yh[k].assign(w, 0.0);
    std::vector<double> xb(w), xhv(w);
    for (int j = 0; j < w; ++j) {
      double sb = aff.bias[j], sh = aff.bias[j];
      for (const SparseTerm& t : aff.rows[j]) {
        sb += t.coef * cb[t.col];
        sh += t.coef * ch[t.col];
      }
      yb[k][j] = sb;
      yh[k][j] = sh;
      xb[j] = net.has_relu(l) ? std::max(0.0, sb) : sb;
      xhv[j] = net.has_relu(l) ? std::max(0.0, sh) : sh;
    }
    for (int j = 0; j < w; ++j) {
      if (j < static_cast<int>(enc.y[k].size()) && enc.y[k][j] >= 0)
        a[enc.y[k][j]] = yb[k][j];
      if (enc.scheme == Scheme::Itne) {
        if (j < static_cast<int>(enc.dy[k].size()) && enc.dy[k][j] >= 0)
          a[enc.dy[k][j]] = yh[k][j] - yb[k][j];
        if (j < static_cast<int>(enc.dx[k].size()) && enc.dx[k][j] >= 0)
          a[enc.dx[k][j]] = xhv[j] - xb[j];
      } else {
        if (j < static_cast<int>(enc.yh[k].size()) && enc.yh[k][j] >= 0)
          a[enc.yh[k][j]] = yh[k][j];
        if (j < static_cast<int>(enc.xh[k].size()) && enc.xh[k][j] >= 0)
          a[enc.xh[k][j]] = xhv[j];
      }
      if (j < static_cast<int>(enc.x[k].size()) && enc.x[k][j] >= 0)
        a[enc.x[k][j]] = xb[j];
    }
    cb = std::move(xb);
    ch = std::move(xhv);
  }

  for (std::size_t b = 0; b < enc.binaries.size(); ++b) {
    const BinaryRef& r = enc.binary_refs[b];
    const int k = r.layer - p;
    const double yv = r.hat ? yh[k][r.index] : yb[k][r.index];
    a[enc.binaries[b]] = yv > 0.0 ? 1.0 : 0.0;
  }
  return a;
}

std::vector<NeuronRef> select_refinement(const Network& net, const RangeTable& ranges,
                                         Scheme scheme, const WindowSpec& win,
                                         int budget) {
  struct Cand {
    double score;
    int layer;
    int index;
  };
  std::vector<Cand> cands;
  for (int l = win.source_level + 1; l < win.target_layer; ++l) {
    if (!net.has_relu(l)) continue;
    const LayerRanges& lr = ranges.layers[l - 1];
    for (int j = 0; j < net.width(l); ++j) {
      const double ylo = lr.ylo[j], yhi = lr.yhi[j];
      double hlo = ylo, hhi = yhi;
      if (scheme == Scheme::Itne) {
        hlo += lr.dylo[j];
        hhi += lr.dyhi[j];
      }
      if (relu_phase(ylo, yhi) != ReluPhase::Unstable &&
          relu_phase(hlo, hhi) != ReluPhase::Unstable)
        continue;
      const double score = unstable_area(ylo, yhi) +
                           std::max(std::fabs(lr.dylo[j]), std::fabs(lr.dyhi[j]));
      cands.push_back({score, l, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
  });
  if (budget < 0) budget = 0;
  if (static_cast<int>(cands.size()) > budget) cands.resize(budget);
  std::vector<NeuronRef> out;
  out.reserve(cands.size());
  for (const Cand& c : cands) out.push_back({c.layer, c.index});
  return out;
}

}  // namespace twincert
