#include "bistab/fitkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "bistab/kernels.hpp"

namespace bistab {

double FitResult::sigma(std::size_t i) const {
  const auto k = static_cast<Eigen::Index>(i);
  if (k >= covariance.rows()) return 0.0;
  return std::sqrt(std::max(0.0, covariance(k, k)));
}

namespace {

// sigma^2 (J^T J)^+ over the free parameters, computed on column-scaled J so
// the rank threshold does not depend on parameter units.
void fill_covariance(FitResult& res, const MatX& jac, double cost, std::size_t n,
                     const std::vector<bool>& fixed) {
  const Eigen::Index m = jac.cols();
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!fixed[static_cast<std::size_t>(j)]) free.push_back(j);
  }
  res.covariance = MatX::Zero(m, m);
  const auto nf = static_cast<Eigen::Index>(free.size());
  if (nf == 0) return;

  MatX jf(jac.rows(), nf);
  for (Eigen::Index j = 0; j < nf; ++j) jf.col(j) = jac.col(free[static_cast<std::size_t>(j)]);
  const MatX a = jf.transpose() * jf;
  VecX scale(nf);
  for (Eigen::Index j = 0; j < nf; ++j) {
    scale(j) = a(j, j) > 0.0 ? 1.0 / std::sqrt(a(j, j)) : 0.0;
    if (a(j, j) <= 0.0) res.unidentifiable.push_back(static_cast<std::size_t>(free[static_cast<std::size_t>(j)]));
  }
  const MatX as = scale.asDiagonal() * a * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatX> eig(as);
  const VecX& ev = eig.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  const double cut = 1e-10 * top;
  MatX pinv = MatX::Zero(nf, nf);
  for (Eigen::Index k = 0; k < nf; ++k) {
    const VecX v = eig.eigenvectors().col(k);
    if (ev(k) > cut) {
      pinv += v * v.transpose() / ev(k);
    } else {
      for (Eigen::Index j = 0; j < nf; ++j) {
        if (std::abs(v(j)) > 0.3) res.unidentifiable.push_back(static_cast<std::size_t>(free[static_cast<std::size_t>(j)]));
      }
    }
  }
  const double dof = static_cast<double>(n) - static_cast<double>(nf);
  const double s2 = dof > 0.0 ? 2.0 * cost / dof : 0.0;
  const MatX cf = s2 * (scale.asDiagonal() * pinv * scale.asDiagonal());
  for (Eigen::Index i = 0; i < nf; ++i) {
    for (Eigen::Index j = 0; j < nf; ++j) {
      res.covariance(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]) =
          0.5 * (cf(i, j) + cf(j, i));
    }
  }
  std::sort(res.unidentifiable.begin(), res.unidentifiable.end());
  res.unidentifiable.erase(std::unique(res.unidentifiable.begin(), res.unidentifiable.end()),
                           res.unidentifiable.end());
}

}  // namespace

FitResult levenberg_marquardt(const ResidualModel& model, const VecX& y, const VecX& init,
                              const LMOptions& opts) {
  const Eigen::Index m = init.size();
  const auto n = static_cast<std::size_t>(y.size());
  if (m == 0) throw std::invalid_argument("levenberg_marquardt: no parameters");
  if (n < 2 * static_cast<std::size_t>(m)) {
    throw std::invalid_argument("levenberg_marquardt: need at least 2 data points per parameter");
  }
  if (!y.allFinite() || !init.allFinite()) {
    throw std::invalid_argument("levenberg_marquardt: data and initial parameters must be finite");
  }
  std::vector<bool> fixed = opts.fixed;
  if (fixed.empty()) fixed.assign(static_cast<std::size_t>(m), false);
  if (fixed.size() != static_cast<std::size_t>(m)) {
    throw std::invalid_argument("levenberg_marquardt: fixed mask has the wrong length");
  }

  auto mask = [&](MatX& j) {
    for (Eigen::Index k = 0; k < m; ++k) {
      if (fixed[static_cast<std::size_t>(k)]) j.col(k).setZero();
    }
  };

  FitResult res;
  VecX p = init;
  VecX f;
  MatX jac;
  model(p, f, &jac);
  if (f.size() != y.size() || jac.rows() != y.size() || jac.cols() != m) {
    throw std::invalid_argument("levenberg_marquardt: model output has the wrong shape");
  }
  if (!f.allFinite() || !jac.allFinite()) {
    throw DegenerateFitError("degenerate fit: model or Jacobian is not finite at the initial point");
  }
  mask(jac);
  if (jac.cwiseAbs().maxCoeff() == 0.0) {
    throw DegenerateFitError("degenerate fit: Jacobian vanishes at the initial point (no free parameter affects the model)");
  }

  VecX r = f - y;
  double cost = 0.5 * r.squaredNorm();
  res.cost_history.push_back(cost);
  double lambda = opts.lambda0;
  VecX g = jac.transpose() * r;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    MatX a = jac.transpose() * jac;
    const double dmax = a.diagonal().maxCoeff();
    VecX d = a.diagonal().cwiseMax(1e-12 * dmax);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (fixed[static_cast<std::size_t>(k)]) {
        a.row(k).setZero();
        a.col(k).setZero();
        d(k) = 1.0;
        a(k, k) = 1.0;
      }
    }

    bool accepted = false;
    double new_cost = cost;
    VecX pn, fn;
    while (lambda <= 1e20) {
      MatX lhs = a;
      lhs.diagonal() += lambda * d;
      const Eigen::LDLT<MatX> ldlt(lhs);
      VecX delta = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      for (Eigen::Index k = 0; k < m; ++k) {
        if (fixed[static_cast<std::size_t>(k)]) delta(k) = 0.0;
      }
      pn = p + delta;
      model(pn, fn, nullptr);
      if (fn.allFinite()) {
        new_cost = 0.5 * (fn - y).squaredNorm();
        if (new_cost <= cost) {
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction survives at machine precision: numerically stationary.
      res.converged = true;
      res.warnings.push_back("damping saturated; no further descent at machine precision");
      break;
    }
    lambda = std::max(lambda / 10.0, 1e-15);
    const double drop = cost - new_cost;
    p = pn;
    model(p, f, &jac);
    if (!jac.allFinite()) throw DegenerateFitError("degenerate fit: Jacobian became non-finite");
    mask(jac);
    r = f - y;
    cost = new_cost;
    res.cost_history.push_back(cost);
    g = jac.transpose() * r;
    if (drop <= opts.rel_cost_tol * std::max(cost + drop, std::numeric_limits<double>::min())) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.iterations = it;
  if (!res.converged) res.warnings.push_back("iteration limit reached");
  res.params = p;
  res.gradient_norm = g.lpNorm<Eigen::Infinity>();
  res.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(n));
  fill_covariance(res, jac, cost, n, fixed);
  return res;
}

FitResult levenberg_marquardt(const ParametricCurve& curve, const std::vector<double>& x,
                              const std::vector<double>& y, const VecX& init,
                              const LMOptions& opts) {
  if (x.size() != y.size()) throw std::invalid_argument("levenberg_marquardt: x and y differ in length");
  if (static_cast<std::size_t>(init.size()) != curve.nparams) {
    throw std::invalid_argument("levenberg_marquardt: initial parameter count does not match the curve");
  }
  const kernels::RowFn row = [&](std::size_t i, const VecX& p, double* grad) {
    return curve.eval(x[i], p, grad);
  };
  const ResidualModel model = [&](const VecX& p, VecX& f, MatX* jac) {
    if (opts.parallel) kernels::assemble_omp(row, x.size(), p, f, jac);
    else kernels::assemble_serial(row, x.size(), p, f, jac);
  };
  const VecX yv = Eigen::Map<const VecX>(y.data(), static_cast<Eigen::Index>(y.size()));
  return levenberg_marquardt(model, yv, init, opts);
}

// ---------------------------------------------------------------------------

double contour_sym(double v) {
  const double q = 1.0 + v * v;
  return 1.0 / (q * q);
}

double contour_anti(double u) {
  const double q = 1.0 + u * u;
  return u / (q * q);
}

namespace {

double contour_sym_d(double v) {
  const double q = 1.0 + v * v;
  return -4.0 * v / (q * q * q);
}

double contour_anti_d(double u) {
  const double q = 1.0 + u * u;
  return (1.0 - 3.0 * u * u) / (q * q * q);
}

}  // namespace

VecX CompositeContourModel::params() const {
  VecX p(count);
  p << a_anti, w_anti, a_sym, w_sym, center, hysteresis_h, offset;
  return p;
}

void CompositeContourModel::set_params(const VecX& p) {
  if (p.size() != count) throw std::invalid_argument("CompositeContourModel: expected 7 parameters");
  a_anti = p(a_anti_i);
  w_anti = p(w_anti_i);
  a_sym = p(a_sym_i);
  w_sym = p(w_sym_i);
  center = p(center_i);
  hysteresis_h = p(h_i);
  offset = p(offset_i);
}

void CompositeContourModel::validate() const {
  if (!(w_anti > 0.0) || !(w_sym > 0.0)) {
    throw std::invalid_argument("CompositeContourModel: widths must be positive");
  }
  if (!(hysteresis_h >= 0.0)) throw std::invalid_argument("CompositeContourModel: H must be >= 0");
  if (std::abs(branch_sign_up) != 1 || std::abs(branch_sign_down) != 1) {
    throw std::invalid_argument("CompositeContourModel: branch signs must be +1 or -1");
  }
  if (mode == CompositeMode::switching && !(step_width > 0.0)) {
    throw std::invalid_argument("CompositeContourModel: step_width must be positive");
  }
}

const char* CompositeContourModel::param_name(std::size_t i) {
  static const char* names[] = {"a_anti", "w_anti", "a_sym", "w_sym", "center", "hysteresis_h", "offset"};
  return i < count ? names[i] : "?";
}

double composite_eval(const CompositeContourModel& m, double bx, Branch b) {
  return composite_eval(m, bx, b, nullptr);
}

double composite_eval(const CompositeContourModel& m, double bx, Branch b, double* grad) {
  const double side = b == Branch::up ? 1.0 : -1.0;
  const double sb = b == Branch::up ? m.branch_sign_up : m.branch_sign_down;
  const double u = (bx - m.center) / m.w_anti;
  const double dd = contour_anti(u);
  double y = m.a_anti * dd + m.offset;

  if (m.mode == CompositeMode::fixed_sign) {
    const double v = (bx - m.center - 0.5 * side * m.hysteresis_h) / m.w_sym;
    const double l = contour_sym(v);
    y += sb * m.a_sym * l;
    if (grad) {
      const double da = m.a_anti * contour_anti_d(u);
      const double ds = sb * m.a_sym * contour_sym_d(v);
      grad[0] = dd;
      grad[1] = -da * u / m.w_anti;
      grad[2] = sb * l;
      grad[3] = -ds * v / m.w_sym;
      grad[4] = -da / m.w_anti - ds / m.w_sym;
      grad[5] = -0.5 * side * ds / m.w_sym;
      grad[6] = 1.0;
    }
    return y;
  }

  const double v = (bx - m.center) / m.w_sym;
  const double z = (bx - m.center - 0.5 * side * m.hysteresis_h) / m.step_width;
  const double l = contour_sym(v);
  const double th = std::tanh(z);
  y += sb * m.a_sym * l * th;
  if (grad) {
    const double da = m.a_anti * contour_anti_d(u);
    const double sech2 = 1.0 - th * th;
    const double k = sb * m.a_sym;
    grad[0] = dd;
    grad[1] = -da * u / m.w_anti;
    grad[2] = sb * l * th;
    grad[3] = -k * th * contour_sym_d(v) * v / m.w_sym;
    grad[4] = -da / m.w_anti - k * (contour_sym_d(v) * th / m.w_sym + l * sech2 / m.step_width);
    grad[5] = -0.5 * side * k * l * sech2 / m.step_width;
    grad[6] = 1.0;
  }
  return y;
}

namespace {

void check_demod(const DemodRecord& rec) {
  const std::size_t n = rec.bx.size();
  if (rec.sb.size() != n || rec.branch.size() != n || rec.t.size() != n) {
    throw std::invalid_argument("demod record columns differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(rec.bx[i]) || !std::isfinite(rec.sb[i])) {
      throw std::invalid_argument("demod record contains non-finite values");
    }
  }
}

ResidualModel composite_residual_model(const DemodRecord& rec, const CompositeContourModel& base,
                                       bool parallel) {
  return [&rec, base, parallel](const VecX& p, VecX& f, MatX* jac) {
    CompositeContourModel m = base;
    m.set_params(p);
    const kernels::RowFn row = [&](std::size_t i, const VecX&, double* grad) {
      return composite_eval(m, rec.bx[i], rec.branch[i], grad);
    };
    if (parallel) kernels::assemble_omp(row, rec.size(), p, f, jac);
    else kernels::assemble_serial(row, rec.size(), p, f, jac);
  };
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

void tidy(CompositeContourModel& m) {
  m.w_anti = std::abs(m.w_anti);
  m.w_sym = std::abs(m.w_sym);
  if (m.a_sym < 0.0) {
    m.a_sym = -m.a_sym;
    m.branch_sign_up = -m.branch_sign_up;
    m.branch_sign_down = -m.branch_sign_down;
  }
}

}  // namespace

CompositeFit fit_composite(const DemodRecord& rec, const CompositeContourModel& init,
                           const LMOptions& lm) {
  check_demod(rec);
  CompositeFit out;
  out.model = init;
  const VecX y = Eigen::Map<const VecX>(rec.sb.data(), static_cast<Eigen::Index>(rec.size()));
  out.fit = levenberg_marquardt(composite_residual_model(rec, init, lm.parallel), y, init.params(), lm);
  out.model.set_params(out.fit.params);
  tidy(out.model);
  out.fit.params = out.model.params();
  return out;
}

CompositeFit fit_record(const DemodRecord& rec, const FitRecordOptions& opts) {
  check_demod(rec);
  if (rec.size() < 2 * CompositeContourModel::count) {
    throw std::invalid_argument("fit_record: record too short");
  }
  const bool both = rec.has_branch(Branch::up) && rec.has_branch(Branch::down);
  const TransitionResult tr = extract_transition(rec);
  const bool bistable = both && tr.up && tr.down;

  CompositeContourModel m;
  m.offset = median(rec.sb);
  m.mode = bistable ? opts.mode : CompositeMode::fixed_sign;
  if (bistable) {
    m.center = 0.5 * (tr.bx_up() + tr.bx_down());
    m.hysteresis_h = std::max(0.0, tr.hysteresis());
    double step = opts.step_width;
    if (!(step > 0.0)) {
      const BranchTransition& steep = tr.up->max_slope > tr.down->max_slope ? *tr.up : *tr.down;
      step = std::abs(steep.level_change) / (2.0 * steep.max_slope);
    }
    m.step_width = std::max(step, 1e-6);
  } else {
    // Centre at the steepest point of each branch.
    double best = 0.0, pos_up = 0.0, pos_dn = 0.0;
    bool seen_up = false, seen_dn = false;
    for (int pass = 0; pass < 2; ++pass) {
      const Branch b = pass == 0 ? Branch::up : Branch::down;
      best = -1.0;
      std::size_t prev = rec.size();
      for (std::size_t i = 0; i < rec.size(); ++i) {
        if (rec.branch[i] != b) continue;
        if (prev < rec.size() && rec.bx[i] != rec.bx[prev]) {
          const double s = std::abs((rec.sb[i] - rec.sb[prev]) / (rec.bx[i] - rec.bx[prev]));
          if (s > best) {
            best = s;
            (pass == 0 ? pos_up : pos_dn) = 0.5 * (rec.bx[i] + rec.bx[prev]);
            (pass == 0 ? seen_up : seen_dn) = true;
          }
        }
        prev = i;
      }
    }
    if (seen_up && seen_dn) m.center = 0.5 * (pos_up + pos_dn);
    else m.center = seen_up ? pos_up : pos_dn;
    m.hysteresis_h = 0.0;
  }

  // Width grid plus linear least squares for the amplitudes and offset.
  const auto [lo_it, hi_it] = std::minmax_element(rec.bx.begin(), rec.bx.end());
  const double span = std::max(*hi_it - *lo_it, 1e-9);
  const int ngrid = 16;
  std::vector<double> widths(ngrid);
  for (int i = 0; i < ngrid; ++i) {
    widths[static_cast<std::size_t>(i)] = span / 200.0 * std::pow(100.0, i / double(ngrid - 1));
  }
  const std::vector<std::pair<int, int>> signs =
      m.mode == CompositeMode::switching ? std::vector<std::pair<int, int>>{{1, 1}}
                                         : std::vector<std::pair<int, int>>{{1, -1}, {1, 1}};
  const auto n = static_cast<Eigen::Index>(rec.size());
  const VecX y = Eigen::Map<const VecX>(rec.sb.data(), n);
  std::vector<std::pair<double, CompositeContourModel>> grid;
  for (const auto& [su, sd] : signs) {
    for (double wa : widths) {
      for (double ws : widths) {
        CompositeContourModel c = m;
        c.branch_sign_up = su;
        c.branch_sign_down = sd;
        c.w_anti = wa;
        c.w_sym = ws;
        MatX a(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
          double g[CompositeContourModel::count];
          composite_eval(c, rec.bx[static_cast<std::size_t>(i)], rec.branch[static_cast<std::size_t>(i)], g);
          a(i, 0) = g[CompositeContourModel::a_anti_i];
          a(i, 1) = g[CompositeContourModel::a_sym_i];
          a(i, 2) = 1.0;
        }
        const VecX coef = a.colPivHouseholderQr().solve(y);
        c.a_anti = coef(0);
        c.a_sym = coef(1);
        c.offset = coef(2);
        tidy(c);
        grid.emplace_back((a * coef - y).squaredNorm(), c);
      }
    }
  }
  std::sort(grid.begin(), grid.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

  // The symmetric and antisymmetric contours overlap, so the surface has
  // several basins. Start from a few well separated grid points.
  const std::size_t max_starts = 4;
  std::vector<CompositeContourModel> starts;
  for (const auto& [cost, c] : grid) {
    if (starts.size() >= max_starts) break;
    bool distinct = true;
    for (const auto& s0 : starts) {
      const bool near_a = std::abs(std::log(c.w_anti / s0.w_anti)) < std::log(1.8);
      const bool near_s = std::abs(std::log(c.w_sym / s0.w_sym)) < std::log(1.8);
      if (near_a && near_s && c.branch_sign_down == s0.branch_sign_down) distinct = false;
    }
    if (distinct) starts.push_back(c);
  }

  LMOptions lm = opts.lm;
  lm.fixed.assign(CompositeContourModel::count, false);
  if (!bistable) lm.fixed[CompositeContourModel::h_i] = true;
  std::optional<CompositeFit> best_fit;
  for (const auto& s0 : starts) {
    CompositeFit f = fit_composite(rec, s0, lm);
    const double c = f.fit.cost_history.empty() ? std::numeric_limits<double>::infinity()
                                                : f.fit.cost_history.back();
    if (!best_fit || c < best_fit->fit.cost_history.back()) best_fit = std::move(f);
  }
  CompositeFit out = std::move(*best_fit);
  out.single_branch = !both;
  if (!both) out.fit.warnings.push_back("single-branch record: hysteresis fixed at 0");
  else if (!bistable) out.fit.warnings.push_back("no transitions found: hysteresis fixed at 0");

  // Widths of contours whose amplitude is indistinguishable from zero carry no information.
  auto flag_weak = [&](std::size_t amp, std::size_t width) {
    const double a = out.fit.params(static_cast<Eigen::Index>(amp));
    if (std::abs(a) < 2.0 * out.fit.sigma(amp)) out.fit.unidentifiable.push_back(width);
  };
  flag_weak(CompositeContourModel::a_anti_i, CompositeContourModel::w_anti_i);
  flag_weak(CompositeContourModel::a_sym_i, CompositeContourModel::w_sym_i);
  auto& u = out.fit.unidentifiable;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return out;
}

// ---------------------------------------------------------------------------

double TransitionResult::dt() const {
  double s = 0.0;
  int k = 0;
  if (up) s += up->dt, ++k;
  if (down) s += down->dt, ++k;
  return k ? s / k : 0.0;
}

double TransitionResult::max_slope() const {
  return std::max(up ? up->max_slope : 0.0, down ? down->max_slope : 0.0);
}

namespace {

// Time at which y crosses `level` between samples a and b, walking from a.
std::optional<double> crossing_time(const std::vector<double>& t, const std::vector<double>& y,
                                    std::size_t a, std::size_t b, double level) {
  const int step = b >= a ? 1 : -1;
  for (std::size_t i = a; i != b; i = static_cast<std::size_t>(static_cast<long>(i) + step)) {
    const std::size_t j = static_cast<std::size_t>(static_cast<long>(i) + step);
    const double u = y[i] - level;
    const double v = y[j] - level;
    if (u == 0.0) return t[i];
    if ((u < 0.0) != (v < 0.0)) return t[i] + (t[j] - t[i]) * u / (u - v);
  }
  return std::nullopt;
}

struct BranchTrace {
  std::vector<double> t, x, y;
};

BranchTrace branch_trace(const DemodRecord& rec, Branch b) {
  BranchTrace tr;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec.branch[i] != b) continue;
    // Holds carry no slope information.
    if (!tr.x.empty() && rec.bx[i] == tr.x.back()) continue;
    tr.t.push_back(rec.t[i]);
    tr.x.push_back(rec.bx[i]);
    tr.y.push_back(rec.sb[i]);
  }
  return tr;
}

// Linear interpolation of a trace in bx; nullopt outside its range.
std::optional<double> interp_bx(const BranchTrace& tr, std::vector<std::size_t>& order, double x) {
  if (order.empty()) {
    order.resize(tr.x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return tr.x[l] < tr.x[r]; });
  }
  if (order.size() < 2 || x < tr.x[order.front()] || x > tr.x[order.back()]) return std::nullopt;
  const auto it = std::lower_bound(order.begin(), order.end(), x,
                                   [&](std::size_t i, double v) { return tr.x[i] < v; });
  if (it == order.begin()) return tr.y[*it];
  const std::size_t j = *it, i = *(it - 1);
  if (tr.x[j] == tr.x[i]) return tr.y[j];
  return tr.y[i] + (tr.y[j] - tr.y[i]) * (x - tr.x[i]) / (tr.x[j] - tr.x[i]);
}

std::vector<double> central_slope(const std::vector<double>& x, const std::vector<double>& y,
                                  std::size_t k) {
  std::vector<double> slope(x.size(), 0.0);
  for (std::size_t i = k; i + k < x.size(); ++i) {
    if (x[i + k] != x[i - k]) slope[i] = std::abs((y[i + k] - y[i - k]) / (x[i + k] - x[i - k]));
  }
  return slope;
}

double quantile90(const std::vector<double>& v, std::size_t k) {
  std::vector<double> s(v.begin() + static_cast<std::ptrdiff_t>(k), v.end() - static_cast<std::ptrdiff_t>(k));
  const auto q = s.begin() + static_cast<std::ptrdiff_t>(0.9 * static_cast<double>(s.size() - 1));
  std::nth_element(s.begin(), q, s.end());
  return *q;
}

// Step around `peak` in y: 10-90% duration and level change.
std::optional<BranchTransition> measure_step(const BranchTrace& tr, const std::vector<double>& y,
                                             const std::vector<double>& slope, std::size_t peak,
                                             std::size_t k, const TransitionOptions& o) {
  const double floor_slope = o.level_fraction * slope[peak];
  std::size_t i0 = peak, i1 = peak;
  while (i0 > k && slope[i0] >= floor_slope) --i0;
  while (i1 + k + 1 < y.size() && slope[i1] >= floor_slope) ++i1;
  const double l0 = y[i0];
  const double dl = y[i1] - l0;
  if (dl == 0.0) return std::nullopt;
  const auto t10 = crossing_time(tr.t, y, peak, i0, l0 + 0.1 * dl);
  const auto t90 = crossing_time(tr.t, y, peak, i1, l0 + 0.9 * dl);
  if (!t10 || !t90) return std::nullopt;
  BranchTransition out;
  out.bx = tr.x[peak];
  out.dt = std::abs(*t90 - *t10);
  out.max_slope = slope[peak];
  out.level_change = dl;
  return out;
}

// Steepest point of the raw branch signal.
std::optional<BranchTransition> raw_transition(const BranchTrace& tr, std::size_t k,
                                               const TransitionOptions& o) {
  const auto slope = central_slope(tr.x, tr.y, k);
  const std::size_t peak =
      static_cast<std::size_t>(std::max_element(slope.begin(), slope.end()) - slope.begin());
  if (!(slope[peak] > o.slope_factor * quantile90(slope, k))) return std::nullopt;
  return measure_step(tr, tr.y, slope, peak, k, o);
}

// With both branches present, the opposite branch is subtracted first: the two
// coincide outside the hysteresis window, so any smooth background cancels and
// the residual holds two steps, one per branch flip. The branch owns the step
// where its own signal is steeper.
std::optional<BranchTransition> differential_transition(const BranchTrace& tr,
                                                        const BranchTrace& other, std::size_t k,
                                                        const TransitionOptions& o) {
  std::vector<std::size_t> order;
  BranchTrace r;
  std::vector<double> raw_y;
  for (std::size_t i = 0; i < tr.x.size(); ++i) {
    const auto v = interp_bx(other, order, tr.x[i]);
    if (!v) continue;
    raw_y.push_back(tr.y[i]);
    r.t.push_back(tr.t[i]);
    r.x.push_back(tr.x[i]);
    r.y.push_back(tr.y[i] - *v);
  }
  if (r.x.size() < 4 * k + 4) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(tr.y.begin(), tr.y.end());
  const double span = *hi - *lo;
  const auto slope = central_slope(r.x, r.y, k);
  const double q90 = quantile90(slope, k);
  const auto raw = central_slope(r.x, raw_y, k);

  // Two strongest peaks at least a few step widths apart.
  std::vector<std::size_t> idx(slope.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return slope[a] > slope[b]; });
  std::vector<std::pair<std::size_t, BranchTransition>> steps;
  for (std::size_t i : idx) {
    if (steps.size() == 2 || !(slope[i] > o.slope_factor * q90)) break;
    bool near = false;
    for (const auto& s : steps) {
      const double w = std::abs(s.second.level_change) / s.second.max_slope;
      if (std::abs(r.x[i] - r.x[s.first]) < 4.0 * w) near = true;
    }
    if (near) continue;
    const auto m = measure_step(r, r.y, slope, i, k, o);
    if (!m || std::abs(m->level_change) < 1e-3 * span) continue;
    steps.emplace_back(i, *m);
  }
  if (steps.empty()) return std::nullopt;
  const auto own = std::max_element(steps.begin(), steps.end(), [&](const auto& a, const auto& b) {
    return raw[a.first] < raw[b.first];
  });
  // A lone step belongs to this branch only if its raw signal jumps there too.
  if (steps.size() == 1 && raw[own->first] < 0.5 * own->second.max_slope) return std::nullopt;
  return own->second;
}

std::optional<BranchTransition> branch_transition(const DemodRecord& rec, Branch b,
                                                  const TransitionOptions& o) {
  const BranchTrace tr = branch_trace(rec, b);
  std::size_t k = std::max<std::size_t>(1, o.smooth);
  if (tr.t.size() > 1 && o.smooth_seconds > 0.0) {
    const double dt = (tr.t.back() - tr.t.front()) / static_cast<double>(tr.t.size() - 1);
    if (dt > 0.0) k = std::max(k, static_cast<std::size_t>(std::lround(o.smooth_seconds / dt)));
  }
  if (tr.x.size() < 4 * k + 4) return std::nullopt;
  const BranchTrace other = branch_trace(rec, b == Branch::up ? Branch::down : Branch::up);
  if (other.x.size() < 4 * k + 4) return raw_transition(tr, k, o);
  return differential_transition(tr, other, k, o);
}

}  // namespace

TransitionResult extract_transition(const DemodRecord& rec, const TransitionOptions& opts) {
  check_demod(rec);
  TransitionResult r;
  r.up = branch_transition(rec, Branch::up, opts);
  r.down = branch_transition(rec, Branch::down, opts);
  r.monostable = !r.up && !r.down;
  return r;
}

// ---------------------------------------------------------------------------

std::size_t trend_param_count(TrendKind kind, int degree) {
  switch (kind) {
    case TrendKind::linear:
    case TrendKind::hyperbola:
      return 2;
    case TrendKind::arctan:
    case TrendKind::lorentzian:
      return 3;
    case TrendKind::polynomial:
      if (degree < 0 || degree > 3) throw std::invalid_argument("polynomial degree must be 0..3");
      return static_cast<std::size_t>(degree) + 1;
  }
  return 0;
}

std::size_t TrendModel::nparams() const { return trend_param_count(kind, degree); }

double TrendModel::eval(double x) const { return trend_eval(kind, params, x); }

double trend_eval(TrendKind kind, const VecX& p, double x, double* grad) {
  switch (kind) {
    case TrendKind::linear:
      if (grad) grad[0] = 1.0, grad[1] = x;
      return p(0) + p(1) * x;
    case TrendKind::hyperbola:
      if (grad) grad[0] = 1.0, grad[1] = 1.0 / x;
      return p(0) + p(1) / x;
    case TrendKind::arctan: {
      const double z = x / p(1);
      const double at = std::atan(z);
      if (grad) {
        grad[0] = at;
        grad[1] = -p(0) * z / (p(1) * (1.0 + z * z));
        grad[2] = 1.0;
      }
      return p(0) * at + p(2);
    }
    case TrendKind::lorentzian: {
      const double z = x / p(1);
      const double q = 1.0 + z * z;
      if (grad) {
        grad[0] = 1.0 / q;
        grad[1] = 2.0 * p(0) * z * z / (p(1) * q * q);
        grad[2] = 1.0;
      }
      return p(0) / q + p(2);
    }
    case TrendKind::polynomial: {
      double y = 0.0, xp = 1.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (grad) grad[k] = xp;
        y += p(k) * xp;
        xp *= x;
      }
      return y;
    }
  }
  return 0.0;
}

const char* trend_name(TrendKind kind) {
  switch (kind) {
    case TrendKind::linear: return "linear";
    case TrendKind::hyperbola: return "hyperbola";
    case TrendKind::arctan: return "arctan";
    case TrendKind::lorentzian: return "lorentzian";
    case TrendKind::polynomial: return "polynomial";
  }
  return "?";
}

TrendKind trend_kind_from_string(const std::string& s) {
  for (TrendKind k : {TrendKind::linear, TrendKind::hyperbola, TrendKind::arctan,
                      TrendKind::lorentzian, TrendKind::polynomial}) {
    if (s == trend_name(k)) return k;
  }
  throw std::invalid_argument("unknown trend kind '" + s + "'");
}

namespace {

TrendFit closed_form_trend(const std::vector<double>& x, const std::vector<double>& y,
                           TrendKind kind, int degree) {
  const std::size_t m = trend_param_count(kind, degree);
  const auto n = static_cast<Eigen::Index>(x.size());
  MatX a(n, static_cast<Eigen::Index>(m));
  VecX p0 = VecX::Zero(static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> g(m);
    trend_eval(kind, p0, x[static_cast<std::size_t>(i)], g.data());
    for (std::size_t j = 0; j < m; ++j) a(i, static_cast<Eigen::Index>(j)) = g[j];
  }
  const VecX yv = Eigen::Map<const VecX>(y.data(), n);
  const Eigen::ColPivHouseholderQR<MatX> qr(a);
  if (qr.rank() < static_cast<Eigen::Index>(m)) {
    throw std::invalid_argument(std::string("fit_trend: ") + trend_name(kind) +
                                " design matrix is rank deficient (underdetermined)");
  }
  TrendFit out;
  out.model.kind = kind;
  out.model.degree = degree;
  out.model.params = qr.solve(yv);
  const VecX r = a * out.model.params - yv;
  const double cost = 0.5 * r.squaredNorm();
  FitResult& f = out.fit;
  f.params = out.model.params;
  f.iterations = 1;
  f.converged = true;
  f.cost_history = {cost};
  f.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(n));
  f.gradient_norm = (a.transpose() * r).lpNorm<Eigen::Infinity>();
  const double dof = static_cast<double>(n) - static_cast<double>(m);
  const double s2 = dof > 0.0 ? 2.0 * cost / dof : 0.0;
  const MatX inv = (a.transpose() * a).inverse();
  f.covariance = s2 * 0.5 * (inv + inv.transpose());
  return out;
}

TrendFit nonlinear_trend(const std::vector<double>& x, const std::vector<double>& y,
                         TrendKind kind) {
  // Grid over the nonlinear scale parameter, linear solve for the other two.
  double xmax = 0.0, xmin = std::numeric_limits<double>::infinity();
  for (double v : x) {
    if (v != 0.0) xmin = std::min(xmin, std::abs(v));
    xmax = std::max(xmax, std::abs(v));
  }
  if (!(xmax > 0.0)) throw std::invalid_argument("fit_trend: x values are all zero");
  if (!std::isfinite(xmin)) xmin = xmax;
  const auto n = static_cast<Eigen::Index>(x.size());
  const VecX yv = Eigen::Map<const VecX>(y.data(), n);
  double best_cost = std::numeric_limits<double>::infinity();
  VecX best(3);
  const int ngrid = 60;
  const double lo = 0.1 * xmin, hi = 30.0 * xmax;
  for (int i = 0; i < ngrid; ++i) {
    const double s = lo * std::pow(hi / lo, i / double(ngrid - 1));
    MatX a(n, 2);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double xi = x[static_cast<std::size_t>(k)];
      a(k, 0) = kind == TrendKind::arctan ? std::atan(xi / s) : 1.0 / (1.0 + (xi / s) * (xi / s));
      a(k, 1) = 1.0;
    }
    const VecX c = a.colPivHouseholderQr().solve(yv);
    const double cost = (a * c - yv).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best << c(0), s, c(1);
    }
  }
  ParametricCurve curve{3, [kind](double xi, const VecX& p, double* g) { return trend_eval(kind, p, xi, g); }};
  TrendFit out;
  out.model.kind = kind;
  out.fit = levenberg_marquardt(curve, x, y, best);
  out.model.params = out.fit.params;
  out.model.params(1) = std::abs(out.model.params(1));
  out.fit.params = out.model.params;
  return out;
}

}  // namespace

TrendFit fit_trend(const std::vector<double>& x, const std::vector<double>& y, TrendKind kind,
                   int degree) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_trend: x and y differ in length");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw std::invalid_argument("fit_trend: non-finite point");
    }
  }
  const std::size_t m = trend_param_count(kind, degree);
  const bool linear = kind == TrendKind::linear || kind == TrendKind::hyperbola ||
                      kind == TrendKind::polynomial;
  const std::size_t need = linear ? m : 2 * m;
  if (x.size() < need) {
    std::ostringstream msg;
    msg << "fit_trend: " << trend_name(kind) << " needs at least " << need << " points, got "
        << x.size() << " (underdetermined)";
    throw std::invalid_argument(msg.str());
  }
  if (kind == TrendKind::hyperbola) {
    for (double v : x) {
      if (v == 0.0) throw std::invalid_argument("fit_trend: hyperbola undefined at x = 0");
    }
  }
  TrendFit out = linear ? closed_form_trend(x, y, kind, kind == TrendKind::linear ? 1 : degree)
                        : nonlinear_trend(x, y, kind);
  if (kind == TrendKind::linear) out.model.degree = 1;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  out.range = *hi - *lo;
  return out;
}

}  // namespace bistab
