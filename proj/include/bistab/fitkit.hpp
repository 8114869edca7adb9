#pragma once

// Levenberg-Marquardt least squares, the composite contour model, transition
// extraction and trend fits.

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bistab/instrument.hpp"

namespace bistab {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

class DegenerateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model values at every data point, with an optional Jacobian (n x m).
using ResidualModel = std::function<void(const VecX& p, VecX& f, MatX* jac)>;

/// Pointwise curve y = f(x; p). `grad` (size nparams) may be null.
struct ParametricCurve {
  std::size_t nparams = 0;
  std::function<double(double x, const VecX& p, double* grad)> eval;
};

struct LMOptions {
  double lambda0 = 1e-3;
  double rel_cost_tol = 1e-10;
  double grad_tol = 1e-12;
  int max_iter = 200;
  /// Parameters held at their initial value; empty means all free.
  std::vector<bool> fixed;
  /// Assemble curve residuals and Jacobians with the OpenMP kernel.
  bool parallel = false;
};

struct FitResult {
  VecX params;
  MatX covariance;
  double residual_rms = 0.0;
  double gradient_norm = 0.0;  // inf-norm of J^T r at the returned point
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;  // cost after each accepted step, starting with the initial cost
  std::vector<std::size_t> unidentifiable;
  std::vector<std::string> warnings;

  double sigma(std::size_t i) const;
};

FitResult levenberg_marquardt(const ResidualModel& model, const VecX& y, const VecX& init,
                              const LMOptions& opts = {});

FitResult levenberg_marquardt(const ParametricCurve& curve, const std::vector<double>& x,
                              const std::vector<double>& y, const VecX& init,
                              const LMOptions& opts = {});

// ---------------------------------------------------------------------------
// Composite contour

/// L(v) = 1/(1+v^2)^2 and D(u) = u/(1+u^2)^2.
double contour_sym(double v);
double contour_anti(double u);

enum class CompositeMode {
  /// Fixed-sign symmetric contour per branch, shifted by -+H/2.
  fixed_sign,
  /// Centred symmetric contour whose sign switches at center +- H/2 on the
  /// up/down branch (tanh of width step_width).
  switching
};

struct CompositeContourModel {
  enum Index { a_anti_i, w_anti_i, a_sym_i, w_sym_i, center_i, h_i, offset_i, count };

  double a_anti = 0.0;
  double w_anti = 1.0;
  double a_sym = 0.0;
  double w_sym = 1.0;
  double center = 0.0;
  double hysteresis_h = 0.0;
  double offset = 0.0;
  int branch_sign_up = 1;
  int branch_sign_down = -1;
  CompositeMode mode = CompositeMode::fixed_sign;
  double step_width = 0.05;  // nT, switching mode only

  VecX params() const;
  void set_params(const VecX& p);
  void validate() const;
  static const char* param_name(std::size_t i);
};

double composite_eval(const CompositeContourModel& m, double bx, Branch b);
/// Value and analytic gradient with respect to the 7 free parameters.
double composite_eval(const CompositeContourModel& m, double bx, Branch b, double* grad);

struct CompositeFit {
  CompositeContourModel model;
  FitResult fit;
  bool single_branch = false;
};

struct FitRecordOptions {
  CompositeMode mode = CompositeMode::switching;
  /// Switching width; <= 0 estimates it from the steepest transition.
  double step_width = 0.0;
  LMOptions lm;
};

/// Joint fit of both branches (shared parameters, per-branch signs), with
/// starting values derived from the data.
CompositeFit fit_record(const DemodRecord& rec, const FitRecordOptions& opts = {});

/// Fit starting from a given model (no data-derived initialization).
CompositeFit fit_composite(const DemodRecord& rec, const CompositeContourModel& init,
                           const LMOptions& lm = {});

// ---------------------------------------------------------------------------
// Transitions

struct TransitionOptions {
  double slope_factor = 5.0;  // peak slope must exceed this multiple of the 90th-percentile slope
  double level_fraction = 0.02;
  std::size_t smooth = 2;  // half-width of the central difference, samples
  double smooth_seconds = 0.1;  // same in time; the larger of the two is used
};

struct BranchTransition {
  double bx = 0.0;
  double dt = 0.0;          // 10-90% duration, s
  double max_slope = 0.0;   // |d sb / d bx| at the transition
  double level_change = 0.0;
};

struct TransitionResult {
  bool monostable = true;
  std::optional<BranchTransition> up;
  std::optional<BranchTransition> down;

  double bx_up() const { return up ? up->bx : 0.0; }
  double bx_down() const { return down ? down->bx : 0.0; }
  double hysteresis() const { return (up && down) ? up->bx - down->bx : 0.0; }
  /// Mean 10-90% duration over the branches that have a transition.
  double dt() const;
  double max_slope() const;
};

TransitionResult extract_transition(const DemodRecord& rec, const TransitionOptions& opts = {});

// ---------------------------------------------------------------------------
// Trends

enum class TrendKind { linear, hyperbola, arctan, lorentzian, polynomial };

struct TrendModel {
  TrendKind kind = TrendKind::linear;
  int degree = 1;  // polynomial only, 0..3
  VecX params;

  std::size_t nparams() const;
  double eval(double x) const;
};

std::size_t trend_param_count(TrendKind kind, int degree = 1);
double trend_eval(TrendKind kind, const VecX& p, double x, double* grad = nullptr);
const char* trend_name(TrendKind kind);
TrendKind trend_kind_from_string(const std::string& s);

struct TrendFit {
  TrendModel model;
  FitResult fit;
  double range = 0.0;  // max(y) - min(y)
};

/// linear: a + b x; hyperbola: a + b/x; arctan: a atan(x/c) + d;
/// lorentzian: A/(1+(x/w)^2) + d; polynomial: sum c_k x^k, k <= degree.
/// Linear-in-parameter kinds are solved in closed form.
TrendFit fit_trend(const std::vector<double>& x, const std::vector<double>& y, TrendKind kind,
                   int degree = 1);

}  // namespace bistab
