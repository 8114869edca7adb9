#pragma once

// Coupled time evolution of orientation and alignment, the hysteresis latch,
// and field-sweep protocols.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bistab/spin_core.hpp"

namespace bistab {

/// Effective-field coupling between the orientation and alignment ensembles.
struct CouplingParams {
  double kappa = 0.0;        // nT per unit orientation moment
  double my0 = 0.0;          // flip threshold on M_y, dimensionless
  double tau_flip = 0.0;     // s; <= 0 selects the default derived from the frozen field
  double back_action = 0.0;  // alignment-norm drag on orientation precession
  double serf_field = 0.0;   // nT; crossover of the collective factor, <= 0 disables it

  void validate() const;
};

/// Collective factor 1 / (1 + |B_perp|^2 / serf_field^2); 1 when disabled.
double collective_factor(const CouplingParams& c, double b_perp_nt);

enum class SimMode { latch, ode };

struct LatchState {
  int sign = -1;  // sign of the frozen alignment coherence
  bool flipping = false;
  double flip_progress = 1.0;

  /// Raised-cosine interpolation from the previous sign to `sign`.
  double effective_sign() const;
};

/// Both spin ensembles plus their coupling. The orientation pump axis is
/// +-z (sign of the ellipticity); the alignment pump is x-polarized.
struct SpinSystem {
  EnsembleParams orientation;
  EnsembleParams alignment{1.27, 64.0, 0.0, 1.0, Vec3::UnitX()};
  CouplingParams coupling;

  void validate() const;
};

struct CoupledState {
  double t = 0.0;
  OrientationMoment orientation;
  AlignmentMultipole alignment;
  /// Orientation driven by the slow field only; feeds the latch threshold test.
  OrientationMoment detector;
  LatchState latch;
};

/// Field applied at one instant. `slow` excludes fast modulation; it is the
/// field the latch threshold responds to.
struct DriveField {
  FieldVector applied;
  FieldVector slow;
};

using DriveFunction = std::function<DriveField(double t)>;

class StepSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest RK4 step allowed for a given peak field magnitude:
/// min(0.1 / Gamma, 0.05 / (gamma |B|)) over both ensembles.
double max_stable_step(const SpinSystem& sys, double peak_field_nt);

/// Number of equal sub-steps that keeps dt/n under max_stable_step.
std::size_t substeps_for(const SpinSystem& sys, double dt, double peak_field_nt);

/// Threshold on M_y after static-field corrections (collective factor and
/// transverse susceptibility of the orientation).
double effective_threshold(const SpinSystem& sys, const FieldVector& slow);

/// Magnitude of the frozen y-field the latch applies to the alignment, nT.
double frozen_field(const SpinSystem& sys, const FieldVector& slow);

/// Flip duration parameter actually used (explicit tau_flip or the default
/// 2 / (gamma B_frozen f), f = 10-90% fraction of a raised cosine).
double flip_time_constant(const SpinSystem& sys, const FieldVector& slow);

/// 10-90% fraction of a raised-cosine ramp, 1 - 2 acos(0.8) / pi.
double raised_cosine_10_90_fraction();

/// Field seen by the alignment for a given state and drive.
FieldVector alignment_field(const CoupledState& s, const SpinSystem& sys, const DriveField& d,
                            SimMode mode);

/// Steady state of all moments at a fixed drive, with the latch at `sign`.
CoupledState settle_state(const SpinSystem& sys, const DriveField& d, int sign, SimMode mode);

/// One RK4 step of length dt under a time-dependent drive, followed by the
/// latch update (latch mode only). Throws StepSizeError when dt exceeds the
/// stability bound.
CoupledState step_coupled(const CoupledState& s, const DriveFunction& drive,
                          const SpinSystem& sys, SimMode mode, double dt);

/// Drive at the three RK4 stage times t, t + dt/2, t + dt.
struct StageDrives {
  DriveField start;
  DriveField mid;
  DriveField end;
};

struct StepOutcome {
  CoupledState state;
  bool flipped = false;
  double flip_fraction = 0.0;  // threshold crossing position within the step
};

/// Stage-level form of step_coupled; reports latch flips.
StepOutcome advance_coupled(const CoupledState& s, const StageDrives& d, const SpinSystem& sys,
                            SimMode mode, double dt);

/// Constant-field convenience overload.
CoupledState step_coupled(const CoupledState& s, const FieldVector& applied,
                          const SpinSystem& sys, SimMode mode, double dt);

/// First-order inversion of the threshold condition: B_x0 = Gamma my0 / (gamma m0).
/// Throws std::domain_error when my0 > m0 (threshold unreachable).
double predict_flip_field(const EnsembleParams& orientation, const CouplingParams& c);

/// Same, including the collective factor for static transverse fields.
double predict_flip_field(const EnsembleParams& orientation, const CouplingParams& c,
                          double b_perp_nt);

/// Effective field that reverses the alignment in `dt_transition` seconds:
/// 1 / (dt * gamma/2pi), nT.
double effective_field_from_transient(double dt_transition, const EnsembleParams& p);

enum class SweepPattern { up, down, triangle };

struct SweepProtocol {
  double bx_start = -30.0;  // nT
  double bx_end = 30.0;     // nT
  double rate = 0.25;       // nT/s
  SweepPattern pattern = SweepPattern::triangle;
  bool hold_on_zero = false;
  double hold_dwell = 300.0;  // s, used when hold_on_zero
  double static_by = 0.0;
  double static_bz = 0.0;
  double ellipticity_deg = 0.0;

  void validate() const;
};

/// Piecewise-linear ramp built from a protocol. Segment durations are rounded
/// to whole sample steps, so samples taken at index k fall exactly on
/// segment-relative fractions k/N and mirrored segments give exactly negated
/// field values.
class RampSchedule {
 public:
  struct Segment {
    double t0;
    std::size_t samples;  // steps in this segment
    double b0;
    double b1;
  };

  RampSchedule(const SweepProtocol& proto, double sample_dt);

  std::size_t total_steps() const { return total_steps_; }
  double sample_dt() const { return dt_; }
  double duration() const { return static_cast<double>(total_steps_) * dt_; }

  /// Ramp field at sample index k (0..total_steps).
  double bx_at_index(std::size_t k) const;
  /// Ramp field at arbitrary time (linear within segments).
  double bx_at(double t) const;
  /// +1 rising, -1 falling, 0 holding, for the step starting at sample k.
  int direction_at_index(std::size_t k) const;
  double peak_abs_bx() const;

  const std::vector<Segment>& segments() const { return segments_; }

 private:
  std::size_t segment_of(std::size_t k) const;

  std::vector<Segment> segments_;
  std::size_t total_steps_ = 0;
  double dt_ = 0.0;
};

struct TrajectorySample {
  double t;
  FieldVector applied;
  FieldVector alignment_field;
  OrientationMoment orientation;
  AlignmentMultipole alignment;
  LatchState latch;
};

struct FlipEvent {
  double t;
  double bx;      // ramp field at the threshold crossing (interpolated)
  int new_sign;
  int direction;  // ramp direction at the crossing
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::vector<FlipEvent> flips;
  double sample_dt = 0.0;
};

struct SweepOptions {
  double sample_dt = 0.01;  // s between stored samples
  int initial_sign = 0;     // 0: derived from the starting field
  bool store_samples = true;
};

/// Integrates a sweep protocol. The applied field is (ramp, static_by, static_bz).
Trajectory run_sweep(const SweepProtocol& proto, const SpinSystem& sys, SimMode mode,
                     const SweepOptions& opts = {});

/// Ramp fields at which the latch flipped, split by ramp direction.
struct FlipFields {
  std::optional<double> up;    // first flip on a rising ramp
  std::optional<double> down;  // first flip on a falling ramp
  double hysteresis() const { return (up && down) ? *up - *down : 0.0; }
};
FlipFields flip_fields(const Trajectory& tr);

}  // namespace bistab
