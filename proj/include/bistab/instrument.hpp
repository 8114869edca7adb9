#pragma once

// Measurement chain: ramp + modulation drive, photodetector signals, noise and
// drift, digital lock-in and zero-phase low-pass filtering.

#include <cstdint>
#include <vector>

#include "bistab/dynamics.hpp"

namespace bistab {

struct ScanConfig {
  double mod_amplitude = 2.5;  // nT
  double mod_freq = 5.0;       // Hz
  double sample_rate = 1000.0; // Hz
  SweepProtocol ramp;
  double noise_rms = 0.0;   // signal units, white, both channels
  double drift_rate = 0.0;  // nT/s along x
  std::uint64_t seed = 1;

  void validate() const;
};

/// Everything on the physics side of a record.
struct Physics {
  SpinSystem system;
  SignalMix mix;
  SimMode mode = SimMode::latch;
};

struct ScanRecord {
  std::vector<double> t;
  std::vector<double> bx_ramp;
  std::vector<double> st_raw;
  std::vector<double> sb_raw;
  ScanConfig config;
  Physics physics;
  /// Latch flips seen during synthesis (ground truth, not serialized).
  std::vector<FlipEvent> flips;

  std::size_t size() const { return t.size(); }
};

enum class Branch : int { down = -1, up = 1 };

struct DemodRecord {
  std::vector<double> t;
  std::vector<double> bx;
  std::vector<double> st;
  std::vector<double> sb;
  std::vector<Branch> branch;

  std::size_t size() const { return bx.size(); }
  bool has_branch(Branch b) const;
};

/// Steady-state signals at a fixed field with the latch held at `sign`.
SignalPair steady_signals(const Physics& ph, const FieldVector& b, int sign = -1);

/// B_x(t) = ramp(t) + drift t + A sin(2 pi f t); states evolve through the
/// coupled dynamics, signals are mixed, then seeded Gaussian noise is added.
ScanRecord synthesize_record(const ScanConfig& cfg, const Physics& ph);

/// Ramp direction per sample, inferred from bx_ramp (holds keep the previous label).
std::vector<Branch> branch_labels(const std::vector<double>& bx_ramp);

/// Zero-phase low-pass: two cascaded one-pole sections run forward then
/// backward (critically damped 2nd order each way), -3 dB at `cutoff`.
std::vector<double> lowpass_filter(const std::vector<double>& x, double cutoff, double sample_rate);

/// Magnitude response of lowpass_filter at frequency f.
double lowpass_gain(double f, double cutoff, double sample_rate);

struct DemodOptions {
  /// Keep every n-th sample; 0 picks about 20 output samples per cutoff period.
  std::size_t decimate = 0;
  /// One-period moving average of the product before low-pass filtering.
  bool period_average = true;
  /// Seconds dropped at each record end (filter start-up); < 0 picks 2/cutoff.
  double trim_seconds = -1.0;
};

/// Multiplies sb_raw by sin(2 pi f t + phase) and low-passes. An in-phase
/// input A sin(2 pi f t) yields A/2, so a small modulation of amplitude a
/// gives (a/2) dS_B/dB_x. S_T is only low-passed.
DemodRecord lockin_demodulate(const ScanRecord& rec, double phase_deg, double lpf_cutoff,
                              const DemodOptions& opts = {});

/// Reference phase (degrees, in (-90, 90]) that maximizes the in-phase output energy.
double calibrate_phase(const ScanRecord& rec, double lpf_cutoff);

}  // namespace bistab
