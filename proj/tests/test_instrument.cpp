#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bistab/instrument.hpp"
#include "bistab/presets.hpp"

using namespace bistab;

namespace {

// Raw record holding a pure tone on S_B.
ScanRecord tone(double amp, double phase_deg, double seconds = 60.0) {
  ScanRecord r;
  r.config.mod_freq = 5.0;
  r.config.sample_rate = 500.0;
  const auto n = static_cast<std::size_t>(seconds * r.config.sample_rate);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / r.config.sample_rate;
    r.t.push_back(t);
    r.bx_ramp.push_back(-10.0 + 20.0 * t / seconds);
    r.st_raw.push_back(1.0);
    r.sb_raw.push_back(amp * std::sin(2 * kPi * 5.0 * t + phase_deg * kPi / 180.0));
  }
  return r;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("in-phase tone of amplitude A demodulates to A/2") {
  const auto d = lockin_demodulate(tone(0.8, 0.0), 0.0, 1.0);
  REQUIRE(d.size() > 10);
  for (double v : d.sb) CHECK(v == doctest::Approx(0.4).epsilon(1e-3));
  for (double v : d.st) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("quadrature tone demodulates to zero") {
  const auto d = lockin_demodulate(tone(0.8, 90.0), 0.0, 1.0);
  CHECK(std::abs(mean(d.sb)) < 1e-3);
  const auto e = lockin_demodulate(tone(0.8, 90.0), 90.0, 1.0);
  CHECK(mean(e.sb) == doctest::Approx(0.4).epsilon(1e-3));
}

TEST_CASE("phase calibration finds the tone phase") {
  CHECK(calibrate_phase(tone(1.0, 30.0), 1.0) == doctest::Approx(30.0).epsilon(0.01));
  CHECK(calibrate_phase(tone(1.0, -50.0), 1.0) == doctest::Approx(-50.0).epsilon(0.01));
}

TEST_CASE("low-pass gain at the cutoff is 1/sqrt 2") {
  const double fs = 1000.0, fc = 2.0;
  CHECK(lowpass_gain(fc, fc, fs) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
  CHECK(lowpass_gain(0.0, fc, fs) == doctest::Approx(1.0));
  CHECK(lowpass_gain(10 * fc, fc, fs) < 0.02);
  // measured on a steady sine
  std::vector<double> x(20000);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(2 * kPi * fc * static_cast<double>(k) / fs);
  const auto y = lowpass_filter(x, fc, fs);
  double peak = 0.0;
  for (std::size_t k = 5000; k < 15000; ++k) peak = std::max(peak, std::abs(y[k]));
  CHECK(peak == doctest::Approx(lowpass_gain(fc, fc, fs)).epsilon(2e-3));
}

TEST_CASE("zero-phase filter has no lag") {
  const double fs = 200.0;
  std::vector<double> x(4000);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = static_cast<double>(k) / fs - 10.0;
    x[k] = std::exp(-t * t);
  }
  const auto y = lowpass_filter(x, 1.0, fs);
  const auto peak = std::max_element(y.begin(), y.end()) - y.begin();
  CHECK(peak == 2000);
}

TEST_CASE("filter rejects invalid cutoffs") {
  std::vector<double> x(100, 1.0);
  CHECK_THROWS_AS(lowpass_filter(x, 0.0, 100.0), std::invalid_argument);
  CHECK_THROWS_AS(lowpass_filter(x, 60.0, 100.0), std::invalid_argument);
  CHECK_THROWS_AS(lockin_demodulate(tone(1.0, 0.0), 0.0, 4.0), std::invalid_argument);
}

TEST_CASE("branch labels follow the ramp direction") {
  const std::vector<double> bx = {0, 1, 2, 3, 3, 2, 1, 1, 0};
  const auto b = branch_labels(bx);
  REQUIRE(b.size() == bx.size());
  CHECK(b[1] == Branch::up);
  CHECK(b[3] == Branch::up);  // hold keeps the label
  CHECK(b[4] == Branch::down);  // labelled by the step leaving the sample
  CHECK(b[7] == Branch::down);
}

TEST_CASE("synthesis is seeded and deterministic") {
  auto sc = preset_scan(0.3);
  sc.ramp.rate = 1.0;
  sc.noise_rms = 0.01;
  const auto ph = preset_physics(0.3);
  const auto a = synthesize_record(sc, ph);
  const auto b = synthesize_record(sc, ph);
  CHECK(a.sb_raw == b.sb_raw);
  sc.seed = 2;
  const auto c = synthesize_record(sc, ph);
  CHECK(a.sb_raw != c.sb_raw);
  CHECK(a.bx_ramp == c.bx_ramp);
}

TEST_CASE("noise has the configured rms") {
  auto sc = preset_scan(0.3);
  sc.ramp.rate = 1.0;
  auto clean = synthesize_record(sc, preset_physics(0.3));
  sc.noise_rms = 0.05;
  auto noisy = synthesize_record(sc, preset_physics(0.3));
  double ss = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) ss += std::pow(noisy.sb_raw[i] - clean.sb_raw[i], 2);
  CHECK(std::sqrt(ss / static_cast<double>(clean.size())) == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("synthesized record follows the steady state far from transitions") {
  // Slow sweep without modulation: the raw signal equals the steady signal at the ramp field.
  auto sc = preset_scan(0.3);
  sc.mod_amplitude = 0.0;
  sc.ramp.rate = 0.5;
  sc.ramp.pattern = SweepPattern::up;
  const auto ph = preset_physics(0.3);
  const auto r = synthesize_record(sc, ph);
  for (std::size_t i = 0; i < r.size(); i += 500) {
    if (std::abs(r.bx_ramp[i]) < 5.0 || std::abs(r.bx_ramp[i]) > 24.0) continue;
    const int sign = r.bx_ramp[i] > 0 ? 1 : -1;
    const auto s = steady_signals(ph, {r.bx_ramp[i], 0.0, 0.0}, sign);
    CHECK(r.sb_raw[i] == doctest::Approx(s.sb).epsilon(0.02));
    CHECK(r.st_raw[i] == doctest::Approx(s.st).epsilon(1e-3));
  }
}

TEST_CASE("demodulated scan is the scaled derivative for small modulation") {
  Physics ph;
  ph.system.orientation.m0 = 0.0;
  ph.system.alignment.relax_rate = 2 * kPi * 1.27 * 8.0;
  ScanConfig c;
  c.mod_amplitude = 0.8;
  c.mod_freq = 1.0;
  c.sample_rate = 100.0;
  c.ramp.bx_start = -25;
  c.ramp.bx_end = 25;
  c.ramp.rate = 0.2;
  c.ramp.pattern = SweepPattern::up;
  c.ramp.static_by = 1.0;
  const auto d = lockin_demodulate(synthesize_record(c, ph), 0.0, 0.1);
  double err = 0.0, peak = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (std::abs(d.bx[k]) > 20) continue;
    const double h = 1e-4;
    const double want = 0.5 * c.mod_amplitude *
                        (steady_signals(ph, {d.bx[k] + h, 1, 0}).sb - steady_signals(ph, {d.bx[k] - h, 1, 0}).sb) /
                        (2 * h);
    err = std::max(err, std::abs(d.sb[k] - want));
    peak = std::max(peak, std::abs(want));
  }
  CHECK(err / peak < 0.03);
}

TEST_CASE("scan validation") {
  ScanConfig c;
  c.mod_freq = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.sample_rate = 50.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.noise_rms = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  ScanRecord empty;
  CHECK_THROWS_AS(lockin_demodulate(empty, 0.0, 1.0), std::invalid_argument);
}
