#pragma once

#include "hpf/harmonic.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace hpf {

/// One classic RK4 step of dx/dt = f(t, x).
template <class F>
RealVector rk4_step(F&& f, double t, const RealVector& x, double dt) {
  const RealVector k1 = f(t, x);
  const RealVector k2 = f(t + 0.5 * dt, RealVector(x + 0.5 * dt * k1));
  const RealVector k3 = f(t + 0.5 * dt, RealVector(x + 0.5 * dt * k2));
  const RealVector k4 = f(t + dt, RealVector(x + dt * k3));
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct SteadyStateOptions {
  double dt = 1e-5;             // requested step; snapped to divide the period
  int samples_per_period = 0;   // 0 -> derived from the harmonic set
  int dft_periods = 5;
  double settle_tol = 1e-7;     // period-over-period RMS delta of the outputs
  double max_time = 5.0;
};

struct SteadyStateResult {
  bool settled = false;
  double settle_time = 0.0;
  std::vector<double> rms_delta_trace;
  PhasorVector spectra;  // output channels as "phases"

  explicit SteadyStateResult(PhasorVector s) : spectra(std::move(s)) {}
};

/// Integrates dx/dt = f(t, x) with fixed-step RK4 until the periodic outputs
/// y = g(t, x) repeat period over period within settle_tol, then extracts the
/// harmonic spectra of the outputs by DFT over dft_periods periods.
template <class F, class G>
SteadyStateResult integrate_to_steady_state(F&& f, G&& g, RealVector x0,
                                            const HarmonicSet& set, int n_outputs,
                                            const SteadyStateOptions& opt = {}) {
  const double period = set.period();
  int spp = opt.samples_per_period > 0 ? opt.samples_per_period
                                       : std::max(64, 4 * set.max_order() + 4);
  int steps_per_sample = std::max(1, static_cast<int>(std::ceil(period / (spp * opt.dt))));
  const double dt = period / (static_cast<double>(spp) * steps_per_sample);

  SteadyStateResult result(PhasorVector(set, n_outputs));
  RealVector x = std::move(x0);
  double t = 0.0;
  std::vector<RealVector> prev, cur;
  prev.reserve(static_cast<std::size_t>(spp));
  cur.reserve(static_cast<std::size_t>(spp));

  const int max_periods = static_cast<int>(std::ceil(opt.max_time / period));
  for (int per = 0; per < max_periods && !result.settled; ++per) {
    cur.clear();
    for (int s = 0; s < spp; ++s) {
      cur.push_back(g(t, x));
      for (int k = 0; k < steps_per_sample; ++k) {
        x = rk4_step(f, t, x, dt);
        t += dt;
      }
    }
    if (!prev.empty()) {
      double acc = 0.0;
      for (int s = 0; s < spp; ++s)
        acc += (cur[static_cast<std::size_t>(s)] - prev[static_cast<std::size_t>(s)])
                   .squaredNorm();
      const double rms = std::sqrt(acc / (static_cast<double>(spp) * n_outputs));
      result.rms_delta_trace.push_back(rms);
      if (rms < opt.settle_tol) {
        result.settled = true;
        result.settle_time = t;
      }
    }
    std::swap(prev, cur);
  }
  if (!result.settled) return result;

  // Record dft_periods periods of settled response and extract the spectra.
  std::vector<std::vector<double>> channels(static_cast<std::size_t>(n_outputs));
  for (auto& ch : channels) ch.reserve(static_cast<std::size_t>(spp) * opt.dft_periods);
  for (int per = 0; per < opt.dft_periods; ++per)
    for (int s = 0; s < spp; ++s) {
      const RealVector y = g(t, x);
      for (int c = 0; c < n_outputs; ++c)
        channels[static_cast<std::size_t>(c)].push_back(y(c));
      for (int k = 0; k < steps_per_sample; ++k) {
        x = rk4_step(f, t, x, dt);
        t += dt;
      }
    }
  result.spectra = dft_coefficients(channels, period / spp, set);
  return result;
}

}  // namespace hpf
