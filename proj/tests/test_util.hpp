#pragma once

#include "hpf/harmonic.hpp"

#include <functional>
#include <random>
#include <vector>

namespace hpf_test {

using hpf::Complex;
using hpf::ComplexVector;
using hpf::HarmonicSet;
using hpf::PhasorVector;

/// Conjugate-symmetric random spectrum with geometrically decaying orders.
inline PhasorVector random_spectrum(const HarmonicSet& set, int phases, std::mt19937& rng,
                                    double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  PhasorVector out(set, phases);
  for (int p = 0; p < phases; ++p)
    for (int h : set.orders()) {
      if (h < 0) continue;
      const double decay = scale / (1.0 + h);
      if (h == 0)
        out.set(p, 0, Complex{decay * uni(rng), 0.0});
      else
        out.set_pair(p, h, decay * Complex{uni(rng), uni(rng)});
    }
  return out;
}

/// Fourier coefficients by composite Simpson quadrature of an analytic
/// signal; the independent oracle for the sampled DFT.
inline Complex quadrature_coefficient(const std::function<double(double)>& x, int h, double f0,
                                      int panels = 20000) {
  const double period = 1.0 / f0;
  const double w0 = 2.0 * hpf::kPi * f0;
  const int n = panels % 2 == 0 ? panels : panels + 1;
  Complex acc{0.0, 0.0};
  for (int i = 0; i <= n; ++i) {
    const double t = period * i / n;
    const double weight = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += weight * x(t) * std::exp(-hpf::kJ * (h * w0 * t));
  }
  return acc * (period / (3.0 * n)) / period;
}

/// Uniform samples of an analytic signal over an integer number of periods.
inline std::vector<double> sample_signal(const std::function<double(double)>& x, double f0,
                                         int samples_per_period, int periods) {
  std::vector<double> out;
  const double dt = 1.0 / (f0 * samples_per_period);
  out.reserve(static_cast<std::size_t>(samples_per_period) * periods);
  for (int i = 0; i < samples_per_period * periods; ++i) out.push_back(x(i * dt));
  return out;
}

}  // namespace hpf_test
