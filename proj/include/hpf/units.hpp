#pragma once

#include "hpf/harmonic.hpp"

#include <cmath>
#include <stdexcept>

namespace hpf {

/// Per-unit bases. Voltage coefficients are normalized to the peak of the
/// nominal sinusoid on the AC side (so the nominal fundamental has the
/// double-sided coefficients X_{+-1} = 0.5, i.e. single-sided magnitude 1.0)
/// and to the nominal DC voltage on the DC side. The AC current base is
/// chosen so that complex power in p.u. is V * conj(I) of the peak phasors
/// of any one phase of a balanced set, with the total power base p_w.
struct Bases {
  double p_w = 50e3;        // total power base
  double v_ac_rms = 230.0;  // AC phase-to-neutral RMS
  double v_dc = 900.0;      // DC pole-to-pole
  double f0 = 50.0;

  double v_ac_peak() const { return std::sqrt(2.0) * v_ac_rms; }
  double i_ac_peak() const { return 2.0 * p_w / (3.0 * v_ac_peak()); }
  double i_ac_rms() const { return i_ac_peak() / std::sqrt(2.0); }
  double z_ac() const { return 3.0 * v_ac_rms * v_ac_rms / p_w; }
  double i_dc() const { return p_w / v_dc; }
  double z_dc() const { return v_dc * v_dc / p_w; }
  double omega0() const { return 2.0 * kPi * f0; }

  void validate() const {
    if (p_w <= 0 || v_ac_rms <= 0 || v_dc <= 0 || f0 <= 0)
      throw std::invalid_argument("Bases: all base quantities must be positive");
  }

  bool operator==(const Bases&) const = default;
};

/// Complex power injected at the fundamental, in p.u. of the total power
/// base, from double-sided peak-normalized spectra of a polyphase terminal.
inline Complex ac_fundamental_power(const PhasorVector& v, const PhasorVector& i) {
  Complex s{0.0, 0.0};
  for (int p = 0; p < v.phases(); ++p) s += v.at(p, 1) * std::conj(i.at(p, 1));
  return 4.0 / 3.0 * s;
}

/// Average injected power over all retained orders, p.u. of the power base.
inline double ac_average_power(const PhasorVector& v, const PhasorVector& i) {
  Complex s{0.0, 0.0};
  for (int p = 0; p < v.phases(); ++p)
    for (int h : v.harmonic_set().orders()) s += v.at(p, h) * std::conj(i.at_or_zero(p, h));
  return 2.0 / 3.0 * s.real();
}

inline double dc_average_power(const PhasorVector& v, const PhasorVector& i) {
  Complex s{0.0, 0.0};
  for (int h : v.harmonic_set().orders()) s += v.at(0, h) * std::conj(i.at_or_zero(0, h));
  return s.real();
}

}  // namespace hpf
