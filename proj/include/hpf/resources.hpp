#pragma once

#include "hpf/harmonic.hpp"
#include "hpf/ltp.hpp"
#include "hpf/units.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

/// Thrown when a linearized response is queried outside its validity region,
/// e.g. the fundamental terminal voltage collapsed below the floor.
class LinearizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grid-forming single-port resource: terminal voltage as a function of the
/// injected current. The Jacobian is over real-stacked coefficients, with the
/// same order-major slot layout as PhasorVector.
class FormingResponse {
 public:
  virtual ~FormingResponse() = default;
  virtual VoltageSpectrum evaluate(const CurrentSpectrum& i) const = 0;
  virtual RealMatrix jacobian(const CurrentSpectrum& i) const = 0;
  virtual void refresh(const VoltageSpectrum&, const CurrentSpectrum&) {}
};

/// Grid-following single-port resource: injected current as a function of the
/// terminal voltage.
class FollowingResponse {
 public:
  virtual ~FollowingResponse() = default;
  virtual CurrentSpectrum evaluate(const VoltageSpectrum& v) const = 0;
  virtual RealMatrix jacobian(const VoltageSpectrum& v) const = 0;
  virtual void refresh(const VoltageSpectrum&, const CurrentSpectrum&) {}
};

/// Builds a balanced polyphase spectrum from single-sided (magnitude, angle)
/// entries: phase p of order h carries the extra rotation h * phi_p with
/// phi_p in {0, -120, +120} degrees, i.e. the same waveform shifted in time.
inline PhasorVector balanced_spectrum(const HarmonicSet& set, int phases,
                                      const std::vector<std::pair<int, Complex>>& entries) {
  PhasorVector out(set, phases);
  for (const auto& [h, single_sided] : entries) {
    if (h < 0) throw std::invalid_argument("balanced_spectrum: orders must be non-negative");
    if (!set.contains(h)) continue;  // outside the modelled frequency window
    for (int p = 0; p < phases; ++p) {
      const double phi = phases == 3 ? (p == 1 ? -2.0 * kPi / 3.0 : (p == 2 ? 2.0 * kPi / 3.0 : 0.0))
                                     : 0.0;
      const Complex rot = std::exp(kJ * (h * phi));
      if (h == 0)
        out.set(p, 0, single_sided);
      else
        out.set_pair(p, h, 0.5 * single_sided * rot);
    }
  }
  return out;
}

/// Voltage source behind a per-order impedance: V = V_src - Z(h) I.
/// Covers the substation Thevenin equivalent and, with an arbitrary
/// impedance profile, any linear forming source.
class SourceBehindImpedance final : public FormingResponse {
 public:
  SourceBehindImpedance(VoltageSpectrum source, std::function<Complex(int)> z_of_order)
      : source_(std::move(source)), z_(std::move(z_of_order)) {}

  VoltageSpectrum evaluate(const CurrentSpectrum& i) const override {
    VoltageSpectrum v(source_);
    for (int p = 0; p < v.phases(); ++p)
      for (int h : v.harmonic_set().orders()) v.add(p, h, -z_(h) * i.at(p, h));
    return v;
  }

  RealMatrix jacobian(const CurrentSpectrum& i) const override {
    const auto n = i.size();
    RealMatrix j = RealMatrix::Zero(2 * n, 2 * n);
    for (int p = 0; p < i.phases(); ++p)
      for (int h : i.harmonic_set().orders()) {
        const Eigen::Index s = i.slot(p, h);
        j.block<2, 2>(2 * s, 2 * s) = wirtinger_block(-z_(h), Complex{0.0, 0.0});
      }
    return j;
  }

 private:
  VoltageSpectrum source_;
  std::function<Complex(int)> z_;
};

/// Substation Thevenin equivalent: harmonic voltage source behind
/// Z_sc(h) = R_sc + j h w0 L_sc with |Z_sc| at the fundamental and the R/X
/// ratio as given. Impedance inputs are in ohm, converted to p.u. here.
inline std::unique_ptr<FormingResponse> thevenin_response(VoltageSpectrum v_te, double z_sc_ohm,
                                                          double r_x_ratio, const Bases& bases) {
  if (z_sc_ohm <= 0.0) throw std::invalid_argument("thevenin_response: |Z_sc| must be positive");
  const double x_sc = z_sc_ohm / std::sqrt(1.0 + r_x_ratio * r_x_ratio);
  const double r_sc = r_x_ratio * x_sc;
  const double r_pu = r_sc / bases.z_ac();
  const double x_pu = x_sc / bases.z_ac();
  return std::make_unique<SourceBehindImpedance>(
      std::move(v_te), [r_pu, x_pu](int h) { return Complex{r_pu, h * x_pu}; });
}

/// Constant impedance load sized from its power draw at nominal voltage:
/// per-unit conductance |P_pu| at every order, injection convention
/// (a consuming load injects negative current).
class ImpedanceLoadResponse final : public FollowingResponse {
 public:
  ImpedanceLoadResponse(double p_pu, const HarmonicSet& set, int phases)
      : y_pu_(std::abs(p_pu)), set_(set), phases_(phases) {
    if (p_pu == 0.0) throw std::invalid_argument("ImpedanceLoadResponse: P must be non-zero");
  }

  CurrentSpectrum evaluate(const VoltageSpectrum& v) const override {
    CurrentSpectrum i(set_, phases_);
    i.data() = -y_pu_ * v.data();
    return i;
  }

  RealMatrix jacobian(const VoltageSpectrum& v) const override {
    return -y_pu_ * RealMatrix::Identity(2 * v.size(), 2 * v.size());
  }

  double y_pu() const { return y_pu_; }

 private:
  double y_pu_;
  HarmonicSet set_;
  int phases_;
};

/// Ideal current source: injects a fixed spectrum regardless of the voltage.
class CurrentSourceResponse final : public FollowingResponse {
 public:
  explicit CurrentSourceResponse(CurrentSpectrum i_ref) : i_ref_(std::move(i_ref)) {
    if (!i_ref_.is_conjugate_symmetric(1e-9))
      throw std::invalid_argument("CurrentSourceResponse: reference spectrum not conjugate-symmetric");
  }

  CurrentSpectrum evaluate(const VoltageSpectrum&) const override { return i_ref_; }

  RealMatrix jacobian(const VoltageSpectrum& v) const override {
    return RealMatrix::Zero(2 * v.size(), 2 * v.size());
  }

 private:
  CurrentSpectrum i_ref_;
};

/// Transit node: zero injection at every order.
inline std::unique_ptr<FollowingResponse> zero_injection_response(const HarmonicSet& set,
                                                                  int phases) {
  return std::make_unique<CurrentSourceResponse>(CurrentSpectrum(set, phases));
}

/// Constant-power device on a balanced AC terminal. The fundamental current
/// follows from the aggregate complex power S on the double-sided peak
/// convention, I_{+1} = conj(S) / (4 conj(V_{+1})) per phase; other orders
/// respond through a harmonic admittance (a constant by default, or a full
/// harmonic transfer map plugged in via set_harmonic_model).
class ConstantPowerResponse final : public FollowingResponse {
 public:
  ConstantPowerResponse(Complex s_pu, const HarmonicSet& set, int phases,
                        Complex y_harm = Complex{0.0, 0.0}, double v_min_pu = 0.1)
      : s_(s_pu), set_(set), phases_(phases), y_harm_(y_harm), v_min_(v_min_pu) {
    if (!set_.contains(1))
      throw std::invalid_argument("ConstantPowerResponse: harmonic set lacks the fundamental");
  }

  /// Plug-in closed-loop harmonic response; rows/cols at the fundamental are
  /// ignored (the power law owns those orders).
  void set_harmonic_model(Htf model) {
    if (model.ny != phases_ || model.nu != phases_ || model.set != set_)
      throw std::invalid_argument("ConstantPowerResponse: harmonic model shape mismatch");
    harmonic_model_ = std::move(model);
  }

  CurrentSpectrum evaluate(const VoltageSpectrum& v) const override {
    CurrentSpectrum i(set_, phases_);
    if (harmonic_model_) {
      i.data() = -(harmonic_model_->m * v.data());
    } else {
      for (int p = 0; p < phases_; ++p)
        for (int h : set_.orders())
          i.set(p, h, -y_of(h) * v.at(p, h));
    }
    for (int p = 0; p < phases_; ++p) {
      const Complex v1 = v.at(p, 1);
      check_voltage(v1);
      i.set(p, 1, std::conj(s_) / (4.0 * std::conj(v1)));
      i.set(p, -1, s_ / (4.0 * std::conj(v.at(p, -1))));
    }
    return i;
  }

  RealMatrix jacobian(const VoltageSpectrum& v) const override {
    const auto n = v.size();
    RealMatrix j = RealMatrix::Zero(2 * n, 2 * n);
    if (harmonic_model_) {
      j = -to_real_stacked(harmonic_model_->m);
      for (int p = 0; p < phases_; ++p)
        for (int hp : {1, -1}) {
          const Eigen::Index s = v.slot(p, hp);
          j.row(2 * s).setZero();
          j.row(2 * s + 1).setZero();
        }
    } else {
      for (int p = 0; p < phases_; ++p)
        for (int h : set_.orders()) {
          if (h == 1 || h == -1) continue;
          const Eigen::Index s = v.slot(p, h);
          j.block<2, 2>(2 * s, 2 * s) = wirtinger_block(-y_of(h), Complex{0.0, 0.0});
        }
    }
    for (int p = 0; p < phases_; ++p) {
      const Complex v1 = v.at(p, 1);
      const Complex vm1 = v.at(p, -1);
      check_voltage(v1);
      const Eigen::Index s1 = v.slot(p, 1);
      const Eigen::Index sm1 = v.slot(p, -1);
      j.block<2, 2>(2 * s1, 2 * s1) =
          wirtinger_block({0.0, 0.0}, -std::conj(s_) / (4.0 * std::conj(v1) * std::conj(v1)));
      j.block<2, 2>(2 * sm1, 2 * sm1) =
          wirtinger_block({0.0, 0.0}, -s_ / (4.0 * std::conj(vm1) * std::conj(vm1)));
    }
    return j;
  }

  Complex power() const { return s_; }

 private:
  Complex y_of(int h) const { return h >= 0 ? y_harm_ : std::conj(y_harm_); }

  void check_voltage(Complex v1) const {
    // v_min is on the single-sided magnitude, i.e. 2 |X_1|.
    if (2.0 * std::abs(v1) < v_min_ && (s_ != Complex{0.0, 0.0}))
      throw LinearizationError(
          "constant-power response: fundamental voltage collapsed below " +
          std::to_string(v_min_) + " p.u.");
  }

  Complex s_;
  HarmonicSet set_;
  int phases_;
  Complex y_harm_;
  double v_min_;
  std::optional<Htf> harmonic_model_;
};

}  // namespace hpf
