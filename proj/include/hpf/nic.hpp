#pragma once

#include "hpf/harmonic.hpp"
#include "hpf/ltp.hpp"
#include "hpf/resources.hpp"
#include "hpf/units.hpp"

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>

namespace hpf {

enum class NicControl { vdc_q, pq };
enum class NicTier { power_balance, averaged };
enum class NicCoupling { full, none };

struct NicSetpoint {
  double p_pu = 0.0;     // active power injected into the AC grid (PQ type)
  double q_pu = 0.0;     // reactive power injected into the AC grid
  double v_dc_pu = 1.0;  // regulated DC voltage (VdcQ type)
};

/// Control loop bandwidths; the PI gains derive from these and the hardware.
struct NicControlParams {
  double current_loop_hz = 1000.0;
  double vdc_loop_hz = 50.0;
  double meas_filter_hz = 10.0;
  bool operator==(const NicControlParams&) const = default;
};

struct NicDeviceConfig {
  NicControl control = NicControl::vdc_q;
  NicTier tier = NicTier::power_balance;
  NicCoupling coupling = NicCoupling::full;
  bool series_loss = false;
  NicSetpoint setpoint;
  NicHardwareParams hardware;
  NicControlParams control_params;
  double v_ac_min_pu = 0.1;
};

/// Two-port converter grid response: grid-following on the AC port and
/// grid-forming on the DC port, (V_ac, I_dc) -> (I_ac, V_dc).
class TwoPortResponse {
 public:
  struct Jacobian {
    RealMatrix di_ac_dv_ac, di_ac_di_dc, dv_dc_dv_ac, dv_dc_di_dc;
  };

  TwoPortResponse(HarmonicSet ac_set, HarmonicSet dc_set)
      : ac_set_(std::move(ac_set)), dc_set_(std::move(dc_set)) {}
  virtual ~TwoPortResponse() = default;

  const HarmonicSet& ac_set() const { return ac_set_; }
  const HarmonicSet& dc_set() const { return dc_set_; }
  Eigen::Index ac_dim() const { return static_cast<Eigen::Index>(ac_set_.size()) * 3; }
  Eigen::Index dc_dim() const { return dc_set_.size(); }

  virtual std::pair<CurrentSpectrum, VoltageSpectrum> evaluate(
      const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) const = 0;
  virtual Jacobian jacobian(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) const = 0;
  virtual void refresh(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) = 0;
  virtual double power_loss_pu() const { return 0.0; }

 protected:
  HarmonicSet ac_set_;
  HarmonicSet dc_set_;
};

/// Power-balance tier. Fundamental behaviour is exact: the PQ type injects
/// its power setpoint, the VdcQ type pins the DC average voltage and draws
/// from the AC side whatever the DC port exports plus losses. Harmonics
/// couple through linear maps built at the operating point: bridge-current
/// sidebands (AC order h feeds DC orders h -+ 1 through the operating
/// fundamental current) and, for the VdcQ type, the DC-voltage loop pushing
/// DC ripple back into AC sidebands.
class PowerBalanceNic final : public TwoPortResponse {
 public:
  PowerBalanceNic(NicDeviceConfig cfg, HarmonicSet ac_set, HarmonicSet dc_set, const Bases& bases)
      : TwoPortResponse(std::move(ac_set), std::move(dc_set)), cfg_(cfg) {
    cfg_.hardware.validate();
    omega0_ = bases.omega0();
    hw_pu_ = cfg_.hardware.ac_scaled(bases.z_ac());
    c_dc_pu_ = cfg_.hardware.c_dc * bases.z_dc();
    const double wv = 2.0 * kPi * cfg_.control_params.vdc_loop_hz;
    kp_v_ = wv * c_dc_pu_;
    ki_v_ = wv * kp_v_ / 10.0;
    if (!ac_set_.contains(1) || !dc_set_.contains(0))
      throw std::invalid_argument("PowerBalanceNic: AC set needs order 1, DC set needs order 0");

    // Flat operating point until the first refresh.
    op_frame_ = {Complex{1.0, 0.0}, std::exp(-kJ * (2.0 * kPi / 3.0)),
                 std::exp(kJ * (2.0 * kPi / 3.0))};
    const Complex s0 = cfg_.control == NicControl::pq
                           ? Complex{cfg_.setpoint.p_pu, cfg_.setpoint.q_pu}
                           : Complex{0.0, cfg_.setpoint.q_pu};
    for (int p = 0; p < 3; ++p)
      op_i_fund_[static_cast<std::size_t>(p)] =
          std::conj(s0) / (4.0 * std::conj(0.5 * op_frame_[static_cast<std::size_t>(p)]));
    op_v_dc0_ = cfg_.control == NicControl::vdc_q ? cfg_.setpoint.v_dc_pu : 1.0;
    op_i_dc0_ = cfg_.control == NicControl::pq && op_v_dc0_ != 0.0
                    ? -cfg_.setpoint.p_pu / op_v_dc0_
                    : 0.0;
    op_v_mag_ = 1.0;
    rebuild_maps();
  }

  std::pair<CurrentSpectrum, VoltageSpectrum> evaluate(const VoltageSpectrum& v_ac,
                                                       const CurrentSpectrum& i_dc) const override {
    check_shapes(v_ac, i_dc);
    check_ac_voltage(v_ac);
    CurrentSpectrum i_ac(ac_set_, 3);
    VoltageSpectrum v_dc(dc_set_, 1);
    i_ac.data() = c_iv_ * v_ac.data() + c_ii_ * i_dc.data();
    v_dc.data() = c_vv_ * v_ac.data() + c_vi_ * i_dc.data();

    const Complex i_dc0 = i_dc.at(0, 0);
    const Complex s = fundamental_power(i_dc0);
    for (int p = 0; p < 3; ++p) {
      i_ac.set(p, 1, std::conj(s) / (4.0 * std::conj(v_ac.at(p, 1))));
      i_ac.set(p, -1, s / (4.0 * std::conj(v_ac.at(p, -1))));
    }

    if (cfg_.control == NicControl::vdc_q) {
      v_dc.set(0, 0, Complex{cfg_.setpoint.v_dc_pu, 0.0});
    } else {
      const double p_dc_target = -cfg_.setpoint.p_pu - p_loss_op_;
      v_dc.set(0, 0, std::abs(i_dc0) < kIdleCurrent ? Complex{op_v_dc0_, 0.0}
                                                    : p_dc_target / i_dc0);
    }
    return {std::move(i_ac), std::move(v_dc)};
  }

  Jacobian jacobian(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) const override {
    check_shapes(v_ac, i_dc);
    check_ac_voltage(v_ac);
    Jacobian j;
    j.di_ac_dv_ac = to_real_stacked(c_iv_);
    j.di_ac_di_dc = to_real_stacked(c_ii_);
    j.dv_dc_dv_ac = to_real_stacked(c_vv_);
    j.dv_dc_di_dc = to_real_stacked(c_vi_);

    const Complex i_dc0 = i_dc.at(0, 0);
    const Complex s = fundamental_power(i_dc0);
    const Eigen::Index dc0 = i_dc.slot(0, 0);
    for (int p = 0; p < 3; ++p) {
      const Complex v1 = v_ac.at(p, 1);
      const Complex vm1 = v_ac.at(p, -1);
      const Eigen::Index s1 = v_ac.slot(p, 1);
      const Eigen::Index sm1 = v_ac.slot(p, -1);
      j.di_ac_dv_ac.block<2, 2>(2 * s1, 2 * s1) =
          wirtinger_block({0.0, 0.0}, -std::conj(s) / (4.0 * std::conj(v1) * std::conj(v1)));
      j.di_ac_dv_ac.block<2, 2>(2 * sm1, 2 * sm1) =
          wirtinger_block({0.0, 0.0}, -s / (4.0 * std::conj(vm1) * std::conj(vm1)));
      if (cfg_.control == NicControl::vdc_q && cfg_.coupling == NicCoupling::full) {
        const double vr = cfg_.setpoint.v_dc_pu;
        j.di_ac_di_dc.block<2, 2>(2 * s1, 2 * dc0) =
            wirtinger_block({0.0, 0.0}, -vr / (4.0 * std::conj(v1)));
        j.di_ac_di_dc.block<2, 2>(2 * sm1, 2 * dc0) =
            wirtinger_block(-vr / (4.0 * std::conj(vm1)), {0.0, 0.0});
      }
    }
    if (cfg_.control == NicControl::pq) {
      const double p_dc_target = -cfg_.setpoint.p_pu - p_loss_op_;
      if (std::abs(i_dc0) >= kIdleCurrent)
        j.dv_dc_di_dc.block<2, 2>(2 * dc0, 2 * dc0) =
            wirtinger_block(-p_dc_target / (i_dc0 * i_dc0), {0.0, 0.0});
    }
    return j;
  }

  void refresh(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) override {
    check_shapes(v_ac, i_dc);
    double mag = 0.0;
    for (int p = 0; p < 3; ++p) {
      const Complex v1 = v_ac.at(p, 1);
      op_frame_[static_cast<std::size_t>(p)] = std::abs(v1) > 0.0 ? v1 / std::abs(v1)
                                                                  : Complex{1.0, 0.0};
      mag += 2.0 * std::abs(v1) / 3.0;
    }
    op_v_mag_ = std::max(mag, 0.2);
    op_i_dc0_ = i_dc.at(0, 0);
    const Complex s = fundamental_power(op_i_dc0_);
    for (int p = 0; p < 3; ++p)
      op_i_fund_[static_cast<std::size_t>(p)] = std::conj(s) / (4.0 * std::conj(v_ac.at(p, 1)));
    op_v_dc0_ = cfg_.control == NicControl::vdc_q
                    ? cfg_.setpoint.v_dc_pu
                    : (std::abs(op_i_dc0_) < kIdleCurrent
                           ? op_v_dc0_
                           : ((-cfg_.setpoint.p_pu - p_loss_op_) / op_i_dc0_).real());
    if (cfg_.series_loss) {
      const double r = hw_pu_.r_conv + hw_pu_.r_grid;
      double loss = 0.0;
      for (int p = 0; p < 3; ++p)
        loss += 2.0 * std::norm(op_i_fund_[static_cast<std::size_t>(p)]) * r;
      p_loss_op_ = 2.0 / 3.0 * loss;
    }
    rebuild_maps();
  }

  double power_loss_pu() const override { return p_loss_op_; }

 private:
  static constexpr double kIdleCurrent = 1e-6;

  Complex fundamental_power(Complex i_dc0_live) const {
    if (cfg_.control == NicControl::pq)
      return {cfg_.setpoint.p_pu, cfg_.setpoint.q_pu};
    const Complex i0 = cfg_.coupling == NicCoupling::full ? i_dc0_live : op_i_dc0_;
    return -cfg_.setpoint.v_dc_pu * i0 + Complex{-p_loss_op_, cfg_.setpoint.q_pu};
  }

  Complex z_link(int g) const { return 1.0 / (kJ * (g * omega0_) * c_dc_pu_); }

  Complex pi_v(int g) const { return kp_v_ + ki_v_ / (kJ * (g * omega0_)); }

  Complex y_filter(int h) const {
    if (h == 0) return {0.0, 0.0};
    const Complex zl{hw_pu_.r_grid, h * omega0_ * hw_pu_.l_grid};
    const Complex zc = hw_pu_.r_filter + 1.0 / (kJ * (h * omega0_) * hw_pu_.c_filter);
    return 1.0 / (zl + zc);
  }

  void rebuild_maps() {
    const Eigen::Index na = ac_dim(), nd = dc_dim();
    c_vv_ = ComplexMatrix::Zero(nd, na);
    c_vi_ = ComplexMatrix::Zero(nd, nd);
    c_iv_ = ComplexMatrix::Zero(na, na);
    c_ii_ = ComplexMatrix::Zero(na, nd);

    auto ac_slot = [&](int h, int p) {
      return static_cast<Eigen::Index>(ac_set_.index_of(h)) * 3 + p;
    };
    auto dc_slot = [&](int g) { return static_cast<Eigen::Index>(dc_set_.index_of(g)); };

    // DC-link ripple and, with full coupling, bridge-current sidebands.
    for (int g : dc_set_.orders()) {
      if (g == 0) continue;
      const Complex zl = z_link(g);
      c_vi_(dc_slot(g), dc_slot(g)) = -zl;
      if (cfg_.coupling == NicCoupling::none) continue;
      for (int p = 0; p < 3; ++p)
        for (int k : {1, -1}) {
          const int h = g - k;
          if (!ac_set_.contains(h)) continue;
          const Complex i_op = k == 1 ? op_i_fund_[static_cast<std::size_t>(p)]
                                      : std::conj(op_i_fund_[static_cast<std::size_t>(p)]);
          c_vv_(dc_slot(g), ac_slot(h, p)) += zl * i_op / op_v_dc0_;
        }
    }

    // Harmonic admittance of the AC filter, converter side current-stiff.
    for (int h : ac_set_.orders()) {
      if (h == 1 || h == -1) continue;
      for (int p = 0; p < 3; ++p)
        c_iv_(ac_slot(h, p), ac_slot(h, p)) -= y_filter(h);
    }

    // VdcQ only: the voltage loop turns DC ripple into AC current sidebands.
    if (cfg_.control == NicControl::vdc_q && cfg_.coupling == NicCoupling::full) {
      ComplexMatrix dq = ComplexMatrix::Zero(na, nd);
      for (int g : dc_set_.orders()) {
        if (g == 0) continue;
        const Complex gain = -pi_v(g) / op_v_mag_;
        for (int p = 0; p < 3; ++p) {
          const Complex frame = op_frame_[static_cast<std::size_t>(p)];
          for (int k : {1, -1}) {
            const int h = g + k;
            if (!ac_set_.contains(h) || h == 1 || h == -1) continue;
            dq(ac_slot(h, p), dc_slot(g)) +=
                0.5 * (k == 1 ? frame : std::conj(frame)) * gain;
          }
        }
      }
      c_iv_ += dq * c_vv_;
      c_ii_ += dq * c_vi_;
    }
  }

  void check_shapes(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) const {
    if (v_ac.phases() != 3 || v_ac.harmonic_set() != ac_set_ || i_dc.phases() != 1 ||
        i_dc.harmonic_set() != dc_set_)
      throw std::invalid_argument("PowerBalanceNic: port spectrum shape mismatch");
  }

  void check_ac_voltage(const VoltageSpectrum& v_ac) const {
    for (int p = 0; p < 3; ++p)
      if (2.0 * std::abs(v_ac.at(p, 1)) < cfg_.v_ac_min_pu)
        throw LinearizationError("NIC: AC fundamental voltage collapsed below " +
                                 std::to_string(cfg_.v_ac_min_pu) + " p.u.");
  }

  NicDeviceConfig cfg_;
  NicHardwareParams hw_pu_;
  double omega0_ = 0.0;
  double c_dc_pu_ = 0.0;
  double kp_v_ = 0.0, ki_v_ = 0.0;

  std::array<Complex, 3> op_frame_;
  std::array<Complex, 3> op_i_fund_;
  Complex op_i_dc0_{0.0, 0.0};
  double op_v_dc0_ = 1.0;
  double op_v_mag_ = 1.0;
  double p_loss_op_ = 0.0;

  ComplexMatrix c_vv_, c_vi_, c_iv_, c_ii_;
};

}  // namespace hpf
