#pragma once

#include "hpf/harmonic.hpp"
#include "hpf/ltp.hpp"
#include "hpf/nic.hpp"
#include "hpf/units.hpp"

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hpf {

/// Averaged-model tier of the NIC. The converter is an ideal modulated
/// voltage source on the AC side of an LCL filter and a power-conserving
/// current source into the DC-link capacitor; control is synchronous-frame
/// PI current control with an outer DC-voltage PI (VdcQ) or a power
/// reference (PQ), the frame fixed at the nominal frequency and the
/// reference phasor taken from a slow measurement filter.
///
/// The grid response evaluates the model's exact periodic steady state by
/// harmonic balance at the operating terminal spectra, and exposes the
/// harmonic transfer function of the model linearized along that trajectory
/// as its Jacobian. Between refreshes the response acts as the frozen affine
/// map out = out_op + HTF (in - in_op).
class AveragedNic final : public TwoPortResponse {
 public:
  // State layout; cosim integrates the same model through rhs().
  static constexpr int kIc = 0;    // converter-side currents, abc
  static constexpr int kVcf = 3;   // filter capacitor voltages, abc
  static constexpr int kIg = 6;    // grid-side (injected) currents, abc
  static constexpr int kVdc = 9;   // DC-link voltage
  static constexpr int kXiD = 10;  // current PI integrators
  static constexpr int kXiQ = 11;
  static constexpr int kVmD = 12;  // measured PCC voltage phasor, dq
  static constexpr int kVmQ = 13;
  static constexpr int kXiV = 14;  // DC-voltage PI integrator (VdcQ only)

  AveragedNic(NicDeviceConfig cfg, HarmonicSet ac_set, HarmonicSet dc_set, const Bases& bases)
      : TwoPortResponse(std::move(ac_set), std::move(dc_set)),
        cfg_(cfg),
        full_set_(HarmonicSet::dc_default(bases.f0,
                                          std::max(ac_set_.max_order(), dc_set_.max_order()))) {
    cfg_.hardware.validate();
    omega0_ = bases.omega0();
    hw_ = cfg_.hardware.ac_scaled(bases.z_ac());
    c_dc_pu_ = cfg_.hardware.c_dc * bases.z_dc();
    nx_ = cfg_.control == NicControl::vdc_q ? 15 : 14;
    const double wc = 2.0 * kPi * cfg_.control_params.current_loop_hz;
    kp_i_ = wc * hw_.l_conv;
    ki_i_ = wc * kp_i_ / 10.0;
    const double wv = 2.0 * kPi * cfg_.control_params.vdc_loop_hz;
    kp_v_ = wv * c_dc_pu_;
    ki_v_ = wv * kp_v_ / 10.0;
    w_meas_ = 2.0 * kPi * cfg_.control_params.meas_filter_hz;
    collocation_n_ = std::max(192, 8 * full_set_.max_order() + 8);
  }

  int state_dim() const { return nx_; }
  const HarmonicSet& internal_set() const { return full_set_; }

  /// Time-domain right-hand side of the averaged model.
  /// u = (v_ac a,b,c at the PCC, current leaving into the DC grid).
  RealVector rhs(double t, const RealVector& x, const RealVector& u) const {
    RealVector dx = RealVector::Zero(nx_);
    const double theta = omega0_ * t;

    double v_pcc_d = 0.0, v_pcc_q = 0.0, i_cd = 0.0, i_cq = 0.0, v_fd = 0.0, v_fq = 0.0;
    std::array<double, 3> cs{}, sn{};
    for (int p = 0; p < 3; ++p) {
      const double ang = theta + phase_angle(p);
      cs[static_cast<std::size_t>(p)] = std::cos(ang);
      sn[static_cast<std::size_t>(p)] = std::sin(ang);
      v_pcc_d += 2.0 / 3.0 * u(p) * cs[static_cast<std::size_t>(p)];
      v_pcc_q -= 2.0 / 3.0 * u(p) * sn[static_cast<std::size_t>(p)];
      i_cd += 2.0 / 3.0 * x(kIc + p) * cs[static_cast<std::size_t>(p)];
      i_cq -= 2.0 / 3.0 * x(kIc + p) * sn[static_cast<std::size_t>(p)];
      v_fd += 2.0 / 3.0 * x(kVcf + p) * cs[static_cast<std::size_t>(p)];
      v_fq -= 2.0 / 3.0 * x(kVcf + p) * sn[static_cast<std::size_t>(p)];
    }

    dx(kVmD) = w_meas_ * (v_pcc_d - x(kVmD));
    dx(kVmQ) = w_meas_ * (v_pcc_q - x(kVmQ));

    Complex vm{x(kVmD), x(kVmQ)};
    if (std::abs(vm) < 0.3) vm *= 0.3 / std::max(std::abs(vm), 1e-12);

    Complex s_cmd;
    if (cfg_.control == NicControl::vdc_q) {
      const double e_v = cfg_.setpoint.v_dc_pu - x(kVdc);
      dx(kXiV) = e_v;
      s_cmd = Complex{-(kp_v_ * e_v + ki_v_ * x(kXiV)), cfg_.setpoint.q_pu};
    } else {
      s_cmd = Complex{cfg_.setpoint.p_pu, cfg_.setpoint.q_pu};
    }
    const Complex i_ref = std::conj(s_cmd / vm);

    const double e_d = i_ref.real() - i_cd;
    const double e_q = i_ref.imag() - i_cq;
    dx(kXiD) = e_d;
    dx(kXiQ) = e_q;
    const double v_cmd_d = v_fd + kp_i_ * e_d + ki_i_ * x(kXiD) - omega0_ * hw_.l_conv * i_cq;
    const double v_cmd_q = v_fq + kp_i_ * e_q + ki_i_ * x(kXiQ) + omega0_ * hw_.l_conv * i_cd;

    const double v_dc_div = std::max(x(kVdc), 0.2);
    double p_push = 0.0;
    for (int p = 0; p < 3; ++p) {
      const double v_b =
          v_cmd_d * cs[static_cast<std::size_t>(p)] - v_cmd_q * sn[static_cast<std::size_t>(p)];
      p_push += 2.0 / 3.0 * v_b * x(kIc + p);
      const double i_cap = x(kIc + p) - x(kIg + p);
      dx(kIc + p) =
          (v_b - hw_.r_conv * x(kIc + p) - x(kVcf + p) - hw_.r_filter * i_cap) / hw_.l_conv;
      dx(kVcf + p) = i_cap / hw_.c_filter;
      dx(kIg + p) = (x(kVcf + p) + hw_.r_filter * i_cap - hw_.r_grid * x(kIg + p) - u(p)) /
                    hw_.l_grid;
    }
    dx(kVdc) = (-p_push / v_dc_div - u(3)) / c_dc_pu_;
    return dx;
  }

  /// A starting state for time integration at nominal conditions.
  RealVector initial_state() const {
    RealVector x = RealVector::Zero(nx_);
    x(kVdc) = cfg_.control == NicControl::vdc_q ? cfg_.setpoint.v_dc_pu : 1.0;
    x(kVmD) = 1.0;
    return x;
  }

  std::pair<CurrentSpectrum, VoltageSpectrum> evaluate(const VoltageSpectrum& v_ac,
                                                       const CurrentSpectrum& i_dc) const override {
    require_op();
    CurrentSpectrum i_ac(ac_set_, 3);
    VoltageSpectrum v_dc(dc_set_, 1);
    i_ac.data() = op_i_ac_->data() + h_iv_ * (v_ac.data() - op_v_ac_->data()) +
                  h_ii_ * (i_dc.data() - op_i_dc_->data());
    v_dc.data() = op_v_dc_->data() + h_vv_ * (v_ac.data() - op_v_ac_->data()) +
                  h_vi_ * (i_dc.data() - op_i_dc_->data());
    return {std::move(i_ac), std::move(v_dc)};
  }

  Jacobian jacobian(const VoltageSpectrum&, const CurrentSpectrum&) const override {
    require_op();
    Jacobian j;
    j.di_ac_dv_ac = to_real_stacked(h_iv_);
    j.di_ac_di_dc = to_real_stacked(h_ii_);
    j.dv_dc_dv_ac = to_real_stacked(h_vv_);
    j.dv_dc_di_dc = to_real_stacked(h_vi_);
    return j;
  }

  void refresh(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) override {
    for (int p = 0; p < 3; ++p)
      if (2.0 * std::abs(v_ac.at(p, 1)) < cfg_.v_ac_min_pu)
        throw LinearizationError("NIC (averaged): AC fundamental voltage below " +
                                 std::to_string(cfg_.v_ac_min_pu) + " p.u.");
    solve_harmonic_balance(v_ac, i_dc);
    build_port_maps(v_ac, i_dc);
    op_v_ac_ = v_ac;
    op_i_dc_ = i_dc;
    op_i_ac_ = CurrentSpectrum(ac_set_, 3);
    op_v_dc_ = VoltageSpectrum(dc_set_, 1);
    for (int p = 0; p < 3; ++p)
      for (int h : ac_set_.orders()) op_i_ac_->set(p, h, state_coeff(kIg + p, h));
    for (int h : dc_set_.orders()) op_v_dc_->set(0, h, state_coeff(kVdc, h));
  }

  double power_loss_pu() const override {
    require_op();
    double loss = 0.0;
    const int n = collocation_n_;
    for (int i = 0; i < n; ++i) {
      const RealVector x = trajectory_.col(i);
      for (int p = 0; p < 3; ++p) {
        const double i_cap = x(kIc + p) - x(kIg + p);
        loss += 2.0 / 3.0 *
                (hw_.r_conv * x(kIc + p) * x(kIc + p) + hw_.r_grid * x(kIg + p) * x(kIg + p) +
                 hw_.r_filter * i_cap * i_cap) /
                n;
      }
    }
    return loss;
  }

  /// Spectrum of one internal state along the solved trajectory.
  Complex state_coeff(int state, int h) const {
    if (hb_x_.size() == 0)
      throw std::logic_error("AveragedNic: no harmonic-balance solution available");
    return hb_x_(static_cast<Eigen::Index>(full_set_.index_of(h)) * nx_ + state);
  }

 private:
  static double phase_angle(int p) {
    return p == 1 ? -2.0 * kPi / 3.0 : (p == 2 ? 2.0 * kPi / 3.0 : 0.0);
  }

  void require_op() const {
    if (!op_v_ac_)
      throw std::logic_error("AveragedNic: refresh() must run before evaluate()/jacobian()");
  }

  RealVector input_samples(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc,
                           double t) const {
    RealVector u(4);
    for (int p = 0; p < 3; ++p) u(p) = v_ac.evaluate(p, t, omega0_);
    u(3) = i_dc.evaluate(0, t, omega0_);
    return u;
  }

  /// Collocation residual R(X) = N X - spectra of f(x(t), u(t), t).
  ComplexVector hb_residual(const ComplexVector& x_hat, const VoltageSpectrum& v_ac,
                            const CurrentSpectrum& i_dc) const {
    const int n_t = collocation_n_;
    const double period = full_set_.period();
    Eigen::MatrixXd f_samples(nx_, n_t);
    for (int i = 0; i < n_t; ++i) {
      const double t = period * i / n_t;
      f_samples.col(i) = rhs(t, synthesize_state(x_hat, t), input_samples(v_ac, i_dc, t));
    }
    ComplexVector r(x_hat.size());
    for (int k = 0; k < full_set_.size(); ++k) {
      const int h = full_set_.order_at(k);
      const Complex jw = kJ * (h * omega0_);
      ComplexVector f_h = ComplexVector::Zero(nx_);
      for (int i = 0; i < n_t; ++i) {
        const double ang = -2.0 * kPi * h * i / static_cast<double>(n_t);
        f_h += f_samples.col(i) * Complex{std::cos(ang), std::sin(ang)};
      }
      f_h /= static_cast<double>(n_t);
      r.segment(static_cast<Eigen::Index>(k) * nx_, nx_) =
          jw * x_hat.segment(static_cast<Eigen::Index>(k) * nx_, nx_) - f_h;
    }
    return r;
  }

  RealVector synthesize_state(const ComplexVector& x_hat, double t) const {
    RealVector x = RealVector::Zero(nx_);
    for (int k = 0; k < full_set_.size(); ++k) {
      const Complex rot = std::exp(kJ * (full_set_.order_at(k) * omega0_ * t));
      for (int s = 0; s < nx_; ++s)
        x(s) += (x_hat(static_cast<Eigen::Index>(k) * nx_ + s) * rot).real();
    }
    return x;
  }

  /// Fourier series (|k| <= 2H) of the model Jacobians along the current
  /// trajectory, by central differences at the collocation points.
  void sample_linearization(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc,
                            std::map<int, ComplexMatrix>& a_k,
                            std::map<int, ComplexMatrix>& b_k) const {
    const int n_t = collocation_n_;
    const double period = full_set_.period();
    std::vector<RealMatrix> a_t(static_cast<std::size_t>(n_t));
    std::vector<RealMatrix> b_t(static_cast<std::size_t>(n_t));
    for (int i = 0; i < n_t; ++i) {
      const double t = period * i / n_t;
      const RealVector x = synthesize_state(hb_x_, t);
      const RealVector u = input_samples(v_ac, i_dc, t);
      RealMatrix a(nx_, nx_), b(nx_, 4);
      for (int cidx = 0; cidx < nx_; ++cidx) {
        const double step = 1e-6 * std::max(1.0, std::abs(x(cidx)));
        RealVector xp = x, xm = x;
        xp(cidx) += step;
        xm(cidx) -= step;
        a.col(cidx) = (rhs(t, xp, u) - rhs(t, xm, u)) / (2.0 * step);
      }
      for (int cidx = 0; cidx < 4; ++cidx) {
        const double step = 1e-6 * std::max(1.0, std::abs(u(cidx)));
        RealVector up = u, um = u;
        up(cidx) += step;
        um(cidx) -= step;
        b.col(cidx) = (rhs(t, x, up) - rhs(t, x, um)) / (2.0 * step);
      }
      a_t[static_cast<std::size_t>(i)] = std::move(a);
      b_t[static_cast<std::size_t>(i)] = std::move(b);
    }
    const int k_max = 2 * full_set_.max_order();
    for (int k = -k_max; k <= k_max; ++k) {
      ComplexMatrix a_acc = ComplexMatrix::Zero(nx_, nx_);
      ComplexMatrix b_acc = ComplexMatrix::Zero(nx_, 4);
      for (int i = 0; i < n_t; ++i) {
        const double ang = -2.0 * kPi * k * i / static_cast<double>(n_t);
        const Complex w{std::cos(ang), std::sin(ang)};
        a_acc += a_t[static_cast<std::size_t>(i)] * w;
        b_acc += b_t[static_cast<std::size_t>(i)] * w;
      }
      a_k[k] = a_acc / static_cast<double>(n_t);
      b_k[k] = b_acc / static_cast<double>(n_t);
    }
  }

  void solve_harmonic_balance(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) {
    const Eigen::Index dim = static_cast<Eigen::Index>(full_set_.size()) * nx_;
    ComplexVector x_hat = hb_x_.size() == dim ? hb_x_ : cold_start(v_ac, i_dc);

    Eigen::PartialPivLU<ComplexMatrix> lu;
    bool have_lu = false;
    double prev_norm = std::numeric_limits<double>::max();
    const int max_iter = 60;
    for (int it = 0; it < max_iter; ++it) {
      hb_x_ = x_hat;
      const ComplexVector r = hb_residual(x_hat, v_ac, i_dc);
      const double rn = r.cwiseAbs().maxCoeff();
      if (rn < 1e-11) {
        cache_trajectory();
        return;
      }
      if (!have_lu || (it % 6 == 5) || rn > 0.9 * prev_norm) {
        std::map<int, ComplexMatrix> a_k, b_k;
        sample_linearization(v_ac, i_dc, a_k, b_k);
        ComplexMatrix j = FrequencyShiftOperator(full_set_, nx_).to_matrix() -
                          toeplitz_from_series(a_k, full_set_).to_matrix();
        lu.compute(j);
        if (lu_pivot_ratio(lu) < 1e-14)
          throw std::runtime_error("AveragedNic: singular harmonic-balance Jacobian");
        have_lu = true;
      }
      x_hat -= lu.solve(r);
      prev_norm = rn;
    }
    throw std::runtime_error("AveragedNic: harmonic balance did not converge in " +
                             std::to_string(max_iter) + " iterations (residual " +
                             std::to_string(prev_norm) + ")");
  }

  ComplexVector cold_start(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) const {
    ComplexVector x = ComplexVector::Zero(static_cast<Eigen::Index>(full_set_.size()) * nx_);
    auto put = [&](int state, int h, Complex val) {
      x(static_cast<Eigen::Index>(full_set_.index_of(h)) * nx_ + state) = val;
    };
    const Complex s_est = cfg_.control == NicControl::pq
                              ? Complex{cfg_.setpoint.p_pu, cfg_.setpoint.q_pu}
                              : Complex{-(cfg_.setpoint.v_dc_pu * i_dc.at(0, 0)).real(),
                                        cfg_.setpoint.q_pu};
    for (int p = 0; p < 3; ++p) {
      const Complex v1 = v_ac.at(p, 1);
      const Complex i1 = std::conj(s_est) / (4.0 * std::conj(v1));
      put(kIc + p, 1, i1);
      put(kIc + p, -1, std::conj(i1));
      put(kIg + p, 1, i1);
      put(kIg + p, -1, std::conj(i1));
      put(kVcf + p, 1, v1);
      put(kVcf + p, -1, std::conj(v1));
    }
    put(kVdc, 0, cfg_.control == NicControl::vdc_q ? cfg_.setpoint.v_dc_pu : 1.0);
    const Complex vm0 = 2.0 * v_ac.at(0, 1);
    put(kVmD, 0, vm0.real());
    put(kVmQ, 0, vm0.imag());
    return x;
  }

  void cache_trajectory() {
    trajectory_.resize(nx_, collocation_n_);
    const double period = full_set_.period();
    for (int i = 0; i < collocation_n_; ++i)
      trajectory_.col(i) = synthesize_state(hb_x_, period * i / collocation_n_);
  }

  /// HTF of the model linearized along the solved trajectory, split into the
  /// four port blocks on the external harmonic sets.
  void build_port_maps(const VoltageSpectrum& v_ac, const CurrentSpectrum& i_dc) {
    std::map<int, ComplexMatrix> a_k, b_k;
    sample_linearization(v_ac, i_dc, a_k, b_k);
    LtpStateSpace lin(full_set_, nx_, 4, 4);
    for (auto& [k, m] : a_k) lin.set_a(k, std::move(m));
    for (auto& [k, m] : b_k) lin.set_b(k, std::move(m));
    ComplexMatrix c = ComplexMatrix::Zero(4, nx_);
    for (int p = 0; p < 3; ++p) c(p, kIg + p) = 1.0;
    c(3, kVdc) = 1.0;
    lin.set_c(0, std::move(c));
    const Htf htf = htf_from_ltp(lin);

    const Eigen::Index na = ac_dim(), nd = dc_dim();
    h_iv_ = ComplexMatrix::Zero(na, na);
    h_ii_ = ComplexMatrix::Zero(na, nd);
    h_vv_ = ComplexMatrix::Zero(nd, na);
    h_vi_ = ComplexMatrix::Zero(nd, nd);
    for (int ko = 0; ko < ac_set_.size(); ++ko)
      for (int ki = 0; ki < ac_set_.size(); ++ki)
        h_iv_.block(3 * ko, 3 * ki, 3, 3) =
            htf.block(ac_set_.order_at(ko), ac_set_.order_at(ki)).topLeftCorner(3, 3);
    for (int ko = 0; ko < ac_set_.size(); ++ko)
      for (int gi = 0; gi < dc_set_.size(); ++gi)
        h_ii_.block(3 * ko, gi, 3, 1) =
            htf.block(ac_set_.order_at(ko), dc_set_.order_at(gi)).topRightCorner(3, 1);
    for (int go = 0; go < dc_set_.size(); ++go)
      for (int ki = 0; ki < ac_set_.size(); ++ki)
        h_vv_.block(go, 3 * ki, 1, 3) =
            htf.block(dc_set_.order_at(go), ac_set_.order_at(ki)).bottomLeftCorner(1, 3);
    for (int go = 0; go < dc_set_.size(); ++go)
      for (int gi = 0; gi < dc_set_.size(); ++gi)
        h_vi_(go, gi) = htf.block(dc_set_.order_at(go), dc_set_.order_at(gi))(3, 3);
  }

  NicDeviceConfig cfg_;
  HarmonicSet full_set_;
  NicHardwareParams hw_;
  double omega0_ = 0.0, c_dc_pu_ = 0.0;
  double kp_i_ = 0.0, ki_i_ = 0.0, kp_v_ = 0.0, ki_v_ = 0.0, w_meas_ = 0.0;
  int nx_ = 0;
  int collocation_n_ = 0;

  ComplexVector hb_x_;
  Eigen::MatrixXd trajectory_;
  std::optional<VoltageSpectrum> op_v_ac_;
  std::optional<CurrentSpectrum> op_i_dc_;
  std::optional<CurrentSpectrum> op_i_ac_;
  std::optional<VoltageSpectrum> op_v_dc_;
  ComplexMatrix h_iv_, h_ii_, h_vv_, h_vi_;
};

inline std::unique_ptr<TwoPortResponse> build_nic_response(const NicDeviceConfig& cfg,
                                                           const HarmonicSet& ac_set,
                                                           const HarmonicSet& dc_set,
                                                           const Bases& bases) {
  if (cfg.tier == NicTier::averaged)
    return std::make_unique<AveragedNic>(cfg, ac_set, dc_set, bases);
  return std::make_unique<PowerBalanceNic>(cfg, ac_set, dc_set, bases);
}

}  // namespace hpf
