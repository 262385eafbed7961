#pragma once

#include "hpf/harmonic.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

/// State-space model dx/dt = A(t)x + B(t)u, y = C(t)x + D(t)u with
/// T-periodic real coefficient matrices given by their Fourier series.
/// An LTI system carries only the k = 0 coefficients.
struct LtpStateSpace {
  HarmonicSet set;
  int nx = 0, nu = 0, ny = 0;
  std::map<int, ComplexMatrix> a, b, c, d;

  LtpStateSpace(HarmonicSet hs, int nx_, int nu_, int ny_)
      : set(std::move(hs)), nx(nx_), nu(nu_), ny(ny_) {
    if (nx < 1 || nu < 1 || ny < 1)
      throw std::invalid_argument("LtpStateSpace: dimensions must be positive");
  }

  void set_a(int k, ComplexMatrix m) { put(a, k, std::move(m), nx, nx, "A"); }
  void set_b(int k, ComplexMatrix m) { put(b, k, std::move(m), nx, nu, "B"); }
  void set_c(int k, ComplexMatrix m) { put(c, k, std::move(m), ny, nx, "C"); }
  void set_d(int k, ComplexMatrix m) { put(d, k, std::move(m), ny, nu, "D"); }

  /// Checks the real-valuedness symmetry M_{-k} = conj(M_k) of every series.
  void validate(double tol = 1e-9) const {
    check_real(a, tol, "A");
    check_real(b, tol, "B");
    check_real(c, tol, "C");
    check_real(d, tol, "D");
  }

  RealMatrix a_at(double t) const { return eval(a, t, nx, nx); }
  RealMatrix b_at(double t) const { return eval(b, t, nx, nu); }
  RealMatrix c_at(double t) const { return eval(c, t, ny, nx); }
  RealMatrix d_at(double t) const { return eval(d, t, ny, nu); }

 private:
  static void put(std::map<int, ComplexMatrix>& dst, int k, ComplexMatrix m, int rows, int cols,
                  const char* name) {
    if (m.rows() != rows || m.cols() != cols)
      throw std::invalid_argument(std::string("LtpStateSpace: ") + name + "_" +
                                  std::to_string(k) + " has wrong dimensions");
    dst[k] = std::move(m);
  }

  static void check_real(const std::map<int, ComplexMatrix>& s, double tol, const char* name) {
    for (const auto& [k, m] : s) {
      auto it = s.find(-k);
      const ComplexMatrix mirror =
          it != s.end() ? it->second : ComplexMatrix::Zero(m.rows(), m.cols());
      if ((mirror - m.conjugate()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument(std::string("LtpStateSpace: ") + name +
                                    " series violates real-signal symmetry at k = " +
                                    std::to_string(k));
    }
  }

  RealMatrix eval(const std::map<int, ComplexMatrix>& s, double t, int rows, int cols) const {
    ComplexMatrix m = ComplexMatrix::Zero(rows, cols);
    for (const auto& [k, mk] : s) m += mk * std::exp(kJ * (k * set.omega0() * t));
    return m.real();
  }
};

/// Frequency-coupled steady-state map of an LTP system on the retained
/// harmonic grid: block (h, h') sends input coefficients of order h' to
/// output coefficients of order h. Order-major block stacking throughout.
struct Htf {
  HarmonicSet set;
  int ny = 0, nu = 0;
  ComplexMatrix m;

  Htf(HarmonicSet hs, int ny_, int nu_)
      : set(std::move(hs)), ny(ny_), nu(nu_),
        m(ComplexMatrix::Zero(static_cast<Eigen::Index>(set.size()) * ny_,
                              static_cast<Eigen::Index>(set.size()) * nu_)) {}

  Eigen::Block<const ComplexMatrix> block(int h_out, int h_in) const {
    return m.block(static_cast<Eigen::Index>(set.index_of(h_out)) * ny,
                   static_cast<Eigen::Index>(set.index_of(h_in)) * nu, ny, nu);
  }

  ComplexVector apply(const ComplexVector& u) const {
    if (u.size() != m.cols()) throw std::invalid_argument("Htf: input length mismatch");
    return m * u;
  }

  PhasorVector apply(const PhasorVector& u) const {
    if (u.phases() != nu || u.harmonic_set() != set)
      throw std::invalid_argument("Htf: phasor shape mismatch");
    PhasorVector y(set, ny);
    y.data() = m * u.data();
    return y;
  }

  double max_offdiagonal_block() const {
    double v = 0.0;
    for (int i = 0; i < set.size(); ++i)
      for (int j = 0; j < set.size(); ++j) {
        if (i == j) continue;
        v = std::max(v, m.block(static_cast<Eigen::Index>(i) * ny,
                                static_cast<Eigen::Index>(j) * nu, ny, nu)
                            .cwiseAbs()
                            .maxCoeff());
      }
    return v;
  }
};

namespace detail {

/// Best-effort diagnostic: the retained order whose lifted diagonal block
/// (j h w0 I - A_0) is closest to singular.
inline int nearest_resonant_order(const LtpStateSpace& sys) {
  ComplexMatrix a0 = ComplexMatrix::Zero(sys.nx, sys.nx);
  if (auto it = sys.a.find(0); it != sys.a.end()) a0 = it->second;
  Eigen::ComplexEigenSolver<ComplexMatrix> es(a0, false);
  int worst = 0;
  double best = std::numeric_limits<double>::max();
  for (int h : sys.set.orders())
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double gap = std::abs(kJ * (h * sys.set.omega0()) - es.eigenvalues()(i));
      const double tie = 1e-9 * sys.set.omega0();
      if (gap < best - tie || (gap < best + tie && h > worst)) {
        best = std::min(gap, best);
        worst = h;
      }
    }
  return worst;
}

}  // namespace detail

/// Harmonic transfer function of an LTP system:
/// HTF = C~ (N - A~)^{-1} B~ + D~ with N the frequency-shift operator and
/// M~ the Toeplitz liftings of the coefficient series.
inline Htf htf_from_ltp(const LtpStateSpace& sys) {
  const ComplexMatrix a_lift = toeplitz_from_series(
      sys.a.empty() ? std::map<int, ComplexMatrix>{{0, ComplexMatrix::Zero(sys.nx, sys.nx)}}
                    : sys.a,
      sys.set).to_matrix();
  const ComplexMatrix b_lift = toeplitz_from_series(
      sys.b.empty() ? std::map<int, ComplexMatrix>{{0, ComplexMatrix::Zero(sys.nx, sys.nu)}}
                    : sys.b,
      sys.set).to_matrix();
  const ComplexMatrix c_lift = toeplitz_from_series(
      sys.c.empty() ? std::map<int, ComplexMatrix>{{0, ComplexMatrix::Zero(sys.ny, sys.nx)}}
                    : sys.c,
      sys.set).to_matrix();

  ComplexMatrix lifted = FrequencyShiftOperator(sys.set, sys.nx).to_matrix() - a_lift;
  Eigen::PartialPivLU<ComplexMatrix> lu(lifted);
  if (lu_pivot_ratio(lu) < 1e-13)
    throw std::runtime_error("htf_from_ltp: resonance at lifted frequency, harmonic order " +
                             std::to_string(detail::nearest_resonant_order(sys)));

  Htf htf(sys.set, sys.ny, sys.nu);
  htf.m = c_lift * lu.solve(b_lift);
  if (!sys.d.empty()) htf.m += toeplitz_from_series(sys.d, sys.set).to_matrix();
  return htf;
}

/// Static (order-diagonal) HTF from a constant gain matrix.
inline Htf static_htf(const HarmonicSet& set, const ComplexMatrix& gain) {
  Htf htf(set, static_cast<int>(gain.rows()), static_cast<int>(gain.cols()));
  for (int k = 0; k < set.size(); ++k)
    htf.m.block(static_cast<Eigen::Index>(k) * htf.ny, static_cast<Eigen::Index>(k) * htf.nu,
                htf.ny, htf.nu) = gain;
  return htf;
}

/// Feedback interconnection y = P (u_exo + sign * S_cp * C * S_pc * y).
/// Empty selectors mean identity (dimensions must then agree).
struct FeedbackMap {
  double sign = -1.0;
  ComplexMatrix plant_output_to_controller_input;  // C.nu x P.ny
  ComplexMatrix controller_output_to_plant_input;  // P.nu x C.ny
};

inline Htf interconnect(const Htf& plant, const Htf& controller, const FeedbackMap& fb = {}) {
  if (plant.set != controller.set)
    throw std::invalid_argument("interconnect: harmonic sets differ");
  ComplexMatrix s_pc = fb.plant_output_to_controller_input;
  if (s_pc.size() == 0) {
    if (controller.nu != plant.ny)
      throw std::invalid_argument("interconnect: plant output / controller input mismatch");
    s_pc = ComplexMatrix::Identity(controller.nu, plant.ny);
  }
  ComplexMatrix s_cp = fb.controller_output_to_plant_input;
  if (s_cp.size() == 0) {
    if (plant.nu != controller.ny)
      throw std::invalid_argument("interconnect: controller output / plant input mismatch");
    s_cp = ComplexMatrix::Identity(plant.nu, controller.ny);
  }

  const ComplexMatrix loop = plant.m * static_htf(plant.set, s_cp).m * controller.m *
                             static_htf(plant.set, s_pc).m;
  ComplexMatrix closing = ComplexMatrix::Identity(loop.rows(), loop.cols()) - fb.sign * loop;
  Eigen::PartialPivLU<ComplexMatrix> lu(closing);
  if (lu_pivot_ratio(lu) < 1e-13)
    throw std::runtime_error("interconnect: algebraic-loop singularity closing the feedback");

  Htf closed(plant.set, plant.ny, plant.nu);
  closed.m = lu.solve(plant.m);
  return closed;
}

/// Power hardware of a converter: LCL filter on the AC side plus a DC-link
/// capacitor. Values are in whatever unit system the caller works in; the
/// per-unit scaling helpers below produce time-constant form parameters.
struct NicHardwareParams {
  double l_conv = 0.5e-3;   // converter-side inductance
  double l_grid = 0.2e-3;   // grid-side inductance
  double c_filter = 10e-6;  // AC filter capacitance
  double r_conv = 10e-3;
  double r_grid = 10e-3;
  double r_filter = 0.1;
  double c_dc = 2e-3;       // DC-link capacitance

  void validate() const {
    if (l_conv <= 0 || l_grid <= 0 || c_filter <= 0 || c_dc <= 0)
      throw std::invalid_argument("NicHardwareParams: L and C values must be positive");
    if (r_conv < 0 || r_grid < 0 || r_filter < 0)
      throw std::invalid_argument("NicHardwareParams: parasitics must be non-negative");
  }

  bool operator==(const NicHardwareParams&) const = default;

  /// AC-side elements scaled to per-unit time-constant form (L/Z, C*Z, R/Z).
  NicHardwareParams ac_scaled(double z_base_ac) const {
    NicHardwareParams p = *this;
    p.l_conv /= z_base_ac;
    p.l_grid /= z_base_ac;
    p.c_filter *= z_base_ac;
    p.r_conv /= z_base_ac;
    p.r_grid /= z_base_ac;
    p.r_filter /= z_base_ac;
    return p;
  }
};

/// LCL ladder per phase, replicated over `phases` identical phases.
/// States per phase: converter-side inductor current, filter capacitor
/// voltage, grid-side (injected) current. Inputs: bridge voltages then grid
/// voltages. Outputs: grid-injected currents then converter-side currents.
inline LtpStateSpace build_lcl_state_space(const NicHardwareParams& p, int phases,
                                           const HarmonicSet& set) {
  p.validate();
  LtpStateSpace sys(set, 3 * phases, 2 * phases, 2 * phases);
  ComplexMatrix a = ComplexMatrix::Zero(sys.nx, sys.nx);
  ComplexMatrix b = ComplexMatrix::Zero(sys.nx, sys.nu);
  ComplexMatrix c = ComplexMatrix::Zero(sys.ny, sys.nx);
  for (int ph = 0; ph < phases; ++ph) {
    const int ic = 3 * ph, vf = 3 * ph + 1, ig = 3 * ph + 2;
    a(ic, ic) = -(p.r_conv + p.r_filter) / p.l_conv;
    a(ic, vf) = -1.0 / p.l_conv;
    a(ic, ig) = p.r_filter / p.l_conv;
    a(vf, ic) = 1.0 / p.c_filter;
    a(vf, ig) = -1.0 / p.c_filter;
    a(ig, ic) = p.r_filter / p.l_grid;
    a(ig, vf) = 1.0 / p.l_grid;
    a(ig, ig) = -(p.r_grid + p.r_filter) / p.l_grid;
    b(ic, ph) = 1.0 / p.l_conv;           // bridge voltage
    b(ig, phases + ph) = -1.0 / p.l_grid;  // grid voltage
    c(ph, ig) = 1.0;
    c(phases + ph, ic) = 1.0;
  }
  sys.set_a(0, std::move(a));
  sys.set_b(0, std::move(b));
  sys.set_c(0, std::move(c));
  sys.set_d(0, ComplexMatrix::Zero(sys.ny, sys.nu));
  return sys;
}

/// DC-link capacitor: C dv/dt = i_net, output v.
inline LtpStateSpace build_dclink_state_space(double c_dc, const HarmonicSet& set) {
  if (c_dc <= 0) throw std::invalid_argument("build_dclink_state_space: C_dc must be positive");
  LtpStateSpace sys(set, 1, 1, 1);
  sys.set_a(0, ComplexMatrix::Zero(1, 1));
  sys.set_b(0, ComplexMatrix::Constant(1, 1, 1.0 / c_dc));
  sys.set_c(0, ComplexMatrix::Identity(1, 1));
  sys.set_d(0, ComplexMatrix::Zero(1, 1));
  return sys;
}

}  // namespace hpf
