#include "hpf/ltp.hpp"

#include "hpf/integrate.hpp"
#include "hpf/oracle.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace hpf;
using hpf_test::random_spectrum;

namespace {

LtpStateSpace first_order_lag(const HarmonicSet& set, double a) {
  LtpStateSpace sys(set, 1, 1, 1);
  sys.set_a(0, ComplexMatrix::Constant(1, 1, -a));
  sys.set_b(0, ComplexMatrix::Constant(1, 1, a));
  sys.set_c(0, ComplexMatrix::Identity(1, 1));
  return sys;
}

}  // namespace

TEST_CASE("htf of an LTI lag is diagonal with the scalar transfer function") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 4);
  const double a = 200.0;
  const Htf htf = htf_from_ltp(first_order_lag(set, a));
  REQUIRE(htf.max_offdiagonal_block() == 0.0);
  for (int h : set.orders()) {
    const Complex expected = a / (kJ * (h * set.omega0()) + a);
    REQUIRE(std::abs(htf.block(h, h)(0, 0) - expected) < 1e-14);
  }
}

TEST_CASE("a +-1 periodic component couples exactly the +-1 order neighbours") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 3);
  LtpStateSpace sys = first_order_lag(set, 150.0);
  sys.set_a(1, ComplexMatrix::Constant(1, 1, Complex{10.0, 4.0}));
  sys.set_a(-1, ComplexMatrix::Constant(1, 1, Complex{10.0, -4.0}));
  const Htf htf = htf_from_ltp(sys);
  for (int ho : set.orders())
    for (int hi : set.orders()) {
      const double mag = std::abs(htf.block(ho, hi)(0, 0));
      if (std::abs(ho - hi) <= 1) continue;
      // Coupling decays geometrically with the order distance but never
      // vanishes exactly; two steps away it must be far below one step away.
      const double near = std::abs(htf.block(hi + (ho > hi ? 1 : -1), hi)(0, 0));
      REQUIRE(mag < near);
    }
  // Immediate neighbours are genuinely coupled.
  REQUIRE(std::abs(htf.block(1, 0)(0, 0)) > 1e-3);
  REQUIRE(std::abs(htf.block(0, 1)(0, 0)) > 1e-3);
}

TEST_CASE("htf prediction matches the time-domain oracle on a random stable LTP system") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 6);

  LtpStateSpace sys(set, 2, 1, 2);
  ComplexMatrix a0(2, 2);
  a0 << -300.0, 40.0, -30.0, -260.0;
  sys.set_a(0, a0);
  ComplexMatrix a1(2, 2);
  a1 << Complex{25.0, 10.0}, Complex{0.0, 8.0}, Complex{-12.0, 3.0}, Complex{18.0, -6.0};
  sys.set_a(1, a1);
  sys.set_a(-1, a1.conjugate());
  ComplexMatrix b0(2, 1);
  b0 << 250.0, 60.0;
  sys.set_b(0, b0);
  sys.set_c(0, ComplexMatrix::Identity(2, 2));
  sys.validate();

  PhasorVector u(set, 1);
  u.set_pair(0, 1, Complex{0.5, -0.2});
  u.set_pair(0, 4, Complex{0.06, 0.03});

  const PhasorVector predicted = htf_from_ltp(sys).apply(u);

  SteadyStateOptions opt;
  opt.dt = 1.5e-5;
  opt.settle_tol = 1e-10;
  opt.max_time = 3.0;
  const LtpSimResult sim = ltp_steady_state_response(sys, u, opt);
  REQUIRE(sim.settled);
  const double scale = predicted.data().cwiseAbs().maxCoeff();
  REQUIRE((predicted.data() - sim.spectra.data()).cwiseAbs().maxCoeff() / scale < 1e-6);
}

TEST_CASE("resonant lifted operator reports the offending order") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 3);
  LtpStateSpace sys(set, 1, 1, 1);
  // A pure oscillator at exactly 2 w0 makes (N - A) singular at order 2.
  LtpStateSpace osc(set, 2, 1, 1);
  ComplexMatrix a(2, 2);
  const double w2 = 2.0 * set.omega0();
  a << 0.0, w2, -w2, 0.0;
  osc.set_a(0, a);
  osc.set_b(0, ComplexMatrix::Constant(2, 1, 1.0));
  osc.set_c(0, ComplexMatrix::Constant(1, 2, 1.0));
  REQUIRE_THROWS_WITH(htf_from_ltp(osc), Catch::Matchers::ContainsSubstring("order 2"));
}

TEST_CASE("truncation keeps LTI interior blocks unchanged when H grows") {
  const Htf small = htf_from_ltp(first_order_lag(HarmonicSet::dc_default(50.0, 3), 120.0));
  const Htf large = htf_from_ltp(first_order_lag(HarmonicSet::dc_default(50.0, 8), 120.0));
  for (int h = -3; h <= 3; ++h)
    REQUIRE(std::abs(small.block(h, h)(0, 0) - large.block(h, h)(0, 0)) == 0.0);
}

TEST_CASE("lcl ladder: DC gain follows the resistive divider") {
  NicHardwareParams p;
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 2);
  const LtpStateSpace sys = build_lcl_state_space(p, 1, set);
  // Steady state for constant inputs: x = -A^{-1} B u.
  const ComplexMatrix a = sys.a.at(0);
  const ComplexMatrix b = sys.b.at(0);
  const ComplexMatrix c = sys.c.at(0);
  ComplexVector u(2);
  u << 1.0, 0.4;  // v_bridge, v_grid
  const ComplexVector x = (-a).partialPivLu().solve(b * u);
  const ComplexVector y = c * x;
  const double i_expected = (1.0 - 0.4) / (p.r_conv + p.r_grid);
  REQUIRE(std::abs(y(0) - i_expected) < 1e-9 * i_expected);  // grid current
  REQUIRE(std::abs(y(1) - i_expected) < 1e-9 * i_expected);  // converter current
}

TEST_CASE("lcl ladder is strictly stable with positive parasitics") {
  NicHardwareParams p;
  const LtpStateSpace sys = build_lcl_state_space(p, 3, HarmonicSet::dc_default(50.0, 1));
  const Eigen::ComplexEigenSolver<ComplexMatrix> es(sys.a.at(0));
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    REQUIRE(es.eigenvalues()(i).real() < 0.0);
}

TEST_CASE("lcl frequency response matches the hand-built ladder network") {
  NicHardwareParams p;
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 2);
  const Htf htf = htf_from_ltp(build_lcl_state_space(p, 1, set));
  const double w = set.omega0();

  // Mesh solve of the ladder at w: v_b - Z_c i_c - Z_f (i_c - i_g) = 0 and
  // Z_f (i_c - i_g) - Z_g i_g - v_g = 0.
  const Complex z_c{p.r_conv, w * p.l_conv};
  const Complex z_g{p.r_grid, w * p.l_grid};
  const Complex z_f = p.r_filter + 1.0 / (kJ * w * p.c_filter);
  ComplexMatrix m(2, 2);
  m << z_c + z_f, -z_f, z_f, -(z_f + z_g);
  auto lu = m.partialPivLu();
  for (const auto& [vb, vg] : std::vector<std::pair<Complex, Complex>>{
           {{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 0.0}, {1.0, 0.0}}, {{0.4, 0.3}, {-0.2, 0.9}}}) {
    ComplexVector rhs(2);
    rhs << vb, vg;
    const ComplexVector mesh = lu.solve(rhs);
    ComplexVector u(2);
    u << vb, vg;
    const ComplexVector y = htf.block(1, 1) * u;
    REQUIRE(std::abs(y(0) - mesh(1)) < 1e-9);  // grid-side current
    REQUIRE(std::abs(y(1) - mesh(0)) < 1e-9);  // converter-side current
  }
}

TEST_CASE("dc link integrates its net current") {
  const double c_dc = 2e-3;
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 1);
  const LtpStateSpace sys = build_dclink_state_space(c_dc, set);

  // Zero net current keeps the voltage constant; a constant current ramps it.
  auto f = [&](double t, const RealVector& x) -> RealVector {
    RealVector u(1);
    u << 0.0;
    return sys.a_at(t) * x + sys.b_at(t) * u;
  };
  RealVector x(1);
  x << 0.8;
  for (int i = 0; i < 100; ++i) x = rk4_step(f, 0.0, x, 1e-4);
  REQUIRE(x(0) == Catch::Approx(0.8).margin(1e-12));

  auto f_const = [&](double t, const RealVector& x_) -> RealVector {
    RealVector u(1);
    u << 0.5;
    return sys.a_at(t) * x_ + sys.b_at(t) * u;
  };
  x << 0.0;
  double t = 0.0;
  for (int i = 0; i < 1000; ++i, t += 1e-5) x = rk4_step(f_const, t, x, 1e-5);
  REQUIRE(x(0) == Catch::Approx(0.5 * t / c_dc).epsilon(1e-8));
}

TEST_CASE("dc link ripple gain at order six matches the integrator magnitude") {
  const double c_dc = 2e-3;
  // The set excludes order zero; the pure integrator is resonant there.
  const HarmonicSet set = HarmonicSet::ac_default(50.0, 6);
  const Htf htf = htf_from_ltp(build_dclink_state_space(c_dc, set));
  const double expected = 1.0 / (6.0 * set.omega0() * c_dc);
  REQUIRE(std::abs(htf.block(6, 6)(0, 0)) == Catch::Approx(expected).epsilon(1e-12));

  const HarmonicSet with_dc = HarmonicSet::dc_default(50.0, 2);
  REQUIRE_THROWS_WITH(htf_from_ltp(build_dclink_state_space(c_dc, with_dc)),
                      Catch::Matchers::ContainsSubstring("order 0"));
}

TEST_CASE("interconnect with a zero controller returns the plant") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 3);
  const Htf plant = htf_from_ltp(first_order_lag(set, 80.0));
  const Htf zero = static_htf(set, ComplexMatrix::Zero(1, 1));
  const Htf closed = interconnect(plant, zero);
  REQUIRE((closed.m - plant.m).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("interconnect reproduces the classic scalar feedback formula") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 3);
  const double a = 80.0, k = 2.5;
  const Htf plant = htf_from_ltp(first_order_lag(set, a));
  const Htf gain = static_htf(set, ComplexMatrix::Constant(1, 1, k));
  const Htf closed = interconnect(plant, gain);
  for (int h : set.orders()) {
    const Complex g = a / (kJ * (h * set.omega0()) + a);
    REQUIRE(std::abs(closed.block(h, h)(0, 0) - g / (1.0 + k * g)) < 1e-13);
  }
}

TEST_CASE("interconnect flags algebraic-loop singularities") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 1);
  const Htf plant = static_htf(set, ComplexMatrix::Identity(1, 1));
  const Htf unity = static_htf(set, ComplexMatrix::Identity(1, 1));
  // Positive unit feedback around a unit plant makes (I - PC) = 0.
  FeedbackMap fb;
  fb.sign = 1.0;
  REQUIRE_THROWS_WITH(interconnect(plant, unity, fb),
                      Catch::Matchers::ContainsSubstring("algebraic-loop"));
}

TEST_CASE("closed-loop htf matches a coupled time-domain integration") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 5);
  // Plant with D = 0 so the loop closes without an algebraic path.
  LtpStateSpace plant(set, 2, 1, 1);
  ComplexMatrix ap(2, 2);
  ap << -180.0, 60.0, -40.0, -220.0;
  plant.set_a(0, ap);
  ComplexMatrix a1(2, 2);
  a1 << Complex{12.0, 6.0}, 0.0, Complex{4.0, -2.0}, Complex{8.0, 0.0};
  plant.set_a(1, a1);
  plant.set_a(-1, a1.conjugate());
  plant.set_b(0, (ComplexMatrix(2, 1) << 200.0, 30.0).finished());
  plant.set_c(0, (ComplexMatrix(1, 2) << 1.0, 0.2).finished());

  LtpStateSpace ctrl(set, 1, 1, 1);
  ctrl.set_a(0, ComplexMatrix::Constant(1, 1, -90.0));
  ctrl.set_b(0, ComplexMatrix::Constant(1, 1, 90.0));
  ctrl.set_c(0, ComplexMatrix::Constant(1, 1, 0.8));

  const Htf closed = interconnect(htf_from_ltp(plant), htf_from_ltp(ctrl));

  PhasorVector u(set, 1);
  u.set_pair(0, 1, Complex{0.5, 0.1});
  u.set_pair(0, 3, Complex{0.08, -0.04});
  const PhasorVector predicted = closed.apply(u);

  // Co-integration of the coupled ODEs with u_plant = u - C(y).
  const int nx = plant.nx + ctrl.nx;
  auto f = [&](double t, const RealVector& x) -> RealVector {
    const RealVector xp = x.head(plant.nx);
    const RealVector xc = x.tail(ctrl.nx);
    RealVector uv(1);
    uv << u.evaluate(0, t);
    const RealVector y = plant.c_at(t) * xp;
    const RealVector u_pl = uv - ctrl.c_at(t) * xc;
    RealVector dx(nx);
    dx.head(plant.nx) = plant.a_at(t) * xp + plant.b_at(t) * u_pl;
    dx.tail(ctrl.nx) = ctrl.a_at(t) * xc + ctrl.b_at(t) * y;
    return dx;
  };
  auto g = [&](double t, const RealVector& x) -> RealVector {
    return plant.c_at(t) * x.head(plant.nx);
  };
  SteadyStateOptions opt;
  opt.dt = 1.5e-5;
  opt.settle_tol = 1e-10;
  opt.max_time = 3.0;
  const auto sim = integrate_to_steady_state(f, g, RealVector::Zero(nx), set, 1, opt);
  REQUIRE(sim.settled);
  const double scale = predicted.data().cwiseAbs().maxCoeff();
  REQUIRE((predicted.data() - sim.spectra.data()).cwiseAbs().maxCoeff() / scale < 1e-6);
}

TEST_CASE("state-space validation rejects broken conjugate symmetry") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 2);
  LtpStateSpace sys(set, 1, 1, 1);
  sys.set_a(0, ComplexMatrix::Constant(1, 1, -10.0));
  sys.set_a(1, ComplexMatrix::Constant(1, 1, Complex{1.0, 2.0}));
  sys.set_b(0, ComplexMatrix::Identity(1, 1));
  sys.set_c(0, ComplexMatrix::Identity(1, 1));
  REQUIRE_THROWS_AS(sys.validate(), std::invalid_argument);
  sys.set_a(-1, ComplexMatrix::Constant(1, 1, Complex{1.0, -2.0}));
  REQUIRE_NOTHROW(sys.validate());
}

TEST_CASE("hardware parameter validation") {
  NicHardwareParams p;
  p.l_conv = 0.0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
  p = NicHardwareParams{};
  p.r_filter = -1.0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
}
