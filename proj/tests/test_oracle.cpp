#include "hpf/oracle.hpp"

#include "hpf/benchmark.hpp"
#include "hpf/solver.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hpf;

namespace {

std::vector<NodeSpectra> solve_study(StudyCase study) {
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  REQUIRE(report.converged);
  return report.nodes;
}

}  // namespace

TEST_CASE("kpi of a solution against itself is identically zero") {
  const auto nodes = solve_study(build_small_hybrid(4));
  const KpiReport report = kpi(nodes, nodes);
  REQUIRE(report.max_e_abs_v() == 0.0);
  REQUIRE(report.max_e_abs_i() == 0.0);
  REQUIRE(report.max_e_arg() == 0.0);
}

TEST_CASE("kpi picks up a single-phase magnitude perturbation") {
  auto ref = solve_study(build_small_hybrid(4));
  auto test = ref;
  // Bump one phase of one AC node at order 1 by 1e-4 single-sided.
  for (auto& n : test)
    if (n.subsystem == "ac" && n.node == "A2") {
      const Complex x = n.v.at(1, 1);
      n.v.set(1, 1, x * (1.0 + 0.5e-4 / std::abs(x)));
      n.v.set(1, -1, std::conj(n.v.at(1, 1)));
    }
  const KpiReport report = kpi(ref, test);
  double found = 0.0;
  for (const auto& e : report.entries)
    if (e.node == "A2" && e.order == 1) found = e.e_abs_v;
  REQUIRE(found == Catch::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("kpi angle errors wrap to the principal branch") {
  auto ref = solve_study(build_small_hybrid(4));
  auto test = ref;
  for (auto& n : test)
    if (n.subsystem == "ac" && n.node == "A2")
      for (int p = 0; p < 3; ++p) {
        const double mag = std::abs(n.v.at(p, 1));
        n.v.set(p, 1, mag * std::exp(kJ * 3.1));
        n.v.set(p, -1, std::conj(n.v.at(p, 1)));
      }
  for (auto& n : ref)
    if (n.subsystem == "ac" && n.node == "A2")
      for (int p = 0; p < 3; ++p) {
        const double mag = std::abs(n.v.at(p, 1));
        n.v.set(p, 1, mag * std::exp(kJ * -3.1));
        n.v.set(p, -1, std::conj(n.v.at(p, 1)));
      }
  const KpiReport report = kpi(ref, test);
  double found = 0.0;
  for (const auto& e : report.entries)
    if (e.node == "A2" && e.order == 1 && e.e_arg_v) found = *e.e_arg_v;
  REQUIRE(found == Catch::Approx(2.0 * kPi - 6.2).epsilon(1e-9));
}

TEST_CASE("kpi skips angles below the magnitude floor") {
  auto ref = solve_study(build_small_hybrid(4));
  auto test = ref;
  const KpiReport report = kpi(ref, test, /*floor=*/1e30);
  for (const auto& e : report.entries) {
    REQUIRE_FALSE(e.e_arg_v.has_value());
    REQUIRE_FALSE(e.e_arg_i.has_value());
  }
}

TEST_CASE("kpi rejects mismatched node sets") {
  auto ref = solve_study(build_small_hybrid(4));
  auto test = ref;
  test[0].node = "GHOST";
  REQUIRE_THROWS_AS(kpi(ref, test), std::invalid_argument);
}

TEST_CASE("fundamental oracle reproduces a hand-solvable voltage divider") {
  StudyCase study;
  study.solver.harmonic_order = 1;
  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"N1", "N2"};
  ac.line_types = {{"T", {1.0, 0.5e-3, 0.0}, {}, {}}};
  ac.branches = {{"N1", "N2", 0.2, "T"}};
  ac.line_charging = false;
  study.subsystems.push_back(ac);

  ResourceSpec te;
  te.node = "N1";
  te.type = ResourceType::thevenin;
  te.v_spectrum = {{1, 1.0, 0.0}};
  te.z_sc_mohm = 10.0;
  te.r_x_ratio = 0.1;
  study.resources.push_back(te);

  ResourceSpec z;
  z.node = "N2";
  z.type = ResourceType::impedance;
  z.p_kw = -20.0;
  study.resources.push_back(z);

  const FundamentalSolution sol = fundamental_powerflow_oracle(study);
  REQUIRE(sol.converged);

  // Hand solution: V2 = V_TE Zl / (Z_sc + Z_line + Zl) with Zl = 1 / 0.4 pu.
  const Bases bases;
  const double x_sc = 10e-3 / std::sqrt(1.0 + 0.1 * 0.1);
  const Complex z_sc = Complex{0.1 * x_sc, x_sc} / bases.z_ac();
  const Complex z_line = Complex{0.2, bases.omega0() * 0.5e-3 * 0.2} / bases.z_ac();
  const Complex z_load = 1.0 / 0.4;
  const Complex v2 = z_load / (z_sc + z_line + z_load);
  for (const auto& n : sol.nodes)
    if (n.node == "N2") {
      const Complex got = 2.0 * n.v.at(0, 1);
      REQUIRE(std::abs(got - v2) < 1e-12);
    }
  REQUIRE(sol.power_mismatch < 1e-10);
}

TEST_CASE("fundamental oracle agrees with the Newton HPF at the fundamental") {
  StudyCase study = build_cigre_benchmark();
  study.solver.harmonic_order = 3;  // keep the cross-check quick
  study.solver.tol = 1e-12;
  for (auto& r : study.resources)
    if (r.type == ResourceType::thevenin) r.v_spectrum = {{1, 1.0, 0.0}};

  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  REQUIRE(report.converged);

  const FundamentalSolution oracle = fundamental_powerflow_oracle(study);
  REQUIRE(oracle.converged);
  REQUIRE(oracle.power_mismatch < 1e-10);

  const KpiReport k = kpi(oracle.nodes, report.nodes);
  REQUIRE(k.max_e_abs_v() < 1e-8);
  REQUIRE(k.max_e_abs_i() < 1e-8);
}

TEST_CASE("fixed point matches Newton on a linear study") {
  StudyCase study;
  study.solver.harmonic_order = 5;
  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"N1", "N2"};
  ac.line_types = {{"T1", {0.3, 0.4e-3, 100e-9}, {}, {}}};
  ac.branches = {{"N1", "N2", 0.1, "T1"}};
  study.subsystems.push_back(ac);
  ResourceSpec te;
  te.node = "N1";
  te.type = ResourceType::thevenin;
  te.v_spectrum = {{1, 1.0, 0.0}, {5, 0.06, kPi / 8}};
  te.z_sc_mohm = 16.3;
  te.r_x_ratio = 0.125;
  study.resources.push_back(te);
  ResourceSpec z;
  z.node = "N2";
  z.type = ResourceType::impedance;
  z.p_kw = -20.0;
  study.resources.push_back(z);

  Model m1 = build_model(study);
  const SolveReport newton = HpfSolver(m1).solve();
  Model m2 = build_model(study);
  const FixedPointResult fp = fixed_point_hpf(m2, 1e-12, 500);
  REQUIRE(newton.converged);
  REQUIRE(fp.converged);
  REQUIRE((newton.x - fp.x).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fixed point agrees with Newton on a hybrid case") {
  StudyCase study = build_small_hybrid(6);
  Model m1 = build_model(study);
  const SolveReport newton = HpfSolver(m1).solve();
  REQUIRE(newton.converged);
  Model m2 = build_model(study);
  const FixedPointResult fp = fixed_point_hpf(m2, 1e-11, 2000);
  REQUIRE(fp.converged);
  REQUIRE((newton.x - fp.x).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("fixed point divergence guard triggers on an overloaded feeder") {
  StudyCase study;
  study.solver.harmonic_order = 1;
  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"N1", "N2"};
  ac.line_types = {{"T", {3.3, 0.45e-3, 150e-9}, {}, {}}};
  ac.branches = {{"N1", "N2", 1.0, "T"}};  // a full km of weak line
  study.subsystems.push_back(ac);
  ResourceSpec te;
  te.node = "N1";
  te.type = ResourceType::thevenin;
  te.v_spectrum = {{1, 1.0, 0.0}};
  te.z_sc_mohm = 16.3;
  te.r_x_ratio = 0.125;
  study.resources.push_back(te);
  ResourceSpec pq;
  pq.node = "N2";
  pq.type = ResourceType::constant_power;
  pq.p_kw = -45.0;  // alternation gain above one
  study.resources.push_back(pq);

  Model model = build_model(study);
  const FixedPointResult fp = fixed_point_hpf(model, 1e-11, 400);
  REQUIRE_FALSE(fp.converged);
  REQUIRE(fp.diverged);
}

TEST_CASE("time-domain oracle spectra are conjugate-symmetric") {
  const HarmonicSet set = HarmonicSet::dc_default(50.0, 4);
  LtpStateSpace sys(set, 1, 1, 1);
  sys.set_a(0, ComplexMatrix::Constant(1, 1, -150.0));
  sys.set_b(0, ComplexMatrix::Constant(1, 1, 150.0));
  sys.set_c(0, ComplexMatrix::Identity(1, 1));
  PhasorVector u(set, 1);
  u.set_pair(0, 1, Complex{0.4, 0.2});
  u.set_pair(0, 3, Complex{0.1, -0.05});
  SteadyStateOptions opt;
  opt.dt = 2e-5;
  opt.settle_tol = 1e-9;
  const LtpSimResult sim = ltp_steady_state_response(sys, u, opt);
  REQUIRE(sim.settled);
  REQUIRE(sim.spectra.is_conjugate_symmetric(1e-9));
}
