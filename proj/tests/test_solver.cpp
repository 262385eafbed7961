#include "hpf/solver.hpp"

#include "hpf/benchmark.hpp"
#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

using namespace hpf;

namespace {

StudyCase linear_two_node() {
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

  ResourceSpec load;
  load.node = "N2";
  load.type = ResourceType::impedance;
  load.p_kw = -20.0;
  study.resources.push_back(load);
  return study;
}

}  // namespace

TEST_CASE("a purely linear study converges in exactly one Newton iteration") {
  StudyCase study = linear_two_node();
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  REQUIRE(report.converged);
  REQUIRE(report.iterations == 1);
  REQUIRE(report.final_residual < 1e-10);
}

TEST_CASE("flat start is conjugate-symmetric and solves the unloaded grid") {
  StudyCase study = linear_two_node();
  study.resources.pop_back();                    // drop the load
  study.resources[0].v_spectrum = {{1, 1.0, 0.0}};  // flat source
  study.subsystems[0].line_charging = false;     // no charging current at no load
  Model model = build_model(study);
  HpfSolver solver(model);
  const RealVector x0 = solver.initialize();
  const ComplexVector xc = from_real_stacked(x0);
  // Pairs of orders mirror conjugately.
  const auto& sm = model.subs[0];
  for (int node : {0, 1})
    for (int p = 0; p < 3; ++p)
      for (int h : sm.set.orders()) {
        if (h < 0) continue;
        const Complex a = xc(solver.index_map().cidx(0, node, p, sm.set.index_of(h)));
        const Complex b = xc(solver.index_map().cidx(0, node, p, sm.set.index_of(-h)));
        REQUIRE(std::abs(a - std::conj(b)) < 1e-15);
      }
  solver.refresh_all(x0);
  REQUIRE(solver.assemble_mismatch(x0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("solved spectra stay conjugate-symmetric") {
  StudyCase study = build_small_hybrid(41);
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  REQUIRE(report.converged);
  for (const auto& node : report.nodes) {
    REQUIRE(node.v.is_conjugate_symmetric(1e-9));
    REQUIRE(node.i.is_conjugate_symmetric(1e-9));
  }
}

TEST_CASE("grid jacobian has no AC/DC cross coupling and the resource jacobian couples only at NICs") {
  StudyCase study = build_small_hybrid(8);
  Model model = build_model(study);
  HpfSolver solver(model);
  RealVector x = solver.initialize();
  solver.refresh_all(x);

  const IndexMap& imap = solver.index_map();
  // Subsystem 0 occupies the leading slots, subsystem 1 the rest.
  const auto& ac = model.subs[0];
  const Eigen::Index ac_span =
      2 * static_cast<Eigen::Index>(ac.sub.node_count()) * 3 * ac.set.size();

  const RealMatrix j_grd(solver.assemble_j_grd());
  REQUIRE(j_grd.topRightCorner(ac_span, j_grd.cols() - ac_span).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(j_grd.bottomLeftCorner(j_grd.rows() - ac_span, ac_span).cwiseAbs().maxCoeff() == 0.0);

  const RealMatrix j_rsc(solver.assemble_j_rsc(x));
  const auto& nic = model.nics[0];
  const Eigen::Index ac_base = 2 * imap.node_base(nic.ac_sub, nic.ac_node);
  const Eigen::Index ac_len = 2 * 3 * static_cast<Eigen::Index>(ac.set.size());
  const Eigen::Index dc_base = 2 * imap.node_base(nic.dc_sub, nic.dc_node);
  const Eigen::Index dc_len = 2 * static_cast<Eigen::Index>(model.subs[1].set.size());

  RealMatrix cross_ul = j_rsc.topRightCorner(ac_span, j_rsc.cols() - ac_span);
  cross_ul.block(ac_base, dc_base - ac_span, ac_len, dc_len).setZero();
  REQUIRE(cross_ul.cwiseAbs().maxCoeff() == 0.0);
  RealMatrix cross_ll = j_rsc.bottomLeftCorner(j_rsc.rows() - ac_span, ac_span);
  cross_ll.block(dc_base - ac_span, ac_base, dc_len, ac_len).setZero();
  REQUIRE(cross_ll.cwiseAbs().maxCoeff() == 0.0);

  // The NIC blocks themselves are populated.
  REQUIRE(j_rsc.block(ac_base, dc_base, ac_len, dc_len).cwiseAbs().maxCoeff() > 0.0);
  REQUIRE(j_rsc.block(dc_base, ac_base, dc_len, ac_len).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("analytic jacobian matches finite differences on small hybrid cases") {
  for (unsigned seed : {1u, 2u, 3u}) {
    StudyCase study = build_small_hybrid(seed);
    Model model = build_model(study);
    HpfSolver solver(model);
    RealVector x = solver.initialize();
    solver.refresh_all(x);
    std::mt19937 rng(seed + 100);
    std::uniform_real_distribution<double> uni(-1e-3, 1e-3);
    for (Eigen::Index k = 0; k < x.size(); ++k) x(k) += uni(rng);

    const RealMatrix j_fd = finite_difference_mismatch_jacobian(solver, x);
    const RealMatrix j_an = -RealMatrix(solver.assemble_jacobian(x));
    const double err = (j_fd - j_an).cwiseAbs().maxCoeff() / j_an.cwiseAbs().maxCoeff();
    REQUIRE(err < 1e-6);
  }
}

TEST_CASE("solution is invariant under node relabeling") {
  StudyCase study = build_small_hybrid(12);
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport base = solver.solve();
  REQUIRE(base.converged);

  // Reverse the AC node declaration order (branches still name the same).
  StudyCase shuffled = study;
  std::reverse(shuffled.subsystems[0].nodes.begin(), shuffled.subsystems[0].nodes.end());
  std::reverse(shuffled.subsystems[1].nodes.begin(), shuffled.subsystems[1].nodes.end());
  Model model2 = build_model(shuffled);
  HpfSolver solver2(model2);
  const SolveReport other = solver2.solve();
  REQUIRE(other.converged);

  for (const auto& a : base.nodes) {
    const auto it = std::find_if(other.nodes.begin(), other.nodes.end(), [&](const auto& b) {
      return b.subsystem == a.subsystem && b.node == a.node;
    });
    REQUIRE(it != other.nodes.end());
    REQUIRE((a.v.data() - it->v.data()).cwiseAbs().maxCoeff() < 1e-9);
    REQUIRE((a.i.data() - it->i.data()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("dense and sparse linear paths agree") {
  StudyCase study = build_small_hybrid(5);
  study.solver.linear_solver = LinearSolverKind::dense;
  Model m1 = build_model(study);
  const SolveReport dense = HpfSolver(m1).solve();
  study.solver.linear_solver = LinearSolverKind::sparse;
  Model m2 = build_model(study);
  const SolveReport sparse = HpfSolver(m2).solve();
  REQUIRE(dense.converged);
  REQUIRE(sparse.converged);
  REQUIRE((dense.x - sparse.x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("non-convergence names the worst residual location") {
  StudyCase study = build_small_hybrid(2);
  study.solver.max_iter = 1;
  study.solver.outer_max = 0;
  study.solver.tol = 1e-14;
  Model model = build_model(study);
  const SolveReport report = HpfSolver(model).solve();
  REQUIRE_FALSE(report.converged);
  REQUIRE(report.message.find("residual") != std::string::npos);
  REQUIRE(report.message.find('/') != std::string::npos);
}

TEST_CASE("a floating network yields a singular-jacobian diagnostic") {
  StudyCase study;
  study.solver.harmonic_order = 1;
  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"N1", "N2"};
  ac.line_types = {{"T1", {0.3, 0.4e-3, 0.0}, {}, {}}};
  ac.branches = {{"N1", "N2", 0.1, "T1"}};
  ac.line_charging = false;  // no path to ground anywhere
  study.subsystems.push_back(ac);
  for (const char* node : {"N1", "N2"}) {
    ResourceSpec src;
    src.node = node;
    src.type = ResourceType::current_source;
    src.p_kw = 1.0;
    study.resources.push_back(src);
  }
  Model model = build_model(study);
  const SolveReport report = HpfSolver(model).solve();
  REQUIRE_FALSE(report.converged);
}

TEST_CASE("index map round-trips slots and descriptions") {
  StudyCase study = build_small_hybrid(9);
  Model model = build_model(study);
  HpfSolver solver(model);
  const IndexMap& imap = solver.index_map();

  // Every node's block is contiguous and unique.
  std::vector<bool> seen(static_cast<std::size_t>(imap.complex_size()), false);
  for (int si = 0; si < static_cast<int>(model.subs.size()); ++si) {
    const auto& sm = model.subs[static_cast<std::size_t>(si)];
    for (int node = 0; node < sm.sub.node_count(); ++node) {
      for (int p = 0; p < sm.sub.phases(); ++p)
        for (int k = 0; k < sm.set.size(); ++k) {
          const Eigen::Index c = imap.cidx(si, node, p, k);
          REQUIRE_FALSE(seen[static_cast<std::size_t>(c)]);
          seen[static_cast<std::size_t>(c)] = true;
        }
    }
  }
  REQUIRE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

  // S-section of the first subsystem occupies the head of the vector.
  const auto& ac = model.subs[0];
  REQUIRE(imap.cidx(0, ac.part.s()[0], 0, 0) == 0);
  const std::string desc = imap.describe(model, 0);
  REQUIRE(desc.find("/I/") != std::string::npos);
}

TEST_CASE("damping still converges the benchmark-style nonlinearities") {
  StudyCase study = build_small_hybrid(14);
  study.solver.damping = 0.8;
  study.solver.max_iter = 40;
  Model model = build_model(study);
  const SolveReport report = HpfSolver(model).solve();
  REQUIRE(report.converged);
}
