// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.

#include "hpf/benchmark.hpp"
#include "hpf/cosim.hpp"
#include "hpf/io.hpp"
#include "hpf/oracle.hpp"
#include "hpf/solver.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace hpf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --------------------------------------------------------------------------
// 1. Block-structure fidelity on the built benchmark.
// --------------------------------------------------------------------------

struct NodeSpan {
  int sub = 0, node = 0;
  Eigen::Index begin = 0, end = 0;  // real-stacked range
};

std::vector<NodeSpan> node_spans(const Model& model, const IndexMap& imap) {
  std::vector<NodeSpan> spans;
  for (int si = 0; si < static_cast<int>(model.subs.size()); ++si) {
    const auto& sm = model.subs[static_cast<std::size_t>(si)];
    for (int n = 0; n < sm.sub.node_count(); ++n) {
      const Eigen::Index b = 2 * imap.node_base(si, n);
      spans.push_back({si, n, b, b + 2 * static_cast<Eigen::Index>(sm.set.size()) *
                                         sm.sub.phases()});
    }
  }
  return spans;
}

const NodeSpan& locate_span(const std::vector<NodeSpan>& spans, Eigen::Index idx) {
  for (const auto& s : spans)
    if (idx >= s.begin && idx < s.end) return s;
  throw std::logic_error("index outside every node span");
}

Outcome criterion_block_structure() {
  StudyCase study = build_cigre_benchmark();
  Model model = build_model(study);
  HpfSolver solver(model);
  RealVector x = solver.initialize();
  solver.refresh_all(x);
  const auto spans = node_spans(model, solver.index_map());

  // J_GRD must never couple different subsystems.
  const Eigen::SparseMatrix<double> j_grd = solver.assemble_j_grd();
  for (int k = 0; k < j_grd.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(j_grd, k); it; ++it) {
      if (it.value() == 0.0) continue;
      if (locate_span(spans, it.row()).sub != locate_span(spans, it.col()).sub)
        return {false, "J_GRD couples AC and DC at (" + std::to_string(it.row()) + "," +
                           std::to_string(it.col()) + ")"};
    }

  // J_RSC entries live on single-port node diagonals or NIC port pairs.
  const Eigen::SparseMatrix<double> j_rsc = solver.assemble_j_rsc(x);
  auto nic_pair = [&](const NodeSpan& r, const NodeSpan& c) {
    for (const auto& nic : model.nics) {
      const bool row_ac = r.sub == nic.ac_sub && r.node == nic.ac_node;
      const bool row_dc = r.sub == nic.dc_sub && r.node == nic.dc_node;
      const bool col_ac = c.sub == nic.ac_sub && c.node == nic.ac_node;
      const bool col_dc = c.sub == nic.dc_sub && c.node == nic.dc_node;
      if ((row_ac || row_dc) && (col_ac || col_dc)) return true;
    }
    return false;
  };
  for (int k = 0; k < j_rsc.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(j_rsc, k); it; ++it) {
      if (it.value() == 0.0) continue;
      const auto& r = locate_span(spans, it.row());
      const auto& c = locate_span(spans, it.col());
      const bool diagonal = r.sub == c.sub && r.node == c.node;
      if (!diagonal && !nic_pair(r, c))
        return {false, "J_RSC entry outside the allowed blocks at (" +
                           std::to_string(it.row()) + "," + std::to_string(it.col()) + ")"};
    }

  // The NIC coupling blocks are populated.
  const RealMatrix dense(j_rsc);
  for (const auto& nic : model.nics) {
    const auto& imap = solver.index_map();
    const auto& ac = model.subs[static_cast<std::size_t>(nic.ac_sub)];
    const auto& dc = model.subs[static_cast<std::size_t>(nic.dc_sub)];
    const Eigen::Index ar = 2 * imap.node_base(nic.ac_sub, nic.ac_node);
    const Eigen::Index dr = 2 * imap.node_base(nic.dc_sub, nic.dc_node);
    const Eigen::Index al = 2 * 3 * static_cast<Eigen::Index>(ac.set.size());
    const Eigen::Index dl = 2 * static_cast<Eigen::Index>(dc.set.size());
    if (dense.block(ar, dr, al, dl).cwiseAbs().maxCoeff() == 0.0 &&
        dense.block(dr, ar, dl, al).cwiseAbs().maxCoeff() == 0.0)
      return {false, "NIC " + nic.ac_name + "/" + nic.dc_name + " has no coupling blocks"};
  }
  return {true, "all J_GRD/J_RSC entries in the published positions"};
}

// --------------------------------------------------------------------------
// 2. Jacobian correctness on randomized small hybrid cases.
// --------------------------------------------------------------------------

Outcome criterion_jacobian_fd() {
  double worst = 0.0;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    StudyCase study = build_small_hybrid(seed);
    Model model = build_model(study);
    HpfSolver solver(model);
    RealVector x = solver.initialize();
    solver.refresh_all(x);
    std::mt19937 rng(seed * 977u);
    std::uniform_real_distribution<double> uni(-1e-3, 1e-3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += uni(rng);

    const RealMatrix j_fd = finite_difference_mismatch_jacobian(solver, x);
    const RealMatrix j_an = -RealMatrix(solver.assemble_jacobian(x));
    const double err = (j_fd - j_an).cwiseAbs().maxCoeff() / j_an.cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    if (err >= 1e-6)
      return {false, "seed " + std::to_string(seed) + ": relative error " +
                         std::to_string(err)};
  }
  return {true, "20 cases, worst relative error " + std::to_string(worst)};
}

// --------------------------------------------------------------------------
// 3. Converged-residual bound on the full benchmark.
// --------------------------------------------------------------------------

Outcome criterion_benchmark_convergence() {
  StudyCase study = build_cigre_benchmark();
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  if (!report.converged) return {false, "did not converge: " + report.message};
  if (report.iterations > 20)
    return {false, "took " + std::to_string(report.iterations) + " Newton iterations"};
  if (report.outer_refreshes > 5)
    return {false, std::to_string(report.outer_refreshes) + " outer refreshes"};

  // Independent re-evaluation: a fresh model, relinearized at the solution.
  Model fresh = build_model(study);
  HpfSolver checker(fresh);
  checker.refresh_all(report.x);
  const double residual = checker.assemble_mismatch(report.x).cwiseAbs().maxCoeff();
  if (residual >= 1e-8) return {false, "re-evaluated residual " + std::to_string(residual)};
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d iterations, %d refreshes, residual %.2e",
                report.iterations, report.outer_refreshes, residual);
  return {true, buf};
}

// --------------------------------------------------------------------------
// 4. Fundamental cross-solver agreement.
// --------------------------------------------------------------------------

Outcome criterion_fundamental_agreement() {
  StudyCase study = build_cigre_benchmark();
  study.solver.tol = 1e-12;
  for (auto& r : study.resources)
    if (r.type == ResourceType::thevenin) r.v_spectrum = {{1, 1.0, 0.0}};

  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  if (!report.converged) return {false, "HPF did not converge"};
  const FundamentalSolution oracle = fundamental_powerflow_oracle(study);
  if (!oracle.converged) return {false, "classic oracle did not converge"};

  const KpiReport k = kpi(oracle.nodes, report.nodes);
  const double err = k.max_e_abs_v();
  if (err >= 1e-8) return {false, "voltage deviation " + std::to_string(err)};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max voltage deviation %.2e", err);
  return {true, buf};
}

// --------------------------------------------------------------------------
// 5. Toeplitz/LTP oracle equivalence.
// --------------------------------------------------------------------------

Outcome criterion_ltp_oracle() {
  // LTI systems produce exactly block-diagonal transfer functions.
  {
    const HarmonicSet set = HarmonicSet::dc_default(50.0, 6);
    LtpStateSpace lag(set, 2, 1, 1);
    ComplexMatrix a(2, 2);
    a << -150.0, 30.0, -20.0, -200.0;
    lag.set_a(0, a);
    lag.set_b(0, (ComplexMatrix(2, 1) << 150.0, 0.0).finished());
    lag.set_c(0, (ComplexMatrix(1, 2) << 1.0, 0.5).finished());
    if (htf_from_ltp(lag).max_offdiagonal_block() != 0.0)
      return {false, "LTI system produced off-diagonal blocks"};
  }

  // Randomized stable LTP systems against time-domain integration + DFT
  // over five settled periods.
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const HarmonicSet set = HarmonicSet::dc_default(50.0, 5);
    LtpStateSpace sys(set, 2, 1, 2);
    ComplexMatrix a0(2, 2);
    a0 << -250.0 + 30.0 * uni(rng), 50.0 * uni(rng), 50.0 * uni(rng), -300.0 + 30.0 * uni(rng);
    sys.set_a(0, a0);
    ComplexMatrix a1(2, 2);
    for (int i = 0; i < 4; ++i) a1(i / 2, i % 2) = Complex{20.0 * uni(rng), 15.0 * uni(rng)};
    sys.set_a(1, a1);
    sys.set_a(-1, a1.conjugate());
    sys.set_b(0, (ComplexMatrix(2, 1) << 200.0, 80.0 * uni(rng)).finished());
    sys.set_c(0, ComplexMatrix::Identity(2, 2));
    sys.validate();

    PhasorVector u(set, 1);
    u.set_pair(0, 1, Complex{0.5 * uni(rng) + 0.6, 0.3 * uni(rng)});
    u.set_pair(0, 3, Complex{0.1 * uni(rng), 0.1 * uni(rng)});

    const PhasorVector predicted = htf_from_ltp(sys).apply(u);
    SteadyStateOptions opt;
    opt.dt = 1.5e-5;
    opt.settle_tol = 1e-10;
    opt.max_time = 4.0;
    const LtpSimResult sim = ltp_steady_state_response(sys, u, opt);
    if (!sim.settled) return {false, "time-domain run did not settle"};
    const double err = (predicted.data() - sim.spectra.data()).cwiseAbs().maxCoeff() /
                       predicted.data().cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    if (err >= 1e-6)
      return {false, "trial " + std::to_string(trial) + ": relative error " +
                         std::to_string(err)};
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "3 LTP systems, worst relative error %.2e", worst);
  return {true, buf};
}

// --------------------------------------------------------------------------
// 6. Decoupling limit: zero NIC coupling splits the hybrid solve.
// --------------------------------------------------------------------------

/// The AC face of a decoupled NIC as a plain grid-following device.
class NicAcAdapter final : public FollowingResponse {
 public:
  NicAcAdapter(std::unique_ptr<TwoPortResponse> nic, CurrentSpectrum i_frozen)
      : nic_(std::move(nic)), i_frozen_(std::move(i_frozen)) {}
  CurrentSpectrum evaluate(const VoltageSpectrum& v) const override {
    return nic_->evaluate(v, i_frozen_).first;
  }
  RealMatrix jacobian(const VoltageSpectrum& v) const override {
    return nic_->jacobian(v, i_frozen_).di_ac_dv_ac;
  }
  void refresh(const VoltageSpectrum& v, const CurrentSpectrum&) override {
    nic_->refresh(v, i_frozen_);
  }

 private:
  std::unique_ptr<TwoPortResponse> nic_;
  CurrentSpectrum i_frozen_;
};

/// The DC face of a decoupled NIC as a grid-forming device.
class NicDcAdapter final : public FormingResponse {
 public:
  NicDcAdapter(std::unique_ptr<TwoPortResponse> nic, VoltageSpectrum v_frozen)
      : nic_(std::move(nic)), v_frozen_(std::move(v_frozen)) {}
  VoltageSpectrum evaluate(const CurrentSpectrum& i) const override {
    return nic_->evaluate(v_frozen_, i).second;
  }
  RealMatrix jacobian(const CurrentSpectrum& i) const override {
    return nic_->jacobian(v_frozen_, i).dv_dc_di_dc;
  }
  void refresh(const VoltageSpectrum&, const CurrentSpectrum& i) override {
    nic_->refresh(v_frozen_, i);
  }

 private:
  std::unique_ptr<TwoPortResponse> nic_;
  VoltageSpectrum v_frozen_;
};

Outcome criterion_decoupling() {
  for (const NicControl control : {NicControl::vdc_q, NicControl::pq}) {
    StudyCase study = build_reduced_benchmark(7);
    study.nics[0].tier = NicTier::power_balance;
    study.nics[0].coupling = NicCoupling::none;
    study.nics[0].control = control;
    if (control == NicControl::pq) study.nics[0].p_kw = -10.0;
    study.solver.tol = 1e-12;
    study.solver.outer_max = 0;  // a single Newton solve on fixed linearizations

    Model hybrid = build_model(study);
    HpfSolver hybrid_solver(hybrid);
    const SolveReport full = hybrid_solver.solve();
    if (!full.converged) return {false, "hybrid decoupled solve failed: " + full.message};

    const Bases bases = study.bases;
    const NicDeviceConfig cfg = nic_device_config(study.nics[0], bases);
    const HarmonicSet ac_set = HarmonicSet::ac_default(bases.f0, study.solver.harmonic_order);
    const HarmonicSet dc_set = HarmonicSet::dc_default(bases.f0, study.solver.harmonic_order);
    CurrentSpectrum i_frozen(dc_set, 1);
    i_frozen.set(0, 0,
                 Complex{control == NicControl::pq
                             ? -cfg.setpoint.p_pu / cfg.setpoint.v_dc_pu
                             : 0.0,
                         0.0});
    VoltageSpectrum v_frozen{balanced_spectrum(ac_set, 3, {{1, Complex{1.0, 0.0}}})};

    // AC-only study: same grid and substation, the NIC face as a device.
    StudyCase study_ac = study;
    study_ac.subsystems.pop_back();
    study_ac.nics.clear();
    std::erase_if(study_ac.resources, [&](const ResourceSpec& r) {
      return !study_ac.subsystems[0].has_node(r.node);
    });
    Model m_ac = build_model(study_ac);
    m_ac.following[{0, study_ac.subsystems[0].node_index("N15")}] =
        std::make_unique<NicAcAdapter>(build_nic_response(cfg, ac_set, dc_set, bases),
                                       CurrentSpectrum(i_frozen));
    HpfSolver ac_solver(m_ac);
    const SolveReport ac_only = ac_solver.solve();
    if (!ac_only.converged) return {false, "AC-only solve failed"};

    // DC-only model assembled by hand: the NIC node is grid-forming.
    Model m_dc;
    m_dc.bases = bases;
    m_dc.solver = study.solver;
    const Subsystem& dc_sub = study.subsystems[1];
    std::map<std::string, NodeRole> roles{{"N19", NodeRole::nic_dc}};
    NodePartition part = classify_nodes(dc_sub, roles);
    HybridBlocks hyb = hybrid_blocks(dc_sub, part, dc_set, bases);
    m_dc.subs.push_back({dc_sub, dc_set, std::move(part), std::move(hyb)});
    CurrentSpectrum i_src(dc_set, 1);
    i_src.set(0, 0, Complex{5.0 / 50.0, 0.0});
    m_dc.following[{0, dc_sub.node_index("N23")}] =
        std::make_unique<CurrentSourceResponse>(std::move(i_src));
    m_dc.following[{0, dc_sub.node_index("N24")}] =
        std::make_unique<ImpedanceLoadResponse>(-8.0 / 50.0, dc_set, 1);
    m_dc.forming[{0, dc_sub.node_index("N19")}] = std::make_unique<NicDcAdapter>(
        build_nic_response(cfg, ac_set, dc_set, bases), VoltageSpectrum(v_frozen));
    HpfSolver dc_solver(m_dc);
    const SolveReport dc_only = dc_solver.solve();
    if (!dc_only.converged) return {false, "DC-only solve failed"};

    // Per-node agreement between the hybrid and the split solves.
    double worst = 0.0;
    for (const auto& n : full.nodes) {
      const auto& split = n.subsystem == "ac" ? ac_only.nodes : dc_only.nodes;
      for (const auto& m : split)
        if (m.node == n.node) {
          worst = std::max(worst, (m.v.data() - n.v.data()).cwiseAbs().maxCoeff());
          worst = std::max(worst, (m.i.data() - n.i.data()).cwiseAbs().maxCoeff());
        }
    }
    if (worst >= 1e-10)
      return {false, std::string(control == NicControl::pq ? "PQ" : "VdcQ") +
                         ": split deviation " + std::to_string(worst)};
  }
  return {true, "hybrid equals the split solves for both control types"};
}

// --------------------------------------------------------------------------
// 7. Order-of-magnitude KPI reproduction against the in-repo cosimulation.
// --------------------------------------------------------------------------

Outcome criterion_cosim_kpi() {
  StudyCase study = build_reduced_benchmark(25);
  Model model = build_model(study);
  HpfSolver solver(model);
  const SolveReport report = solver.solve();
  if (!report.converged) return {false, "HPF did not converge: " + report.message};

  CosimOptions opt;
  opt.settle_tol = 1e-8;
  opt.max_time = 6.0;
  const CosimResult cos = timedomain_cosim(study, opt);
  if (!cos.settled) return {false, "cosimulation did not settle"};

  const KpiReport mags = kpi(cos.nodes, report.nodes);
  const double e_v = mags.max_e_abs_v();
  const double e_i = mags.max_e_abs_i();
  // Angles only where the magnitudes are meaningfully above the noise floor.
  const KpiReport angles = kpi(cos.nodes, report.nodes, 1e-5);
  const double e_arg = angles.max_e_arg();
  if (e_v > 1e-3) return {false, "e_abs(V) = " + std::to_string(e_v)};
  if (e_i > 1e-3) return {false, "e_abs(I) = " + std::to_string(e_i)};
  if (e_arg > 0.1) return {false, "e_arg = " + std::to_string(e_arg)};
  char buf[128];
  std::snprintf(buf, sizeof(buf), "e_abs(V)=%.2e e_abs(I)=%.2e e_arg=%.2e rad", e_v, e_i,
                e_arg);
  return {true, buf};
}

// --------------------------------------------------------------------------
// 8. Determinism and round-trips.
// --------------------------------------------------------------------------

Outcome criterion_determinism() {
  const StudyCase study = build_cigre_benchmark();
  if (study_from_json(study_to_json(study)) != study)
    return {false, "study JSON round-trip changed the study"};

  auto pipeline = [&]() {
    StudyCase s = build_cigre_benchmark();
    Model model = build_model(s);
    HpfSolver solver(model);
    const SolveReport report = solver.solve();
    const ResultSet rs = make_result_set(s, report);
    return std::make_pair(results_to_csv(rs), results_to_json(rs).dump(2));
  };
  const auto first = pipeline();
  const auto second = pipeline();
  if (first.first != second.first) return {false, "CSV output differs between runs"};
  if (first.second != second.second) return {false, "JSON output differs between runs"};

  // Result sets reparse to the same spectra bit for bit.
  StudyCase s = build_cigre_benchmark();
  Model model = build_model(s);
  HpfSolver solver(model);
  const ResultSet rs = make_result_set(s, solver.solve());
  const ResultSet back = results_from_json(results_to_json(rs));
  for (std::size_t i = 0; i < rs.nodes.size(); ++i)
    if ((back.nodes[i].v.data() - rs.nodes[i].v.data()).cwiseAbs().maxCoeff() != 0.0 ||
        (back.nodes[i].i.data() - rs.nodes[i].i.data()).cwiseAbs().maxCoeff() != 0.0)
      return {false, "results JSON round-trip changed the spectra"};
  return {true, "bitwise identical runs; exact round-trips"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"1. block-structure fidelity (J_GRD / J_RSC)", criterion_block_structure},
      {"2. Jacobian vs finite differences (20 random hybrids)", criterion_jacobian_fd},
      {"3. full benchmark convergence and residual bound", criterion_benchmark_convergence},
      {"4. fundamental cross-solver agreement", criterion_fundamental_agreement},
      {"5. Toeplitz/LTP oracle equivalence", criterion_ltp_oracle},
      {"6. decoupling limit equals split solves", criterion_decoupling},
      {"7. KPI vs time-domain cosimulation (reduced benchmark)", criterion_cosim_kpi},
      {"8. determinism and serialization round-trips", criterion_determinism},
  };

  bool all = true;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-58s %s  (%.1f s)  %s\n", name, outcome.pass ? "PASS" : "FAIL", dt,
                outcome.detail.c_str());
    std::fflush(stdout);
    all = all && outcome.pass;
  }
  std::printf("%s\n", all ? "acceptance: all criteria passed" : "acceptance: FAILURES present");
  return all ? 0 : 1;
}
