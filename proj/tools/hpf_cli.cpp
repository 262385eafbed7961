#include "hpf/benchmark.hpp"
#include "hpf/cosim.hpp"
#include "hpf/io.hpp"
#include "hpf/oracle.hpp"
#include "hpf/solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNoConvergence = 1;
constexpr int kExitInputError = 2;

struct RunOverrides {
  std::optional<int> harmonics;
  std::optional<double> tol;
  std::optional<int> max_iter;
  std::optional<std::string> tier;
};

void apply_overrides(hpf::StudyCase& study, const RunOverrides& o) {
  if (o.harmonics) study.solver.harmonic_order = *o.harmonics;
  if (o.tol) study.solver.tol = *o.tol;
  if (o.max_iter) study.solver.max_iter = *o.max_iter;
  if (o.tier) {
    const hpf::NicTier tier =
        *o.tier == "averaged" ? hpf::NicTier::averaged : hpf::NicTier::power_balance;
    for (auto& nic : study.nics) nic.tier = tier;
  }
}

int solve_and_emit(const hpf::StudyCase& study, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  hpf::Model model = hpf::build_model(study);
  hpf::HpfSolver solver(model);
  const hpf::SolveReport report = solver.solve();

  const hpf::ResultSet rs = hpf::make_result_set(study, report);
  hpf::write_text_file(out_dir + "/results.csv", hpf::results_to_csv(rs));
  hpf::write_text_file(out_dir + "/results.json", hpf::results_to_json(rs).dump(2) + "\n");

  std::printf("%s: %d Newton iteration(s), %d outer refresh(es), residual %.3e p.u.\n",
              report.converged ? "converged" : "NOT CONVERGED", report.iterations,
              report.outer_refreshes, report.final_residual);
  if (!report.message.empty()) std::printf("  %s\n", report.message.c_str());
  std::printf("wrote %s/results.csv and results.json\n", out_dir.c_str());
  return report.converged ? kExitOk : kExitNoConvergence;
}

bool check(const char* name, bool ok, double value, double limit) {
  std::printf("  %-52s %s  (%.3e, limit %.1e)\n", name, ok ? "PASS" : "FAIL", value, limit);
  return ok;
}

int run_validate(bool full) {
  using namespace hpf;
  bool all = true;
  std::printf("oracle suite:\n");

  {  // Fundamental cross-check: HPF vs classic power flow, harmonics zeroed.
    StudyCase study = build_cigre_benchmark();
    for (auto& r : study.resources)
      if (r.type == ResourceType::thevenin)
        r.v_spectrum = {{1, 1.0, 0.0}};
    study.solver.tol = 1e-12;
    Model model = build_model(study);
    HpfSolver solver(model);
    const SolveReport report = solver.solve();
    const FundamentalSolution oracle = fundamental_powerflow_oracle(study);
    double err = 1.0;
    if (report.converged && oracle.converged) {
      err = 0.0;
      const KpiReport k = kpi(oracle.nodes, report.nodes);
      err = std::max(k.max_e_abs_v(), k.max_e_abs_i());
    }
    all &= check("fundamental power flow vs independent oracle", err < 1e-8, err, 1e-8);
  }

  {  // Fixed-point HPF vs Newton on the full benchmark.
    StudyCase study = build_cigre_benchmark();
    study.solver.tol = 1e-12;
    Model m1 = build_model(study);
    HpfSolver solver(m1);
    const SolveReport report = solver.solve();
    Model m2 = build_model(study);
    const FixedPointResult fp = fixed_point_hpf(m2, 1e-12, 2000);
    double err = 1.0;
    if (report.converged && fp.converged)
      err = (report.x - fp.x).cwiseAbs().maxCoeff();
    all &= check("fixed-point HPF vs Newton HPF", err < 1e-7, err, 1e-7);
  }

  {  // Jacobian vs central differences on a small hybrid case.
    StudyCase study = build_small_hybrid(7);
    Model model = build_model(study);
    HpfSolver solver(model);
    RealVector x = solver.initialize();
    solver.refresh_all(x);
    x = RealVector(x + 1e-3 * RealVector::Random(x.size()));
    const RealMatrix j_fd = finite_difference_mismatch_jacobian(solver, x);
    const RealMatrix j_an = -RealMatrix(solver.assemble_jacobian(x));
    const double err = (j_fd - j_an).cwiseAbs().maxCoeff() / j_an.cwiseAbs().maxCoeff();
    all &= check("mismatch Jacobian vs finite differences", err < 1e-6, err, 1e-6);
  }

  {  // LTP harmonic transfer function vs time-domain integration.
    const HarmonicSet set = HarmonicSet::dc_default(50.0, 5);
    LtpStateSpace sys(set, 1, 1, 1);
    sys.set_a(0, ComplexMatrix::Constant(1, 1, -120.0));
    sys.set_a(1, ComplexMatrix::Constant(1, 1, Complex{12.0, 5.0}));
    sys.set_a(-1, ComplexMatrix::Constant(1, 1, Complex{12.0, -5.0}));
    sys.set_b(0, ComplexMatrix::Constant(1, 1, 120.0));
    sys.set_c(0, ComplexMatrix::Identity(1, 1));
    PhasorVector u(set, 1);
    u.set_pair(0, 1, Complex{0.4, 0.1});
    u.set_pair(0, 3, Complex{0.05, -0.02});
    const Htf htf = htf_from_ltp(sys);
    const PhasorVector pred = htf.apply(u);
    SteadyStateOptions opt;
    opt.dt = 2e-5;
    opt.settle_tol = 1e-10;
    const LtpSimResult sim = ltp_steady_state_response(sys, u, opt);
    double err = 1.0;
    if (sim.settled)
      err = (pred.data() - sim.spectra.data()).cwiseAbs().maxCoeff() /
            pred.data().cwiseAbs().maxCoeff();
    all &= check("LTP transfer function vs time-domain oracle", err < 1e-6, err, 1e-6);
  }

  {  // KPI of a solution against itself.
    StudyCase study = build_small_hybrid(3);
    Model model = build_model(study);
    HpfSolver solver(model);
    const SolveReport report = solver.solve();
    const KpiReport k = kpi(report.nodes, report.nodes);
    const double err = std::max(k.max_e_abs_v(), std::max(k.max_e_abs_i(), k.max_e_arg()));
    all &= check("KPI self-comparison is zero", report.converged && err == 0.0, err, 0.0);
  }

  if (full) {  // Reduced-benchmark cosimulation (minutes).
    StudyCase study = build_reduced_benchmark();
    Model model = build_model(study);
    HpfSolver solver(model);
    const SolveReport report = solver.solve();
    CosimOptions opt;
    const CosimResult cos = timedomain_cosim(study, opt);
    double err = 1.0;
    if (report.converged && cos.settled) {
      const KpiReport k = kpi(cos.nodes, report.nodes);
      err = std::max(k.max_e_abs_v(), k.max_e_abs_i());
    }
    all &= check("HPF vs time-domain cosimulation (reduced benchmark)", err <= 1e-3, err, 1e-3);
  }

  std::printf("%s\n", all ? "all checks passed" : "SOME CHECKS FAILED");
  return all ? kExitOk : kExitNoConvergence;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonic power-flow solver for hybrid AC/DC grids"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "solve a study file");
  std::string study_path, out_dir = ".";
  RunOverrides overrides;
  run->add_option("--study", study_path, "study file (JSON)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--harmonics", overrides.harmonics, "maximum harmonic order");
  run->add_option("--tol", overrides.tol, "residual tolerance, p.u.");
  run->add_option("--max-iter", overrides.max_iter, "Newton iteration cap");
  run->add_option("--tier", overrides.tier, "NIC model tier")
      ->check(CLI::IsMember({"averaged", "power-balance"}));

  auto* bench = app.add_subcommand("benchmark", "solve the built-in benchmark");
  std::string bench_out = ".";
  bool reduced = false;
  bench->add_option("--out", bench_out, "output directory");
  bench->add_flag("--reduced", reduced, "reduced single-NIC variant");
  RunOverrides bench_overrides;
  bench->add_option("--harmonics", bench_overrides.harmonics, "maximum harmonic order");
  bench->add_option("--tier", bench_overrides.tier, "NIC model tier")
      ->check(CLI::IsMember({"averaged", "power-balance"}));

  auto* validate = app.add_subcommand("validate", "run the oracle cross-check suite");
  bool validate_full = false;
  validate->add_flag("--full", validate_full, "include the time-domain cosimulation check");

  auto* kpi_cmd = app.add_subcommand("kpi", "compare two spectra files");
  std::string ref_path, test_path, kpi_out;
  double kpi_floor = 1e-9;
  kpi_cmd->add_option("--ref", ref_path, "reference results.json")->required();
  kpi_cmd->add_option("--test", test_path, "test results.json")->required();
  kpi_cmd->add_option("--out", kpi_out, "write the report as JSON");
  kpi_cmd->add_option("--floor", kpi_floor, "magnitude floor for angle errors");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      hpf::StudyCase study = hpf::load_study(study_path);
      apply_overrides(study, overrides);
      return solve_and_emit(study, out_dir);
    }
    if (*bench) {
      hpf::StudyCase study =
          reduced ? hpf::build_reduced_benchmark() : hpf::build_cigre_benchmark();
      apply_overrides(study, bench_overrides);
      return solve_and_emit(study, bench_out);
    }
    if (*validate) return run_validate(validate_full);
    if (*kpi_cmd) {
      std::ifstream fr(ref_path), ft(test_path);
      if (!fr) throw hpf::IoError("cannot open reference file: " + ref_path);
      if (!ft) throw hpf::IoError("cannot open test file: " + test_path);
      hpf::Json jr, jt;
      fr >> jr;
      ft >> jt;
      const hpf::ResultSet ref = hpf::results_from_json(jr);
      const hpf::ResultSet test = hpf::results_from_json(jt);
      const hpf::KpiReport report = hpf::kpi(ref.nodes, test.nodes, kpi_floor);
      for (const auto& m : report.maxima)
        std::printf("%s: e_abs(V) %.3e  e_abs(I) %.3e  e_arg(V) %.3e  e_arg(I) %.3e\n",
                    m.subsystem.c_str(), m.e_abs_v, m.e_abs_i, m.e_arg_v, m.e_arg_i);
      if (!kpi_out.empty())
        hpf::write_text_file(kpi_out, hpf::kpi_to_json(report).dump(2) + "\n");
      return kExitOk;
    }
  } catch (const hpf::IoError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInputError;
  } catch (const hpf::Json::exception& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInputError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNoConvergence;
  }
  return kExitOk;
}
