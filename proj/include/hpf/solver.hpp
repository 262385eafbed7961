#pragma once

#include "hpf/study.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

/// Bijection between unknown coefficients and positions in the real-stacked
/// unknown vector x = [I_S | V_R] per subsystem, subsystems in declaration
/// order. Within a section nodes follow the partition order (S1 then S2,
/// R1 then R2); within a node, slots are order-major with the phase inside,
/// matching PhasorVector. Each complex coefficient occupies two real slots.
class IndexMap {
 public:
  explicit IndexMap(const Model& model) {
    info_.resize(model.subs.size());
    Eigen::Index offset = 0;
    for (std::size_t si = 0; si < model.subs.size(); ++si) {
      const auto& sm = model.subs[si];
      auto& fi = info_[si];
      fi.phases = sm.sub.phases();
      fi.n_orders = sm.set.size();
      fi.node_pos.assign(static_cast<std::size_t>(sm.sub.node_count()), -1);
      fi.node_is_current.assign(static_cast<std::size_t>(sm.sub.node_count()), false);
      fi.s_offset = offset;
      const auto s_nodes = sm.part.s();
      for (std::size_t a = 0; a < s_nodes.size(); ++a) {
        fi.node_pos[static_cast<std::size_t>(s_nodes[a])] = static_cast<int>(a);
        fi.node_is_current[static_cast<std::size_t>(s_nodes[a])] = true;
      }
      offset += static_cast<Eigen::Index>(s_nodes.size()) * fi.phases * fi.n_orders;
      fi.r_offset = offset;
      const auto r_nodes = sm.part.r();
      for (std::size_t a = 0; a < r_nodes.size(); ++a)
        fi.node_pos[static_cast<std::size_t>(r_nodes[a])] = static_cast<int>(a);
      offset += static_cast<Eigen::Index>(r_nodes.size()) * fi.phases * fi.n_orders;
    }
    complex_size_ = offset;
  }

  Eigen::Index complex_size() const { return complex_size_; }
  Eigen::Index real_size() const { return 2 * complex_size_; }

  bool is_current_unknown(int sub, int node) const {
    return info_[static_cast<std::size_t>(sub)]
        .node_is_current[static_cast<std::size_t>(node)];
  }

  /// Complex index of the first coefficient of a node's unknown spectrum;
  /// the node's slots are contiguous, order-major with the phase inside.
  Eigen::Index node_base(int sub, int node) const {
    const auto& fi = info_[static_cast<std::size_t>(sub)];
    const auto pos = fi.node_pos[static_cast<std::size_t>(node)];
    const Eigen::Index section =
        fi.node_is_current[static_cast<std::size_t>(node)] ? fi.s_offset : fi.r_offset;
    return section + static_cast<Eigen::Index>(pos) * fi.phases * fi.n_orders;
  }

  Eigen::Index cidx(int sub, int node, int phase, int order_index) const {
    const auto& fi = info_[static_cast<std::size_t>(sub)];
    return node_base(sub, node) + static_cast<Eigen::Index>(order_index) * fi.phases + phase;
  }

  /// Human-readable location of a complex coefficient, for diagnostics.
  std::string describe(const Model& model, Eigen::Index c) const {
    for (std::size_t si = 0; si < model.subs.size(); ++si) {
      const auto& sm = model.subs[si];
      for (int node = 0; node < sm.sub.node_count(); ++node) {
        const Eigen::Index base = node_base(static_cast<int>(si), node);
        const Eigen::Index span =
            static_cast<Eigen::Index>(sm.set.size()) * sm.sub.phases();
        if (c >= base && c < base + span) {
          const Eigen::Index local = c - base;
          const int k = static_cast<int>(local / sm.sub.phases());
          const int p = static_cast<int>(local % sm.sub.phases());
          return sm.sub.id + "/" + sm.sub.nodes[static_cast<std::size_t>(node)] +
                 (is_current_unknown(static_cast<int>(si), node) ? "/I" : "/V") + "/phase" +
                 std::to_string(p) + "/h" + std::to_string(sm.set.order_at(k));
        }
      }
    }
    return "unknown slot " + std::to_string(c);
  }

 private:
  struct SubInfo {
    Eigen::Index s_offset = 0, r_offset = 0;
    int phases = 0, n_orders = 0;
    std::vector<int> node_pos;
    std::vector<bool> node_is_current;
  };
  std::vector<SubInfo> info_;
  Eigen::Index complex_size_ = 0;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  int outer_refreshes = 0;
  double final_residual = std::numeric_limits<double>::infinity();
  std::vector<double> residual_history;
  std::string message;

  struct NodeSolution {
    std::string subsystem, node;
    PhasorVector v, i;
  };
  std::vector<NodeSolution> nodes;
  RealVector x;
};

/// Newton-Raphson harmonic power flow on the hybrid mismatch system, with an
/// outer relinearization loop that refreshes resource operating points
/// between Newton solves.
class HpfSolver {
 public:
  explicit HpfSolver(Model& model) : model_(model), imap_(model) {}

  const IndexMap& index_map() const { return imap_; }

  /// Flat start: nominal balanced fundamental voltages, nominal DC voltages,
  /// zero source currents, setpoint-estimated NIC DC currents.
  RealVector initialize() const {
    ComplexVector x = ComplexVector::Zero(imap_.complex_size());
    for (int si = 0; si < static_cast<int>(model_.subs.size()); ++si) {
      const auto& sm = model_.subs[static_cast<std::size_t>(si)];
      for (int node : sm.part.r()) {
        if (sm.sub.kind == SubsystemKind::ac) {
          for (int p = 0; p < 3; ++p) {
            const double phi = p == 1 ? -2.0 * kPi / 3.0 : (p == 2 ? 2.0 * kPi / 3.0 : 0.0);
            x(imap_.cidx(si, node, p, sm.set.index_of(1))) = 0.5 * std::exp(kJ * phi);
            x(imap_.cidx(si, node, p, sm.set.index_of(-1))) = 0.5 * std::exp(-kJ * phi);
          }
        } else {
          x(imap_.cidx(si, node, 0, sm.set.index_of(0))) = 1.0;
        }
      }
    }
    // NIC DC-port currents from the power setpoint at nominal voltage; a
    // VdcQ device carries no power setpoint and starts at zero.
    for (const auto& nic : model_.nics) {
      const auto& sm = model_.subs[static_cast<std::size_t>(nic.dc_sub)];
      x(imap_.cidx(nic.dc_sub, nic.dc_node, 0, sm.set.index_of(0))) +=
          nic.dc_current_estimate_pu;
    }
    return to_real_stacked(x);
  }

  PhasorVector gather(const RealVector& x, int sub, int node) const {
    const auto& sm = model_.subs[static_cast<std::size_t>(sub)];
    PhasorVector out(sm.set, sm.sub.phases());
    const Eigen::Index base = imap_.node_base(sub, node);
    for (Eigen::Index s = 0; s < out.size(); ++s)
      out.data()(s) = Complex{x(2 * (base + s)), x(2 * (base + s) + 1)};
    return out;
  }

  void scatter(RealVector& x, int sub, int node, const PhasorVector& v) const {
    const Eigen::Index base = imap_.node_base(sub, node);
    for (Eigen::Index s = 0; s < v.size(); ++s) {
      x(2 * (base + s)) = v.data()(s).real();
      x(2 * (base + s) + 1) = v.data()(s).imag();
    }
  }

  /// Grid-minus-resource mismatch at x, real-stacked, in p.u.
  RealVector assemble_mismatch(const RealVector& x) const {
    ComplexVector r = grid_side(x);
    // Single-port resources.
    for (const auto& [key, resp] : model_.forming) {
      const CurrentSpectrum i{gather(x, key.first, key.second)};
      subtract_at(r, key.first, key.second, resp->evaluate(i));
    }
    for (const auto& [key, resp] : model_.following) {
      const VoltageSpectrum v{gather(x, key.first, key.second)};
      subtract_at(r, key.first, key.second, resp->evaluate(v));
    }
    // NICs: AC current and DC voltage from the two-port response, whose
    // inputs are read from the unknown vector (the AC/DC coupling).
    for (const auto& nic : model_.nics) {
      const VoltageSpectrum v_ac{gather(x, nic.ac_sub, nic.ac_node)};
      const CurrentSpectrum i_dc{gather(x, nic.dc_sub, nic.dc_node)};
      auto [i_ac, v_dc] = nic.response->evaluate(v_ac, i_dc);
      subtract_at(r, nic.ac_sub, nic.ac_node, i_ac);
      subtract_at(r, nic.dc_sub, nic.dc_node, v_dc);
    }
    return to_real_stacked(r);
  }

  /// J_GRD: hybrid parameter blocks, block-diagonal per subsystem and order.
  Eigen::SparseMatrix<double> assemble_j_grd() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int si = 0; si < static_cast<int>(model_.subs.size()); ++si) {
      const auto& sm = model_.subs[static_cast<std::size_t>(si)];
      const auto s_nodes = sm.part.s();
      const auto r_nodes = sm.part.r();
      for (int k = 0; k < sm.set.size(); ++k) {
        const auto& hb = sm.hybrid;
        insert_hybrid(t, si, k, s_nodes, s_nodes, hb.h_ss[static_cast<std::size_t>(k)]);
        insert_hybrid(t, si, k, s_nodes, r_nodes, hb.h_sr[static_cast<std::size_t>(k)]);
        insert_hybrid(t, si, k, r_nodes, s_nodes, hb.h_rs[static_cast<std::size_t>(k)]);
        insert_hybrid(t, si, k, r_nodes, r_nodes, hb.h_rr[static_cast<std::size_t>(k)]);
      }
    }
    Eigen::SparseMatrix<double> j(imap_.real_size(), imap_.real_size());
    j.setFromTriplets(t.begin(), t.end());
    return j;
  }

  /// J_RSC: single-port diagonal blocks plus the NIC port and coupling blocks.
  Eigen::SparseMatrix<double> assemble_j_rsc(const RealVector& x) const {
    std::vector<Eigen::Triplet<double>> t;
    for (const auto& [key, resp] : model_.forming) {
      const CurrentSpectrum i{gather(x, key.first, key.second)};
      insert_dense(t, imap_.node_base(key.first, key.second),
                   imap_.node_base(key.first, key.second), resp->jacobian(i));
    }
    for (const auto& [key, resp] : model_.following) {
      const VoltageSpectrum v{gather(x, key.first, key.second)};
      insert_dense(t, imap_.node_base(key.first, key.second),
                   imap_.node_base(key.first, key.second), resp->jacobian(v));
    }
    for (const auto& nic : model_.nics) {
      const VoltageSpectrum v_ac{gather(x, nic.ac_sub, nic.ac_node)};
      const CurrentSpectrum i_dc{gather(x, nic.dc_sub, nic.dc_node)};
      const auto j = nic.response->jacobian(v_ac, i_dc);
      const Eigen::Index ac = imap_.node_base(nic.ac_sub, nic.ac_node);
      const Eigen::Index dc = imap_.node_base(nic.dc_sub, nic.dc_node);
      insert_dense(t, ac, ac, j.di_ac_dv_ac);
      insert_dense(t, ac, dc, j.di_ac_di_dc);
      insert_dense(t, dc, ac, j.dv_dc_dv_ac);
      insert_dense(t, dc, dc, j.dv_dc_di_dc);
    }
    Eigen::SparseMatrix<double> j(imap_.real_size(), imap_.real_size());
    j.setFromTriplets(t.begin(), t.end());
    return j;
  }

  /// J = J_RSC - J_GRD.
  Eigen::SparseMatrix<double> assemble_jacobian(const RealVector& x) const {
    Eigen::SparseMatrix<double> j = assemble_j_rsc(x);
    j -= assemble_j_grd();
    return j;
  }

  void refresh_all(const RealVector& x) {
    for (auto& [key, resp] : model_.forming) {
      const CurrentSpectrum i{gather(x, key.first, key.second)};
      resp->refresh(VoltageSpectrum{grid_voltage_at(x, key.first, key.second)}, i);
    }
    for (auto& [key, resp] : model_.following) {
      const VoltageSpectrum v{gather(x, key.first, key.second)};
      resp->refresh(v, CurrentSpectrum{grid_current_at(x, key.first, key.second)});
    }
    for (auto& nic : model_.nics) {
      const VoltageSpectrum v_ac{gather(x, nic.ac_sub, nic.ac_node)};
      const CurrentSpectrum i_dc{gather(x, nic.dc_sub, nic.dc_node)};
      nic.response->refresh(v_ac, i_dc);
    }
  }

  SolveReport solve() {
    SolveReport report;
    const auto& cfg = model_.solver;
    RealVector x = initialize();
    try {
      refresh_all(x);
      RealVector x_prev = x;
      for (int outer = 0; outer <= cfg.outer_max; ++outer) {
        if (!newton(x, report)) {
          extract_solution(report, x);
          return report;
        }
        if (outer > 0 && (x - x_prev).cwiseAbs().maxCoeff() < cfg.outer_tol) break;
        if (outer == cfg.outer_max) break;
        x_prev = x;
        refresh_all(x);
        ++report.outer_refreshes;
      }
      // Independent residual check on the final iterate.
      report.final_residual = assemble_mismatch(x).cwiseAbs().maxCoeff();
      report.converged = report.final_residual < cfg.tol;
      if (!report.converged && report.message.empty())
        report.message = "outer loop finished above tolerance: residual " +
                         std::to_string(report.final_residual);
    } catch (const std::exception& e) {
      report.converged = false;
      report.message = e.what();
    }
    extract_solution(report, x);
    return report;
  }

  /// Grid-side voltage seen at a node (defined for every node, unknown or not).
  PhasorVector node_voltage(const RealVector& x, int sub, int node) const {
    return imap_.is_current_unknown(sub, node) ? grid_voltage_at(x, sub, node)
                                               : gather(x, sub, node);
  }

  PhasorVector node_current(const RealVector& x, int sub, int node) const {
    return imap_.is_current_unknown(sub, node) ? gather(x, sub, node)
                                               : grid_current_at(x, sub, node);
  }

 private:
  bool newton(RealVector& x, SolveReport& report) {
    const auto& cfg = model_.solver;
    for (int it = 0; it < cfg.max_iter; ++it) {
      const RealVector r = assemble_mismatch(x);
      const double rn = r.cwiseAbs().maxCoeff();
      report.residual_history.push_back(rn);
      report.final_residual = rn;
      if (rn < cfg.tol) return true;
      ++report.iterations;
      const Eigen::SparseMatrix<double> j = assemble_jacobian(x);
      RealVector dx;
      if (!linear_solve(j, r, dx, report)) return false;
      x += cfg.damping * dx;
    }
    const RealVector r = assemble_mismatch(x);
    report.final_residual = r.cwiseAbs().maxCoeff();
    if (report.final_residual < cfg.tol) return true;
    Eigen::Index worst = 0;
    r.cwiseAbs().maxCoeff(&worst);
    report.message = "Newton did not converge in " + std::to_string(cfg.max_iter) +
                     " iterations; largest residual " + std::to_string(report.final_residual) +
                     " p.u. at " + imap_.describe(model_, worst / 2);
    return false;
  }

  bool linear_solve(const Eigen::SparseMatrix<double>& j, const RealVector& r, RealVector& dx,
                    SolveReport& report) const {
    const auto kind = model_.solver.linear_solver;
    const bool dense = kind == LinearSolverKind::dense ||
                       (kind == LinearSolverKind::automatic && j.rows() <= 2000);
    if (dense) {
      const RealMatrix jd(j);
      Eigen::PartialPivLU<RealMatrix> lu(jd);
      if (lu_pivot_ratio(lu) < 1e-14) {
        report.message = "singular Jacobian (pivot ratio " +
                         std::to_string(lu_pivot_ratio(lu)) + ")";
        return false;
      }
      dx = lu.solve(r);
      return true;
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(j);
    if (lu.info() != Eigen::Success) {
      report.message = "singular Jacobian (sparse factorization failed)";
      return false;
    }
    dx = lu.solve(r);
    return true;
  }

  /// Hybrid-equation values for all nodes: V at S nodes and I at R nodes.
  ComplexVector grid_side(const RealVector& x) const {
    ComplexVector out = ComplexVector::Zero(imap_.complex_size());
    const ComplexVector xc = from_real_stacked(x);
    for (int si = 0; si < static_cast<int>(model_.subs.size()); ++si) {
      const auto& sm = model_.subs[static_cast<std::size_t>(si)];
      const auto s_nodes = sm.part.s();
      const auto r_nodes = sm.part.r();
      const int ph = sm.sub.phases();
      ComplexVector is(static_cast<Eigen::Index>(s_nodes.size()));
      ComplexVector vr(static_cast<Eigen::Index>(r_nodes.size()));
      for (int k = 0; k < sm.set.size(); ++k) {
        const auto& hb = sm.hybrid;
        for (int p = 0; p < ph; ++p) {
          for (std::size_t a = 0; a < s_nodes.size(); ++a)
            is(static_cast<Eigen::Index>(a)) = xc(imap_.cidx(si, s_nodes[a], p, k));
          for (std::size_t a = 0; a < r_nodes.size(); ++a)
            vr(static_cast<Eigen::Index>(a)) = xc(imap_.cidx(si, r_nodes[a], p, k));
          const ComplexVector vs = hb.h_ss[static_cast<std::size_t>(k)] * is +
                                   hb.h_sr[static_cast<std::size_t>(k)] * vr;
          const ComplexVector ir = hb.h_rs[static_cast<std::size_t>(k)] * is +
                                   hb.h_rr[static_cast<std::size_t>(k)] * vr;
          for (std::size_t a = 0; a < s_nodes.size(); ++a)
            out(imap_.cidx(si, s_nodes[a], p, k)) = vs(static_cast<Eigen::Index>(a));
          for (std::size_t a = 0; a < r_nodes.size(); ++a)
            out(imap_.cidx(si, r_nodes[a], p, k)) = ir(static_cast<Eigen::Index>(a));
        }
      }
    }
    return out;
  }

  PhasorVector grid_voltage_at(const RealVector& x, int sub, int node) const {
    return grid_value_at(x, sub, node);
  }
  PhasorVector grid_current_at(const RealVector& x, int sub, int node) const {
    return grid_value_at(x, sub, node);
  }

  PhasorVector grid_value_at(const RealVector& x, int sub, int node) const {
    const ComplexVector g = grid_side(x);
    const auto& sm = model_.subs[static_cast<std::size_t>(sub)];
    PhasorVector out(sm.set, sm.sub.phases());
    const Eigen::Index base = imap_.node_base(sub, node);
    for (Eigen::Index s = 0; s < out.size(); ++s) out.data()(s) = g(base + s);
    return out;
  }

  void subtract_at(ComplexVector& r, int sub, int node, const PhasorVector& v) const {
    const Eigen::Index base = imap_.node_base(sub, node);
    r.segment(base, v.size()) -= v.data();
  }

  void insert_hybrid(std::vector<Eigen::Triplet<double>>& t, int si, int k,
                     const std::vector<int>& row_nodes, const std::vector<int>& col_nodes,
                     const ComplexMatrix& block) const {
    const int ph = model_.subs[static_cast<std::size_t>(si)].sub.phases();
    for (std::size_t a = 0; a < row_nodes.size(); ++a)
      for (std::size_t b = 0; b < col_nodes.size(); ++b) {
        const Complex z = block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (z == Complex{0.0, 0.0}) continue;
        for (int p = 0; p < ph; ++p) {
          const Eigen::Index row = 2 * imap_.cidx(si, row_nodes[a], p, k);
          const Eigen::Index col = 2 * imap_.cidx(si, col_nodes[b], p, k);
          t.emplace_back(row, col, z.real());
          t.emplace_back(row, col + 1, -z.imag());
          t.emplace_back(row + 1, col, z.imag());
          t.emplace_back(row + 1, col + 1, z.real());
        }
      }
  }

  void insert_dense(std::vector<Eigen::Triplet<double>>& t, Eigen::Index row_base,
                    Eigen::Index col_base, const RealMatrix& block) const {
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      for (Eigen::Index j = 0; j < block.cols(); ++j)
        if (block(i, j) != 0.0)
          t.emplace_back(2 * row_base + i, 2 * col_base + j, block(i, j));
  }

  void extract_solution(SolveReport& report, const RealVector& x) const {
    report.x = x;
    const ComplexVector grid = grid_side(x);
    const ComplexVector xc = from_real_stacked(x);
    for (int si = 0; si < static_cast<int>(model_.subs.size()); ++si) {
      const auto& sm = model_.subs[static_cast<std::size_t>(si)];
      for (int node = 0; node < sm.sub.node_count(); ++node) {
        const bool s_node = imap_.is_current_unknown(si, node);
        PhasorVector v(sm.set, sm.sub.phases()), i(sm.set, sm.sub.phases());
        const Eigen::Index base = imap_.node_base(si, node);
        for (Eigen::Index s = 0; s < v.size(); ++s) {
          v.data()(s) = s_node ? grid(base + s) : xc(base + s);
          i.data()(s) = s_node ? xc(base + s) : grid(base + s);
        }
        report.nodes.push_back({sm.sub.id, sm.sub.nodes[static_cast<std::size_t>(node)],
                                std::move(v), std::move(i)});
      }
    }
  }

  Model& model_;
  IndexMap imap_;
};

/// Central-difference Jacobian of the mismatch, dM/dx. Note the analytic
/// counterpart is assemble_jacobian() = J_RSC - J_GRD = -dM/dx.
inline RealMatrix finite_difference_mismatch_jacobian(const HpfSolver& solver,
                                                      const RealVector& x, double step = 1e-6) {
  const Eigen::Index n = x.size();
  RealMatrix j(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    RealVector xp = x, xm = x;
    xp(c) += step;
    xm(c) -= step;
    j.col(c) = (solver.assemble_mismatch(xp) - solver.assemble_mismatch(xm)) / (2.0 * step);
  }
  return j;
}

}  // namespace hpf
