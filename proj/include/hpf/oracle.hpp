#pragma once

#include "hpf/integrate.hpp"
#include "hpf/solver.hpp"
#include "hpf/study.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

using NodeSpectra = SolveReport::NodeSolution;

// ---------------------------------------------------------------------------
// Key performance indicators: maximum-over-phases magnitude and angle errors
// between two harmonic phasor sets, per node and order. Magnitudes compare in
// the single-sided reporting convention (2 |X_h| for h != 0); angle errors are
// wrapped to the principal branch and reported only where both magnitudes
// clear the floor.
// ---------------------------------------------------------------------------

struct KpiReport {
  double floor = 1e-9;

  struct Entry {
    std::string subsystem, node;
    int order = 0;
    double e_abs_v = 0.0, e_abs_i = 0.0;
    std::optional<double> e_arg_v, e_arg_i;
  };
  std::vector<Entry> entries;

  struct SubsystemMax {
    std::string subsystem;
    double e_abs_v = 0.0, e_abs_i = 0.0, e_arg_v = 0.0, e_arg_i = 0.0;
  };
  std::vector<SubsystemMax> maxima;

  double max_e_abs_v() const {
    double m = 0.0;
    for (const auto& s : maxima) m = std::max(m, s.e_abs_v);
    return m;
  }
  double max_e_abs_i() const {
    double m = 0.0;
    for (const auto& s : maxima) m = std::max(m, s.e_abs_i);
    return m;
  }
  double max_e_arg() const {
    double m = 0.0;
    for (const auto& s : maxima) m = std::max(m, std::max(s.e_arg_v, s.e_arg_i));
    return m;
  }
};

namespace detail {

inline double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

inline double single_sided(const PhasorVector& s, int p, int h) {
  return (h == 0 ? 1.0 : 2.0) * std::abs(s.at(p, h));
}

}  // namespace detail

inline KpiReport kpi(const std::vector<NodeSpectra>& reference,
                     const std::vector<NodeSpectra>& test, double floor = 1e-9) {
  KpiReport report;
  report.floor = floor;
  std::map<std::pair<std::string, std::string>, const NodeSpectra*> ref_index;
  for (const auto& r : reference) ref_index[{r.subsystem, r.node}] = &r;
  std::map<std::string, KpiReport::SubsystemMax> maxima;

  for (const auto& t : test) {
    auto it = ref_index.find({t.subsystem, t.node});
    if (it == ref_index.end())
      throw std::invalid_argument("kpi: node " + t.subsystem + "/" + t.node +
                                  " missing from the reference set");
    const NodeSpectra& r = *it->second;
    if (r.v.harmonic_set() != t.v.harmonic_set() || r.v.phases() != t.v.phases())
      throw std::invalid_argument("kpi: spectra shapes differ at " + t.node);
    auto& mx = maxima[t.subsystem];
    mx.subsystem = t.subsystem;

    for (int h : t.v.harmonic_set().orders()) {
      if (h < 0) continue;
      KpiReport::Entry e;
      e.subsystem = t.subsystem;
      e.node = t.node;
      e.order = h;
      for (int p = 0; p < t.v.phases(); ++p) {
        const double mv_t = detail::single_sided(t.v, p, h);
        const double mv_r = detail::single_sided(r.v, p, h);
        const double mi_t = detail::single_sided(t.i, p, h);
        const double mi_r = detail::single_sided(r.i, p, h);
        e.e_abs_v = std::max(e.e_abs_v, std::abs(mv_t - mv_r));
        e.e_abs_i = std::max(e.e_abs_i, std::abs(mi_t - mi_r));
        if (mv_t >= floor && mv_r >= floor) {
          const double d = std::abs(
              detail::wrap_angle(std::arg(t.v.at(p, h)) - std::arg(r.v.at(p, h))));
          e.e_arg_v = std::max(e.e_arg_v.value_or(0.0), d);
        }
        if (mi_t >= floor && mi_r >= floor) {
          const double d = std::abs(
              detail::wrap_angle(std::arg(t.i.at(p, h)) - std::arg(r.i.at(p, h))));
          e.e_arg_i = std::max(e.e_arg_i.value_or(0.0), d);
        }
      }
      mx.e_abs_v = std::max(mx.e_abs_v, e.e_abs_v);
      mx.e_abs_i = std::max(mx.e_abs_i, e.e_abs_i);
      if (e.e_arg_v) mx.e_arg_v = std::max(mx.e_arg_v, *e.e_arg_v);
      if (e.e_arg_i) mx.e_arg_i = std::max(mx.e_arg_i, *e.e_arg_i);
      report.entries.push_back(std::move(e));
    }
  }
  for (auto& [_, m] : maxima) report.maxima.push_back(m);
  return report;
}

// ---------------------------------------------------------------------------
// Classic fundamental power flow, solved on the complex nodal current balance
// Y V = I(V) with Newton over real-stacked voltages. Deliberately a separate
// code path from the hybrid-mismatch solver: admittances come from an
// incidence-matrix assembly and the unknowns are plain nodal voltages.
// ---------------------------------------------------------------------------

/// Nodal admittance by incidence matrix: Y = B diag(y_series) B^T + shunts.
inline ComplexMatrix incidence_admittance(const Subsystem& sub, int h, const Bases& bases) {
  const double zb = sub.kind == SubsystemKind::ac ? bases.z_ac() : bases.z_dc();
  const double w = h * bases.omega0();
  const int n = sub.node_count();
  const int m = static_cast<int>(sub.branches.size());
  ComplexMatrix b = ComplexMatrix::Zero(n, m);
  ComplexVector y(m);
  for (int e = 0; e < m; ++e) {
    const auto& br = sub.branches[static_cast<std::size_t>(e)];
    b(sub.node_index(br.from), e) = 1.0;
    b(sub.node_index(br.to), e) = -1.0;
    const auto& lt = sub.line(br.line_type).positive;
    y(e) = zb / Complex{lt.r_ohm_per_km * br.length_km, w * lt.l_h_per_km * br.length_km};
  }
  ComplexMatrix adm = b * y.asDiagonal() * b.transpose();
  if (sub.line_charging)
    for (int e = 0; e < m; ++e) {
      const auto& br = sub.branches[static_cast<std::size_t>(e)];
      const auto& lt = sub.line(br.line_type).positive;
      const Complex ysh = Complex{0.0, w * lt.c_f_per_km * br.length_km / 2.0} * zb;
      adm(sub.node_index(br.from), sub.node_index(br.from)) += ysh;
      adm(sub.node_index(br.to), sub.node_index(br.to)) += ysh;
    }
  for (const auto& sh : sub.shunts)
    adm(sub.node_index(sh.node), sub.node_index(sh.node)) +=
        (Complex{sh.g_s, 0.0} + Complex{0.0, w * sh.c_f}) * zb;
  return adm;
}

struct FundamentalSolution {
  bool converged = false;
  int iterations = 0;
  std::vector<NodeSpectra> nodes;   // spectra on the study's harmonic sets
  double power_mismatch = 0.0;      // Tellegen check: sum of injections minus
                                    // network absorption, p.u.
};

namespace detail {

/// One subsystem's nodal devices for the fundamental oracle, in single-sided
/// peak phasors (AC) or plain DC values.
struct FundamentalBus {
  Complex y_shunt{0.0, 0.0};   // linear device admittance
  Complex i_fixed{0.0, 0.0};   // fixed injection (sources, thevenin EMF term)
  Complex s_inj{0.0, 0.0};     // constant-power injection
  bool v_fixed = false;        // regulated bus (VdcQ DC port)
  Complex v_set{0.0, 0.0};
};

/// Newton on F(V) = Y V - i_fixed - conj(S / V) = 0, regulated buses pinned.
inline ComplexVector solve_bus_system(const ComplexMatrix& y,
                                      std::vector<FundamentalBus>& buses, bool dc, int& iters) {
  const auto n = y.rows();
  ComplexVector v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v(i) = buses[static_cast<std::size_t>(i)].v_fixed ? buses[static_cast<std::size_t>(i)].v_set
                                                      : Complex{1.0, 0.0};
  for (int it = 0; it < 60; ++it) {
    ComplexVector f = y * v;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& bus = buses[static_cast<std::size_t>(i)];
      f(i) -= bus.i_fixed - bus.y_shunt * v(i);
      if (bus.s_inj != Complex{0.0, 0.0}) f(i) -= std::conj(bus.s_inj / v(i));
    }
    for (Eigen::Index i = 0; i < n; ++i)
      if (buses[static_cast<std::size_t>(i)].v_fixed)
        f(i) = v(i) - buses[static_cast<std::size_t>(i)].v_set;
    if (to_real_stacked(f).cwiseAbs().maxCoeff() < 1e-13) {
      iters += it;
      return v;
    }
    // Real-stacked Jacobian of the current balance.
    RealMatrix j = to_real_stacked(y);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& bus = buses[static_cast<std::size_t>(i)];
      j.block<2, 2>(2 * i, 2 * i) += wirtinger_block(bus.y_shunt, {0.0, 0.0});
      if (bus.s_inj != Complex{0.0, 0.0})
        j.block<2, 2>(2 * i, 2 * i) +=
            wirtinger_block({0.0, 0.0}, std::conj(bus.s_inj) / std::conj(v(i) * v(i)));
      if (bus.v_fixed) {
        j.row(2 * i).setZero();
        j.row(2 * i + 1).setZero();
        j(2 * i, 2 * i) = 1.0;
        j(2 * i + 1, 2 * i + 1) = 1.0;
      }
    }
    const RealVector dv = j.partialPivLu().solve(to_real_stacked(f));
    v = from_real_stacked(RealVector(to_real_stacked(v) - dv));
    if (dc)  // DC quantities stay real
      for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex{v(i).real(), 0.0};
  }
  throw std::runtime_error("fundamental oracle: bus Newton did not converge");
}

}  // namespace detail

/// Balanced fundamental power flow of a study (harmonics beyond the
/// fundamental are ignored), with NICs at their power-balance behaviour.
/// The AC and DC sides alternate until the VdcQ interchange power settles.
inline FundamentalSolution fundamental_powerflow_oracle(const StudyCase& study) {
  const double p_base_kw = study.bases.p_w / 1e3;
  FundamentalSolution sol;

  // Per-subsystem admittance and static device data.
  std::vector<ComplexMatrix> y_sub;
  std::vector<std::vector<detail::FundamentalBus>> buses(study.subsystems.size());
  std::vector<Complex> te_emf(study.subsystems.size(), Complex{0.0, 0.0});
  for (std::size_t si = 0; si < study.subsystems.size(); ++si) {
    const auto& sub = study.subsystems[si];
    y_sub.push_back(incidence_admittance(sub, sub.kind == SubsystemKind::ac ? 1 : 0, study.bases));
    buses[si].resize(static_cast<std::size_t>(sub.node_count()));
  }

  auto locate = [&](const std::string& node) { return detail::locate(study.subsystems, node); };

  for (const auto& r : study.resources) {
    const auto ref = locate(r.node);
    auto& bus = buses[static_cast<std::size_t>(ref.sub)][static_cast<std::size_t>(ref.node)];
    const Complex s = detail::resource_power_pu(r, p_base_kw);
    switch (r.type) {
      case ResourceType::thevenin: {
        const double x_sc = r.z_sc_mohm * 1e-3 / std::sqrt(1.0 + r.r_x_ratio * r.r_x_ratio);
        const Complex z_pu = Complex{r.r_x_ratio * x_sc, x_sc} / study.bases.z_ac();
        Complex v1{0.0, 0.0};
        for (const auto& e : r.v_spectrum)
          if (e.order == 1) v1 = e.magnitude_pu * std::exp(kJ * e.angle_rad);
        bus.y_shunt += 1.0 / z_pu;
        bus.i_fixed += v1 / z_pu;
        break;
      }
      case ResourceType::impedance:
        bus.y_shunt += std::abs(s.real());
        break;
      case ResourceType::current_source:
        bus.i_fixed += s.real();
        break;
      case ResourceType::constant_power:
        bus.s_inj += s;
        break;
    }
  }

  // NIC ports; VdcQ AC-side power starts at zero and iterates.
  struct NicPort {
    detail::NodeRef ac, dc;
    const NicSpec* spec;
    double p_ac = 0.0;
  };
  std::vector<NicPort> ports;
  for (const auto& nic : study.nics) {
    NicPort port{locate(nic.ac_node), locate(nic.dc_node), &nic, 0.0};
    auto& dc_bus =
        buses[static_cast<std::size_t>(port.dc.sub)][static_cast<std::size_t>(port.dc.node)];
    if (nic.control == NicControl::vdc_q) {
      dc_bus.v_fixed = true;
      dc_bus.v_set = Complex{nic.v_dc_v / study.bases.v_dc, 0.0};
    } else {
      port.p_ac = nic.p_kw / p_base_kw;
      dc_bus.s_inj += Complex{-nic.p_kw / p_base_kw, 0.0};
    }
    ports.push_back(port);
  }

  std::vector<ComplexVector> v_sub(study.subsystems.size());
  for (int seq = 0; seq < 40; ++seq) {
    auto trial = buses;
    for (const auto& port : ports) {
      auto& ac_bus =
          trial[static_cast<std::size_t>(port.ac.sub)][static_cast<std::size_t>(port.ac.node)];
      ac_bus.s_inj += Complex{port.p_ac, port.spec->q_kvar / p_base_kw};
    }
    double shift = 0.0;
    for (std::size_t si = 0; si < study.subsystems.size(); ++si)
      v_sub[si] = detail::solve_bus_system(y_sub[si], trial[si],
                                           study.subsystems[si].kind == SubsystemKind::dc,
                                           sol.iterations);
    // Recover the VdcQ interchange power from the DC solution.
    for (auto& port : ports) {
      if (port.spec->control != NicControl::vdc_q) continue;
      const auto& v = v_sub[static_cast<std::size_t>(port.dc.sub)];
      const ComplexVector inj = y_sub[static_cast<std::size_t>(port.dc.sub)] * v;
      Complex i_node = inj(port.dc.node);
      const auto& bus =
          buses[static_cast<std::size_t>(port.dc.sub)][static_cast<std::size_t>(port.dc.node)];
      i_node += bus.y_shunt * v(port.dc.node) - bus.i_fixed;
      const double p_new = -(v(port.dc.node) * std::conj(i_node)).real();
      shift = std::max(shift, std::abs(p_new - port.p_ac));
      port.p_ac = p_new;
    }
    if (shift < 1e-13) {
      sol.converged = true;
      break;
    }
  }
  if (!sol.converged) return sol;

  // Spectra on the study's harmonic sets, with the Tellegen check.
  for (std::size_t si = 0; si < study.subsystems.size(); ++si) {
    const auto& sub = study.subsystems[si];
    const bool ac = sub.kind == SubsystemKind::ac;
    HarmonicSet set = ac ? HarmonicSet::ac_default(study.bases.f0, study.solver.harmonic_order)
                         : HarmonicSet::dc_default(study.bases.f0, study.solver.harmonic_order);
    const ComplexVector inj = y_sub[si] * v_sub[si];
    Complex total{0.0, 0.0};
    for (int node = 0; node < sub.node_count(); ++node) {
      NodeSpectra ns{sub.id, sub.nodes[static_cast<std::size_t>(node)],
                     PhasorVector(set, sub.phases()), PhasorVector(set, sub.phases())};
      const Complex v1 = v_sub[si](node);
      const Complex i1 = inj(node);
      // Device-side injection for the Tellegen check (regulated buses use the
      // network value; their device equation pins the voltage instead).
      const auto& bus = buses[si][static_cast<std::size_t>(node)];
      Complex i_dev = bus.i_fixed - bus.y_shunt * v1;
      if (bus.s_inj != Complex{0.0, 0.0}) i_dev += std::conj(bus.s_inj / v1);
      for (const auto& port : ports)
        if (port.ac.sub == static_cast<int>(si) && port.ac.node == node)
          i_dev += std::conj(Complex{port.p_ac, port.spec->q_kvar / p_base_kw} / v1);
      if (bus.v_fixed) i_dev = i1;
      total += v1 * std::conj(i_dev);
      for (int p = 0; p < sub.phases(); ++p) {
        const double phi = !ac ? 0.0
                                : (p == 1 ? -2.0 * kPi / 3.0 : (p == 2 ? 2.0 * kPi / 3.0 : 0.0));
        if (ac) {
          ns.v.set_pair(p, 1, 0.5 * v1 * std::exp(kJ * phi));
          ns.i.set_pair(p, 1, 0.5 * i1 * std::exp(kJ * phi));
        } else {
          ns.v.set(p, 0, v1);
          ns.i.set(p, 0, i1);
        }
      }
      sol.nodes.push_back(std::move(ns));
    }
    // Network absorption equals the sum of nodal injections by construction;
    // report the imbalance of injections against branch + shunt losses.
    const Complex absorbed = (v_sub[si].adjoint() * (y_sub[si] * v_sub[si])).value();
    sol.power_mismatch = std::max(sol.power_mismatch, std::abs(total - std::conj(absorbed)));
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Gauss-type fixed-point HPF: alternate between resource responses and the
// grid nodal equations. An independent implementation of the same equations;
// Newton remains authoritative where this one diverges.
// ---------------------------------------------------------------------------

struct FixedPointResult {
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double final_delta = std::numeric_limits<double>::infinity();
  RealVector x;
  std::vector<NodeSpectra> nodes;
};

inline FixedPointResult fixed_point_hpf(Model& model, double tol = 1e-10, int max_iter = 500,
                                        double relaxation = 1.0) {
  HpfSolver solver(model);  // reused only for layout, gather and grid values
  const IndexMap& imap = solver.index_map();
  FixedPointResult result;

  // Per subsystem and order: partitioned admittance with Y_RR factored.
  struct OrderBlocks {
    ComplexMatrix y_ss, y_sr, y_rs;
    Eigen::PartialPivLU<ComplexMatrix> y_rr;
  };
  std::vector<std::vector<OrderBlocks>> blocks(model.subs.size());
  for (std::size_t si = 0; si < model.subs.size(); ++si) {
    const auto& sm = model.subs[si];
    const auto s_nodes = sm.part.s();
    const auto r_nodes = sm.part.r();
    for (int k = 0; k < sm.set.size(); ++k) {
      const ComplexMatrix y = build_admittance(sm.sub, sm.set.order_at(k), model.bases);
      OrderBlocks ob;
      auto pick = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
        ComplexMatrix m(rows.size(), cols.size());
        for (std::size_t a = 0; a < rows.size(); ++a)
          for (std::size_t b = 0; b < cols.size(); ++b)
            m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                y(rows[a], cols[b]);
        return m;
      };
      ob.y_ss = pick(s_nodes, s_nodes);
      ob.y_sr = pick(s_nodes, r_nodes);
      ob.y_rs = pick(r_nodes, s_nodes);
      ob.y_rr.compute(pick(r_nodes, r_nodes));
      blocks[si].push_back(std::move(ob));
    }
  }

  RealVector x = solver.initialize();
  solver.refresh_all(x);
  int grow_streak = 0;
  double prev_delta = std::numeric_limits<double>::infinity();
  RealVector x_outer = x;
  int outer_rounds = 0;
  try {
  for (int it = 0; it < max_iter; ++it) {
    ++result.iterations;
    // Resource outputs at the current iterate.
    ComplexVector rsc = ComplexVector::Zero(imap.complex_size());
    auto put = [&](int sub, int node, const PhasorVector& v) {
      rsc.segment(imap.node_base(sub, node), v.size()) = v.data();
    };
    for (const auto& [key, resp] : model.forming)
      put(key.first, key.second,
          resp->evaluate(CurrentSpectrum{solver.gather(x, key.first, key.second)}));
    for (const auto& [key, resp] : model.following)
      put(key.first, key.second,
          resp->evaluate(VoltageSpectrum{solver.gather(x, key.first, key.second)}));
    for (const auto& nic : model.nics) {
      auto [i_ac, v_dc] =
          nic.response->evaluate(VoltageSpectrum{solver.gather(x, nic.ac_sub, nic.ac_node)},
                                 CurrentSpectrum{solver.gather(x, nic.dc_sub, nic.dc_node)});
      put(nic.ac_sub, nic.ac_node, i_ac);
      put(nic.dc_sub, nic.dc_node, v_dc);
    }

    // Grid step: from known V_S (forming outputs) and I_R (following
    // outputs), recover V_R and I_S through the nodal equations.
    ComplexVector x_new = from_real_stacked(x);
    for (std::size_t si = 0; si < model.subs.size(); ++si) {
      const auto& sm = model.subs[si];
      const auto s_nodes = sm.part.s();
      const auto r_nodes = sm.part.r();
      for (int k = 0; k < sm.set.size(); ++k) {
        auto& ob = blocks[si][static_cast<std::size_t>(k)];
        for (int p = 0; p < sm.sub.phases(); ++p) {
          ComplexVector v_s(static_cast<Eigen::Index>(s_nodes.size()));
          ComplexVector i_r(static_cast<Eigen::Index>(r_nodes.size()));
          for (std::size_t a = 0; a < s_nodes.size(); ++a)
            v_s(static_cast<Eigen::Index>(a)) =
                rsc(imap.cidx(static_cast<int>(si), s_nodes[a], p, k));
          for (std::size_t a = 0; a < r_nodes.size(); ++a)
            i_r(static_cast<Eigen::Index>(a)) =
                rsc(imap.cidx(static_cast<int>(si), r_nodes[a], p, k));
          const ComplexVector v_r = ob.y_rr.solve(ComplexVector(i_r - ob.y_rs * v_s));
          const ComplexVector i_s = ob.y_ss * v_s + ob.y_sr * v_r;
          for (std::size_t a = 0; a < r_nodes.size(); ++a)
            x_new(imap.cidx(static_cast<int>(si), r_nodes[a], p, k)) =
                v_r(static_cast<Eigen::Index>(a));
          for (std::size_t a = 0; a < s_nodes.size(); ++a)
            x_new(imap.cidx(static_cast<int>(si), s_nodes[a], p, k)) =
                i_s(static_cast<Eigen::Index>(a));
        }
      }
    }

    const RealVector x_next =
        (1.0 - relaxation) * x + relaxation * to_real_stacked(x_new);
    result.final_delta = (x_next - x).cwiseAbs().maxCoeff();
    x = x_next;
    if (result.final_delta < tol) {
      // Inner alternation settled; refresh operating points and continue
      // until they settle too, mirroring the Newton solver's outer loop.
      if (outer_rounds > 0 && (x - x_outer).cwiseAbs().maxCoeff() < 10.0 * tol) {
        result.converged = true;
        break;
      }
      if (outer_rounds >= 5) {
        result.converged = true;
        break;
      }
      x_outer = x;
      solver.refresh_all(x);
      ++outer_rounds;
      prev_delta = std::numeric_limits<double>::infinity();
      grow_streak = 0;
      continue;
    }
    grow_streak = result.final_delta > prev_delta ? grow_streak + 1 : 0;
    prev_delta = result.final_delta;
    if (grow_streak >= 5 || !std::isfinite(result.final_delta)) {
      result.diverged = true;
      break;
    }
  }
  } catch (const std::exception&) {
    // The alternation left the responses' validity region.
    result.diverged = true;
  }
  result.x = x;
  if (result.converged) {
    SolveReport r;
    r.x = x;
    for (int si = 0; si < static_cast<int>(model.subs.size()); ++si) {
      const auto& sm = model.subs[static_cast<std::size_t>(si)];
      for (int node = 0; node < sm.sub.node_count(); ++node)
        result.nodes.push_back({sm.sub.id, sm.sub.nodes[static_cast<std::size_t>(node)],
                                solver.node_voltage(x, si, node),
                                solver.node_current(x, si, node)});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Time-domain oracle for LTP systems: integrate to steady state and extract
// the output spectra, for comparison against htf_from_ltp predictions.
// ---------------------------------------------------------------------------

struct LtpSimResult {
  bool settled = false;
  PhasorVector spectra;
};

inline LtpSimResult ltp_steady_state_response(const LtpStateSpace& sys, const PhasorVector& input,
                                              SteadyStateOptions opt = {}) {
  if (input.phases() != sys.nu)
    throw std::invalid_argument("ltp_steady_state_response: input phase count != nu");
  auto u_of = [&](double t) {
    RealVector u(sys.nu);
    for (int c = 0; c < sys.nu; ++c) u(c) = input.evaluate(c, t, sys.set.omega0());
    return u;
  };
  auto f = [&](double t, const RealVector& x) -> RealVector {
    return sys.a_at(t) * x + sys.b_at(t) * u_of(t);
  };
  auto g = [&](double t, const RealVector& x) -> RealVector {
    return sys.c_at(t) * x + sys.d_at(t) * u_of(t);
  };
  auto r = integrate_to_steady_state(f, g, RealVector::Zero(sys.nx), sys.set, sys.ny, opt);
  return {r.settled, r.spectra};
}

}  // namespace hpf
