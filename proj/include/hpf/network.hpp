#pragma once

#include "hpf/harmonic.hpp"
#include "hpf/units.hpp"

#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

enum class SubsystemKind { ac, dc };

struct SequenceParams {
  double r_ohm_per_km = 0.0;
  double l_h_per_km = 0.0;
  double c_f_per_km = 0.0;
  bool operator==(const SequenceParams&) const = default;
};

struct LineType {
  std::string id;
  SequenceParams positive;  // drives the balanced model; also the DC values
  std::optional<SequenceParams> negative;  // ingested for completeness, unused
  std::optional<SequenceParams> zero;
  bool operator==(const LineType&) const = default;
};

struct Branch {
  std::string from, to;
  double length_km = 0.0;
  std::string line_type;
  bool operator==(const Branch&) const = default;
};

/// Shunt element from node to ground.
struct Shunt {
  std::string node;
  double g_s = 0.0;  // conductance, siemens
  double c_f = 0.0;  // capacitance, farad
  bool operator==(const Shunt&) const = default;
};

struct Subsystem {
  std::string id;
  SubsystemKind kind = SubsystemKind::ac;
  std::vector<std::string> nodes;
  std::vector<LineType> line_types;
  std::vector<Branch> branches;
  std::vector<Shunt> shunts;
  bool line_charging = true;  // include the pi-model half capacitances

  bool operator==(const Subsystem&) const = default;

  int phases() const { return kind == SubsystemKind::ac ? 3 : 1; }
  int node_count() const { return static_cast<int>(nodes.size()); }

  int node_index(const std::string& name) const {
    for (int i = 0; i < node_count(); ++i)
      if (nodes[static_cast<std::size_t>(i)] == name) return i;
    throw std::invalid_argument("subsystem " + id + ": unknown node '" + name + "'");
  }

  bool has_node(const std::string& name) const {
    for (const auto& n : nodes)
      if (n == name) return true;
    return false;
  }

  const LineType& line(const std::string& type_id) const {
    for (const auto& lt : line_types)
      if (lt.id == type_id) return lt;
    throw std::invalid_argument("subsystem " + id + ": unknown line type '" + type_id + "'");
  }

  void validate() const {
    if (nodes.empty()) throw std::invalid_argument("subsystem " + id + ": no nodes");
    std::map<std::string, int> seen;
    for (const auto& n : nodes)
      if (++seen[n] > 1)
        throw std::invalid_argument("subsystem " + id + ": duplicate node '" + n + "'");
    for (const auto& b : branches) {
      node_index(b.from);
      node_index(b.to);
      line(b.line_type);
      if (b.length_km <= 0.0)
        throw std::invalid_argument("subsystem " + id + ": branch " + b.from + "-" + b.to +
                                    " has non-positive length");
    }
    for (const auto& lt : line_types)
      if (lt.positive.r_ohm_per_km < 0 || lt.positive.l_h_per_km < 0 || lt.positive.c_f_per_km < 0)
        throw std::invalid_argument("line type " + lt.id + ": negative parameters");
    for (const auto& s : shunts) node_index(s.node);

    // Connectivity over the branch graph.
    if (node_count() > 1) {
      std::vector<bool> reached(nodes.size(), false);
      std::queue<int> q;
      q.push(0);
      reached[0] = true;
      int count = 1;
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (const auto& b : branches) {
          const int i = node_index(b.from), j = node_index(b.to);
          const int other = (i == u) ? j : (j == u ? i : -1);
          if (other >= 0 && !reached[static_cast<std::size_t>(other)]) {
            reached[static_cast<std::size_t>(other)] = true;
            ++count;
            q.push(other);
          }
        }
      }
      if (count != node_count())
        throw std::invalid_argument("subsystem " + id + ": branch graph is not connected");
    }
  }
};

/// Per-phase compound nodal admittance at harmonic order h, in p.u.
/// Branches use the pi model: series R + j h w0 L, half line charging at
/// each end. At h = 0 the series inductance and the charging vanish, which
/// reduces a DC subsystem to its pure-conductance network.
inline ComplexMatrix build_admittance(const Subsystem& sub, int h, const Bases& bases) {
  const double zb = sub.kind == SubsystemKind::ac ? bases.z_ac() : bases.z_dc();
  const double w = static_cast<double>(h) * bases.omega0();
  const int n = sub.node_count();
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (const auto& br : sub.branches) {
    const auto& lt = sub.line(br.line_type).positive;
    const Complex z_series{lt.r_ohm_per_km * br.length_km, w * lt.l_h_per_km * br.length_km};
    if (std::abs(z_series) == 0.0)
      throw std::invalid_argument("build_admittance: zero-impedance branch " + br.from + "-" +
                                  br.to + " in subsystem " + sub.id);
    const Complex ys = zb / z_series;
    const Complex ysh = sub.line_charging
                            ? Complex{0.0, w * lt.c_f_per_km * br.length_km / 2.0} * zb
                            : Complex{0.0, 0.0};
    const int i = sub.node_index(br.from), j = sub.node_index(br.to);
    y(i, i) += ys + ysh;
    y(j, j) += ys + ysh;
    y(i, j) -= ys;
    y(j, i) -= ys;
  }
  for (const auto& sh : sub.shunts) {
    const int i = sub.node_index(sh.node);
    y(i, i) += (Complex{sh.g_s, 0.0} + Complex{0.0, w * sh.c_f}) * zb;
  }
  return y;
}

enum class NodeRole { forming_single, following_single, nic_ac, nic_dc, transit };

/// Node partition of one subsystem: grid-forming single-port resources in S1,
/// grid-following single-port (and transit) in R1, NIC AC ports in R2 and
/// NIC DC ports in S2. Index lists refer to the subsystem's node ordering.
struct NodePartition {
  std::vector<int> s1, s2, r1, r2;

  std::vector<int> s() const {
    std::vector<int> v = s1;
    v.insert(v.end(), s2.begin(), s2.end());
    return v;
  }
  std::vector<int> r() const {
    std::vector<int> v = r1;
    v.insert(v.end(), r2.begin(), r2.end());
    return v;
  }
};

inline NodePartition classify_nodes(const Subsystem& sub,
                                    const std::map<std::string, NodeRole>& roles) {
  NodePartition part;
  for (int i = 0; i < sub.node_count(); ++i) {
    const auto& name = sub.nodes[static_cast<std::size_t>(i)];
    const auto it = roles.find(name);
    const NodeRole role = it == roles.end() ? NodeRole::transit : it->second;
    switch (role) {
      case NodeRole::forming_single:
        part.s1.push_back(i);
        break;
      case NodeRole::following_single:
      case NodeRole::transit:
        part.r1.push_back(i);
        break;
      case NodeRole::nic_ac:
        if (sub.kind != SubsystemKind::ac)
          throw std::invalid_argument(
              "classify_nodes: NIC AC port on non-AC node '" + name +
              "' (grid-forming AC / grid-following DC converters are unsupported)");
        part.r2.push_back(i);
        break;
      case NodeRole::nic_dc:
        if (sub.kind != SubsystemKind::dc)
          throw std::invalid_argument(
              "classify_nodes: NIC DC port on non-DC node '" + name +
              "' (grid-forming AC / grid-following DC converters are unsupported)");
        part.s2.push_back(i);
        break;
    }
  }
  return part;
}

/// Grid-side hybrid parameter blocks per retained order, mapping
/// (I_S, V_R) to (V_S, I_R):
///   V_S = H_SS I_S + H_SR V_R,   I_R = H_RS I_S + H_RR V_R
/// with H_SS = Y_SS^{-1}, H_SR = -Y_SS^{-1} Y_SR, H_RS = Y_RS Y_SS^{-1},
/// H_RR = Y_RR - Y_RS Y_SS^{-1} Y_SR. Matrices are scalar per phase.
struct HybridBlocks {
  HarmonicSet set;
  std::vector<ComplexMatrix> h_ss, h_sr, h_rs, h_rr;  // one per order index

  explicit HybridBlocks(HarmonicSet hs) : set(std::move(hs)) {}
};

inline HybridBlocks hybrid_blocks(const Subsystem& sub, const NodePartition& part,
                                  const HarmonicSet& set, const Bases& bases) {
  const auto s_idx = part.s();
  const auto r_idx = part.r();
  const auto ns = static_cast<Eigen::Index>(s_idx.size());
  const auto nr = static_cast<Eigen::Index>(r_idx.size());
  HybridBlocks hb(set);
  hb.h_ss.reserve(static_cast<std::size_t>(set.size()));

  for (int k = 0; k < set.size(); ++k) {
    const int h = set.order_at(k);
    const ComplexMatrix y = build_admittance(sub, h, bases);
    ComplexMatrix y_ss(ns, ns), y_sr(ns, nr), y_rs(nr, ns), y_rr(nr, nr);
    for (Eigen::Index a = 0; a < ns; ++a)
      for (Eigen::Index b = 0; b < ns; ++b)
        y_ss(a, b) = y(s_idx[static_cast<std::size_t>(a)], s_idx[static_cast<std::size_t>(b)]);
    for (Eigen::Index a = 0; a < ns; ++a)
      for (Eigen::Index b = 0; b < nr; ++b)
        y_sr(a, b) = y(s_idx[static_cast<std::size_t>(a)], r_idx[static_cast<std::size_t>(b)]);
    for (Eigen::Index a = 0; a < nr; ++a)
      for (Eigen::Index b = 0; b < ns; ++b)
        y_rs(a, b) = y(r_idx[static_cast<std::size_t>(a)], s_idx[static_cast<std::size_t>(b)]);
    for (Eigen::Index a = 0; a < nr; ++a)
      for (Eigen::Index b = 0; b < nr; ++b)
        y_rr(a, b) = y(r_idx[static_cast<std::size_t>(a)], r_idx[static_cast<std::size_t>(b)]);

    if (ns == 0) {
      hb.h_ss.emplace_back(0, 0);
      hb.h_sr.emplace_back(0, nr);
      hb.h_rs.emplace_back(nr, 0);
      hb.h_rr.push_back(std::move(y_rr));
      continue;
    }
    Eigen::PartialPivLU<ComplexMatrix> lu(y_ss);
    if (lu_pivot_ratio(lu) < 1e-13)
      throw std::runtime_error("hybrid_blocks: Y_SS singular in subsystem '" + sub.id +
                               "' at harmonic order " + std::to_string(h));
    ComplexMatrix h_ss = lu.solve(ComplexMatrix::Identity(ns, ns));
    ComplexMatrix h_sr = -lu.solve(y_sr);
    hb.h_rs.push_back(y_rs * h_ss);
    hb.h_rr.push_back(y_rr + y_rs * h_sr);
    hb.h_ss.push_back(std::move(h_ss));
    hb.h_sr.push_back(std::move(h_sr));
  }
  return hb;
}

}  // namespace hpf
