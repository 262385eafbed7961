#pragma once

#include "hpf/harmonic.hpp"
#include "hpf/network.hpp"
#include "hpf/nic_averaged.hpp"
#include "hpf/resources.hpp"
#include "hpf/units.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

enum class ResourceType { thevenin, impedance, current_source, constant_power };

/// One single-sided spectral line as printed in data sheets: magnitude in
/// p.u. of the base (1.0 = nominal fundamental) and angle in radians.
struct SpectrumEntry {
  int order = 0;
  double magnitude_pu = 0.0;
  double angle_rad = 0.0;
  bool operator==(const SpectrumEntry&) const = default;
};

struct ResourceSpec {
  std::string node;
  ResourceType type = ResourceType::constant_power;
  // Power sign convention: injection into the grid is positive, so consuming
  // loads carry negative values (data-sheet values are ingested as printed).
  double p_kw = 0.0;
  double pf = 1.0;                 // lagging; reactive power follows the sign of p
  std::optional<double> q_kvar;    // explicit reactive power overrides pf
  std::vector<SpectrumEntry> v_spectrum;  // thevenin source content
  double z_sc_mohm = 0.0;
  double r_x_ratio = 0.0;
  double s_sc_kw = 0.0;  // short-circuit power rating, informational
  double y_harm_g = 0.0;  // constant harmonic admittance of PQ devices
  double y_harm_b = 0.0;
  bool operator==(const ResourceSpec&) const = default;
};

struct NicSpec {
  std::string ac_node, dc_node;
  NicControl control = NicControl::vdc_q;
  NicTier tier = NicTier::power_balance;
  NicCoupling coupling = NicCoupling::full;
  bool series_loss = false;
  double p_kw = 0.0;
  double q_kvar = 0.0;
  double v_dc_v = 900.0;
  std::optional<NicHardwareParams> hardware;
  NicControlParams control_params;
  bool operator==(const NicSpec&) const = default;
};

enum class LinearSolverKind { automatic, dense, sparse };

struct SolverConfig {
  int harmonic_order = 25;
  double tol = 1e-8;
  int max_iter = 20;
  int outer_max = 5;
  double outer_tol = 1e-9;
  double damping = 1.0;
  LinearSolverKind linear_solver = LinearSolverKind::automatic;
  bool operator==(const SolverConfig&) const = default;
};

struct StudyCase {
  int schema_version = 1;
  Bases bases;
  std::vector<Subsystem> subsystems;
  std::vector<ResourceSpec> resources;
  std::vector<NicSpec> nics;
  SolverConfig solver;
  bool operator==(const StudyCase&) const = default;
};

struct SubsystemModel {
  Subsystem sub;
  HarmonicSet set;
  NodePartition part;
  HybridBlocks hybrid;
};

struct NicInstance {
  int ac_sub = -1, ac_node = -1, dc_sub = -1, dc_node = -1;
  std::string ac_name, dc_name;
  double dc_current_estimate_pu = 0.0;  // flat-start seed for the DC port
  std::unique_ptr<TwoPortResponse> response;
};

/// Built study: partitions, hybrid blocks and constructed grid responses.
struct Model {
  Bases bases;
  SolverConfig solver;
  std::vector<SubsystemModel> subs;
  std::map<std::pair<int, int>, std::unique_ptr<FormingResponse>> forming;
  std::map<std::pair<int, int>, std::unique_ptr<FollowingResponse>> following;
  std::vector<NicInstance> nics;

  const SubsystemModel& subsystem(int i) const { return subs.at(static_cast<std::size_t>(i)); }
};

namespace detail {

struct NodeRef {
  int sub = -1, node = -1;
};

inline NodeRef locate(const std::vector<Subsystem>& subs, const std::string& node) {
  for (int si = 0; si < static_cast<int>(subs.size()); ++si)
    if (subs[static_cast<std::size_t>(si)].has_node(node))
      return {si, subs[static_cast<std::size_t>(si)].node_index(node)};
  throw std::invalid_argument("study: node '" + node + "' not found in any subsystem");
}

inline Complex resource_power_pu(const ResourceSpec& r, double p_base_kw) {
  const double p = r.p_kw / p_base_kw;
  double q = 0.0;
  if (r.q_kvar) {
    q = *r.q_kvar / p_base_kw;
  } else if (r.pf < 1.0) {
    if (r.pf <= 0.0) throw std::invalid_argument("study: power factor must be in (0, 1]");
    q = p * std::sqrt(1.0 - r.pf * r.pf) / r.pf;
  }
  return {p, q};
}

}  // namespace detail

inline NicDeviceConfig nic_device_config(const NicSpec& nic, const Bases& bases) {
  const double p_base_kw = bases.p_w / 1e3;
  NicDeviceConfig cfg;
  cfg.control = nic.control;
  cfg.tier = nic.tier;
  cfg.coupling = nic.coupling;
  cfg.series_loss = nic.series_loss;
  if (nic.hardware) cfg.hardware = *nic.hardware;
  cfg.control_params = nic.control_params;
  cfg.setpoint.p_pu = nic.p_kw / p_base_kw;
  cfg.setpoint.q_pu = nic.q_kvar / p_base_kw;
  cfg.setpoint.v_dc_pu = nic.v_dc_v / bases.v_dc;
  return cfg;
}

/// Assembles the node partition, hybrid blocks and resource responses of a
/// validated study. Co-located resources of the same type are aggregated by
/// power summation; mixed types on one node are rejected.
inline Model build_model(const StudyCase& study) {
  study.bases.validate();
  if (study.subsystems.empty()) throw std::invalid_argument("study: no subsystems");

  std::set<std::string> ids, node_names;
  for (const auto& sub : study.subsystems) {
    sub.validate();
    if (!ids.insert(sub.id).second)
      throw std::invalid_argument("study: duplicate subsystem id '" + sub.id + "'");
    for (const auto& n : sub.nodes)
      if (!node_names.insert(n).second)
        throw std::invalid_argument("study: node id '" + n + "' appears in two subsystems");
  }

  Model model;
  model.bases = study.bases;
  model.solver = study.solver;
  const double p_base_kw = study.bases.p_w / 1e3;

  // Aggregate resources per node, rejecting mixed device types.
  struct Aggregated {
    ResourceType type;
    Complex s_pu{0.0, 0.0};
    Complex y_harm{0.0, 0.0};
    const ResourceSpec* thevenin = nullptr;
  };
  std::map<std::string, Aggregated> per_node;
  for (const auto& r : study.resources) {
    auto [it, fresh] = per_node.try_emplace(r.node, Aggregated{r.type, {0, 0}, {0, 0}, nullptr});
    if (!fresh && it->second.type != r.type)
      throw std::invalid_argument("study: node '" + r.node +
                                  "' carries two different device types; aggregate externally");
    if (r.type == ResourceType::thevenin) {
      if (!fresh)
        throw std::invalid_argument("study: node '" + r.node + "' has multiple thevenin sources");
      it->second.thevenin = &r;
    } else {
      it->second.s_pu += detail::resource_power_pu(r, p_base_kw);
      it->second.y_harm += Complex{r.y_harm_g, r.y_harm_b};
    }
  }

  // Node roles for the partition.
  std::vector<std::map<std::string, NodeRole>> roles(study.subsystems.size());
  for (const auto& [name, agg] : per_node) {
    const auto ref = detail::locate(study.subsystems, name);
    auto& role_map = roles[static_cast<std::size_t>(ref.sub)];
    role_map[name] = agg.type == ResourceType::thevenin ? NodeRole::forming_single
                                                        : NodeRole::following_single;
  }
  for (const auto& nic : study.nics) {
    const auto ac = detail::locate(study.subsystems, nic.ac_node);
    const auto dc = detail::locate(study.subsystems, nic.dc_node);
    if (study.subsystems[static_cast<std::size_t>(ac.sub)].kind != SubsystemKind::ac)
      throw std::invalid_argument("study: NIC AC port '" + nic.ac_node +
                                  "' is not on an AC subsystem (unsupported orientation)");
    if (study.subsystems[static_cast<std::size_t>(dc.sub)].kind != SubsystemKind::dc)
      throw std::invalid_argument("study: NIC DC port '" + nic.dc_node +
                                  "' is not on a DC subsystem (unsupported orientation)");
    auto place = [&](int sub, const std::string& node, NodeRole role) {
      auto& role_map = roles[static_cast<std::size_t>(sub)];
      if (role_map.count(node))
        throw std::invalid_argument("study: node '" + node +
                                    "' carries both a resource and a NIC port");
      role_map[node] = role;
    };
    place(ac.sub, nic.ac_node, NodeRole::nic_ac);
    place(dc.sub, nic.dc_node, NodeRole::nic_dc);
  }

  // Subsystem models: harmonic sets, partitions, hybrid blocks.
  for (const auto& sub : study.subsystems) {
    const int h = study.solver.harmonic_order;
    HarmonicSet set = sub.kind == SubsystemKind::ac
                          ? HarmonicSet::ac_default(study.bases.f0, h)
                          : HarmonicSet::dc_default(study.bases.f0, h);
    const std::size_t si = model.subs.size();
    NodePartition part = classify_nodes(sub, roles[si]);
    HybridBlocks hyb = hybrid_blocks(sub, part, set, study.bases);
    model.subs.push_back({sub, std::move(set), std::move(part), std::move(hyb)});
  }

  // Responses.
  for (const auto& [name, agg] : per_node) {
    const auto ref = detail::locate(study.subsystems, name);
    const auto& sm = model.subs[static_cast<std::size_t>(ref.sub)];
    const int ph = sm.sub.phases();
    const auto key = std::make_pair(ref.sub, ref.node);
    switch (agg.type) {
      case ResourceType::thevenin: {
        const auto& spec = *agg.thevenin;
        if (sm.sub.kind != SubsystemKind::ac)
          throw std::invalid_argument("study: thevenin source '" + name + "' must be on AC");
        std::vector<std::pair<int, Complex>> entries;
        for (const auto& e : spec.v_spectrum)
          entries.emplace_back(e.order,
                               e.magnitude_pu * std::exp(kJ * e.angle_rad));
        VoltageSpectrum v_te{balanced_spectrum(sm.set, ph, entries)};
        model.forming[key] =
            thevenin_response(std::move(v_te), spec.z_sc_mohm * 1e-3, spec.r_x_ratio, study.bases);
        break;
      }
      case ResourceType::impedance:
        model.following[key] =
            std::make_unique<ImpedanceLoadResponse>(agg.s_pu.real(), sm.set, ph);
        break;
      case ResourceType::current_source: {
        CurrentSpectrum i_ref(sm.set, ph);
        if (sm.sub.kind == SubsystemKind::dc)
          i_ref.set(0, 0, Complex{agg.s_pu.real(), 0.0});
        else
          i_ref = CurrentSpectrum{
              balanced_spectrum(sm.set, ph, {{1, Complex{agg.s_pu.real(), 0.0}}})};
        model.following[key] = std::make_unique<CurrentSourceResponse>(std::move(i_ref));
        break;
      }
      case ResourceType::constant_power:
        if (sm.sub.kind != SubsystemKind::ac)
          throw std::invalid_argument("study: constant-power device '" + name +
                                      "' is only supported on AC subsystems");
        model.following[key] =
            std::make_unique<ConstantPowerResponse>(agg.s_pu, sm.set, ph, agg.y_harm);
        break;
    }
  }

  // Transit nodes: grid-following with identically zero injection.
  for (int si = 0; si < static_cast<int>(model.subs.size()); ++si) {
    const auto& sm = model.subs[static_cast<std::size_t>(si)];
    for (int ni : sm.part.r1) {
      const auto key = std::make_pair(si, ni);
      if (!model.following.count(key))
        model.following[key] = zero_injection_response(sm.set, sm.sub.phases());
    }
  }

  for (const auto& nic : study.nics) {
    const auto ac = detail::locate(study.subsystems, nic.ac_node);
    const auto dc = detail::locate(study.subsystems, nic.dc_node);
    const NicDeviceConfig cfg = nic_device_config(nic, study.bases);
    NicInstance inst;
    inst.ac_sub = ac.sub;
    inst.ac_node = ac.node;
    inst.dc_sub = dc.sub;
    inst.dc_node = dc.node;
    inst.ac_name = nic.ac_node;
    inst.dc_name = nic.dc_node;
    inst.dc_current_estimate_pu =
        nic.control == NicControl::pq ? -cfg.setpoint.p_pu / cfg.setpoint.v_dc_pu : 0.0;
    inst.response =
        build_nic_response(cfg, model.subs[static_cast<std::size_t>(ac.sub)].set,
                           model.subs[static_cast<std::size_t>(dc.sub)].set, study.bases);
    model.nics.push_back(std::move(inst));
  }
  return model;
}

}  // namespace hpf
