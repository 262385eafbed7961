#pragma once

#include "hpf/study.hpp"

#include <random>
#include <string>
#include <vector>

namespace hpf {

/// Built-in benchmark: the CIGRE-style low-voltage AC microgrid (nodes
/// N1-N18) extended by a DC subsystem (N19-N26), interfaced through four
/// NICs. Same content as the shipped study file; editable there.
inline StudyCase build_cigre_benchmark(NicTier nic_tier = NicTier::power_balance) {
  StudyCase study;
  study.bases = Bases{50e3, 230.0, 900.0, 50.0};
  study.solver.harmonic_order = 25;

  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  for (int n = 1; n <= 18; ++n) ac.nodes.push_back("N" + std::to_string(n));
  ac.line_types = {
      {"AC-T1", {3.30, 0.45e-3, 150e-9}, {}, {}},
      {"AC-T2", {1.21, 0.42e-3, 230e-9}, {}, {}},
      {"AC-T3", {0.78, 0.40e-3, 210e-9}, {}, {}},
      {"AC-T4", {0.55, 0.39e-3, 260e-9}, {}, {}},
      {"AC-T5", {0.27, 0.38e-3, 320e-9}, {}, {}},
  };
  ac.branches = {
      {"N1", "N2", 0.070, "AC-T5"},  {"N2", "N3", 0.030, "AC-T1"},
      {"N2", "N4", 0.035, "AC-T5"},  {"N4", "N5", 0.030, "AC-T3"},
      {"N4", "N6", 0.105, "AC-T2"},  {"N6", "N7", 0.030, "AC-T2"},
      {"N7", "N14", 0.038, "AC-T3"}, {"N4", "N8", 0.070, "AC-T4"},
      {"N8", "N9", 0.030, "AC-T5"},  {"N8", "N10", 0.105, "AC-T2"},
      {"N10", "N11", 0.030, "AC-T1"},{"N10", "N12", 0.035, "AC-T2"},
      {"N12", "N13", 0.030, "AC-T2"},{"N9", "N15", 0.030, "AC-T5"},
      {"N13", "N16", 0.030, "AC-T5"},{"N11", "N17", 0.030, "AC-T5"},
      {"N7", "N18", 0.030, "AC-T5"},
  };
  study.subsystems.push_back(std::move(ac));

  Subsystem dc;
  dc.id = "dc";
  dc.kind = SubsystemKind::dc;
  for (int n = 19; n <= 26; ++n) dc.nodes.push_back("N" + std::to_string(n));
  dc.line_types = {{"DC-T1", {0.08, 0.28e-3, 292e-9}, {}, {}}};
  dc.branches = {
      {"N19", "N23", 0.25, "DC-T1"}, {"N20", "N24", 0.50, "DC-T1"},
      {"N21", "N25", 1.00, "DC-T1"}, {"N22", "N26", 2.00, "DC-T1"},
      {"N23", "N25", 0.50, "DC-T1"}, {"N23", "N26", 0.50, "DC-T1"},
      {"N25", "N24", 0.50, "DC-T1"},
  };
  study.subsystems.push_back(std::move(dc));

  // Feeding substation: Thevenin equivalent with EN-50160-style harmonics.
  ResourceSpec te;
  te.node = "N1";
  te.type = ResourceType::thevenin;
  te.z_sc_mohm = 16.3;
  te.r_x_ratio = 0.125;
  te.s_sc_kw = 630.0;
  te.v_spectrum = {
      {1, 1.0, 0.0},         {5, 0.060, kPi / 8},  {7, 0.050, kPi / 12},
      {11, 0.035, kPi / 16}, {13, 0.030, kPi / 8}, {17, 0.020, kPi / 12},
      {19, 0.015, kPi / 16}, {23, 0.015, kPi / 16},
  };
  study.resources.push_back(std::move(te));

  auto pq = [](const std::string& node, double p_kw, double pf) {
    ResourceSpec r;
    r.node = node;
    r.type = ResourceType::constant_power;
    r.p_kw = p_kw;
    r.pf = pf;
    return r;
  };
  auto passive = [](const std::string& node, ResourceType type, double p_kw) {
    ResourceSpec r;
    r.node = node;
    r.type = type;
    r.p_kw = p_kw;
    return r;
  };
  study.resources.push_back(pq("N5", -20.6, 0.97));
  study.resources.push_back(pq("N9", 49.1, 0.95));
  study.resources.push_back(pq("N9", 2.0, 1.00));
  study.resources.push_back(pq("N11", 11.2, 0.95));
  study.resources.push_back(pq("N11", 9.1, 0.95));
  study.resources.push_back(pq("N13", 10.5, 0.95));
  study.resources.push_back(pq("N13", -10.0, 1.00));
  study.resources.push_back(passive("N3", ResourceType::impedance, -20.0));
  study.resources.push_back(passive("N14", ResourceType::impedance, -15.0));
  study.resources.push_back(passive("N23", ResourceType::current_source, 5.0));
  study.resources.push_back(passive("N25", ResourceType::current_source, 10.0));
  study.resources.push_back(passive("N26", ResourceType::current_source, 5.0));
  study.resources.push_back(passive("N24", ResourceType::impedance, -8.0));

  auto nic = [&](const std::string& ac_node, const std::string& dc_node, NicControl control,
                 double p_kw, double q_kvar) {
    NicSpec n;
    n.ac_node = ac_node;
    n.dc_node = dc_node;
    n.control = control;
    n.tier = nic_tier;
    n.p_kw = p_kw;
    n.q_kvar = q_kvar;
    n.v_dc_v = 900.0;
    n.hardware = NicHardwareParams{};
    return n;
  };
  study.nics.push_back(nic("N15", "N19", NicControl::vdc_q, 0.0, 9.9));
  study.nics.push_back(nic("N16", "N20", NicControl::pq, 30.0, 9.9));
  study.nics.push_back(nic("N17", "N21", NicControl::pq, -25.0, 8.2));
  study.nics.push_back(nic("N18", "N22", NicControl::pq, 30.0, 9.9));
  return study;
}

/// Reduced benchmark for time-domain validation: the substation feeder path
/// down to one VdcQ NIC, with one DC current source and one DC impedance
/// load behind it.
inline StudyCase build_reduced_benchmark(int harmonic_order = 25) {
  StudyCase study;
  study.bases = Bases{50e3, 230.0, 900.0, 50.0};
  study.solver.harmonic_order = harmonic_order;

  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"N1", "N2", "N4", "N8", "N9", "N15"};
  ac.line_types = {
      {"AC-T4", {0.55, 0.39e-3, 260e-9}, {}, {}},
      {"AC-T5", {0.27, 0.38e-3, 320e-9}, {}, {}},
  };
  ac.branches = {
      {"N1", "N2", 0.070, "AC-T5"}, {"N2", "N4", 0.035, "AC-T5"},
      {"N4", "N8", 0.070, "AC-T4"}, {"N8", "N9", 0.030, "AC-T5"},
      {"N9", "N15", 0.030, "AC-T5"},
  };
  study.subsystems.push_back(std::move(ac));

  Subsystem dc;
  dc.id = "dc";
  dc.kind = SubsystemKind::dc;
  dc.nodes = {"N19", "N23", "N24"};
  dc.line_types = {{"DC-T1", {0.08, 0.28e-3, 292e-9}, {}, {}}};
  dc.branches = {{"N19", "N23", 0.25, "DC-T1"}, {"N23", "N24", 1.00, "DC-T1"}};
  study.subsystems.push_back(std::move(dc));

  ResourceSpec te;
  te.node = "N1";
  te.type = ResourceType::thevenin;
  te.z_sc_mohm = 16.3;
  te.r_x_ratio = 0.125;
  te.s_sc_kw = 630.0;
  te.v_spectrum = {
      {1, 1.0, 0.0},         {5, 0.060, kPi / 8},  {7, 0.050, kPi / 12},
      {11, 0.035, kPi / 16}, {13, 0.030, kPi / 8}, {17, 0.020, kPi / 12},
      {19, 0.015, kPi / 16}, {23, 0.015, kPi / 16},
  };
  study.resources.push_back(std::move(te));

  ResourceSpec isrc;
  isrc.node = "N23";
  isrc.type = ResourceType::current_source;
  isrc.p_kw = 5.0;
  study.resources.push_back(std::move(isrc));

  ResourceSpec zload;
  zload.node = "N24";
  zload.type = ResourceType::impedance;
  zload.p_kw = -8.0;
  study.resources.push_back(std::move(zload));

  NicSpec nic;
  nic.ac_node = "N15";
  nic.dc_node = "N19";
  nic.control = NicControl::vdc_q;
  nic.tier = NicTier::averaged;
  nic.q_kvar = 9.9;
  nic.v_dc_v = 900.0;
  nic.hardware = NicHardwareParams{};
  study.nics.push_back(std::move(nic));
  return study;
}

/// Randomized small hybrid case (6 nodes, low harmonic order) for Jacobian
/// and cross-solver checks. Deterministic per seed.
inline StudyCase build_small_hybrid(unsigned seed, NicTier tier = NicTier::power_balance) {
  std::mt19937 rng(seed);
  auto uni = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  StudyCase study;
  study.bases = Bases{50e3, 230.0, 900.0, 50.0};
  study.solver.harmonic_order = 2 + static_cast<int>(rng() % 4);  // 2..5
  study.solver.tol = 1e-11;
  study.solver.max_iter = 30;

  Subsystem ac;
  ac.id = "ac";
  ac.kind = SubsystemKind::ac;
  ac.nodes = {"A1", "A2", "A3"};
  ac.line_types = {{"L", {uni(0.2, 1.5), uni(0.2e-3, 0.6e-3), uni(100e-9, 400e-9)}, {}, {}}};
  ac.branches = {{"A1", "A2", uni(0.02, 0.12), "L"}, {"A2", "A3", uni(0.02, 0.12), "L"}};
  study.subsystems.push_back(std::move(ac));

  Subsystem dc;
  dc.id = "dc";
  dc.kind = SubsystemKind::dc;
  dc.nodes = {"D1", "D2", "D3"};
  dc.line_types = {{"LD", {uni(0.05, 0.2), uni(0.1e-3, 0.5e-3), uni(100e-9, 400e-9)}, {}, {}}};
  dc.branches = {{"D1", "D2", uni(0.1, 0.8), "LD"}, {"D2", "D3", uni(0.1, 0.8), "LD"}};
  study.subsystems.push_back(std::move(dc));

  ResourceSpec te;
  te.node = "A1";
  te.type = ResourceType::thevenin;
  te.z_sc_mohm = uni(10.0, 40.0);
  te.r_x_ratio = uni(0.05, 0.4);
  te.v_spectrum = {{1, 1.0, 0.0}, {5, uni(0.0, 0.06), uni(-kPi, kPi)}};
  study.resources.push_back(std::move(te));

  ResourceSpec pq;
  pq.node = "A2";
  pq.type = ResourceType::constant_power;
  pq.p_kw = uni(-25.0, 25.0);
  pq.pf = uni(0.9, 1.0);
  pq.y_harm_g = uni(0.0, 0.3);
  pq.y_harm_b = uni(-0.2, 0.2);
  study.resources.push_back(std::move(pq));

  ResourceSpec zload;
  zload.node = "D3";
  zload.type = ResourceType::impedance;
  zload.p_kw = -uni(3.0, 12.0);
  study.resources.push_back(std::move(zload));

  ResourceSpec isrc;
  isrc.node = "D2";
  isrc.type = ResourceType::current_source;
  isrc.p_kw = uni(-4.0, 4.0);
  study.resources.push_back(std::move(isrc));

  NicSpec nic;
  nic.ac_node = "A3";
  nic.dc_node = "D1";
  nic.control = (rng() % 2 == 0) ? NicControl::vdc_q : NicControl::pq;
  nic.tier = tier;
  nic.q_kvar = uni(-8.0, 8.0);
  nic.p_kw = nic.control == NicControl::pq ? -uni(5.0, 20.0) : 0.0;
  nic.v_dc_v = 900.0;
  nic.hardware = NicHardwareParams{};
  study.nics.push_back(std::move(nic));
  return study;
}

}  // namespace hpf
