#pragma once

#include "hpf/oracle.hpp"
#include "hpf/solver.hpp"
#include "hpf/study.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpf {

using Json = nlohmann::json;

/// Input problem: malformed file, schema violation, dangling reference.
/// Messages carry a JSON-path-like location of the offending field.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

inline const Json& need(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw IoError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw IoError(path + "/" + key + ": missing required field");
  return *it;
}

inline double num(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = need(j, key, path);
  if (!v.is_number()) throw IoError(path + "/" + key + ": expected a number");
  return v.get<double>();
}

inline double num_or(const Json& j, const std::string& key, double fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<double>();
}

inline std::string str(const Json& j, const std::string& key, const std::string& path) {
  const Json& v = need(j, key, path);
  if (!v.is_string()) throw IoError(path + "/" + key + ": expected a string");
  return v.get<std::string>();
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Study files (schema_version 1).
// ---------------------------------------------------------------------------

inline Json study_to_json(const StudyCase& study) {
  Json j;
  j["schema_version"] = study.schema_version;
  j["bases"] = {{"p_kw", study.bases.p_w / 1e3},
                {"v_ac_rms_v", study.bases.v_ac_rms},
                {"v_dc_v", study.bases.v_dc},
                {"f0_hz", study.bases.f0}};
  j["subsystems"] = Json::array();
  for (const auto& sub : study.subsystems) {
    Json js;
    js["id"] = sub.id;
    js["kind"] = sub.kind == SubsystemKind::ac ? "ac" : "dc";
    js["line_charging"] = sub.line_charging;
    js["nodes"] = sub.nodes;
    js["line_types"] = Json::array();
    for (const auto& lt : sub.line_types) {
      Json jl;
      jl["id"] = lt.id;
      jl["r_ohm_per_km"] = lt.positive.r_ohm_per_km;
      jl["l_mh_per_km"] = lt.positive.l_h_per_km * 1e3;
      jl["c_nf_per_km"] = lt.positive.c_f_per_km * 1e9;
      auto seq = [](const SequenceParams& s) {
        return Json{{"r_ohm_per_km", s.r_ohm_per_km},
                    {"l_mh_per_km", s.l_h_per_km * 1e3},
                    {"c_nf_per_km", s.c_f_per_km * 1e9}};
      };
      if (lt.negative) jl["negative_sequence"] = seq(*lt.negative);
      if (lt.zero) jl["zero_sequence"] = seq(*lt.zero);
      js["line_types"].push_back(std::move(jl));
    }
    js["branches"] = Json::array();
    for (const auto& br : sub.branches)
      js["branches"].push_back({{"from", br.from},
                                {"to", br.to},
                                {"length_km", br.length_km},
                                {"type", br.line_type}});
    if (!sub.shunts.empty()) {
      js["shunts"] = Json::array();
      for (const auto& sh : sub.shunts)
        js["shunts"].push_back({{"node", sh.node}, {"g_s", sh.g_s}, {"c_uf", sh.c_f * 1e6}});
    }
    j["subsystems"].push_back(std::move(js));
  }
  j["resources"] = Json::array();
  for (const auto& r : study.resources) {
    Json jr;
    jr["node"] = r.node;
    switch (r.type) {
      case ResourceType::thevenin: {
        jr["type"] = "thevenin";
        jr["z_sc_mohm"] = r.z_sc_mohm;
        jr["r_x_ratio"] = r.r_x_ratio;
        if (r.s_sc_kw != 0.0) jr["s_sc_kw"] = r.s_sc_kw;
        jr["v_spectrum"] = Json::array();
        for (const auto& e : r.v_spectrum)
          jr["v_spectrum"].push_back(
              {{"h", e.order}, {"mag_pu", e.magnitude_pu}, {"angle_rad", e.angle_rad}});
        break;
      }
      case ResourceType::impedance:
        jr["type"] = "Z";
        jr["p_kw"] = r.p_kw;
        break;
      case ResourceType::current_source:
        jr["type"] = "I";
        jr["p_kw"] = r.p_kw;
        break;
      case ResourceType::constant_power:
        jr["type"] = "PQ";
        jr["p_kw"] = r.p_kw;
        jr["pf"] = r.pf;
        if (r.q_kvar) jr["q_kvar"] = *r.q_kvar;
        if (r.y_harm_g != 0.0 || r.y_harm_b != 0.0) {
          jr["y_harm_g"] = r.y_harm_g;
          jr["y_harm_b"] = r.y_harm_b;
        }
        break;
    }
    j["resources"].push_back(std::move(jr));
  }
  j["nics"] = Json::array();
  for (const auto& n : study.nics) {
    Json jn;
    jn["ac_node"] = n.ac_node;
    jn["dc_node"] = n.dc_node;
    jn["control"] = n.control == NicControl::vdc_q ? "VdcQ" : "PQ";
    jn["tier"] = n.tier == NicTier::averaged ? "averaged" : "power-balance";
    jn["coupling"] = n.coupling == NicCoupling::full ? "full" : "none";
    jn["series_loss"] = n.series_loss;
    jn["p_kw"] = n.p_kw;
    jn["q_kvar"] = n.q_kvar;
    jn["v_dc_v"] = n.v_dc_v;
    if (n.hardware)
      jn["hardware"] = {{"l_conv_mh", n.hardware->l_conv * 1e3},
                        {"l_grid_mh", n.hardware->l_grid * 1e3},
                        {"c_filter_uf", n.hardware->c_filter * 1e6},
                        {"r_conv_ohm", n.hardware->r_conv},
                        {"r_grid_ohm", n.hardware->r_grid},
                        {"r_filter_ohm", n.hardware->r_filter},
                        {"c_dc_mf", n.hardware->c_dc * 1e3}};
    jn["control_loops"] = {{"current_loop_hz", n.control_params.current_loop_hz},
                           {"vdc_loop_hz", n.control_params.vdc_loop_hz},
                           {"meas_filter_hz", n.control_params.meas_filter_hz}};
    j["nics"].push_back(std::move(jn));
  }
  j["solver"] = {{"harmonic_order", study.solver.harmonic_order},
                 {"tol", study.solver.tol},
                 {"max_iter", study.solver.max_iter},
                 {"outer_max", study.solver.outer_max},
                 {"outer_tol", study.solver.outer_tol},
                 {"damping", study.solver.damping},
                 {"linear_solver",
                  study.solver.linear_solver == LinearSolverKind::dense
                      ? "dense"
                      : (study.solver.linear_solver == LinearSolverKind::sparse ? "sparse"
                                                                                : "auto")}};
  return j;
}

inline StudyCase study_from_json(const Json& j) {
  using io_detail::need;
  using io_detail::num;
  using io_detail::num_or;
  using io_detail::str;
  StudyCase study;
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw IoError("/schema_version: missing or not an integer");
  study.schema_version = j["schema_version"].get<int>();
  if (study.schema_version != 1)
    throw IoError("/schema_version: unsupported version " +
                  std::to_string(study.schema_version));

  const Json& jb = need(j, "bases", "");
  study.bases.p_w = num(jb, "p_kw", "/bases") * 1e3;
  study.bases.v_ac_rms = num(jb, "v_ac_rms_v", "/bases");
  study.bases.v_dc = num(jb, "v_dc_v", "/bases");
  study.bases.f0 = num(jb, "f0_hz", "/bases");

  const Json& jsubs = need(j, "subsystems", "");
  if (!jsubs.is_array()) throw IoError("/subsystems: expected an array");
  for (std::size_t si = 0; si < jsubs.size(); ++si) {
    const std::string path = "/subsystems/" + std::to_string(si);
    const Json& js = jsubs[si];
    Subsystem sub;
    sub.id = str(js, "id", path);
    const std::string kind = str(js, "kind", path);
    if (kind == "ac")
      sub.kind = SubsystemKind::ac;
    else if (kind == "dc")
      sub.kind = SubsystemKind::dc;
    else
      throw IoError(path + "/kind: expected \"ac\" or \"dc\", got \"" + kind + "\"");
    if (js.contains("line_charging")) sub.line_charging = js["line_charging"].get<bool>();
    for (const auto& n : need(js, "nodes", path)) sub.nodes.push_back(n.get<std::string>());
    const Json& jlt = need(js, "line_types", path);
    for (std::size_t li = 0; li < jlt.size(); ++li) {
      const std::string lpath = path + "/line_types/" + std::to_string(li);
      LineType lt;
      lt.id = str(jlt[li], "id", lpath);
      lt.positive = {num(jlt[li], "r_ohm_per_km", lpath), num(jlt[li], "l_mh_per_km", lpath) / 1e3,
                     num(jlt[li], "c_nf_per_km", lpath) / 1e9};
      auto seq = [&](const char* key) -> std::optional<SequenceParams> {
        if (!jlt[li].contains(key)) return std::nullopt;
        const Json& s = jlt[li][key];
        return SequenceParams{num(s, "r_ohm_per_km", lpath), num(s, "l_mh_per_km", lpath) / 1e3,
                              num(s, "c_nf_per_km", lpath) / 1e9};
      };
      lt.negative = seq("negative_sequence");
      lt.zero = seq("zero_sequence");
      sub.line_types.push_back(std::move(lt));
    }
    const Json& jbr = need(js, "branches", path);
    for (std::size_t bi = 0; bi < jbr.size(); ++bi) {
      const std::string bpath = path + "/branches/" + std::to_string(bi);
      sub.branches.push_back({str(jbr[bi], "from", bpath), str(jbr[bi], "to", bpath),
                              num(jbr[bi], "length_km", bpath), str(jbr[bi], "type", bpath)});
    }
    if (js.contains("shunts"))
      for (std::size_t sh = 0; sh < js["shunts"].size(); ++sh) {
        const std::string spath = path + "/shunts/" + std::to_string(sh);
        sub.shunts.push_back({str(js["shunts"][sh], "node", spath),
                              num_or(js["shunts"][sh], "g_s", 0.0),
                              num_or(js["shunts"][sh], "c_uf", 0.0) / 1e6});
      }
    study.subsystems.push_back(std::move(sub));
  }

  if (j.contains("resources"))
    for (std::size_t ri = 0; ri < j["resources"].size(); ++ri) {
      const std::string path = "/resources/" + std::to_string(ri);
      const Json& jr = j["resources"][ri];
      ResourceSpec r;
      r.node = str(jr, "node", path);
      const std::string type = str(jr, "type", path);
      if (type == "thevenin") {
        r.type = ResourceType::thevenin;
        r.z_sc_mohm = num(jr, "z_sc_mohm", path);
        r.r_x_ratio = num(jr, "r_x_ratio", path);
        r.s_sc_kw = num_or(jr, "s_sc_kw", 0.0);
        if (jr.contains("v_spectrum"))
          for (const auto& e : jr["v_spectrum"])
            r.v_spectrum.push_back({e.at("h").get<int>(), e.at("mag_pu").get<double>(),
                                    num_or(e, "angle_rad", 0.0)});
      } else if (type == "Z") {
        r.type = ResourceType::impedance;
        r.p_kw = num(jr, "p_kw", path);
      } else if (type == "I") {
        r.type = ResourceType::current_source;
        r.p_kw = num(jr, "p_kw", path);
      } else if (type == "PQ") {
        r.type = ResourceType::constant_power;
        r.p_kw = num(jr, "p_kw", path);
        r.pf = num_or(jr, "pf", 1.0);
        if (jr.contains("q_kvar")) r.q_kvar = jr["q_kvar"].get<double>();
        r.y_harm_g = num_or(jr, "y_harm_g", 0.0);
        r.y_harm_b = num_or(jr, "y_harm_b", 0.0);
      } else {
        throw IoError(path + "/type: unknown resource type \"" + type + "\"");
      }
      study.resources.push_back(std::move(r));
    }

  if (j.contains("nics"))
    for (std::size_t ni = 0; ni < j["nics"].size(); ++ni) {
      const std::string path = "/nics/" + std::to_string(ni);
      const Json& jn = j["nics"][ni];
      NicSpec n;
      n.ac_node = str(jn, "ac_node", path);
      n.dc_node = str(jn, "dc_node", path);
      const std::string control = str(jn, "control", path);
      if (control == "VdcQ")
        n.control = NicControl::vdc_q;
      else if (control == "PQ")
        n.control = NicControl::pq;
      else
        throw IoError(path + "/control: expected \"VdcQ\" or \"PQ\", got \"" + control + "\"");
      const std::string tier =
          jn.contains("tier") ? jn["tier"].get<std::string>() : "power-balance";
      if (tier == "averaged")
        n.tier = NicTier::averaged;
      else if (tier == "power-balance")
        n.tier = NicTier::power_balance;
      else
        throw IoError(path + "/tier: expected \"averaged\" or \"power-balance\"");
      const std::string coupling =
          jn.contains("coupling") ? jn["coupling"].get<std::string>() : "full";
      if (coupling == "full")
        n.coupling = NicCoupling::full;
      else if (coupling == "none")
        n.coupling = NicCoupling::none;
      else
        throw IoError(path + "/coupling: expected \"full\" or \"none\"");
      if (jn.contains("series_loss")) n.series_loss = jn["series_loss"].get<bool>();
      n.p_kw = num_or(jn, "p_kw", 0.0);
      n.q_kvar = num_or(jn, "q_kvar", 0.0);
      n.v_dc_v = num_or(jn, "v_dc_v", 900.0);
      if (jn.contains("hardware")) {
        const Json& h = jn["hardware"];
        const std::string hpath = path + "/hardware";
        NicHardwareParams hw;
        hw.l_conv = num(h, "l_conv_mh", hpath) / 1e3;
        hw.l_grid = num(h, "l_grid_mh", hpath) / 1e3;
        hw.c_filter = num(h, "c_filter_uf", hpath) / 1e6;
        hw.r_conv = num_or(h, "r_conv_ohm", 0.0);
        hw.r_grid = num_or(h, "r_grid_ohm", 0.0);
        hw.r_filter = num_or(h, "r_filter_ohm", 0.0);
        hw.c_dc = num(h, "c_dc_mf", hpath) / 1e3;
        n.hardware = hw;
      }
      if (jn.contains("control_loops")) {
        const Json& c = jn["control_loops"];
        n.control_params.current_loop_hz = num_or(c, "current_loop_hz", 1000.0);
        n.control_params.vdc_loop_hz = num_or(c, "vdc_loop_hz", 50.0);
        n.control_params.meas_filter_hz = num_or(c, "meas_filter_hz", 10.0);
      }
      study.nics.push_back(std::move(n));
    }

  if (j.contains("solver")) {
    const Json& s = j["solver"];
    study.solver.harmonic_order = static_cast<int>(num_or(s, "harmonic_order", 25));
    study.solver.tol = num_or(s, "tol", 1e-8);
    study.solver.max_iter = static_cast<int>(num_or(s, "max_iter", 20));
    study.solver.outer_max = static_cast<int>(num_or(s, "outer_max", 5));
    study.solver.outer_tol = num_or(s, "outer_tol", 1e-9);
    study.solver.damping = num_or(s, "damping", 1.0);
    if (s.contains("linear_solver")) {
      const std::string ls = s["linear_solver"].get<std::string>();
      if (ls == "dense")
        study.solver.linear_solver = LinearSolverKind::dense;
      else if (ls == "sparse")
        study.solver.linear_solver = LinearSolverKind::sparse;
      else if (ls == "auto")
        study.solver.linear_solver = LinearSolverKind::automatic;
      else
        throw IoError("/solver/linear_solver: expected dense|sparse|auto");
    }
  }
  return study;
}

inline StudyCase load_study(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open study file: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw IoError("study file " + path + " is not valid JSON: " + e.what());
  }
  return study_from_json(j);
}

inline void save_study(const StudyCase& study, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write study file: " + path);
  out << study_to_json(study).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Result sets: structured JSON and CSV emission.
// ---------------------------------------------------------------------------

struct ResultSet {
  Bases bases;
  bool converged = false;
  int iterations = 0;
  int outer_refreshes = 0;
  double final_residual = 0.0;
  std::vector<NodeSpectra> nodes;
};

inline ResultSet make_result_set(const StudyCase& study, const SolveReport& report) {
  ResultSet rs;
  rs.bases = study.bases;
  rs.converged = report.converged;
  rs.iterations = report.iterations;
  rs.outer_refreshes = report.outer_refreshes;
  rs.final_residual = report.final_residual;
  rs.nodes = report.nodes;
  return rs;
}

inline Json results_to_json(const ResultSet& rs) {
  Json j;
  j["schema_version"] = 1;
  j["bases"] = {{"p_kw", rs.bases.p_w / 1e3},
                {"v_ac_rms_v", rs.bases.v_ac_rms},
                {"v_dc_v", rs.bases.v_dc},
                {"f0_hz", rs.bases.f0}};
  j["report"] = {{"converged", rs.converged},
                 {"iterations", rs.iterations},
                 {"outer_refreshes", rs.outer_refreshes},
                 {"final_residual", rs.final_residual}};
  j["nodes"] = Json::array();
  for (const auto& n : rs.nodes) {
    Json jn;
    jn["subsystem"] = n.subsystem;
    jn["node"] = n.node;
    jn["phases"] = n.v.phases();
    jn["orders"] = n.v.harmonic_set().orders();
    auto dump = [](const PhasorVector& s) {
      Json arr = Json::array();
      for (Eigen::Index k = 0; k < s.size(); ++k)
        arr.push_back({s.data()(k).real(), s.data()(k).imag()});
      return arr;
    };
    jn["v"] = dump(n.v);
    jn["i"] = dump(n.i);
    j["nodes"].push_back(std::move(jn));
  }
  return j;
}

inline ResultSet results_from_json(const Json& j, double f0_fallback = 50.0) {
  ResultSet rs;
  if (j.contains("bases")) {
    rs.bases.p_w = j["bases"].value("p_kw", 50.0) * 1e3;
    rs.bases.v_ac_rms = j["bases"].value("v_ac_rms_v", 230.0);
    rs.bases.v_dc = j["bases"].value("v_dc_v", 900.0);
    rs.bases.f0 = j["bases"].value("f0_hz", f0_fallback);
  }
  if (j.contains("report")) {
    rs.converged = j["report"].value("converged", false);
    rs.iterations = j["report"].value("iterations", 0);
    rs.outer_refreshes = j["report"].value("outer_refreshes", 0);
    rs.final_residual = j["report"].value("final_residual", 0.0);
  }
  for (const auto& jn : io_detail::need(j, "nodes", "")) {
    const int phases = jn.at("phases").get<int>();
    std::vector<int> orders = jn.at("orders").get<std::vector<int>>();
    HarmonicSet set(rs.bases.f0, orders);
    NodeSpectra ns{jn.at("subsystem").get<std::string>(), jn.at("node").get<std::string>(),
                   PhasorVector(set, phases), PhasorVector(set, phases)};
    auto parse = [&](const Json& arr, PhasorVector& dst) {
      if (static_cast<Eigen::Index>(arr.size()) != dst.size())
        throw IoError("results: spectra length mismatch at node " + ns.node);
      for (Eigen::Index k = 0; k < dst.size(); ++k)
        dst.data()(k) = Complex{arr[static_cast<std::size_t>(k)][0].get<double>(),
                                arr[static_cast<std::size_t>(k)][1].get<double>()};
    };
    parse(jn.at("v"), ns.v);
    parse(jn.at("i"), ns.i);
    rs.nodes.push_back(std::move(ns));
  }
  return rs;
}

/// CSV rows: subsystem,node,phase,harmonic_order,quantity,magnitude_pu,
/// angle_rad,magnitude_si,angle_deg. Magnitudes are single-sided
/// (2 |X_h| for h != 0). SI voltage/current scale: RMS for AC subsystems,
/// amplitude for DC subsystems (order 0 being the average).
inline std::string results_to_csv(const ResultSet& rs) {
  using io_detail::fmt;
  std::ostringstream out;
  out << "subsystem,node,phase,harmonic_order,quantity,magnitude_pu,angle_rad,magnitude_si,"
         "angle_deg\n";
  for (const auto& n : rs.nodes) {
    const bool ac = n.v.phases() == 3;
    const double v_scale = ac ? rs.bases.v_ac_rms : rs.bases.v_dc;
    const double i_scale = ac ? rs.bases.i_ac_rms() : rs.bases.i_dc();
    for (int p = 0; p < n.v.phases(); ++p)
      for (int h : n.v.harmonic_set().orders())
        for (int q = 0; q < 2; ++q) {
          const Complex x = q == 0 ? n.v.at(p, h) : n.i.at(p, h);
          const double mag_pu = (h == 0 ? 1.0 : 2.0) * std::abs(x);
          const double ang = std::arg(x);
          const double si = mag_pu * (q == 0 ? v_scale : i_scale) *
                            (ac && h == 0 ? std::sqrt(2.0) : 1.0);
          out << n.subsystem << ',' << n.node << ',' << p << ',' << h << ','
              << (q == 0 ? 'V' : 'I') << ',' << fmt(mag_pu) << ',' << fmt(ang) << ',' << fmt(si)
              << ',' << fmt(ang * 180.0 / kPi) << '\n';
        }
  }
  return out.str();
}

inline Json kpi_to_json(const KpiReport& report) {
  Json j;
  j["floor"] = report.floor;
  j["entries"] = Json::array();
  for (const auto& e : report.entries) {
    Json je{{"subsystem", e.subsystem}, {"node", e.node},     {"order", e.order},
            {"e_abs_v", e.e_abs_v},     {"e_abs_i", e.e_abs_i}};
    if (e.e_arg_v) je["e_arg_v"] = *e.e_arg_v;
    if (e.e_arg_i) je["e_arg_i"] = *e.e_arg_i;
    j["entries"].push_back(std::move(je));
  }
  j["maxima"] = Json::array();
  for (const auto& m : report.maxima)
    j["maxima"].push_back({{"subsystem", m.subsystem},
                           {"e_abs_v", m.e_abs_v},
                           {"e_abs_i", m.e_abs_i},
                           {"e_arg_v", m.e_arg_v},
                           {"e_arg_i", m.e_arg_i}});
  return j;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
}

}  // namespace hpf
