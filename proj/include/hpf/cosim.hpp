#pragma once

#include "hpf/integrate.hpp"
#include "hpf/nic_averaged.hpp"
#include "hpf/oracle.hpp"
#include "hpf/study.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

struct CosimOptions {
  double dt = 0.0;  // integration step; 0 picks one from the fastest mode
  double settle_tol = 1e-7;
  double max_time = 5.0;
  int dft_periods = 5;
  int samples_per_period = 0;  // 0 -> derived from the harmonic order
};

struct CosimResult {
  bool settled = false;
  double settle_time = 0.0;
  double dt = 0.0;
  std::vector<double> rms_delta_trace;
  std::vector<NodeSpectra> nodes;
};

/// Desk-scale time-domain co-simulation of a study: every line becomes an
/// R-L branch with pi-model charging lumped into node capacitors, passive
/// devices act on the node voltages, and NICs integrate their averaged
/// models. Needs averaged-tier NICs and passive/source single-port devices;
/// constant-power CIDER loads have no time-domain model here.
class Cosimulator {
 public:
  explicit Cosimulator(const StudyCase& study) : study_(study) {
    const double p_base_kw = study.bases.p_w / 1e3;
    const std::size_t n_subs = study.subsystems.size();
    sub_z_.resize(n_subs);
    node_c_.resize(n_subs);
    node_g_.resize(n_subs);
    node_isrc_.resize(n_subs);
    node_state_.resize(n_subs);
    for (std::size_t si = 0; si < n_subs; ++si) {
      const auto& sub = study.subsystems[si];
      sub.validate();
      sub_z_[si] = sub.kind == SubsystemKind::ac ? study.bases.z_ac() : study.bases.z_dc();
      node_c_[si].assign(static_cast<std::size_t>(sub.node_count()), 0.0);
      node_g_[si].assign(static_cast<std::size_t>(sub.node_count()), 0.0);
      node_isrc_[si].resize(static_cast<std::size_t>(sub.node_count()));
      node_state_[si].assign(static_cast<std::size_t>(sub.node_count()), -1);
      for (const auto& br : sub.branches) {
        const auto& lt = sub.line(br.line_type).positive;
        if (lt.l_h_per_km <= 0.0)
          throw std::invalid_argument("cosim: branch " + br.from + "-" + br.to +
                                      " needs series inductance");
        if (sub.line_charging) {
          const double c_half = lt.c_f_per_km * br.length_km / 2.0 * sub_z_[si];
          node_c_[si][static_cast<std::size_t>(sub.node_index(br.from))] += c_half;
          node_c_[si][static_cast<std::size_t>(sub.node_index(br.to))] += c_half;
        }
      }
      for (const auto& sh : sub.shunts) {
        node_c_[si][static_cast<std::size_t>(sub.node_index(sh.node))] += sh.c_f * sub_z_[si];
        node_g_[si][static_cast<std::size_t>(sub.node_index(sh.node))] += sh.g_s * sub_z_[si];
      }
    }

    for (const auto& r : study.resources) {
      const auto ref = detail::locate(study.subsystems, r.node);
      const auto& sub = study.subsystems[static_cast<std::size_t>(ref.sub)];
      const Complex s = detail::resource_power_pu(r, p_base_kw);
      switch (r.type) {
        case ResourceType::thevenin: {
          if (sub.kind != SubsystemKind::ac)
            throw std::invalid_argument("cosim: thevenin source must be on AC");
          Thevenin te;
          te.sub = ref.sub;
          te.node = ref.node;
          const double x_sc = r.z_sc_mohm * 1e-3 / std::sqrt(1.0 + r.r_x_ratio * r.r_x_ratio);
          te.r_pu = r.r_x_ratio * x_sc / study.bases.z_ac();
          te.l_pu = x_sc / study.bases.omega0() / study.bases.z_ac();
          std::vector<std::pair<int, Complex>> entries;
          for (const auto& e : r.v_spectrum)
            entries.emplace_back(e.order, e.magnitude_pu * std::exp(kJ * e.angle_rad));
          te.v_src = balanced_spectrum(
              HarmonicSet::ac_default(study.bases.f0, study.solver.harmonic_order), 3, entries);
          thevenins_.push_back(std::move(te));
          break;
        }
        case ResourceType::impedance:
          node_g_[static_cast<std::size_t>(ref.sub)][static_cast<std::size_t>(ref.node)] +=
              std::abs(s.real());
          break;
        case ResourceType::current_source: {
          auto& slot =
              node_isrc_[static_cast<std::size_t>(ref.sub)][static_cast<std::size_t>(ref.node)];
          if (sub.kind == SubsystemKind::dc) {
            PhasorVector sp(HarmonicSet::dc_default(study.bases.f0, 1), 1);
            sp.set(0, 0, Complex{s.real(), 0.0});
            slot = merge(slot, sp);
          } else {
            slot = merge(slot, balanced_spectrum(
                                   HarmonicSet::ac_default(study.bases.f0, 1), 3,
                                   {{1, Complex{s.real(), 0.0}}}));
          }
          break;
        }
        case ResourceType::constant_power:
          throw std::invalid_argument(
              "cosim: constant-power device at '" + r.node +
              "' has no averaged time-domain model; use Z or I devices or attach a NIC");
      }
    }

    for (const auto& spec : study.nics) {
      if (spec.tier != NicTier::averaged)
        throw std::invalid_argument("cosim: NIC " + spec.ac_node + "/" + spec.dc_node +
                                    " must use the averaged tier");
      NicSim sim;
      const auto ac = detail::locate(study.subsystems, spec.ac_node);
      const auto dc = detail::locate(study.subsystems, spec.dc_node);
      sim.ac_sub = ac.sub;
      sim.ac_node = ac.node;
      sim.dc_sub = dc.sub;
      sim.dc_node = dc.node;
      NicDeviceConfig cfg = nic_device_config(spec, study.bases);
      // The DC node's line charging sits in parallel with the DC link; the
      // device's capacitor absorbs it so the node needs no state of its own.
      cfg.hardware.c_dc += node_c_[static_cast<std::size_t>(dc.sub)]
                                  [static_cast<std::size_t>(dc.node)] /
                           study.bases.z_dc();
      const int h = study.solver.harmonic_order;
      sim.model = std::make_unique<AveragedNic>(
          cfg, HarmonicSet::ac_default(study.bases.f0, h),
          HarmonicSet::dc_default(study.bases.f0, h), study.bases);
      nics_.push_back(std::move(sim));
    }

    // State layout: node capacitor voltages (NIC DC nodes excluded), branch
    // and source inductor currents, then NIC internal states.
    int offset = 0;
    for (std::size_t si = 0; si < n_subs; ++si) {
      const auto& sub = study.subsystems[si];
      const int ph = sub.phases();
      for (int n = 0; n < sub.node_count(); ++n) {
        if (nic_dc_index(static_cast<int>(si), n) >= 0) continue;
        if (node_c_[si][static_cast<std::size_t>(n)] <= 0.0)
          throw std::invalid_argument("cosim: node '" +
                                      sub.nodes[static_cast<std::size_t>(n)] +
                                      "' has no shunt capacitance (enable line charging)");
        node_state_[si][static_cast<std::size_t>(n)] = offset;
        offset += ph;
      }
    }
    for (std::size_t si = 0; si < n_subs; ++si) {
      const auto& sub = study.subsystems[si];
      for (const auto& br : sub.branches) {
        BranchSim bs;
        bs.sub = static_cast<int>(si);
        bs.from = sub.node_index(br.from);
        bs.to = sub.node_index(br.to);
        const auto& lt = sub.line(br.line_type).positive;
        bs.r_pu = lt.r_ohm_per_km * br.length_km / sub_z_[si];
        bs.l_pu = lt.l_h_per_km * br.length_km / sub_z_[si];
        bs.state = offset;
        offset += sub.phases();
        branches_.push_back(bs);
      }
    }
    for (auto& te : thevenins_) {
      te.state = offset;
      offset += 3;
    }
    for (auto& nic : nics_) {
      nic.state = offset;
      offset += nic.model->state_dim();
    }
    n_states_ = offset;
  }

  int state_count() const { return n_states_; }

  RealVector initial_state() const {
    RealVector x = RealVector::Zero(n_states_);
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      for (int n = 0; n < sub.node_count(); ++n) {
        const int st = node_state_[si][static_cast<std::size_t>(n)];
        if (st < 0) continue;
        if (sub.kind == SubsystemKind::dc) x(st) = 1.0;
        // AC capacitor voltages start at zero and ring up quickly.
      }
    }
    for (const auto& nic : nics_)
      x.segment(nic.state, nic.model->state_dim()) = nic.model->initial_state();
    return x;
  }

  /// Fastest characteristic frequency, for the automatic step choice.
  double max_eigenfrequency() const {
    double w_max = 0.0;
    for (const auto& br : branches_) {
      const auto cs = node_c_[static_cast<std::size_t>(br.sub)];
      double c_min = std::numeric_limits<double>::max();
      for (int n : {br.from, br.to}) {
        double c = cs[static_cast<std::size_t>(n)];
        if (nic_dc_index(br.sub, n) >= 0) c = 1e9;  // stiff DC link, not limiting
        c_min = std::min(c_min, c);
      }
      w_max = std::max(w_max, 1.0 / std::sqrt(br.l_pu * c_min));
      w_max = std::max(w_max, br.r_pu / br.l_pu);
    }
    for (std::size_t si = 0; si < node_c_.size(); ++si)
      for (std::size_t n = 0; n < node_c_[si].size(); ++n)
        if (node_state_[si][n] >= 0 && node_g_[si][n] > 0.0)
          w_max = std::max(w_max, node_g_[si][n] / node_c_[si][n]);
    for (const auto& te : thevenins_) {
      const double c = node_c_[static_cast<std::size_t>(te.sub)]
                              [static_cast<std::size_t>(te.node)];
      w_max = std::max(w_max, 1.0 / std::sqrt(te.l_pu * c));
    }
    for (const auto& nic : nics_) {
      const NicHardwareParams hw = nic_hw(nic);
      const double l_par = hw.l_conv * hw.l_grid / (hw.l_conv + hw.l_grid);
      w_max = std::max(w_max, 1.0 / std::sqrt(l_par * hw.c_filter));
    }
    return w_max;
  }

  double node_voltage(const RealVector& x, int sub, int node, int phase) const {
    const int st = node_state_[static_cast<std::size_t>(sub)][static_cast<std::size_t>(node)];
    if (st >= 0) return x(st + phase);
    const int ni = nic_dc_index(sub, node);
    return x(nics_[static_cast<std::size_t>(ni)].state + AveragedNic::kVdc);
  }

  /// dx/dt, and optionally the per-node device injections for recording.
  RealVector rhs(double t, const RealVector& x,
                 std::vector<std::vector<RealVector>>* injections = nullptr) const {
    RealVector dx = RealVector::Zero(n_states_);
    // Net current injected into each node by everything processed so far.
    std::vector<std::vector<RealVector>> inj(study_.subsystems.size());
    std::vector<std::vector<RealVector>> dev;
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      inj[si].assign(static_cast<std::size_t>(sub.node_count()),
                     RealVector::Zero(sub.phases()));
    }
    if (injections) dev = inj;

    auto v_at = [&](int sub, int node, int p) { return node_voltage(x, sub, node, p); };

    for (const auto& br : branches_) {
      const int ph = study_.subsystems[static_cast<std::size_t>(br.sub)].phases();
      for (int p = 0; p < ph; ++p) {
        const double i = x(br.state + p);
        dx(br.state + p) =
            (v_at(br.sub, br.from, p) - v_at(br.sub, br.to, p) - br.r_pu * i) / br.l_pu;
        inj[static_cast<std::size_t>(br.sub)][static_cast<std::size_t>(br.from)](p) -= i;
        inj[static_cast<std::size_t>(br.sub)][static_cast<std::size_t>(br.to)](p) += i;
      }
    }
    for (const auto& te : thevenins_) {
      for (int p = 0; p < 3; ++p) {
        const double i = x(te.state + p);
        const double v_src = te.v_src.evaluate(p, t, study_.bases.omega0());
        dx(te.state + p) = (v_src - te.r_pu * i - v_at(te.sub, te.node, p)) / te.l_pu;
        inj[static_cast<std::size_t>(te.sub)][static_cast<std::size_t>(te.node)](p) += i;
        if (injections) dev[static_cast<std::size_t>(te.sub)][static_cast<std::size_t>(te.node)](p) += i;
      }
    }
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      for (int n = 0; n < sub.node_count(); ++n) {
        const double g = node_g_[si][static_cast<std::size_t>(n)];
        const auto& src = node_isrc_[si][static_cast<std::size_t>(n)];
        for (int p = 0; p < sub.phases(); ++p) {
          double add = 0.0;
          if (g > 0.0) add -= g * v_at(static_cast<int>(si), n, p);
          if (src) add += src->evaluate(p, t, study_.bases.omega0());
          inj[si][static_cast<std::size_t>(n)](p) += add;
          if (injections) dev[si][static_cast<std::size_t>(n)](p) += add;
        }
      }
    }
    for (std::size_t ni = 0; ni < nics_.size(); ++ni) {
      const auto& nic = nics_[ni];
      RealVector u(4);
      for (int p = 0; p < 3; ++p) u(p) = v_at(nic.ac_sub, nic.ac_node, p);
      const double i_out =
          -inj[static_cast<std::size_t>(nic.dc_sub)][static_cast<std::size_t>(nic.dc_node)](0);
      u(3) = i_out;
      const RealVector xs = x.segment(nic.state, nic.model->state_dim());
      dx.segment(nic.state, nic.model->state_dim()) = nic.model->rhs(t, xs, u);
      for (int p = 0; p < 3; ++p) {
        const double i_g = xs(AveragedNic::kIg + p);
        inj[static_cast<std::size_t>(nic.ac_sub)][static_cast<std::size_t>(nic.ac_node)](p) += i_g;
        if (injections)
          dev[static_cast<std::size_t>(nic.ac_sub)][static_cast<std::size_t>(nic.ac_node)](p) +=
              i_g;
      }
      if (injections)
        dev[static_cast<std::size_t>(nic.dc_sub)][static_cast<std::size_t>(nic.dc_node)](0) +=
            i_out;
    }
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      for (int n = 0; n < sub.node_count(); ++n) {
        const int st = node_state_[si][static_cast<std::size_t>(n)];
        if (st < 0) continue;
        for (int p = 0; p < sub.phases(); ++p)
          dx(st + p) = inj[si][static_cast<std::size_t>(n)](p) / node_c_[si][static_cast<std::size_t>(n)];
      }
    }
    if (injections) *injections = std::move(dev);
    return dx;
  }

  CosimResult run(const CosimOptions& opt) const {
    CosimResult result;
    const double period = 1.0 / study_.bases.f0;
    const int h_max = study_.solver.harmonic_order;
    const int spp = opt.samples_per_period > 0 ? opt.samples_per_period
                                               : std::max(64, 8 * h_max + 8);
    double dt_target = opt.dt > 0.0 ? opt.dt : 2.2 / max_eigenfrequency();
    dt_target = std::min(dt_target, period / (20.0 * h_max));
    const int steps_per_sample =
        std::max(1, static_cast<int>(std::ceil(period / (spp * dt_target))));
    const double dt = period / (static_cast<double>(spp) * steps_per_sample);
    result.dt = dt;

    auto f = [&](double t, const RealVector& x) { return rhs(t, x); };

    // March period by period until the recorded outputs repeat.
    RealVector x = initial_state();
    double t = 0.0;
    const int n_channels = output_count();
    std::vector<RealVector> prev, cur;
    const int max_periods = static_cast<int>(std::ceil(opt.max_time / period));
    for (int per = 0; per < max_periods && !result.settled; ++per) {
      cur.clear();
      for (int s = 0; s < spp; ++s) {
        cur.push_back(outputs(t, x));
        for (int k = 0; k < steps_per_sample; ++k) {
          x = rk4_step(f, t, x, dt);
          t += dt;
        }
      }
      if (!prev.empty()) {
        double acc = 0.0;
        for (int s = 0; s < spp; ++s)
          acc += (cur[static_cast<std::size_t>(s)] - prev[static_cast<std::size_t>(s)])
                     .squaredNorm();
        const double rms = std::sqrt(acc / (static_cast<double>(spp) * n_channels));
        result.rms_delta_trace.push_back(rms);
        if (rms < opt.settle_tol) {
          result.settled = true;
          result.settle_time = t;
        }
      }
      std::swap(prev, cur);
    }
    if (!result.settled) return result;

    // Record dft_periods settled periods and extract per-subsystem spectra.
    std::vector<std::vector<double>> channels(static_cast<std::size_t>(n_channels));
    for (int per = 0; per < opt.dft_periods; ++per)
      for (int s = 0; s < spp; ++s) {
        const RealVector y = outputs(t, x);
        for (int c = 0; c < n_channels; ++c)
          channels[static_cast<std::size_t>(c)].push_back(y(c));
        for (int k = 0; k < steps_per_sample; ++k) {
          x = rk4_step(f, t, x, dt);
          t += dt;
        }
      }

    int ch = 0;
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      const HarmonicSet set =
          sub.kind == SubsystemKind::ac
              ? HarmonicSet::ac_default(study_.bases.f0, h_max)
              : HarmonicSet::dc_default(study_.bases.f0, h_max);
      for (int n = 0; n < sub.node_count(); ++n) {
        NodeSpectra ns{sub.id, sub.nodes[static_cast<std::size_t>(n)],
                       PhasorVector(set, sub.phases()), PhasorVector(set, sub.phases())};
        for (int p = 0; p < sub.phases(); ++p) {
          const ComplexVector v = dft_single(channels[static_cast<std::size_t>(ch)], period / spp, set);
          const ComplexVector i =
              dft_single(channels[static_cast<std::size_t>(ch + 1)], period / spp, set);
          for (int k = 0; k < set.size(); ++k) {
            ns.v.data()(static_cast<Eigen::Index>(k) * sub.phases() + p) = v(k);
            ns.i.data()(static_cast<Eigen::Index>(k) * sub.phases() + p) = i(k);
          }
          ch += 2;
        }
        result.nodes.push_back(std::move(ns));
      }
    }
    return result;
  }

 private:
  struct BranchSim {
    int sub = 0, from = 0, to = 0, state = 0;
    double r_pu = 0.0, l_pu = 0.0;
  };
  struct Thevenin {
    int sub = 0, node = 0, state = 0;
    double r_pu = 0.0, l_pu = 0.0;
    PhasorVector v_src{HarmonicSet::ac_default(50.0, 1), 3};
  };
  struct NicSim {
    int ac_sub = 0, ac_node = 0, dc_sub = 0, dc_node = 0, state = 0;
    std::unique_ptr<AveragedNic> model;
  };

  int nic_dc_index(int sub, int node) const {
    for (std::size_t i = 0; i < nics_.size(); ++i)
      if (nics_[i].dc_sub == sub && nics_[i].dc_node == node) return static_cast<int>(i);
    return -1;
  }

  NicHardwareParams nic_hw(const NicSim& nic) const {
    for (const auto& spec : study_.nics)
      if (detail::locate(study_.subsystems, spec.ac_node).node == nic.ac_node &&
          detail::locate(study_.subsystems, spec.ac_node).sub == nic.ac_sub)
        return nic_device_config(spec, study_.bases).hardware.ac_scaled(study_.bases.z_ac());
    return NicHardwareParams{}.ac_scaled(study_.bases.z_ac());
  }

  int output_count() const {
    int n = 0;
    for (const auto& sub : study_.subsystems) n += sub.node_count() * sub.phases() * 2;
    return n;
  }

  /// Per node and phase: voltage then device-injected current.
  RealVector outputs(double t, const RealVector& x) const {
    std::vector<std::vector<RealVector>> dev;
    rhs(t, x, &dev);
    RealVector y(output_count());
    int ch = 0;
    for (std::size_t si = 0; si < study_.subsystems.size(); ++si) {
      const auto& sub = study_.subsystems[si];
      for (int n = 0; n < sub.node_count(); ++n)
        for (int p = 0; p < sub.phases(); ++p) {
          y(ch++) = node_voltage(x, static_cast<int>(si), n, p);
          y(ch++) = dev[si][static_cast<std::size_t>(n)](p);
        }
    }
    return y;
  }

  const StudyCase& study_;
  std::vector<double> sub_z_;
  std::vector<std::vector<double>> node_c_;  // p.u. seconds
  std::vector<std::vector<double>> node_g_;
  std::vector<std::vector<std::optional<PhasorVector>>> node_isrc_;
  std::vector<std::vector<int>> node_state_;
  std::vector<BranchSim> branches_;
  std::vector<Thevenin> thevenins_;
  std::vector<NicSim> nics_;
  int n_states_ = 0;

  static std::optional<PhasorVector> merge(const std::optional<PhasorVector>& a, PhasorVector b) {
    if (!a) return b;
    PhasorVector out = *a;
    out += b;
    return out;
  }
};

inline CosimResult timedomain_cosim(const StudyCase& study, const CosimOptions& opt = {}) {
  return Cosimulator(study).run(opt);
}

}  // namespace hpf
