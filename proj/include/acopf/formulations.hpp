#pragma once

// The nine ACOPF formulations over a common network model.
//
// Three voltage representations (polar V, theta; rectangular vr, vi; the W
// substitution Wd_n = |v_n|^2, W_ab = conj(v_a) * v_b) combine with three
// ways of writing the network physics (explicit branch power flows, explicit
// branch current flows, nodal injection balances):
//
//   BPFPV   branch power flows, polar voltages
//   BPFRV   branch power flows, rectangular voltages
//   BPFW    branch power flows, full W substitution
//   BCFRV   branch current flows, rectangular voltages
//   BCFW    branch current flows, diagonal-W substitution
//   NIPAPV  nodal injections, polar admittance terms, polar voltages
//   NIRAPV  nodal injections, rectangular admittance terms, polar voltages
//   NIRARV  nodal injections, rectangular admittance terms, rect voltages
//   NIRAW   nodal injections, full W substitution
//
// All nine share the generator cost objective and describe the same feasible
// injections, so optima map between them. The full-W models (BPFW, NIRAW)
// carry more independent equalities than free variables; they are built for
// structural analysis and flagged degenerate rather than solved by default.
//
// W convention: W_ab = conj(v_a) * v_b for the directed pair (a, b), so
// Wr_ab = vr_a vr_b + vi_a vi_b and Wi_ab = vr_a vi_b - vi_a vr_b, and the
// reverse pair carries the conjugate (same Wr, negated Wi) as its own
// variables and definition rows.

#include <acopf/admittance.hpp>
#include <acopf/case.hpp>
#include <acopf/nlp.hpp>

#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acopf {

enum class FormulationKind {
  BPFPV,
  BPFRV,
  BPFW,
  BCFRV,
  BCFW,
  NIPAPV,
  NIRAPV,
  NIRARV,
  NIRAW,
};

inline constexpr FormulationKind kAllFormulationKinds[] = {
    FormulationKind::BPFPV,  FormulationKind::BPFRV,  FormulationKind::BPFW,
    FormulationKind::BCFRV,  FormulationKind::BCFW,   FormulationKind::NIPAPV,
    FormulationKind::NIRAPV, FormulationKind::NIRARV, FormulationKind::NIRAW};

inline const char* formulation_name(FormulationKind k) {
  switch (k) {
    case FormulationKind::BPFPV: return "BPFPV";
    case FormulationKind::BPFRV: return "BPFRV";
    case FormulationKind::BPFW: return "BPFW";
    case FormulationKind::BCFRV: return "BCFRV";
    case FormulationKind::BCFW: return "BCFW";
    case FormulationKind::NIPAPV: return "NIPAPV";
    case FormulationKind::NIRAPV: return "NIRAPV";
    case FormulationKind::NIRARV: return "NIRARV";
    case FormulationKind::NIRAW: return "NIRAW";
  }
  return "?";
}

inline FormulationKind formulation_from_name(const std::string& name) {
  for (FormulationKind k : kAllFormulationKinds)
    if (name == formulation_name(k)) return k;
  throw std::invalid_argument("unknown formulation '" + name + "'");
}

// ---- variable families ------------------------------------------------------

inline bool uses_polar_voltage(FormulationKind k) {
  return k == FormulationKind::BPFPV || k == FormulationKind::NIPAPV ||
         k == FormulationKind::NIRAPV;
}
inline bool uses_rect_voltage(FormulationKind k) { return !uses_polar_voltage(k); }
inline bool uses_power_flows(FormulationKind k) {
  return k == FormulationKind::BPFPV || k == FormulationKind::BPFRV ||
         k == FormulationKind::BPFW;
}
inline bool uses_current_flows(FormulationKind k) {
  return k == FormulationKind::BCFRV || k == FormulationKind::BCFW;
}
inline bool uses_w_diagonal(FormulationKind k) {
  return k == FormulationKind::BPFW || k == FormulationKind::BCFW ||
         k == FormulationKind::NIRAW;
}
inline bool uses_w_cross(FormulationKind k) {
  return k == FormulationKind::BPFW || k == FormulationKind::NIRAW;
}

/// Kinds with unbounded flow or voltage variables, where the optional box
/// augmentation adds circumscribing-square bounds.
inline bool box_applicable(FormulationKind k) {
  return k == FormulationKind::BPFPV || k == FormulationKind::BPFRV ||
         k == FormulationKind::BCFRV || k == FormulationKind::BCFW ||
         k == FormulationKind::NIRARV;
}

/// Nonlinear-constraint structure count for a network with n_buses buses and
/// n_branches in-service branches, all of them current-limited. Balance rows
/// count once per bus and side, definition and thermal rows once per directed
/// pair, and two-sided voltage-envelope rows twice.
inline long long nonlinear_constraint_count(FormulationKind kind, long long n_buses,
                                            long long n_branches) {
  const long long n = n_buses, k = n_branches;
  switch (kind) {
    case FormulationKind::BPFPV: return 2 * n + 6 * k;
    case FormulationKind::BPFRV: return 4 * n + 6 * k;
    case FormulationKind::BPFW: return n + 6 * k;
    case FormulationKind::BCFRV: return 4 * n + 2 * k;
    case FormulationKind::BCFW: return 3 * n + 6 * k;
    case FormulationKind::NIPAPV: return 2 * n + 2 * k;
    case FormulationKind::NIRAPV: return 2 * n + 2 * k;
    case FormulationKind::NIRARV: return 4 * n + 2 * k;
    case FormulationKind::NIRAW: return n + 4 * k;
  }
  return 0;
}

struct FormulationInstance {
  FormulationKind kind = FormulationKind::BPFPV;
  bool box = false;
  NetworkCase network;
  AdmittanceModel admittance;
  NlpModel model;

  // Handle maps into the model; a vector is empty when the kind lacks that
  // variable family.
  std::vector<int> v_mag, v_ang;    // per bus (polar-voltage kinds)
  std::vector<int> v_re, v_im;      // per bus (rectangular-voltage kinds)
  std::vector<int> w_diag;          // per bus (W kinds)
  std::vector<int> w_re, w_im;      // per directed pair (full-W kinds)
  std::vector<int> flow_p, flow_q;  // per directed pair (power-flow kinds)
  std::vector<int> cur_re, cur_im;  // per directed pair (current-flow kinds)
  std::vector<int> gen_p, gen_q;    // per generator
  std::vector<std::string> warnings;

  /// Structurally over-determined: no more free variables than equality rows.
  bool degenerate() const { return model.degrees_of_freedom() <= 0; }
};

struct ResidualReport {
  double max_violation = 0.0;    // worst constraint-row violation
  double bound_violation = 0.0;  // worst variable-bound violation
  std::vector<std::pair<std::string, double>> blocks;  // per row family
};

namespace detail {

/// Emits scale * (sum_i coefs[i] * x[vars[i]])^2 as quadratic terms. The
/// variable indices must be distinct.
inline void add_square_of_linear(NlpModel& m, int row, const std::vector<int>& vars,
                                 const std::vector<double>& coefs, double scale) {
  for (std::size_t i = 0; i < vars.size(); ++i)
    for (std::size_t j = i; j < vars.size(); ++j)
      m.add_quad(row, vars[i], vars[j], scale * coefs[i] * coefs[j] * (i == j ? 1.0 : 2.0));
}

struct GridIndex {
  std::vector<double> p_load, q_load;      // aggregated demand per dense bus
  std::vector<std::vector<int>> gens_at;   // dense bus -> generator indices
  std::vector<std::vector<int>> pairs_at;  // dense bus -> pairs with near end there

  GridIndex(const NetworkCase& nc, const AdmittanceModel& adm) {
    const std::size_t nb = nc.buses.size();
    p_load.assign(nb, 0.0);
    q_load.assign(nb, 0.0);
    gens_at.resize(nb);
    pairs_at.resize(nb);
    for (const Load& d : nc.loads) {
      int n = nc.bus_index(d.bus);
      if (n < 0)
        throw std::invalid_argument("load references nonexistent bus " + std::to_string(d.bus));
      p_load[n] += d.p;
      q_load[n] += d.q;
    }
    for (std::size_t g = 0; g < nc.generators.size(); ++g) {
      int n = nc.bus_index(nc.generators[g].bus);
      if (n < 0)
        throw std::invalid_argument("generator references nonexistent bus " +
                                    std::to_string(nc.generators[g].bus));
      gens_at[n].push_back(static_cast<int>(g));
    }
    for (std::size_t k = 0; k < adm.pairs.size(); ++k)
      pairs_at[adm.pairs[k].a].push_back(static_cast<int>(k));
  }
};

}  // namespace detail

/// Tightens variable bounds with the redundant circumscribing-square box:
/// |vr|, |vi| <= Vmax per bus; |ir|, |ii| <= Imax and |P|, |Q| <= Imax * Vmax
/// (near-end bus) per limited directed pair. Bounds only, never new rows;
/// unlimited branches are skipped; a no-op with a warning for kinds whose
/// variables are already bounded.
inline void apply_box_constraints(FormulationInstance& inst) {
  if (!box_applicable(inst.kind)) {
    inst.warnings.push_back(std::string("box constraints are a no-op for ") +
                            formulation_name(inst.kind));
    return;
  }
  NlpModel& m = inst.model;
  auto tighten = [&](int v, double lo, double hi) {
    m.set_variable_bounds(v, std::max(m.var_lo(v), lo), std::min(m.var_hi(v), hi));
  };
  if (!inst.v_re.empty()) {
    for (std::size_t n = 0; n < inst.network.buses.size(); ++n) {
      double vmax = inst.network.buses[n].v_max;
      tighten(inst.v_re[n], -vmax, vmax);
      tighten(inst.v_im[n], -vmax, vmax);
    }
  }
  for (std::size_t k = 0; k < inst.admittance.pairs.size(); ++k) {
    const PairY& p = inst.admittance.pairs[k];
    if (p.i_max <= 0.0) continue;
    if (!inst.cur_re.empty()) {
      tighten(inst.cur_re[k], -p.i_max, p.i_max);
      tighten(inst.cur_im[k], -p.i_max, p.i_max);
    }
    if (!inst.flow_p.empty()) {
      double s = p.i_max * inst.network.buses[p.a].v_max;
      tighten(inst.flow_p[k], -s, s);
      tighten(inst.flow_q[k], -s, s);
    }
  }
  inst.box = true;
}

/// Builds one formulation over a parsed case and its admittance model. The
/// returned instance owns copies of both plus the finalized NlpModel.
inline FormulationInstance build_formulation(FormulationKind kind, const NetworkCase& nc,
                                             const AdmittanceModel& adm, bool box = false) {
  if (static_cast<int>(nc.buses.size()) != adm.n_bus)
    throw std::invalid_argument("build_formulation: case and admittance disagree on bus count");
  FormulationInstance inst;
  inst.kind = kind;
  inst.network = nc;
  inst.admittance = adm;
  NlpModel& m = inst.model;
  detail::GridIndex grid(nc, adm);

  const int nb = adm.n_bus;
  const int np = static_cast<int>(adm.pairs.size());
  const int ng = static_cast<int>(nc.generators.size());
  const int slack = nc.slack_index();
  auto id = [&](int n) { return std::to_string(nc.buses[n].id); };

  // ---- variables ------------------------------------------------------------
  if (uses_polar_voltage(kind)) {
    inst.v_mag.resize(nb);
    inst.v_ang.resize(nb);
    for (int n = 0; n < nb; ++n)
      inst.v_mag[n] = m.add_variable("V_" + id(n), nc.buses[n].v_min, nc.buses[n].v_max);
    for (int n = 0; n < nb; ++n) {
      bool fix = n == slack;  // pins the rotational symmetry
      inst.v_ang[n] = m.add_variable("th_" + id(n), fix ? 0.0 : -kInf, fix ? 0.0 : kInf);
    }
  } else {
    inst.v_re.resize(nb);
    inst.v_im.resize(nb);
    for (int n = 0; n < nb; ++n) inst.v_re[n] = m.add_variable("vr_" + id(n), -kInf, kInf);
    for (int n = 0; n < nb; ++n) {
      bool fix = n == slack;  // slack voltage held on the real axis
      inst.v_im[n] = m.add_variable("vi_" + id(n), fix ? 0.0 : -kInf, fix ? 0.0 : kInf);
    }
  }
  inst.gen_p.resize(ng);
  inst.gen_q.resize(ng);
  for (int g = 0; g < ng; ++g) {
    const Generator& gen = nc.generators[g];
    inst.gen_p[g] = m.add_variable("p_" + std::to_string(g), gen.p_min, gen.p_max);
    m.set_objective(inst.gen_p[g], gen.c2, gen.c1);
    m.add_objective_constant(gen.c0);
  }
  for (int g = 0; g < ng; ++g) {
    const Generator& gen = nc.generators[g];
    inst.gen_q[g] = m.add_variable("q_" + std::to_string(g), gen.q_min, gen.q_max);
  }
  if (uses_power_flows(kind)) {
    inst.flow_p.resize(np);
    inst.flow_q.resize(np);
    for (int k = 0; k < np; ++k)
      inst.flow_p[k] = m.add_variable("P_" + std::to_string(k), -kInf, kInf);
    for (int k = 0; k < np; ++k)
      inst.flow_q[k] = m.add_variable("Q_" + std::to_string(k), -kInf, kInf);
  }
  if (uses_current_flows(kind)) {
    inst.cur_re.resize(np);
    inst.cur_im.resize(np);
    for (int k = 0; k < np; ++k)
      inst.cur_re[k] = m.add_variable("ir_" + std::to_string(k), -kInf, kInf);
    for (int k = 0; k < np; ++k)
      inst.cur_im[k] = m.add_variable("ii_" + std::to_string(k), -kInf, kInf);
  }
  if (uses_w_diagonal(kind)) {
    inst.w_diag.resize(nb);
    for (int n = 0; n < nb; ++n) {
      double lo = nc.buses[n].v_min, hi = nc.buses[n].v_max;
      inst.w_diag[n] = m.add_variable("Wd_" + id(n), lo * lo, hi * hi);
    }
  }
  if (uses_w_cross(kind)) {
    inst.w_re.resize(np);
    inst.w_im.resize(np);
    for (int k = 0; k < np; ++k)
      inst.w_re[k] = m.add_variable("Wr_" + std::to_string(k), -kInf, kInf);
    for (int k = 0; k < np; ++k)
      inst.w_im[k] = m.add_variable("Wi_" + std::to_string(k), -kInf, kInf);
  }

  // ---- constraint rows ------------------------------------------------------
  auto pair_tag = [](const char* stem, int k) {
    return std::string(stem) + "_" + std::to_string(k);
  };
  auto bus_tag = [&](const char* stem, int n) { return std::string(stem) + "_" + id(n); };

  // Balance rows: sum of generation minus the kind's injection expression
  // equals the bus demand. Every row carries its bus shunt term (possibly
  // with zero coefficient) in the kind's voltage representation.
  auto new_balance_rows = [&](int n, Kernel kernel, int& pr, int& qr) {
    pr = m.add_row(bus_tag("pbal", n), grid.p_load[n], grid.p_load[n], kernel);
    qr = m.add_row(bus_tag("qbal", n), grid.q_load[n], grid.q_load[n], kernel);
    for (int g : grid.gens_at[n]) {
      m.add_lin(pr, inst.gen_p[g], 1.0);
      m.add_lin(qr, inst.gen_q[g], 1.0);
    }
  };
  auto add_shunt = [&](int row, int n, double coef) {
    if (!inst.w_diag.empty()) {
      m.add_lin(row, inst.w_diag[n], coef);
    } else if (!inst.v_mag.empty()) {
      m.add_quad(row, inst.v_mag[n], inst.v_mag[n], coef);
    } else {
      m.add_quad(row, inst.v_re[n], inst.v_re[n], coef);
      m.add_quad(row, inst.v_im[n], inst.v_im[n], coef);
    }
  };
  auto add_shunts = [&](int pr, int qr, int n) {
    add_shunt(pr, n, -adm.shunt_g[n]);
    add_shunt(qr, n, adm.shunt_b[n]);
  };

  // Branch power flows tied to polar voltages, d = th_a - th_b:
  //   P_ab =  g_net Va^2 + Va Vb (G cos d + B sin d)
  //   Q_ab = -b_net Va^2 + Va Vb (G sin d - B cos d)
  auto polar_flow_defs = [&]() {
    for (int k = 0; k < np; ++k) {
      const PairY& p = adm.pairs[k];
      int Va = inst.v_mag[p.a], Vb = inst.v_mag[p.b];
      int ta = inst.v_ang[p.a], tb = inst.v_ang[p.b];
      int r = m.add_row(pair_tag("Pdef", k), 0.0, 0.0, Kernel::TrigBilinear);
      m.add_lin(r, inst.flow_p[k], 1.0);
      m.add_quad(r, Va, Va, -p.g_net);
      m.add_trig(r, Va, Vb, ta, tb, -p.g_cross, 0.0, TrigFn::Cos);
      m.add_trig(r, Va, Vb, ta, tb, -p.b_cross, 0.0, TrigFn::Sin);
      r = m.add_row(pair_tag("Qdef", k), 0.0, 0.0, Kernel::TrigBilinear);
      m.add_lin(r, inst.flow_q[k], 1.0);
      m.add_quad(r, Va, Va, p.b_net);
      m.add_trig(r, Va, Vb, ta, tb, -p.g_cross, 0.0, TrigFn::Sin);
      m.add_trig(r, Va, Vb, ta, tb, p.b_cross, 0.0, TrigFn::Cos);
    }
  };

  // The same flows over rectangular voltages:
  //   P_ab =  g_net (vra^2 + via^2) + G (vra vrb + via vib) + B (via vrb - vra vib)
  //   Q_ab = -b_net (vra^2 + via^2) + G (via vrb - vra vib) - B (vra vrb + via vib)
  auto rect_flow_defs = [&]() {
    for (int k = 0; k < np; ++k) {
      const PairY& p = adm.pairs[k];
      int vra = inst.v_re[p.a], via = inst.v_im[p.a];
      int vrb = inst.v_re[p.b], vib = inst.v_im[p.b];
      int r = m.add_row(pair_tag("Pdef", k), 0.0, 0.0, Kernel::Quadratic);
      m.add_lin(r, inst.flow_p[k], 1.0);
      m.add_quad(r, vra, vra, -p.g_net);
      m.add_quad(r, via, via, -p.g_net);
      m.add_quad(r, vra, vrb, -p.g_cross);
      m.add_quad(r, via, vib, -p.g_cross);
      m.add_quad(r, via, vrb, -p.b_cross);
      m.add_quad(r, vra, vib, p.b_cross);
      r = m.add_row(pair_tag("Qdef", k), 0.0, 0.0, Kernel::Quadratic);
      m.add_lin(r, inst.flow_q[k], 1.0);
      m.add_quad(r, vra, vra, p.b_net);
      m.add_quad(r, via, via, p.b_net);
      m.add_quad(r, via, vrb, -p.g_cross);
      m.add_quad(r, vra, vib, p.g_cross);
      m.add_quad(r, vra, vrb, p.b_cross);
      m.add_quad(r, via, vib, p.b_cross);
    }
  };

  // The same flows over W variables (linear):
  //   P_ab =  g_net Wd_a + G Wr_ab - B Wi_ab
  //   Q_ab = -b_net Wd_a - G Wi_ab - B Wr_ab
  auto w_flow_defs = [&]() {
    for (int k = 0; k < np; ++k) {
      const PairY& p = adm.pairs[k];
      int r = m.add_row(pair_tag("Pdef", k), 0.0, 0.0, Kernel::Linear);
      m.add_lin(r, inst.flow_p[k], 1.0);
      m.add_lin(r, inst.w_diag[p.a], -p.g_net);
      m.add_lin(r, inst.w_re[k], -p.g_cross);
      m.add_lin(r, inst.w_im[k], p.b_cross);
      r = m.add_row(pair_tag("Qdef", k), 0.0, 0.0, Kernel::Linear);
      m.add_lin(r, inst.flow_q[k], 1.0);
      m.add_lin(r, inst.w_diag[p.a], p.b_net);
      m.add_lin(r, inst.w_im[k], p.g_cross);
      m.add_lin(r, inst.w_re[k], p.b_cross);
    }
  };

  // Branch currents in rectangular components (linear):
  //   ir_ab = g_net vra - b_net via + G vrb - B vib
  //   ii_ab = g_net via + b_net vra + G vib + B vrb
  // BCFW's structure count includes these rows in its nonlinear tally; the
  // override keeps the built count consistent with nonlinear_constraint_count.
  auto current_defs = [&](bool count_in_tally) {
    for (int k = 0; k < np; ++k) {
      const PairY& p = adm.pairs[k];
      int vra = inst.v_re[p.a], via = inst.v_im[p.a];
      int vrb = inst.v_re[p.b], vib = inst.v_im[p.b];
      int r = m.add_row(pair_tag("irdef", k), 0.0, 0.0, Kernel::Linear);
      m.add_lin(r, inst.cur_re[k], 1.0);
      m.add_lin(r, vra, -p.g_net);
      m.add_lin(r, via, p.b_net);
      m.add_lin(r, vrb, -p.g_cross);
      m.add_lin(r, vib, p.b_cross);
      if (count_in_tally) m.set_tally_override(r, 1);
      r = m.add_row(pair_tag("iidef", k), 0.0, 0.0, Kernel::Linear);
      m.add_lin(r, inst.cur_im[k], 1.0);
      m.add_lin(r, via, -p.g_net);
      m.add_lin(r, vra, -p.b_net);
      m.add_lin(r, vib, -p.g_cross);
      m.add_lin(r, vrb, -p.b_cross);
      if (count_in_tally) m.set_tally_override(r, 1);
    }
  };

  // Balance over explicit pair flow variables.
  auto flow_balance = [&](Kernel kernel) {
    for (int n = 0; n < nb; ++n) {
      int pr, qr;
      new_balance_rows(n, kernel, pr, qr);
      for (int k : grid.pairs_at[n]) {
        m.add_lin(pr, inst.flow_p[k], -1.0);
        m.add_lin(qr, inst.flow_q[k], -1.0);
      }
      add_shunts(pr, qr, n);
    }
  };

  // Balance over pair currents: p_ab = vr_a ir + vi_a ii, q_ab = vi_a ir - vr_a ii.
  auto current_balance = [&](Kernel kernel) {
    for (int n = 0; n < nb; ++n) {
      int pr, qr;
      new_balance_rows(n, kernel, pr, qr);
      for (int k : grid.pairs_at[n]) {
        m.add_quad(pr, inst.v_re[n], inst.cur_re[k], -1.0);
        m.add_quad(pr, inst.v_im[n], inst.cur_im[k], -1.0);
        m.add_quad(qr, inst.v_im[n], inst.cur_re[k], -1.0);
        m.add_quad(qr, inst.v_re[n], inst.cur_im[k], 1.0);
      }
      add_shunts(pr, qr, n);
    }
  };

  // Nodal balance over bus-matrix entries with polar voltages; the admittance
  // enters either in polar form (magnitude and angle inside the cosine) or in
  // rectangular form (separate cos and sin terms):
  //   p_n = sum_k |Y| Vn Vk cos(d - arg Y) = sum_k Vn Vk (G cos d + B sin d)
  //   q_n = sum_k |Y| Vn Vk sin(d - arg Y) = sum_k Vn Vk (G sin d - B cos d)
  auto nodal_polar_balance = [&](bool polar_admittance) {
    for (int n = 0; n < nb; ++n) {
      int pr, qr;
      new_balance_rows(n, Kernel::TrigBilinear, pr, qr);
      int Vn = inst.v_mag[n], tn = inst.v_ang[n];
      for (const YbusEntry& e : adm.ybus[n]) {
        int Vk = inst.v_mag[e.col], tk = inst.v_ang[e.col];
        if (polar_admittance) {
          double mag = std::abs(e.y), ang = std::arg(e.y);
          m.add_trig(pr, Vn, Vk, tn, tk, -mag, -ang, TrigFn::Cos);
          m.add_trig(qr, Vn, Vk, tn, tk, -mag, -ang, TrigFn::Sin);
        } else {
          double G = e.y.real(), B = e.y.imag();
          m.add_trig(pr, Vn, Vk, tn, tk, -G, 0.0, TrigFn::Cos);
          m.add_trig(pr, Vn, Vk, tn, tk, -B, 0.0, TrigFn::Sin);
          m.add_trig(qr, Vn, Vk, tn, tk, -G, 0.0, TrigFn::Sin);
          m.add_trig(qr, Vn, Vk, tn, tk, B, 0.0, TrigFn::Cos);
        }
      }
      add_shunts(pr, qr, n);
    }
  };

  // Nodal balance over bus-matrix entries with rectangular voltages:
  //   p_n = sum_k G (vrn vrk + vin vik) + B (vin vrk - vrn vik)
  //   q_n = sum_k G (vin vrk - vrn vik) - B (vrn vrk + vin vik)
  auto nodal_rect_balance = [&]() {
    for (int n = 0; n < nb; ++n) {
      int pr, qr;
      new_balance_rows(n, Kernel::Quadratic, pr, qr);
      int vrn = inst.v_re[n], vin = inst.v_im[n];
      for (const YbusEntry& e : adm.ybus[n]) {
        int vrk = inst.v_re[e.col], vik = inst.v_im[e.col];
        double G = e.y.real(), B = e.y.imag();
        m.add_quad(pr, vrn, vrk, -G);
        m.add_quad(pr, vin, vik, -G);
        m.add_quad(pr, vin, vrk, -B);
        m.add_quad(pr, vrn, vik, B);
        m.add_quad(qr, vin, vrk, -G);
        m.add_quad(qr, vrn, vik, G);
        m.add_quad(qr, vrn, vrk, B);
        m.add_quad(qr, vin, vik, B);
      }
      add_shunts(pr, qr, n);
    }
  };

  // Nodal balance over W variables (linear); each near-end pair contributes
  //   p_ab =  g_net Wd_n + G Wr_ab - B Wi_ab
  //   q_ab = -b_net Wd_n - G Wi_ab - B Wr_ab
  auto nodal_w_balance = [&]() {
    for (int n = 0; n < nb; ++n) {
      int pr, qr;
      new_balance_rows(n, Kernel::Linear, pr, qr);
      for (int k : grid.pairs_at[n]) {
        const PairY& p = adm.pairs[k];
        m.add_lin(pr, inst.w_diag[n], -p.g_net);
        m.add_lin(pr, inst.w_re[k], -p.g_cross);
        m.add_lin(pr, inst.w_im[k], p.b_cross);
        m.add_lin(qr, inst.w_diag[n], p.b_net);
        m.add_lin(qr, inst.w_im[k], p.g_cross);
        m.add_lin(qr, inst.w_re[k], p.b_cross);
      }
      add_shunts(pr, qr, n);
    }
  };

  auto for_limited = [&](auto&& fn) {
    for (int k = 0; k < np; ++k)
      if (adm.pairs[k].i_max > 0.0) fn(k, adm.pairs[k]);
  };

  // Apparent-power thermal limit |s_ab|^2 <= (Imax Va)^2 with the voltage
  // kept as a variable term on the left.
  auto power_thermal_polar = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, 0.0, Kernel::SumOfSquares);
      m.add_quad(r, inst.flow_p[k], inst.flow_p[k], 1.0);
      m.add_quad(r, inst.flow_q[k], inst.flow_q[k], 1.0);
      m.add_quad(r, inst.v_mag[p.a], inst.v_mag[p.a], -p.i_max * p.i_max);
    });
  };
  auto power_thermal_rect = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, 0.0, Kernel::SumOfSquares);
      m.add_quad(r, inst.flow_p[k], inst.flow_p[k], 1.0);
      m.add_quad(r, inst.flow_q[k], inst.flow_q[k], 1.0);
      m.add_quad(r, inst.v_re[p.a], inst.v_re[p.a], -p.i_max * p.i_max);
      m.add_quad(r, inst.v_im[p.a], inst.v_im[p.a], -p.i_max * p.i_max);
    });
  };
  auto power_thermal_w = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, 0.0, Kernel::SumOfSquares);
      m.add_quad(r, inst.flow_p[k], inst.flow_p[k], 1.0);
      m.add_quad(r, inst.flow_q[k], inst.flow_q[k], 1.0);
      m.add_lin(r, inst.w_diag[p.a], -p.i_max * p.i_max);
    });
  };

  // Current-magnitude thermal limit ir^2 + ii^2 <= Imax^2.
  auto current_thermal = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, p.i_max * p.i_max,
                        Kernel::SumOfSquares);
      m.add_quad(r, inst.cur_re[k], inst.cur_re[k], 1.0);
      m.add_quad(r, inst.cur_im[k], inst.cur_im[k], 1.0);
    });
  };

  // The same limit written in bus variables, |y_net v_a + y_cross v_b|^2:
  //   polar:  nm^2 Va^2 + cm^2 Vb^2 + 2 nm cm Va Vb cos(d + theta_yy) <= Imax^2
  auto nodal_thermal_polar = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, p.i_max * p.i_max,
                        Kernel::TrigBilinear);
      m.add_quad(r, inst.v_mag[p.a], inst.v_mag[p.a], p.net_mag * p.net_mag);
      m.add_quad(r, inst.v_mag[p.b], inst.v_mag[p.b], p.cross_mag * p.cross_mag);
      m.add_trig(r, inst.v_mag[p.a], inst.v_mag[p.b], inst.v_ang[p.a], inst.v_ang[p.b],
                 2.0 * p.net_mag * p.cross_mag, p.theta_yy, TrigFn::Cos);
    });
  };
  //   rectangular: both current components squared out over the voltages
  auto nodal_thermal_rect = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, p.i_max * p.i_max,
                        Kernel::SumOfSquares);
      int vra = inst.v_re[p.a], via = inst.v_im[p.a];
      int vrb = inst.v_re[p.b], vib = inst.v_im[p.b];
      detail::add_square_of_linear(m, r, {vra, via, vrb, vib},
                                   {p.g_net, -p.b_net, p.g_cross, -p.b_cross}, 1.0);
      detail::add_square_of_linear(m, r, {via, vra, vib, vrb},
                                   {p.g_net, p.b_net, p.g_cross, p.b_cross}, 1.0);
    });
  };
  //   W variables: the same magnitude is linear in (Wd, Wr, Wi)
  auto nodal_thermal_w = [&]() {
    for_limited([&](int k, const PairY& p) {
      int r = m.add_row(pair_tag("thermal", k), -kInf, p.i_max * p.i_max, Kernel::Linear);
      m.add_lin(r, inst.w_diag[p.a], p.net_mag * p.net_mag);
      m.add_lin(r, inst.w_diag[p.b], p.cross_mag * p.cross_mag);
      m.add_lin(r, inst.w_re[k], 2.0 * (p.g_net * p.g_cross + p.b_net * p.b_cross));
      m.add_lin(r, inst.w_im[k], 2.0 * (p.b_net * p.g_cross - p.g_net * p.b_cross));
    });
  };

  // Voltage-magnitude envelope Vmin^2 <= vr^2 + vi^2 <= Vmax^2.
  auto rect_voltage_limits = [&]() {
    for (int n = 0; n < nb; ++n) {
      double lo = nc.buses[n].v_min, hi = nc.buses[n].v_max;
      int r = m.add_row(bus_tag("vmag", n), lo * lo, hi * hi, Kernel::SumOfSquares);
      m.add_quad(r, inst.v_re[n], inst.v_re[n], 1.0);
      m.add_quad(r, inst.v_im[n], inst.v_im[n], 1.0);
    }
  };

  // Diagonal W definition Wd_n = vr_n^2 + vi_n^2.
  auto w_diagonal_rows = [&]() {
    for (int n = 0; n < nb; ++n) {
      int r = m.add_row(bus_tag("Wdiag", n), 0.0, 0.0, Kernel::SumOfSquares);
      m.add_lin(r, inst.w_diag[n], 1.0);
      m.add_quad(r, inst.v_re[n], inst.v_re[n], -1.0);
      m.add_quad(r, inst.v_im[n], inst.v_im[n], -1.0);
    }
  };

  // Cross-product definitions and the magnitude coupling per directed pair:
  //   Wr_ab = vr_a vr_b + vi_a vi_b,  Wi_ab = vr_a vi_b - vi_a vr_b,
  //   Wr^2 + Wi^2 = Wd_a Wd_b.
  // The coupling row is implied by the definition rows, so it is excluded
  // from the nonlinear tally.
  auto w_cross_rows = [&]() {
    for (int k = 0; k < np; ++k) {
      const PairY& p = adm.pairs[k];
      int vra = inst.v_re[p.a], via = inst.v_im[p.a];
      int vrb = inst.v_re[p.b], vib = inst.v_im[p.b];
      int r = m.add_row(pair_tag("Wre", k), 0.0, 0.0, Kernel::Quadratic);
      m.add_lin(r, inst.w_re[k], 1.0);
      m.add_quad(r, vra, vrb, -1.0);
      m.add_quad(r, via, vib, -1.0);
      r = m.add_row(pair_tag("Wim", k), 0.0, 0.0, Kernel::Quadratic);
      m.add_lin(r, inst.w_im[k], 1.0);
      m.add_quad(r, vra, vib, -1.0);
      m.add_quad(r, via, vrb, 1.0);
      r = m.add_row(pair_tag("Wcouple", k), 0.0, 0.0, Kernel::SumOfSquares);
      m.add_quad(r, inst.w_re[k], inst.w_re[k], 1.0);
      m.add_quad(r, inst.w_im[k], inst.w_im[k], 1.0);
      m.add_quad(r, inst.w_diag[p.a], inst.w_diag[p.b], -1.0);
      m.set_tally_override(r, 0);
    }
  };

  switch (kind) {
    case FormulationKind::BPFPV:
      polar_flow_defs();
      flow_balance(Kernel::Quadratic);
      power_thermal_polar();
      break;
    case FormulationKind::BPFRV:
      rect_flow_defs();
      flow_balance(Kernel::Quadratic);
      power_thermal_rect();
      rect_voltage_limits();
      break;
    case FormulationKind::BPFW:
      w_flow_defs();
      flow_balance(Kernel::Linear);
      power_thermal_w();
      w_diagonal_rows();
      w_cross_rows();
      break;
    case FormulationKind::BCFRV:
      current_defs(false);
      current_balance(Kernel::Bilinear);
      current_thermal();
      rect_voltage_limits();
      break;
    case FormulationKind::BCFW:
      current_defs(true);
      current_balance(Kernel::Bilinear);
      current_thermal();
      w_diagonal_rows();
      break;
    case FormulationKind::NIPAPV:
      nodal_polar_balance(true);
      nodal_thermal_polar();
      break;
    case FormulationKind::NIRAPV:
      nodal_polar_balance(false);
      nodal_thermal_polar();
      break;
    case FormulationKind::NIRARV:
      nodal_rect_balance();
      nodal_thermal_rect();
      rect_voltage_limits();
      break;
    case FormulationKind::NIRAW:
      nodal_w_balance();
      nodal_thermal_w();
      w_diagonal_rows();
      w_cross_rows();
      break;
  }

  if (box) apply_box_constraints(inst);
  m.finalize();
  return inst;
}

/// Flat-start initial point: unit voltage at zero angle, generator outputs at
/// bound midpoints, explicit flow variables evaluated from their defining
/// equations at the flat voltage, everything clipped into bounds.
inline std::vector<double> initial_point(const FormulationInstance& inst) {
  const NlpModel& m = inst.model;
  std::vector<double> x(static_cast<std::size_t>(m.num_vars()), 0.0);
  for (int n = 0; n < inst.admittance.n_bus; ++n) {
    if (!inst.v_mag.empty()) x[inst.v_mag[n]] = 1.0;  // angles stay 0
    if (!inst.v_re.empty()) x[inst.v_re[n]] = 1.0;    // vi stays 0
    if (!inst.w_diag.empty()) x[inst.w_diag[n]] = 1.0;
  }
  for (std::size_t g = 0; g < inst.network.generators.size(); ++g) {
    const Generator& gen = inst.network.generators[g];
    x[inst.gen_p[g]] = 0.5 * (gen.p_min + gen.p_max);
    x[inst.gen_q[g]] = 0.5 * (gen.q_min + gen.q_max);
  }
  const Complex flat(1.0, 0.0);
  for (std::size_t k = 0; k < inst.admittance.pairs.size(); ++k) {
    const PairY& p = inst.admittance.pairs[k];
    if (!inst.flow_p.empty()) {
      Complex s = pair_power(p, flat, flat);
      x[inst.flow_p[k]] = s.real();
      x[inst.flow_q[k]] = s.imag();
    }
    if (!inst.cur_re.empty()) {
      Complex i = pair_current(p, flat, flat);
      x[inst.cur_re[k]] = i.real();
      x[inst.cur_im[k]] = i.imag();
    }
    if (!inst.w_re.empty()) {
      x[inst.w_re[k]] = 1.0;
      x[inst.w_im[k]] = 0.0;
    }
  }
  for (int i = 0; i < m.num_vars(); ++i)
    x[i] = std::min(std::max(x[i], m.var_lo(i)), m.var_hi(i));
  return x;
}

/// Transcribes a point of one formulation into another built over the same
/// network: bus voltages are recovered, rotated so the slack bus sits at zero
/// angle (on the real axis), and re-expressed in the target's families; flow
/// and W variables are recomputed from their defining equations; generator
/// outputs are copied. The objective depends only on generator outputs, so it
/// is unchanged by the mapping.
inline std::vector<double> map_solution(const FormulationInstance& src,
                                        const std::vector<double>& x_src,
                                        const FormulationInstance& dst) {
  if (src.network.buses.size() != dst.network.buses.size() ||
      src.admittance.pairs.size() != dst.admittance.pairs.size() ||
      src.network.generators.size() != dst.network.generators.size())
    throw std::invalid_argument("map_solution: instances describe different networks");
  if (static_cast<int>(x_src.size()) != src.model.num_vars())
    throw std::invalid_argument("map_solution: point size mismatch");

  const int nb = src.admittance.n_bus;
  std::vector<Complex> v(static_cast<std::size_t>(nb));
  for (int n = 0; n < nb; ++n)
    v[n] = src.v_mag.empty() ? Complex(x_src[src.v_re[n]], x_src[src.v_im[n]])
                             : std::polar(x_src[src.v_mag[n]], x_src[src.v_ang[n]]);

  int slack = dst.network.slack_index();
  if (slack >= 0) {
    double mag = std::abs(v[slack]);
    if (mag == 0.0)
      throw std::invalid_argument("map_solution: slack voltage has zero magnitude");
    Complex rot = std::conj(v[slack]) / mag;
    for (Complex& vn : v) vn *= rot;
  }

  std::vector<double> x(static_cast<std::size_t>(dst.model.num_vars()), 0.0);
  for (int n = 0; n < nb; ++n) {
    if (!dst.v_mag.empty()) {
      double mag = std::abs(v[n]);
      if (mag == 0.0)
        throw std::invalid_argument("map_solution: zero-magnitude voltage at bus " +
                                    std::to_string(dst.network.buses[n].id) +
                                    " has no polar angle");
      x[dst.v_mag[n]] = mag;
      x[dst.v_ang[n]] = std::arg(v[n]);
    } else {
      x[dst.v_re[n]] = v[n].real();
      x[dst.v_im[n]] = v[n].imag();
    }
    if (!dst.w_diag.empty()) x[dst.w_diag[n]] = std::norm(v[n]);
  }
  for (std::size_t k = 0; k < dst.admittance.pairs.size(); ++k) {
    const PairY& p = dst.admittance.pairs[k];
    if (!dst.flow_p.empty()) {
      Complex s = pair_power(p, v[p.a], v[p.b]);
      x[dst.flow_p[k]] = s.real();
      x[dst.flow_q[k]] = s.imag();
    }
    if (!dst.cur_re.empty()) {
      Complex i = pair_current(p, v[p.a], v[p.b]);
      x[dst.cur_re[k]] = i.real();
      x[dst.cur_im[k]] = i.imag();
    }
    if (!dst.w_re.empty()) {
      Complex w = std::conj(v[p.a]) * v[p.b];
      x[dst.w_re[k]] = w.real();
      x[dst.w_im[k]] = w.imag();
    }
  }
  for (std::size_t g = 0; g < src.network.generators.size(); ++g) {
    x[dst.gen_p[g]] = x_src[src.gen_p[g]];
    x[dst.gen_q[g]] = x_src[src.gen_q[g]];
  }
  return x;
}

/// Convenience overload that builds the target formulation over the source's
/// network first.
inline std::vector<double> map_solution(const FormulationInstance& src,
                                        const std::vector<double>& x_src,
                                        FormulationKind target_kind) {
  FormulationInstance dst = build_formulation(target_kind, src.network, src.admittance);
  return map_solution(src, x_src, dst);
}

/// Constraint and bound violations of a point, grouped by row family (the
/// part of the row name before the trailing index).
inline ResidualReport residuals(const FormulationInstance& inst, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != inst.model.num_vars())
    throw std::invalid_argument("residuals: point size mismatch");
  ResidualReport rep;
  std::vector<double> c;
  inst.model.eval_rows(x, c);
  std::map<std::string, double> blocks;
  const std::vector<Row>& rows = inst.model.rows();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double viol = std::max({0.0, rows[r].lo - c[r], c[r] - rows[r].hi});
    rep.max_violation = std::max(rep.max_violation, viol);
    std::string block = rows[r].name.substr(0, rows[r].name.rfind('_'));
    auto [it, inserted] = blocks.emplace(block, viol);
    if (!inserted) it->second = std::max(it->second, viol);
  }
  for (int i = 0; i < inst.model.num_vars(); ++i) {
    double viol = std::max({0.0, inst.model.var_lo(i) - x[i], x[i] - inst.model.var_hi(i)});
    rep.bound_violation = std::max(rep.bound_violation, viol);
  }
  rep.blocks.assign(blocks.begin(), blocks.end());
  return rep;
}

}  // namespace acopf
