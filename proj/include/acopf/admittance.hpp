#pragma once

// Branch admittance blocks, directed branch-end admittance pairs, and the
// network bus admittance matrix.
//
// Conventions: series admittance ys = 1/(r + jx); charging split evenly
// across the two ends; the off-nominal tap t*e^{j*shift} sits on the from
// side, so
//   y_ff = (ys + j b/2) / t^2      y_ft = -ys / (t e^{-j shift})
//   y_tf = -ys / (t e^{+j shift})  y_tt =  ys + j b/2
// The bus admittance matrix accumulates only these branch blocks; bus shunts
// are kept separately so every formulation adds them as explicit terms.

#include <acopf/case.hpp>

#include <complex>
#include <map>
#include <stdexcept>
#include <vector>

namespace acopf {

using Complex = std::complex<double>;

struct BranchY {
  int from = 0, to = 0; // dense bus indices
  Complex y_ff, y_ft, y_tf, y_tt;
  double i_max = 0.0;   // per-unit; 0 = unlimited
};

/// One directed branch end (a,b): i_ab = y_net*v_a + y_cross*v_b and
/// s_ab = v_a * conj(i_ab). Pair 2k is the from side of branch k, pair
/// 2k+1 its to side.
struct PairY {
  int branch = 0;
  bool from_side = true;
  int a = 0, b = 0; // dense bus indices
  Complex y_net, y_cross;
  double i_max = 0.0;
  // Cached polar pieces for trigonometric constraint kernels:
  // |i_ab|^2 = |y_net|^2 V_a^2 + |y_cross|^2 V_b^2
  //          + 2 |y_net||y_cross| V_a V_b cos(theta_a - theta_b + theta_yy).
  double g_net = 0.0, b_net = 0.0, g_cross = 0.0, b_cross = 0.0;
  double net_mag = 0.0, cross_mag = 0.0, theta_yy = 0.0;
};

struct YbusEntry {
  int col = 0;
  Complex y;
};

struct AdmittanceModel {
  int n_bus = 0;
  std::vector<BranchY> branches;
  std::vector<PairY> pairs;                 // 2K entries
  std::vector<std::vector<YbusEntry>> ybus; // branch blocks only, rows sorted by col
  std::vector<double> shunt_g, shunt_b;     // per-bus shunt admittance

  const YbusEntry* find(int row, int col) const {
    for (const YbusEntry& e : ybus[static_cast<std::size_t>(row)])
      if (e.col == col) return &e;
    return nullptr;
  }
};

inline Complex pair_current(const PairY& p, Complex va, Complex vb) {
  return p.y_net * va + p.y_cross * vb;
}

inline Complex pair_power(const PairY& p, Complex va, Complex vb) {
  return va * std::conj(pair_current(p, va, vb));
}

inline AdmittanceModel build_admittance(const NetworkCase& nc) {
  AdmittanceModel m;
  m.n_bus = static_cast<int>(nc.buses.size());
  m.shunt_g.resize(nc.buses.size());
  m.shunt_b.resize(nc.buses.size());
  for (std::size_t i = 0; i < nc.buses.size(); ++i) {
    m.shunt_g[i] = nc.buses[i].shunt_g;
    m.shunt_b[i] = nc.buses[i].shunt_b;
  }

  std::vector<std::map<int, Complex>> rows(nc.buses.size());
  for (const Branch& br : nc.branches) {
    int f = nc.bus_index(br.from);
    int t = nc.bus_index(br.to);
    if (f < 0 || t < 0)
      throw std::invalid_argument("branch references nonexistent bus " +
                                  std::to_string(f < 0 ? br.from : br.to));
    if (br.r == 0.0 && br.x == 0.0)
      throw std::invalid_argument("branch with zero impedance");

    Complex ys = 1.0 / Complex(br.r, br.x);
    Complex ych(0.0, br.b_charging / 2.0);
    Complex tap = std::polar(br.tap, br.shift);

    BranchY by;
    by.from = f;
    by.to = t;
    by.y_ff = (ys + ych) / (br.tap * br.tap);
    by.y_ft = -ys / std::conj(tap);
    by.y_tf = -ys / tap;
    by.y_tt = ys + ych;
    by.i_max = br.i_max;
    m.branches.push_back(by);

    rows[static_cast<std::size_t>(f)][f] += by.y_ff;
    rows[static_cast<std::size_t>(f)][t] += by.y_ft;
    rows[static_cast<std::size_t>(t)][f] += by.y_tf;
    rows[static_cast<std::size_t>(t)][t] += by.y_tt;

    auto make_pair = [&](bool from_side) {
      PairY p;
      p.branch = static_cast<int>(m.branches.size()) - 1;
      p.from_side = from_side;
      p.a = from_side ? f : t;
      p.b = from_side ? t : f;
      p.y_net = from_side ? by.y_ff : by.y_tt;
      p.y_cross = from_side ? by.y_ft : by.y_tf;
      p.i_max = br.i_max;
      p.g_net = p.y_net.real();
      p.b_net = p.y_net.imag();
      p.g_cross = p.y_cross.real();
      p.b_cross = p.y_cross.imag();
      p.net_mag = std::abs(p.y_net);
      p.cross_mag = std::abs(p.y_cross);
      p.theta_yy = std::arg(p.y_net) - std::arg(p.y_cross);
      m.pairs.push_back(p);
    };
    make_pair(true);
    make_pair(false);
  }

  m.ybus.resize(nc.buses.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (const auto& [col, y] : rows[i]) m.ybus[i].push_back(YbusEntry{col, y});
  return m;
}

} // namespace acopf
