#pragma once

// Deterministic synthetic network generator for tests: a ring over all buses
// plus pseudo-random chords, generators spread evenly, loads on most PQ buses.
// Every branch carries a thermal limit. Same arguments always produce the
// same case.

#include <acopf/case.hpp>

#include <cstdint>
#include <stdexcept>

namespace acopf::testing {

class Lcg {
 public:
  explicit Lcg(std::uint64_t seed) : state_(seed * 2862933555777941757ULL + 3037000493ULL) {}
  std::uint64_t next() {
    state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
    return state_ >> 11;
  }
  double uniform() { return static_cast<double>(next() % (1ULL << 40)) / static_cast<double>(1ULL << 40); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int pick(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

 private:
  std::uint64_t state_;
};

inline NetworkCase synthetic_case(int n_bus, int n_gen, int n_branch, std::uint64_t seed = 1) {
  if (n_bus < 3 || n_gen < 1 || n_gen > n_bus || n_branch < n_bus)
    throw std::invalid_argument("synthetic_case: need n_bus >= 3, 1 <= n_gen <= n_bus, n_branch >= n_bus");
  Lcg rng(seed);
  NetworkCase nc;
  nc.name = "syn" + std::to_string(n_bus);
  nc.base_mva = 100.0;

  // Generator buses spread evenly around the ring; bus 1 is the slack.
  std::vector<bool> has_gen(static_cast<std::size_t>(n_bus) + 1, false);
  for (int g = 0; g < n_gen; ++g) {
    int id = 1 + (g * n_bus) / n_gen;
    has_gen[static_cast<std::size_t>(id)] = true;
  }
  has_gen[1] = true;

  double total_load = 0.0;
  for (int id = 1; id <= n_bus; ++id) {
    Bus b;
    b.id = id;
    b.type = (id == 1) ? BusType::Slack : (has_gen[static_cast<std::size_t>(id)] ? BusType::PV : BusType::PQ);
    b.v_min = 0.9;
    b.v_max = 1.1;
    b.base_kv = 138.0;
    if (id % 7 == 3) b.shunt_b = 0.05;
    if (id % 11 == 5) b.shunt_g = 0.01;
    nc.buses.push_back(b);

    if (!has_gen[static_cast<std::size_t>(id)] && rng.uniform() < 0.7) {
      double p = rng.uniform(0.05, 0.25);
      nc.loads.push_back(Load{id, p, p * rng.uniform(0.2, 0.4)});
      total_load += p;
    }
  }

  int gens_left = 0;
  for (int id = 1; id <= n_bus; ++id) gens_left += has_gen[static_cast<std::size_t>(id)] ? 1 : 0;
  double cap_each = std::max(0.5, 2.0 * total_load / gens_left);
  for (int id = 1; id <= n_bus; ++id) {
    if (!has_gen[static_cast<std::size_t>(id)]) continue;
    Generator g;
    g.bus = id;
    g.p_min = 0.02;
    g.p_max = cap_each * rng.uniform(0.8, 1.2);
    g.q_max = 0.8 * g.p_max;
    g.q_min = -g.q_max;
    g.c2 = rng.uniform(400.0, 1400.0);  // $/pu^2  (0.04..0.14 $/MW^2 at 100 MVA base)
    g.c1 = rng.uniform(500.0, 3000.0);  // $/pu
    g.c0 = rng.uniform(50.0, 300.0);
    nc.generators.push_back(g);
  }

  auto add_branch = [&](int from, int to) {
    Branch br;
    br.from = from;
    br.to = to;
    br.r = rng.uniform(0.005, 0.03);
    br.x = rng.uniform(0.05, 0.2);
    br.b_charging = rng.uniform(0.0, 0.08);
    br.i_max = rng.uniform(2.0, 4.0); // generous: flows here are fractions of 1 pu
    int k = static_cast<int>(nc.branches.size());
    if (k % 9 == 4) br.tap = (k % 2 == 0) ? 0.98 : 1.02;
    if (k % 13 == 6) br.shift = ((k % 2 == 0) ? 1.0 : -1.0) * kPi / 180.0;
    nc.branches.push_back(br);
  };

  for (int id = 1; id <= n_bus; ++id) add_branch(id, id % n_bus + 1);
  for (int k = 0; n_branch > n_bus + k; ++k) {
    int from = 1 + static_cast<int>((static_cast<std::uint64_t>(k) * 7919ULL) % static_cast<std::uint64_t>(n_bus));
    int offset = 2 + static_cast<int>((static_cast<std::uint64_t>(k) * 104729ULL) % static_cast<std::uint64_t>(n_bus - 3));
    int to = (from - 1 + offset) % n_bus + 1;
    add_branch(from, to);
  }
  return nc;
}

} // namespace acopf::testing
