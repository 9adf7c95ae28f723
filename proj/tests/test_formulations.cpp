#include <acopf/formulations.hpp>
#include <acopf/ipm.hpp>

#include <catch2/catch_amalgamated.hpp>

#include "support/fixtures.hpp"
#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

using namespace acopf;
using acopf::testing::Lcg;
using acopf::testing::read_case;
using acopf::testing::synthetic_case;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct BuiltCase {
  NetworkCase nc;
  AdmittanceModel adm;
  explicit BuiltCase(const NetworkCase& c) : nc(c), adm(build_admittance(nc)) {}
};

BuiltCase load_case(const std::string& name) {
  return BuiltCase(parse_matpower_case(read_case(name)));
}

const Row& row_named(const NlpModel& m, const std::string& name) {
  for (const Row& r : m.rows())
    if (r.name == name) return r;
  FAIL("no row named '" + name + "'");
  return m.rows().front(); // unreachable
}

/// Deterministic point strictly inside the variable box (free coordinates get
/// a small nonzero value so trig/quadratic curvature is exercised).
std::vector<double> random_interior_point(const NlpModel& m, Lcg& rng) {
  std::vector<double> x(static_cast<std::size_t>(m.num_vars()));
  for (int i = 0; i < m.num_vars(); ++i) {
    double lo = m.var_lo(i), hi = m.var_hi(i);
    if (lo == hi)
      x[i] = lo;
    else if (std::isfinite(lo) && std::isfinite(hi))
      x[i] = lo + (hi - lo) * rng.uniform(0.25, 0.75);
    else if (std::isfinite(lo))
      x[i] = lo + rng.uniform(0.1, 1.0);
    else if (std::isfinite(hi))
      x[i] = hi - rng.uniform(0.1, 1.0);
    else
      x[i] = rng.uniform(-0.6, 0.6);
  }
  return x;
}

} // namespace

TEST_CASE("formulation names round-trip", "[formulations]") {
  for (FormulationKind k : kAllFormulationKinds) {
    CHECK(formulation_from_name(formulation_name(k)) == k);
  }
  CHECK_THROWS_AS(formulation_from_name("BPFXX"), std::invalid_argument);
  CHECK_THROWS_AS(formulation_from_name(""), std::invalid_argument);
}

TEST_CASE("family predicates partition the nine kinds", "[formulations]") {
  using FK = FormulationKind;
  for (FormulationKind k : kAllFormulationKinds)
    CHECK(uses_polar_voltage(k) != uses_rect_voltage(k));
  CHECK(uses_polar_voltage(FK::BPFPV));
  CHECK(uses_polar_voltage(FK::NIPAPV));
  CHECK(uses_polar_voltage(FK::NIRAPV));
  CHECK(uses_rect_voltage(FK::BPFRV));
  CHECK(uses_rect_voltage(FK::BPFW));
  CHECK(uses_rect_voltage(FK::NIRAW));
  CHECK(uses_power_flows(FK::BPFPV));
  CHECK(uses_power_flows(FK::BPFW));
  CHECK_FALSE(uses_power_flows(FK::BCFRV));
  CHECK(uses_current_flows(FK::BCFRV));
  CHECK(uses_current_flows(FK::BCFW));
  CHECK_FALSE(uses_current_flows(FK::NIPAPV));
  CHECK(uses_w_diagonal(FK::BPFW));
  CHECK(uses_w_diagonal(FK::BCFW));
  CHECK(uses_w_diagonal(FK::NIRAW));
  CHECK_FALSE(uses_w_diagonal(FK::BPFRV));
  CHECK(uses_w_cross(FK::BPFW));
  CHECK(uses_w_cross(FK::NIRAW));
  CHECK_FALSE(uses_w_cross(FK::BCFW));
  for (FormulationKind k : {FK::BPFPV, FK::BPFRV, FK::BCFRV, FK::BCFW, FK::NIRARV})
    CHECK(box_applicable(k));
  for (FormulationKind k : {FK::BPFW, FK::NIPAPV, FK::NIRAPV, FK::NIRAW})
    CHECK_FALSE(box_applicable(k));
}

TEST_CASE("nonlinear constraint counts match the closed forms", "[formulations][counts]") {
  // Closed-form spot values (N buses, K branches).
  CHECK(nonlinear_constraint_count(FormulationKind::BPFPV, 500, 594) == 4564);
  CHECK(nonlinear_constraint_count(FormulationKind::NIRAW, 9, 9) == 45);
  CHECK(nonlinear_constraint_count(FormulationKind::BCFRV, 1, 0) == 4);

  // Built models must tally to exactly the closed form on fully limited cases.
  auto check_case = [](const BuiltCase& c) {
    long long n = static_cast<long long>(c.nc.buses.size());
    long long k = static_cast<long long>(c.nc.branches.size());
    for (FormulationKind kind : kAllFormulationKinds) {
      FormulationInstance inst = build_formulation(kind, c.nc, c.adm);
      INFO(c.nc.name << " " << formulation_name(kind));
      CHECK(inst.model.nonlinear_tally() == nonlinear_constraint_count(kind, n, k));
    }
  };
  check_case(load_case("case9.m"));
  check_case(load_case("case14.m"));
  check_case(BuiltCase(synthetic_case(30, 6, 41)));

  // Variable tally for one kind as a size anchor: 2 per bus + 2 per generator
  // + 2 per directed pair.
  BuiltCase c9 = load_case("case9.m");
  FormulationInstance inst = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm);
  CHECK(inst.model.num_vars() == 60);
  CHECK(inst.model.var_name(inst.v_mag[0]) == "V_1");
  CHECK(inst.model.var_name(inst.v_ang[3]) == "th_4");
  CHECK(inst.model.var_name(inst.gen_p[0]) == "p_0");
  CHECK(inst.model.var_name(inst.flow_q[5]) == "Q_5");
}

TEST_CASE("degrees of freedom and the degenerate flag", "[formulations][counts]") {
  auto dof_of = [](const BuiltCase& c, FormulationKind k) {
    return build_formulation(k, c.nc, c.adm).model.degrees_of_freedom();
  };
  BuiltCase c9 = load_case("case9.m");
  BuiltCase c14 = load_case("case14.m");
  for (FormulationKind k : kAllFormulationKinds) {
    bool full_w = uses_w_cross(k) && !uses_current_flows(k); // BPFW, NIRAW
    INFO(formulation_name(k));
    CHECK(dof_of(c9, k) == (full_w ? -13 : 5));    // 2G-1-2K vs 2G-1 (G=3, K=9)
    CHECK(dof_of(c14, k) == (full_w ? -31 : 9));   // G=5, K=20
    FormulationInstance i9 = build_formulation(k, c9.nc, c9.adm);
    CHECK(i9.degenerate() == full_w);
  }
}

TEST_CASE("analytic derivatives agree with central differences", "[formulations][derivatives]") {
  const double tol = 1e-6;
  // case14's thermal rows carry coefficients near 1e4 (99 pu current limit
  // squared); the finite-difference noise floor |value| * eps / step then
  // needs the larger step to stay below tol. All rows are quadratic or trig,
  // so the added truncation error is negligible.
  for (auto [name, step] : {std::pair{"case9.m", 1e-6}, {"case14.m", 1e-5}}) {
    BuiltCase c = load_case(name);
    for (FormulationKind kind : kAllFormulationKinds) {
      FormulationInstance inst = build_formulation(kind, c.nc, c.adm);
      Lcg rng(0x5eed + static_cast<std::uint64_t>(kind));
      for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x = random_interior_point(inst.model, rng);
        std::vector<double> lam(static_cast<std::size_t>(inst.model.num_rows()));
        for (double& l : lam) l = rng.uniform(-2.0, 2.0);
        DerivativeCheck dc = check_derivatives(inst.model, x, 1.0, &lam, step);
        INFO(name << " " << formulation_name(kind) << " point " << rep
                  << ": grad=" << dc.grad_error << " jac=" << dc.jac_error
                  << " hess=" << dc.hess_error);
        CHECK(dc.ok(tol));
      }
    }
  }
}

TEST_CASE("flat start is inside bounds and pins the known residuals", "[formulations][initial]") {
  BuiltCase c9 = load_case("case9.m");
  for (FormulationKind kind : kAllFormulationKinds) {
    FormulationInstance inst = build_formulation(kind, c9.nc, c9.adm);
    std::vector<double> x0 = initial_point(inst);
    ResidualReport rep = residuals(inst, x0);
    INFO(formulation_name(kind));
    CHECK(rep.bound_violation == 0.0);
    // Flat voltage => zero branch flows, so the worst balance violation is the
    // largest |midpoint generation - load| over buses: 155 MW at bus 2.
    if (kind == FormulationKind::NIPAPV)
      CHECK_THAT(rep.max_violation, WithinAbs(1.55, 1e-12));
    else
      CHECK(rep.max_violation == 1.55);
  }

  // With generator outputs forced to zero instead, the worst violation is the
  // largest load (125 MW at bus 9).
  FormulationInstance inst = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm);
  std::vector<double> x0 = initial_point(inst);
  for (std::size_t g = 0; g < c9.nc.generators.size(); ++g) {
    x0[inst.gen_p[g]] = 0.0;
    x0[inst.gen_q[g]] = 0.0;
  }
  CHECK(residuals(inst, x0).max_violation == 1.25);

  BuiltCase c14 = load_case("case14.m");
  for (FormulationKind kind : kAllFormulationKinds) {
    FormulationInstance i14 = build_formulation(kind, c14.nc, c14.adm);
    ResidualReport rep = residuals(i14, initial_point(i14));
    INFO(formulation_name(kind));
    CHECK(rep.bound_violation == 0.0);
    CHECK_THAT(rep.max_violation, WithinAbs(1.662, 1e-12));
  }
}

TEST_CASE("residual report groups rows by family", "[formulations][residuals]") {
  BuiltCase c9 = load_case("case9.m");
  FormulationInstance inst = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm);
  ResidualReport rep = residuals(inst, initial_point(inst));
  auto block = [&](const std::string& key) -> const double* {
    for (const auto& [name, v] : rep.blocks)
      if (name == key) return &v;
    return nullptr;
  };
  for (const char* key : {"pbal", "qbal", "Pdef", "Qdef", "thermal"}) {
    INFO(key);
    REQUIRE(block(key) != nullptr);
    CHECK(*block(key) <= rep.max_violation);
  }
  double worst = 0.0;
  for (const auto& [name, v] : rep.blocks) worst = std::max(worst, v);
  CHECK(worst == rep.max_violation);
  CHECK(*block("pbal") == rep.max_violation); // flat start violates only balances
  CHECK(*block("Pdef") == 0.0);

  CHECK_THROWS_AS(residuals(inst, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("map_solution rotates, transcribes, and validates", "[formulations][map]") {
  BuiltCase c9 = load_case("case9.m");
  FormulationInstance polar = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm);
  FormulationInstance rect = build_formulation(FormulationKind::NIRARV, c9.nc, c9.adm);
  FormulationInstance w = build_formulation(FormulationKind::NIRAW, c9.nc, c9.adm);

  // A deliberately rotated rectangular point: every voltage multiplied by
  // exp(j*phi). Mapping to polar must land the slack back on the real axis
  // with magnitudes preserved.
  const double phi = 0.7;
  std::vector<double> xr(static_cast<std::size_t>(rect.model.num_vars()), 0.0);
  Lcg rng(99);
  std::vector<std::complex<double>> v(c9.nc.buses.size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    v[n] = std::polar(rng.uniform(0.95, 1.05), rng.uniform(-0.3, 0.3) + phi);
    xr[rect.v_re[n]] = v[n].real();
    xr[rect.v_im[n]] = v[n].imag();
  }
  for (std::size_t g = 0; g < c9.nc.generators.size(); ++g) {
    xr[rect.gen_p[g]] = 0.5 + 0.1 * static_cast<double>(g);
    xr[rect.gen_q[g]] = 0.1;
  }

  std::vector<double> xp = map_solution(rect, xr, polar);
  int slack = c9.nc.slack_index();
  CHECK_THAT(xp[polar.v_ang[slack]], WithinAbs(0.0, 1e-14));
  for (std::size_t n = 0; n < v.size(); ++n) {
    CHECK_THAT(xp[polar.v_mag[n]], WithinAbs(std::abs(v[n]), 1e-14));
    double want = std::arg(v[n] * std::conj(v[slack]) / std::abs(v[slack]));
    CHECK_THAT(xp[polar.v_ang[n]], WithinAbs(want, 1e-14));
  }
  for (std::size_t g = 0; g < c9.nc.generators.size(); ++g) {
    CHECK(xp[polar.gen_p[g]] == xr[rect.gen_p[g]]);
    CHECK(xp[polar.gen_q[g]] == xr[rect.gen_q[g]]);
  }
  // Objective depends only on generator outputs, so it survives any mapping.
  CHECK(polar.model.eval_objective(xp) == rect.model.eval_objective(xr));

  // W variables are consistent with the transcribed voltages.
  std::vector<double> xw = map_solution(rect, xr, w);
  for (std::size_t n = 0; n < v.size(); ++n)
    CHECK_THAT(xw[w.w_diag[n]], WithinAbs(std::norm(v[n]), 1e-14));
  for (std::size_t k = 0; k < c9.adm.pairs.size(); ++k) {
    const PairY& p = c9.adm.pairs[k];
    std::complex<double> rot = std::conj(v[slack]) / std::abs(v[slack]);
    std::complex<double> wab = std::conj(v[p.a] * rot) * (v[p.b] * rot);
    CHECK_THAT(xw[w.w_re[k]], WithinAbs(wab.real(), 1e-13));
    CHECK_THAT(xw[w.w_im[k]], WithinAbs(wab.imag(), 1e-13));
  }

  // Round trip polar -> rect -> polar preserves the voltage profile.
  std::vector<double> back = map_solution(rect, map_solution(polar, xp, rect), polar);
  for (std::size_t n = 0; n < v.size(); ++n) {
    CHECK_THAT(back[polar.v_mag[n]], WithinAbs(xp[polar.v_mag[n]], 1e-13));
    CHECK_THAT(back[polar.v_ang[n]], WithinAbs(xp[polar.v_ang[n]], 1e-13));
  }

  // Error paths: wrong point size, a dead slack bus, a dead bus mapped to
  // polar coordinates, and mismatched networks.
  CHECK_THROWS_AS(map_solution(rect, std::vector<double>(5, 1.0), polar), std::invalid_argument);
  std::vector<double> dead = xr;
  dead[rect.v_re[slack]] = 0.0;
  dead[rect.v_im[slack]] = 0.0;
  CHECK_THROWS_AS(map_solution(rect, dead, polar), std::invalid_argument);
  std::vector<double> dark = xr;
  dark[rect.v_re[2]] = 0.0;
  dark[rect.v_im[2]] = 0.0;
  CHECK_THROWS_AS(map_solution(rect, dark, polar), std::invalid_argument);
  CHECK_NOTHROW(map_solution(rect, dark, FormulationKind::BCFRV)); // rect target is fine
  BuiltCase c14 = load_case("case14.m");
  FormulationInstance other = build_formulation(FormulationKind::BPFPV, c14.nc, c14.adm);
  CHECK_THROWS_AS(map_solution(rect, xr, other), std::invalid_argument);
}

TEST_CASE("a solved optimum transcribes to every other kind", "[formulations][map][solve]") {
  BuiltCase c9 = load_case("case9.m");
  FormulationInstance src = build_formulation(FormulationKind::NIPAPV, c9.nc, c9.adm);
  IpmOptions opts;
  opts.tol = 1e-8;
  NlpSolution sol = solve_nlp(src.model, initial_point(src));
  REQUIRE(sol.status == SolveStatus::Optimal);
  double obj = src.model.eval_objective(sol.x);

  for (FormulationKind kind : kAllFormulationKinds) {
    if (kind == FormulationKind::NIPAPV) continue;
    FormulationInstance dst = build_formulation(kind, c9.nc, c9.adm);
    std::vector<double> xm = map_solution(src, sol.x, dst);
    ResidualReport rep = residuals(dst, xm);
    INFO(formulation_name(kind) << ": viol=" << rep.max_violation
                                << " bound=" << rep.bound_violation);
    CHECK(rep.max_violation <= 1e-6);
    CHECK(rep.bound_violation <= 1e-6);
    CHECK(dst.model.eval_objective(xm) == obj); // bitwise: same gen values, same costs
  }
}

TEST_CASE("all solvable kinds find the same optimum on case9", "[formulations][solve]") {
  const double reference = 5296.6862039943; // interior-point optimum, all kinds
  BuiltCase c9 = load_case("case9.m");
  IpmOptions opts;
  opts.tol = 1e-8;
  for (FormulationKind kind : kAllFormulationKinds) {
    FormulationInstance inst = build_formulation(kind, c9.nc, c9.adm);
    NlpSolution sol = solve_nlp(inst.model, initial_point(inst), opts);
    INFO(formulation_name(kind));
    if (inst.degenerate()) {
      CHECK(sol.status == SolveStatus::Degenerate);
      continue;
    }
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK_THAT(sol.objective, WithinRel(reference, 1e-8));
    CHECK(sol.iterations < 60);
    CHECK(residuals(inst, sol.x).max_violation <= 1e-7);
  }
}

TEST_CASE("branch losses are nonnegative at the optimum", "[formulations][solve]") {
  BuiltCase c9 = load_case("case9.m");
  FormulationInstance inst = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm);
  IpmOptions opts;
  opts.tol = 1e-8;
  NlpSolution sol = solve_nlp(inst.model, initial_point(inst), opts);
  REQUIRE(sol.status == SolveStatus::Optimal);
  for (std::size_t k = 0; k < c9.nc.branches.size(); ++k) {
    double loss = sol.x[inst.flow_p[2 * k]] + sol.x[inst.flow_p[2 * k + 1]];
    INFO("branch " << k);
    CHECK(loss >= -1e-9);
  }
}

TEST_CASE("box tightening adds bounds and nothing else", "[formulations][box]") {
  BuiltCase c9 = load_case("case9.m");

  SECTION("current-form bounds and intersect semantics") {
    FormulationInstance plain = build_formulation(FormulationKind::BCFRV, c9.nc, c9.adm);
    FormulationInstance boxed = build_formulation(FormulationKind::BCFRV, c9.nc, c9.adm, true);
    CHECK(boxed.box);
    CHECK(boxed.model.num_rows() == plain.model.num_rows());
    for (std::size_t k = 0; k < c9.adm.pairs.size(); ++k) {
      const PairY& p = c9.adm.pairs[k];
      CHECK(boxed.model.var_lo(boxed.cur_re[k]) == std::max(plain.model.var_lo(plain.cur_re[k]), -p.i_max));
      CHECK(boxed.model.var_hi(boxed.cur_im[k]) == std::min(plain.model.var_hi(plain.cur_im[k]), p.i_max));
    }
    for (std::size_t n = 0; n < c9.nc.buses.size(); ++n) {
      double vmax = c9.nc.buses[n].v_max;
      CHECK(boxed.model.var_hi(boxed.v_re[n]) <= vmax);
      CHECK(boxed.model.var_lo(boxed.v_im[n]) >= -vmax);
    }
    for (int i = 0; i < plain.model.num_vars(); ++i) {
      CHECK(boxed.model.var_lo(i) >= plain.model.var_lo(i));
      CHECK(boxed.model.var_hi(i) <= plain.model.var_hi(i));
    }
  }

  SECTION("power-form bounds use the near-end voltage cap") {
    FormulationInstance boxed = build_formulation(FormulationKind::BPFPV, c9.nc, c9.adm, true);
    for (std::size_t k = 0; k < c9.adm.pairs.size(); ++k) {
      const PairY& p = c9.adm.pairs[k];
      double s = p.i_max * c9.nc.buses[p.a].v_max;
      CHECK(boxed.model.var_lo(boxed.flow_p[k]) == -s);
      CHECK(boxed.model.var_hi(boxed.flow_q[k]) == s);
    }
  }

  SECTION("unlimited branches are skipped") {
    NetworkCase nc = c9.nc;
    nc.branches[0].i_max = 0.0;
    AdmittanceModel adm = build_admittance(nc);
    FormulationInstance boxed = build_formulation(FormulationKind::BCFRV, nc, adm, true);
    CHECK(boxed.model.var_lo(boxed.cur_re[0]) == -kInf);
    CHECK(boxed.model.var_hi(boxed.cur_im[1]) == kInf);
    CHECK(boxed.model.var_lo(boxed.cur_re[2]) == -adm.pairs[2].i_max);
  }

  SECTION("non-applicable kinds warn and stay untouched") {
    FormulationInstance inst = build_formulation(FormulationKind::NIPAPV, c9.nc, c9.adm, true);
    CHECK_FALSE(inst.box);
    REQUIRE_FALSE(inst.warnings.empty());
    CHECK(inst.warnings.front().find("no-op") != std::string::npos);
  }

  SECTION("the box does not cut the optimum") {
    IpmOptions opts;
    opts.tol = 1e-8;
    for (bool box : {false, true}) {
      FormulationInstance inst = build_formulation(FormulationKind::BCFRV, c9.nc, c9.adm, box);
      NlpSolution sol = solve_nlp(inst.model, initial_point(inst), opts);
      REQUIRE(sol.status == SolveStatus::Optimal);
      CHECK_THAT(sol.objective, WithinRel(5296.6862039943, 1e-5));
    }
  }
}

TEST_CASE("parallel generators at one bus aggregate in the balance", "[formulations]") {
  NetworkCase nc;
  nc.name = "twin-gen";
  for (int id = 1; id <= 3; ++id) {
    Bus b;
    b.id = id;
    b.type = id == 1 ? BusType::Slack : BusType::PQ;
    b.base_kv = 138.0;
    nc.buses.push_back(b);
  }
  for (double c1 : {900.0, 2500.0}) { // cheap first, expensive second
    Generator g;
    g.bus = 1;
    g.p_min = 0.0;
    g.p_max = 1.0;
    g.q_min = -0.5;
    g.q_max = 0.5;
    g.c2 = 100.0;
    g.c1 = c1;
    nc.generators.push_back(g);
  }
  nc.loads.push_back(Load{2, 0.4, 0.1});
  nc.loads.push_back(Load{3, 0.3, 0.05});
  for (auto [f, t] : {std::pair{1, 2}, {2, 3}, {3, 1}}) {
    Branch br;
    br.from = f;
    br.to = t;
    br.r = 0.01;
    br.x = 0.1;
    br.i_max = 2.0;
    nc.branches.push_back(br);
  }
  REQUIRE(validate_case(nc).ok());
  AdmittanceModel adm = build_admittance(nc);
  FormulationInstance inst = build_formulation(FormulationKind::BPFPV, nc, adm);

  // Both generators enter bus 1's real-power balance with coefficient +1.
  const Row& pbal = row_named(inst.model, "pbal_1");
  for (int g = 0; g < 2; ++g) {
    bool found = false;
    for (const LinTerm& t : pbal.lin)
      if (t.var == inst.gen_p[g]) {
        found = true;
        CHECK(t.coef == 1.0);
      }
    INFO("generator " << g);
    CHECK(found);
  }

  NlpSolution sol = solve_nlp(inst.model, initial_point(inst), IpmOptions{.tol = 1e-8});
  REQUIRE(sol.status == SolveStatus::Optimal);
  double p_cheap = sol.x[inst.gen_p[0]], p_dear = sol.x[inst.gen_p[1]];
  CHECK(p_cheap > p_dear);              // identical quadratic term, lower slope
  CHECK(p_cheap + p_dear > 0.7);        // covers load plus losses
  CHECK(p_cheap + p_dear < 0.75);
}

TEST_CASE("an isolated bus still builds and balances", "[formulations]") {
  NetworkCase nc;
  nc.name = "islanded";
  for (int id = 1; id <= 4; ++id) {
    Bus b;
    b.id = id;
    b.type = id == 1 ? BusType::Slack : BusType::PQ;
    b.base_kv = 138.0;
    nc.buses.push_back(b);
  }
  Generator g;
  g.bus = 1;
  g.p_max = 1.0;
  g.q_min = -0.5;
  g.q_max = 0.5;
  g.c1 = 1000.0;
  nc.generators.push_back(g);
  nc.loads.push_back(Load{3, 0.2, 0.05});
  for (auto [f, t] : {std::pair{1, 2}, {2, 3}, {3, 1}}) { // bus 4 untouched
    Branch br;
    br.from = f;
    br.to = t;
    br.r = 0.01;
    br.x = 0.1;
    br.i_max = 2.0;
    nc.branches.push_back(br);
  }
  AdmittanceModel adm = build_admittance(nc);
  for (FormulationKind kind : kAllFormulationKinds) {
    FormulationInstance inst = build_formulation(kind, nc, adm);
    INFO(formulation_name(kind));
    // The isolated bus contributes empty balance rows that a flat start
    // already satisfies.
    const Row& pbal = row_named(inst.model, "pbal_4");
    CHECK(pbal.lo == 0.0);
    CHECK(pbal.hi == 0.0);
    std::vector<double> x0 = initial_point(inst);
    std::vector<double> c;
    inst.model.eval_rows(x0, c);
    CHECK(c[&pbal - inst.model.rows().data()] == 0.0);
  }
}
