#include <acopf/ipm.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace acopf;

namespace {

IpmOptions tight() {
  IpmOptions o;
  o.tol = 1e-10;
  return o;
}

constexpr double kSolTol = 1e-8;

} // namespace

TEST_CASE("unconstrained separable quadratic", "[ipm]") {
  // min (x-3)^2 + (y+1)^2
  NlpModel m;
  int x = m.add_variable("x", -100, 100);
  int y = m.add_variable("y", -100, 100);
  m.set_objective(x, 1.0, -6.0);
  m.add_objective_constant(9.0);
  m.set_objective(y, 1.0, 2.0);
  m.add_objective_constant(1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {0.0, 0.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0] - 3.0) < kSolTol);
  CHECK(std::abs(s.x[1] + 1.0) < kSolTol);
  CHECK(std::abs(s.objective) < kSolTol);
}

TEST_CASE("active bound and its multiplier", "[ipm]") {
  // min x^2 + x on [0, 2]: minimizer sits at the lower bound, z* = 1.
  NlpModel m;
  int x = m.add_variable("x", 0.0, 2.0);
  m.set_objective(x, 1.0, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {1.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0]) < kSolTol);
  CHECK(std::abs(s.z_lower[0] - 1.0) < 1e-6);
  CHECK(std::abs(s.objective) < kSolTol);

  SECTION("starting point outside the bounds is pushed inside") {
    NlpSolution s2 = solve_nlp(m, {-50.0}, tight());
    REQUIRE(s2.status == SolveStatus::Optimal);
    CHECK(std::abs(s2.x[0]) < kSolTol);
  }
}

TEST_CASE("equality-constrained quadratic and multiplier", "[ipm]") {
  // min x^2 + y^2 s.t. x + y = 2: x = y = 1, lambda = -2.
  NlpModel m;
  int x = m.add_variable("x", -10, 10);
  int y = m.add_variable("y", -10, 10);
  m.set_objective(x, 1.0, 0.0);
  m.set_objective(y, 1.0, 0.0);
  int r = m.add_row("sum", 2.0, 2.0, Kernel::Linear);
  m.add_lin(r, x, 1.0);
  m.add_lin(r, y, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {0.0, 0.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0] - 1.0) < kSolTol);
  CHECK(std::abs(s.x[1] - 1.0) < kSolTol);
  CHECK(std::abs(s.lambda[0] + 2.0) < 1e-6);
  CHECK(std::abs(s.objective - 2.0) < kSolTol);
}

TEST_CASE("linear program", "[ipm]") {
  // min -x - 2y s.t. x + y <= 4, x <= 3, 0 <= x, y <= 10: optimum (0, 4).
  NlpModel m;
  int x = m.add_variable("x", 0, 10);
  int y = m.add_variable("y", 0, 10);
  m.set_objective(x, 0.0, -1.0);
  m.set_objective(y, 0.0, -2.0);
  int r1 = m.add_row("cap", -kInf, 4.0, Kernel::Linear);
  m.add_lin(r1, x, 1.0);
  m.add_lin(r1, y, 1.0);
  int r2 = m.add_row("xcap", -kInf, 3.0, Kernel::Linear);
  m.add_lin(r2, x, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {1.0, 1.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0]) < 1e-7);
  CHECK(std::abs(s.x[1] - 4.0) < 1e-7);
  CHECK(std::abs(s.objective + 8.0) < 1e-7);
}

TEST_CASE("lifted rosenbrock valley", "[ipm]") {
  // min (1-x)^2 + 100 u^2 s.t. u = y - x^2: classic banana, optimum (1, 1).
  NlpModel m;
  int x = m.add_variable("x", -5, 5);
  int y = m.add_variable("y", -5, 5);
  int u = m.add_variable("u", -50, 50);
  m.set_objective(x, 1.0, -2.0);
  m.add_objective_constant(1.0);
  m.set_objective(u, 100.0, 0.0);
  int r = m.add_row("lift", 0.0, 0.0, Kernel::Quadratic);
  m.add_lin(r, u, 1.0);
  m.add_lin(r, y, -1.0);
  m.add_quad(r, x, x, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {-1.2, 1.0, 0.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0] - 1.0) < 1e-6);
  CHECK(std::abs(s.x[1] - 1.0) < 1e-6);
  CHECK(std::abs(s.objective) < 1e-10);
}

TEST_CASE("bilinear equality", "[ipm]") {
  // min x + y s.t. x*y = 4, x,y in [0.1, 10]: x = y = 2, lambda = -1/2.
  NlpModel m;
  int x = m.add_variable("x", 0.1, 10);
  int y = m.add_variable("y", 0.1, 10);
  m.set_objective(x, 0.0, 1.0);
  m.set_objective(y, 0.0, 1.0);
  int r = m.add_row("prod", 4.0, 4.0, Kernel::Bilinear);
  m.add_quad(r, x, y, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {1.0, 3.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0] - 2.0) < kSolTol);
  CHECK(std::abs(s.x[1] - 2.0) < kSolTol);
  CHECK(std::abs(s.lambda[0] + 0.5) < 1e-6);
}

TEST_CASE("trigonometric row with fixed variables", "[ipm]") {
  // min -t s.t. t = V^2 cos(theta - ref), V fixed at 1, ref fixed at 0.3:
  // the angle aligns with the reference and t reaches 1.
  NlpModel m;
  int V = m.add_variable("V", 1.0, 1.0);
  int th = m.add_variable("theta", -2.0, 2.0);
  int ref = m.add_variable("ref", 0.3, 0.3);
  int t = m.add_variable("t", -2.0, 2.0);
  m.set_objective(t, 0.0, -1.0);
  int r = m.add_row("def", 0.0, 0.0, Kernel::TrigBilinear);
  m.add_lin(r, t, 1.0);
  m.add_trig(r, V, V, th, ref, -1.0, 0.0, TrigFn::Cos);
  m.finalize();

  NlpSolution s = solve_nlp(m, {1.0, -0.5, 0.3, 0.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[1] - 0.3) < 1e-6);
  CHECK(std::abs(s.x[3] - 1.0) < kSolTol);
  CHECK(s.x[0] == 1.0);  // fixed variables do not move
  CHECK(s.x[2] == 0.3);
}

TEST_CASE("two-sided nonlinear inequality", "[ipm]") {
  // min (x-5)^2 s.t. 1 <= x^2 <= 4: the upper side binds at x = 2.
  NlpModel m;
  int x = m.add_variable("x", -10, 10);
  m.set_objective(x, 1.0, -10.0);
  m.add_objective_constant(25.0);
  int r = m.add_row("ring", 1.0, 4.0, Kernel::SumOfSquares);
  m.add_quad(r, x, x, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {1.5}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.x[0] - 2.0) < kSolTol);
  CHECK(std::abs(s.objective - 9.0) < kSolTol);
}

TEST_CASE("infeasible equality is detected", "[ipm]") {
  // x + y = 3 with x, y in [0, 1] cannot be met.
  NlpModel m;
  int x = m.add_variable("x", 0, 1);
  int y = m.add_variable("y", 0, 1);
  m.set_objective(x, 1.0, 0.0);
  m.set_objective(y, 1.0, 0.0);
  int r = m.add_row("sum", 3.0, 3.0, Kernel::Linear);
  m.add_lin(r, x, 1.0);
  m.add_lin(r, y, 1.0);
  m.finalize();

  IpmOptions o;
  o.tol = 1e-8;
  NlpSolution s = solve_nlp(m, {0.5, 0.5}, o);
  CHECK(s.status == SolveStatus::Infeasible);
  CHECK(s.feasibility_error > 0.5);
}

TEST_CASE("over-determined model short-circuits as degenerate", "[ipm]") {
  // Two equalities on one free variable.
  NlpModel m;
  int x = m.add_variable("x", 0, 2);
  int r1 = m.add_row("r1", 1.0, 1.0, Kernel::Linear);
  m.add_lin(r1, x, 1.0);
  int r2 = m.add_row("r2", 1.0, 1.0, Kernel::Quadratic);
  m.add_quad(r2, x, x, 1.0);
  m.finalize();
  CHECK(m.degrees_of_freedom() == -1);

  NlpSolution s = solve_nlp(m, {0.5}, tight());
  CHECK(s.status == SolveStatus::Degenerate);
  CHECK(s.iterations == 0);

  SECTION("forcing the solve attempts it anyway") {
    IpmOptions o = tight();
    o.force_degenerate = true;
    o.max_iter = 200;
    NlpSolution s2 = solve_nlp(m, {0.5}, o);
    CHECK(s2.status != SolveStatus::Degenerate);
    // The rows are mutually consistent at x = 1; the attempt should get there.
    CHECK(std::abs(s2.x[0] - 1.0) < 1e-6);
  }
}

TEST_CASE("saddle point is escaped by inertia correction", "[ipm]") {
  // min t s.t. t = x*y, x^2 + y^2 <= 1: minimum value -1/2.
  NlpModel m;
  int x = m.add_variable("x", -2, 2);
  int y = m.add_variable("y", -2, 2);
  int t = m.add_variable("t", -10, 10);
  m.set_objective(t, 0.0, 1.0);
  int r = m.add_row("lift", 0.0, 0.0, Kernel::Bilinear);
  m.add_lin(r, t, 1.0);
  m.add_quad(r, x, y, -1.0);
  int disk = m.add_row("disk", -kInf, 1.0, Kernel::SumOfSquares);
  m.add_quad(disk, x, x, 1.0);
  m.add_quad(disk, y, y, 1.0);
  m.finalize();

  NlpSolution s = solve_nlp(m, {0.1, 0.1, 0.0}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(std::abs(s.objective + 0.5) < 1e-7);
  CHECK(std::abs(s.x[0] * s.x[1] + 0.5) < 1e-7);

  SECTION("iteration cap reports max-iter") {
    IpmOptions o = tight();
    o.max_iter = 2;
    NlpSolution s2 = solve_nlp(m, {0.1, 0.1, 0.0}, o);
    CHECK(s2.status == SolveStatus::MaxIter);
    CHECK(s2.iterations == 2);
  }
}

TEST_CASE("linear objective on a circle", "[ipm]") {
  // min x + 2y s.t. x^2 + y^2 = 2: optimum -sqrt(2/5)*(1, 2), value -sqrt(10).
  NlpModel m;
  int x = m.add_variable("x", -5, 5);
  int y = m.add_variable("y", -5, 5);
  m.set_objective(x, 0.0, 1.0);
  m.set_objective(y, 0.0, 2.0);
  int r1 = m.add_row("circle", 2.0, 2.0, Kernel::SumOfSquares);
  m.add_quad(r1, x, x, 1.0);
  m.add_quad(r1, y, y, 1.0);
  m.finalize();
  CHECK(m.degrees_of_freedom() == 1);

  NlpSolution s = solve_nlp(m, {-0.5, -0.8}, tight());
  REQUIRE(s.status == SolveStatus::Optimal);
  const double root = std::sqrt(2.0 / 5.0);
  CHECK(std::abs(s.x[0] + root) < kSolTol);
  CHECK(std::abs(s.x[1] + 2.0 * root) < kSolTol);
  CHECK(std::abs(s.objective + std::sqrt(10.0)) < kSolTol);
}

TEST_CASE("time limit reports cleanly", "[ipm]") {
  NlpModel m;
  int x = m.add_variable("x", -5, 5);
  int y = m.add_variable("y", -5, 5);
  m.set_objective(x, 1.0, -2.0);
  int r = m.add_row("r", 4.0, 4.0, Kernel::Bilinear);
  m.add_quad(r, x, y, 1.0);
  m.finalize();

  IpmOptions o = tight();
  o.time_limit_s = 1e-12;
  NlpSolution s = solve_nlp(m, {1.0, 3.0}, o);
  CHECK(s.status == SolveStatus::TimeLimit);
}

TEST_CASE("solver reports unscaled errors and a log", "[ipm]") {
  NlpModel m;
  int x = m.add_variable("x", 0.1, 10);
  int y = m.add_variable("y", 0.1, 10);
  m.set_objective(x, 0.0, 1.0);
  m.set_objective(y, 0.0, 1.0);
  int r = m.add_row("prod", 4.0, 4.0, Kernel::Bilinear);
  m.add_quad(r, x, y, 1.0);
  m.finalize();

  IpmOptions o;
  o.tol = 1e-8;
  NlpSolution s = solve_nlp(m, {1.0, 3.0}, o);
  REQUIRE(s.status == SolveStatus::Optimal);
  CHECK(s.stationarity_error <= o.tol);
  CHECK(s.feasibility_error <= o.tol);
  CHECK(s.complementarity_error <= o.tol);
  REQUIRE_FALSE(s.log.empty());
  CHECK(s.log.front().mu > 0.0);
  CHECK(s.log.front().mu <= 0.1);
  CHECK(s.log.back().feasibility <= 1e-6);
  CHECK(s.iterations == static_cast<int>(s.log.size()));
  for (const IterRecord& rec : s.log) {
    CHECK(rec.alpha_primal > 0.0);
    CHECK(rec.alpha_primal <= 1.0);
  }
  CHECK(s.solve_seconds >= 0.0);

  SECTION("same inputs, same trajectory") {
    NlpSolution s2 = solve_nlp(m, {1.0, 3.0}, o);
    REQUIRE(s2.log.size() == s.log.size());
    CHECK(s2.objective == s.objective);
    for (std::size_t i = 0; i < s.log.size(); ++i) {
      CHECK(s2.log[i].mu == s.log[i].mu);
      CHECK(s2.log[i].alpha_primal == s.log[i].alpha_primal);
    }
  }
}

TEST_CASE("unfinalized model is rejected", "[ipm]") {
  NlpModel m;
  m.add_variable("x", 0, 1);
  CHECK_THROWS_AS(solve_nlp(m, {0.5}), std::logic_error);
}
