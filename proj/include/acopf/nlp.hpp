#pragma once

// Structured nonlinear program with closed-form derivatives.
//
// Every constraint row is a sum of a constant, linear terms, quadratic terms
// coef*x_i*x_j, and trigonometric terms coef*x_u*x_v*T(x_p - x_q + phase)
// with T in {cos, sin}. The objective is separable quadratic. First and
// second derivatives are exact; sparsity patterns are fixed at finalize()
// so repeated evaluations write into preallocated arrays.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace acopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Structural class of a constraint row, used for reporting and for counting
/// nonlinear constraints. The evaluator ignores it; builders set it to match
/// the terms they emit.
enum class Kernel { Linear, Quadratic, SumOfSquares, Bilinear, TrigBilinear };

inline const char* kernel_name(Kernel k) {
  switch (k) {
    case Kernel::Linear: return "linear";
    case Kernel::Quadratic: return "quadratic";
    case Kernel::SumOfSquares: return "sum-of-squares";
    case Kernel::Bilinear: return "bilinear";
    case Kernel::TrigBilinear: return "trig-bilinear";
  }
  return "?";
}

enum class TrigFn { Cos, Sin };

struct LinTerm {
  int var;
  double coef;
};

struct QuadTerm { // coef * x_i * x_j (i == j allowed)
  int i, j;
  double coef;
};

struct TrigTerm { // coef * x_u * x_v * T(x_p - x_q + phase)
  int u, v, p, q;
  double coef, phase;
  TrigFn fn;
};

struct Row {
  std::string name;
  double lo = 0.0, hi = 0.0;
  Kernel kernel = Kernel::Linear;
  double constant = 0.0;
  std::vector<LinTerm> lin;
  std::vector<QuadTerm> quad;
  std::vector<TrigTerm> trig;
  // If >= 0, the row contributes exactly this much to the nonlinear
  // constraint tally instead of the side-counting rule.
  int tally_override = -1;

  bool is_equality() const { return lo == hi; }
};

struct DerivativeCheck {
  double grad_error = 0.0; // max scaled |analytic - central difference|
  double jac_error = 0.0;
  double hess_error = 0.0;
  bool ok(double tol) const {
    return grad_error <= tol && jac_error <= tol && hess_error <= tol;
  }
};

class NlpModel {
 public:
  // ---- construction -------------------------------------------------------

  int add_variable(std::string name, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("variable '" + name + "': lo > hi");
    var_name_.push_back(std::move(name));
    lo_.push_back(lo);
    hi_.push_back(hi);
    obj_c2_.push_back(0.0);
    obj_c1_.push_back(0.0);
    finalized_ = false;
    return static_cast<int>(lo_.size()) - 1;
  }

  /// Replaces the bounds of one variable. Bounds are not part of the sparsity
  /// patterns, so a finalized model stays finalized.
  void set_variable_bounds(int var, double lo, double hi) {
    check_var(var);
    if (!(lo <= hi))
      throw std::invalid_argument("variable '" + var_name_[static_cast<std::size_t>(var)] +
                                  "': lo > hi");
    lo_[static_cast<std::size_t>(var)] = lo;
    hi_[static_cast<std::size_t>(var)] = hi;
  }

  /// Sets the objective contribution c2*x^2 + c1*x of one variable.
  void set_objective(int var, double c2, double c1) {
    obj_c2_.at(static_cast<std::size_t>(var)) = c2;
    obj_c1_.at(static_cast<std::size_t>(var)) = c1;
    finalized_ = false;
  }

  void add_objective_constant(double c) { obj_c0_ += c; }

  int add_row(std::string name, double lo, double hi, Kernel kernel) {
    if (!(lo <= hi)) throw std::invalid_argument("row '" + name + "': lo > hi");
    if (lo == -kInf && hi == kInf)
      throw std::invalid_argument("row '" + name + "': unbounded on both sides");
    Row r;
    r.name = std::move(name);
    r.lo = lo;
    r.hi = hi;
    r.kernel = kernel;
    rows_.push_back(std::move(r));
    finalized_ = false;
    return static_cast<int>(rows_.size()) - 1;
  }

  void add_lin(int row, int var, double coef) {
    check_var(var);
    rows_.at(static_cast<std::size_t>(row)).lin.push_back(LinTerm{var, coef});
    finalized_ = false;
  }

  void add_quad(int row, int i, int j, double coef) {
    check_var(i);
    check_var(j);
    rows_.at(static_cast<std::size_t>(row)).quad.push_back(QuadTerm{i, j, coef});
    finalized_ = false;
  }

  void add_trig(int row, int u, int v, int p, int q, double coef, double phase, TrigFn fn) {
    check_var(u);
    check_var(v);
    check_var(p);
    check_var(q);
    if (p == q) { // angle difference is a constant: fold into a quadratic term
      double t = (fn == TrigFn::Cos) ? std::cos(phase) : std::sin(phase);
      add_quad(row, u, v, coef * t);
      return;
    }
    rows_.at(static_cast<std::size_t>(row)).trig.push_back(TrigTerm{u, v, p, q, coef, phase, fn});
    finalized_ = false;
  }

  void set_row_constant(int row, double c) {
    rows_.at(static_cast<std::size_t>(row)).constant = c;
    finalized_ = false;
  }

  void set_tally_override(int row, int count) {
    rows_.at(static_cast<std::size_t>(row)).tally_override = count;
  }

  // ---- introspection ------------------------------------------------------

  int num_vars() const { return static_cast<int>(lo_.size()); }
  int num_rows() const { return static_cast<int>(rows_.size()); }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& var_name(int i) const { return var_name_.at(static_cast<std::size_t>(i)); }
  double var_lo(int i) const { return lo_.at(static_cast<std::size_t>(i)); }
  double var_hi(int i) const { return hi_.at(static_cast<std::size_t>(i)); }
  const std::vector<double>& var_lo() const { return lo_; }
  const std::vector<double>& var_hi() const { return hi_; }
  double objective_c2(int i) const { return obj_c2_.at(static_cast<std::size_t>(i)); }
  double objective_c1(int i) const { return obj_c1_.at(static_cast<std::size_t>(i)); }
  double objective_constant() const { return obj_c0_; }

  int num_equalities() const {
    int n = 0;
    for (const Row& r : rows_) n += r.is_equality() ? 1 : 0;
    return n;
  }

  int num_fixed_vars() const {
    int n = 0;
    for (std::size_t i = 0; i < lo_.size(); ++i) n += (lo_[i] == hi_[i]) ? 1 : 0;
    return n;
  }

  /// Nonlinear constraint count: non-linear-kernel rows count once per finite
  /// side if they are inequalities and once if they are equalities, unless a
  /// row carries an explicit tally override.
  long long nonlinear_tally() const {
    long long n = 0;
    for (const Row& r : rows_) {
      if (r.tally_override >= 0) {
        n += r.tally_override;
      } else if (r.kernel != Kernel::Linear) {
        if (r.is_equality())
          n += 1;
        else
          n += (r.lo > -kInf ? 1 : 0) + (r.hi < kInf ? 1 : 0);
      }
    }
    return n;
  }

  /// Free variables minus equality rows. Non-positive means the model is
  /// over-determined (degenerate).
  long long degrees_of_freedom() const {
    return static_cast<long long>(num_vars() - num_fixed_vars()) -
           static_cast<long long>(num_equalities());
  }

  // ---- evaluation ---------------------------------------------------------

  void finalize() {
    build_jacobian_pattern();
    build_hessian_pattern();
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }

  double eval_objective(const std::vector<double>& x) const {
    double f = obj_c0_;
    for (std::size_t i = 0; i < lo_.size(); ++i)
      f += (obj_c2_[i] * x[i] + obj_c1_[i]) * x[i];
    return f;
  }

  void eval_objective_gradient(const std::vector<double>& x, std::vector<double>& g) const {
    g.assign(lo_.size(), 0.0);
    for (std::size_t i = 0; i < lo_.size(); ++i) g[i] = 2.0 * obj_c2_[i] * x[i] + obj_c1_[i];
  }

  /// Row values g_r(x); feasibility means lo_r <= g_r(x) <= hi_r.
  void eval_rows(const std::vector<double>& x, std::vector<double>& c) const {
    c.assign(rows_.size(), 0.0);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const Row& row = rows_[r];
      double v = row.constant;
      for (const LinTerm& t : row.lin) v += t.coef * x[static_cast<std::size_t>(t.var)];
      for (const QuadTerm& t : row.quad)
        v += t.coef * x[static_cast<std::size_t>(t.i)] * x[static_cast<std::size_t>(t.j)];
      for (const TrigTerm& t : row.trig) {
        double a = x[static_cast<std::size_t>(t.p)] - x[static_cast<std::size_t>(t.q)] + t.phase;
        double T = (t.fn == TrigFn::Cos) ? std::cos(a) : std::sin(a);
        v += t.coef * x[static_cast<std::size_t>(t.u)] * x[static_cast<std::size_t>(t.v)] * T;
      }
      c[r] = v;
    }
  }

  // Fixed Jacobian sparsity (CSR over rows).
  const std::vector<int>& jac_row_ptr() const { return jac_ptr_; }
  const std::vector<int>& jac_cols() const { return jac_col_; }

  void eval_jacobian(const std::vector<double>& x, std::vector<double>& vals) const {
    require_finalized();
    vals.assign(jac_col_.size(), 0.0);
    std::size_t lslot = 0, qslot = 0, tslot = 0;
    for (const Row& row : rows_) {
      for (const LinTerm& t : row.lin) vals[lin_slot_[lslot++]] += t.coef;
      for (const QuadTerm& t : row.quad) {
        vals[quad_slot_[qslot]] += t.coef * x[static_cast<std::size_t>(t.j)];
        vals[quad_slot_[qslot + 1]] += t.coef * x[static_cast<std::size_t>(t.i)];
        qslot += 2;
      }
      for (const TrigTerm& t : row.trig) {
        double xu = x[static_cast<std::size_t>(t.u)], xv = x[static_cast<std::size_t>(t.v)];
        double a = x[static_cast<std::size_t>(t.p)] - x[static_cast<std::size_t>(t.q)] + t.phase;
        double T = (t.fn == TrigFn::Cos) ? std::cos(a) : std::sin(a);
        double Tp = (t.fn == TrigFn::Cos) ? -std::sin(a) : std::cos(a);
        vals[trig_slot_[tslot + 0]] += t.coef * xv * T;
        vals[trig_slot_[tslot + 1]] += t.coef * xu * T;
        vals[trig_slot_[tslot + 2]] += t.coef * xu * xv * Tp;
        vals[trig_slot_[tslot + 3]] -= t.coef * xu * xv * Tp;
        tslot += 4;
      }
    }
  }

  // Fixed Hessian-of-Lagrangian sparsity: upper triangle (row <= col), entries
  // sorted by (col, row) so columns are contiguous.
  const std::vector<int>& hess_rows() const { return hess_row_; }
  const std::vector<int>& hess_cols() const { return hess_col_; }

  /// Hessian of obj_scale * f(x) + sum_r lambda[r] * g_r(x). Pass lambda ==
  /// nullptr for the objective alone.
  void eval_hessian(const std::vector<double>& x, double obj_scale, const double* lambda,
                    std::vector<double>& vals) const {
    require_finalized();
    vals.assign(hess_row_.size(), 0.0);
    for (std::size_t i = 0; i < lo_.size(); ++i)
      if (obj_c2_[i] != 0.0) vals[obj_hess_slot_[i]] += obj_scale * 2.0 * obj_c2_[i];

    std::size_t qslot = 0, tslot = 0;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const Row& row = rows_[r];
      double lam = lambda ? lambda[r] : 0.0;
      for (const QuadTerm& t : row.quad) {
        // formal off-diagonal pair (i, j): doubles when it lands on the diagonal
        vals[quad_hess_slot_[qslot++]] += lam * t.coef * (t.i == t.j ? 2.0 : 1.0);
      }
      for (const TrigTerm& t : row.trig) {
        double xu = x[static_cast<std::size_t>(t.u)], xv = x[static_cast<std::size_t>(t.v)];
        double a = x[static_cast<std::size_t>(t.p)] - x[static_cast<std::size_t>(t.q)] + t.phase;
        double T = (t.fn == TrigFn::Cos) ? std::cos(a) : std::sin(a);
        double Tp = (t.fn == TrigFn::Cos) ? -std::sin(a) : std::cos(a);
        double c = lam * t.coef;
        // formal off-diagonal pairs...
        add_pair_value(vals, tslot + 0, t.u, t.v, c * T);
        add_pair_value(vals, tslot + 1, t.u, t.p, c * xv * Tp);
        add_pair_value(vals, tslot + 2, t.u, t.q, -c * xv * Tp);
        add_pair_value(vals, tslot + 3, t.v, t.p, c * xu * Tp);
        add_pair_value(vals, tslot + 4, t.v, t.q, -c * xu * Tp);
        add_pair_value(vals, tslot + 5, t.p, t.q, c * xu * xv * T);
        // ...and true diagonal curvature in the two angles
        vals[trig_hess_slot_[tslot + 6]] += -c * xu * xv * T;
        vals[trig_hess_slot_[tslot + 7]] += -c * xu * xv * T;
        tslot += 8;
      }
    }
  }

 private:
  void check_var(int v) const {
    if (v < 0 || v >= num_vars()) throw std::out_of_range("variable index " + std::to_string(v));
  }
  void require_finalized() const {
    if (!finalized_) throw std::logic_error("NlpModel: finalize() required before evaluation");
  }

  void add_pair_value(std::vector<double>& vals, std::size_t slot, int a, int b, double v) const {
    vals[trig_hess_slot_[slot]] += (a == b) ? 2.0 * v : v;
  }

  void build_jacobian_pattern() {
    jac_ptr_.assign(rows_.size() + 1, 0);
    jac_col_.clear();
    lin_slot_.clear();
    quad_slot_.clear();
    trig_slot_.clear();

    std::vector<int> scratch;
    std::vector<std::size_t> row_base(rows_.size());
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const Row& row = rows_[r];
      scratch.clear();
      for (const LinTerm& t : row.lin) scratch.push_back(t.var);
      for (const QuadTerm& t : row.quad) {
        scratch.push_back(t.i);
        scratch.push_back(t.j);
      }
      for (const TrigTerm& t : row.trig) {
        scratch.push_back(t.u);
        scratch.push_back(t.v);
        scratch.push_back(t.p);
        scratch.push_back(t.q);
      }
      std::sort(scratch.begin(), scratch.end());
      scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
      row_base[r] = jac_col_.size();
      jac_col_.insert(jac_col_.end(), scratch.begin(), scratch.end());
      jac_ptr_[r + 1] = static_cast<int>(jac_col_.size());
    }

    auto slot_of = [&](std::size_t r, int var) -> std::size_t {
      auto begin = jac_col_.begin() + static_cast<std::ptrdiff_t>(row_base[r]);
      auto end = jac_col_.begin() + jac_ptr_[r + 1];
      return static_cast<std::size_t>(std::lower_bound(begin, end, var) - jac_col_.begin());
    };
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const Row& row = rows_[r];
      for (const LinTerm& t : row.lin) lin_slot_.push_back(slot_of(r, t.var));
      for (const QuadTerm& t : row.quad) {
        quad_slot_.push_back(slot_of(r, t.i));
        quad_slot_.push_back(slot_of(r, t.j));
      }
      for (const TrigTerm& t : row.trig) {
        trig_slot_.push_back(slot_of(r, t.u));
        trig_slot_.push_back(slot_of(r, t.v));
        trig_slot_.push_back(slot_of(r, t.p));
        trig_slot_.push_back(slot_of(r, t.q));
      }
    }
  }

  void build_hessian_pattern() {
    // Collect unique upper-triangle coordinates, keyed (col, row).
    std::map<std::pair<int, int>, std::size_t> slots;
    auto key = [](int a, int b) {
      return std::pair<int, int>(std::max(a, b), std::min(a, b)); // (col, row)
    };
    auto touch = [&](int a, int b) { slots.emplace(key(a, b), 0); };

    for (int i = 0; i < num_vars(); ++i)
      if (obj_c2_[static_cast<std::size_t>(i)] != 0.0) touch(i, i);
    for (const Row& row : rows_) {
      for (const QuadTerm& t : row.quad) touch(t.i, t.j);
      for (const TrigTerm& t : row.trig) {
        touch(t.u, t.v);
        touch(t.u, t.p);
        touch(t.u, t.q);
        touch(t.v, t.p);
        touch(t.v, t.q);
        touch(t.p, t.q);
        touch(t.p, t.p);
        touch(t.q, t.q);
      }
    }
    hess_row_.clear();
    hess_col_.clear();
    std::size_t idx = 0;
    for (auto& [coord, slot] : slots) {
      slot = idx++;
      hess_col_.push_back(coord.first);
      hess_row_.push_back(coord.second);
    }
    auto slot_of = [&](int a, int b) { return slots.at(key(a, b)); };

    obj_hess_slot_.assign(lo_.size(), 0);
    for (int i = 0; i < num_vars(); ++i)
      if (obj_c2_[static_cast<std::size_t>(i)] != 0.0)
        obj_hess_slot_[static_cast<std::size_t>(i)] = slot_of(i, i);

    quad_hess_slot_.clear();
    trig_hess_slot_.clear();
    for (const Row& row : rows_) {
      for (const QuadTerm& t : row.quad) quad_hess_slot_.push_back(slot_of(t.i, t.j));
      for (const TrigTerm& t : row.trig) {
        trig_hess_slot_.push_back(slot_of(t.u, t.v));
        trig_hess_slot_.push_back(slot_of(t.u, t.p));
        trig_hess_slot_.push_back(slot_of(t.u, t.q));
        trig_hess_slot_.push_back(slot_of(t.v, t.p));
        trig_hess_slot_.push_back(slot_of(t.v, t.q));
        trig_hess_slot_.push_back(slot_of(t.p, t.q));
        trig_hess_slot_.push_back(slot_of(t.p, t.p));
        trig_hess_slot_.push_back(slot_of(t.q, t.q));
      }
    }
  }

  std::vector<std::string> var_name_;
  std::vector<double> lo_, hi_;
  std::vector<double> obj_c2_, obj_c1_;
  double obj_c0_ = 0.0;
  std::vector<Row> rows_;

  bool finalized_ = false;
  std::vector<int> jac_ptr_, jac_col_;
  std::vector<std::size_t> lin_slot_, quad_slot_, trig_slot_;
  std::vector<int> hess_row_, hess_col_;
  std::vector<std::size_t> obj_hess_slot_, quad_hess_slot_, trig_hess_slot_;
};

/// Compares analytic derivatives against central differences at x. Intended
/// for tests and the model checker; cost is O(n) model evaluations.
inline DerivativeCheck check_derivatives(const NlpModel& model, const std::vector<double>& x,
                                         double obj_scale = 1.0,
                                         const std::vector<double>* lambda = nullptr,
                                         double step = 1e-6) {
  DerivativeCheck out;
  const int n = model.num_vars();
  const int m = model.num_rows();
  std::vector<double> xp = x, lam;
  if (lambda)
    lam = *lambda;
  else
    lam.assign(static_cast<std::size_t>(m), 0.7); // arbitrary nonzero multipliers

  auto scaled = [](double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a)); };

  // Objective gradient.
  std::vector<double> g;
  model.eval_objective_gradient(x, g);
  for (int i = 0; i < n; ++i) {
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + step;
    double fp = model.eval_objective(xp);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - step;
    double fm = model.eval_objective(xp);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    out.grad_error = std::max(out.grad_error,
                              scaled(g[static_cast<std::size_t>(i)], (fp - fm) / (2.0 * step)));
  }

  // Jacobian, column by column.
  std::vector<double> jv, cp, cm;
  model.eval_jacobian(x, jv);
  const std::vector<int>& ptr = model.jac_row_ptr();
  const std::vector<int>& col = model.jac_cols();
  std::vector<std::vector<double>> dense(static_cast<std::size_t>(m),
                                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int r = 0; r < m; ++r)
    for (int k = ptr[static_cast<std::size_t>(r)]; k < ptr[static_cast<std::size_t>(r) + 1]; ++k)
      dense[static_cast<std::size_t>(r)][static_cast<std::size_t>(col[static_cast<std::size_t>(k)])] =
          jv[static_cast<std::size_t>(k)];
  for (int i = 0; i < n; ++i) {
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + step;
    model.eval_rows(xp, cp);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - step;
    model.eval_rows(xp, cm);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    for (int r = 0; r < m; ++r)
      out.jac_error = std::max(
          out.jac_error, scaled(dense[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)],
                                (cp[static_cast<std::size_t>(r)] - cm[static_cast<std::size_t>(r)]) /
                                    (2.0 * step)));
  }

  // Hessian of the Lagrangian against differenced Lagrangian gradients.
  auto lagr_grad = [&](const std::vector<double>& xx, std::vector<double>& gg) {
    model.eval_objective_gradient(xx, gg);
    for (std::size_t i = 0; i < gg.size(); ++i) gg[i] *= obj_scale;
    std::vector<double> jvals;
    model.eval_jacobian(xx, jvals);
    for (int r = 0; r < m; ++r)
      for (int k = ptr[static_cast<std::size_t>(r)]; k < ptr[static_cast<std::size_t>(r) + 1]; ++k)
        gg[static_cast<std::size_t>(col[static_cast<std::size_t>(k)])] +=
            lam[static_cast<std::size_t>(r)] * jvals[static_cast<std::size_t>(k)];
  };
  std::vector<double> hv;
  model.eval_hessian(x, obj_scale, lam.data(), hv);
  std::vector<std::vector<double>> hdense(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(n), 0.0));
  const std::vector<int>& hr = model.hess_rows();
  const std::vector<int>& hc = model.hess_cols();
  for (std::size_t k = 0; k < hv.size(); ++k) {
    hdense[static_cast<std::size_t>(hr[k])][static_cast<std::size_t>(hc[k])] = hv[k];
    hdense[static_cast<std::size_t>(hc[k])][static_cast<std::size_t>(hr[k])] = hv[k];
  }
  std::vector<double> gp, gm;
  for (int i = 0; i < n; ++i) {
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] + step;
    lagr_grad(xp, gp);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] - step;
    lagr_grad(xp, gm);
    xp[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j)
      out.hess_error = std::max(
          out.hess_error, scaled(hdense[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)],
                                 (gp[static_cast<std::size_t>(j)] - gm[static_cast<std::size_t>(j)]) /
                                     (2.0 * step)));
  }
  return out;
}

} // namespace acopf
