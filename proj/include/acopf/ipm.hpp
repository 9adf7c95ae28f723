#pragma once

// Primal-dual interior-point solver for NlpModel instances.
//
// Inequality rows receive slack variables so the internal problem has only
// equality constraints plus simple bounds. Each iteration solves the
// regularized symmetric KKT system
//     [ H + Sigma + dp*I   J^T     ] [dX    ]   [ -grad phi_mu ]
//     [ J                  -dd*I   ] [dlam  ] = [ -c           ]
// with a sparse LDL^T factorization; dp is escalated until the inertia is
// (N, m, 0). A fraction-to-boundary rule and a backtracking line search on
// an l1 exact-penalty merit function drive globalization. The barrier
// parameter decreases monotonically once the scaled KKT error is below
// kappa_eps * mu. Termination tests use unscaled errors.

#include <acopf/ldlt.hpp>
#include <acopf/nlp.hpp>

#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace acopf {

enum class SolveStatus { Optimal, MaxIter, TimeLimit, Infeasible, Degenerate, LineSearchFailure };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIter: return "max-iter";
    case SolveStatus::TimeLimit: return "time-limit";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Degenerate: return "degenerate";
    case SolveStatus::LineSearchFailure: return "line-search-failure";
  }
  return "?";
}

inline SolveStatus status_from_name(const std::string& name) {
  for (SolveStatus s : {SolveStatus::Optimal, SolveStatus::MaxIter, SolveStatus::TimeLimit,
                        SolveStatus::Infeasible, SolveStatus::Degenerate,
                        SolveStatus::LineSearchFailure})
    if (name == status_name(s)) return s;
  throw std::invalid_argument("unknown status '" + name + "'");
}

struct IpmOptions {
  double tol = 1e-6;
  int max_iter = 3000;
  double time_limit_s = 0.0; // <= 0 means no limit
  double mu0 = 0.1;
  bool force_degenerate = false; // attempt the solve even when DOF <= 0
};

struct IterRecord {
  int iter = 0;
  double mu = 0.0, objective = 0.0;
  double stationarity = 0.0, feasibility = 0.0, complementarity = 0.0;
  double alpha_primal = 0.0, alpha_dual = 0.0, delta_p = 0.0;
};

struct NlpSolution {
  SolveStatus status = SolveStatus::MaxIter;
  std::vector<double> x;               // model variables
  std::vector<double> lambda;          // one multiplier per model row
  std::vector<double> z_lower, w_upper; // bound multipliers per model variable
  double objective = 0.0;
  double stationarity_error = 0.0, feasibility_error = 0.0, complementarity_error = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  std::vector<IterRecord> log;
};

namespace detail {

class IpmSolver {
 public:
  IpmSolver(const NlpModel& model, const IpmOptions& opts) : model_(model), opts_(opts) {
    if (!model.finalized()) throw std::logic_error("solve_nlp: model must be finalized");
    n_ = model.num_vars();
    m_ = model.num_rows();

    slack_of_.assign(static_cast<std::size_t>(m_), -1);
    for (int r = 0; r < m_; ++r)
      if (!model.rows()[static_cast<std::size_t>(r)].is_equality())
        slack_of_[static_cast<std::size_t>(r)] = n_ + n_slack_++;
    N_ = n_ + n_slack_;
    T_ = N_ + m_;

    lb_.assign(static_cast<std::size_t>(N_), -kInf);
    ub_.assign(static_cast<std::size_t>(N_), kInf);
    for (int i = 0; i < n_; ++i) {
      lb_[static_cast<std::size_t>(i)] = model.var_lo(i);
      ub_[static_cast<std::size_t>(i)] = model.var_hi(i);
    }
    for (int r = 0; r < m_; ++r) {
      int s = slack_of_[static_cast<std::size_t>(r)];
      if (s >= 0) {
        lb_[static_cast<std::size_t>(s)] = model.rows()[static_cast<std::size_t>(r)].lo;
        ub_[static_cast<std::size_t>(s)] = model.rows()[static_cast<std::size_t>(r)].hi;
      }
    }
    fixed_.assign(static_cast<std::size_t>(N_), false);
    has_lo_.assign(static_cast<std::size_t>(N_), false);
    has_hi_.assign(static_cast<std::size_t>(N_), false);
    for (int i = 0; i < N_; ++i) {
      fixed_[static_cast<std::size_t>(i)] = lb_[static_cast<std::size_t>(i)] == ub_[static_cast<std::size_t>(i)];
      has_lo_[static_cast<std::size_t>(i)] = !fixed_[static_cast<std::size_t>(i)] && lb_[static_cast<std::size_t>(i)] > -kInf;
      has_hi_[static_cast<std::size_t>(i)] = !fixed_[static_cast<std::size_t>(i)] && ub_[static_cast<std::size_t>(i)] < kInf;
    }
    build_kkt_pattern();
  }

  NlpSolution run(const std::vector<double>& x0) {
    auto t_start = std::chrono::steady_clock::now();
    NlpSolution out;
    if (!opts_.force_degenerate && model_.degrees_of_freedom() <= 0) {
      out.status = SolveStatus::Degenerate;
      out.x = x0;
      out.x.resize(static_cast<std::size_t>(n_));
      out.objective = model_.eval_objective(out.x);
      return out;
    }

    initialize(x0);
    double mu = opts_.mu0;
    // The complementarity of the original problem is the internal one divided
    // by the objective scale, so the barrier floor shrinks with it.
    const double mu_min = opts_.tol / 10.0 * obj_scale_;
    const double kappa_eps = 10.0;
    const double tau = 0.995;
    // Per-row l1 penalty weights: exactness needs nu_r >= |lambda_r| row by
    // row, and a single global weight would let rows with large multipliers
    // choke progress on rows with small ones through their curvature.
    nu_.assign(static_cast<std::size_t>(m_), 1.0);
    const double nu_cap = 1e10;

    SolveStatus status = SolveStatus::MaxIter;
    int stall = 0;
    int iter = 0;
    for (; iter <= opts_.max_iter; ++iter) {
      evaluate();
      Errors e0 = raw_errors();
      if (std::max({e0.stat, e0.feas, e0.comp}) <= opts_.tol) {
        status = SolveStatus::Optimal;
        break;
      }
      if (iter == opts_.max_iter) {
        status = SolveStatus::MaxIter;
        break;
      }
      if (opts_.time_limit_s > 0.0) {
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        if (elapsed > opts_.time_limit_s) {
          status = SolveStatus::TimeLimit;
          break;
        }
      }

      // Monotone barrier schedule.
      while (mu > mu_min) {
        Errors em = errors(mu);
        if (std::max({em.stat, em.feas, em.comp}) > kappa_eps * mu) break;
        mu = std::max(mu_min, std::min(0.2 * mu, std::pow(mu, 1.5)));
      }

      double delta_p = 0.0;
      if (!compute_direction(mu, delta_p)) {
        status = SolveStatus::LineSearchFailure; // could not shape the KKT system
        break;
      }

      // Fraction-to-boundary step caps.
      double ap_max = 1.0, ad = 1.0;
      for (int i = 0; i < N_; ++i) {
        double d = dx_[static_cast<std::size_t>(i)];
        if (has_lo_[static_cast<std::size_t>(i)] && d < 0.0) {
          double a = -tau * (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]) / d;
          if (a < ap_max) ap_max = a;
        }
        if (has_hi_[static_cast<std::size_t>(i)] && d > 0.0) {
          double a = tau * (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]) / d;
          if (a < ap_max) ap_max = a;
        }
        if (has_lo_[static_cast<std::size_t>(i)] && dz_[static_cast<std::size_t>(i)] < 0.0)
          ad = std::min(ad, -tau * z_[static_cast<std::size_t>(i)] / dz_[static_cast<std::size_t>(i)]);
        if (has_hi_[static_cast<std::size_t>(i)] && dw_[static_cast<std::size_t>(i)] < 0.0)
          ad = std::min(ad, -tau * w_[static_cast<std::size_t>(i)] / dw_[static_cast<std::size_t>(i)]);
      }
      // Penalty update; a runaway penalty with stubborn infeasibility is the
      // infeasibility heuristic.
      double nu_max = 0.0;
      for (int r = 0; r < m_; ++r) {
        double lam_next = std::abs(lam_[static_cast<std::size_t>(r)] + dlam_[static_cast<std::size_t>(r)]);
        nu_[static_cast<std::size_t>(r)] = std::max(nu_[static_cast<std::size_t>(r)], 1.1 * lam_next + 1e-4);
        nu_max = std::max(nu_max, nu_[static_cast<std::size_t>(r)]);
      }
      double feas_now = raw_errors().feas;
      if (nu_max >= nu_cap && feas_now > 10.0 * opts_.tol) {
        status = SolveStatus::Infeasible;
        break;
      }

      // Backtracking line search on the l1 exact-penalty merit function. The
      // Armijo requirement uses the computed slope when it is a descent
      // direction; otherwise any step that does not raise the merit beyond
      // rounding noise is acceptable.
      double phi0 = merit(x_, mu);
      double ddir = merit_slope(mu);
      double noise = 1e-15 * (1.0 + std::abs(phi0));
      double alpha = ap_max;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt) {
        trial_ = x_;
        for (int i = 0; i < N_; ++i) trial_[static_cast<std::size_t>(i)] += alpha * dx_[static_cast<std::size_t>(i)];
        if (merit(trial_, mu) <= phi0 + 1e-4 * alpha * std::min(ddir, 0.0) + noise) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // A dead-ended search at a point where no direction inside the box can
        // reduce the constraint violation is reported as (local) infeasibility.
        status = (e0.feas > 10.0 * opts_.tol && locally_infeasible())
                     ? SolveStatus::Infeasible
                     : SolveStatus::LineSearchFailure;
        break;
      }

      x_ = trial_;
      for (int r = 0; r < m_; ++r) lam_[static_cast<std::size_t>(r)] += alpha * dlam_[static_cast<std::size_t>(r)];
      for (int i = 0; i < N_; ++i) {
        if (has_lo_[static_cast<std::size_t>(i)]) z_[static_cast<std::size_t>(i)] += ad * dz_[static_cast<std::size_t>(i)];
        if (has_hi_[static_cast<std::size_t>(i)]) w_[static_cast<std::size_t>(i)] += ad * dw_[static_cast<std::size_t>(i)];
      }
      // Keep bound multipliers commensurate with the barrier parameter.
      const double ks = 1e10;
      for (int i = 0; i < N_; ++i) {
        if (has_lo_[static_cast<std::size_t>(i)]) {
          double sl = x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)];
          z_[static_cast<std::size_t>(i)] = std::min(std::max(z_[static_cast<std::size_t>(i)], mu / (ks * sl)), ks * mu / sl);
        }
        if (has_hi_[static_cast<std::size_t>(i)]) {
          double sl = ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)];
          w_[static_cast<std::size_t>(i)] = std::min(std::max(w_[static_cast<std::size_t>(i)], mu / (ks * sl)), ks * mu / sl);
        }
      }

      IterRecord rec;
      rec.iter = iter;
      rec.mu = mu;
      rec.objective = obj_;
      rec.stationarity = e0.stat;
      rec.feasibility = e0.feas;
      rec.complementarity = e0.comp;
      rec.alpha_primal = alpha;
      rec.alpha_dual = ad;
      rec.delta_p = delta_p;
      out.log.push_back(rec);

      // Stall detection: accepted steps that move nothing for many iterations
      // in a row mean the search has pinned itself; classify like a dead end.
      double x_inf = 0.0, step_inf = 0.0;
      for (int i = 0; i < N_; ++i) {
        x_inf = std::max(x_inf, std::abs(x_[static_cast<std::size_t>(i)]));
        step_inf = std::max(step_inf, std::abs(alpha * dx_[static_cast<std::size_t>(i)]));
      }
      stall = step_inf <= 1e-14 * (1.0 + x_inf) ? stall + 1 : 0;
      if (stall >= 10) {
        ++iter;
        status = (e0.feas > 10.0 * opts_.tol && locally_infeasible())
                     ? SolveStatus::Infeasible
                     : SolveStatus::LineSearchFailure;
        break;
      }
    }

    evaluate();
    Errors ef = raw_errors();
    out.status = status;
    out.x.assign(x_.begin(), x_.begin() + n_);
    // Multipliers of the original problem.
    out.lambda.assign(static_cast<std::size_t>(m_), 0.0);
    for (int r = 0; r < m_; ++r)
      out.lambda[static_cast<std::size_t>(r)] = lam_[static_cast<std::size_t>(r)] *
                                                row_scale_[static_cast<std::size_t>(r)] / obj_scale_;
    out.z_lower.assign(static_cast<std::size_t>(n_), 0.0);
    out.w_upper.assign(static_cast<std::size_t>(n_), 0.0);
    for (int i = 0; i < n_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)]) out.z_lower[static_cast<std::size_t>(i)] = z_[static_cast<std::size_t>(i)] / obj_scale_;
      if (has_hi_[static_cast<std::size_t>(i)]) out.w_upper[static_cast<std::size_t>(i)] = w_[static_cast<std::size_t>(i)] / obj_scale_;
    }
    out.objective = obj_;
    out.stationarity_error = ef.stat;
    out.feasibility_error = ef.feas;
    out.complementarity_error = ef.comp;
    out.iterations = iter;
    out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
  }

 private:
  struct Errors {
    double stat = 0.0, feas = 0.0, comp = 0.0;
  };

  void build_kkt_pattern() {
    const std::vector<int>& hr = model_.hess_rows();
    const std::vector<int>& hc = model_.hess_cols();
    const std::vector<int>& jptr = model_.jac_row_ptr();
    const std::vector<int>& jcol = model_.jac_cols();

    std::vector<std::vector<int>> cols(static_cast<std::size_t>(T_));
    for (std::size_t t = 0; t < hr.size(); ++t)
      cols[static_cast<std::size_t>(hc[t])].push_back(hr[t]);
    for (int j = 0; j < N_; ++j) cols[static_cast<std::size_t>(j)].push_back(j);
    for (int r = 0; r < m_; ++r) {
      std::vector<int>& col = cols[static_cast<std::size_t>(N_ + r)];
      for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
        col.push_back(jcol[static_cast<std::size_t>(k)]);
      if (slack_of_[static_cast<std::size_t>(r)] >= 0) col.push_back(slack_of_[static_cast<std::size_t>(r)]);
      col.push_back(N_ + r);
    }

    pattern_.n = T_;
    pattern_.col_ptr.assign(static_cast<std::size_t>(T_) + 1, 0);
    std::vector<std::size_t> base(static_cast<std::size_t>(T_));
    for (int c = 0; c < T_; ++c) {
      std::vector<int>& col = cols[static_cast<std::size_t>(c)];
      std::sort(col.begin(), col.end());
      col.erase(std::unique(col.begin(), col.end()), col.end());
      base[static_cast<std::size_t>(c)] = pattern_.rows.size();
      pattern_.rows.insert(pattern_.rows.end(), col.begin(), col.end());
      pattern_.col_ptr[static_cast<std::size_t>(c) + 1] = static_cast<int>(pattern_.rows.size());
    }
    auto slot = [&](int r, int c) -> std::size_t {
      auto b = pattern_.rows.begin() + static_cast<std::ptrdiff_t>(base[static_cast<std::size_t>(c)]);
      auto e = pattern_.rows.begin() + pattern_.col_ptr[static_cast<std::size_t>(c) + 1];
      return static_cast<std::size_t>(std::lower_bound(b, e, r) - pattern_.rows.begin());
    };

    hess_slot_.resize(hr.size());
    for (std::size_t t = 0; t < hr.size(); ++t) hess_slot_[t] = slot(hr[t], hc[t]);
    diag_slot_.resize(static_cast<std::size_t>(N_));
    for (int j = 0; j < N_; ++j) diag_slot_[static_cast<std::size_t>(j)] = slot(j, j);
    jac_slot_.resize(jcol.size());
    for (int r = 0; r < m_; ++r)
      for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
        jac_slot_[static_cast<std::size_t>(k)] = slot(jcol[static_cast<std::size_t>(k)], N_ + r);
    slack_slot_.assign(static_cast<std::size_t>(m_), 0);
    con_diag_slot_.resize(static_cast<std::size_t>(m_));
    for (int r = 0; r < m_; ++r) {
      if (slack_of_[static_cast<std::size_t>(r)] >= 0)
        slack_slot_[static_cast<std::size_t>(r)] = slot(slack_of_[static_cast<std::size_t>(r)], N_ + r);
      con_diag_slot_[static_cast<std::size_t>(r)] = slot(N_ + r, N_ + r);
    }

    // Entries coupling fixed variables get zeroed; their diagonals become 1.
    zero_slot_.clear();
    for (int c = 0; c < T_; ++c)
      for (int k = pattern_.col_ptr[static_cast<std::size_t>(c)]; k < pattern_.col_ptr[static_cast<std::size_t>(c) + 1]; ++k) {
        int r = pattern_.rows[static_cast<std::size_t>(k)];
        bool fr = r < N_ && fixed_[static_cast<std::size_t>(r)];
        bool fc = c < N_ && fixed_[static_cast<std::size_t>(c)];
        if (fr || fc) zero_slot_.push_back(static_cast<std::size_t>(k));
      }

    solver_ = std::make_unique<LdltSolver>(pattern_);
    kv_base_.assign(pattern_.rows.size(), 0.0);
    kv_.assign(pattern_.rows.size(), 0.0);
  }

  void initialize(const std::vector<double>& x0) {
    x_.assign(static_cast<std::size_t>(N_), 0.0);
    for (int i = 0; i < n_ && i < static_cast<int>(x0.size()); ++i) x_[static_cast<std::size_t>(i)] = x0[static_cast<std::size_t>(i)];

    // Gradient-based scaling at the start point: rows and the objective are
    // scaled down so their largest gradient entry is at most max_grad. This
    // keeps badly scaled rows (thermal limits on effectively unlimited
    // branches have gradients in the thousands) from dominating multipliers
    // and the merit function. Internally the scaled problem is solved;
    // termination, reported errors, and reported multipliers are unscaled.
    std::vector<double> xm(x_.begin(), x_.begin() + n_);
    const double max_grad = 100.0;
    std::vector<double> g0;
    model_.eval_objective_gradient(xm, g0);
    double ginf = 0.0;
    for (double v : g0) ginf = std::max(ginf, std::abs(v));
    obj_scale_ = ginf > max_grad ? max_grad / ginf : 1.0;
    std::vector<double> jv0;
    model_.eval_jacobian(xm, jv0);
    const std::vector<int>& jptr = model_.jac_row_ptr();
    row_scale_.assign(static_cast<std::size_t>(m_), 1.0);
    for (int r = 0; r < m_; ++r) {
      double jinf = 0.0;
      for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
        jinf = std::max(jinf, std::abs(jv0[static_cast<std::size_t>(k)]));
      if (jinf > max_grad) row_scale_[static_cast<std::size_t>(r)] = max_grad / jinf;
    }

    // Slack bounds live in the scaled row space.
    for (int r = 0; r < m_; ++r) {
      int s = slack_of_[static_cast<std::size_t>(r)];
      if (s < 0) continue;
      double sr = row_scale_[static_cast<std::size_t>(r)];
      lb_[static_cast<std::size_t>(s)] = sr * model_.rows()[static_cast<std::size_t>(r)].lo;
      ub_[static_cast<std::size_t>(s)] = sr * model_.rows()[static_cast<std::size_t>(r)].hi;
    }

    // Slacks start at the constraint values so c = g(x) - s vanishes where it can.
    std::vector<double> g;
    model_.eval_rows(xm, g);
    for (int r = 0; r < m_; ++r) {
      int s = slack_of_[static_cast<std::size_t>(r)];
      if (s >= 0)
        x_[static_cast<std::size_t>(s)] =
            row_scale_[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(r)];
    }

    const double k1 = 1e-2, k2 = 1e-2;
    for (int i = 0; i < N_; ++i) {
      double lo = lb_[static_cast<std::size_t>(i)], hi = ub_[static_cast<std::size_t>(i)];
      if (fixed_[static_cast<std::size_t>(i)]) {
        x_[static_cast<std::size_t>(i)] = lo;
        continue;
      }
      double pl = (lo > -kInf && hi < kInf) ? std::min(k1 * std::max(1.0, std::abs(lo)), k2 * (hi - lo))
                                            : (lo > -kInf ? k1 * std::max(1.0, std::abs(lo)) : 0.0);
      double pu = (lo > -kInf && hi < kInf) ? std::min(k1 * std::max(1.0, std::abs(hi)), k2 * (hi - lo))
                                            : (hi < kInf ? k1 * std::max(1.0, std::abs(hi)) : 0.0);
      if (lo > -kInf) x_[static_cast<std::size_t>(i)] = std::max(x_[static_cast<std::size_t>(i)], lo + pl);
      if (hi < kInf) x_[static_cast<std::size_t>(i)] = std::min(x_[static_cast<std::size_t>(i)], hi - pu);
    }

    lam_.assign(static_cast<std::size_t>(m_), 0.0);
    z_.assign(static_cast<std::size_t>(N_), 0.0);
    w_.assign(static_cast<std::size_t>(N_), 0.0);
    for (int i = 0; i < N_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)])
        z_[static_cast<std::size_t>(i)] = opts_.mu0 / (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]);
      if (has_hi_[static_cast<std::size_t>(i)])
        w_[static_cast<std::size_t>(i)] = opts_.mu0 / (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]);
    }
  }

  // Model evaluations at the current iterate. grad_, jv_, and c_ hold the
  // scaled problem; obj_ and rows_ stay raw for reporting.
  void evaluate() {
    xm_.assign(x_.begin(), x_.begin() + n_);
    obj_ = model_.eval_objective(xm_);
    model_.eval_objective_gradient(xm_, grad_);
    for (double& v : grad_) v *= obj_scale_;
    model_.eval_rows(xm_, rows_);
    model_.eval_jacobian(xm_, jv_);
    {
      const std::vector<int>& jptr = model_.jac_row_ptr();
      for (int r = 0; r < m_; ++r) {
        double sr = row_scale_[static_cast<std::size_t>(r)];
        if (sr == 1.0) continue;
        for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
          jv_[static_cast<std::size_t>(k)] *= sr;
      }
    }
    c_.assign(static_cast<std::size_t>(m_), 0.0);
    for (int r = 0; r < m_; ++r) {
      int s = slack_of_[static_cast<std::size_t>(r)];
      double sr = row_scale_[static_cast<std::size_t>(r)];
      double target = s >= 0 ? x_[static_cast<std::size_t>(s)]
                             : sr * model_.rows()[static_cast<std::size_t>(r)].lo;
      c_[static_cast<std::size_t>(r)] = sr * rows_[static_cast<std::size_t>(r)] - target;
    }
    // J^T lambda over all internal variables.
    jtl_.assign(static_cast<std::size_t>(N_), 0.0);
    const std::vector<int>& jptr = model_.jac_row_ptr();
    const std::vector<int>& jcol = model_.jac_cols();
    for (int r = 0; r < m_; ++r) {
      for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
        jtl_[static_cast<std::size_t>(jcol[static_cast<std::size_t>(k)])] +=
            lam_[static_cast<std::size_t>(r)] * jv_[static_cast<std::size_t>(k)];
      int s = slack_of_[static_cast<std::size_t>(r)];
      if (s >= 0) jtl_[static_cast<std::size_t>(s)] -= lam_[static_cast<std::size_t>(r)];
    }
  }

  Errors errors(double mu) const {
    Errors e;
    for (int i = 0; i < N_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)]) continue;
      double gf = (i < n_) ? grad_[static_cast<std::size_t>(i)] : 0.0;
      double r = gf + jtl_[static_cast<std::size_t>(i)] - z_[static_cast<std::size_t>(i)] + w_[static_cast<std::size_t>(i)];
      e.stat = std::max(e.stat, std::abs(r));
      if (has_lo_[static_cast<std::size_t>(i)])
        e.comp = std::max(e.comp, std::abs(z_[static_cast<std::size_t>(i)] *
                                               (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]) -
                                           mu));
      if (has_hi_[static_cast<std::size_t>(i)])
        e.comp = std::max(e.comp, std::abs(w_[static_cast<std::size_t>(i)] *
                                               (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]) -
                                           mu));
    }
    for (int r = 0; r < m_; ++r) e.feas = std::max(e.feas, std::abs(c_[static_cast<std::size_t>(r)]));
    return e;
  }

  // Errors of the original (unscaled) problem; these decide termination. The
  // stationarity and complementarity vectors of the scaled problem are the
  // original ones times obj_scale, and feasibility is measured directly
  // against the raw row bounds.
  Errors raw_errors() const {
    Errors e = errors(0.0);
    e.stat /= obj_scale_;
    e.comp /= obj_scale_;
    e.feas = 0.0;
    for (int r = 0; r < m_; ++r) {
      const Row& row = model_.rows()[static_cast<std::size_t>(r)];
      double g = rows_[static_cast<std::size_t>(r)];
      e.feas = std::max({e.feas, row.lo - g, g - row.hi});
    }
    return e;
  }

  // First-order test for a local minimum of the l1 constraint violation over
  // the box: take the violation subgradient g = J^T sign(c) over clearly
  // violated rows and measure how much decrease a unit box-respecting move
  // along -g could still buy. Nothing to buy while violation persists means
  // the iterate is wedged against the bounds and the model is locally
  // infeasible from here.
  bool locally_infeasible() const {
    const std::vector<int>& jptr = model_.jac_row_ptr();
    const std::vector<int>& jcol = model_.jac_cols();
    double theta = 0.0;
    std::vector<double> g(static_cast<std::size_t>(N_), 0.0);
    for (int r = 0; r < m_; ++r) {
      double cr = c_[static_cast<std::size_t>(r)];
      if (std::abs(cr) <= 10.0 * opts_.tol) continue;
      theta = std::max(theta, std::abs(cr));
      double sgn = cr > 0.0 ? 1.0 : -1.0;
      for (int k = jptr[static_cast<std::size_t>(r)]; k < jptr[static_cast<std::size_t>(r) + 1]; ++k)
        g[static_cast<std::size_t>(jcol[static_cast<std::size_t>(k)])] += sgn * jv_[static_cast<std::size_t>(k)];
      int s = slack_of_[static_cast<std::size_t>(r)];
      if (s >= 0) g[static_cast<std::size_t>(s)] -= sgn;
    }
    if (theta == 0.0) return false;
    double potential = 0.0;
    for (int i = 0; i < N_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)] || g[static_cast<std::size_t>(i)] == 0.0) continue;
      // Descending theta moves x_i against the sign of g_i; room is how far
      // that move can go before a bound, capped at a unit step.
      double room = g[static_cast<std::size_t>(i)] > 0.0
                        ? (has_lo_[static_cast<std::size_t>(i)]
                               ? x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]
                               : 1.0)
                        : (has_hi_[static_cast<std::size_t>(i)]
                               ? ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]
                               : 1.0);
      potential = std::max(potential, std::abs(g[static_cast<std::size_t>(i)]) * std::min(room, 1.0));
    }
    return potential <= 1e-4 * theta;
  }

  bool compute_direction(double mu, double& delta_used) {
    // Base KKT values without the primal regularization.
    std::fill(kv_base_.begin(), kv_base_.end(), 0.0);
    lam_eff_.assign(static_cast<std::size_t>(m_), 0.0);
    for (int r = 0; r < m_; ++r)
      lam_eff_[static_cast<std::size_t>(r)] =
          lam_[static_cast<std::size_t>(r)] * row_scale_[static_cast<std::size_t>(r)];
    model_.eval_hessian(xm_, obj_scale_, lam_eff_.data(), hv_);
    for (std::size_t t = 0; t < hv_.size(); ++t) kv_base_[hess_slot_[t]] += hv_[t];
    for (int i = 0; i < N_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)]) continue;
      double sig = 0.0;
      if (has_lo_[static_cast<std::size_t>(i)])
        sig += z_[static_cast<std::size_t>(i)] / (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]);
      if (has_hi_[static_cast<std::size_t>(i)])
        sig += w_[static_cast<std::size_t>(i)] / (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]);
      kv_base_[diag_slot_[static_cast<std::size_t>(i)]] += sig;
    }
    for (std::size_t k = 0; k < jv_.size(); ++k) kv_base_[jac_slot_[k]] += jv_[k];
    for (int r = 0; r < m_; ++r)
      if (slack_of_[static_cast<std::size_t>(r)] >= 0) kv_base_[slack_slot_[static_cast<std::size_t>(r)]] += -1.0;
    for (std::size_t s : zero_slot_) kv_base_[s] = 0.0;
    for (int i = 0; i < N_; ++i)
      if (fixed_[static_cast<std::size_t>(i)]) kv_base_[diag_slot_[static_cast<std::size_t>(i)]] = 1.0;

    // Right-hand side.
    rhs_.assign(static_cast<std::size_t>(T_), 0.0);
    for (int i = 0; i < N_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)]) continue;
      double gf = (i < n_) ? grad_[static_cast<std::size_t>(i)] : 0.0;
      double v = -(gf + jtl_[static_cast<std::size_t>(i)]);
      if (has_lo_[static_cast<std::size_t>(i)]) v += mu / (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]);
      if (has_hi_[static_cast<std::size_t>(i)]) v -= mu / (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]);
      rhs_[static_cast<std::size_t>(i)] = v;
    }
    for (int r = 0; r < m_; ++r) rhs_[static_cast<std::size_t>(N_ + r)] = -c_[static_cast<std::size_t>(r)];

    // Factor with inertia correction. The primal shift delta_p warm-starts
    // from the last successful value and escalates tenfold while the inertia
    // is wrong. The dual shift delta_d escalates when the factorization comes
    // back singular (the constraint block losing rank against a huge barrier
    // diagonal shows up as tiny pivots, which more delta_p cannot cure) and
    // when the solved multiplier step explodes: with dependent rows the
    // component of lambda in the null space of J^T is set purely by delta_d,
    // so a runaway step there calls for a stronger shift, not a longer leash.
    double delta_p = 0.0;
    double delta_d = 1e-8;
    double lam_scale = 1.0;
    for (int r = 0; r < m_; ++r) lam_scale = std::max(lam_scale, std::abs(lam_[static_cast<std::size_t>(r)]));
    bool ok = false;
    for (int attempt = 0; attempt < 18; ++attempt) {
      kv_ = kv_base_;
      if (delta_p > 0.0)
        for (int i = 0; i < N_; ++i)
          if (!fixed_[static_cast<std::size_t>(i)]) kv_[diag_slot_[static_cast<std::size_t>(i)]] += delta_p;
      for (int r = 0; r < m_; ++r) kv_[con_diag_slot_[static_cast<std::size_t>(r)]] += -delta_d;
      bool shaped = false;
      if (solver_->factor(kv_) == FactorStatus::Ok) {
        const Inertia& in = solver_->inertia();
        shaped = in.pos == N_ && in.neg == m_ && in.zero == 0;
      }
      if (!shaped) {
        // A singular or wrongly-signed factorization calls for more convexity
        // in the variable block; delta_d already keeps the constraint block
        // away from zero.
        if (delta_p == 0.0)
          delta_p = (last_delta_ > 0.0) ? std::max(1e-8, last_delta_ / 3.0) : 1e-8;
        else
          delta_p *= 10.0;
        if (delta_p > 1e12) break;
        continue;
      }

      // Solve with two rounds of iterative refinement.
      sol_ = rhs_;
      solver_->solve(sol_);
      for (int round = 0; round < 2; ++round) {
        multiply(sol_, resid_);
        for (int i = 0; i < T_; ++i) resid_[static_cast<std::size_t>(i)] = rhs_[static_cast<std::size_t>(i)] - resid_[static_cast<std::size_t>(i)];
        corr_ = resid_;
        solver_->solve(corr_);
        for (int i = 0; i < T_; ++i) sol_[static_cast<std::size_t>(i)] += corr_[static_cast<std::size_t>(i)];
      }

      // Explosive multipliers with a constraint-equation residual on the
      // scale of c itself mean J has (near-)dependent rows here: the dual
      // step J dx - delta_d dlam = -c puts the irreducible inconsistency
      // into delta_d*dlam, so doubling down on delta_d shrinks dlam without
      // touching the primal direction. A large primal shift also inflates
      // dlam legitimately, so only react when delta_p is idle.
      double lam_next = 0.0, dlam_inf = 0.0, c_inf = 0.0;
      for (int r = 0; r < m_; ++r) {
        lam_next = std::max(lam_next, std::abs(lam_[static_cast<std::size_t>(r)] + sol_[static_cast<std::size_t>(N_ + r)]));
        dlam_inf = std::max(dlam_inf, std::abs(sol_[static_cast<std::size_t>(N_ + r)]));
        c_inf = std::max(c_inf, std::abs(c_[static_cast<std::size_t>(r)]));
      }
      if (delta_p == 0.0 && lam_next > 1e4 * lam_scale &&
          delta_d * dlam_inf > 1e-2 * (c_inf + 1e-10) && delta_d <= 1.0) {
        delta_d *= 100.0;
        continue;
      }
      ok = true;
      break;
    }
    if (!ok) return false;
    delta_used = delta_p;
    last_delta_ = delta_p;

    dx_.assign(sol_.begin(), sol_.begin() + N_);
    dlam_.assign(sol_.begin() + N_, sol_.end());
    for (int i = 0; i < N_; ++i)
      if (fixed_[static_cast<std::size_t>(i)]) dx_[static_cast<std::size_t>(i)] = 0.0;

    dz_.assign(static_cast<std::size_t>(N_), 0.0);
    dw_.assign(static_cast<std::size_t>(N_), 0.0);
    for (int i = 0; i < N_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        double sl = x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)];
        dz_[static_cast<std::size_t>(i)] = mu / sl - z_[static_cast<std::size_t>(i)] -
                                           z_[static_cast<std::size_t>(i)] / sl * dx_[static_cast<std::size_t>(i)];
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        double su = ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)];
        dw_[static_cast<std::size_t>(i)] = mu / su - w_[static_cast<std::size_t>(i)] +
                                           w_[static_cast<std::size_t>(i)] / su * dx_[static_cast<std::size_t>(i)];
      }
    }
    return true;
  }

  void multiply(const std::vector<double>& v, std::vector<double>& y) const {
    y.assign(static_cast<std::size_t>(T_), 0.0);
    for (int c = 0; c < T_; ++c)
      for (int k = pattern_.col_ptr[static_cast<std::size_t>(c)]; k < pattern_.col_ptr[static_cast<std::size_t>(c) + 1]; ++k) {
        int r = pattern_.rows[static_cast<std::size_t>(k)];
        double a = kv_[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(r)] += a * v[static_cast<std::size_t>(c)];
        if (r != c) y[static_cast<std::size_t>(c)] += a * v[static_cast<std::size_t>(r)];
      }
  }

  double merit(const std::vector<double>& X, double mu) const {
    std::vector<double> xm(X.begin(), X.begin() + n_);
    double phi = obj_scale_ * model_.eval_objective(xm);
    for (int i = 0; i < N_; ++i) {
      if (has_lo_[static_cast<std::size_t>(i)]) {
        double sl = X[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)];
        if (sl <= 0.0) return kInf;
        phi -= mu * std::log(sl);
      }
      if (has_hi_[static_cast<std::size_t>(i)]) {
        double su = ub_[static_cast<std::size_t>(i)] - X[static_cast<std::size_t>(i)];
        if (su <= 0.0) return kInf;
        phi -= mu * std::log(su);
      }
    }
    std::vector<double> g;
    model_.eval_rows(xm, g);
    for (int r = 0; r < m_; ++r) {
      int s = slack_of_[static_cast<std::size_t>(r)];
      double sr = row_scale_[static_cast<std::size_t>(r)];
      double target = s >= 0 ? X[static_cast<std::size_t>(s)]
                             : sr * model_.rows()[static_cast<std::size_t>(r)].lo;
      phi += nu_[static_cast<std::size_t>(r)] * std::abs(sr * g[static_cast<std::size_t>(r)] - target);
    }
    return phi;
  }

  double merit_slope(double mu) const {
    double d = 0.0;
    for (int i = 0; i < N_; ++i) {
      if (fixed_[static_cast<std::size_t>(i)]) continue;
      double gf = (i < n_) ? grad_[static_cast<std::size_t>(i)] : 0.0;
      if (has_lo_[static_cast<std::size_t>(i)])
        gf -= mu / (x_[static_cast<std::size_t>(i)] - lb_[static_cast<std::size_t>(i)]);
      if (has_hi_[static_cast<std::size_t>(i)])
        gf += mu / (ub_[static_cast<std::size_t>(i)] - x_[static_cast<std::size_t>(i)]);
      d += gf * dx_[static_cast<std::size_t>(i)];
    }
    for (int r = 0; r < m_; ++r)
      d -= nu_[static_cast<std::size_t>(r)] * std::abs(c_[static_cast<std::size_t>(r)]);
    return d;
  }

  const NlpModel& model_;
  IpmOptions opts_;
  int n_ = 0, m_ = 0, n_slack_ = 0, N_ = 0, T_ = 0;
  std::vector<int> slack_of_;
  std::vector<double> lb_, ub_;
  std::vector<bool> fixed_, has_lo_, has_hi_;

  SparseSym pattern_;
  std::vector<std::size_t> hess_slot_, jac_slot_, slack_slot_, con_diag_slot_, diag_slot_, zero_slot_;
  std::unique_ptr<LdltSolver> solver_;
  std::vector<double> kv_base_, kv_;

  double obj_scale_ = 1.0;
  std::vector<double> row_scale_, nu_;

  std::vector<double> x_, lam_, z_, w_;
  std::vector<double> xm_, grad_, rows_, jv_, hv_, c_, jtl_, lam_eff_;
  std::vector<double> rhs_, sol_, resid_, corr_, dx_, dlam_, dz_, dw_, trial_;
  double obj_ = 0.0;
  double last_delta_ = 0.0;
};

} // namespace detail

/// Solves the model from the given starting point.
inline NlpSolution solve_nlp(const NlpModel& model, const std::vector<double>& x0,
                             const IpmOptions& opts = {}) {
  detail::IpmSolver solver(model, opts);
  return solver.run(x0);
}

} // namespace acopf
