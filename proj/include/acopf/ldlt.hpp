#pragma once

// Sparse LDL^T factorization for symmetric indefinite systems.
//
// The matrix is given as its upper triangle in compressed sparse column form.
// A deterministic minimum-degree permutation is applied up front, the
// elimination tree and column counts are computed once, and factor() runs an
// up-looking numeric factorization with 1x1 pivots in the fixed order. There
// is no pivoting for stability: callers detect trouble through the Singular
// status or the inertia and regularize the matrix instead.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace acopf {

/// Upper-triangle pattern (row <= col), CSC, rows sorted within each column.
struct SparseSym {
  int n = 0;
  std::vector<int> col_ptr; // size n+1
  std::vector<int> rows;    // size nnz
};

enum class FactorStatus { Ok, Singular };

struct Inertia {
  int pos = 0, neg = 0, zero = 0;
};

namespace detail {

/// Exact minimum-degree ordering on an undirected graph; ties break toward
/// the smallest vertex index, so the result is deterministic.
inline std::vector<int> min_degree_order(int n, std::vector<std::vector<int>> adj) {
  std::vector<bool> eliminated(static_cast<std::size_t>(n), false);
  std::vector<int> degree(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) degree[static_cast<std::size_t>(i)] = static_cast<int>(adj[static_cast<std::size_t>(i)].size());

  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  std::vector<int> nb, merged;
  for (int step = 0; step < n; ++step) {
    int best = -1;
    for (int i = 0; i < n; ++i)
      if (!eliminated[static_cast<std::size_t>(i)] &&
          (best == -1 || degree[static_cast<std::size_t>(i)] < degree[static_cast<std::size_t>(best)]))
        best = i;
    order.push_back(best);
    eliminated[static_cast<std::size_t>(best)] = true;

    nb.clear();
    for (int v : adj[static_cast<std::size_t>(best)])
      if (!eliminated[static_cast<std::size_t>(v)]) nb.push_back(v);
    adj[static_cast<std::size_t>(best)].clear();
    adj[static_cast<std::size_t>(best)].shrink_to_fit();

    // Eliminating `best` joins its remaining neighbours into a clique.
    for (int v : nb) {
      std::vector<int>& av = adj[static_cast<std::size_t>(v)];
      merged.clear();
      std::size_t i = 0, j = 0;
      while (i < av.size() || j < nb.size()) {
        int cand;
        if (j == nb.size() || (i < av.size() && av[i] < nb[j]))
          cand = av[i++];
        else if (i == av.size() || nb[j] < av[i])
          cand = nb[j++];
        else {
          cand = av[i];
          ++i;
          ++j;
        }
        if (cand != v && !eliminated[static_cast<std::size_t>(cand)]) merged.push_back(cand);
      }
      av = merged;
      degree[static_cast<std::size_t>(v)] = static_cast<int>(av.size());
    }
  }
  return order;
}

} // namespace detail

class LdltSolver {
 public:
  /// Orders and symbolically analyzes the pattern. The pattern is fixed for
  /// the lifetime of the solver; factor() only changes numeric values.
  explicit LdltSolver(const SparseSym& pattern) : n_(pattern.n) {
    if (pattern.col_ptr.size() != static_cast<std::size_t>(n_) + 1)
      throw std::invalid_argument("LdltSolver: bad column pointer array");

    // Adjacency of the full symmetric pattern, diagonal dropped.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_));
    for (int c = 0; c < n_; ++c)
      for (int k = pattern.col_ptr[static_cast<std::size_t>(c)]; k < pattern.col_ptr[static_cast<std::size_t>(c) + 1]; ++k) {
        int r = pattern.rows[static_cast<std::size_t>(k)];
        if (r > c) throw std::invalid_argument("LdltSolver: pattern is not upper triangular");
        if (r != c) {
          adj[static_cast<std::size_t>(r)].push_back(c);
          adj[static_cast<std::size_t>(c)].push_back(r);
        }
      }
    for (std::vector<int>& a : adj) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    perm_ = detail::min_degree_order(n_, std::move(adj));
    iperm_.assign(static_cast<std::size_t>(n_), 0);
    for (int k = 0; k < n_; ++k) iperm_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(k)])] = k;

    // Permuted upper-triangle pattern plus a map from input entries to slots.
    std::vector<std::pair<int, int>> coords; // (col, row) permuted
    coords.reserve(pattern.rows.size());
    for (int c = 0; c < n_; ++c)
      for (int k = pattern.col_ptr[static_cast<std::size_t>(c)]; k < pattern.col_ptr[static_cast<std::size_t>(c) + 1]; ++k) {
        int pr = iperm_[static_cast<std::size_t>(pattern.rows[static_cast<std::size_t>(k)])];
        int pc = iperm_[static_cast<std::size_t>(c)];
        coords.emplace_back(std::max(pr, pc), std::min(pr, pc));
      }
    std::vector<std::pair<int, int>> sorted = coords;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    ap_.assign(static_cast<std::size_t>(n_) + 1, 0);
    ai_.resize(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      ap_[static_cast<std::size_t>(sorted[k].first) + 1]++;
      ai_[k] = sorted[k].second;
    }
    for (int c = 0; c < n_; ++c) ap_[static_cast<std::size_t>(c) + 1] += ap_[static_cast<std::size_t>(c)];
    value_slot_.resize(coords.size());
    for (std::size_t k = 0; k < coords.size(); ++k)
      value_slot_[k] = static_cast<std::size_t>(
          std::lower_bound(sorted.begin(), sorted.end(), coords[k]) - sorted.begin());
    ax_.assign(sorted.size(), 0.0);

    symbolic();
  }

  int n() const { return n_; }
  const std::vector<int>& perm() const { return perm_; }
  /// Nonzeros in the L factor (strictly below the diagonal).
  long long l_nnz() const { return lp_.empty() ? 0 : lp_.back(); }

  /// Numeric factorization of the values (same entry order as the pattern
  /// passed to the constructor). Duplicate coordinates accumulate.
  FactorStatus factor(const std::vector<double>& values) {
    if (values.size() != value_slot_.size())
      throw std::invalid_argument("LdltSolver::factor: value count mismatch");
    std::fill(ax_.begin(), ax_.end(), 0.0);
    for (std::size_t k = 0; k < values.size(); ++k) ax_[value_slot_[k]] += values[k];

    // Per-column pivot tolerance: a pivot is singular when it is negligible
    // against the entries of its own column. A global scale would misfire on
    // well-posed saddle systems whose diagonal legitimately spans many orders
    // of magnitude.
    colmax_.assign(static_cast<std::size_t>(n_), 0.0);
    for (int c = 0; c < n_; ++c)
      for (int p = ap_[static_cast<std::size_t>(c)]; p < ap_[static_cast<std::size_t>(c) + 1]; ++p) {
        double a = std::abs(ax_[static_cast<std::size_t>(p)]);
        colmax_[static_cast<std::size_t>(c)] = std::max(colmax_[static_cast<std::size_t>(c)], a);
        colmax_[static_cast<std::size_t>(ai_[static_cast<std::size_t>(p)])] =
            std::max(colmax_[static_cast<std::size_t>(ai_[static_cast<std::size_t>(p)])], a);
      }

    // Up-looking factorization, one column of L per pivot k.
    std::vector<double>& y = work_y_;
    std::vector<int>& pattern_stack = work_p_;
    std::vector<int>& flag = work_f_;
    std::vector<int>& lnz = work_l_;
    y.assign(static_cast<std::size_t>(n_), 0.0);
    pattern_stack.assign(static_cast<std::size_t>(n_), 0);
    flag.assign(static_cast<std::size_t>(n_), -1);
    lnz.assign(static_cast<std::size_t>(n_), 0);
    inertia_ = Inertia{};

    for (int k = 0; k < n_; ++k) {
      int top = n_;
      flag[static_cast<std::size_t>(k)] = k;
      for (int p = ap_[static_cast<std::size_t>(k)]; p < ap_[static_cast<std::size_t>(k) + 1]; ++p) {
        int i = ai_[static_cast<std::size_t>(p)];
        y[static_cast<std::size_t>(i)] += ax_[static_cast<std::size_t>(p)];
        int len = 0;
        while (flag[static_cast<std::size_t>(i)] != k) {
          pattern_stack[static_cast<std::size_t>(len++)] = i;
          flag[static_cast<std::size_t>(i)] = k;
          i = parent_[static_cast<std::size_t>(i)];
        }
        while (len > 0) pattern_stack[static_cast<std::size_t>(--top)] = pattern_stack[static_cast<std::size_t>(--len)];
      }
      double dk = y[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(k)] = 0.0;
      for (int t = top; t < n_; ++t) {
        int i = pattern_stack[static_cast<std::size_t>(t)];
        double yi = y[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(i)] = 0.0;
        int p2 = lp_[static_cast<std::size_t>(i)] + lnz[static_cast<std::size_t>(i)];
        for (int p = lp_[static_cast<std::size_t>(i)]; p < p2; ++p)
          y[static_cast<std::size_t>(li_[static_cast<std::size_t>(p)])] -= lx_[static_cast<std::size_t>(p)] * yi;
        double lki = yi / d_[static_cast<std::size_t>(i)];
        dk -= lki * yi;
        li_[static_cast<std::size_t>(p2)] = k;
        lx_[static_cast<std::size_t>(p2)] = lki;
        lnz[static_cast<std::size_t>(i)]++;
      }
      d_[static_cast<std::size_t>(k)] = dk;
      if (!std::isfinite(dk) || std::abs(dk) <= 1e-16 * colmax_[static_cast<std::size_t>(k)] + 1e-300) {
        inertia_.zero++;
        return FactorStatus::Singular;
      }
      (dk > 0.0 ? inertia_.pos : inertia_.neg)++;
    }
    return FactorStatus::Ok;
  }

  const Inertia& inertia() const { return inertia_; }

  /// Solves A x = b in place using the current factorization.
  void solve(std::vector<double>& b) const {
    if (b.size() != static_cast<std::size_t>(n_))
      throw std::invalid_argument("LdltSolver::solve: size mismatch");
    std::vector<double> x(static_cast<std::size_t>(n_));
    for (int k = 0; k < n_; ++k) x[static_cast<std::size_t>(k)] = b[static_cast<std::size_t>(perm_[static_cast<std::size_t>(k)])];
    for (int j = 0; j < n_; ++j) {
      double xj = x[static_cast<std::size_t>(j)];
      for (int p = lp_[static_cast<std::size_t>(j)]; p < lp_[static_cast<std::size_t>(j) + 1]; ++p)
        x[static_cast<std::size_t>(li_[static_cast<std::size_t>(p)])] -= lx_[static_cast<std::size_t>(p)] * xj;
    }
    for (int j = 0; j < n_; ++j) x[static_cast<std::size_t>(j)] /= d_[static_cast<std::size_t>(j)];
    for (int j = n_ - 1; j >= 0; --j) {
      double xj = x[static_cast<std::size_t>(j)];
      for (int p = lp_[static_cast<std::size_t>(j)]; p < lp_[static_cast<std::size_t>(j) + 1]; ++p)
        xj -= lx_[static_cast<std::size_t>(p)] * x[static_cast<std::size_t>(li_[static_cast<std::size_t>(p)])];
      x[static_cast<std::size_t>(j)] = xj;
    }
    for (int k = 0; k < n_; ++k) b[static_cast<std::size_t>(perm_[static_cast<std::size_t>(k)])] = x[static_cast<std::size_t>(k)];
  }

 private:
  void symbolic() {
    parent_.assign(static_cast<std::size_t>(n_), -1);
    std::vector<int> flag(static_cast<std::size_t>(n_), -1);
    std::vector<int> lnz(static_cast<std::size_t>(n_), 0);
    for (int k = 0; k < n_; ++k) {
      flag[static_cast<std::size_t>(k)] = k;
      for (int p = ap_[static_cast<std::size_t>(k)]; p < ap_[static_cast<std::size_t>(k) + 1]; ++p) {
        int i = ai_[static_cast<std::size_t>(p)];
        while (flag[static_cast<std::size_t>(i)] != k) {
          if (parent_[static_cast<std::size_t>(i)] == -1) parent_[static_cast<std::size_t>(i)] = k;
          lnz[static_cast<std::size_t>(i)]++;
          flag[static_cast<std::size_t>(i)] = k;
          i = parent_[static_cast<std::size_t>(i)];
        }
      }
    }
    lp_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (int i = 0; i < n_; ++i) lp_[static_cast<std::size_t>(i) + 1] = lp_[static_cast<std::size_t>(i)] + lnz[static_cast<std::size_t>(i)];
    li_.assign(static_cast<std::size_t>(lp_[static_cast<std::size_t>(n_)]), 0);
    lx_.assign(li_.size(), 0.0);
    d_.assign(static_cast<std::size_t>(n_), 0.0);
  }

  int n_ = 0;
  std::vector<int> perm_, iperm_;
  std::vector<int> ap_, ai_;          // permuted upper pattern
  std::vector<double> ax_;            // permuted values
  std::vector<std::size_t> value_slot_;
  std::vector<int> parent_;           // elimination tree
  std::vector<int> lp_, li_;          // L pattern (strict lower, CSC)
  std::vector<double> lx_, d_;
  Inertia inertia_;
  std::vector<double> work_y_;
  std::vector<double> colmax_;
  std::vector<int> work_p_, work_f_, work_l_;
};

} // namespace acopf
