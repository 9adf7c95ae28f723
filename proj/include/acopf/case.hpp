#pragma once

// Network case model and MATPOWER-format case file I/O.
//
// The supported input is a strict subset of the MATPOWER case format:
// baseMVA, bus, gen, branch and gencost matrices, '%' comments, polynomial
// costs of degree <= 2. Everything is converted to per-unit on baseMVA at
// parse time. Out-of-service generators and branches are dropped.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace acopf {

inline constexpr double kPi = 3.14159265358979323846;

enum class BusType { PQ, PV, Slack };

struct Bus {
  int id = 0;
  BusType type = BusType::PQ;
  double v_min = 0.9;   // per-unit voltage magnitude bounds
  double v_max = 1.1;
  double shunt_g = 0.0; // per-unit shunt conductance/susceptance
  double shunt_b = 0.0;
  double base_kv = 0.0;
};

struct Generator {
  int bus = 0;
  double p_min = 0.0, p_max = 0.0; // per-unit real power bounds
  double q_min = 0.0, q_max = 0.0; // per-unit reactive power bounds
  double c2 = 0.0, c1 = 0.0, c0 = 0.0; // $/pu^2, $/pu, $
};

struct Load {
  int bus = 0;
  double p = 0.0, q = 0.0; // per-unit demand
};

struct Branch {
  int from = 0, to = 0;
  double r = 0.0, x = 0.0;  // per-unit series impedance
  double b_charging = 0.0;  // per-unit total line charging
  double tap = 1.0;         // off-nominal ratio, from side
  double shift = 0.0;       // radians
  double i_max = 0.0;       // per-unit current limit at 1.0 pu voltage; 0 = unlimited
};

struct NetworkCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Branch> branches;

  /// Dense index of a bus id, or -1 if absent.
  int bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return static_cast<int>(i);
    return -1;
  }

  int slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].type == BusType::Slack) return static_cast<int>(i);
    return -1;
  }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ValidationFinding {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  bool ok() const { return findings.empty(); }
};

namespace detail {

struct RawRow {
  int line = 0;
  std::vector<double> values;
};

struct RawMatrix {
  int line = 0; // line of the opening bracket
  std::vector<RawRow> rows;
};

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\'') quoted = !quoted;
    if (line[i] == '%' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(std::string_view tok, double& out) {
  char* end = nullptr;
  std::string buf(tok);
  out = std::strtod(buf.c_str(), &end);
  return end && *end == '\0' && end != buf.c_str();
}

// Parses numeric rows of a matrix body chunk; rows end at ';' or end of line.
inline void parse_matrix_chunk(const std::string& chunk, int line_no, RawMatrix& m,
                               std::vector<double>& pending) {
  std::string tok;
  auto flush_tok = [&]() {
    if (tok.empty()) return;
    double v;
    if (!parse_number(tok, v)) throw ParseError(line_no, "expected a number, got '" + tok + "'");
    pending.push_back(v);
    tok.clear();
  };
  auto end_row = [&]() {
    if (!pending.empty()) {
      m.rows.push_back(RawRow{line_no, pending});
      pending.clear();
    }
  };
  for (char c : chunk) {
    if (c == ';') {
      flush_tok();
      end_row();
    } else if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
      flush_tok();
    } else {
      tok += c;
    }
  }
  flush_tok();
  end_row(); // an unterminated line also ends the row
}

inline const RawMatrix& require_matrix(const std::map<std::string, RawMatrix>& mats,
                                       const std::string& name) {
  auto it = mats.find(name);
  if (it == mats.end()) throw ParseError(0, "missing required matrix '" + name + "'");
  return it->second;
}

inline double col(const RawRow& row, std::size_t idx, const std::string& what) {
  if (idx >= row.values.size())
    throw ParseError(row.line, what + ": expected at least " + std::to_string(idx + 1) +
                                   " columns, got " + std::to_string(row.values.size()));
  return row.values[idx];
}

} // namespace detail

/// Parses MATPOWER case text into a per-unit NetworkCase.
/// Throws ParseError (with a line number) on malformed or unsupported input.
inline NetworkCase parse_matpower_case(const std::string& text) {
  using namespace detail;
  NetworkCase nc;
  std::map<std::string, RawMatrix> mats;
  bool base_seen = false;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::string open_matrix;       // name of the matrix currently being read
  std::vector<double> pending;   // values of a row spanning lines

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (!open_matrix.empty()) {
      std::size_t close = line.find(']');
      std::string body = (close == std::string::npos) ? line : line.substr(0, close);
      parse_matrix_chunk(body, line_no, mats[open_matrix], pending);
      if (close != std::string::npos) {
        if (!pending.empty()) {
          mats[open_matrix].rows.push_back(RawRow{line_no, pending});
          pending.clear();
        }
        open_matrix.clear();
      }
      continue;
    }

    if (line.rfind("function", 0) == 0) {
      std::size_t eq = line.find('=');
      if (eq != std::string::npos) nc.name = trim(line.substr(eq + 1));
      while (!nc.name.empty() && (nc.name.back() == ';')) nc.name.pop_back();
      continue;
    }

    std::size_t dot = line.find('.');
    std::size_t eq = line.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      throw ParseError(line_no, "unrecognized statement: '" + line + "'");
    std::string field = trim(line.substr(dot + 1, eq - dot - 1));
    std::string rhs = trim(line.substr(eq + 1));

    if (field == "version") continue; // '2' assumed; value ignored
    if (field == "baseMVA") {
      while (!rhs.empty() && rhs.back() == ';') rhs.pop_back();
      double v;
      if (!parse_number(trim(rhs), v) || v <= 0.0)
        throw ParseError(line_no, "invalid baseMVA value '" + rhs + "'");
      nc.base_mva = v;
      base_seen = true;
      continue;
    }
    if (rhs.empty() || rhs[0] != '[')
      throw ParseError(line_no, "unsupported assignment to '" + field + "'");
    static const char* known[] = {"bus", "gen", "branch", "gencost"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return field == k; }) == std::end(known))
      throw ParseError(line_no, "unsupported matrix '" + field + "'");
    if (mats.count(field)) throw ParseError(line_no, "duplicate matrix '" + field + "'");
    mats[field].line = line_no;

    std::string body = rhs.substr(1);
    std::size_t close = body.find(']');
    if (close != std::string::npos) {
      parse_matrix_chunk(body.substr(0, close), line_no, mats[field], pending);
      if (!pending.empty()) {
        mats[field].rows.push_back(RawRow{line_no, pending});
        pending.clear();
      }
    } else {
      parse_matrix_chunk(body, line_no, mats[field], pending);
      open_matrix = field;
    }
  }
  if (!open_matrix.empty())
    throw ParseError(line_no, "unterminated matrix '" + open_matrix + "'");
  if (!base_seen) throw ParseError(0, "missing baseMVA");

  const double base = nc.base_mva;
  const RawMatrix& bus = require_matrix(mats, "bus");
  const RawMatrix& gen = require_matrix(mats, "gen");
  const RawMatrix& branch = require_matrix(mats, "branch");
  const RawMatrix& gencost = require_matrix(mats, "gencost");

  for (const RawRow& row : bus.rows) {
    Bus b;
    b.id = static_cast<int>(col(row, 0, "bus"));
    int type = static_cast<int>(col(row, 1, "bus"));
    switch (type) {
      case 1: b.type = BusType::PQ; break;
      case 2: b.type = BusType::PV; break;
      case 3: b.type = BusType::Slack; break;
      default: throw ParseError(row.line, "unsupported bus type " + std::to_string(type));
    }
    double pd = col(row, 2, "bus"), qd = col(row, 3, "bus");
    b.shunt_g = col(row, 4, "bus") / base;
    b.shunt_b = col(row, 5, "bus") / base;
    b.base_kv = col(row, 9, "bus");
    b.v_max = col(row, 11, "bus");
    b.v_min = col(row, 12, "bus");
    nc.buses.push_back(b);
    if (pd != 0.0 || qd != 0.0) nc.loads.push_back(Load{b.id, pd / base, qd / base});
  }

  if (gencost.rows.size() == 2 * gen.rows.size() && !gen.rows.empty())
    throw ParseError(gencost.line, "reactive power cost rows are not supported");
  if (gencost.rows.size() != gen.rows.size())
    throw ParseError(gencost.line, "gencost must have one row per generator (" +
                                       std::to_string(gen.rows.size()) + " expected, got " +
                                       std::to_string(gencost.rows.size()) + ")");

  for (std::size_t gi = 0; gi < gen.rows.size(); ++gi) {
    const RawRow& row = gen.rows[gi];
    int status = static_cast<int>(col(row, 7, "gen"));
    if (status == 0) continue;
    Generator g;
    g.bus = static_cast<int>(col(row, 0, "gen"));
    g.q_max = col(row, 3, "gen") / base;
    g.q_min = col(row, 4, "gen") / base;
    g.p_max = col(row, 8, "gen") / base;
    g.p_min = col(row, 9, "gen") / base;

    const RawRow& cost = gencost.rows[gi];
    int model = static_cast<int>(col(cost, 0, "gencost"));
    if (model == 1)
      throw ParseError(cost.line, "piecewise-linear cost model is not supported");
    if (model != 2)
      throw ParseError(cost.line, "unknown cost model " + std::to_string(model));
    int ncoef = static_cast<int>(col(cost, 3, "gencost"));
    if (ncoef < 1 || ncoef > 3)
      throw ParseError(cost.line, "polynomial cost degree must be <= 2 (got " +
                                      std::to_string(ncoef - 1) + ")");
    // Coefficients are listed highest degree first, in MW units; rescale to per-unit.
    double c[3] = {0.0, 0.0, 0.0}; // c2, c1, c0
    for (int k = 0; k < ncoef; ++k) c[3 - ncoef + k] = col(cost, 4 + k, "gencost");
    g.c2 = c[0] * base * base;
    g.c1 = c[1] * base;
    g.c0 = c[2];
    nc.generators.push_back(g);
  }

  for (const RawRow& row : branch.rows) {
    int status = static_cast<int>(col(row, 10, "branch"));
    if (status == 0) continue;
    Branch b;
    b.from = static_cast<int>(col(row, 0, "branch"));
    b.to = static_cast<int>(col(row, 1, "branch"));
    b.r = col(row, 2, "branch");
    b.x = col(row, 3, "branch");
    b.b_charging = col(row, 4, "branch");
    b.i_max = col(row, 5, "branch") / base; // rateA as a current limit at 1 pu voltage
    double ratio = col(row, 8, "branch");
    b.tap = (ratio == 0.0) ? 1.0 : ratio;
    b.shift = col(row, 9, "branch") * kPi / 180.0;
    nc.branches.push_back(b);
  }

  return nc;
}

/// Checks NetworkCase invariants; an empty report means the case is valid.
inline ValidationReport validate_case(const NetworkCase& nc) {
  ValidationReport rep;
  auto add = [&](const std::string& code, const std::string& msg) {
    rep.findings.push_back(ValidationFinding{code, msg});
  };
  auto finite = [](double v) { return std::isfinite(v); };

  std::map<int, int> seen;
  for (const Bus& b : nc.buses) {
    if (++seen[b.id] == 2) add("duplicate-bus", "bus id " + std::to_string(b.id) + " appears more than once");
    if (!(b.v_min > 0.0 && b.v_min <= b.v_max))
      add("bad-voltage-bounds", "bus " + std::to_string(b.id) + ": requires 0 < v_min <= v_max");
    if (!finite(b.shunt_g) || !finite(b.shunt_b))
      add("bad-shunt", "bus " + std::to_string(b.id) + ": non-finite shunt");
  }
  int n_slack = 0;
  for (const Bus& b : nc.buses)
    if (b.type == BusType::Slack) ++n_slack;
  if (n_slack == 0) add("no-slack", "case has no slack bus");

  auto bus_exists = [&](int id) { return seen.count(id) > 0; };
  for (std::size_t i = 0; i < nc.generators.size(); ++i) {
    const Generator& g = nc.generators[i];
    std::string tag = "generator " + std::to_string(i);
    if (!bus_exists(g.bus)) add("gen-bad-bus", tag + " references nonexistent bus " + std::to_string(g.bus));
    if (!(g.p_min <= g.p_max)) add("gen-p-bounds", tag + ": p_min > p_max");
    if (!(g.q_min <= g.q_max)) add("gen-q-bounds", tag + ": q_min > q_max");
    if (!(g.c2 >= 0.0)) add("gen-cost", tag + ": c2 < 0");
  }
  for (std::size_t i = 0; i < nc.loads.size(); ++i) {
    const Load& d = nc.loads[i];
    std::string tag = "load " + std::to_string(i);
    if (!bus_exists(d.bus)) add("load-bad-bus", tag + " references nonexistent bus " + std::to_string(d.bus));
    if (!finite(d.p) || !finite(d.q)) add("load-not-finite", tag + ": non-finite demand");
  }
  for (std::size_t i = 0; i < nc.branches.size(); ++i) {
    const Branch& b = nc.branches[i];
    std::string tag = "branch " + std::to_string(i);
    if (!bus_exists(b.from)) add("branch-bad-bus", tag + " references nonexistent bus " + std::to_string(b.from));
    if (!bus_exists(b.to)) add("branch-bad-bus", tag + " references nonexistent bus " + std::to_string(b.to));
    if (b.from == b.to) add("branch-self-loop", tag + ": from == to");
    if (b.r == 0.0 && b.x == 0.0) add("branch-zero-impedance", tag + ": r and x both zero");
    if (!(b.tap > 0.0)) add("branch-bad-tap", tag + ": tap must be positive");
  }
  if (!(nc.base_mva > 0.0)) add("bad-base", "base_mva must be positive");
  return rep;
}

/// Writes the case back out in the supported MATPOWER subset. Numbers are
/// emitted with enough digits that parse(emit(case)) reproduces the case.
inline std::string write_matpower_case(const NetworkCase& nc) {
  std::ostringstream out;
  out.precision(17);
  const double base = nc.base_mva;

  auto load_at = [&](int bus_id) {
    double p = 0.0, q = 0.0;
    for (const Load& d : nc.loads)
      if (d.bus == bus_id) { p += d.p; q += d.q; }
    return std::pair<double, double>(p, q);
  };

  out << "function mpc = " << (nc.name.empty() ? "case_unnamed" : nc.name) << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << base << ";\n";

  out << "mpc.bus = [\n";
  for (const Bus& b : nc.buses) {
    auto [pd, qd] = load_at(b.id);
    int type = b.type == BusType::PQ ? 1 : (b.type == BusType::PV ? 2 : 3);
    out << "\t" << b.id << "\t" << type << "\t" << pd * base << "\t" << qd * base << "\t"
        << b.shunt_g * base << "\t" << b.shunt_b * base << "\t1\t1\t0\t" << b.base_kv
        << "\t1\t" << b.v_max << "\t" << b.v_min << ";\n";
  }
  out << "];\n";

  out << "mpc.gen = [\n";
  for (const Generator& g : nc.generators)
    out << "\t" << g.bus << "\t0\t0\t" << g.q_max * base << "\t" << g.q_min * base
        << "\t1\t" << base << "\t1\t" << g.p_max * base << "\t" << g.p_min * base << ";\n";
  out << "];\n";

  out << "mpc.branch = [\n";
  for (const Branch& b : nc.branches)
    out << "\t" << b.from << "\t" << b.to << "\t" << b.r << "\t" << b.x << "\t" << b.b_charging
        << "\t" << b.i_max * base << "\t0\t0\t" << (b.tap == 1.0 ? 0.0 : b.tap) << "\t"
        << b.shift * 180.0 / kPi << "\t1\t-360\t360;\n";
  out << "];\n";

  out << "mpc.gencost = [\n";
  for (const Generator& g : nc.generators)
    out << "\t2\t0\t0\t3\t" << g.c2 / (base * base) << "\t" << g.c1 / base << "\t" << g.c0
        << ";\n";
  out << "];\n";
  return out.str();
}

} // namespace acopf
