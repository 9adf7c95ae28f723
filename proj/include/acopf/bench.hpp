#pragma once

// Benchmark harness over (case x formulation x box) cells.
//
// run_matrix() executes every cell in isolation: each cell builds its own
// model, times the solve alone (median over a configurable number of
// repetitions; parse/build time is reported separately), and captures any
// harness error in the record instead of aborting the matrix. Profiles are
// the standard Dolan-More construction over solve times: per problem the
// ratio to the best successful time, with failures at infinity, never
// defining the best. Reports are plain CSV (doubles printed with %.17g so
// a reader recovers the exact bits) plus a schema-versioned JSON mirror.

#include <acopf/admittance.hpp>
#include <acopf/case.hpp>
#include <acopf/formulations.hpp>
#include <acopf/ipm.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace acopf {

/// Outcome of one (case, kind, box) cell; exactly one record per cell.
struct RunRecord {
  std::string case_name;
  FormulationKind kind = FormulationKind::BPFPV;
  bool box = false;
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;  // median over repeats, solve call only
  double build_seconds = 0.0;  // admittance + model build + initial point
  double stationarity_error = 0.0;
  double feasibility_error = 0.0;
  double complementarity_error = 0.0;
  long long nonlinear_count = 0;
  std::string error;  // nonempty = the cell never produced a solver verdict
};

struct BenchConfig {
  std::vector<std::pair<std::string, NetworkCase>> cases;  // (name, parsed case)
  std::vector<FormulationKind> kinds;
  bool box_study = false;  // adds a box-on cell for every box-applicable kind
  int repeats = 3;         // timing repetitions per cell (median reported)
  int jobs = 1;            // worker threads over cells; each solve single-threaded
  IpmOptions ipm;
};

inline RunRecord run_cell(const std::string& case_name, const NetworkCase& nc,
                          FormulationKind kind, bool box, int repeats,
                          const IpmOptions& ipm) {
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };
  RunRecord rec;
  rec.case_name = case_name;
  rec.kind = kind;
  rec.box = box;
  try {
    auto b0 = clock::now();
    AdmittanceModel adm = build_admittance(nc);
    FormulationInstance inst = build_formulation(kind, nc, adm, box);
    std::vector<double> x0 = initial_point(inst);
    rec.build_seconds = seconds_since(b0);
    rec.nonlinear_count = inst.model.nonlinear_tally();

    std::vector<double> times;
    NlpSolution sol;
    for (int r = 0; r < std::max(1, repeats); ++r) {
      auto s0 = clock::now();
      sol = solve_nlp(inst.model, x0, ipm);
      times.push_back(seconds_since(s0));
      if (sol.status == SolveStatus::Degenerate) break;  // rejected up front; no jitter to damp
    }
    std::sort(times.begin(), times.end());
    std::size_t n = times.size();
    rec.solve_seconds = (n % 2 == 1) ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    rec.status = sol.status;
    rec.objective = sol.objective;
    rec.iterations = sol.iterations;
    rec.stationarity_error = sol.stationarity_error;
    rec.feasibility_error = sol.feasibility_error;
    rec.complementarity_error = sol.complementarity_error;
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  return rec;
}

/// Runs every cell of the matrix; cell order (and so record order) is
/// case-major, then kind, then box off before on, independent of --jobs.
inline std::vector<RunRecord> run_matrix(const BenchConfig& cfg) {
  struct Cell {
    const std::string* name;
    const NetworkCase* nc;
    FormulationKind kind;
    bool box;
  };
  std::vector<Cell> cells;
  for (const auto& [name, nc] : cfg.cases)
    for (FormulationKind k : cfg.kinds) {
      cells.push_back(Cell{&name, &nc, k, false});
      if (cfg.box_study && box_applicable(k)) cells.push_back(Cell{&name, &nc, k, true});
    }

  std::vector<RunRecord> out(cells.size());
  auto run_one = [&](std::size_t i) {
    out[i] = run_cell(*cells[i].name, *cells[i].nc, cells[i].kind, cells[i].box,
                      cfg.repeats, cfg.ipm);
  };
  int jobs = std::min<int>(std::max(1, cfg.jobs), static_cast<int>(std::max<std::size_t>(cells.size(), 1)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_one(i);
      });
    for (std::thread& th : pool) th.join();
  }
  return out;
}

/// True when every cell produced a solver verdict (any status counts,
/// Degenerate included); harness errors make it false.
inline bool all_cells_terminal(const std::vector<RunRecord>& records) {
  return std::all_of(records.begin(), records.end(),
                     [](const RunRecord& r) { return r.error.empty(); });
}

// ---- performance profiles --------------------------------------------------

struct ProfilePoint {
  double tau = 1.0, rho = 0.0;
};

struct ProfileCurve {
  FormulationKind kind = FormulationKind::BPFPV;
  bool box = false;
  std::vector<ProfilePoint> points;  // step samples at the ratio breakpoints
  double success_fraction = 0.0;     // rho as tau -> infinity
};

struct ProfileSet {
  std::vector<ProfileCurve> curves;
  int n_cases = 0;  // problems kept (at least one successful run each)
  std::vector<std::string> notices;
};

/// Dolan-More time-ratio profiles. A "solver" is a (kind, box) pair present
/// in the records, a "problem" a case name. Problems where no solver reached
/// Optimal are dropped with a notice.
inline ProfileSet performance_profile(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("performance_profile: no records");
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<std::string> cases;
  std::vector<std::pair<FormulationKind, bool>> solvers;
  for (const RunRecord& r : records) {
    if (std::find(cases.begin(), cases.end(), r.case_name) == cases.end())
      cases.push_back(r.case_name);
    auto s = std::make_pair(r.kind, r.box);
    if (std::find(solvers.begin(), solvers.end(), s) == solvers.end()) solvers.push_back(s);
  }
  std::sort(solvers.begin(), solvers.end());

  // times[solver][case]: solve time if Optimal, +inf otherwise or when absent.
  std::map<std::pair<FormulationKind, bool>, std::map<std::string, double>> times;
  for (const RunRecord& r : records) {
    double t = (r.error.empty() && r.status == SolveStatus::Optimal) ? r.solve_seconds : inf;
    times[{r.kind, r.box}].emplace(r.case_name, t);  // first record of a cell wins
  }

  ProfileSet set;
  std::vector<std::string> kept;
  std::map<std::string, double> best;
  for (const std::string& c : cases) {
    double b = inf;
    for (const auto& s : solvers) {
      auto it = times[s].find(c);
      if (it != times[s].end()) b = std::min(b, it->second);
    }
    if (b == inf) {
      set.notices.push_back("case " + c + ": no successful run; dropped from profiles");
      continue;
    }
    kept.push_back(c);
    best[c] = b;
  }
  set.n_cases = static_cast<int>(kept.size());

  for (const auto& s : solvers) {
    ProfileCurve curve;
    curve.kind = s.first;
    curve.box = s.second;
    std::vector<double> ratios;
    int finite = 0;
    for (const std::string& c : kept) {
      auto it = times[s].find(c);
      double t = (it == times[s].end()) ? inf : it->second;
      double r = (t <= best[c]) ? 1.0 : t / best[c];  // handles a zero best time
      ratios.push_back(r);
      if (r < inf) ++finite;
    }
    if (!kept.empty()) {
      auto rho_at = [&](double tau) {
        int cnt = 0;
        for (double r : ratios) cnt += (r <= tau) ? 1 : 0;
        return static_cast<double>(cnt) / static_cast<double>(kept.size());
      };
      std::vector<double> taus{1.0};
      for (double r : ratios)
        if (r > 1.0 && r < inf) taus.push_back(r);
      std::sort(taus.begin(), taus.end());
      taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
      for (double t : taus) curve.points.push_back(ProfilePoint{t, rho_at(t)});
      curve.success_fraction = static_cast<double>(finite) / static_cast<double>(kept.size());
    }
    set.curves.push_back(std::move(curve));
  }
  return set;
}

// ---- box-effect comparison -------------------------------------------------

struct BoxComparison {
  std::string case_name;
  FormulationKind kind = FormulationKind::BPFPV;
  SolveStatus status_off = SolveStatus::MaxIter, status_on = SolveStatus::MaxIter;
  bool status_changed = false;
  int iterations_off = 0, iterations_on = 0;
  double seconds_off = 0.0, seconds_on = 0.0;
  double objective_off = 0.0, objective_on = 0.0;
  double iteration_ratio = 0.0;  // on / off
  double time_ratio = 0.0;
};

struct BoxReport {
  std::vector<BoxComparison> rows;
  std::vector<std::string> notices;
};

/// Pairs up matched (case, kind) cells with box off and on. Unmatched cells
/// and cells with harness errors are skipped with a notice.
inline BoxReport compare_box(const std::vector<RunRecord>& records) {
  BoxReport rep;
  std::map<std::pair<std::string, FormulationKind>, std::pair<const RunRecord*, const RunRecord*>>
      pairs;
  std::vector<std::pair<std::string, FormulationKind>> order;
  for (const RunRecord& r : records) {
    if (!r.error.empty()) {
      rep.notices.push_back("cell " + r.case_name + "/" + formulation_name(r.kind) +
                            (r.box ? "/box" : "") + ": harness error; skipped");
      continue;
    }
    auto key = std::make_pair(r.case_name, r.kind);
    if (!pairs.count(key)) order.push_back(key);
    auto& slot = pairs[key];
    (r.box ? slot.second : slot.first) = &r;
  }
  for (const auto& key : order) {
    const auto& [off, on] = pairs[key];
    if (!off || !on) {
      rep.notices.push_back("cell " + key.first + "/" + formulation_name(key.second) +
                            ": no matched box pair; skipped");
      continue;
    }
    BoxComparison c;
    c.case_name = key.first;
    c.kind = key.second;
    c.status_off = off->status;
    c.status_on = on->status;
    c.status_changed = off->status != on->status;
    c.iterations_off = off->iterations;
    c.iterations_on = on->iterations;
    c.seconds_off = off->solve_seconds;
    c.seconds_on = on->solve_seconds;
    c.objective_off = off->objective;
    c.objective_on = on->objective;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    c.iteration_ratio = off->iterations > 0
                            ? static_cast<double>(on->iterations) / off->iterations
                            : nan;
    c.time_ratio = off->solve_seconds > 0.0 ? on->solve_seconds / off->solve_seconds : nan;
    rep.rows.push_back(std::move(c));
  }
  return rep;
}

// ---- reports ---------------------------------------------------------------

namespace detail {

/// %.17g: enough digits that strtod recovers the exact double.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

inline constexpr const char* kRecordCsvHeader =
    "case,kind,box,status,objective,iterations,solve_seconds,build_seconds,"
    "stationarity_error,feasibility_error,complementarity_error,nonlinear_count,error";

inline std::string record_csv_row(const RunRecord& r) {
  using detail::fmt17;
  std::ostringstream os;
  os << detail::csv_quote(r.case_name) << ',' << formulation_name(r.kind) << ','
     << (r.box ? 1 : 0) << ',' << status_name(r.status) << ',' << fmt17(r.objective) << ','
     << r.iterations << ',' << fmt17(r.solve_seconds) << ',' << fmt17(r.build_seconds) << ','
     << fmt17(r.stationarity_error) << ',' << fmt17(r.feasibility_error) << ','
     << fmt17(r.complementarity_error) << ',' << r.nonlinear_count << ','
     << detail::csv_quote(r.error);
  return os.str();
}

inline nlohmann::json record_json(const RunRecord& r) {
  return nlohmann::json{{"case", r.case_name},
                        {"kind", formulation_name(r.kind)},
                        {"box", r.box},
                        {"status", status_name(r.status)},
                        {"objective", r.objective},
                        {"iterations", r.iterations},
                        {"solve_seconds", r.solve_seconds},
                        {"build_seconds", r.build_seconds},
                        {"stationarity_error", r.stationarity_error},
                        {"feasibility_error", r.feasibility_error},
                        {"complementarity_error", r.complementarity_error},
                        {"nonlinear_count", r.nonlinear_count},
                        {"error", r.error}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.case_name = j.at("case").get<std::string>();
  r.kind = formulation_from_name(j.at("kind").get<std::string>());
  r.box = j.at("box").get<bool>();
  r.status = status_from_name(j.at("status").get<std::string>());
  r.objective = j.at("objective").get<double>();
  r.iterations = j.at("iterations").get<int>();
  r.solve_seconds = j.at("solve_seconds").get<double>();
  r.build_seconds = j.at("build_seconds").get<double>();
  r.stationarity_error = j.at("stationarity_error").get<double>();
  r.feasibility_error = j.at("feasibility_error").get<double>();
  r.complementarity_error = j.at("complementarity_error").get<double>();
  r.nonlinear_count = j.at("nonlinear_count").get<long long>();
  r.error = j.at("error").get<std::string>();
  return r;
}

/// Parses a records CSV produced by emit_report; doubles are recovered
/// bit-exactly thanks to the %.17g writer.
inline std::vector<RunRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  if (line != kRecordCsvHeader) throw std::runtime_error(path + ": unexpected CSV header");
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = detail::csv_split(line);
    if (f.size() != 13) throw std::runtime_error(path + ": malformed row '" + line + "'");
    RunRecord r;
    r.case_name = f[0];
    r.kind = formulation_from_name(f[1]);
    r.box = f[2] == "1";
    r.status = status_from_name(f[3]);
    r.objective = std::strtod(f[4].c_str(), nullptr);
    r.iterations = std::atoi(f[5].c_str());
    r.solve_seconds = std::strtod(f[6].c_str(), nullptr);
    r.build_seconds = std::strtod(f[7].c_str(), nullptr);
    r.stationarity_error = std::strtod(f[8].c_str(), nullptr);
    r.feasibility_error = std::strtod(f[9].c_str(), nullptr);
    r.complementarity_error = std::strtod(f[10].c_str(), nullptr);
    r.nonlinear_count = std::atoll(f[11].c_str());
    r.error = f[12];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RunRecord> read_records_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema_version").get<int>() != 1)
    throw std::runtime_error(path + ": unsupported schema_version");
  std::vector<RunRecord> out;
  for (const nlohmann::json& rj : j.at("records")) out.push_back(record_from_json(rj));
  return out;
}

struct EmitResult {
  std::vector<std::string> files;
  std::vector<std::string> notices;
};

/// Writes records.csv + records.json, profiles.csv (when any curve has
/// samples), and box.csv (when comparisons exist) into out_dir.
inline EmitResult emit_report(const std::vector<RunRecord>& records,
                              const ProfileSet* profiles, const BoxReport* box,
                              const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (records.empty()) throw std::invalid_argument("emit_report: no records");
  fs::create_directories(out_dir);
  EmitResult res;
  auto open = [&](const std::string& name) {
    std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    res.files.push_back(path);
    return out;
  };

  {
    std::ofstream out = open("records.csv");
    out << kRecordCsvHeader << '\n';
    for (const RunRecord& r : records) out << record_csv_row(r) << '\n';
  }
  {
    std::ofstream out = open("records.json");
    nlohmann::json j;
    j["schema_version"] = 1;
    j["records"] = nlohmann::json::array();
    for (const RunRecord& r : records) j["records"].push_back(record_json(r));
    out << j.dump(2) << '\n';
  }

  bool any_points = profiles && std::any_of(profiles->curves.begin(), profiles->curves.end(),
                                            [](const ProfileCurve& c) { return !c.points.empty(); });
  if (any_points) {
    std::ofstream out = open("profiles.csv");
    out << "kind,box,tau,rho\n";
    for (const ProfileCurve& c : profiles->curves)
      for (const ProfilePoint& p : c.points)
        out << formulation_name(c.kind) << ',' << (c.box ? 1 : 0) << ','
            << detail::fmt17(p.tau) << ',' << detail::fmt17(p.rho) << '\n';
  } else {
    res.notices.push_back("profiles.csv omitted: no curves with samples");
  }

  if (box && !box->rows.empty()) {
    std::ofstream out = open("box.csv");
    out << "case,kind,status_off,status_on,status_changed,iterations_off,iterations_on,"
           "iteration_ratio,seconds_off,seconds_on,time_ratio,objective_off,objective_on\n";
    for (const BoxComparison& c : box->rows)
      out << detail::csv_quote(c.case_name) << ',' << formulation_name(c.kind) << ','
          << status_name(c.status_off) << ',' << status_name(c.status_on) << ','
          << (c.status_changed ? 1 : 0) << ',' << c.iterations_off << ',' << c.iterations_on
          << ',' << detail::fmt17(c.iteration_ratio) << ',' << detail::fmt17(c.seconds_off)
          << ',' << detail::fmt17(c.seconds_on) << ',' << detail::fmt17(c.time_ratio) << ','
          << detail::fmt17(c.objective_off) << ',' << detail::fmt17(c.objective_on) << '\n';
  } else if (box) {
    res.notices.push_back("box.csv omitted: no matched box pairs");
  }
  return res;
}

}  // namespace acopf
