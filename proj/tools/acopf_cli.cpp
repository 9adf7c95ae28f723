// acopf: build, solve, check, and benchmark ACOPF formulations.
//
// Subcommands:
//   solve  one (case, formulation) cell, result in json/csv/text
//   bench  a (cases x formulations x box) matrix with reports in an out dir
//   check  derivative, residual, and constraint-count diagnostics for a cell
//
// Exit codes: 0 when every requested cell produced a solver verdict (any
// status, Degenerate included) and, for check, all diagnostics passed;
// 2 when a check diagnostic fails; 1 on harness errors (unreadable input,
// parse failures, bad arguments).

#include <acopf/bench.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace acopf;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string stem_of(const std::string& path) { return std::filesystem::path(path).stem().string(); }

std::vector<FormulationKind> parse_kinds(const std::string& arg) {
  std::vector<FormulationKind> kinds;
  if (arg == "all") {
    kinds.assign(std::begin(kAllFormulationKinds), std::end(kAllFormulationKinds));
    return kinds;
  }
  std::istringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) kinds.push_back(formulation_from_name(tok));
  }
  if (kinds.empty()) throw std::runtime_error("no formulations in '" + arg + "'");
  return kinds;
}

std::vector<std::pair<std::string, NetworkCase>> load_cases(const std::string& arg) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(arg)) {
    for (const fs::directory_entry& e : fs::directory_iterator(arg))
      if (e.is_regular_file() && e.path().extension() == ".m") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .m case files in directory " + arg);
  } else {
    std::istringstream ss(arg);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) files.push_back(tok);
    if (files.empty()) throw std::runtime_error("no case files in '" + arg + "'");
  }
  std::vector<std::pair<std::string, NetworkCase>> cases;
  for (const std::string& f : files) cases.emplace_back(stem_of(f), parse_matpower_case(slurp(f)));
  return cases;
}

void print_text(const RunRecord& r, const FormulationInstance* inst) {
  std::printf("case        %s\n", r.case_name.c_str());
  std::printf("formulation %s  box %s\n", formulation_name(r.kind), r.box ? "on" : "off");
  if (!r.error.empty()) {
    std::printf("error       %s\n", r.error.c_str());
    return;
  }
  std::printf("status      %s\n", status_name(r.status));
  std::printf("objective   %.10f\n", r.objective);
  std::printf("iterations  %d\n", r.iterations);
  std::printf("solve time  %.4f s (build %.4f s)\n", r.solve_seconds, r.build_seconds);
  std::printf("kkt errors  stat %.2e  feas %.2e  comp %.2e\n", r.stationarity_error,
              r.feasibility_error, r.complementarity_error);
  std::printf("nonlinear constraint rows %lld\n", r.nonlinear_count);
  if (inst)
    for (const std::string& w : inst->warnings) std::printf("warning     %s\n", w.c_str());
}

int cmd_solve(const std::string& case_file, const std::string& kind_name, bool box, double tol,
              int max_iter, bool force_degenerate, const std::string& output) {
  FormulationKind kind = formulation_from_name(kind_name);
  NetworkCase nc = parse_matpower_case(slurp(case_file));
  IpmOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  opts.force_degenerate = force_degenerate;
  RunRecord rec = run_cell(stem_of(case_file), nc, kind, box, 1, opts);

  if (output == "json") {
    std::cout << record_json(rec).dump(2) << "\n";
  } else if (output == "csv") {
    std::cout << kRecordCsvHeader << "\n" << record_csv_row(rec) << "\n";
  } else {
    FormulationInstance inst =
        build_formulation(kind, nc, build_admittance(nc), box && box_applicable(kind));
    if (box && !box_applicable(kind)) apply_box_constraints(inst); // collect the warning
    print_text(rec, &inst);
  }
  return rec.error.empty() ? 0 : 1;
}

int cmd_bench(const std::string& cases_arg, const std::string& kinds_arg, bool box_study,
              int jobs, int repeats, double tol, int max_iter, const std::string& out_dir) {
  BenchConfig cfg;
  cfg.cases = load_cases(cases_arg);
  cfg.kinds = parse_kinds(kinds_arg);
  cfg.box_study = box_study;
  cfg.jobs = jobs;
  cfg.repeats = repeats;
  cfg.ipm.tol = tol;
  cfg.ipm.max_iter = max_iter;

  std::vector<RunRecord> records = run_matrix(cfg);
  ProfileSet profiles = performance_profile(records);
  std::vector<RunRecord> box_records; // only kinds that can have a matched pair
  for (const RunRecord& r : records)
    if (box_applicable(r.kind)) box_records.push_back(r);
  BoxReport box = compare_box(box_records);
  EmitResult emitted = emit_report(records, &profiles, box_study ? &box : nullptr, out_dir);

  std::printf("%-12s %-7s %-4s %-18s %14s %6s %10s\n", "case", "kind", "box", "status",
              "objective", "iters", "seconds");
  for (const RunRecord& r : records) {
    if (!r.error.empty()) {
      std::printf("%-12s %-7s %-4s error: %s\n", r.case_name.c_str(), formulation_name(r.kind),
                  r.box ? "on" : "off", r.error.c_str());
      continue;
    }
    std::printf("%-12s %-7s %-4s %-18s %14.4f %6d %10.4f\n", r.case_name.c_str(),
                formulation_name(r.kind), r.box ? "on" : "off", status_name(r.status),
                r.objective, r.iterations, r.solve_seconds);
  }
  for (const std::string& n : profiles.notices) std::printf("notice: %s\n", n.c_str());
  if (box_study)
    for (const std::string& n : box.notices) std::printf("notice: %s\n", n.c_str());
  for (const std::string& n : emitted.notices) std::printf("notice: %s\n", n.c_str());
  for (const std::string& f : emitted.files) std::printf("wrote %s\n", f.c_str());
  return all_cells_terminal(records) ? 0 : 1;
}

int cmd_check(const std::string& case_file, const std::string& kind_name) {
  FormulationKind kind = formulation_from_name(kind_name);
  NetworkCase nc = parse_matpower_case(slurp(case_file));
  ValidationReport vr = validate_case(nc);
  for (const ValidationFinding& f : vr.findings)
    std::printf("finding     [%s] %s\n", f.code.c_str(), f.message.c_str());

  AdmittanceModel adm = build_admittance(nc);
  FormulationInstance inst = build_formulation(kind, nc, adm);
  bool ok = true;
  auto verdict = [&](const char* what, bool pass, const std::string& detail) {
    std::printf("%-12s %s  %s\n", what, pass ? "PASS" : "FAIL", detail.c_str());
    ok = ok && pass;
  };

  long long tally = inst.model.nonlinear_tally();
  long long formula = nonlinear_constraint_count(kind, static_cast<long long>(nc.buses.size()),
                                                 static_cast<long long>(nc.branches.size()));
  bool unlimited = std::any_of(nc.branches.begin(), nc.branches.end(),
                               [](const Branch& b) { return b.i_max <= 0.0; });
  std::string note = "built=" + std::to_string(tally) + " formula=" + std::to_string(formula);
  if (unlimited) note += " (unlimited branches omit thermal rows)";
  verdict("count", tally == formula || unlimited, note);

  // Central-difference agreement at the flat start and a few deterministic
  // interior points. The 1e-5 step keeps finite-difference rounding below the
  // tolerance for per-unit data with coefficients up to ~1e4.
  std::vector<double> x0 = initial_point(inst);
  double worst_grad = 0.0, worst_jac = 0.0, worst_hess = 0.0;
  std::uint64_t state = 12345;
  for (int rep = 0; rep < 4; ++rep) {
    std::vector<double> x = x0;
    if (rep > 0) {
      for (double& xi : x) {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        xi += 0.05 * (static_cast<double>((state >> 11) % 1000) / 500.0 - 1.0);
      }
      for (int i = 0; i < inst.model.num_vars(); ++i)
        x[i] = std::min(std::max(x[i], inst.model.var_lo(i)), inst.model.var_hi(i));
    }
    DerivativeCheck dc = check_derivatives(inst.model, x, 1.0, nullptr, 1e-5);
    worst_grad = std::max(worst_grad, dc.grad_error);
    worst_jac = std::max(worst_jac, dc.jac_error);
    worst_hess = std::max(worst_hess, dc.hess_error);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "grad=%.2e jac=%.2e hess=%.2e", worst_grad, worst_jac,
                worst_hess);
  verdict("derivatives", worst_grad <= 1e-6 && worst_jac <= 1e-6 && worst_hess <= 1e-6, buf);

  ResidualReport rep = residuals(inst, x0);
  std::snprintf(buf, sizeof buf, "flat-start bounds=%.2e worst-row=%.4g", rep.bound_violation,
                rep.max_violation);
  verdict("residuals", rep.bound_violation == 0.0 && std::isfinite(rep.max_violation), buf);
  for (const auto& [block, viol] : rep.blocks)
    std::printf("  residual block %-10s %.4g\n", block.c_str(), viol);

  std::printf("degrees of freedom %lld%s\n", inst.model.degrees_of_freedom(),
              inst.degenerate() ? " (degenerate)" : "");
  return ok ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACOPF formulation workbench: nine NLP formulations of AC optimal "
               "power flow over MATPOWER-style cases, solved by a primal-dual "
               "interior-point method"};
  app.require_subcommand(1);

  std::string case_file, kind_name, output, cases_arg, kinds_arg, out_dir;
  bool box = false, box_study = false, force_degenerate = false;
  double tol = 1e-6;
  int max_iter = 3000, jobs = 1, repeats = 3;

  CLI::App* solve = app.add_subcommand("solve", "solve one case with one formulation");
  solve->add_option("--case", case_file, "MATPOWER-style case file")
      ->required()
      ->check(CLI::ExistingFile);
  solve->add_option("--formulation", kind_name, "formulation kind (e.g. BPFPV)")->required();
  solve->add_flag("--box", box, "add redundant box bounds (applicable kinds only)");
  solve->add_option("--tol", tol, "KKT tolerance")->capture_default_str();
  solve->add_option("--max-iter", max_iter, "iteration limit")->capture_default_str();
  solve->add_flag("--force-degenerate", force_degenerate,
                  "attempt the solve even when degrees of freedom <= 0");
  solve->add_option("--output", output, "output format")
      ->required()
      ->check(CLI::IsMember({"json", "csv", "text"}));

  CLI::App* bench = app.add_subcommand("bench", "run a case x formulation matrix");
  bench->add_option("--cases", cases_arg, "directory of .m files, or comma-separated files")
      ->required();
  bench->add_option("--formulations", kinds_arg, "'all' or comma-separated kinds")->required();
  bench->add_flag("--box-study", box_study, "add box-on cells for applicable kinds");
  bench->add_option("--jobs", jobs, "worker threads over cells")->capture_default_str();
  bench->add_option("--repeats", repeats, "timing repetitions per cell (median)")->capture_default_str();
  bench->add_option("--tol", tol, "KKT tolerance")->capture_default_str();
  bench->add_option("--max-iter", max_iter, "iteration limit")->capture_default_str();
  bench->add_option("--out", out_dir, "report output directory")->required();

  CLI::App* check = app.add_subcommand("check", "derivative/residual/count diagnostics");
  check->add_option("--case", case_file, "MATPOWER-style case file")
      ->required()
      ->check(CLI::ExistingFile);
  check->add_option("--formulation", kind_name, "formulation kind")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (solve->parsed())
      return cmd_solve(case_file, kind_name, box, tol, max_iter, force_degenerate, output);
    if (bench->parsed())
      return cmd_bench(cases_arg, kinds_arg, box_study, jobs, repeats, tol, max_iter, out_dir);
    if (check->parsed()) return cmd_check(case_file, kind_name);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
