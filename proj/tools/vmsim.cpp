#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#ifdef VMSIM_HAVE_OPENMP
#include <omp.h>
#endif

#include "vmsim/coupling.hpp"
#include "vmsim/diagnostics.hpp"
#include "vmsim/error.hpp"
#include "vmsim/scenario_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kValidation = 3,
  kCfl = 4,
  kData = 5,
  kMissingHistory = 6,
  kSolver = 7,
  kIo = 8,
};

int exit_code(vmsim::ErrorKind kind) {
  using vmsim::ErrorKind;
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::InvalidArgument: return kUsage;
    case ErrorKind::ValidationError:
    case ErrorKind::NonDiagonalMaterial:
    case ErrorKind::SpdViolation:
    case ErrorKind::ContainerNotVacuum:
    case ErrorKind::InitialConstraintViolation: return kValidation;
    case ErrorKind::CflViolation: return kCfl;
    case ErrorKind::ChecksumMismatch:
    case ErrorKind::ShapeMismatch: return kData;
    case ErrorKind::MissingHistory: return kMissingHistory;
    case ErrorKind::NegativeDensity:
    case ErrorKind::ToleranceUnreachable:
    case ErrorKind::CounterexampleFound: return kSolver;
    case ErrorKind::IoError: return kIo;
  }
  return kSolver;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

struct Options {
  std::string scenario;
  std::string out = "out";
  std::vector<std::string> overrides;
  int threads = 0;
  int cadence = 0;
  std::string run_dir;
};

vmsim::Scenario load(const Options& o) {
  std::vector<std::string> ov = o.overrides;
  if (o.cadence > 0) ov.push_back("run.cadence=" + std::to_string(o.cadence));
  return vmsim::load_scenario(o.scenario, ov);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw vmsim::Error(vmsim::ErrorKind::IoError, "cannot write " + p.string());
  out << text;
}

json manifest_for(const vmsim::Scenario& s, const vmsim::RunSetup& setup, const std::string& command) {
  json m;
  m["version"] = vmsim::kVersion;
  m["command"] = command;
  m["scenario"] = json::parse(vmsim::serialize_scenario(s));
  m["resolved"] = {{"dt", setup.dt}, {"steps", setup.steps()}, {"cadence", setup.cadence}};
  return m;
}

int cmd_run(const Options& o) {
  const vmsim::Scenario s = load(o);
  const vmsim::RunArtifacts art = vmsim::run_to_directory(s, o.out);
  std::cout << "wrote " << art.csv.string() << ", " << art.history.string() << ", " << art.snapshots.size()
            << " snapshots\n";
  return kOk;
}

int cmd_iterate(const Options& o) {
  const vmsim::Scenario s = load(o);
  fs::create_directories(o.out);
  const vmsim::RunSetup setup = vmsim::build_setup(s);
  vmsim::IterationOptions opt;
  opt.R = setup.effective_cutoff();
  opt.k_max = s.run.k_max;
  opt.threshold = s.run.threshold;
  const std::vector<vmsim::IterationState> states = vmsim::iterate(setup, opt);
  std::ostringstream csv;
  csv << "k,R,window,steps,smoothing_width,smoothing_error,smoothing_tolerance,certificate,material_width,"
         "material_error,field_diff,moment_diff,mismatch\n";
  for (const vmsim::IterationState& st : states) {
    csv << st.k << ',' << fmt(st.R) << ',' << fmt(st.window) << ',' << st.steps << ',' << fmt(st.certificate.width)
        << ',' << fmt(st.certificate.error) << ',' << fmt(st.certificate.tolerance) << ','
        << (st.certificate.met ? "met" : "unmet") << ',' << fmt(st.material_width) << ',' << fmt(st.material_error)
        << ',' << fmt(st.field_diff) << ',' << fmt(st.moment_diff) << ',' << fmt(st.mismatch) << '\n';
  }
  write_file(fs::path(o.out) / "iterations.csv", csv.str());
  json m = manifest_for(s, setup, "iterate");
  m["files"] = {{"iterations", "iterations.csv"}};
  write_file(fs::path(o.out) / "manifest.json", m.dump(2));
  std::cout << csv.str();
  return kOk;
}

int cmd_ladder(const Options& o) {
  const vmsim::Scenario s = load(o);
  fs::create_directories(o.out);
  const vmsim::RunSetup setup = vmsim::build_setup(s);
  std::vector<double> R_list = s.run.R_list;
  if (R_list.empty()) R_list.push_back(setup.grid.velocity_radius());
  vmsim::IterationOptions opt;
  opt.k_max = s.run.k_max;
  opt.threshold = s.run.threshold;
  const vmsim::LadderReport rep = vmsim::run_ladder(setup, R_list, opt);
  std::ostringstream csv;
  csv << "R,iterations,kinetic_energy,em_energy,moment_l1,leakage,field_diff,energy_diff_to_previous,"
         "moment_diff_to_previous\n";
  for (std::size_t i = 0; i < rep.members.size(); ++i) {
    const vmsim::LadderMember& m = rep.members[i];
    csv << fmt(m.R) << ',' << m.iterations << ',' << fmt(m.kinetic_energy) << ',' << fmt(m.em_energy) << ','
        << fmt(m.moment_l1) << ',' << fmt(m.leakage) << ',' << fmt(m.field_diff) << ','
        << (i > 0 ? fmt(rep.energy_diff[i - 1]) : "") << ',' << (i > 0 ? fmt(rep.moment_diff[i - 1]) : "") << '\n';
  }
  write_file(fs::path(o.out) / "ladder.csv", csv.str());
  json m = manifest_for(s, setup, "ladder");
  m["files"] = {{"ladder", "ladder.csv"}};
  write_file(fs::path(o.out) / "manifest.json", m.dump(2));
  std::cout << csv.str();
  return kOk;
}

std::string check_lines(const vmsim::CheckReport& rep) {
  std::ostringstream os;
  for (const vmsim::EstimateResult& e : rep.estimates) {
    os << (e.pass ? "PASS " : "FAIL ") << e.name << " lhs=" << fmt(e.lhs) << " rhs=" << fmt(e.rhs)
       << " slack=" << fmt(e.slack) << " tol=" << fmt(e.tol) << '\n';
  }
  for (const vmsim::EstimateResult& e : rep.informational) {
    os << "INFO " << e.name << " lhs=" << fmt(e.lhs) << " rhs=" << fmt(e.rhs) << " slack=" << fmt(e.slack)
       << '\n';
  }
  for (const vmsim::IdentityResult& r : rep.identities) {
    os << "INFO " << r.name << " lhs=" << fmt(r.lhs) << " rhs=" << fmt(r.rhs) << " residual=" << fmt(r.residual)
       << '\n';
  }
  for (const std::string& n : rep.notes) os << "NOTE " << n << '\n';
  return os.str();
}

int cmd_check(const Options& o) {
  const fs::path dir = o.run_dir.empty() ? fs::path(o.out) : fs::path(o.run_dir);
  const vmsim::RunHistory h = vmsim::load_run(dir);
  const vmsim::CheckReport rep = vmsim::run_all_checks(h);
  std::cout << check_lines(rep);
  return rep.pass ? kOk : kCheckFailed;
}

int cmd_validate(const Options& o) {
  const vmsim::Scenario s = load(o);
  const vmsim::RunSetup setup = vmsim::build_setup(s);
  std::cout << vmsim::serialize_scenario(s) << '\n';
  std::cout << "valid: dt=" << fmt(setup.dt) << " steps=" << setup.steps() << " phase cells=" << setup.grid.size()
            << '\n';
  return kOk;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.run_dir.empty() ? fs::path(o.out) : fs::path(o.run_dir);
  const vmsim::RunHistory h = vmsim::load_run(dir);
  const vmsim::CheckReport rep = vmsim::run_all_checks(h);
  std::ostringstream md;
  const vmsim::DiagnosticsRecord& last = h.records.back();
  md << "# Run report\n\n";
  md << "- records: " << h.records.size() << ", final time " << fmt(last.t) << ", dt " << fmt(h.dt) << "\n";
  md << "- species: " << h.species.size() << ", sigma " << fmt(h.sigma_lo) << " .. " << fmt(h.sigma_hi) << "\n";
  md << "- final field energy " << fmt(last.em_energy) << ", div(mu H) " << fmt(last.divB_norm) << "\n\n";
  md << "| check | lhs | rhs | slack | result |\n|---|---|---|---|---|\n";
  for (const vmsim::EstimateResult& e : rep.estimates)
    md << "| " << e.name << " | " << fmt(e.lhs) << " | " << fmt(e.rhs) << " | " << fmt(e.slack) << " | "
       << (e.pass ? "pass" : "FAIL") << " |\n";
  for (const vmsim::EstimateResult& e : rep.informational)
    md << "| " << e.name << " | " << fmt(e.lhs) << " | " << fmt(e.rhs) << " | " << fmt(e.slack) << " | info |\n";
  md << "\n| identity | lhs | rhs | residual |\n|---|---|---|---|\n";
  for (const vmsim::IdentityResult& r : rep.identities)
    md << "| " << r.name << " | " << fmt(r.lhs) << " | " << fmt(r.rhs) << " | " << fmt(r.residual) << " |\n";
  if (!rep.notes.empty()) md << "\n";
  for (const std::string& n : rep.notes) md << "- note: " << n << "\n";
  write_file(dir / "report.md", md.str());
  std::cout << md.str();
  return rep.pass ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic relativistic Vlasov-Maxwell simulator with estimate diagnostics"};
  app.require_subcommand(1);
  Options o;
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads for the solver loops (0: runtime default)");

  auto add_scenario = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--override", o.overrides, "KEY=VALUE applied before validation (repeatable)");
    sub->add_option("--cadence", o.cadence, "Diagnostics cadence in steps");
    sub->add_option("--threads", threads, "Worker threads for the solver loops");
  };
  CLI::App* run = app.add_subcommand("run", "Run the coupled solver and write diagnostics");
  add_scenario(run);
  CLI::App* iterate = app.add_subcommand("iterate", "Run the decoupled iteration up to k_max");
  add_scenario(iterate);
  CLI::App* ladder = app.add_subcommand("ladder", "Run the iteration for every cut-off in R_list");
  add_scenario(ladder);
  CLI::App* validate = app.add_subcommand("validate", "Load, resolve and validate a scenario");
  add_scenario(validate);
  CLI::App* check = app.add_subcommand("check", "Replay every estimate check over a stored run");
  check->add_option("run_dir", o.run_dir, "Run directory");
  check->add_option("--out", o.out, "Run directory (alternative to the positional argument)");
  CLI::App* report = app.add_subcommand("report", "Write report.md for a stored run");
  report->add_option("run_dir", o.run_dir, "Run directory");
  report->add_option("--out", o.out, "Run directory (alternative to the positional argument)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
#ifdef VMSIM_HAVE_OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif
  o.threads = threads;

  try {
    if (*run) return cmd_run(o);
    if (*iterate) return cmd_iterate(o);
    if (*ladder) return cmd_ladder(o);
    if (*validate) return cmd_validate(o);
    if (*check) return cmd_check(o);
    if (*report) return cmd_report(o);
  } catch (const vmsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  }
  return kUsage;
}
