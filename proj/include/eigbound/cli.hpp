#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "eigbound/mesh.hpp"

namespace eigbound {

enum class ProblemType { laplacian, steklov };
enum class RunMode { floating, verified, verified_shift };
enum class ReportFormat { csv, markdown };

// Flat key=value configuration with bracketed section headers. Sections:
// [problem] type, domain, bar_width, polygon; [mesh] n, h_max, graded,
// grading_exponent, grading_cutoff; [discretization] p, n, m; [bound] mode,
// lambda_hat, rho, rho_ack; [output] file, reference. Lines may carry '#'
// comments. An explicit rho requires rho_ack=true: rigor then rests on the
// user-supplied separation rho <= lambda_{m+1}.
struct ProblemConfig {
  ProblemType problem = ProblemType::laplacian;
  DomainKind domain = DomainKind::square;
  std::string polygon_file;  // domain read from file when nonempty
  double bar_width = 0.40625;
  int mesh_n = 0;      // square: subdivisions per side (exclusive with h_max)
  double mesh_h = 0.0;  // size cap for template and polygon triangulations
  bool graded = false;
  double grading_exponent = 1.0 / 3.0;
  double grading_cutoff = 1.0;
  int p = 2;  // conforming order 1..3
  int n = 1;  // cluster size (trial count); 0 requests upper bounds only
  int m = 0;  // spectral count for the separation bound; 0 defaults to n
  bool rho_auto = true;
  double rho = 0.0;
  bool rho_ack = false;
  RunMode mode = RunMode::verified;
  double lambda_hat = 0.0;
  std::string output_file;
  std::string reference_file;
};

// Throws std::invalid_argument with a "config line N:" prefix on malformed
// or inconsistent input.
ProblemConfig parse_config_text(const std::string& text);
ProblemConfig load_config_file(const std::string& path);

// Canonical lowercase names used in configs and reports.
std::string problem_name(ProblemType p);
std::string domain_name(DomainKind d);
std::string mode_name(RunMode m);

// Builds the computational mesh described by the config. The boundary-weight
// problem runs stage 2 on this mesh as is; the rough stage refines an
// internal copy when its one-boundary-edge-per-element precondition fails.
Mesh build_mesh(const ProblemConfig& cfg);

// Absent values are quiet NaN throughout the report structures.
struct BoundsRow {
  int k = 0;
  double lower_stage1;
  double lower_stage2;
  double upper;
};

struct BoundsReport {
  std::string problem, domain, mode;
  int p = 0, n = 0, m = 0;
  double lambda_hat = 0.0;
  double h_max = 0.0;
  long elements = 0;
  long dofs = 0;
  double ch;
  double rho;
  double lambda_n;
  bool feasible = true;
  std::string diagnostic;  // set when infeasible
  std::vector<BoundsRow> rows;
};

// Runs the full two-stage pipeline for one configuration. An unmet
// separation precondition is reported through feasible/diagnostic, not an
// exception; invalid configurations and solver failures throw.
BoundsReport run_problem(const ProblemConfig& cfg);

// Decimal formatting at the given number of significant digits with a
// directed final rounding: dir < 0 rounds toward -infinity, dir > 0 toward
// +infinity, dir = 0 to nearest. The printed literal never lies on the
// wrong side of the value, and reprinting the parsed literal reproduces it
// byte for byte.
std::string format_sig(double v, int digits, int dir);

// Largest d-significant-digit decimal not exceeding v, as a double clamped
// to v from below.
double round_down_sig(double v, int digits);

// Deterministic report serialization: 9 significant digits, lower bounds
// rounded down, upper bounds rounded up, gap column recomputed from the
// printed endpoints. An empty report emits headers only.
std::string emit_report(const BoundsReport& r, ReportFormat f);

// Parses emit_report's CSV output back; emitting the result reproduces the
// input byte for byte.
BoundsReport parse_report_csv(const std::string& text);

struct ReferenceEntry {
  std::string problem, domain;
  int k = 0;
  double value = 0.0;
  std::string provenance;
};

// Reference eigenvalue tables: whitespace-separated lines of
// "problem domain k value provenance" with '#' comments.
std::vector<ReferenceEntry> load_reference_file(const std::string& path);

// Resolution order: explicit path if nonempty, then the directory named by
// EIGBOUND_DATA, then ./data. Returns an empty list when nothing is found.
std::vector<ReferenceEntry> load_reference_values(const std::string& explicit_path = {});

// NaN when the table has no matching entry.
double reference_value(const std::vector<ReferenceEntry>& refs,
                       const std::string& problem, const std::string& domain,
                       int k);

struct ConvergeRow {
  int level = 0;  // 1-based index into the level list
  double h_max = 0.0;
  long dofs = 0;
  int k = 0;
  double lower_stage1;
  double lower_stage2;
  double upper;
  double reference;
  // Signed distances on the safe side: reference minus lower bound, upper
  // bound minus reference. Negative values expose a bound violation.
  double err_stage1;
  double err_stage2;
  double err_upper;
};

struct SlopeRecord {
  int k = 0;
  std::string family;  // lower_stage1 | lower_stage2 | upper
  double slope = 0.0;
};

struct ConvergeReport {
  std::string problem, domain, mode;
  int p = 0, n = 0, m = 0;
  std::vector<ConvergeRow> rows;
  std::vector<SlopeRecord> slopes;  // log-log least-squares fits vs h_max
};

// Thrown when a convergence level fails the separation precondition; the
// command front end maps it to exit code 2.
struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs the pipeline once per level. For a square mesh configured through n
// the level values are per-side counts; otherwise they are h_max values.
ConvergeReport run_converge(const ProblemConfig& cfg,
                            const std::vector<double>& levels);

std::string emit_converge_csv(const ConvergeReport& r);

}  // namespace eigbound
