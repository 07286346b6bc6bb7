#include <unistd.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "eigbound/cli.hpp"
#include "eigbound/stage1.hpp"

using namespace eigbound;

namespace {

constexpr double kPi = 3.14159265358979323846;

const double kSteklovSquare[4] = {0.240079085427227385859, 1.49230313453359349823,
                                  1.49230313453359349823, 2.08264705403319969933};

double nan_v() { return std::numeric_limits<double>::quiet_NaN(); }

std::string repo_path(const std::string& rel) {
  return std::string(EIGBOUND_REPO_DIR) + "/" + rel;
}

std::filesystem::path scratch_dir() {
  auto d = std::filesystem::temp_directory_path() /
           ("eigbound_cli_" + std::to_string(::getpid()));
  std::filesystem::create_directories(d);
  return d;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(EIGBOUND_CLI_PATH) + " " + args +
                    " >/dev/null 2>/dev/null";
  int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

// Configuration shared by several pipeline tests: the coarse boundary-weight
// problem on the unit square.
std::string square_steklov_cfg(int n_side, int p, int n, int m,
                               const std::string& bound_lines,
                               const std::string& mode) {
  std::ostringstream ss;
  ss << "[problem]\ntype = steklov\ndomain = square\n"
     << "[mesh]\nn = " << n_side << "\n"
     << "[discretization]\np = " << p << "\nn = " << n << "\nm = " << m << "\n"
     << "[bound]\nmode = " << mode << "\n"
     << bound_lines;
  return ss.str();
}

}  // namespace

TEST_CASE("config parser reads every section", "[config]") {
  std::string text =
      "# full configuration\n"
      "[problem]\n"
      "type = laplacian\n"
      "domain = dumbbell   # two chambers\n"
      "bar_width = 0.5\n"
      "[mesh]\n"
      "h_max = 0.29\n"
      "graded = true\n"
      "grading_exponent = 0.25\n"
      "grading_cutoff = 0.8\n"
      "\n"
      "[discretization]\n"
      "p = 3\n"
      "n = 4\n"
      "m = 6\n"
      "[bound]\n"
      "mode = float\n"
      "lambda_hat = 2.5\n"
      "rho = 74.0\n"
      "rho_ack = true\n"
      "[output]\n"
      "file = out.csv\n"
      "reference = refs.txt\n";
  ProblemConfig c = parse_config_text(text);
  CHECK(c.problem == ProblemType::laplacian);
  CHECK(c.domain == DomainKind::dumbbell);
  CHECK(c.bar_width == 0.5);
  CHECK(c.mesh_n == 0);
  CHECK(c.mesh_h == 0.29);
  CHECK(c.graded);
  CHECK(c.grading_exponent == 0.25);
  CHECK(c.grading_cutoff == 0.8);
  CHECK(c.p == 3);
  CHECK(c.n == 4);
  CHECK(c.m == 6);
  CHECK(c.mode == RunMode::floating);
  CHECK(c.lambda_hat == 2.5);
  CHECK_FALSE(c.rho_auto);
  CHECK(c.rho == 74.0);
  CHECK(c.rho_ack);
  CHECK(c.output_file == "out.csv");
  CHECK(c.reference_file == "refs.txt");
}

TEST_CASE("config parser accepts the inline shift form", "[config]") {
  std::string text =
      "[problem]\ntype = laplacian\ndomain = square\n"
      "[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n"
      "[bound]\nmode = verified-shift(2.5)\n";
  ProblemConfig c = parse_config_text(text);
  CHECK(c.mode == RunMode::verified_shift);
  CHECK(c.lambda_hat == 2.5);
  CHECK(c.rho_auto);
}

TEST_CASE("config parser applies defaults and last key wins", "[config]") {
  std::string text =
      "[problem]\ntype = steklov\ndomain = square\n"
      "[mesh]\nn = 4\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n";
  ProblemConfig c = parse_config_text(text);
  CHECK(c.mesh_n == 8);
  CHECK(c.m == 0);
  CHECK(c.mode == RunMode::verified);
  CHECK(c.rho_auto);
  CHECK_FALSE(c.rho_ack);
  CHECK(c.lambda_hat == 0.0);
  CHECK(c.bar_width == 0.40625);
  CHECK(c.grading_exponent == Catch::Approx(1.0 / 3.0));
  CHECK(c.output_file.empty());
  CHECK(c.reference_file.empty());
}

TEST_CASE("config parser rejects malformed input", "[config]") {
  auto bad = [](const std::string& text) {
    CHECK_THROWS_AS(parse_config_text(text), std::invalid_argument);
  };
  std::string base =
      "[problem]\ntype = steklov\ndomain = square\n"
      "[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n";

  bad("type = steklov\n");                  // key before any section
  bad("[solver]\nx = 1\n");                 // unknown section
  bad("[problem]\ntype = heat\n");          // unknown problem type
  bad("[problem]\nflavor = hot\n");         // unknown key
  bad(base + "[mesh]\ncap = 3\n");          // unknown key in mesh
  bad(base + "[bound]\nmode = magic\n");    // unknown mode
  bad("[problem]\ntype = steklov\ndomain = square\n[mesh]\nh_max = fast\n");
  bad("[problem]\ntype = steklov\ndomain = square\n[mesh]\nn = 8\nh_max = 0.1\n"
      "[discretization]\np = 2\nn = 1\n");  // square: n and h_max conflict
  bad("[problem]\ntype = steklov\ndomain = square\n[mesh]\ngraded = true\n"
      "[discretization]\np = 2\nn = 1\n");  // square has no re-entrant corner
  bad("[problem]\ntype = steklov\ndomain = lshape\n[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n");  // n is square-only
  bad("[problem]\ntype = steklov\ndomain = lshape\n"
      "[discretization]\np = 2\nn = 1\n");  // missing h_max
  bad("[problem]\ntype = steklov\ndomain = square\npolygon = d.poly\n"
      "[mesh]\nn = 8\n[discretization]\np = 2\nn = 1\n");
  bad(base + "[discretization]\np = 4\nn = 1\n");
  bad(base + "[discretization]\np = 2\nn = -1\n");
  bad(base + "[discretization]\np = 2\nn = 3\nm = 2\n");  // m below n
  bad(base + "[bound]\nrho = 1.45\n");      // explicit rho needs rho_ack
  bad(base + "[bound]\nrho = -1\nrho_ack = true\n");
  bad(base + "[bound]\nmode = verified-shift\nlambda_hat = 1\n");  // steklov
  bad(base + "[bound]\nlambda_hat = 1\n");  // plain verified mode, steklov
  bad("[problem]\ntype = laplacian\ndomain = square\n[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n"
      "[bound]\nmode = verified\nlambda_hat = 1\n");  // shift without mode
  bad("[problem]\ntype = laplacian\ndomain = square\n[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n"
      "[bound]\nmode = verified-shift\n");  // shift mode without magnitude

  // Line numbers appear in the message.
  try {
    parse_config_text("[problem]\ntype = steklov\nflavor = hot\n");
    FAIL("expected a parse error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("directed nine digit formatting stays outward", "[report]") {
  // Hand-checked cases around the rounding boundary of pi.
  CHECK(format_sig(kPi, 9, 0) == "3.14159265");
  CHECK(format_sig(kPi, 9, -1) == "3.14159265");
  CHECK(format_sig(kPi, 9, +1) == "3.14159266");
  // The double 0.1 sits a hair above the decimal literal 0.1.
  CHECK(format_sig(0.1, 9, -1) == "0.1");
  CHECK(format_sig(0.1, 9, +1) == "0.100000001");
  // Exactly representable values never get widened.
  CHECK(format_sig(1.25, 9, -1) == "1.25");
  CHECK(format_sig(1.25, 9, +1) == "1.25");
  CHECK(format_sig(0.0, 9, -1) == "0");
  CHECK(format_sig(-0.5, 9, -1) == "-0.5");
  CHECK(format_sig(-0.5, 9, +1) == "-0.5");
  // Negative values mirror the positive adjustment.
  CHECK(format_sig(-kPi, 9, -1) == "-3.14159266");
  CHECK(format_sig(-kPi, 9, +1) == "-3.14159265");

  // Randomized check of the directional contract against strtod.
  std::mt19937_64 rng(2026);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-9, 9);
  for (int i = 0; i < 2000; ++i) {
    double v = mant(rng) * std::pow(10.0, expo(rng));
    std::string lo = format_sig(v, 9, -1);
    std::string hi = format_sig(v, 9, +1);
    double plo = std::strtod(lo.c_str(), nullptr);
    double phi = std::strtod(hi.c_str(), nullptr);
    CHECK(plo <= v);
    CHECK(phi >= v);
    CHECK(std::fabs(plo - v) <= 2e-8 * std::fabs(v) + 1e-300);
    CHECK(std::fabs(phi - v) <= 2e-8 * std::fabs(v) + 1e-300);
    // Reprinting a parsed literal stays on the same side and drifts at
    // most one decimal ulp outward, because the literal may sit a hair
    // off the double it parses to.
    double plo2 = std::strtod(format_sig(plo, 9, -1).c_str(), nullptr);
    double phi2 = std::strtod(format_sig(phi, 9, +1).c_str(), nullptr);
    CHECK(plo2 <= plo);
    CHECK(phi2 >= phi);
    CHECK(std::fabs(plo2 - plo) <= 2e-8 * std::fabs(plo) + 1e-300);
    CHECK(std::fabs(phi2 - phi) <= 2e-8 * std::fabs(phi) + 1e-300);
  }
}

TEST_CASE("three digit downward rounding for the separation policy", "[report]") {
  CHECK(round_down_sig(2.08999, 3) == Catch::Approx(2.08).epsilon(1e-12));
  CHECK(round_down_sig(74.19986, 3) == Catch::Approx(74.1).epsilon(1e-12));
  CHECK(round_down_sig(0.2400790854, 3) == Catch::Approx(0.24).epsilon(1e-12));
  CHECK(round_down_sig(1.0, 3) == 1.0);
  CHECK(round_down_sig(0.999, 3) == Catch::Approx(0.999).epsilon(1e-12));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 100.0);
  for (int i = 0; i < 500; ++i) {
    double v = u(rng);
    double r = round_down_sig(v, 3);
    CHECK(r <= v);
    // One unit in the third significant digit is at most 1% of the value.
    CHECK(r >= v * (1.0 - 1e-2));
  }
}

TEST_CASE("csv emission round trips through the parser", "[report]") {
  BoundsReport r;
  r.problem = "steklov";
  r.domain = "square";
  r.mode = "verified";
  r.p = 2;
  r.n = 3;
  r.m = 3;
  r.lambda_hat = 0.0;
  r.h_max = std::sqrt(2.0) / 32.0;
  r.elements = 2048;
  r.dofs = 4225;
  r.ch = 0.19;
  r.rho = 2.0;
  r.lambda_n = 1.4923032788;
  r.rows = {{1, 0.225, 0.2400790834999, 0.2400790854272274},
            {2, 1.2, nan_v(), 1.4923032456},
            {3, nan_v(), nan_v(), 2.0826470541}};

  std::string csv = emit_report(r, ReportFormat::csv);
  CHECK(csv.rfind("# eigbound report\n", 0) == 0);
  CHECK(csv.find("k,lower_stage1,lower_stage2,upper,gap\n") != std::string::npos);
  CHECK(csv.find("# problem=steklov domain=square mode=verified\n") !=
        std::string::npos);

  // Emission is deterministic.
  CHECK(emit_report(r, ReportFormat::csv) == csv);

  // Lower bounds print downward, upper bounds upward.
  BoundsReport q = parse_report_csv(csv);
  REQUIRE(q.rows.size() == 3);
  CHECK(q.problem == r.problem);
  CHECK(q.domain == r.domain);
  CHECK(q.mode == r.mode);
  CHECK(q.p == r.p);
  CHECK(q.n == r.n);
  CHECK(q.m == r.m);
  CHECK(q.elements == r.elements);
  CHECK(q.dofs == r.dofs);
  CHECK(q.feasible == r.feasible);
  for (int i = 0; i < 3; ++i) {
    CHECK(q.rows[i].k == i + 1);
    auto close_below = [](double printed, double original) {
      CHECK(printed <= original);
      CHECK(printed >= original - 2e-8 * std::fabs(original));
    };
    auto close_above = [](double printed, double original) {
      CHECK(printed >= original);
      CHECK(printed <= original + 2e-8 * std::fabs(original));
    };
    if (std::isnan(r.rows[i].lower_stage1))
      CHECK(std::isnan(q.rows[i].lower_stage1));
    else
      close_below(q.rows[i].lower_stage1, r.rows[i].lower_stage1);
    if (std::isnan(r.rows[i].lower_stage2))
      CHECK(std::isnan(q.rows[i].lower_stage2));
    else
      close_below(q.rows[i].lower_stage2, r.rows[i].lower_stage2);
    if (std::isnan(r.rows[i].upper))
      CHECK(std::isnan(q.rows[i].upper));
    else
      close_above(q.rows[i].upper, r.rows[i].upper);
  }

  // The gap column equals the difference of the printed endpoints.
  {
    std::istringstream in(csv);
    std::string line;
    bool seen_row1 = false;
    while (std::getline(in, line)) {
      if (line.rfind("1,", 0) != 0) continue;
      seen_row1 = true;
      std::vector<std::string> cells;
      std::string cell;
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      REQUIRE(cells.size() == 5);
      double lo2 = std::strtod(cells[2].c_str(), nullptr);
      double up = std::strtod(cells[3].c_str(), nullptr);
      double gap = std::strtod(cells[4].c_str(), nullptr);
      CHECK(gap >= 0.0);
      // The gap column is the 9-digit rounding of the printed endpoint
      // difference.
      CHECK(gap == Catch::Approx(up - lo2).epsilon(1e-7));
    }
    CHECK(seen_row1);
  }

  // A parsed report emits the same shape again (values may widen by at most
  // one decimal unit in the last place, never inward).
  std::string csv2 = emit_report(q, ReportFormat::csv);
  BoundsReport q2 = parse_report_csv(csv2);
  for (int i = 0; i < 3; ++i) {
    if (!std::isnan(q.rows[i].lower_stage2))
      CHECK(q2.rows[i].lower_stage2 <= q.rows[i].lower_stage2);
    if (!std::isnan(q.rows[i].upper)) CHECK(q2.rows[i].upper >= q.rows[i].upper);
  }

  // Header-only output for an empty report.
  BoundsReport empty = r;
  empty.rows.clear();
  std::string ecsv = emit_report(empty, ReportFormat::csv);
  CHECK(ecsv.find("k,lower_stage1,lower_stage2,upper,gap\n") != std::string::npos);
  CHECK(ecsv.substr(ecsv.size() - std::string("k,lower_stage1,lower_stage2,upper,gap\n").size()) ==
        "k,lower_stage1,lower_stage2,upper,gap\n");
}

TEST_CASE("markdown table carries the bound gap column", "[report]") {
  BoundsReport r;
  r.problem = "laplacian";
  r.domain = "square";
  r.mode = "float";
  r.p = 1;
  r.n = 1;
  r.m = 1;
  r.h_max = 0.25;
  r.elements = 32;
  r.dofs = 9;
  r.ch = 0.07;
  r.rho = 45.0;
  r.lambda_n = 20.1;
  r.rows = {{1, 18.9, 19.7, 20.1}};
  std::string md = emit_report(r, ReportFormat::markdown);
  CHECK(md.find("| k | Stage-1 lower | Stage-2 lower | Upper | Bound gap |") !=
        std::string::npos);
  CHECK(md.find("- feasible: yes") != std::string::npos);
  CHECK(md.find("| 1 |") != std::string::npos);
  CHECK(emit_report(r, ReportFormat::markdown) == md);

  r.feasible = false;
  r.diagnostic = "separation failed";
  std::string md2 = emit_report(r, ReportFormat::markdown);
  CHECK(md2.find("- feasible: no") != std::string::npos);
  CHECK(md2.find("separation failed") != std::string::npos);
}

TEST_CASE("reference data resolves by path and environment", "[report]") {
  std::string path = repo_path("data/reference_eigenvalues.txt");
  std::vector<ReferenceEntry> refs = load_reference_file(path);
  REQUIRE(refs.size() >= 9);

  double s1 = reference_value(refs, "steklov", "square", 1);
  CHECK(s1 == Catch::Approx(kSteklovSquare[0]).epsilon(1e-15));
  double s4 = reference_value(refs, "steklov", "square", 4);
  CHECK(s4 == Catch::Approx(kSteklovSquare[3]).epsilon(1e-15));
  double l4 = reference_value(refs, "laplacian", "square", 4);
  CHECK(l4 == Catch::Approx(8.0 * kPi * kPi).epsilon(1e-13));
  CHECK(std::isnan(reference_value(refs, "steklov", "square", 99)));

  for (const auto& e : refs) {
    CHECK((e.provenance == "published" || e.provenance == "analytic"));
    if (e.problem == "laplacian" && e.domain == "square")
      CHECK(e.provenance == "analytic");
  }

  // Environment-based resolution finds the same table.
  ::setenv("EIGBOUND_DATA", repo_path("data").c_str(), 1);
  std::vector<ReferenceEntry> env_refs = load_reference_values();
  ::unsetenv("EIGBOUND_DATA");
  CHECK(env_refs.size() == refs.size());

  CHECK_THROWS_AS(load_reference_file(repo_path("data/missing.txt")),
                  std::invalid_argument);
  auto dir = scratch_dir();
  write_file(dir / "broken_refs.txt", "steklov square one 0.24 published\n");
  CHECK_THROWS_AS(load_reference_file((dir / "broken_refs.txt").string()),
                  std::invalid_argument);
}

TEST_CASE("template meshes build from the config", "[cli]") {
  ProblemConfig c;
  c.problem = ProblemType::steklov;
  c.domain = DomainKind::lshape;
  c.mesh_h = 0.2;
  Mesh plain = build_mesh(c);
  CHECK(plain.total_area() == Catch::Approx(3.0).epsilon(1e-12));
  CHECK(plain.h_max <= 0.2 * std::sqrt(2.0) + 1e-12);

  c.graded = true;
  Mesh graded = build_mesh(c);
  CHECK(graded.total_area() == Catch::Approx(3.0).epsilon(1e-12));
  CHECK(graded.n_tris() > plain.n_tris());

  ProblemConfig sq;
  sq.domain = DomainKind::square;
  sq.mesh_n = 4;
  CHECK(build_mesh(sq).n_tris() == 32);
}

TEST_CASE("square boundary problem certified through the pipeline", "[cli]") {
  ProblemConfig c = parse_config_text(square_steklov_cfg(
      8, 2, 1, 1, "rho = 1.45\nrho_ack = true\n", "verified"));
  BoundsReport r = run_problem(c);
  REQUIRE(r.feasible);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rho == 1.45);
  CHECK(r.mode == "verified");
  CHECK(r.h_max == Catch::Approx(std::sqrt(2.0) / 8.0).epsilon(1e-12));
  CHECK(r.elements == 128);

  // Published benchmark endpoints for this configuration.
  CHECK(r.rows[0].lower_stage2 >= 0.240079083);
  CHECK(r.rows[0].lower_stage2 <= kSteklovSquare[0]);
  CHECK(r.rows[0].upper >= kSteklovSquare[0]);
  CHECK(r.rows[0].upper <= 0.240079091);
  CHECK(r.rows[0].lower_stage1 > 0.0);
  CHECK(r.rows[0].lower_stage1 < r.rows[0].lower_stage2);
  CHECK(r.ch > 0.0);
  CHECK(r.lambda_n <= 0.240079091);
}

TEST_CASE("auto separation bound rounds the rough stage down", "[cli]") {
  ProblemConfig c = parse_config_text(
      square_steklov_cfg(8, 1, 1, 1, "rho = auto\n", "verified"));
  BoundsReport r = run_problem(c);
  REQUIRE(r.feasible);

  Stage1Options s1o;
  s1o.k = 2;
  Stage1Result s1 = stage1_steklov(uniform_square(8), s1o);
  double expect = std::min(round_down_sig(s1.lower[1], 3), s1.lower[1]);
  CHECK(r.rho == expect);
  CHECK(r.rows[0].lower_stage2 <= kSteklovSquare[0]);
  CHECK(r.rows[0].upper >= kSteklovSquare[0]);
  CHECK(r.rows[0].lower_stage1 ==
        Catch::Approx(s1.lower[0]).epsilon(1e-12));
}

TEST_CASE("dirichlet run with shift certifies the analytic value", "[cli]") {
  std::string text =
      "[problem]\ntype = laplacian\ndomain = square\n"
      "[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 1\n"
      "[bound]\nmode = verified-shift(1.0)\n";
  ProblemConfig c = parse_config_text(text);
  BoundsReport r = run_problem(c);
  REQUIRE(r.feasible);
  REQUIRE(r.rows.size() == 1);
  double truth = 2.0 * kPi * kPi;
  CHECK(r.mode == "verified-shift");
  CHECK(r.lambda_hat == 1.0);
  CHECK(r.rows[0].lower_stage2 <= truth);
  CHECK(r.rows[0].lower_stage2 >= 0.999 * truth);
  CHECK(r.rows[0].upper >= truth);
  CHECK(r.rows[0].upper <= 1.001 * truth);
  CHECK(r.rows[0].lower_stage1 > 0.0);
  CHECK(r.rows[0].lower_stage1 < r.rows[0].lower_stage2);
}

TEST_CASE("float mode is deterministic and tracks verified mode", "[cli]") {
  ProblemConfig cf = parse_config_text(square_steklov_cfg(
      8, 2, 3, 3, "rho = 2.0\nrho_ack = true\n", "float"));
  BoundsReport a = run_problem(cf);
  BoundsReport b = run_problem(cf);
  CHECK(emit_report(a, ReportFormat::csv) == emit_report(b, ReportFormat::csv));

  ProblemConfig cv = cf;
  cv.mode = RunMode::verified;
  BoundsReport v = run_problem(cv);
  REQUIRE(a.feasible);
  REQUIRE(v.feasible);
  REQUIRE(a.rows.size() == 3);
  REQUIRE(v.rows.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::fabs(a.rows[i].lower_stage2 - v.rows[i].lower_stage2) <=
          1e-6 * std::fabs(v.rows[i].lower_stage2));
    CHECK(std::fabs(a.rows[i].upper - v.rows[i].upper) <=
          1e-6 * std::fabs(v.rows[i].upper));
    CHECK(v.rows[i].lower_stage2 <= kSteklovSquare[i]);
    CHECK(v.rows[i].upper >= kSteklovSquare[i]);
  }
}

TEST_CASE("infeasible separation names the violated inequality", "[cli]") {
  ProblemConfig c = parse_config_text(square_steklov_cfg(
      8, 2, 3, 3, "rho = 1.4\nrho_ack = true\n", "float"));
  BoundsReport r = run_problem(c);
  CHECK_FALSE(r.feasible);
  CHECK(r.diagnostic.find("Lambda_n < rho") != std::string::npos);
  CHECK(r.diagnostic.find("refine") != std::string::npos);
  REQUIRE(r.rows.size() == 3);
  // Upper bounds and the rough stage survive an infeasible sharp stage.
  for (int i = 0; i < 3; ++i) {
    CHECK(std::isnan(r.rows[i].lower_stage2));
    CHECK(r.rows[i].upper >= kSteklovSquare[i] * (1.0 - 1e-9));
    CHECK(r.rows[i].lower_stage1 > 0.0);
  }
}

TEST_CASE("upper bounds only when no cluster is requested", "[cli]") {
  ProblemConfig c = parse_config_text(
      "[problem]\ntype = steklov\ndomain = square\n"
      "[mesh]\nn = 8\n"
      "[discretization]\np = 2\nn = 0\nm = 2\n"
      "[bound]\nmode = verified\n");
  BoundsReport r = run_problem(c);
  REQUIRE(r.feasible);
  REQUIRE(r.rows.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::isnan(r.rows[i].lower_stage1));
    CHECK(std::isnan(r.rows[i].lower_stage2));
    CHECK(r.rows[i].upper >= kSteklovSquare[i] * (1.0 - 1e-12));
    CHECK(r.rows[i].upper <= kSteklovSquare[i] * 1.01);
  }
  CHECK(std::isnan(r.rho));

  ProblemConfig c0 = c;
  c0.m = 0;
  c0.n = 0;
  BoundsReport r0 = run_problem(c0);
  CHECK(r0.rows.empty());
  std::string csv = emit_report(r0, ReportFormat::csv);
  CHECK(csv.find("k,lower_stage1,lower_stage2,upper,gap\n") != std::string::npos);
}

TEST_CASE("space pairing errors surface as configuration errors", "[cli]") {
  // Boundary traces of the cubic conforming family exceed the flux family.
  ProblemConfig s3 = parse_config_text(
      square_steklov_cfg(4, 3, 1, 1, "rho = 1.4\nrho_ack = true\n", "verified"));
  CHECK_THROWS_AS(run_problem(s3), std::invalid_argument);

  // The plain verified laplacian route needs matching flux degree.
  ProblemConfig l3 = parse_config_text(
      "[problem]\ntype = laplacian\ndomain = square\n"
      "[mesh]\nn = 4\n"
      "[discretization]\np = 3\nn = 1\n"
      "[bound]\nmode = verified\n");
  CHECK_THROWS_AS(run_problem(l3), std::invalid_argument);

  // The shifted route accepts the cubic trials.
  ProblemConfig ok = parse_config_text(
      "[problem]\ntype = laplacian\ndomain = square\n"
      "[mesh]\nn = 4\n"
      "[discretization]\np = 3\nn = 1\n"
      "[bound]\nmode = verified-shift(1.0)\n");
  BoundsReport r = run_problem(ok);
  REQUIRE(r.feasible);
  double truth = 2.0 * kPi * kPi;
  CHECK(r.rows[0].lower_stage2 <= truth);
  CHECK(r.rows[0].lower_stage2 >= 0.999 * truth);
  CHECK(r.rows[0].upper >= truth);
}

TEST_CASE("convergence study fits the expected slopes", "[cli]") {
  ProblemConfig c = parse_config_text(square_steklov_cfg(
      8, 1, 1, 1, std::string("rho = auto\n[output]\nreference = ") +
                      repo_path("data/reference_eigenvalues.txt") + "\n",
      "float"));
  ConvergeReport cr = run_converge(c, {4.0, 8.0, 16.0});
  REQUIRE(cr.rows.size() == 3);
  for (int l = 0; l < 3; ++l) {
    const ConvergeRow& row = cr.rows[l];
    CHECK(row.level == l + 1);
    CHECK(row.h_max ==
          Catch::Approx(std::sqrt(2.0) / (4 << l)).epsilon(1e-12));
    CHECK(row.k == 1);
    CHECK(row.reference == Catch::Approx(kSteklovSquare[0]).epsilon(1e-15));
    CHECK(row.err_stage1 > 0.0);
    CHECK(row.err_stage2 > 0.0);
    CHECK(row.err_upper > 0.0);
    CHECK(row.err_stage2 < row.err_stage1);
  }
  auto slope_of = [&](const std::string& family) {
    for (const SlopeRecord& s : cr.slopes)
      if (s.k == 1 && s.family == family) return s.slope;
    FAIL("missing slope for " + family);
    return 0.0;
  };
  CHECK(slope_of("lower_stage1") > 0.5);
  CHECK(slope_of("lower_stage1") < 1.5);
  CHECK(slope_of("lower_stage2") > 1.4);
  CHECK(slope_of("lower_stage2") < 2.7);
  CHECK(slope_of("upper") > 1.4);
  CHECK(slope_of("upper") < 2.7);

  std::string csv = emit_converge_csv(cr);
  CHECK(csv.rfind("# eigbound convergence\n", 0) == 0);
  CHECK(csv.find("level,h_max,dofs,k,lower_stage1,lower_stage2,upper,reference,"
                 "err_stage1,err_stage2,err_upper\n") != std::string::npos);
  CHECK(csv.find("# slope k=1 ") != std::string::npos);
  CHECK(emit_converge_csv(cr) == csv);

  CHECK_THROWS_AS(run_converge(c, {8.0}), std::invalid_argument);
}

TEST_CASE("command line drives runs end to end", "[cli]") {
  auto dir = scratch_dir();
  std::string refs = repo_path("data/reference_eigenvalues.txt");

  // A feasible float run writes a parseable, reproducible report.
  write_file(dir / "run.cfg", square_steklov_cfg(
      8, 2, 1, 1, "rho = 1.45\nrho_ack = true\n", "float"));
  std::string out1 = (dir / "out1.csv").string();
  std::string out2 = (dir / "out2.csv").string();
  REQUIRE(run_cli("run " + (dir / "run.cfg").string() + " --out " + out1) == 0);
  REQUIRE(run_cli("run " + (dir / "run.cfg").string() + " --out " + out2) == 0);
  std::string text1 = read_file(out1);
  CHECK(text1 == read_file(out2));
  BoundsReport rep = parse_report_csv(text1);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].lower_stage2 == Catch::Approx(0.240079083).margin(5e-8));
  CHECK(rep.rows[0].upper == Catch::Approx(0.240079091).margin(5e-8));

  // Markdown output by extension.
  std::string md_out = (dir / "out.md").string();
  REQUIRE(run_cli("run " + (dir / "run.cfg").string() + " --out " + md_out) == 0);
  CHECK(read_file(md_out).find("| k | Stage-1 lower |") != std::string::npos);

  // Infeasible separation exits with code 2 but still writes the report.
  write_file(dir / "infeasible.cfg", square_steklov_cfg(
      8, 2, 3, 3, "rho = 1.4\nrho_ack = true\n", "float"));
  std::string out3 = (dir / "out3.csv").string();
  CHECK(run_cli("run " + (dir / "infeasible.cfg").string() + " --out " + out3) == 2);
  BoundsReport bad = parse_report_csv(read_file(out3));
  CHECK_FALSE(bad.feasible);

  // Config and usage failures exit with code 3.
  write_file(dir / "broken.cfg", "[problem]\ntype = heat\n");
  CHECK(run_cli("run " + (dir / "broken.cfg").string()) == 3);
  CHECK(run_cli("run " + (dir / "does_not_exist.cfg").string()) == 3);
  CHECK(run_cli("frobnicate") != 0);

  // Mesh export writes the documented text format.
  write_file(dir / "mesh.cfg",
             "[problem]\ntype = steklov\ndomain = square\n"
             "[mesh]\nn = 4\n[discretization]\np = 1\nn = 1\n");
  std::string mesh_out = (dir / "mesh.txt").string();
  REQUIRE(run_cli("mesh " + (dir / "mesh.cfg").string() + " --out " + mesh_out) == 0);
  Mesh loaded = load_mesh_text(mesh_out);
  CHECK(loaded.n_tris() == 32);

  // Convergence series over two levels.
  write_file(dir / "conv.cfg", square_steklov_cfg(
      4, 1, 1, 1, std::string("rho = auto\n[output]\nreference = ") + refs + "\n",
      "float"));
  std::string conv_out = (dir / "conv.csv").string();
  REQUIRE(run_cli("converge " + (dir / "conv.cfg").string() +
                  " --levels 4,8 --out " + conv_out) == 0);
  std::string conv_text = read_file(conv_out);
  CHECK(conv_text.rfind("# eigbound convergence\n", 0) == 0);
  CHECK(conv_text.find("# slope k=1 ") != std::string::npos);
}
