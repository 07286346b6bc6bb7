#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eigbound/cli.hpp"
#include "eigbound/exact.hpp"
#include "eigbound/fem.hpp"
#include "eigbound/stage1.hpp"
#include "eigbound/stage2.hpp"
#include "eigbound/verify.hpp"

namespace eigbound {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void trim(std::string& s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && issp(s[b])) ++b;
  s.erase(0, b);
}

double parse_double_str(const std::string& s, bool ok_only_finite = true) {
  const char* c = s.c_str();
  char* end = nullptr;
  double v = std::strtod(c, &end);
  if (end == c || *end != '\0' || (ok_only_finite && !std::isfinite(v)))
    throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

long parse_int_str(const std::string& s) {
  const char* c = s.c_str();
  char* end = nullptr;
  long v = std::strtol(c, &end, 10);
  if (end == c || *end != '\0')
    throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

bool parse_bool_str(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

// Decimal mantissa/exponent decomposition of a double at the given number
// of significant digits, via the C library's correctly rounded conversion.
struct Dec {
  bool neg = false;
  long long mant = 0;  // in [10^(digits-1), 10^digits - 1], or 0 for zero
  int e10 = 0;         // exponent of the leading digit
};

Dec decompose(double v, int digits) {
  Dec d;
  if (v == 0.0) return d;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
  const char* s = buf;
  if (*s == '-') {
    d.neg = true;
    ++s;
  } else if (*s == '+') {
    ++s;
  }
  d.mant = *s - '0';
  ++s;
  if (*s == '.') {
    ++s;
    for (int i = 0; i < digits - 1; ++i) {
      d.mant = d.mant * 10 + (*s - '0');
      ++s;
    }
  }
  if (*s != 'e' && *s != 'E') throw std::logic_error("unexpected float format");
  ++s;
  int esign = 1;
  if (*s == '+') {
    ++s;
  } else if (*s == '-') {
    esign = -1;
    ++s;
  }
  int e = 0;
  for (; *s; ++s) e = e * 10 + (*s - '0');
  d.e10 = esign * e;
  return d;
}

__int128 pow10_128(int k) {
  __int128 r = 1;
  for (int i = 0; i < k; ++i) r *= 10;
  return r;
}

long long pow10_ll(int k) {
  long long r = 1;
  for (int i = 0; i < k; ++i) r *= 10;
  return r;
}

double rebuild(const Dec& d, int digits) {
  std::string ms = std::to_string(d.mant);
  std::string s = d.neg ? "-" : "";
  s += ms.substr(0, 1);
  if (digits > 1) s += "." + ms.substr(1);
  s += "e" + std::to_string(d.e10);
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace

std::string format_sig(double v, int digits, int dir) {
  digits = std::max(1, std::min(17, digits));
  char buf[64];
  if (!std::isfinite(v)) {
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  if (dir == 0 || v == 0.0) return buf;
  const long long lo_m = pow10_ll(digits - 1), hi_m = pow10_ll(digits) - 1;
  for (int iter = 0; iter < 3; ++iter) {
    double back = std::strtod(buf, nullptr);
    Dec d = decompose(back, digits);
    int side;
    if (d.mant == 0) {
      side = (0.0 > v) - (0.0 < v);
    } else {
      int p10 = d.e10 - digits + 1;
      if (p10 > 18 || p10 < -18) {
        side = (back > v) - (back < v);
      } else {
        Rat g(d.neg ? -(__int128)d.mant : (__int128)d.mant);
        if (p10 >= 0)
          g = g * Rat(pow10_128(p10));
        else
          g = g / Rat(pow10_128(-p10));
        side = g.compare(v);
      }
    }
    if (side == 0 || side == dir) return buf;
    // Step the decimal grid point one unit in the last place toward dir.
    bool inc_mag = (dir > 0) != d.neg;
    if (inc_mag) {
      if (d.mant >= hi_m) {
        d.mant = lo_m;
        ++d.e10;
      } else {
        ++d.mant;
      }
    } else {
      if (d.mant <= lo_m) {
        d.mant = hi_m;
        --d.e10;
      } else {
        --d.mant;
      }
    }
    std::snprintf(buf, sizeof buf, "%.*g", digits, rebuild(d, digits));
  }
  throw std::logic_error("directed decimal formatting did not settle");
}

double round_down_sig(double v, int digits) {
  if (!std::isfinite(v) || v == 0.0) return v;
  digits = std::max(1, std::min(17, digits));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  double r = std::strtod(buf, nullptr);
  if (r <= v) return r;
  // The nearest grid value parses above v, so step one decimal unit down.
  Dec d = decompose(r, digits);
  const long long lo_m = pow10_ll(digits - 1), hi_m = pow10_ll(digits) - 1;
  if (d.neg) {
    if (d.mant >= hi_m) {
      d.mant = lo_m;
      ++d.e10;
    } else {
      ++d.mant;
    }
  } else {
    if (d.mant <= lo_m) {
      d.mant = hi_m;
      --d.e10;
    } else {
      --d.mant;
    }
  }
  return std::min(rebuild(d, digits), v);
}

std::string problem_name(ProblemType p) {
  return p == ProblemType::laplacian ? "laplacian" : "steklov";
}

std::string domain_name(DomainKind d) {
  switch (d) {
    case DomainKind::square:
      return "square";
    case DomainKind::lshape:
      return "lshape";
    default:
      return "dumbbell";
  }
}

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::floating:
      return "float";
    case RunMode::verified:
      return "verified";
    default:
      return "verified-shift";
  }
}

ProblemConfig parse_config_text(const std::string& text) {
  ProblemConfig c;
  std::istringstream in(text);
  std::string raw, section;
  int no = 0;
  bool saw_type = false, saw_domain = false, saw_p = false, saw_n = false;
  bool saw_poly = false, want_poly = false, saw_shift_mag = false;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("config line " + std::to_string(no) + ": " + msg);
  };
  auto fail_cfg = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };

  while (std::getline(in, raw)) {
    ++no;
    std::string s = raw;
    auto hash = s.find('#');
    if (hash != std::string::npos) s.erase(hash);
    trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("malformed section header");
      section = s.substr(1, s.size() - 2);
      trim(section);
      if (section != "problem" && section != "mesh" &&
          section != "discretization" && section != "bound" &&
          section != "output")
        fail("unknown section [" + section + "]");
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = s.substr(0, eq), val = s.substr(eq + 1);
    trim(key);
    trim(val);
    if (section.empty()) fail("key '" + key + "' before any section header");
    if (key.empty() || val.empty()) fail("expected key = value");

    try {
      if (section == "problem") {
        if (key == "type") {
          if (val == "laplacian")
            c.problem = ProblemType::laplacian;
          else if (val == "steklov")
            c.problem = ProblemType::steklov;
          else
            fail("unknown problem type '" + val + "'");
          saw_type = true;
        } else if (key == "domain") {
          if (val == "square")
            c.domain = DomainKind::square;
          else if (val == "lshape")
            c.domain = DomainKind::lshape;
          else if (val == "dumbbell")
            c.domain = DomainKind::dumbbell;
          else if (val == "polygon")
            want_poly = true;
          else
            fail("unknown domain '" + val + "'");
          saw_domain = true;
        } else if (key == "bar_width") {
          c.bar_width = parse_double_str(val);
          if (!(c.bar_width > 0.0 && c.bar_width < 1.0))
            fail("bar_width must lie in (0, 1)");
        } else if (key == "polygon") {
          c.polygon_file = val;
          saw_poly = true;
        } else {
          fail("unknown key '" + key + "' in section [problem]");
        }
      } else if (section == "mesh") {
        if (key == "n") {
          long v = parse_int_str(val);
          if (v < 1) fail("mesh n must be positive");
          c.mesh_n = (int)v;
        } else if (key == "h_max") {
          c.mesh_h = parse_double_str(val);
          if (!(c.mesh_h > 0.0)) fail("h_max must be positive");
        } else if (key == "graded") {
          c.graded = parse_bool_str(val);
        } else if (key == "grading_exponent") {
          c.grading_exponent = parse_double_str(val);
          if (!(c.grading_exponent > 0.0 && c.grading_exponent <= 1.0))
            fail("grading_exponent must lie in (0, 1]");
        } else if (key == "grading_cutoff") {
          c.grading_cutoff = parse_double_str(val);
          if (!(c.grading_cutoff > 0.0)) fail("grading_cutoff must be positive");
        } else {
          fail("unknown key '" + key + "' in section [mesh]");
        }
      } else if (section == "discretization") {
        if (key == "p") {
          long v = parse_int_str(val);
          if (v < 1 || v > 3) fail("p must be 1, 2 or 3");
          c.p = (int)v;
          saw_p = true;
        } else if (key == "n") {
          long v = parse_int_str(val);
          if (v < 0) fail("n must be nonnegative");
          c.n = (int)v;
          saw_n = true;
        } else if (key == "m") {
          long v = parse_int_str(val);
          if (v < 0) fail("m must be nonnegative");
          c.m = (int)v;
        } else {
          fail("unknown key '" + key + "' in section [discretization]");
        }
      } else if (section == "bound") {
        if (key == "mode") {
          if (val == "float") {
            c.mode = RunMode::floating;
          } else if (val == "verified") {
            c.mode = RunMode::verified;
          } else if (val == "verified-shift") {
            c.mode = RunMode::verified_shift;
          } else if (val.rfind("verified-shift(", 0) == 0 && val.back() == ')') {
            c.mode = RunMode::verified_shift;
            std::string inner = val.substr(15, val.size() - 16);
            c.lambda_hat = parse_double_str(inner);
            if (!(c.lambda_hat > 0.0)) fail("the shift must be positive");
            saw_shift_mag = true;
          } else {
            fail("unknown mode '" + val + "'");
          }
        } else if (key == "lambda_hat") {
          c.lambda_hat = parse_double_str(val);
          if (c.lambda_hat < 0.0) fail("lambda_hat must be nonnegative");
          saw_shift_mag = c.lambda_hat > 0.0;
        } else if (key == "rho") {
          if (val == "auto") {
            c.rho_auto = true;
            c.rho = 0.0;
          } else {
            c.rho = parse_double_str(val);
            if (!(c.rho > 0.0)) fail("rho must be positive or auto");
            c.rho_auto = false;
          }
        } else if (key == "rho_ack") {
          c.rho_ack = parse_bool_str(val);
        } else {
          fail("unknown key '" + key + "' in section [bound]");
        }
      } else {  // output
        if (key == "file") {
          c.output_file = val;
        } else if (key == "reference") {
          c.reference_file = val;
        } else {
          fail("unknown key '" + key + "' in section [output]");
        }
      }
    } catch (const std::invalid_argument& e) {
      std::string w = e.what();
      if (w.rfind("config line", 0) == 0) throw;
      fail(w);
    }
  }

  if (!saw_type) fail_cfg("missing key 'type' in section [problem]");
  if (!saw_domain) fail_cfg("missing key 'domain' in section [problem]");
  if (!saw_p) fail_cfg("missing key 'p' in section [discretization]");
  if (!saw_n) fail_cfg("missing key 'n' in section [discretization]");
  if (want_poly != saw_poly)
    fail_cfg("a polygon file requires domain = polygon and vice versa");
  if (want_poly) c.domain = DomainKind::square;  // placeholder, file wins
  if (!want_poly && c.domain == DomainKind::square) {
    if ((c.mesh_n > 0) == (c.mesh_h > 0.0))
      fail_cfg("the square mesh takes exactly one of n and h_max");
  } else {
    if (c.mesh_n > 0) fail_cfg("mesh n applies to the square domain only");
    if (!(c.mesh_h > 0.0)) fail_cfg("missing key 'h_max' in section [mesh]");
  }
  if (c.graded) {
    if (want_poly || c.domain == DomainKind::square)
      fail_cfg("grading requires a domain with re-entrant corners");
  }
  if (c.m > 0 && c.m < c.n) fail_cfg("m must be at least n");
  if (!c.rho_auto && !c.rho_ack)
    fail_cfg(
        "an explicit rho requires rho_ack = true; rigor then rests on the "
        "user-supplied separation rho <= lambda_{m+1}");
  if (c.mode == RunMode::verified_shift && !saw_shift_mag)
    fail_cfg("verified-shift needs a positive lambda_hat");
  if (c.lambda_hat > 0.0) {
    if (c.problem == ProblemType::steklov)
      fail_cfg("the boundary-weight problem has no shifted route");
    if (c.mode == RunMode::verified)
      fail_cfg("lambda_hat requires mode verified-shift or float");
  }
  return c;
}

ProblemConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

Mesh build_mesh(const ProblemConfig& cfg) {
  if (!cfg.polygon_file.empty()) {
    std::vector<Vec2> poly = load_polygon_text(cfg.polygon_file);
    return triangulate_rectilinear(poly, cfg.mesh_h);
  }
  if (cfg.domain == DomainKind::square && cfg.mesh_n > 0)
    return uniform_square(cfg.mesh_n);
  std::vector<Vec2> poly = template_domain(cfg.domain, cfg.bar_width);
  Mesh m = triangulate_rectilinear(poly, cfg.mesh_h);
  if (cfg.graded) {
    SizeField f;
    f.corners = reentrant_corners(cfg.domain, cfg.bar_width);
    f.exponent = cfg.grading_exponent;
    f.h_max = cfg.mesh_h;
    f.cutoff = cfg.grading_cutoff;
    m = refine_graded(m, f);
  }
  return m;
}

namespace {

Space trial_space_of(int p) {
  return p == 1 ? Space::cg1 : p == 2 ? Space::cg2 : Space::cg3;
}

Space flux_space_of(int p) { return p == 1 ? Space::rt1 : Space::rt2; }

SparseI dense_to_sparse(const DenseI& a) {
  std::vector<std::pair<std::pair<int, int>, Interval>> trips;
  trips.reserve((std::size_t)a.n * a.n);
  for (int i = 0; i < a.n; ++i)
    for (int j = 0; j < a.n; ++j)
      trips.push_back({{i, j}, a.a[(std::size_t)i * a.n + j]});
  return SparseI::from_triplets(a.n, a.n, std::move(trips));
}

// Rayleigh-Ritz upper bounds over an m-dimensional trial set, without any
// lower-bound machinery. The projected pencil eigenvalues dominate the
// discrete ones, which dominate the continuous ones.
void fill_upper_only(const Mesh& mesh, Space trial, int m, bool steklov,
                     bool verified, BoundsReport& r) {
  TrialBasis tb = steklov ? select_trials_steklov(mesh, trial, m)
                          : select_trials_laplacian(mesh, trial, m);
  if (!verified) {
    for (int k = 0; k < m; ++k) r.rows[k].upper = tb.ritz[k];
    return;
  }
  DenseI a0 = trial_gram(assemble_grad_grad_iv(mesh, tb.dm), tb);
  DenseI a1(m);
  if (steklov) {
    DenseI gm = trial_gram(assemble_mass_iv(mesh, tb.dm), tb);
    for (std::size_t i = 0; i < a0.a.size(); ++i) a0.a[i] = a0.a[i] + gm.a[i];
    a1 = trial_gram(assemble_boundary_mass_iv(mesh, tb.dm), tb);
  } else {
    a1 = trial_gram(assemble_mass_iv(mesh, tb.dm), tb);
  }
  std::vector<Interval> enc =
      pencil_enclosure(dense_to_sparse(a0), dense_to_sparse(a1), tb.ritz, {});
  for (int k = 0; k < m; ++k) r.rows[k].upper = enc[k].hi;
}

}  // namespace

BoundsReport run_problem(const ProblemConfig& cfg) {
  const bool steklov = cfg.problem == ProblemType::steklov;
  const int m = cfg.m > 0 ? cfg.m : cfg.n;
  BoundsReport r;
  r.problem = problem_name(cfg.problem);
  r.domain = cfg.polygon_file.empty() ? domain_name(cfg.domain) : "polygon";
  r.mode = mode_name(cfg.mode);
  r.p = cfg.p;
  r.n = cfg.n;
  r.m = m;
  r.lambda_hat = cfg.lambda_hat;
  r.ch = r.rho = r.lambda_n = kNaN;

  Mesh mesh = build_mesh(cfg);
  r.h_max = mesh.h_max;
  r.elements = mesh.n_tris();
  Space trial = trial_space_of(cfg.p);
  DofMap dm = build_dofmap(mesh, trial);
  r.dofs = steklov ? dm.n_dofs : count_interior(dm);

  if (m == 0) return r;
  r.rows.resize(m);
  for (int k = 0; k < m; ++k)
    r.rows[k] = {k + 1, kNaN, kNaN, kNaN};

  if (cfg.n == 0) {
    fill_upper_only(mesh, trial, m, steklov, cfg.mode != RunMode::floating, r);
    return r;
  }

  Stage1Options s1o;
  s1o.k = m + 1;
  Stage1Result s1 = steklov ? stage1_steklov(mesh, s1o) : stage1_laplacian(mesh, s1o);
  r.ch = s1.ch.hi;
  for (int k = 0; k < m; ++k) r.rows[k].lower_stage1 = s1.lower[k];

  double rho = cfg.rho_auto
                   ? std::min(round_down_sig(s1.lower[m], 3), s1.lower[m])
                   : cfg.rho;
  if (!(rho > 0.0)) {
    r.feasible = false;
    r.diagnostic =
        "the rough stage certified no positive separation bound at this "
        "resolution; refine the mesh";
    return r;
  }
  r.rho = rho;

  Stage2Options o;
  o.trial_space = trial;
  o.flux_space = flux_space_of(cfg.p);
  o.n_trials = cfg.n;
  o.m_index = m;
  o.rho = rho;
  o.lambda_hat = cfg.lambda_hat;
  o.verified = cfg.mode != RunMode::floating;
  Stage2Result s2 = steklov ? stage2_steklov(mesh, o) : stage2_laplacian(mesh, o);

  for (int k = 0; k < cfg.n && k < m; ++k) r.rows[k].upper = s2.upper[k].hi;
  r.lambda_n = s2.upper[cfg.n - 1].hi;
  r.feasible = s2.feasible;
  if (!s2.feasible) {
    std::string ln = format_sig(r.lambda_n, 9, 1);
    std::string rs = format_sig(rho, 9, 0);
    if (r.lambda_n >= rho) {
      r.diagnostic =
          "separation check failed: need lambda_{n,h} <= Lambda_n < rho <= "
          "lambda_{m+1}, but Lambda_n = " +
          ln + " does not lie below rho = " + rs +
          "; refine the mesh, lower n, or raise rho";
    } else {
      r.diagnostic =
          "the definiteness certificates of the bound kernel failed at rho = " +
          rs + "; refine the mesh or lower rho";
    }
    return r;
  }
  for (int k = 0; k < m; ++k)
    if (s2.lower_by_eig[k].has_value()) r.rows[k].lower_stage2 = s2.lower_by_eig[k]->lo;
  return r;
}

namespace {

std::string cell(double v, int dir) {
  return std::isnan(v) ? std::string() : format_sig(v, 9, dir);
}

std::string meta(double v, int dir) {
  return std::isnan(v) ? std::string("-") : format_sig(v, 9, dir);
}

const char* kRowHeader = "k,lower_stage1,lower_stage2,upper,gap";

std::string gap_cell(const std::string& lo, const std::string& up) {
  if (lo.empty() || up.empty()) return {};
  double g = std::strtod(up.c_str(), nullptr) - std::strtod(lo.c_str(), nullptr);
  return format_sig(g, 9, 0);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t b = 0;
  while (true) {
    std::size_t e = line.find(',', b);
    if (e == std::string::npos) {
      cells.push_back(line.substr(b));
      break;
    }
    cells.push_back(line.substr(b, e - b));
    b = e + 1;
  }
  return cells;
}

double cell_value(const std::string& s) {
  if (s.empty() || s == "-") return kNaN;
  return parse_double_str(s);
}

}  // namespace

std::string emit_report(const BoundsReport& r, ReportFormat f) {
  std::ostringstream o;
  if (f == ReportFormat::csv) {
    o << "# eigbound report\n";
    o << "# problem=" << r.problem << " domain=" << r.domain
      << " mode=" << r.mode << "\n";
    o << "# p=" << r.p << " n=" << r.n << " m=" << r.m
      << " lambda_hat=" << format_sig(r.lambda_hat, 9, 0) << "\n";
    o << "# h_max=" << meta(r.h_max, 0) << " elements=" << r.elements
      << " dofs=" << r.dofs << "\n";
    o << "# ch=" << meta(r.ch, 1) << " rho=" << meta(r.rho, 0)
      << " lambda_n=" << meta(r.lambda_n, 1)
      << " feasible=" << (r.feasible ? 1 : 0) << "\n";
    if (!r.feasible && !r.diagnostic.empty())
      o << "# diagnostic=" << r.diagnostic << "\n";
    o << kRowHeader << "\n";
    for (const BoundsRow& row : r.rows) {
      std::string lo1 = cell(row.lower_stage1, -1);
      std::string lo2 = cell(row.lower_stage2, -1);
      std::string up = cell(row.upper, 1);
      o << row.k << ',' << lo1 << ',' << lo2 << ',' << up << ','
        << gap_cell(lo2, up) << "\n";
    }
    return o.str();
  }

  auto md = [](const std::string& s) { return s.empty() ? std::string("-") : s; };
  o << "# Eigenvalue bounds\n\n";
  o << "- problem: " << r.problem << "\n";
  o << "- domain: " << r.domain << "\n";
  o << "- mode: " << r.mode << "\n";
  o << "- p: " << r.p << ", n: " << r.n << ", m: " << r.m
    << ", lambda_hat: " << format_sig(r.lambda_hat, 9, 0) << "\n";
  o << "- h_max: " << meta(r.h_max, 0) << ", elements: " << r.elements
    << ", dofs: " << r.dofs << "\n";
  o << "- C_h: " << meta(r.ch, 1) << ", rho: " << meta(r.rho, 0)
    << ", Lambda_n: " << meta(r.lambda_n, 1) << "\n";
  o << "- feasible: " << (r.feasible ? "yes" : "no") << "\n";
  if (!r.feasible && !r.diagnostic.empty())
    o << "- diagnostic: " << r.diagnostic << "\n";
  o << "\n| k | Stage-1 lower | Stage-2 lower | Upper | Bound gap |\n";
  o << "|--:|--:|--:|--:|--:|\n";
  for (const BoundsRow& row : r.rows) {
    std::string lo1 = cell(row.lower_stage1, -1);
    std::string lo2 = cell(row.lower_stage2, -1);
    std::string up = cell(row.upper, 1);
    o << "| " << row.k << " | " << md(lo1) << " | " << md(lo2) << " | "
      << md(up) << " | " << md(gap_cell(lo2, up)) << " |\n";
  }
  return o.str();
}

BoundsReport parse_report_csv(const std::string& text) {
  BoundsReport r;
  r.h_max = r.ch = r.rho = r.lambda_n = kNaN;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  bool magic = false, header = false;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("report line " + std::to_string(no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++no;
    if (no == 1) {
      if (line != "# eigbound report") fail("not an eigbound report");
      magic = true;
      continue;
    }
    if (line.rfind("# diagnostic=", 0) == 0) {
      r.diagnostic = line.substr(std::string("# diagnostic=").size());
      continue;
    }
    if (line.rfind("# ", 0) == 0) {
      std::istringstream ls(line.substr(2));
      std::string tok;
      while (ls >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) fail("malformed metadata token '" + tok + "'");
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "problem") r.problem = val;
        else if (key == "domain") r.domain = val;
        else if (key == "mode") r.mode = val;
        else if (key == "p") r.p = (int)parse_int_str(val);
        else if (key == "n") r.n = (int)parse_int_str(val);
        else if (key == "m") r.m = (int)parse_int_str(val);
        else if (key == "lambda_hat") r.lambda_hat = parse_double_str(val);
        else if (key == "h_max") r.h_max = cell_value(val);
        else if (key == "elements") r.elements = parse_int_str(val);
        else if (key == "dofs") r.dofs = parse_int_str(val);
        else if (key == "ch") r.ch = cell_value(val);
        else if (key == "rho") r.rho = cell_value(val);
        else if (key == "lambda_n") r.lambda_n = cell_value(val);
        else if (key == "feasible") r.feasible = parse_int_str(val) != 0;
        else fail("unknown metadata key '" + key + "'");
      }
      continue;
    }
    if (line == kRowHeader) {
      header = true;
      continue;
    }
    if (line.empty()) continue;
    if (!header) fail("data row before the column header");
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 5) fail("expected 5 columns");
    BoundsRow row;
    row.k = (int)parse_int_str(cells[0]);
    row.lower_stage1 = cell_value(cells[1]);
    row.lower_stage2 = cell_value(cells[2]);
    row.upper = cell_value(cells[3]);
    r.rows.push_back(row);
  }
  if (!magic || !header) throw std::invalid_argument("report: missing header");
  return r;
}

std::vector<ReferenceEntry> load_reference_file(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("cannot open reference file '" + path + "'");
  std::vector<ReferenceEntry> out;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    ReferenceEntry e;
    std::string kstr, vstr;
    if (!(ls >> e.problem >> e.domain >> kstr >> vstr >> e.provenance))
      throw std::invalid_argument("reference line " + std::to_string(no) +
                                  ": expected 'problem domain k value provenance'");
    std::string extra;
    if (ls >> extra)
      throw std::invalid_argument("reference line " + std::to_string(no) +
                                  ": trailing fields");
    try {
      e.k = (int)parse_int_str(kstr);
      e.value = parse_double_str(vstr);
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("reference line " + std::to_string(no) + ": " +
                                  ex.what());
    }
    out.push_back(e);
  }
  return out;
}

std::vector<ReferenceEntry> load_reference_values(const std::string& explicit_path) {
  if (!explicit_path.empty()) return load_reference_file(explicit_path);
  const char* env = std::getenv("EIGBOUND_DATA");
  if (env != nullptr) {
    std::filesystem::path p = std::filesystem::path(env) / "reference_eigenvalues.txt";
    if (std::filesystem::exists(p)) return load_reference_file(p.string());
  }
  std::filesystem::path local = "data/reference_eigenvalues.txt";
  if (std::filesystem::exists(local)) return load_reference_file(local.string());
  return {};
}

double reference_value(const std::vector<ReferenceEntry>& refs,
                       const std::string& problem, const std::string& domain,
                       int k) {
  for (const ReferenceEntry& e : refs)
    if (e.k == k && e.problem == problem && e.domain == domain) return e.value;
  return kNaN;
}

ConvergeReport run_converge(const ProblemConfig& cfg,
                            const std::vector<double>& levels) {
  if (levels.size() < 2)
    throw std::invalid_argument("a convergence study needs at least two levels");
  ConvergeReport out;
  out.problem = problem_name(cfg.problem);
  out.domain = cfg.polygon_file.empty() ? domain_name(cfg.domain) : "polygon";
  out.mode = mode_name(cfg.mode);
  out.p = cfg.p;
  out.n = cfg.n;
  out.m = cfg.m > 0 ? cfg.m : cfg.n;
  std::vector<ReferenceEntry> refs = load_reference_values(cfg.reference_file);

  for (std::size_t l = 0; l < levels.size(); ++l) {
    ProblemConfig c2 = cfg;
    c2.output_file.clear();
    if (cfg.mesh_n > 0) {
      long nn = std::lround(levels[l]);
      if (nn < 1 || std::fabs(levels[l] - (double)nn) > 1e-9)
        throw std::invalid_argument("level " + std::to_string(l + 1) +
                                    ": expected a per-side element count");
      c2.mesh_n = (int)nn;
    } else {
      if (!(levels[l] > 0.0))
        throw std::invalid_argument("level " + std::to_string(l + 1) +
                                    ": h_max must be positive");
      c2.mesh_h = levels[l];
    }
    BoundsReport rep = run_problem(c2);
    if (!rep.feasible)
      throw InfeasibleError("level " + std::to_string(l + 1) + ": " +
                            rep.diagnostic);
    for (const BoundsRow& row : rep.rows) {
      ConvergeRow cr;
      cr.level = (int)l + 1;
      cr.h_max = rep.h_max;
      cr.dofs = rep.dofs;
      cr.k = row.k;
      cr.lower_stage1 = row.lower_stage1;
      cr.lower_stage2 = row.lower_stage2;
      cr.upper = row.upper;
      cr.reference = reference_value(refs, out.problem, out.domain, row.k);
      cr.err_stage1 = cr.reference - row.lower_stage1;
      cr.err_stage2 = cr.reference - row.lower_stage2;
      cr.err_upper = row.upper - cr.reference;
      out.rows.push_back(cr);
    }
  }

  auto fit = [&](int k, const std::string& family) {
    std::vector<double> xs, ys;
    for (const ConvergeRow& row : out.rows) {
      if (row.k != k) continue;
      double err = family == "lower_stage1"   ? row.err_stage1
                   : family == "lower_stage2" ? row.err_stage2
                                              : row.err_upper;
      if (!(err > 0.0) || !std::isfinite(err)) continue;
      xs.push_back(std::log(row.h_max));
      ys.push_back(std::log(err));
    }
    if (xs.size() < 2) return;
    double xm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xm += xs[i];
      ym += ys[i];
    }
    xm /= (double)xs.size();
    ym /= (double)xs.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - xm) * (ys[i] - ym);
      sxx += (xs[i] - xm) * (xs[i] - xm);
    }
    if (sxx == 0.0) return;
    out.slopes.push_back({k, family, sxy / sxx});
  };
  for (int k = 1; k <= out.m; ++k) {
    fit(k, "lower_stage1");
    fit(k, "lower_stage2");
    fit(k, "upper");
  }
  return out;
}

std::string emit_converge_csv(const ConvergeReport& r) {
  std::ostringstream o;
  o << "# eigbound convergence\n";
  o << "# problem=" << r.problem << " domain=" << r.domain << " mode=" << r.mode
    << "\n";
  o << "# p=" << r.p << " n=" << r.n << " m=" << r.m << "\n";
  o << "level,h_max,dofs,k,lower_stage1,lower_stage2,upper,reference,"
       "err_stage1,err_stage2,err_upper\n";
  for (const ConvergeRow& row : r.rows) {
    o << row.level << ',' << format_sig(row.h_max, 9, 0) << ',' << row.dofs
      << ',' << row.k << ',' << cell(row.lower_stage1, -1) << ','
      << cell(row.lower_stage2, -1) << ',' << cell(row.upper, 1) << ','
      << cell(row.reference, 0) << ',' << cell(row.err_stage1, 0) << ','
      << cell(row.err_stage2, 0) << ',' << cell(row.err_upper, 0) << "\n";
  }
  int last_k = -1;
  for (const SlopeRecord& s : r.slopes) {
    if (s.k != last_k) {
      if (last_k != -1) o << "\n";
      o << "# slope k=" << s.k << " ";
      last_k = s.k;
    } else {
      o << " ";
    }
    o << s.family << "=" << format_sig(s.slope, 3, 0);
  }
  if (last_k != -1) o << "\n";
  return o.str();
}

}  // namespace eigbound
