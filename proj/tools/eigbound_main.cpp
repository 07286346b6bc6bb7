#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eigbound/cli.hpp"
#include "eigbound/mesh.hpp"

namespace {

using namespace eigbound;

ReportFormat format_of(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  return (ext == "md" || ext == "markdown") ? ReportFormat::markdown
                                            : ReportFormat::csv;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write to '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<double> parse_levels(const std::string& spec) {
  std::vector<double> out;
  std::istringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty())
      throw std::invalid_argument("empty entry in the level list");
    std::size_t used = 0;
    double v = std::stod(item, &used);
    if (used != item.size())
      throw std::invalid_argument("bad level '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("no levels given");
  return out;
}

int do_run(const std::string& config, const std::string& out_path) {
  ProblemConfig cfg = load_config_file(config);
  std::string target = out_path.empty() ? cfg.output_file : out_path;
  auto t0 = std::chrono::steady_clock::now();
  BoundsReport rep = run_problem(cfg);
  auto t1 = std::chrono::steady_clock::now();
  std::string text = emit_report(
      rep, target.empty() ? ReportFormat::csv : format_of(target));
  if (target.empty())
    std::cout << text;
  else
    write_text(target, text);
  double secs = std::chrono::duration<double>(t1 - t0).count();
  std::fprintf(stderr, "eigbound: %s %s run finished in %.2f s\n",
               rep.problem.c_str(), rep.domain.c_str(), secs);
  if (!rep.feasible) {
    std::fprintf(stderr, "eigbound: %s\n", rep.diagnostic.c_str());
    return 2;
  }
  return 0;
}

int do_converge(const std::string& config, const std::string& levels_spec,
                const std::string& out_path) {
  ProblemConfig cfg = load_config_file(config);
  std::vector<double> levels = parse_levels(levels_spec);
  ConvergeReport rep = run_converge(cfg, levels);
  std::string text = emit_converge_csv(rep);
  std::string target = out_path.empty() ? cfg.output_file : out_path;
  if (target.empty())
    std::cout << text;
  else
    write_text(target, text);
  return 0;
}

int do_mesh(const std::string& config, const std::string& out_path) {
  ProblemConfig cfg = load_config_file(config);
  Mesh mesh = build_mesh(cfg);
  save_mesh_text(mesh, out_path);
  std::fprintf(stderr, "eigbound: wrote %d vertices, %d triangles\n",
               mesh.n_vertices(), mesh.n_tris());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guaranteed eigenvalue bounds on polygonal domains"};
  app.require_subcommand(1);

  std::string run_cfg, run_out;
  CLI::App* run = app.add_subcommand("run", "compute bounds for one config");
  run->add_option("config", run_cfg, "config file")->required();
  run->add_option("--out", run_out, "report file (.csv or .md)");

  std::string conv_cfg, conv_levels, conv_out;
  CLI::App* conv =
      app.add_subcommand("converge", "bound series over mesh resolutions");
  conv->add_option("config", conv_cfg, "config file")->required();
  conv->add_option("--levels", conv_levels,
                   "comma-separated per-side counts or h_max values")
      ->required();
  conv->add_option("--out", conv_out, "report file");

  std::string mesh_cfg, mesh_out;
  CLI::App* mesh = app.add_subcommand("mesh", "export the mesh of a config");
  mesh->add_option("config", mesh_cfg, "config file")->required();
  mesh->add_option("--out", mesh_out, "mesh text file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(run_cfg, run_out);
    if (conv->parsed()) return do_converge(conv_cfg, conv_levels, conv_out);
    return do_mesh(mesh_cfg, mesh_out);
  } catch (const InfeasibleError& e) {
    std::fprintf(stderr, "eigbound: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "eigbound: error: %s\n", e.what());
    return 3;
  }
}
