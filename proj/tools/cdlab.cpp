// cdlab: batch front-end for the quotient-module similarity lab.
// Subcommands map one-to-one onto the analyses; exit codes: 64 bad config,
// 70 evaluation failure, otherwise the diagnose verdict (0 Similar,
// 1 NotSimilar, 2 Inconclusive) or 0.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cdlab/runner.hpp"

namespace {

using namespace cdlab;

struct Options {
  std::string config;
  std::string out;
  std::vector<double> at;
  double h = 0.0;
  double rmax = 0.0;
  int depth = 0;
  bool as_json = false;
};

ScenarioConfig load_with_overrides(const Options& o, std::vector<std::string> analyses) {
  ScenarioConfig cfg = load_scenario(o.config);
  cfg.analyses = std::move(analyses);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.h > 0.0) cfg.diagnostics.h = o.h;
  if (o.rmax > 0.0) cfg.grid_r_max = o.rmax;
  if (o.depth > 0) cfg.diagnostics.carleson_max_depth = o.depth;
  return cfg;
}

int run_atom(const Options& o) {
  RunOutcome out = run_scenario(load_with_overrides(o, {"atom"}));
  const njson& p = out.report["analyses"]["atom"];
  std::printf("purity defect at level 40: %.17g\n", p["purity_defect_l40"].get<double>());
  std::printf("pairing residual: %.17g\n", p["pairing_residual"].get<double>());
  std::printf("series residual: %.17g\n", p["series_residual"].get<double>());
  return out.exit_code;
}

int run_curvature(const Options& o) {
  if (!o.at.empty()) {
    // Point query: no artifacts, just the value.
    ScenarioConfig cfg = load_scenario(o.config);
    double h = o.h > 0.0 ? o.h : cfg.diagnostics.h;
    std::printf("%.17g\n", curvature_line(cfg.atom, cplx(o.at[0], o.at[1]), h));
    return 0;
  }
  // Sweep mode covers the identity checks too; the two share the grid.
  RunOutcome out = run_scenario(load_with_overrides(o, {"curvature", "identities"}));
  const njson& c = out.report["analyses"]["curvature"];
  if (c["ok"].get<bool>()) {
    std::printf("nodes: %zu\n", c["nodes"].get<std::size_t>());
    std::printf("max curvature residual: %.17g\n", c["max_residual"].get<double>());
  } else {
    std::printf("curvature: %s\n", c["error"].get<std::string>().c_str());
  }
  const njson& i = out.report["analyses"]["identities"];
  if (i["ok"].get<bool>()) {
    std::printf("max identity residual: %.17g\n", i["max_identity_residual"].get<double>());
    std::printf("max additivity residual: %.17g\n", i["max_hs_residual"].get<double>());
  } else {
    std::printf("identities: %s\n", i["error"].get<std::string>().c_str());
  }
  return out.exit_code;
}

int run_diagnose(const Options& o) {
  RunOutcome out = run_scenario(load_with_overrides(o, {"diagnose"}));
  const njson& p = out.report["analyses"]["diagnose"];
  if (o.as_json) {
    std::printf("%s\n", p.dump(2).c_str());
    return out.exit_code;
  }
  std::printf("verdict: %s\n", out.report["verdict"].get<std::string>().c_str());
  if (p.contains("verdicts_match"))
    std::printf("sub-run verdicts match: %s\n", p["verdicts_match"].get<bool>() ? "yes" : "no");
  const njson& evidence = p.contains("evidence") ? p["evidence"]
                                                 : p["sub_runs"]["primary"]["evidence"];
  for (const auto& line : evidence) std::printf("  %s\n", line.get<std::string>().c_str());
  return out.exit_code;
}

int run_modulemap(const Options& o) {
  RunOutcome out = run_scenario(load_with_overrides(o, {"modulemap"}));
  const njson& p = out.report["analyses"]["modulemap"];
  std::printf("theta sup norm: %.17g\n", p["theta_sup_norm"].get<double>());
  std::printf("right-invertibility margin: %.17g\n",
              p["right_invertibility_margin"].get<double>());
  std::printf("levels,intertwining_residual,adjoint_residual\n");
  for (const auto& row : p["levels"])
    std::printf("%zu,%.17g,%.17g\n", row["levels"].get<std::size_t>(),
                row["intertwining_residual"].get<double>(),
                row["adjoint_residual"].get<double>());
  return out.exit_code;
}

int run_corpus(const Options& o) {
  njson results = njson::array();
  int exit_code = 0;
  for (ScenarioConfig cfg : scenario_corpus()) {
    cfg.analyses = {"diagnose"};
    if (!o.out.empty()) cfg.output_dir = o.out;
    RunOutcome out = run_scenario(cfg);
    if (out.exit_code == 70) exit_code = 70;
    std::string verdict = out.report.contains("verdict")
                              ? out.report["verdict"].get<std::string>()
                              : "Inconclusive";
    if (o.as_json)
      results.push_back({{"name", cfg.name}, {"verdict", verdict}, {"exit", out.exit_code}});
    else
      std::printf("%-22s %s\n", cfg.name.c_str(), verdict.c_str());
  }
  if (o.as_json) std::printf("%s\n", results.dump(2).c_str());
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"similarity diagnostics for quotient modules over the disk"};
  app.require_subcommand(1);

  Options opt;
  auto add_common = [&opt](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", opt.config, "scenario config file")->required();
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
  };

  CLI::App* atom = app.add_subcommand("atom", "kernel atom health checks");
  add_common(atom, true);

  CLI::App* curvature = app.add_subcommand("curvature", "line-bundle curvature sweep");
  curvature->set_help_flag("--help", "print help");  // frees -h for the step option
  add_common(curvature, true);
  curvature->add_option("--at", opt.at, "evaluate at a single point RE IM")->expected(2);
  curvature->add_option("--h", opt.h, "finite-difference step");

  CLI::App* diagnose = app.add_subcommand("diagnose", "similarity diagnostics");
  diagnose->set_help_flag("--help", "print help");
  add_common(diagnose, true);
  diagnose->add_option("--rmax", opt.rmax, "grid radius cap");
  diagnose->add_option("--h", opt.h, "finite-difference step");
  diagnose->add_option("--depth", opt.depth, "deepest dyadic box generation");
  diagnose->add_flag("--json", opt.as_json, "print the diagnose payload as JSON");

  CLI::App* modulemap = app.add_subcommand("modulemap", "truncated module-map analysis");
  add_common(modulemap, true);

  CLI::App* corpus = app.add_subcommand("corpus", "run diagnostics on every built-in scenario");
  add_common(corpus, false);
  corpus->add_flag("--json", opt.as_json, "print one JSON array of verdicts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (atom->parsed()) return run_atom(opt);
    if (curvature->parsed()) return run_curvature(opt);
    if (diagnose->parsed()) return run_diagnose(opt);
    if (modulemap->parsed()) return run_modulemap(opt);
    return run_corpus(opt);
  } catch (const cdlab::domain_error& e) {
    std::fprintf(stderr, "cdlab: %s\n", e.what());
    return 64;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cdlab: %s\n", e.what());
    return 70;
  }
}
