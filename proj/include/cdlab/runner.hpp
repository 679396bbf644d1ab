#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "cdlab/module_maps.hpp"
#include "cdlab/scenario.hpp"

namespace cdlab {

struct RunOutcome {
  njson report;
  int exit_code = 0;
  std::filesystem::path report_path;
};

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvFile {
  std::ofstream out;

  CsvFile(const std::filesystem::path& path, const char* header) : out(path) {
    if (!out) throw evaluation_error("report: cannot write " + path.string());
    out << header << '\n';
  }
  void row(std::initializer_list<std::string> cells) {
    bool first = true;
    for (const auto& c : cells) {
      if (!first) out << ',';
      out << c;
      first = false;
    }
    out << '\n';
  }
};

// Atom health: projection purity by level at a fixed interior point, and the
// pairing scalar against the reciprocal power series (an independent route
// to 1/k; for the power family the direct value comes from the closed form).
inline njson analyze_atom(const AtomSpec& atom, const std::filesystem::path& dir) {
  const cplx z0(0.5, 0.0), w0(0.5, 0.0);
  double l40 = 0.0;
  {
    CsvFile csv(dir / "purity.csv", "level,defect_abs");
    for (std::size_t l = 1; l <= 60; ++l) {
      double d = std::abs(purity_defect(atom, l, z0, w0));
      if (l == 40) l40 = d;
      csv.row({std::to_string(l), fmt17(d)});
    }
  }

  InverseKernelPartial recip = inverse_kernel_partial(atom, 200);
  const cplx pts[] = {{0.3, 0.0}, {0.5, 0.2}, {-0.7, 0.0}, {0.0, 0.6}, {0.25, -0.55}};
  double pairing = 0.0;
  double series_gap = 0.0;
  for (cplx z : pts)
    for (cplx w : pts) {
      pairing = std::max(pairing, std::abs(c_operator_pairing(atom, z, w) - recip.eval(z, w)));
      series_gap = std::max(
          series_gap, std::abs(kernel_eval(atom, z, w) - kernel_eval_series(atom, z, w, 200)));
    }

  njson p;
  p["ok"] = true;
  p["purity_defect_l40"] = l40;
  p["pairing_residual"] = pairing;
  p["series_residual"] = series_gap;
  return p;
}

// Line-bundle curvature sweep. value is the production number; the residual
// column compares the finite-difference route against -|dbar Pi|^2, which is
// computed from the diagonal series sums and shares nothing with the stencil.
inline njson analyze_curvature(const ScenarioConfig& cfg, const DiskGrid& grid,
                               const std::filesystem::path& dir) {
  QuotientModuleModel line{cfg.atom, FrameMap::constant(Mat::Ones(1, 1))};
  CsvFile csv(dir / "curvature.csv", "w_re,w_im,r,value,residual");
  double worst = 0.0;
  double fd_gap = 0.0;
  std::size_t count = 0;
  for (const auto& node : grid.nodes) {
    double r = std::abs(node.w);
    if (r > 0.9) continue;  // the nested stencil loses accuracy at the rim
    double value = curvature_line(cfg.atom, node.w, cfg.diagnostics.h);
    double fd = curvature_matrix_fd(line, node.w, cfg.diagnostics.h)(0, 0).real();
    double residual = std::abs(fd + dbar_pi_hs_norm_line(cfg.atom, node.w));
    worst = std::max(worst, residual);
    fd_gap = std::max(fd_gap, std::abs(fd - value));
    ++count;
    csv.row({fmt17(node.w.real()), fmt17(node.w.imag()), fmt17(r), fmt17(value),
             fmt17(residual)});
  }
  njson p;
  p["ok"] = true;
  p["nodes"] = count;
  p["max_residual"] = worst;
  p["max_fd_gap"] = fd_gap;
  return p;
}

inline njson analyze_identities(const ScenarioConfig& cfg, const DiskGrid& grid,
                                const std::filesystem::path& dir) {
  double tol = cfg.identity_tolerance > 0.0 ? cfg.identity_tolerance
                                            : projection_identity_tolerance(cfg.frame);
  CsvFile csv(dir / "identities.csv", "w_re,w_im,quantity,residual");
  double worst_identity = 0.0;
  std::size_t sweep = std::min<std::size_t>(20, grid.nodes.size());
  for (std::size_t i = 0; i < sweep; ++i) {
    cplx w = grid.nodes[i].w;
    auto r = projection_identities_check(cfg.frame, w, cfg.diagnostics.h);
    std::string re = fmt17(w.real()), im = fmt17(w.imag());
    csv.row({re, im, "annihilation", fmt17(r.annihilation)});
    csv.row({re, im, "absorption", fmt17(r.absorption)});
    csv.row({re, im, "composite", fmt17(r.composite)});
    worst_identity = std::max(worst_identity, r.worst());
  }

  QuotientModuleModel model{cfg.atom, cfg.frame};
  double worst_hs = 0.0;
  for (const auto& node : grid.nodes) {
    if (std::abs(node.w) > 0.9) continue;
    auto s = hs_additivity_check(model, node.w, cfg.diagnostics.h);
    csv.row({fmt17(node.w.real()), fmt17(node.w.imag()), "hs_additivity", fmt17(s.residual)});
    worst_hs = std::max(worst_hs, s.residual);
  }

  njson p;
  p["ok"] = true;
  p["identity_tolerance"] = tol;
  p["max_identity_residual"] = worst_identity;
  p["max_hs_residual"] = worst_hs;
  p["within_tolerance"] = worst_identity <= tol;
  return p;
}

inline njson diagnostics_to_json(const DiagnosticsReport& rep) {
  njson j;
  j["verdict"] = to_string(rep.verdict);
  j["evidence"] = rep.evidence;
  const auto& fb = rep.frame_bounds;
  j["frame_bounds"] = {{"sigma_min_inf", fb.sigma_min_inf},
                       {"sigma_max_sup", fb.sigma_max_sup},
                       {"slope_min", fb.slope_min},
                       {"slope_max", fb.slope_max},
                       {"rank_deficient", fb.rank_deficient()},
                       {"rank_drop_count", fb.rank_drop_nodes.size()}};
  j["defect"] = {{"computed", rep.defect_computed},
                 {"max_value", rep.defect.max_value},
                 {"cross_residual", rep.defect.cross_residual},
                 {"clamped", rep.defect.clamped},
                 {"support_radius", rep.defect.support_radius}};
  if (rep.defect_computed) {
    j["green_scan"] = {{"sup_abs", rep.green_scan.sup_abs},
                       {"slope", rep.green_scan.slope},
                       {"threshold", rep.green_scan.threshold},
                       {"evidence", to_string(rep.green_scan.evidence)},
                       {"flagged_count", rep.green_scan.flagged_count}};
    j["carleson"] = {{"sup_ratio", rep.carleson.sup_ratio},
                     {"growth", rep.carleson.growth},
                     {"growth_from", rep.carleson.growth_from},
                     {"growth_to", rep.carleson.growth_to},
                     {"growth_defined", rep.carleson.growth_defined},
                     {"empty_count", rep.carleson.empty_count},
                     {"evidence", to_string(rep.carleson.evidence)}};
    j["pointwise"] = {{"sup_value", rep.pointwise.sup_value},
                      {"argmax", complex_to_json(rep.pointwise.argmax)}};
  }
  return j;
}

inline njson analyze_diagnose_single(const AtomSpec& atom, const ScenarioConfig& cfg,
                                     const DiskGrid& grid, const std::filesystem::path& dir,
                                     const std::string& suffix, Verdict& verdict_out) {
  QuotientModuleModel model{atom, cfg.frame};
  DefectField defect;
  DiagnosticsReport rep = run_diagnostics(model, grid, cfg.diagnostics, &defect);
  verdict_out = rep.verdict;
  if (rep.defect_computed) {
    CsvFile d(dir / ("defect" + suffix + ".csv"), "w_re,w_im,r,value");
    for (std::size_t i = 0; i < defect.grid.nodes.size(); ++i) {
      cplx w = defect.grid.nodes[i].w;
      d.row({fmt17(w.real()), fmt17(w.imag()), fmt17(std::abs(w)), fmt17(defect.values[i])});
    }
    CsvFile g(dir / ("green_scan" + suffix + ".csv"),
              "radius,sup_abs,argmax_re,argmax_im,refined_sup_abs,refinement_gap,flagged");
    for (const auto& ring : rep.green_scan.rings)
      g.row({fmt17(ring.radius), fmt17(ring.sup_abs), fmt17(ring.argmax.real()),
             fmt17(ring.argmax.imag()), fmt17(ring.refined_sup_abs),
             fmt17(ring.refinement_gap), std::to_string(ring.flagged ? 1 : 0)});
    CsvFile c(dir / ("carleson" + suffix + ".csv"), "depth,index,theta_lo,ratio,box_avg,empty");
    for (const auto& box : rep.carleson.rows)
      c.row({std::to_string(box.depth), std::to_string(box.index), fmt17(box.theta_lo),
             fmt17(box.ratio), fmt17(box.box_avg), std::to_string(box.empty ? 1 : 0)});
  }
  return diagnostics_to_json(rep);
}

// Single run, or a pair of runs when the config carries a second atom: the
// same frame analyzed under both kernels, with the sub-verdicts compared.
inline njson analyze_diagnose(const ScenarioConfig& cfg, const DiskGrid& grid,
                              const std::filesystem::path& dir, Verdict& verdict_out,
                              bool& pair_mismatch_out) {
  pair_mismatch_out = false;
  if (!cfg.second_atom)
    return analyze_diagnose_single(cfg.atom, cfg, grid, dir, "", verdict_out);

  Verdict primary = Verdict::inconclusive, secondary = Verdict::inconclusive;
  njson first = analyze_diagnose_single(cfg.atom, cfg, grid, dir, "", primary);
  njson second = analyze_diagnose_single(*cfg.second_atom, cfg, grid, dir, "2", secondary);
  verdict_out = primary;
  pair_mismatch_out = primary != secondary;
  njson p;
  p["sub_runs"] = {{"primary", first}, {"secondary", second}};
  p["verdicts_match"] = !pair_mismatch_out;
  p["verdict"] = to_string(primary);
  return p;
}

inline njson analyze_modulemap(const ScenarioConfig& cfg, const DiskGrid& grid,
                               const std::filesystem::path& dir) {
  QuotientModuleModel model{cfg.atom, cfg.frame};
  double sup = theta_sup_norm(model, grid);
  double margin = right_invertibility_margin(model, grid);

  CsvFile csv(dir / "modulemap.csv", "levels,intertwining_residual,adjoint_residual");
  njson table = njson::array();
  for (std::size_t levels : {10u, 20u, 40u}) {
    double intertwine = intertwining_residual(model, levels);
    TruncatedIntertwiner x = build_intertwiner(model, levels);
    double adjoint = adjoint_on_kernels_check(x, cplx(0.5, 0.0), 4);
    csv.row({std::to_string(levels), fmt17(intertwine), fmt17(adjoint)});
    table.push_back({{"levels", levels},
                     {"intertwining_residual", intertwine},
                     {"adjoint_residual", adjoint}});
  }

  njson p;
  p["ok"] = true;
  p["theta_sup_norm"] = sup;
  p["right_invertibility_margin"] = margin;
  p["levels"] = table;
  return p;
}

}  // namespace detail

// Runs every requested analysis, writes <output_dir>/<name>/report.json plus
// the per-analysis CSVs, and maps the outcome to the process exit code:
// evaluation failure 70, otherwise the diagnose verdict when one was run
// (mismatched pair verdicts count as inconclusive), otherwise 0.
inline RunOutcome run_scenario(const ScenarioConfig& cfg) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(cfg.output_dir) / cfg.name;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw evaluation_error("report: cannot create output directory " + dir.string());

  DiskGrid grid = DiskGrid::standard(cfg.grid_levels, cfg.grid_r_max);

  RunOutcome out;
  out.report["name"] = cfg.name;
  out.report["config"] = scenario_to_json(cfg);
  out.report["version"] = {
      {"cdlab", "0.1.0"},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                    "." + std::to_string(EIGEN_MINOR_VERSION)}};

  njson analyses = njson::object();
  njson timings = njson::object();
  bool failed = false;
  bool have_verdict = false;
  bool pair_mismatch = false;
  Verdict verdict = Verdict::inconclusive;

  for (const std::string& name : cfg.analyses) {
    auto t0 = std::chrono::steady_clock::now();
    njson payload;
    try {
      if (name == "atom") {
        payload = detail::analyze_atom(cfg.atom, dir);
      } else if (name == "curvature") {
        payload = detail::analyze_curvature(cfg, grid, dir);
      } else if (name == "identities") {
        payload = detail::analyze_identities(cfg, grid, dir);
      } else if (name == "diagnose") {
        payload = detail::analyze_diagnose(cfg, grid, dir, verdict, pair_mismatch);
        have_verdict = true;
      } else {
        payload = detail::analyze_modulemap(cfg, grid, dir);
      }
      payload["ok"] = true;
    } catch (const std::exception& e) {
      payload = njson{{"ok", false}, {"error", e.what()}};
      failed = true;
    }
    analyses[name] = payload;
    timings[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  out.report["analyses"] = analyses;
  out.report["timings"] = timings;
  if (have_verdict) out.report["verdict"] = to_string(verdict);

  out.report_path = dir / "report.json";
  {
    std::ofstream rf(out.report_path);
    if (!rf) throw evaluation_error("report: cannot write " + out.report_path.string());
    rf << out.report.dump(2) << '\n';
  }

  out.exit_code = failed             ? 70
                  : !have_verdict    ? 0
                  : pair_mismatch    ? static_cast<int>(Verdict::inconclusive)
                                     : static_cast<int>(verdict);
  return out;
}

}  // namespace cdlab
