#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cdlab/atoms.hpp"
#include "cdlab/bundles.hpp"
#include "cdlab/common.hpp"
#include "cdlab/grid.hpp"
#include "cdlab/projections.hpp"

namespace cdlab {

enum class Trend { stable, inconclusive, divergent };

inline const char* to_string(Trend t) {
  switch (t) {
    case Trend::stable: return "stable";
    case Trend::divergent: return "divergent";
    default: return "inconclusive";
  }
}

namespace detail {

// Least-squares slope of y against x.
inline double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// 8-point Gauss-Legendre rule on [0, 1].
inline constexpr double gl8_x[8] = {
    0.019855071751231856, 0.10166676129318664, 0.2372337950418355, 0.40828267875217505,
    0.5917173212478249,   0.7627662049581645,  0.8983332387068133, 0.9801449282487681};
inline constexpr double gl8_w[8] = {
    0.05061426814518813, 0.11119051722668723, 0.15685332293894372, 0.18134189168918097,
    0.18134189168918097, 0.15685332293894372, 0.11119051722668723, 0.05061426814518813};

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace detail

// Frame singular values over the grid: two-sided bounds plus per-ring extrema
// and the log-log ring trend that separates bounded frames from ones whose
// bounds drift toward 0 or infinity at the boundary.
struct RingExtrema {
  double radius = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

struct FrameBoundResult {
  double sigma_min_inf = 0.0;
  double sigma_max_sup = 0.0;
  std::vector<RingExtrema> rings;
  double slope_min = 0.0;  // of log sigma_min per ring against log(1/(1-r))
  double slope_max = 0.0;
  double rank_tolerance = 1e-8;
  std::vector<cplx> rank_drop_nodes;

  bool rank_deficient() const { return !rank_drop_nodes.empty(); }
  double worst_slope() const { return std::max(std::abs(slope_min), std::abs(slope_max)); }
};

inline FrameBoundResult frame_bound_test(const QuotientModuleModel& model,
                                         const DiskGrid& grid,
                                         double rank_tolerance = 1e-8) {
  FrameBoundResult out;
  out.rank_tolerance = rank_tolerance;
  std::size_t count = grid.nodes.size();
  std::vector<double> smin(count), smax(count);
  parallel_for(count, [&](std::size_t i) {
    Eigen::JacobiSVD<Mat> svd(model.frame.eval(grid.nodes[i].w));
    const auto& sv = svd.singularValues();
    smax[i] = sv(0);
    smin[i] = sv(sv.size() - 1);
  });

  out.rings.resize(grid.radii.size());
  for (std::size_t j = 0; j < grid.radii.size(); ++j)
    out.rings[j] = {grid.radii[j], std::numeric_limits<double>::infinity(), 0.0};
  out.sigma_min_inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    auto& ring = out.rings[grid.nodes[i].ring];
    ring.sigma_min = std::min(ring.sigma_min, smin[i]);
    ring.sigma_max = std::max(ring.sigma_max, smax[i]);
    out.sigma_min_inf = std::min(out.sigma_min_inf, smin[i]);
    out.sigma_max_sup = std::max(out.sigma_max_sup, smax[i]);
    if (smin[i] < rank_tolerance) out.rank_drop_nodes.push_back(grid.nodes[i].w);
  }
  if (out.rank_deficient()) return out;

  std::vector<double> x, ymin, ymax;
  for (const auto& ring : out.rings) {
    x.push_back(std::log(1.0 / (1.0 - ring.radius)));
    ymin.push_back(std::log(ring.sigma_min));
    ymax.push_back(std::log(ring.sigma_max));
  }
  out.slope_min = detail::linear_slope(x, ymin);
  out.slope_max = detail::linear_slope(x, ymax);
  return out;
}

// The defect density D(w) = |dbar Pi_V|_HS^2 sampled over the grid.  Node
// values go through the finite-difference route; `density` is the closed
// trace-formula evaluator used by the area quadratures, valid on |w| < 1.
struct DefectField {
  DiskGrid grid;
  std::vector<double> values;
  std::function<double(cplx)> density;
  double support_radius = 0.0;  // integration cutoff for the potential
  std::size_t clamped = 0;      // nodes pulled up from small negative noise
  double cross_residual = 0.0;  // worst split-vs-direct gap on the sample,
                                // relative: the combined norm grows like the
                                // curvature toward the rim

  static DefectField synthetic(std::function<double(cplx)> fn, DiskGrid grid,
                               double support_radius) {
    DefectField d;
    d.grid = std::move(grid);
    d.support_radius = support_radius;
    d.values.resize(d.grid.nodes.size());
    for (std::size_t i = 0; i < d.grid.nodes.size(); ++i)
      d.values[i] = std::max(0.0, fn(d.grid.nodes[i].w));
    d.density = [fn = std::move(fn)](cplx w) { return std::max(0.0, fn(w)); };
    return d;
  }
};

inline DefectField defect_field(const QuotientModuleModel& model, const DiskGrid& grid,
                                double h = 1e-3, std::size_t cross_stride = 20) {
  DefectField d;
  d.grid = grid;
  d.support_radius = grid.outer_radius();
  d.values.resize(grid.nodes.size());

  std::vector<double> raw(grid.nodes.size());
  parallel_for(grid.nodes.size(), [&](std::size_t i) {
    raw[i] = dbar_pi_v_hs_norm(model.frame, grid.nodes[i].w, h);
  });
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = raw[i];
    if (v < 0.0) {
      // D is a squared norm; small negatives are stencil noise, anything
      // larger means a broken frame or step size.
      if (v <= -1e-8) {
        std::ostringstream msg;
        msg << "defect_field: negative density " << v << " at w=("
            << grid.nodes[i].w.real() << ", " << grid.nodes[i].w.imag() << ")";
        throw evaluation_error(msg.str());
      }
      v = 0.0;
      ++d.clamped;
    }
    d.values[i] = v;
  }

  // Spot-check the direct route against combined-minus-line on a node sample.
  double m = static_cast<double>(model.frame.m);
  for (std::size_t i = 0; i < grid.nodes.size(); i += cross_stride) {
    cplx w = grid.nodes[i].w;
    double combined = dbar_pi_combined_hs_norm(model, w, h);
    double split = combined - m * dbar_pi_hs_norm_line(model.atom, w);
    double gap = std::abs(d.values[i] - split) / std::max(1.0, combined);
    d.cross_residual = std::max(d.cross_residual, gap);
  }
  if (d.cross_residual > 1e-3) {
    std::ostringstream msg;
    msg << "defect_field: direct and split routes disagree, relative gap " << d.cross_residual;
    throw evaluation_error(msg.str());
  }

  FrameMap frame = model.frame;
  d.density = [frame](cplx w) { return std::max(0.0, dbar_pi_v_hs_norm_exact(frame, w)); };
  return d;
}

// Green potential (2/pi) Int ln|(w - l)/(1 - conj(l) w)| D(w) dA, pulled back
// through the disk automorphism u -> (u + l)/(1 + conj(l) u).  The log factor
// becomes ln|u| (polar around the singularity), and the support disk |w| <= rho
// becomes the region |u| <= s_max(theta).
inline double green_potential(const DefectField& defect, cplx lambda, int refinement = 2) {
  if (!defect.density) throw domain_error("green_potential: defect has no density");
  if (refinement < 0 || refinement > 8)
    throw domain_error("green_potential: refinement out of range");
  double L = std::norm(lambda);
  if (!(std::sqrt(L) < defect.grid.r_max))
    throw domain_error("green_potential: lambda outside the evaluation radius");

  const double R = defect.support_radius * defect.support_radius;
  const int nt = 32 << refinement;
  const int panels = 5 + 2 * refinement;
  const double dth = 2.0 * M_PI / nt;

  std::vector<double> partial(nt, 0.0);
  parallel_for(static_cast<std::size_t>(nt), [&](std::size_t t) {
    double th = dth * (static_cast<double>(t) + 0.5);
    cplx dir = std::polar(1.0, th);
    double smax = 1.0;
    if (R < 1.0) {
      double a = (std::conj(lambda) * dir).real();
      double disc = a * a * (1.0 - R) * (1.0 - R) + (1.0 - R * L) * (R - L);
      if (disc <= 0.0) return;
      smax = (-a * (1.0 - R) + std::sqrt(disc)) / (1.0 - R * L);
      smax = std::clamp(smax, 0.0, 1.0);
      if (smax <= 0.0) return;
    }
    double acc = 0.0;
    double lo = 0.0;
    for (int p = 0; p < panels; ++p) {
      double hi = p + 1 == panels ? smax : smax * (1.0 - std::ldexp(1.0, -p - 1));
      double width = hi - lo;
      for (int q = 0; q < 8; ++q) {
        double s = lo + width * detail::gl8_x[q];
        cplx u = s * dir;
        cplx denom = 1.0 + std::conj(lambda) * u;
        cplx w = (u + lambda) / denom;
        double dval = defect.density(w);
        if (dval <= 0.0) continue;
        double den2 = std::norm(denom);
        double jac = (1.0 - L) * (1.0 - L) / (den2 * den2);
        acc += width * detail::gl8_w[q] * std::log(s) * dval * jac * s;
      }
      lo = hi;
    }
    partial[t] = acc;
  });

  double sum = 0.0;
  for (double p : partial) sum += p;  // ln s <= 0, D >= 0: every term nonpositive
  return sum * dth * (2.0 / M_PI);
}

// Ring scan of the potential: sup |G| per lambda ring plus a regression of
// the ring sups against log(1/(1-r)).  Boundedness is a limit statement, so
// the verdict consumes this trend with an explicit dead zone.
struct GreenRing {
  double radius = 0.0;
  double sup_abs = 0.0;
  cplx argmax;
  double refined_sup_abs = 0.0;  // argmax re-evaluated one refinement up
  double refinement_gap = 0.0;
  bool flagged = false;  // gap above 10x tolerance
};

struct GreenScanResult {
  std::vector<GreenRing> rings;
  double sup_abs = 0.0;
  double slope = 0.0;
  double threshold = 0.0;  // slope_factor * sup_abs
  Trend evidence = Trend::inconclusive;
  std::size_t flagged_count = 0;
};

inline GreenScanResult green_boundedness_scan(const DefectField& defect,
                                              const std::vector<double>& lambda_rings,
                                              int refinement = 2,
                                              double green_tolerance = 1e-3,
                                              double slope_factor = 0.05,
                                              std::size_t angles_per_ring = 4) {
  if (lambda_rings.empty()) throw domain_error("green_boundedness_scan: no rings");
  GreenScanResult out;

  struct Task {
    std::size_t ring;
    cplx lambda;
  };
  std::vector<Task> tasks;
  for (std::size_t j = 0; j < lambda_rings.size(); ++j) {
    double r = lambda_rings[j];
    std::size_t count = r == 0.0 ? 1 : angles_per_ring;
    for (std::size_t k = 0; k < count; ++k) {
      double th = 2.0 * M_PI * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
      tasks.push_back({j, std::polar(r, th)});
    }
  }
  std::vector<double> vals(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    vals[i] = green_potential(defect, tasks[i].lambda, refinement);
  });

  out.rings.resize(lambda_rings.size());
  for (std::size_t j = 0; j < lambda_rings.size(); ++j) out.rings[j].radius = lambda_rings[j];
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto& ring = out.rings[tasks[i].ring];
    double a = std::abs(vals[i]);
    if (a >= ring.sup_abs) {
      ring.sup_abs = a;
      ring.argmax = tasks[i].lambda;
    }
  }

  parallel_for(out.rings.size(), [&](std::size_t j) {
    auto& ring = out.rings[j];
    ring.refined_sup_abs = std::abs(green_potential(defect, ring.argmax, refinement + 1));
    ring.refinement_gap = std::abs(ring.refined_sup_abs - ring.sup_abs);
  });
  std::vector<double> x, y;
  for (auto& ring : out.rings) {
    ring.flagged = ring.refinement_gap > 10.0 * green_tolerance;
    if (ring.flagged) ++out.flagged_count;
    out.sup_abs = std::max(out.sup_abs, ring.sup_abs);
    x.push_back(std::log(1.0 / (1.0 - ring.radius)));
    y.push_back(ring.sup_abs);
  }
  out.slope = detail::linear_slope(x, y);
  out.threshold = slope_factor * out.sup_abs;
  out.evidence = out.slope <= out.threshold ? Trend::stable
               : out.slope >= 3.0 * out.threshold ? Trend::divergent
                                                  : Trend::inconclusive;
  return out;
}

// Dyadic box test for the measure D(w)(1 - |w|) dA.  Boxes cannot be
// integrated to the boundary; each row carries the literal ratio mu(Q)/|I|
// truncated at r_cut (a lower bound) and the box-average density, whose
// depth growth is the saturation statistic the verdict consumes.
struct CarlesonBox {
  int depth = 0;
  int index = 0;
  double theta_lo = 0.0;
  double ratio = 0.0;    // mu(Q cut at r_cut) / |I|
  double box_avg = 0.0;  // mass of D over the cut box / cut box area
  bool empty = false;    // truncation removed the whole box
};

struct CarlesonResult {
  std::vector<CarlesonBox> rows;
  double sup_ratio = 0.0;
  double growth = 0.0;  // max box_avg at growth_to vs growth_from
  int growth_from = 0;
  int growth_to = 0;
  bool growth_defined = false;
  std::size_t empty_count = 0;
  Trend evidence = Trend::inconclusive;
  std::string note;
};

inline CarlesonResult carleson_test(const DefectField& defect, int max_depth = 8,
                                    double r_cut = 0.995, double saturating_bound = 1.25,
                                    double divergent_bound = 2.0) {
  if (!defect.density) throw domain_error("carleson_test: defect has no density");
  if (max_depth < 1 || max_depth > 14) throw domain_error("carleson_test: bad depth");
  if (!(r_cut > 0.0 && r_cut < 1.0)) throw domain_error("carleson_test: bad r_cut");

  CarlesonResult out;
  for (int d = 1; d <= max_depth; ++d)
    for (int k = 0; k < (1 << d); ++k)
      out.rows.push_back({d, k, 2.0 * M_PI * k / static_cast<double>(1 << d),
                          0.0, 0.0, false});

  constexpr int radial_panels = 8;
  constexpr int angular_points = 4;
  parallel_for(out.rows.size(), [&](std::size_t i) {
    CarlesonBox& box = out.rows[i];
    double r_lo = 1.0 - std::ldexp(1.0, -box.depth);
    double arc = 2.0 * M_PI / static_cast<double>(1 << box.depth);
    if (r_lo >= r_cut) {
      box.empty = true;
      return;
    }
    double mu = 0.0, mass = 0.0;
    for (int t = 0; t < angular_points; ++t) {
      double th = box.theta_lo + arc * (t + 0.5) / angular_points;
      double lo = r_lo;
      for (int p = 0; p < radial_panels; ++p) {
        double hi = p + 1 == radial_panels
                        ? r_cut
                        : r_lo + (r_cut - r_lo) * (1.0 - std::ldexp(1.0, -p - 1));
        double width = hi - lo;
        for (int q = 0; q < 8; ++q) {
          double r = lo + width * detail::gl8_x[q];
          double dval = defect.density(std::polar(r, th));
          double base = width * detail::gl8_w[q] * dval * r;
          mass += base;
          mu += base * (1.0 - r);
        }
        lo = hi;
      }
    }
    double dth = arc / angular_points;
    mu *= dth;
    mass *= dth;
    double area = arc * 0.5 * (r_cut * r_cut - r_lo * r_lo);
    box.ratio = mu / arc;
    box.box_avg = mass / area;
  });

  std::vector<double> depth_max(static_cast<std::size_t>(max_depth) + 1, 0.0);
  std::vector<bool> depth_live(static_cast<std::size_t>(max_depth) + 1, false);
  for (const auto& box : out.rows) {
    if (box.empty) {
      ++out.empty_count;
      continue;
    }
    out.sup_ratio = std::max(out.sup_ratio, box.ratio);
    depth_max[box.depth] = std::max(depth_max[box.depth], box.box_avg);
    depth_live[box.depth] = true;
  }

  int to = 0;
  for (int d = max_depth; d >= 1; --d)
    if (depth_live[d]) {
      to = d;
      break;
    }
  if (to >= 2) {
    int from = std::max(1, to - 4);
    out.growth_from = from;
    out.growth_to = to;
    if (depth_max[from] > 0.0) {
      out.growth = depth_max[to] / depth_max[from];
      out.growth_defined = true;
    } else if (depth_max[to] == 0.0) {
      out.growth = 1.0;  // identically zero field saturates trivially
      out.growth_defined = true;
    }
  }
  if (out.growth_defined)
    out.evidence = out.growth <= saturating_bound ? Trend::stable
                 : out.growth >= divergent_bound ? Trend::divergent
                                                 : Trend::inconclusive;
  out.note = "ratios are lower bounds: boxes truncated at r_cut=" + detail::fmt(r_cut);
  return out;
}

struct PointwiseEstimate {
  double sup_value = 0.0;  // sup over nodes of sqrt(D) (1 - |w|)
  cplx argmax;
};

inline PointwiseEstimate pointwise_estimate_test(const DefectField& defect) {
  PointwiseEstimate out;
  for (std::size_t i = 0; i < defect.grid.nodes.size(); ++i) {
    cplx w = defect.grid.nodes[i].w;
    double v = std::sqrt(defect.values[i]) * (1.0 - std::abs(w));
    if (v > out.sup_value) {
      out.sup_value = v;
      out.argmax = w;
    }
  }
  return out;
}

enum class Verdict { similar = 0, not_similar = 1, inconclusive = 2 };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::similar: return "Similar";
    case Verdict::not_similar: return "NotSimilar";
    default: return "Inconclusive";
  }
}

struct DiagnosticsOptions {
  double h = 1e-3;
  double rank_tolerance = 1e-8;
  double sigma_floor = 1e-3;          // inf sigma_min below this is not "away from 0"
  double frame_flat_slope = 0.05;     // |ring slope| at or below: flat
  double frame_divergent_slope = 0.15;
  int green_refinement = 2;
  double green_tolerance = 1e-3;
  double slope_factor = 0.05;
  std::size_t green_angles = 4;
  int carleson_max_depth = 8;
  double carleson_r_cut = 0.995;
  double carleson_saturating = 1.25;
  double carleson_divergent = 2.0;
  std::size_t cross_stride = 20;
};

struct DefectSummary {
  double max_value = 0.0;
  double cross_residual = 0.0;
  std::size_t clamped = 0;
  double support_radius = 0.0;
};

struct DiagnosticsReport {
  FrameBoundResult frame_bounds;
  bool defect_computed = false;
  DefectSummary defect;
  GreenScanResult green_scan;
  CarlesonResult carleson;
  PointwiseEstimate pointwise;
  Verdict verdict = Verdict::inconclusive;
  std::vector<std::string> evidence;
};

// Aggregated run: frame bounds first (a rank drop settles the verdict on its
// own and the remaining tests need G^{-1}), then the defect-based tests.
inline DiagnosticsReport run_diagnostics(const QuotientModuleModel& model,
                                         const DiskGrid& grid,
                                         const DiagnosticsOptions& opt = {},
                                         DefectField* defect_out = nullptr) {
  DiagnosticsReport rep;
  rep.frame_bounds = frame_bound_test(model, grid, opt.rank_tolerance);
  const auto& fb = rep.frame_bounds;
  if (fb.rank_deficient()) {
    cplx w = fb.rank_drop_nodes.front();
    rep.verdict = Verdict::not_similar;
    rep.evidence.push_back("frame bounds: rank drop at w=(" + detail::fmt(w.real()) + ", " +
                           detail::fmt(w.imag()) + "), sigma_min below " +
                           detail::fmt(fb.rank_tolerance) +
                           " at " + detail::fmt(static_cast<double>(fb.rank_drop_nodes.size())) +
                           " node(s); defect tests skipped");
    return rep;
  }

  Trend frame_trend = fb.worst_slope() <= opt.frame_flat_slope ? Trend::stable
                    : fb.worst_slope() >= opt.frame_divergent_slope ? Trend::divergent
                                                                    : Trend::inconclusive;
  bool frame_pass = frame_trend == Trend::stable && fb.sigma_min_inf >= opt.sigma_floor;
  bool frame_fail = frame_trend == Trend::divergent;
  rep.evidence.push_back("frame bounds: sigma in [" + detail::fmt(fb.sigma_min_inf) + ", " +
                         detail::fmt(fb.sigma_max_sup) + "], ring slopes (min " +
                         detail::fmt(fb.slope_min) + ", max " + detail::fmt(fb.slope_max) +
                         "): " + to_string(frame_trend));

  DefectField defect = defect_field(model, grid, opt.h, opt.cross_stride);
  rep.defect_computed = true;
  rep.defect.cross_residual = defect.cross_residual;
  rep.defect.clamped = defect.clamped;
  rep.defect.support_radius = defect.support_radius;
  for (double v : defect.values) rep.defect.max_value = std::max(rep.defect.max_value, v);

  rep.green_scan = green_boundedness_scan(defect, grid.radii, opt.green_refinement,
                                          opt.green_tolerance, opt.slope_factor,
                                          opt.green_angles);
  rep.evidence.push_back("green potential: sup|G|=" + detail::fmt(rep.green_scan.sup_abs) +
                         ", ring slope " + detail::fmt(rep.green_scan.slope) +
                         " vs threshold " + detail::fmt(rep.green_scan.threshold) + ": " +
                         to_string(rep.green_scan.evidence));

  rep.carleson = carleson_test(defect, opt.carleson_max_depth, opt.carleson_r_cut,
                               opt.carleson_saturating, opt.carleson_divergent);
  rep.evidence.push_back(
      "carleson: sup ratio=" + detail::fmt(rep.carleson.sup_ratio) + ", box-average growth " +
      (rep.carleson.growth_defined
           ? detail::fmt(rep.carleson.growth) + "x over depths " +
                 std::to_string(rep.carleson.growth_from) + ".." +
                 std::to_string(rep.carleson.growth_to)
           : std::string("undefined (boxes empty)")) +
      ": " + to_string(rep.carleson.evidence));

  rep.pointwise = pointwise_estimate_test(defect);
  rep.evidence.push_back("pointwise estimate: sup sqrt(D)(1-|w|)=" +
                         detail::fmt(rep.pointwise.sup_value));

  bool green_pass = rep.green_scan.evidence == Trend::stable;
  bool green_fail = rep.green_scan.evidence == Trend::divergent;
  bool carleson_pass = rep.carleson.evidence == Trend::stable;
  bool carleson_fail = rep.carleson.evidence == Trend::divergent;

  if (frame_fail || green_fail || carleson_fail)
    rep.verdict = Verdict::not_similar;
  else if (frame_pass && green_pass && carleson_pass)
    rep.verdict = Verdict::similar;
  else
    rep.verdict = Verdict::inconclusive;

  if (defect_out) *defect_out = std::move(defect);
  return rep;
}

}  // namespace cdlab
