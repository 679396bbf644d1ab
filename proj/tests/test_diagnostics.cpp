#include <cmath>
#include <complex>

#include "catch_amalgamated.hpp"
#include "cdlab/diagnostics.hpp"

using cdlab::AtomSpec;
using cdlab::cplx;
using cdlab::DefectField;
using cdlab::DiagnosticsOptions;
using cdlab::DiskGrid;
using cdlab::FrameMap;
using cdlab::Mat;
using cdlab::QuotientModuleModel;
using cdlab::Trend;
using cdlab::Verdict;

namespace {

const DiskGrid& grid() {
  static DiskGrid g = DiskGrid::standard();
  return g;
}

QuotientModuleModel constant_model() {
  return {AtomSpec::power(1.0), FrameMap::constant(Mat::Identity(2, 2))};
}

QuotientModuleModel perturbation_model(double alpha = 1.0) {
  Mat a0(2, 1), a1(2, 1);
  a0 << 1.0, 0.0;
  a1 << 0.0, 0.5;
  return {AtomSpec::power(alpha), FrameMap::from_coefficients({a0, a1})};
}

QuotientModuleModel tower_model() {
  // Hardy-type tower truncated at 151 levels under the weight-2 atom; the
  // dropped tail norm stays below 2.46 on the standard grid.
  return {AtomSpec::power(2.0), FrameMap::monomial_tower(151, 2.46)};
}

QuotientModuleModel zero_at_node_model() {
  cplx w0 = std::polar(0.5, 2.0 * M_PI / 7.0);
  Mat u(2, 1);
  u << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  Mat a0 = -std::conj(w0) * u;
  return {AtomSpec::power(1.0), FrameMap::from_coefficients({a0, u})};
}

struct ScenarioRun {
  cdlab::DiagnosticsReport report;
  DefectField defect;
};

DiagnosticsOptions corpus_options() {
  DiagnosticsOptions opt;
  opt.carleson_r_cut = 0.9995;  // the default 0.995 empties every depth-8 box
  return opt;
}

const ScenarioRun& tower_run() {
  static ScenarioRun run = [] {
    ScenarioRun r;
    r.report = cdlab::run_diagnostics(tower_model(), grid(), corpus_options(), &r.defect);
    return r;
  }();
  return run;
}

const ScenarioRun& perturbation_run() {
  static ScenarioRun run = [] {
    ScenarioRun r;
    r.report = cdlab::run_diagnostics(perturbation_model(), grid(), corpus_options(), &r.defect);
    return r;
  }();
  return run;
}

DefectField unit_density(double support) {
  return DefectField::synthetic([](cplx) { return 1.0; }, grid(), support);
}

}  // namespace

TEST_CASE("disk grid geometry") {
  const DiskGrid& g = grid();
  REQUIRE(g.radii.size() == 8);
  CHECK(g.radii.front() == 0.0);
  CHECK(g.radii.back() == 0.9921875);

  double total = 0.0;
  for (const auto& node : g.nodes) {
    total += node.weight;
    CHECK(std::abs(node.w) < 1.0);
  }
  double expect = M_PI * 0.9921875 * 0.9921875;
  CHECK(std::abs(total - expect) < 1e-12 * expect);

  std::size_t first_ring = 0;
  for (const auto& node : g.nodes) first_ring += node.ring == 1 ? 1 : 0;
  CHECK(first_ring == 7);
  // The second node of the first ring sits at angle 2 pi / 7.
  CHECK(std::abs(g.nodes[2].w - std::polar(0.5, 2.0 * M_PI / 7.0)) < 1e-15);

  CHECK(DiskGrid::standard(8, 0.9).outer_radius() == 0.875);
  CHECK_THROWS_AS(DiskGrid::standard(8, 1.5), cdlab::domain_error);
}

TEST_CASE("frame bounds") {
  auto cons = cdlab::frame_bound_test(constant_model(), grid());
  CHECK(cons.sigma_min_inf == 1.0);
  CHECK(cons.sigma_max_sup == 1.0);
  CHECK(cons.worst_slope() < 1e-12);
  CHECK_FALSE(cons.rank_deficient());

  auto bp = cdlab::frame_bound_test(perturbation_model(), grid());
  CHECK(bp.sigma_min_inf == 1.0);  // attained at the center sample
  double sup_expect = std::sqrt(1.0 + 0.9921875 * 0.9921875 / 4.0);
  CHECK(std::abs(bp.sigma_max_sup - sup_expect) < 1e-12);
  CHECK(std::abs(bp.rings[1].sigma_max - std::sqrt(1.0625)) < 1e-12);
  CHECK(bp.worst_slope() > 0.01);
  CHECK(bp.worst_slope() < 0.05);

  auto tower = cdlab::frame_bound_test(tower_model(), grid());
  CHECK(tower.slope_max > 0.15);
  CHECK(tower.slope_max < 0.6);
  for (const auto& ring : tower.rings) {
    if (ring.radius > 0.99) continue;
    double closed = 1.0 / std::sqrt(1.0 - ring.radius * ring.radius);
    CHECK(std::abs(ring.sigma_max / closed - 1.0) < 0.005);
  }

  auto zero = cdlab::frame_bound_test(zero_at_node_model(), grid());
  REQUIRE(zero.rank_deficient());
  REQUIRE(zero.rank_drop_nodes.size() == 1);
  CHECK(std::abs(zero.rank_drop_nodes[0] - std::polar(0.5, 2.0 * M_PI / 7.0)) < 1e-15);
}

TEST_CASE("defect field") {
  auto cons = cdlab::defect_field(constant_model(), grid());
  for (double v : cons.values) CHECK(v <= 1e-12);
  CHECK(cons.cross_residual < 1e-6);
  CHECK(cons.support_radius == 0.9921875);

  const auto& bp = perturbation_run().defect;
  CHECK(std::abs(bp.values[0] - 0.25) < 1e-7);  // center node
  // First node of the r = 0.5 ring; closed form D = 4/(4+x)^2 at x = 0.25.
  CHECK(std::abs(bp.values[1] - 0.22145328719723184) < 1e-6);
  for (std::size_t i = 0; i < bp.values.size(); ++i)
    CHECK(std::abs(bp.values[i] - bp.density(bp.grid.nodes[i].w)) < 1e-6);

  const auto& tower = tower_run().defect;
  CHECK(std::abs(tower.values[0] - 1.0) < 1e-6);
  CHECK(tower.cross_residual < 1e-6);

  auto neg = DefectField::synthetic([](cplx) { return -3.0; }, grid(), 0.5);
  for (double v : neg.values) CHECK(v == 0.0);
}

TEST_CASE("green potential quadrature oracles") {
  auto unit = unit_density(1.0);
  CHECK(std::abs(cdlab::green_potential(unit, 0.0, 2) + 1.0) < 5e-3);
  CHECK(std::abs(cdlab::green_potential(unit, 0.0, 3) + 1.0) < 1e-3);
  // Conformal invariance moves the full-disk oracle off center: -(1 - |l|^2).
  CHECK(std::abs(cdlab::green_potential(unit, cplx(0.5, 0.0), 3) + 0.75) < 2e-3);
  CHECK(std::abs(cdlab::green_potential(unit, cplx(0.0, -0.7), 3) + 0.51) < 2e-3);

  // Truncated support: 2 R^2 ln R - R^2 at the center. The panel ladder
  // refines toward the support edge, so the log end keeps a fixed ~1e-5
  // bite, well under the decision tolerance.
  auto half = unit_density(0.5);
  double expect = 2.0 * 0.25 * std::log(0.5) - 0.25;
  CHECK(std::abs(cdlab::green_potential(half, 0.0, 2) - expect) < 1e-4);

  auto zero = DefectField::synthetic([](cplx) { return 0.0; }, grid(), 1.0);
  CHECK(cdlab::green_potential(zero, cplx(0.3, 0.3), 2) == 0.0);

  const auto& bp = perturbation_run().defect;
  CHECK(std::abs(cdlab::green_potential(bp, 0.0, 2) + 0.223148) < 2e-3);

  // Nonpositivity and monotonicity in the density.
  auto wavy = DefectField::synthetic(
      [](cplx w) { return 0.3 * (1.0 + std::abs(w)) * (1.1 + std::sin(3.0 * std::arg(w))); },
      grid(), 0.95);
  for (cplx l : {cplx(0.0, 0.0), cplx(0.4, 0.1), cplx(-0.6, 0.5), cplx(0.0, 0.9)}) {
    CHECK(cdlab::green_potential(wavy, l, 2) <= 0.0);
    CHECK(cdlab::green_potential(unit_density(0.9), l, 2) <=
          cdlab::green_potential(DefectField::synthetic([](cplx) { return 0.5; }, grid(), 0.9),
                                 l, 2));
  }

  CHECK_THROWS_AS(cdlab::green_potential(unit, cplx(0.996, 0.0), 2), cdlab::domain_error);
  CHECK_THROWS_AS(cdlab::green_potential(DefectField{}, 0.0, 2), cdlab::domain_error);
}

TEST_CASE("green boundedness scan") {
  auto zero = DefectField::synthetic([](cplx) { return 0.0; }, grid(), grid().outer_radius());
  auto zs = cdlab::green_boundedness_scan(zero, grid().radii);
  CHECK(zs.sup_abs == 0.0);
  CHECK(zs.slope == 0.0);
  CHECK(zs.evidence == Trend::stable);

  const auto& bps = perturbation_run().report.green_scan;
  CHECK(bps.evidence == Trend::stable);
  CHECK(bps.slope <= bps.threshold);
  CHECK(bps.sup_abs > 0.2);
  CHECK(bps.sup_abs < 0.25);
  CHECK(bps.flagged_count == 0);

  // The truncated tower's potential also decays at the rim: its defect lives
  // on a fixed truncated support, so the failure shows up in the frame trend
  // and the box growth instead.
  const auto& ts = tower_run().report.green_scan;
  CHECK(ts.evidence == Trend::stable);
  CHECK(ts.slope <= 0.0);
  CHECK(ts.sup_abs > 1.0);
}

TEST_CASE("carleson box statistics") {
  auto flat = DefectField::synthetic([](cplx) { return 0.7; }, grid(), 1.0);
  auto fr = cdlab::carleson_test(flat, 8, 0.9995);
  double closed_d3 = 0.0;
  for (const auto& box : fr.rows) {
    REQUIRE_FALSE(box.empty);
    CHECK(std::abs(box.box_avg - 0.7) < 1e-5);
    if (box.depth == 3 && box.index == 0) closed_d3 = box.ratio;
  }
  // mu(Q)/|I| for constant density, depth 3: 0.7 * int (1-r) r dr.
  double r_lo = 1.0 - 1.0 / 8.0;
  auto prim = [](double r) { return r * r / 2.0 - r * r * r / 3.0; };
  CHECK(std::abs(closed_d3 - 0.7 * (prim(0.9995) - prim(r_lo))) < 1e-8);
  CHECK(fr.growth_defined);
  CHECK(std::abs(fr.growth - 1.0) < 0.01);
  CHECK(fr.evidence == Trend::stable);

  // Truncation empties the deepest boxes at the default cut; the growth
  // statistic falls back to the deepest live depth.
  auto cut = cdlab::carleson_test(flat, 8, 0.995);
  CHECK(cut.empty_count == 256);
  CHECK(cut.growth_to == 7);
  CHECK(cut.growth_defined);

  auto zero = DefectField::synthetic([](cplx) { return 0.0; }, grid(), 1.0);
  auto zr = cdlab::carleson_test(zero, 8, 0.9995);
  CHECK(zr.sup_ratio == 0.0);
  CHECK(zr.growth == 1.0);
  CHECK(zr.evidence == Trend::stable);

  const auto& bp = perturbation_run().report.carleson;
  CHECK(bp.growth_defined);
  CHECK(bp.growth < 1.1);
  CHECK(bp.evidence == Trend::stable);

  const auto& tower = tower_run().report.carleson;
  CHECK(tower.growth_defined);
  CHECK(tower.growth_from == 4);
  CHECK(tower.growth_to == 8);
  CHECK(tower.growth >= 2.0);
  CHECK(tower.growth < 6.0);
  CHECK(tower.evidence == Trend::divergent);

  // The empirical constant keeps growing with the cut radius.
  const auto& td = tower_run().defect;
  CHECK(cdlab::carleson_test(td, 8, 0.9995).sup_ratio >
        cdlab::carleson_test(td, 8, 0.99).sup_ratio);
}

TEST_CASE("pointwise estimate") {
  auto cons = cdlab::defect_field(constant_model(), grid());
  CHECK(cdlab::pointwise_estimate_test(cons).sup_value < 1e-6);

  auto bp = cdlab::pointwise_estimate_test(perturbation_run().defect);
  CHECK(bp.sup_value <= 0.5 + 1e-6);
  CHECK(bp.sup_value > 0.49);

  auto tower = cdlab::pointwise_estimate_test(tower_run().defect);
  CHECK(std::abs(tower.sup_value - 1.0) < 1e-4);
  CHECK(std::abs(tower.argmax) == 0.0);
}

TEST_CASE("aggregated verdicts") {
  const auto cons = cdlab::run_diagnostics(constant_model(), grid(), corpus_options());
  CHECK(cons.verdict == Verdict::similar);
  CHECK(cons.defect_computed);
  CHECK(cons.evidence.size() == 4);

  const auto& bp = perturbation_run().report;
  CHECK(bp.verdict == Verdict::similar);

  const auto& tower = tower_run().report;
  CHECK(tower.verdict == Verdict::not_similar);
  CHECK(tower.frame_bounds.slope_max >= 0.15);
  CHECK(tower.carleson.evidence == Trend::divergent);

  const auto zero = cdlab::run_diagnostics(zero_at_node_model(), grid(), corpus_options());
  CHECK(zero.verdict == Verdict::not_similar);
  CHECK_FALSE(zero.defect_computed);
  REQUIRE_FALSE(zero.evidence.empty());
  CHECK(zero.evidence[0].find("rank drop") != std::string::npos);

  // Same frame under the other atom: the verdict must transfer.
  const auto cross = cdlab::run_diagnostics(perturbation_model(2.0), grid(), corpus_options());
  CHECK(cross.verdict == bp.verdict);

  // Cross-test coherence: a frame that passes with margin cannot coexist
  // with an unbounded potential.
  for (const auto* rep : {&cons, &bp, &tower, &cross}) {
    bool frame_ok = !rep->frame_bounds.rank_deficient() &&
                    rep->frame_bounds.worst_slope() <= 0.05 &&
                    rep->frame_bounds.sigma_min_inf >= 1e-3;
    if (frame_ok) CHECK(rep->green_scan.evidence != Trend::divergent);
  }
}
