#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlab/atoms.hpp"
#include "cdlab/bundles.hpp"
#include "cdlab/diagnostics.hpp"

namespace cdlab {

using njson = nlohmann::json;

// One batch run: which model to build, where to evaluate it, what to do.
// Complex entries serialize as [re, im]; matrices as row arrays of entries.
struct ScenarioConfig {
  std::string name;
  AtomSpec atom = AtomSpec::power(1.0);
  std::optional<AtomSpec> second_atom;  // paired run under another atom
  FrameMap frame = FrameMap::constant(Mat::Identity(1, 1));
  std::size_t grid_levels = 8;
  double grid_r_max = 0.995;
  DiagnosticsOptions diagnostics;
  double identity_tolerance = 0.0;  // 0: derive from the frame's tail bound
  std::vector<std::string> analyses;
  std::string output_dir = "out";
};

inline const std::set<std::string>& known_analyses() {
  static const std::set<std::string> known = {"atom", "curvature", "identities", "diagnose",
                                              "modulemap"};
  return known;
}

namespace detail {

inline void require_keys(const njson& obj, std::initializer_list<const char*> allowed,
                         const char* where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || it.key() == key;
    if (!ok) throw domain_error(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

inline double json_number(const njson& j, const char* where) {
  if (!j.is_number()) throw domain_error(std::string(where) + ": expected a number");
  return j.get<double>();
}

inline std::size_t json_count(const njson& j, const char* where) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw domain_error(std::string(where) + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

inline cplx json_complex(const njson& j, const char* where) {
  if (!j.is_array() || j.size() != 2)
    throw domain_error(std::string(where) + ": complex entries are [re, im] pairs");
  return {json_number(j[0], where), json_number(j[1], where)};
}

inline njson complex_to_json(cplx v) { return njson::array({v.real(), v.imag()}); }

inline Mat json_matrix(const njson& j, const char* where) {
  if (!j.is_array() || j.empty())
    throw domain_error(std::string(where) + ": expected a non-empty row array");
  std::size_t rows = j.size();
  if (!j[0].is_array() || j[0].empty())
    throw domain_error(std::string(where) + ": expected rows of [re, im] entries");
  std::size_t cols = j[0].size();
  Mat a(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw domain_error(std::string(where) + ": ragged matrix rows");
    for (std::size_t k = 0; k < cols; ++k) a(i, k) = json_complex(j[i][k], where);
  }
  return a;
}

inline njson matrix_to_json(const Mat& a) {
  njson rows = njson::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    njson row = njson::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(complex_to_json(a(i, k)));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace detail

inline AtomSpec atom_from_json(const njson& j) {
  if (!j.is_object() || !j.contains("family"))
    throw domain_error("atom: expected an object with a 'family'");
  std::string family = j["family"].is_string() ? j["family"].get<std::string>() : "";
  AtomSpec atom;
  if (family == "power") {
    detail::require_keys(j, {"family", "alpha", "truncation", "r_max", "eps_tail"}, "atom");
    if (!j.contains("alpha")) throw domain_error("atom: power family needs 'alpha'");
    std::size_t truncation =
        j.contains("truncation") ? detail::json_count(j["truncation"], "atom.truncation") : 400;
    atom = AtomSpec::power(detail::json_number(j["alpha"], "atom.alpha"), truncation);
  } else if (family == "diagonal") {
    detail::require_keys(j, {"family", "coefficients", "r_max", "eps_tail"}, "atom");
    if (!j.contains("coefficients") || !j["coefficients"].is_array())
      throw domain_error("atom: diagonal family needs a coefficient array");
    std::vector<double> coeffs;
    for (const auto& c : j["coefficients"])
      coeffs.push_back(detail::json_number(c, "atom.coefficients"));
    atom = AtomSpec::diagonal(std::move(coeffs));
  } else {
    throw domain_error("atom: family must be 'power' or 'diagonal'");
  }
  if (j.contains("r_max")) {
    atom.r_max = detail::json_number(j["r_max"], "atom.r_max");
    if (!(atom.r_max > 0.0 && atom.r_max < 1.0))
      throw domain_error("atom: r_max must lie in (0, 1)");
  }
  if (j.contains("eps_tail")) {
    atom.eps_tail = detail::json_number(j["eps_tail"], "atom.eps_tail");
    if (!(atom.eps_tail > 0.0)) throw domain_error("atom: eps_tail must be positive");
  }
  return atom;
}

inline njson atom_to_json(const AtomSpec& atom) {
  njson j;
  if (atom.family == AtomSpec::Family::power) {
    j["family"] = "power";
    j["alpha"] = atom.alpha;
    j["truncation"] = atom.series_length();
  } else {
    j["family"] = "diagonal";
    j["coefficients"] = atom.coeffs;
  }
  j["r_max"] = atom.r_max;
  j["eps_tail"] = atom.eps_tail;
  return j;
}

inline FrameMap frame_from_json(const njson& j) {
  if (!j.is_object()) throw domain_error("frame: expected an object");
  if (j.contains("tower")) {
    detail::require_keys(j, {"tower"}, "frame");
    const njson& t = j["tower"];
    detail::require_keys(t, {"levels", "tail_bound"}, "frame.tower");
    if (!t.contains("levels")) throw domain_error("frame.tower: needs 'levels'");
    double tail =
        t.contains("tail_bound") ? detail::json_number(t["tail_bound"], "frame.tower") : 0.0;
    return FrameMap::monomial_tower(detail::json_count(t["levels"], "frame.tower.levels"), tail);
  }
  if (!j.contains("coefficients") || !j["coefficients"].is_array() || j["coefficients"].empty())
    throw domain_error("frame: needs 'coefficients' (matrix list) or 'tower'");
  detail::require_keys(j, {"coefficients", "tail_bound"}, "frame");
  std::vector<Mat> mats;
  for (const auto& m : j["coefficients"]) mats.push_back(detail::json_matrix(m, "frame"));
  double tail = j.contains("tail_bound") ? detail::json_number(j["tail_bound"], "frame") : 0.0;
  return FrameMap::from_coefficients(std::move(mats), tail);
}

namespace detail {

inline bool is_monomial_tower(const FrameMap& f) {
  if (f.m != 1 || f.n <= 1 || f.coefficients.size() != f.n) return false;
  for (std::size_t k = 0; k < f.coefficients.size(); ++k)
    for (std::size_t i = 0; i < f.n; ++i)
      if (f.coefficients[k](Eigen::Index(i), 0) != cplx(i == k ? 1.0 : 0.0, 0.0)) return false;
  return true;
}

}  // namespace detail

inline njson frame_to_json(const FrameMap& frame) {
  njson j;
  if (detail::is_monomial_tower(frame)) {
    j["tower"] = {{"levels", frame.coefficients.size()}, {"tail_bound", frame.tail_bound}};
    return j;
  }
  njson mats = njson::array();
  for (const auto& a : frame.coefficients) mats.push_back(detail::matrix_to_json(a));
  j["coefficients"] = mats;
  if (frame.tail_bound != 0.0) j["tail_bound"] = frame.tail_bound;
  return j;
}

inline ScenarioConfig scenario_from_json(const njson& j) {
  if (!j.is_object()) throw domain_error("scenario: expected a JSON object");
  detail::require_keys(j,
                       {"name", "atom", "second_atom", "frame", "grid", "tolerances",
                        "diagnostics", "analyses", "output_dir"},
                       "scenario");
  for (const char* key : {"name", "atom", "frame", "analyses"})
    if (!j.contains(key))
      throw domain_error(std::string("scenario: missing required key '") + key + "'");

  ScenarioConfig cfg;
  if (!j["name"].is_string() || j["name"].get<std::string>().empty())
    throw domain_error("scenario: 'name' must be a non-empty string");
  cfg.name = j["name"].get<std::string>();
  cfg.atom = atom_from_json(j["atom"]);
  if (j.contains("second_atom")) cfg.second_atom = atom_from_json(j["second_atom"]);
  cfg.frame = frame_from_json(j["frame"]);

  if (j.contains("grid")) {
    const njson& g = j["grid"];
    detail::require_keys(g, {"levels", "r_max"}, "grid");
    if (g.contains("levels")) cfg.grid_levels = detail::json_count(g["levels"], "grid.levels");
    if (g.contains("r_max")) cfg.grid_r_max = detail::json_number(g["r_max"], "grid.r_max");
    if (!(cfg.grid_r_max > 0.0 && cfg.grid_r_max < 1.0))
      throw domain_error("grid: r_max must lie in (0, 1)");
    if (cfg.grid_levels < 1 || cfg.grid_levels > 16)
      throw domain_error("grid: levels must lie in [1, 16]");
  }

  if (j.contains("tolerances")) {
    const njson& t = j["tolerances"];
    detail::require_keys(
        t, {"h", "eps_tail", "identity_tolerance", "green_tolerance", "slope_threshold"},
        "tolerances");
    if (t.contains("h")) cfg.diagnostics.h = detail::json_number(t["h"], "tolerances.h");
    if (t.contains("green_tolerance"))
      cfg.diagnostics.green_tolerance = detail::json_number(t["green_tolerance"], "tolerances");
    if (t.contains("slope_threshold"))
      cfg.diagnostics.slope_factor = detail::json_number(t["slope_threshold"], "tolerances");
    if (t.contains("identity_tolerance"))
      cfg.identity_tolerance = detail::json_number(t["identity_tolerance"], "tolerances");
    if (t.contains("eps_tail")) {
      double eps = detail::json_number(t["eps_tail"], "tolerances.eps_tail");
      if (!(eps > 0.0)) throw domain_error("tolerances: eps_tail must be positive");
      cfg.atom.eps_tail = eps;
      if (cfg.second_atom) cfg.second_atom->eps_tail = eps;
    }
    if (!(cfg.diagnostics.h > 0.0) || !(cfg.diagnostics.green_tolerance > 0.0) ||
        !(cfg.diagnostics.slope_factor > 0.0) || cfg.identity_tolerance < 0.0)
      throw domain_error("tolerances: values must be positive");
  }

  if (j.contains("diagnostics")) {
    const njson& d = j["diagnostics"];
    detail::require_keys(d,
                         {"green_refinement", "green_angles", "carleson_max_depth",
                          "carleson_r_cut", "carleson_saturating", "carleson_divergent",
                          "frame_flat_slope", "frame_divergent_slope", "sigma_floor",
                          "rank_tolerance", "cross_stride"},
                         "diagnostics");
    auto& o = cfg.diagnostics;
    if (d.contains("green_refinement"))
      o.green_refinement = int(detail::json_count(d["green_refinement"], "diagnostics"));
    if (d.contains("green_angles"))
      o.green_angles = detail::json_count(d["green_angles"], "diagnostics");
    if (d.contains("carleson_max_depth"))
      o.carleson_max_depth = int(detail::json_count(d["carleson_max_depth"], "diagnostics"));
    if (d.contains("carleson_r_cut"))
      o.carleson_r_cut = detail::json_number(d["carleson_r_cut"], "diagnostics");
    if (d.contains("carleson_saturating"))
      o.carleson_saturating = detail::json_number(d["carleson_saturating"], "diagnostics");
    if (d.contains("carleson_divergent"))
      o.carleson_divergent = detail::json_number(d["carleson_divergent"], "diagnostics");
    if (d.contains("frame_flat_slope"))
      o.frame_flat_slope = detail::json_number(d["frame_flat_slope"], "diagnostics");
    if (d.contains("frame_divergent_slope"))
      o.frame_divergent_slope = detail::json_number(d["frame_divergent_slope"], "diagnostics");
    if (d.contains("sigma_floor"))
      o.sigma_floor = detail::json_number(d["sigma_floor"], "diagnostics");
    if (d.contains("rank_tolerance"))
      o.rank_tolerance = detail::json_number(d["rank_tolerance"], "diagnostics");
    if (d.contains("cross_stride"))
      o.cross_stride = detail::json_count(d["cross_stride"], "diagnostics");
  }

  if (!j["analyses"].is_array() || j["analyses"].empty())
    throw domain_error("scenario: 'analyses' must be a non-empty list");
  for (const auto& a : j["analyses"]) {
    if (!a.is_string()) throw domain_error("scenario: analysis names must be strings");
    std::string name = a.get<std::string>();
    if (known_analyses().count(name) == 0)
      throw domain_error("scenario: unknown analysis '" + name + "'");
    if (std::find(cfg.analyses.begin(), cfg.analyses.end(), name) != cfg.analyses.end())
      throw domain_error("scenario: duplicate analysis '" + name + "'");
    cfg.analyses.push_back(name);
  }

  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string() || j["output_dir"].get<std::string>().empty())
      throw domain_error("scenario: 'output_dir' must be a non-empty string");
    cfg.output_dir = j["output_dir"].get<std::string>();
  }
  return cfg;
}

inline njson scenario_to_json(const ScenarioConfig& cfg) {
  njson j;
  j["name"] = cfg.name;
  j["atom"] = atom_to_json(cfg.atom);
  if (cfg.second_atom) j["second_atom"] = atom_to_json(*cfg.second_atom);
  j["frame"] = frame_to_json(cfg.frame);
  j["grid"] = {{"levels", cfg.grid_levels}, {"r_max", cfg.grid_r_max}};
  j["tolerances"] = {{"h", cfg.diagnostics.h},
                     {"eps_tail", cfg.atom.eps_tail},
                     {"identity_tolerance", cfg.identity_tolerance},
                     {"green_tolerance", cfg.diagnostics.green_tolerance},
                     {"slope_threshold", cfg.diagnostics.slope_factor}};
  const auto& o = cfg.diagnostics;
  j["diagnostics"] = {{"green_refinement", o.green_refinement},
                      {"green_angles", o.green_angles},
                      {"carleson_max_depth", o.carleson_max_depth},
                      {"carleson_r_cut", o.carleson_r_cut},
                      {"carleson_saturating", o.carleson_saturating},
                      {"carleson_divergent", o.carleson_divergent},
                      {"frame_flat_slope", o.frame_flat_slope},
                      {"frame_divergent_slope", o.frame_divergent_slope},
                      {"sigma_floor", o.sigma_floor},
                      {"rank_tolerance", o.rank_tolerance},
                      {"cross_stride", o.cross_stride}};
  j["analyses"] = cfg.analyses;
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw domain_error("scenario: cannot read config file " + path);
  njson j;
  try {
    in >> j;
  } catch (const njson::exception& e) {
    throw domain_error("scenario: malformed JSON in " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

// Built-in scenarios. The shipped files under scenarios/ are these configs
// serialized; tests hold the two in sync.
inline std::vector<ScenarioConfig> scenario_corpus() {
  std::vector<ScenarioConfig> corpus;
  const std::vector<std::string> full = {"atom", "curvature", "identities", "diagnose",
                                         "modulemap"};

  {
    ScenarioConfig c;
    c.name = "constant_frame";
    c.atom = AtomSpec::power(1.0);
    c.frame = FrameMap::constant(Mat::Identity(2, 2));
    c.diagnostics.carleson_r_cut = 0.9995;
    c.analyses = full;
    corpus.push_back(std::move(c));
  }
  {
    ScenarioConfig c;
    c.name = "bounded_perturbation";
    c.atom = AtomSpec::power(1.0);
    Mat a0(2, 1), a1(2, 1);
    a0 << 1.0, 0.0;
    a1 << 0.0, 0.5;
    c.frame = FrameMap::from_coefficients({a0, a1});
    c.diagnostics.carleson_r_cut = 0.9995;
    c.analyses = full;
    corpus.push_back(std::move(c));
  }
  {
    ScenarioConfig c;
    c.name = "h2_in_bergman";
    c.atom = AtomSpec::power(2.0);
    // Dropped-tail norm of the full tower on the standard grid's outer ring.
    c.frame = FrameMap::monomial_tower(151, 2.46);
    c.diagnostics.carleson_r_cut = 0.9995;
    c.analyses = full;
    corpus.push_back(std::move(c));
  }
  {
    ScenarioConfig c;
    c.name = "zero_at_point";
    c.atom = AtomSpec::power(1.0);
    // Zero placed on a grid node: first ring, second angle.
    cplx w0 = std::polar(0.5, 2.0 * M_PI / 7.0);
    Mat u(2, 1);
    u << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    Mat a0 = -std::conj(w0) * u;
    c.frame = FrameMap::from_coefficients({a0, u});
    c.diagnostics.carleson_r_cut = 0.9995;
    c.analyses = {"atom", "diagnose", "modulemap"};
    corpus.push_back(std::move(c));
  }
  {
    ScenarioConfig c;
    c.name = "cross_atom_pair";
    c.atom = AtomSpec::power(1.0);
    c.second_atom = AtomSpec::power(2.0);
    Mat a0(2, 1), a1(2, 1);
    a0 << 1.0, 0.0;
    a1 << 0.0, 0.5;
    c.frame = FrameMap::from_coefficients({a0, a1});
    c.diagnostics.carleson_r_cut = 0.9995;
    c.analyses = {"diagnose"};
    corpus.push_back(std::move(c));
  }
  return corpus;
}

}  // namespace cdlab
