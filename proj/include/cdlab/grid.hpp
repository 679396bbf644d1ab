#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cdlab/common.hpp"

namespace cdlab {

// Polar evaluation lattice: a single node at the origin plus dyadic rings
// r_j = 1 - 2^(-j-1), each ring carrying ceil(2 pi r / (1 - r)) equally
// spaced angles so the mesh refines hyperbolically toward the boundary.
// Rings that would land above r_max are dropped, not clamped: the evaluation
// operations refuse points at r_max, so clamped nodes would be dead weight.
struct DiskGrid {
  struct Node {
    cplx w;
    double weight;     // area of the node's annular cell slice
    std::size_t ring;  // index into radii
  };

  std::vector<double> radii;  // radii[0] == 0 for the center sample
  std::vector<Node> nodes;    // ordered by ring, then angle
  double r_max = 0.995;

  double outer_radius() const { return radii.back(); }

  // Cell boundaries sit at midpoints between consecutive radii and the
  // outermost cell closes at the outermost ring itself, so the weights sum
  // to pi r_J^2 exactly.
  static DiskGrid standard(std::size_t max_level = 8, double r_max = 0.995) {
    if (!(r_max > 0.0 && r_max < 1.0) || !is_finite(r_max))
      throw domain_error("grid: r_max must lie in (0, 1)");
    DiskGrid g;
    g.r_max = r_max;
    g.radii.push_back(0.0);
    for (std::size_t j = 0; j <= max_level; ++j) {
      double r = 1.0 - std::ldexp(1.0, -static_cast<int>(j) - 1);
      if (r > r_max) break;
      g.radii.push_back(r);
    }
    if (g.radii.size() < 2) throw domain_error("grid: no rings below r_max");

    for (std::size_t i = 0; i < g.radii.size(); ++i) {
      double r = g.radii[i];
      double lo = i == 0 ? 0.0 : 0.5 * (g.radii[i - 1] + r);
      double hi = i + 1 < g.radii.size() ? 0.5 * (r + g.radii[i + 1]) : g.radii.back();
      std::size_t count =
          i == 0 ? 1 : static_cast<std::size_t>(std::ceil(2.0 * M_PI * r / (1.0 - r)));
      double cell = M_PI * (hi * hi - lo * lo) / static_cast<double>(count);
      for (std::size_t k = 0; k < count; ++k) {
        double th = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
        g.nodes.push_back({std::polar(r, th), cell, i});
      }
    }
    return g;
  }
};

}  // namespace cdlab
