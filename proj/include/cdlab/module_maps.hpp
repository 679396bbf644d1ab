#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cdlab/bundles.hpp"
#include "cdlab/common.hpp"
#include "cdlab/grid.hpp"

namespace cdlab {

// Multiplier symbol of the canonical module map: rows are conjugated frame
// columns, so theta(w) applied to eta lists the pairings <eta, v_i(w)>.
inline Mat theta_eval(const QuotientModuleModel& model, cplx w) {
  if (!(std::abs(w) < model.atom.r_max))
    throw domain_error("theta_eval: point outside the working radius");
  return model.frame.eval(w).adjoint();
}

struct ThetaSymbol {
  QuotientModuleModel model;

  Mat eval(cplx w) const { return theta_eval(model, w); }
  int rows() const { return model.frame.m; }
  int cols() const { return model.frame.n; }
};

namespace detail {

inline double spectral_norm(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  return Eigen::BDCSVD<Mat>(a).singularValues()(0);
}

inline void require_grid_radius(const DiskGrid& grid, const QuotientModuleModel& model,
                                const char* who) {
  if (!(grid.outer_radius() < model.atom.r_max))
    throw domain_error(std::string(who) + ": grid reaches outside the working radius");
}

}  // namespace detail

inline double theta_sup_norm(const QuotientModuleModel& model, const DiskGrid& grid) {
  detail::require_grid_radius(grid, model, "theta_sup_norm");
  std::vector<double> sigma(grid.nodes.size());
  parallel_for(grid.nodes.size(), [&](std::size_t i) {
    sigma[i] = Eigen::JacobiSVD<Mat>(model.frame.eval(grid.nodes[i].w)).singularValues()(0);
  });
  return *std::max_element(sigma.begin(), sigma.end());
}

// Smallest singular value of theta(w)* over the grid; a stable positive
// infimum is the working hypothesis for transferring similarity back.
inline double right_invertibility_margin(const QuotientModuleModel& model, const DiskGrid& grid) {
  detail::require_grid_radius(grid, model, "right_invertibility_margin");
  std::vector<double> sigma(grid.nodes.size());
  parallel_for(grid.nodes.size(), [&](std::size_t i) {
    auto sv = Eigen::JacobiSVD<Mat>(model.frame.eval(grid.nodes[i].w)).singularValues();
    sigma[i] = sv(sv.size() - 1);
  });
  return *std::min_element(sigma.begin(), sigma.end());
}

// Multiplication by theta between truncated coordinate spaces. Level l holds
// the normalized monomial q_l = sqrt(c_l) z^l, so a degree-k symbol block
// lands at level l+k with weight sqrt(c_l / c_{l+k}).
struct TruncatedIntertwiner {
  std::size_t levels = 0;
  int n = 0;
  int m = 0;
  QuotientModuleModel model;
  Mat matrix;  // (levels*m) x (levels*n)
};

inline TruncatedIntertwiner build_intertwiner(const QuotientModuleModel& model,
                                              std::size_t levels) {
  if (levels < 2) throw domain_error("build_intertwiner: need at least two levels");
  if (levels + model.frame.degree() > model.atom.series_length())
    throw domain_error("build_intertwiner: atom series too short for the requested levels");

  TruncatedIntertwiner x;
  x.levels = levels;
  x.n = model.frame.n;
  x.m = model.frame.m;
  x.model = model;
  x.matrix = Mat::Zero(levels * x.m, levels * x.n);
  for (std::size_t k = 0; k < model.frame.coefficients.size(); ++k) {
    Mat tk = model.frame.coefficients[k].adjoint();
    for (std::size_t l = 0; l + k < levels; ++l) {
      double weight = std::sqrt(model.atom.coeff(l) / model.atom.coeff(l + k));
      x.matrix.block((l + k) * x.m, l * x.n, x.m, x.n) += weight * tk;
    }
  }
  return x;
}

// Pullback identity on kernel sections: the adjoint of the intertwiner must
// send k(.,w) tensor e_i to the section k(.,w) v_i(w). Both sides are
// expanded in the truncated coordinates; the gap is the dropped tail.
inline double adjoint_on_kernels_check(const TruncatedIntertwiner& x, cplx w,
                                       std::size_t sample_count) {
  if (sample_count == 0) throw domain_error("adjoint_on_kernels_check: empty sample");
  double r = std::abs(w);
  if (!(r <= 0.8))
    throw domain_error("adjoint_on_kernels_check: samples restricted to |w| <= 0.8");
  double tail = std::pow(r, double(x.levels)) / (1.0 - r);
  if (tail > 1e-2) {
    std::ostringstream msg;
    msg << "adjoint_on_kernels_check: truncation too short for |w| = " << r
        << ", geometric tail ~ " << tail;
    throw domain_error(msg.str());
  }

  const std::size_t L = x.levels;
  double worst = 0.0;
  for (std::size_t s = 0; s < sample_count; ++s) {
    cplx ws = w * (double(s + 1) / double(sample_count));
    Mat v = x.model.frame.eval(ws);
    Vec kv(L);
    cplx cw = std::conj(ws), p = 1.0;
    for (std::size_t l = 0; l < L; ++l, p *= cw) kv(l) = std::sqrt(x.model.atom.coeff(l)) * p;

    Mat lhs_in = Mat::Zero(L * x.m, x.m);  // columns: k(.,w) tensor e_i
    Mat rhs = Mat::Zero(L * x.n, x.m);     // columns: the kernel sections
    for (std::size_t l = 0; l < L; ++l) {
      lhs_in.block(l * x.m, 0, x.m, x.m) = kv(l) * Mat::Identity(x.m, x.m);
      rhs.block(l * x.n, 0, x.n, x.m) = kv(l) * v;
    }
    Mat gap = x.matrix.adjoint() * lhs_in - rhs;
    for (int i = 0; i < x.m; ++i) {
      double scale = rhs.col(i).norm();
      if (scale == 0.0) continue;
      worst = std::max(worst, gap.col(i).norm() / scale);
    }
  }
  return worst;
}

namespace detail {

inline Mat truncated_shift(const AtomSpec& atom, std::size_t levels, int fiber) {
  Mat s = Mat::Zero(levels * fiber, levels * fiber);
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    double weight = std::sqrt(atom.coeff(l) / atom.coeff(l + 1));
    s.block((l + 1) * fiber, l * fiber, fiber, fiber) =
        weight * Mat::Identity(fiber, fiber);
  }
  return s;
}

}  // namespace detail

// Commutator of the intertwiner with the weighted shifts carried by the atom
// on either side. The top levels only see truncation leakage of the banded
// symbol, so they are excluded; at least the ground level is always kept.
inline double intertwining_residual(const QuotientModuleModel& model, std::size_t levels) {
  TruncatedIntertwiner x = build_intertwiner(model, levels);
  Mat sq = detail::truncated_shift(model.atom, levels, x.n);
  Mat sf = detail::truncated_shift(model.atom, levels, x.m);
  Mat gap = x.matrix * sq - sf * x.matrix;

  std::size_t excluded = std::min(std::max<std::size_t>(1, model.frame.degree()), levels - 1);
  std::size_t kept = levels - excluded;
  return detail::spectral_norm(gap.topLeftCorner(kept * x.m, kept * x.n));
}

}  // namespace cdlab
