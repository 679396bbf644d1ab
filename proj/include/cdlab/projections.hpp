#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "cdlab/atoms.hpp"
#include "cdlab/bundles.hpp"
#include "cdlab/common.hpp"

namespace cdlab {

// Orthogonal projection onto the frame's column span, n x n.
inline Mat frame_projection(const FrameMap& frame, cplx w) {
  Mat v = frame.eval(w);
  Mat g = v.adjoint() * v;
  return v * detail::gram_solve(g, v.adjoint(), "frame_projection");
}

// Squared Hilbert-Schmidt norm of the conjugate derivative of the rank-one
// projection onto the kernel section at w.  Collapses to the diagonal sums:
// (K d2 - x d1^2) / K^2 at x = |w|^2, which is also the curvature magnitude.
inline double dbar_pi_hs_norm_line(const AtomSpec& atom, cplx w) {
  double x = std::norm(w);
  KernelDiagonal s = kernel_diagonal_sums(atom, x);
  return (s.value * s.d2 - x * s.d1 * s.d1) / (s.value * s.value);
}

// Entrywise conjugate-Wirtinger stencil on the assembled projection.
inline Mat dbar_pi_v_step(const FrameMap& frame, cplx w, double h) {
  return wirtinger_derivative(
      [&frame](cplx u) { return frame_projection(frame, u); }, w, h, Wirtinger::dbar);
}

inline Mat dbar_pi_v(const FrameMap& frame, cplx w, double h = 1e-3) {
  detail::require_stencil_radius(1.0, w, h, "dbar_pi_v");
  return richardson([&](double step) { return dbar_pi_v_step(frame, w, step); }, h);
}

inline double dbar_pi_v_hs_norm_step(const FrameMap& frame, cplx w, double h) {
  return dbar_pi_v_step(frame, w, h).squaredNorm();
}

inline double dbar_pi_v_hs_norm(const FrameMap& frame, cplx w, double h = 1e-3) {
  return dbar_pi_v(frame, w, h).squaredNorm();
}

// V* is holomorphic, so dbar Pi = (I - Pi)(dbar V) G^{-1} V* and the squared
// norm is tr[ G^{-1} (dbar V)* (I - Pi) (dbar V) ].  Assembled without the
// n x n projection: (dbar V)* Pi (dbar V) = B* G^{-1} B with B = V* (dbar V).
inline double dbar_pi_v_hs_norm_exact(const FrameMap& frame, cplx w) {
  Mat v = frame.eval(w);
  Mat dv = frame.dbar_eval(w);
  if (frame.m == 1) {
    double g = v.squaredNorm();
    if (!(g > 0.0)) throw evaluation_error("dbar_pi_v_hs_norm_exact: frame vanishes");
    return (dv.squaredNorm() - std::norm(v.col(0).dot(dv.col(0))) / g) / g;
  }
  Mat g = v.adjoint() * v;
  Mat b = v.adjoint() * dv;
  Mat core = dv.adjoint() * dv - b.adjoint() * detail::gram_solve(g, b, "dbar_pi_v_hs_norm_exact");
  return detail::gram_solve(g, core, "dbar_pi_v_hs_norm_exact").trace().real();
}

// Residuals of the algebraic identities a finite-difference dbar Pi must
// satisfy against the assembled Pi.  All max-entry.
struct ProjectionIdentityResiduals {
  double annihilation = 0.0;  // Pi (dbar Pi)
  double absorption = 0.0;    // (dbar Pi) Pi - dbar Pi
  double composite = 0.0;     // (I - Pi)(dbar Pi) Pi - dbar Pi

  double worst() const { return std::max({annihilation, absorption, composite}); }
};

inline ProjectionIdentityResiduals projection_identities_check(const FrameMap& frame,
                                                               cplx w,
                                                               double h = 1e-3) {
  Mat pi = frame_projection(frame, w);
  Mat dpi = dbar_pi_v(frame, w, h);
  Mat id = Mat::Identity(pi.rows(), pi.cols());
  ProjectionIdentityResiduals r;
  r.annihilation = (pi * dpi).cwiseAbs().maxCoeff();
  r.absorption = (dpi * pi - dpi).cwiseAbs().maxCoeff();
  r.composite = ((id - pi) * dpi * pi - dpi).cwiseAbs().maxCoeff();
  return r;
}

// Pass bar for the identity residuals: polynomial frames should reach the
// stencil's own accuracy, truncated expansions carry tail error on top.
inline double projection_identity_tolerance(const FrameMap& frame) {
  return frame.truncated() ? 1e-4 : 1e-6;
}

// Squared HS norm of dbar of the projection onto k(., w) (x) V(w)c inside
// H (x) C^n.  The H factor never materializes: every inner product between
// stencil fibres reduces to a kernel value, so the stencil sum is a finite
// Gram trace over pairs of stencil points.
inline double dbar_pi_combined_hs_norm_step(const QuotientModuleModel& model,
                                            cplx w, double h) {
  if (!(h > 0.0) || !is_finite(h)) throw domain_error("dbar_pi_combined_hs_norm: step must be positive");
  const cplx i(0.0, 1.0);
  const std::array<cplx, 4> pts{w + h, w - h, w + i * h, w - i * h};
  const double q = 1.0 / (4.0 * h);
  const std::array<cplx, 4> coef{cplx(q, 0.0), cplx(-q, 0.0), cplx(0.0, q), cplx(0.0, -q)};

  std::array<Mat, 4> v;
  std::array<Eigen::LLT<Mat>, 4> gram;
  for (int p = 0; p < 4; ++p) {
    v[p] = model.frame.eval(pts[p]);
    Mat g = kernel_eval(model.atom, pts[p], pts[p]).real() * (v[p].adjoint() * v[p]).eval();
    Eigen::JacobiSVD<Mat> svd(g);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > 1e12)
      throw evaluation_error("dbar_pi_combined_hs_norm: gram ill-conditioned at a stencil point");
    gram[p] = g.llt();
  }

  cplx total = 0.0;
  for (int p = 0; p < 4; ++p)
    for (int q2 = 0; q2 < 4; ++q2) {
      Mat mpq = kernel_eval(model.atom, pts[p], pts[q2]) * (v[p].adjoint() * v[q2]).eval();
      // tr( G_p^{-1} M_pq G_q^{-1} M_pq* )
      cplx t = (gram[p].solve(mpq) * gram[q2].solve(mpq.adjoint())).trace();
      total += std::conj(coef[p]) * coef[q2] * t;
    }
  return total.real();
}

inline double dbar_pi_combined_hs_norm(const QuotientModuleModel& model, cplx w,
                                       double h = 1e-3) {
  detail::require_stencil_radius(model.atom.r_max, w, h, "dbar_pi_combined_hs_norm");
  return richardson(
      [&](double step) { return dbar_pi_combined_hs_norm_step(model, w, step); }, h);
}

// The combined norm should split as m * line + frame part.  Returns all three
// together with the defect of the identity.
struct HsAdditivitySample {
  double line_part = 0.0;
  double frame_part = 0.0;
  double combined = 0.0;
  double residual = 0.0;
};

inline HsAdditivitySample hs_additivity_check(const QuotientModuleModel& model, cplx w,
                                              double h = 1e-3) {
  HsAdditivitySample s;
  s.line_part = dbar_pi_hs_norm_line(model.atom, w);
  s.frame_part = dbar_pi_v_hs_norm(model.frame, w, h);
  s.combined = dbar_pi_combined_hs_norm(model, w, h);
  s.residual =
      std::abs(static_cast<double>(model.frame.m) * s.line_part + s.frame_part - s.combined);
  return s;
}

}  // namespace cdlab
