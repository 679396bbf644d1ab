#pragma once

#include <functional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "cdlab/atoms.hpp"

namespace cdlab {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Anti-holomorphic polynomial frame V(w) = sum_k A_k conj(w)^k with n x m
// coefficient matrices. Columns are the frame vectors v_{i,w}; the dependence
// on w passes only through conj(w), so d/dw of V vanishes identically and
// dbar V comes straight off the coefficients.
struct FrameMap {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<Mat> coefficients;  // A_0..A_d
  double tail_bound = 0.0;        // > 0 marks a truncated expansion and bounds the dropped tail on the working grid

  std::size_t degree() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }
  bool truncated() const { return tail_bound > 0.0; }

  static FrameMap from_coefficients(std::vector<Mat> mats, double tail_bound = 0.0) {
    if (mats.empty()) throw domain_error("frame: no coefficient matrices");
    FrameMap f;
    f.n = static_cast<std::size_t>(mats[0].rows());
    f.m = static_cast<std::size_t>(mats[0].cols());
    if (f.n == 0 || f.m == 0 || f.m > f.n)
      throw domain_error("frame: need n >= m >= 1");
    for (const Mat& a : mats)
      if (static_cast<std::size_t>(a.rows()) != f.n || static_cast<std::size_t>(a.cols()) != f.m)
        throw domain_error("frame: coefficient matrices must share one shape");
    f.coefficients = std::move(mats);
    f.tail_bound = tail_bound;
    return f;
  }

  static FrameMap constant(Mat a0) { return from_coefficients({std::move(a0)}); }

  // (1, conj w, ..., conj w^(count-1))^T as an n = count, m = 1 frame.
  static FrameMap monomial_tower(std::size_t count, double tail_bound = 0.0) {
    if (count == 0) throw domain_error("frame: empty tower");
    std::vector<Mat> mats(count, Mat::Zero(count, 1));
    for (std::size_t k = 0; k < count; ++k) mats[k](k, 0) = 1.0;
    return from_coefficients(std::move(mats), tail_bound);
  }

  // Horner in conj(w), updated in place: deep towers sit inside quadrature
  // loops and a per-step temporary would dominate the cost.
  Mat eval(cplx w) const {
    const cplx cw = std::conj(w);
    Mat out = coefficients.back();
    for (std::size_t k = coefficients.size() - 1; k-- > 0;) {
      out *= cw;
      out += coefficients[k];
    }
    return out;
  }

  Mat dbar_eval(cplx w) const {
    if (coefficients.size() == 1) return Mat::Zero(n, m);
    const cplx cw = std::conj(w);
    Mat out = double(coefficients.size() - 1) * coefficients.back();
    for (std::size_t k = coefficients.size() - 1; k-- > 1;) {
      out *= cw;
      out.noalias() += double(k) * coefficients[k];
    }
    return out;
  }
};

// An atom plus a frame: the model of a quotient module whose sections are
// k(., w) tensor v_{i,w}.
struct QuotientModuleModel {
  AtomSpec atom;
  FrameMap frame;

  std::size_t rank() const { return frame.m; }
};

struct CurvatureSample {
  cplx w;
  Mat value;
  enum class Method { closed_form, finite_difference } method = Method::finite_difference;
  double step = 0.0;
};

enum class Wirtinger { d, dbar };

// Central 4-point stencil for d = (dx - i dy)/2 or dbar = (dx + i dy)/2,
// entrywise on matrix-valued f. O(h^2).
template <class F>
Mat wirtinger_derivative(F&& f, cplx w, double h, Wirtinger which) {
  if (!(h > 0.0) || !std::isfinite(h)) throw domain_error("wirtinger: step must be positive");
  if (std::abs(w) + h >= 1.0)
    throw evaluation_error("wirtinger: stencil leaves the disk; shrink h or move w inward");
  const cplx i(0.0, 1.0);
  Mat dx = (f(w + h) - f(w - h)) / (2.0 * h);
  Mat dy = (f(w + i * h) - f(w - i * h)) / (2.0 * h);
  if (which == Wirtinger::d) return 0.5 * (dx - i * dy);
  return 0.5 * (dx + i * dy);
}

namespace detail {

// Hermitian positive-definite solve with an explicit conditioning gate.
// G is a small Gram (m x m); on failure the error carries a condition estimate.
inline Mat gram_solve(const Mat& G, const Mat& B, const char* who) {
  Eigen::JacobiSVD<Mat> svd(G);
  const auto& sv = svd.singularValues();
  double smax = sv(0);
  double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e12) {
    std::ostringstream msg;
    msg << who << ": gram ill-conditioned, sigma_max/sigma_min ~ "
        << (smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity());
    throw evaluation_error(msg.str());
  }
  return G.llt().solve(B);
}

inline void require_stencil_radius(double r_limit, cplx w, double h, const char* who) {
  if (std::abs(w) > r_limit - 2.0 * h)
    throw evaluation_error(std::string(who) +
                           ": point too close to the boundary for the nested stencil");
}

}  // namespace detail

// Gram of the sections gamma_{i,w} = k(., w) tensor v_{i,w}:
// G(w) = k(w,w) * (V(w)* V(w)). Hermitian positive definite wherever the
// frame has full column rank.
inline Mat gram_matrix(const QuotientModuleModel& model, cplx w) {
  detail::require_point(model.atom, w, "gram_matrix");
  double kd = kernel_eval(model.atom, w, w).real();
  Mat V = model.frame.eval(w);
  return kd * (V.adjoint() * V);
}

// Analytic curvature of the power atom's line bundle.
inline double curvature_line_closed(const AtomSpec& atom, cplx w) {
  if (atom.family != AtomSpec::Family::power)
    throw evaluation_error("curvature_line_closed: closed form exists for the power family only; use the finite-difference path");
  double x = std::norm(w);
  if (x >= 1.0) throw domain_error("curvature_line_closed: point outside the disk");
  double u = 1.0 - x;
  return -atom.alpha / (u * u);
}

// -dbar(G^{-1} dG) by nested central stencils, both at step h. Single step,
// O(h^2); callers wanting the production value go through curvature_matrix_fd.
inline Mat curvature_matrix_fd_step(const std::function<Mat(cplx)>& gram, cplx w, double h) {
  auto inner = [&](cplx u) -> Mat {
    Mat dG = wirtinger_derivative(gram, u, h, Wirtinger::d);
    return detail::gram_solve(gram(u), dG, "curvature_matrix_fd");
  };
  return -wirtinger_derivative(inner, w, h, Wirtinger::dbar);
}

namespace detail {

inline std::function<Mat(cplx)> model_gram_fn(const QuotientModuleModel& model) {
  return [model](cplx u) { return gram_matrix(model, u); };
}

inline std::function<Mat(cplx)> frame_gram_fn(const FrameMap& frame) {
  return [frame](cplx u) {
    Mat V = frame.eval(u);
    return Mat(V.adjoint() * V);
  };
}

}  // namespace detail

// Curvature of the full section bundle at w. Richardson over h, h/2, h/4.
inline Mat curvature_matrix_fd(const QuotientModuleModel& model, cplx w, double h = 1e-3) {
  detail::require_stencil_radius(model.atom.r_max, w, h, "curvature_matrix_fd");
  auto gram = detail::model_gram_fn(model);
  return richardson([&](double step) { return curvature_matrix_fd_step(gram, w, step); }, h);
}

// Frame-only bundle curvature (Gram V*V, no kernel factor).
inline Mat curvature_matrix_fd(const FrameMap& frame, cplx w, double h = 1e-3) {
  detail::require_stencil_radius(1.0, w, h, "curvature_matrix_fd");
  auto gram = detail::frame_gram_fn(frame);
  return richardson([&](double step) { return curvature_matrix_fd_step(gram, w, step); }, h);
}

// Line-bundle curvature of the atom itself: closed form when available,
// otherwise the 1x1 matrix route on the diagonal Gram k(w,w).
inline double curvature_line(const AtomSpec& atom, cplx w, double h = 1e-3) {
  if (atom.family == AtomSpec::Family::power) return curvature_line_closed(atom, w);
  detail::require_stencil_radius(atom.r_max, w, h, "curvature_line");
  auto gram = [&atom](cplx u) -> Mat {
    Mat g(1, 1);
    g(0, 0) = kernel_eval(atom, u, u).real();
    return g;
  };
  Mat K = richardson([&](double step) { return curvature_matrix_fd_step(gram, w, step); }, h);
  return K(0, 0).real();
}

// Max-entry residual of K_full - (K_line I + K_frame): the tensor split of the
// section bundle's curvature into the atom part and the frame part.
inline double curvature_additivity_check(const QuotientModuleModel& model, cplx w, double h = 1e-3) {
  Mat full = curvature_matrix_fd(model, w, h);
  Mat frame_part = curvature_matrix_fd(model.frame, w, h);
  double line = curvature_line(model.atom, w, h);
  Mat resid = full - frame_part;
  resid.diagonal().array() -= line;
  return resid.cwiseAbs().maxCoeff();
}

}  // namespace cdlab
