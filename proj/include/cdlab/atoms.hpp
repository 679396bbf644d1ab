#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cdlab/common.hpp"

namespace cdlab {

// Diagonal reproducing kernels on the unit disk,
//
//   k(z, w) = sum_l c_l z^l conj(w)^l,   c_l > 0,  c_0 = 1,
//
// with orthonormal basis q_l(z) = sqrt(c_l) z^l. The power family
// (1 - z conj(w))^(-alpha) covers the Hardy kernel (alpha = 1) and the
// weighted Bergman scale; generic atoms carry an explicit coefficient list
// and evaluate their finite series exactly.
struct AtomSpec {
  enum class Family { power, diagonal };

  Family family = Family::power;
  double alpha = 1.0;           // power-family weight
  std::vector<double> coeffs;   // c_0.. (for diagonal atoms the list *is* the kernel)
  double r_max = 0.995;         // evaluation radius; accuracy degrades toward 1
  double eps_tail = 1e-10;      // relative series-tail budget

  static AtomSpec power(double alpha, std::size_t truncation = 400) {
    if (!std::isfinite(alpha) || alpha <= 0.0)
      throw domain_error("atom: power weight alpha must be positive and finite");
    if (truncation < 2) throw domain_error("atom: truncation too short");
    AtomSpec a;
    a.family = Family::power;
    a.alpha = alpha;
    a.coeffs.resize(truncation);
    a.coeffs[0] = 1.0;
    // c_{l+1} = c_l (alpha + l)/(l + 1): stable where Gamma quotients overflow.
    for (std::size_t l = 0; l + 1 < truncation; ++l)
      a.coeffs[l + 1] = a.coeffs[l] * (alpha + double(l)) / double(l + 1);
    return a;
  }

  static AtomSpec diagonal(std::vector<double> coefficients) {
    if (coefficients.size() < 2) throw domain_error("atom: coefficient list too short");
    if (std::abs(coefficients[0] - 1.0) > 1e-12)
      throw domain_error("atom: diagonal kernels are normalized by c_0 = 1");
    for (double c : coefficients)
      if (!std::isfinite(c) || c <= 0.0)
        throw domain_error("atom: diagonal coefficients must be positive");
    AtomSpec a;
    a.family = Family::diagonal;
    a.alpha = 0.0;
    a.coeffs = std::move(coefficients);
    a.coeffs[0] = 1.0;
    return a;
  }

  std::size_t series_length() const { return coeffs.size(); }
  double coeff(std::size_t l) const { return l < coeffs.size() ? coeffs[l] : 0.0; }
};

namespace detail {

inline void require_point(const AtomSpec& atom, cplx z, const char* op) {
  if (!is_finite(z)) throw domain_error(std::string(op) + ": non-finite point");
  if (std::abs(z) > atom.r_max)
    throw domain_error(std::string(op) + ": point outside the evaluation radius r_max");
}

}  // namespace detail

// Truncated series sum_{l < terms} c_l (z conj(w))^l. For diagonal atoms with
// terms >= list length this is the exact kernel.
inline cplx kernel_eval_series(const AtomSpec& atom, cplx z, cplx w, std::size_t terms) {
  detail::require_point(atom, z, "kernel_eval_series");
  detail::require_point(atom, w, "kernel_eval_series");
  const cplx x = z * std::conj(w);
  cplx acc = 0.0;
  cplx xl = 1.0;
  const std::size_t stop = std::min(terms, atom.series_length());
  for (std::size_t l = 0; l < stop; ++l) {
    acc += atom.coeffs[l] * xl;
    xl *= x;
  }
  return acc;
}

inline cplx kernel_eval(const AtomSpec& atom, cplx z, cplx w) {
  detail::require_point(atom, z, "kernel_eval");
  detail::require_point(atom, w, "kernel_eval");
  if (atom.family == AtomSpec::Family::power) {
    // Principal branch; Re(1 - z conj(w)) > 0 on the disk, so it matches the series.
    return std::pow(cplx(1.0) - z * std::conj(w), -atom.alpha);
  }
  return kernel_eval_series(atom, z, w, atom.series_length());
}

// d/d(conj w) of k(z, w) = sum_{l >= 1} l c_l z^l conj(w)^(l-1).
inline cplx kernel_dbar_w(const AtomSpec& atom, cplx z, cplx w) {
  detail::require_point(atom, z, "kernel_dbar_w");
  detail::require_point(atom, w, "kernel_dbar_w");
  if (atom.family == AtomSpec::Family::power)
    return atom.alpha * z * std::pow(cplx(1.0) - z * std::conj(w), -atom.alpha - 1.0);
  const cplx cw = std::conj(w);
  cplx acc = 0.0;
  cplx zl = z;    // z^l
  cplx cwl = 1.0; // conj(w)^(l-1)
  for (std::size_t l = 1; l < atom.series_length(); ++l) {
    acc += double(l) * atom.coeffs[l] * zl * cwl;
    zl *= z;
    cwl *= cw;
  }
  return acc;
}

// Degree-l truncation p_l of the reciprocal kernel, expanded in powers of
// z conj(w): p_l(z, w) = sum_{t <= l} b_t (z conj(w))^t.
struct InverseKernelPartial {
  AtomSpec atom;
  std::size_t degree = 0;
  std::vector<double> b;

  cplx eval(cplx z, cplx w) const {
    const cplx x = z * std::conj(w);
    cplx acc = 0.0;
    cplx xt = 1.0;
    for (double bt : b) {
      acc += bt * xt;
      xt *= x;
    }
    return acc;
  }
};

inline InverseKernelPartial inverse_kernel_partial(const AtomSpec& atom, std::size_t l) {
  InverseKernelPartial p;
  p.atom = atom;
  p.degree = l;
  p.b.resize(l + 1);
  p.b[0] = 1.0;
  if (atom.family == AtomSpec::Family::power) {
    // Generalized binomial expansion of (1 - x)^alpha.
    for (std::size_t t = 0; t + 1 <= l; ++t)
      p.b[t + 1] = p.b[t] * (double(t) - atom.alpha) / double(t + 1);
  } else {
    // Reciprocal power series: b_t = -sum_{j=1..t} c_j b_{t-j}.
    for (std::size_t t = 1; t <= l; ++t) {
      double acc = 0.0;
      for (std::size_t j = 1; j <= t; ++j) acc += atom.coeff(j) * p.b[t - j];
      p.b[t] = -acc;
    }
  }
  return p;
}

// 1 - (sum_{t < l} c_t z^t conj(w)^t) / k(z, w): the gap left by projecting
// onto the first l basis levels, normalized by the kernel.
inline cplx purity_defect(const AtomSpec& atom, std::size_t l, cplx z, cplx w) {
  if (l < 1) throw domain_error("purity_defect: level must be >= 1");
  return cplx(1.0) - kernel_eval_series(atom, z, w, l) / kernel_eval(atom, z, w);
}

// Scalar by which the contractivity operator acts on kernel sections: 1/k(z,w).
inline cplx c_operator_pairing(const AtomSpec& atom, cplx z, cplx w) {
  return cplx(1.0) / kernel_eval(atom, z, w);
}

// Diagonal series data at x = |w|^2, shared by the curvature and projection
// norms:
//   value = k(w,w) = sum c_l x^l
//   d1    = sum l c_l x^(l-1)        (= dk/dx; conj-slot derivative is w * d1)
//   d2    = sum l^2 c_l x^(l-1)      (mixed second-derivative contraction)
struct KernelDiagonal {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

inline KernelDiagonal kernel_diagonal_sums(const AtomSpec& atom, double x) {
  if (!(x >= 0.0) || x > atom.r_max * atom.r_max)
    throw domain_error("kernel_diagonal_sums: x outside [0, r_max^2]");
  KernelDiagonal out;
  if (atom.family == AtomSpec::Family::power) {
    const double a = atom.alpha;
    const double u = 1.0 - x;
    out.value = std::pow(u, -a);
    out.d1 = a * std::pow(u, -a - 1.0);
    // d2 = d/dx (x d1) = d1 + x k''.
    out.d2 = out.d1 + x * a * (a + 1.0) * std::pow(u, -a - 2.0);
    return out;
  }
  double xl = 1.0;      // x^l
  double xlm1 = 0.0;    // x^(l-1), defined from l = 1 on
  for (std::size_t l = 0; l < atom.series_length(); ++l) {
    const double c = atom.coeffs[l];
    out.value += c * xl;
    if (l >= 1) {
      out.d1 += double(l) * c * xlm1;
      out.d2 += double(l) * double(l) * c * xlm1;
      xlm1 *= x;
    } else {
      xlm1 = 1.0;
    }
    xl *= x;
  }
  return out;
}

}  // namespace cdlab
