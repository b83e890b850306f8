#pragma once

#include <array>

namespace qrs {

// Standard normal CDF and quantile.
double norm_cdf(double x);
double norm_quantile(double p);

// P(A <= a, B <= b) for a standard bivariate normal with correlation rho.
// a and b may be +/- infinity. Throws ValidationError when |rho| >= 1.
double bvn_cdf(double a, double b, double rho);

// Precomputed Gauss-Legendre nodes for one correlation value, so that many
// evaluations at the same rho (one per observation) share the trigonometric
// work.
class BvnKernel {
 public:
  explicit BvnKernel(double rho);
  double rho() const { return rho_; }
  double cdf(double a, double b) const;

 private:
  double upper(double h, double k) const;  // P(A > h, B > k)

  double rho_;
  int npoints_;
  double asr_;                     // asin(rho) / 2
  std::array<double, 20> sn_{};    // sin(asr * x_j)
  std::array<double, 20> wt_{};
  std::array<double, 20> xs_{};    // nodes on (0, 2)
};

enum class CopulaFamily { Gaussian };

struct CopulaModel {
  CopulaFamily family = CopulaFamily::Gaussian;
  double theta = 0.0;

  // Throws ValidationError for inadmissible theta.
  static CopulaModel gaussian(double theta);
  static bool admissible(CopulaFamily family, double theta);
};

// Gaussian copula C(u, v; theta) for u, v in (0, 1). Boundary conventions
// C(u,1) = u, C(1,v) = v, C(u,0) = C(0,v) = 0 are applied when an argument
// sits exactly on the edge; anything outside [0, 1] throws.
double copula_cdf(double u, double v, double theta);

// G(u, v; theta) = C(u, v; theta) / v for v in (0, 1]. v = 0 throws.
double conditional_copula(double u, double v, double theta);

// Vectorised G(tau, v_i; theta) when Phi^{-1}(v_i) is already known.
class ConditionalCopula {
 public:
  ConditionalCopula(double tau, double theta);
  double operator()(double v, double v_normal_quantile) const;

 private:
  double tau_;
  double a_;
  BvnKernel kernel_;
};

}  // namespace qrs
