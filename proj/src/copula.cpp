#include "qrs/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "qrs/error.hpp"

namespace qrs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre half-rules on [-1, 1]: positive nodes and their weights.
constexpr std::array<double, 3> kGl6Nodes = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
constexpr std::array<double, 3> kGl6Weights = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr std::array<double, 6> kGl12Nodes = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                              0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
constexpr std::array<double, 6> kGl12Weights = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                                0.2031674267230659, 0.2334925365383547, 0.2491470458134029};
constexpr std::array<double, 10> kGl20Nodes = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                               0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                               0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                               0.07652652113349733};
constexpr std::array<double, 10> kGl20Weights = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                                 0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                                                 0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                                                 0.1527533871307259};

void check_rho(double rho) {
  if (!(std::abs(rho) < 1.0)) throw ValidationError("bivariate normal: correlation must satisfy |rho| < 1");
}

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

BvnKernel::BvnKernel(double rho) : rho_(rho) {
  check_rho(rho);
  const double ar = std::abs(rho);
  auto fill = [this](const auto& nodes, const auto& weights) {
    const int half = static_cast<int>(nodes.size());
    npoints_ = 2 * half;
    for (int j = 0; j < half; ++j) {
      xs_[j] = 1.0 - nodes[j];
      xs_[j + half] = 1.0 + nodes[j];
      wt_[j] = weights[j];
      wt_[j + half] = weights[j];
    }
  };
  if (ar < 0.3) {
    fill(kGl6Nodes, kGl6Weights);
  } else if (ar < 0.75) {
    fill(kGl12Nodes, kGl12Weights);
  } else {
    fill(kGl20Nodes, kGl20Weights);
  }
  asr_ = std::asin(rho) / 2.0;
  if (ar < 0.925) {
    for (int j = 0; j < npoints_; ++j) sn_[j] = std::sin(asr_ * xs_[j]);
  } else {
    // High-correlation branch integrates in sqrt(1 - rho^2) instead.
    const double half_a = std::sqrt((1.0 - rho) * (1.0 + rho)) / 2.0;
    for (int j = 0; j < npoints_; ++j) {
      const double t = half_a * xs_[j];
      sn_[j] = t * t;
    }
  }
}

double BvnKernel::upper(double h, double k) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (h == inf || k == inf) return 0.0;
  if (h == -inf) return k == -inf ? 1.0 : norm_cdf(-k);
  if (k == -inf) return norm_cdf(-h);
  if (rho_ == 0.0) return norm_cdf(-h) * norm_cdf(-k);

  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(rho_) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    for (int j = 0; j < npoints_; ++j) {
      const double sn = sn_[j];
      bvn += wt_[j] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    bvn = bvn * asr_ / kTwoPi + norm_cdf(-h) * norm_cdf(-k);
    return std::clamp(bvn, 0.0, 1.0);
  }

  if (rho_ < 0.0) {
    k = -k;
    hk = -hk;
  }
  const double as = (1.0 - rho_) * (1.0 + rho_);
  double a = std::sqrt(as);
  const double bs = (h - k) * (h - k);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 80.0;
  double asr = -(bs / as + hk) / 2.0;
  if (asr > -100.0) {
    bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
  }
  if (hk > -100.0) {
    const double b = std::sqrt(bs);
    const double sp = std::sqrt(kTwoPi) * norm_cdf(-b / a);
    bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
  }
  a /= 2.0;
  double acc = 0.0;
  for (int j = 0; j < npoints_; ++j) {
    const double xs = sn_[j];
    asr = -(bs / xs + hk) / 2.0;
    if (asr > -100.0) {
      const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
      const double rs = std::sqrt(1.0 - xs);
      const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
      acc += wt_[j] * std::exp(asr) * (sp - ep);
    }
  }
  bvn = (a * acc - bvn) / kTwoPi;
  if (rho_ > 0.0) {
    bvn += norm_cdf(-std::max(h, k));
  } else if (h >= k) {
    bvn = -bvn;
  } else {
    const double span = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
    bvn = span - bvn;
  }
  return std::clamp(bvn, 0.0, 1.0);
}

double BvnKernel::cdf(double a, double b) const { return upper(-a, -b); }

double bvn_cdf(double a, double b, double rho) { return BvnKernel(rho).cdf(a, b); }

bool CopulaModel::admissible(CopulaFamily family, double theta) {
  switch (family) {
    case CopulaFamily::Gaussian:
      return theta > -1.0 && theta < 1.0;
  }
  return false;
}

CopulaModel CopulaModel::gaussian(double theta) {
  if (!admissible(CopulaFamily::Gaussian, theta)) {
    throw ValidationError("Gaussian copula parameter must lie in (-1, 1)");
  }
  return CopulaModel{CopulaFamily::Gaussian, theta};
}

double copula_cdf(double u, double v, double theta) {
  if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) {
    throw ValidationError("copula arguments must lie in [0, 1]");
  }
  check_rho(theta);
  if (u == 0.0 || v == 0.0) return 0.0;
  if (u == 1.0) return v;
  if (v == 1.0) return u;
  if (theta == 0.0) return u * v;
  const double c = bvn_cdf(norm_quantile(u), norm_quantile(v), theta);
  return std::clamp(c, std::max(u + v - 1.0, 0.0), std::min(u, v));
}

double conditional_copula(double u, double v, double theta) {
  if (!(v > 0.0 && v <= 1.0)) throw ValidationError("conditional copula: v must lie in (0, 1]");
  if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("conditional copula: u must lie in [0, 1]");
  if (theta == 0.0) {
    check_rho(theta);
    return u;
  }
  return std::clamp(copula_cdf(u, v, theta) / v, 0.0, 1.0);
}

ConditionalCopula::ConditionalCopula(double tau, double theta)
    : tau_(tau), a_(norm_quantile(tau)), kernel_(theta) {}

double ConditionalCopula::operator()(double v, double v_normal_quantile) const {
  if (kernel_.rho() == 0.0) return tau_;
  if (v >= 1.0) return tau_;
  double c = kernel_.cdf(a_, v_normal_quantile);
  c = std::clamp(c, std::max(tau_ + v - 1.0, 0.0), std::min(tau_, v));
  return std::clamp(c / v, 0.0, 1.0);
}

}  // namespace qrs
