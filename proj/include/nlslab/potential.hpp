#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <variant>

#include "nlslab/field.hpp"

namespace nlslab {

/// Hypothesis family a potential is claimed to belong to: a decaying
/// repulsive potential (V, x.grad V in L^{3/2} plus a Kato-type bound) or
/// the scale-invariant inverse-square potential.
enum class PotentialClass { Decaying, InverseSquare };

struct ZeroPotential {};

/// a / (|x|^2 + eps^2); eps = 0 is the exact a |x|^-2.
struct InverseSquare {
  double a = 1.0;
  double eps = 0.0;
};

/// c exp(-|x|^2 / sigma^2).
struct GaussianBump {
  double c = 1.0;
  double sigma = 1.0;
};

class Potential {
 public:
  using Kind = std::variant<ZeroPotential, InverseSquare, GaussianBump>;

  Potential() = default;
  Potential(Kind kind) : kind_(kind) {  // NOLINT(google-explicit-constructor)
    if (const auto* p = std::get_if<InverseSquare>(&kind_); p && (p->eps < 0.0 || !std::isfinite(p->a))) {
      throw Error("InverseSquare: eps must be >= 0 and a finite");
    }
    if (const auto* p = std::get_if<GaussianBump>(&kind_); p && !(p->sigma > 0.0)) {
      throw Error("GaussianBump: sigma must be positive");
    }
  }

  static Potential zero() { return Potential(ZeroPotential{}); }
  static Potential inverse_square(double a, double eps) { return Potential(InverseSquare{a, eps}); }
  static Potential gaussian_bump(double c, double sigma) { return Potential(GaussianBump{c, sigma}); }

  const Kind& kind() const { return kind_; }
  bool is_zero() const { return std::holds_alternative<ZeroPotential>(kind_); }

  PotentialClass claimed_class() const {
    return std::holds_alternative<InverseSquare>(kind_) ? PotentialClass::InverseSquare : PotentialClass::Decaying;
  }

  std::string name() const {
    return std::visit(
        [](const auto& p) -> std::string {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ZeroPotential>) return "zero";
          else if constexpr (std::is_same_v<T, InverseSquare>) return "inverse_square";
          else return "gaussian_bump";
        },
        kind_);
  }

  /// True when v() is unbounded at x = 0.
  bool singular_at_origin() const {
    const auto* p = std::get_if<InverseSquare>(&kind_);
    return p != nullptr && p->eps == 0.0;
  }

  double value(const Vec3& x) const {
    const double r2 = dot(x, x);
    return std::visit(
        [r2](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ZeroPotential>) return 0.0;
          else if constexpr (std::is_same_v<T, InverseSquare>) return p.a / (r2 + p.eps * p.eps);
          else return p.c * std::exp(-r2 / (p.sigma * p.sigma));
        },
        kind_);
  }

  Vec3 gradient(const Vec3& x) const {
    const double r2 = dot(x, x);
    const double s = std::visit(
        [r2](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ZeroPotential>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, InverseSquare>) {
            const double d = r2 + p.eps * p.eps;
            return -2.0 * p.a / (d * d);
          } else {
            const double s2 = p.sigma * p.sigma;
            return -2.0 / s2 * p.c * std::exp(-r2 / s2);
          }
        },
        kind_);
    return s * x;
  }

  /// x . grad V(x).
  double radial_virial(const Vec3& x) const {
    const double r2 = dot(x, x);
    return std::visit(
        [r2](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, ZeroPotential>) {
            return 0.0;
          } else if constexpr (std::is_same_v<T, InverseSquare>) {
            if (p.eps == 0.0) return -2.0 * p.a / r2;
            const double d = r2 + p.eps * p.eps;
            return -2.0 * p.a * r2 / (d * d);
          } else {
            const double s2 = p.sigma * p.sigma;
            return -2.0 * r2 / s2 * p.c * std::exp(-r2 / s2);
          }
        },
        kind_);
  }

 private:
  Kind kind_ = ZeroPotential{};
};

/// V, x.grad V and grad V sampled on a grid.
struct PotentialFields {
  RealField v;
  RealField x_grad_v;
  std::array<RealField, 3> grad_v;
  bool zero = false;
};

inline PotentialFields eval_on_grid(const Potential& p, const Grid3& grid) {
  if (p.singular_at_origin() && !grid.staggered()) {
    throw Error(
        "eval_on_grid: inverse-square potential with eps = 0 is singular at the origin node; "
        "use eps > 0 or a staggered grid");
  }
  PotentialFields f{RealField(grid), RealField(grid), {RealField(grid), RealField(grid), RealField(grid)}, p.is_zero()};
  if (f.zero) return f;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const Vec3 x = grid.position(idx);
    const double v = p.value(x);
    const double xv = p.radial_virial(x);
    const Vec3 g = p.gradient(x);
    if (!std::isfinite(v) || !std::isfinite(xv)) {
      throw Error("eval_on_grid: singular potential value at a node; regularize with eps > 0");
    }
    f.v[idx] = v;
    f.x_grad_v[idx] = xv;
    for (int a = 0; a < 3; ++a) f.grad_v[a][idx] = g[a];
  }
  return f;
}

/// Evidence that a potential meets the repulsive-potential hypotheses.
struct PotentialReport {
  std::string kind;
  PotentialClass claimed_class = PotentialClass::Decaying;
  double min_v = 0.0;             ///< nodal minimum of V
  double max_x_grad_v = 0.0;      ///< nodal maximum of x.grad V
  double l32_v = 0.0;             ///< ||V||_{L^{3/2}} over the box
  double l32_x_grad_v = 0.0;      ///< ||x.grad V||_{L^{3/2}} over the box
  double tail_share = 0.0;        ///< share of int |V|^{3/2} from L/2 < |x| < L
  double kato_sup = 0.0;          ///< max over centers of int |V(y)| / |x - y| dy
  bool sign_conditions = true;    ///< V >= 0 and x.grad V <= 0 at every node
  bool decay_conditions = true;   ///< tail share below threshold (L^{3/2} integrability)
  bool inverse_square_identity = false;  ///< x.grad V = -2 V at every node
  std::string verdict;
};

namespace detail {

// Radical inverse in base b; the first three primes give a Halton sequence.
inline double radical_inverse(std::size_t i, unsigned base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

}  // namespace detail

inline constexpr double kTailShareThreshold = 1e-3;

/// Checks sign conditions nodewise, estimates L^{3/2} norms by nodal
/// quadrature and the Kato supremum by quasi-Monte Carlo (Halton points) at
/// 27 lattice centers. Throws on any sign violation.
inline PotentialReport validate_class(const Potential& p, const Grid3& grid, std::size_t kato_samples = 100000) {
  PotentialReport rep;
  rep.kind = p.name();
  rep.claimed_class = p.claimed_class();
  rep.min_v = std::numeric_limits<double>::infinity();
  rep.max_x_grad_v = -std::numeric_limits<double>::infinity();

  const double L = grid.half_width();
  double sum_v = 0.0, sum_xv = 0.0, sum_tail = 0.0, sum_ball = 0.0;
  bool identity = !p.is_zero();
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const Vec3 x = grid.position(idx);
    const double r = norm(x);
    if (r == 0.0 && p.singular_at_origin()) continue;
    const double v = p.value(x);
    const double xv = p.radial_virial(x);
    rep.min_v = std::min(rep.min_v, v);
    rep.max_x_grad_v = std::max(rep.max_x_grad_v, xv);
    const double v32 = std::pow(std::abs(v), 1.5);
    sum_v += v32;
    sum_xv += std::pow(std::abs(xv), 1.5);
    if (r < L) {
      sum_ball += v32;
      if (r > 0.5 * L) sum_tail += v32;
    }
    if (std::abs(xv + 2.0 * v) > 1e-12 * std::max(1.0, std::abs(v))) identity = false;
  }
  const double dv = grid.cell_volume();
  rep.l32_v = std::pow(sum_v * dv, 2.0 / 3.0);
  rep.l32_x_grad_v = std::pow(sum_xv * dv, 2.0 / 3.0);
  rep.tail_share = sum_ball > 0.0 ? sum_tail / sum_ball : 0.0;
  rep.inverse_square_identity = identity;
  rep.sign_conditions = rep.min_v >= 0.0 && rep.max_x_grad_v <= 0.0;
  if (!rep.sign_conditions) {
    throw Error("validate_class: potential '" + rep.kind + "' violates the repulsive sign conditions (min V = " +
                std::to_string(rep.min_v) + ", max x.grad V = " + std::to_string(rep.max_x_grad_v) + ")");
  }
  rep.decay_conditions = rep.tail_share < kTailShareThreshold;

  if (!p.is_zero()) {
    const double box = 2.0 * L;
    for (int a = -1; a <= 1; ++a) {
      for (int b = -1; b <= 1; ++b) {
        for (int c = -1; c <= 1; ++c) {
          const Vec3 center{0.5 * L * a, 0.5 * L * b, 0.5 * L * c};
          double acc = 0.0;
          for (std::size_t s = 1; s <= kato_samples; ++s) {
            const Vec3 y{-L + box * detail::radical_inverse(s, 2), -L + box * detail::radical_inverse(s, 3),
                         -L + box * detail::radical_inverse(s, 5)};
            const double d = norm(y - center);
            if (d == 0.0) continue;
            acc += std::abs(p.value(y)) / d;
          }
          rep.kato_sup = std::max(rep.kato_sup, acc * grid.box_volume() / static_cast<double>(kato_samples));
        }
      }
    }
  }

  if (rep.claimed_class == PotentialClass::InverseSquare) {
    const std::string cls = rep.inverse_square_identity ? "satisfies inverse-square class"
                                                        : "regularized inverse square, x.grad V = -2V fails near the core";
    rep.verdict = rep.decay_conditions ? "decay conditions hold on this box; " + cls
                                       : "fails L^{3/2} decay conditions; " + cls;
  } else {
    rep.verdict = rep.decay_conditions ? "decaying repulsive class: sign and decay conditions hold"
                                       : "decaying class claimed but tail share exceeds threshold";
  }
  return rep;
}

}  // namespace nlslab
