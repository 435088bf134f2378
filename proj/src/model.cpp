#include "spdelab/model.hpp"

#include "spdelab/error.hpp"
#include "spdelab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spdelab {

namespace {

constexpr double kFdStep = 1e-3;

// Fourth-order central difference of f along `axis`.
template <typename F>
auto central4(const F& f, const Point& x, int axis) {
  Point e = Point::Zero();
  e[axis] = kFdStep;
  return (-f(x + 2 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2 * e)) / (12.0 * kFdStep);
}

void require_finite(double v, const char* field, double t, const Point& x) {
  if (!std::isfinite(v)) {
    throw EvaluationError(field, "value " + std::to_string(v) + " at t=" + std::to_string(t) +
                                     ", x=(" + std::to_string(x[0]) + "," + std::to_string(x[1]) + ")");
  }
}

}  // namespace

Vec2 CoefficientSet::divergence_of_a(double t, const Point& x) const {
  if (div_a) return div_a(t, x);
  Vec2 out = Vec2::Zero();
  for (int j = 0; j < dim; ++j) {
    const Vec2 col = central4([&](const Point& p) -> Vec2 { return a(t, p).col(j); }, x, j);
    out += col;
  }
  if (dim == 1) out[1] = 0.0;
  return out;
}

double CoefficientSet::divergence_of_b(double t, const Point& x) const {
  if (div_b) return div_b(t, x);
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += central4([&](const Point& p) { return b(t, p)[i]; }, x, i);
  return s;
}

double CoefficientSet::divergence_of_sigma(double t, const Point& x, int l) const {
  if (sigma_zero) return 0.0;
  double s = 0.0;
  for (int i = 0; i < dim; ++i) s += central4([&](const Point& p) { return sigma(t, p, l)[i]; }, x, i);
  return s;
}

void CoefficientSpec::normalize() {
  if (dim != 1 && dim != 2) throw ConfigError("dimension must be 1 or 2");
  if (drivers < 1) throw ConfigError("driver count must be positive");
  if (sigma.size() > static_cast<std::size_t>(drivers) || h.size() > static_cast<std::size_t>(drivers) ||
      g.size() > static_cast<std::size_t>(drivers)) {
    throw ConfigError("per-driver coefficient index exceeds the driver count");
  }
  sigma.resize(drivers);
  h.resize(drivers);
  g.resize(drivers);
}

CoefficientSet CoefficientSpec::build() const {
  CoefficientSpec s = *this;
  s.normalize();
  CoefficientSet c;
  c.dim = s.dim;
  c.drivers = s.drivers;
  const int dim = s.dim;
  const bool have_a = !(s.a[0].is_zero() && s.a[1].is_zero() && s.a[2].is_zero());

  if (!s.sigma_hat.empty()) {
    c.sigma_hat_columns = static_cast<int>(s.sigma_hat.size());
    auto sh = s.sigma_hat;
    c.sigma_hat = [sh, dim](double t, const Point& x, int k) {
      Vec2 v(sh[k][0](t, x), dim == 2 ? sh[k][1](t, x) : 0.0);
      return v;
    };
  }
  if (have_a || s.sigma_hat.empty()) {
    auto a = s.a;
    c.a = [a, dim](double t, const Point& x) {
      Mat2 m = Mat2::Zero();
      m(0, 0) = a[0](t, x);
      if (dim == 2) {
        m(0, 1) = m(1, 0) = a[1](t, x);
        m(1, 1) = a[2](t, x);
      }
      return m;
    };
    c.div_a = [a, dim](double t, const Point& x) {
      Vec2 v = Vec2::Zero();
      v[0] = a[0].gradient(t, x)[0];
      if (dim == 2) {
        v[0] += a[1].gradient(t, x)[1];
        v[1] = a[1].gradient(t, x)[0] + a[2].gradient(t, x)[1];
      }
      return v;
    };
  } else {
    // a derived from the factorization.
    auto sh = c.sigma_hat;
    const int cols = c.sigma_hat_columns;
    c.a = [sh, cols](double t, const Point& x) {
      Mat2 m = Mat2::Zero();
      for (int k = 0; k < cols; ++k) {
        const Vec2 v = sh(t, x, k);
        m += v * v.transpose();
      }
      return m;
    };
  }
  auto b = s.b;
  c.b = [b, dim](double t, const Point& x) { return Vec2(b[0](t, x), dim == 2 ? b[1](t, x) : 0.0); };
  c.div_b = [b, dim](double t, const Point& x) {
    double d = b[0].gradient(t, x)[0];
    if (dim == 2) d += b[1].gradient(t, x)[1];
    return d;
  };
  auto cc = s.c;
  c.c = [cc](double t, const Point& x) { return cc(t, x); };
  auto sig = s.sigma;
  c.sigma = [sig, dim](double t, const Point& x, int l) {
    return Vec2(sig[l][0](t, x), dim == 2 ? sig[l][1](t, x) : 0.0);
  };
  auto hh = s.h;
  c.h = [hh](double t, const Point& x, int l) { return hh[l](t, x); };
  auto ff = s.f;
  c.f = [ff](double t, const Point& x) { return ff(t, x); };
  auto gg = s.g;
  c.g = [gg](double t, const Point& x, int l) { return gg[l](t, x); };

  auto all_zero = [](const auto& fields) {
    return std::all_of(fields.begin(), fields.end(), [](const ScalarField& f) { return f.is_zero(); });
  };
  c.c_zero = s.c.is_zero();
  c.f_zero = s.f.is_zero();
  c.h_zero = all_zero(s.h);
  c.g_zero = all_zero(s.g);
  c.sigma_zero = std::all_of(s.sigma.begin(), s.sigma.end(), [&](const auto& col) { return all_zero(col); });

  bool ti = true;
  auto check_ti = [&ti](const ScalarField& f) { ti = ti && f.time_slope() == 0.0; };
  for (const auto& f : s.a) check_ti(f);
  for (const auto& f : s.b) check_ti(f);
  check_ti(s.c);
  check_ti(s.f);
  for (const auto& col : s.sigma) for (const auto& f : col) check_ti(f);
  for (const auto& f : s.h) check_ti(f);
  for (const auto& f : s.g) check_ti(f);
  for (const auto& col : s.sigma_hat) for (const auto& f : col) check_ti(f);
  c.time_invariant = ti;
  c.description = s.describe();
  return c;
}

std::string CoefficientSpec::describe() const {
  std::string out = "dim=" + std::to_string(dim) + ";drivers=" + std::to_string(drivers);
  auto add = [&out](const std::string& key, const ScalarField& f) {
    if (!f.is_zero()) out += ";" + key + "=" + f.describe();
  };
  add("a11", a[0]);
  add("a12", a[1]);
  add("a22", a[2]);
  add("b1", b[0]);
  add("b2", b[1]);
  add("c", c);
  add("f", f);
  for (std::size_t l = 0; l < sigma.size(); ++l) {
    add("sigma1" + std::to_string(l + 1), sigma[l][0]);
    add("sigma2" + std::to_string(l + 1), sigma[l][1]);
  }
  for (std::size_t l = 0; l < h.size(); ++l) add("h" + std::to_string(l + 1), h[l]);
  for (std::size_t l = 0; l < g.size(); ++l) add("g" + std::to_string(l + 1), g[l]);
  for (std::size_t k = 0; k < sigma_hat.size(); ++k) {
    add("sigma_hat1" + std::to_string(k + 1), sigma_hat[k][0]);
    add("sigma_hat2" + std::to_string(k + 1), sigma_hat[k][1]);
  }
  return out;
}

void validate_coefficients(const CoefficientSet& coeffs, const Grid& grid, std::span<const double> times) {
  if (grid.dim() != coeffs.dim) throw ConfigError("grid and coefficient dimensions differ");
  for (double t : times) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point x = grid.point(k);
      const Mat2 a = coeffs.a(t, x);
      for (int i = 0; i < coeffs.dim; ++i) {
        for (int j = 0; j < coeffs.dim; ++j) require_finite(a(i, j), "a", t, x);
      }
      if (coeffs.dim == 2 && a(0, 1) != a(1, 0)) {
        throw ModelInvariantError("a is not symmetric at x=(" + std::to_string(x[0]) + "," + std::to_string(x[1]) +
                                  ")");
      }
      const Vec2 b = coeffs.b(t, x);
      for (int i = 0; i < coeffs.dim; ++i) require_finite(b[i], "b", t, x);
      require_finite(coeffs.c(t, x), "c", t, x);
      require_finite(coeffs.f(t, x), "f", t, x);
      for (int l = 0; l < coeffs.drivers; ++l) {
        const Vec2 s = coeffs.sigma(t, x, l);
        for (int i = 0; i < coeffs.dim; ++i) require_finite(s[i], "sigma", t, x);
        require_finite(coeffs.h(t, x, l), "h", t, x);
        require_finite(coeffs.g(t, x, l), "g", t, x);
      }
      if (coeffs.has_factorization()) {
        Mat2 ss = Mat2::Zero();
        for (int k2 = 0; k2 < coeffs.sigma_hat_columns; ++k2) {
          const Vec2 v = coeffs.sigma_hat(t, x, k2);
          ss += v * v.transpose();
        }
        const double scale = std::max(a.cwiseAbs().maxCoeff(), ss.cwiseAbs().maxCoeff());
        const double diff = (a - ss).topLeftCorner(coeffs.dim, coeffs.dim).cwiseAbs().maxCoeff();
        if (diff > 1e-12 * std::max(scale, 1e-300) && diff > 0.0) {
          throw ModelInvariantError("a = sigma_hat sigma_hat^T violated at x=(" + std::to_string(x[0]) + "," +
                                    std::to_string(x[1]) + "): mismatch " + std::to_string(diff));
        }
      }
    }
  }
}

double parabolic_defect(const CoefficientSet& coeffs, double t, const Point& x, const Vec2& xi) {
  const Mat2 a = coeffs.a(t, x);
  const int d = coeffs.dim;
  const Vec2 v = d == 1 ? Vec2(xi[0], 0.0) : xi;
  double quad = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      require_finite(a(i, j), "a", t, x);
      quad += a(i, j) * v[i] * v[j];
    }
  }
  double noise = 0.0;
  for (int l = 0; l < coeffs.drivers; ++l) {
    const Vec2 s = coeffs.sigma(t, x, l);
    double proj = 0.0;
    for (int i = 0; i < d; ++i) {
      require_finite(s[i], "sigma", t, x);
      proj += s[i] * v[i];
    }
    noise += proj * proj;
  }
  return 2.0 * quad - noise;
}

std::vector<Vec2> sample_directions(int dim, int n_dirs, std::uint64_t seed) {
  if (n_dirs < 2 * dim) throw ConfigError("need at least 2d sampled directions");
  std::vector<Vec2> dirs;
  dirs.reserve(n_dirs);
  for (int i = 0; i < dim; ++i) dirs.push_back(i == 0 ? Vec2(1.0, 0.0) : Vec2(0.0, 1.0));
  for (int k = dim; k < n_dirs; ++k) {
    const auto idx = static_cast<std::uint64_t>(k);
    if (dim == 1) {
      dirs.emplace_back(counter_uniform(seed, 0, idx) < 0.5 ? -1.0 : 1.0, 0.0);
    } else {
      const double angle = 2.0 * std::numbers::pi * counter_uniform(seed, 0, idx);
      dirs.emplace_back(std::cos(angle), std::sin(angle));
    }
  }
  return dirs;
}

ParabolicityReport verify_parabolicity(const CoefficientSet& coeffs, const Grid& grid, std::span<const double> times,
                                       const ScalarFn& kappa, int n_dirs, std::uint64_t direction_seed) {
  if (grid.size() == 0 || times.empty()) throw ConfigError("parabolicity check needs a grid and at least one time");
  const auto dirs = sample_directions(coeffs.dim, n_dirs, direction_seed);
  constexpr std::size_t kWitnesses = 5;
  ParabolicityReport rep;
  rep.min_defect = std::numeric_limits<double>::infinity();
  rep.kappa_floor = std::numeric_limits<double>::infinity();
  for (double t : times) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point x = grid.point(k);
      const double kap = kappa(t, x);
      rep.kappa_floor = std::min(rep.kappa_floor, kap);
      for (const Vec2& xi : dirs) {
        const double d = parabolic_defect(coeffs, t, x, xi) - kap * xi.squaredNorm();
        ++rep.samples;
        rep.min_defect = std::min(rep.min_defect, d);
        if (rep.witnesses.size() < kWitnesses || d < rep.witnesses.back().defect) {
          rep.witnesses.push_back({t, x, xi, d});
          std::sort(rep.witnesses.begin(), rep.witnesses.end(),
                    [](const auto& l, const auto& r) { return l.defect < r.defect; });
          if (rep.witnesses.size() > kWitnesses) rep.witnesses.pop_back();
        }
      }
    }
  }
  rep.passed = rep.min_defect >= -rep.tolerance;
  return rep;
}

FactorizedMargin factorized_margin(const CoefficientSet& coeffs, double alpha, double t, const Point& x,
                                   const Vec2& xi) {
  if (!coeffs.has_factorization()) throw ConfigError("factorized margin needs sigma_hat");
  if (!(alpha > 0.5)) throw ArgumentError("factorized margin needs alpha > 1/2");
  const int d = coeffs.dim;
  auto proj = [d, &xi](const Vec2& col) { return d == 1 ? col[0] * xi[0] : col.dot(xi); };
  double hat = 0.0;
  for (int k = 0; k < coeffs.sigma_hat_columns; ++k) {
    const double p = proj(coeffs.sigma_hat(t, x, k));
    hat += p * p;
  }
  double noise = 0.0;
  for (int l = 0; l < coeffs.drivers; ++l) {
    const double p = proj(coeffs.sigma(t, x, l));
    noise += p * p;
  }
  return {hat - alpha * noise, (2.0 * alpha - 1.0) / (1.0 + alpha)};
}

}  // namespace spdelab
