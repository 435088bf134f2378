#include "spdelab/mollifier.hpp"

#include "spdelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spdelab {

namespace {

double bump_factor(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }

double normalization(int dim) { return dim == 1 ? kBumpNormalization1 : kBumpNormalization2; }

double norm_d(const Point& x, int dim) { return dim == 1 ? std::abs(x[0]) : x.norm(); }

double sq_d(const Point& x, int dim) { return dim == 1 ? x[0] * x[0] : x.squaredNorm(); }

}  // namespace

void MollifierParams::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ArgumentError("mollifier epsilon must lie in (0, 1)");
  if (dim != 1 && dim != 2) throw ArgumentError("mollifier dimension must be 1 or 2");
}

double kernel(const Point& x, int dim) {
  const double s = sq_d(x, dim);
  if (s >= 1.0) return 0.0;
  return normalization(dim) * std::exp(-1.0 / (1.0 - s));
}

Vec2 kernel_gradient(const Point& x, int dim) {
  const double s = sq_d(x, dim);
  if (s >= 1.0) return Vec2::Zero();
  const double r = kernel(x, dim);
  const double q = 1.0 - s;
  Vec2 g = -2.0 * r / (q * q) * x;
  if (dim == 1) g[1] = 0.0;
  return g;
}

double kernel_eps(const Point& x, double eps, int dim) {
  return kernel(x / eps, dim) / std::pow(eps, dim);
}

Vec2 kernel_eps_gradient(const Point& x, double eps, int dim) {
  return kernel_gradient(x / eps, dim) / std::pow(eps, dim + 1);
}

double cutoff_profile(double r) {
  if (r <= 1.0) return 1.0;
  if (r >= 2.0) return 0.0;
  const double a = bump_factor(2.0 - r);
  const double b = bump_factor(r - 1.0);
  return a / (a + b);
}

double cutoff_profile_derivative(double r) {
  if (r <= 1.0 || r >= 2.0) return 0.0;
  const double s = 2.0 - r;
  const double u = r - 1.0;
  const double a = bump_factor(s);
  const double b = bump_factor(u);
  const double da = -a / (s * s);
  const double db = b / (u * u);
  return (da * b - a * db) / ((a + b) * (a + b));
}

double cutoff(const Point& x, const MollifierParams& p) { return cutoff_profile(p.epsilon * norm_d(x, p.dim)); }

Vec2 cutoff_gradient(const Point& x, const MollifierParams& p) {
  const double r = norm_d(x, p.dim);
  const double d = cutoff_profile_derivative(p.epsilon * r);
  if (d == 0.0) return Vec2::Zero();
  Vec2 g = p.epsilon * d / r * x;
  if (p.dim == 1) g[1] = 0.0;
  return g;
}

double kernel_lattice_mass(const MollifierParams& p, double h) {
  p.validate();
  const int m = static_cast<int>(std::ceil(p.epsilon / h));
  double sum = 0.0;
  const int jmax = p.dim == 2 ? m : 0;
  for (int j = -jmax; j <= jmax; ++j) {
    for (int i = -m; i <= m; ++i) sum += kernel_eps(Point(i * h, j * h), p.epsilon, p.dim);
  }
  return sum * std::pow(h, p.dim);
}

void require_resolved(const MollifierParams& p, double h) {
  p.validate();
  if (p.epsilon < 2.0 * h) throw UnderResolutionError(p.epsilon, 2.0 * h);
}

KernelStencil::KernelStencil(const MollifierParams& p, double h) : p_(p) {
  require_resolved(p, h);
  const int m = static_cast<int>(std::ceil(p.epsilon / h));
  const int jmax = p.dim == 2 ? m : 0;
  for (int j = -jmax; j <= jmax; ++j) {
    for (int i = -m; i <= m; ++i) {
      const Point y(i * h, j * h);
      const double w = kernel_eps(y, p.epsilon, p.dim);
      if (w > 0.0) {
        offsets_.push_back(y);
        weights_.push_back(w);
      }
    }
  }
  const double total = compensated_sum(weights_);
  for (double& w : weights_) w /= total;
}

double KernelStencil::apply(const std::function<double(const Point&)>& v, const Point& x) const {
  double s = 0.0;
  for (std::size_t m = 0; m < weights_.size(); ++m) s += weights_[m] * v(x - offsets_[m]);
  return s;
}

std::vector<double> mollify_field(const Grid& grid, std::span<const double> values, const MollifierParams& p,
                                  int chi_power) {
  if (values.size() != grid.size()) throw ArgumentError("field size does not match the grid");
  if (p.dim != grid.dim()) throw ArgumentError("mollifier and grid dimensions differ");
  require_resolved(p, grid.spacing());
  const double h = grid.spacing();
  const int m = static_cast<int>(std::ceil(p.epsilon / h));
  const int jm = grid.dim() == 2 ? m : 0;
  // Unnormalized weights on the offset block.
  std::vector<double> w((2 * m + 1) * (2 * jm + 1));
  for (int dj = -jm; dj <= jm; ++dj) {
    for (int di = -m; di <= m; ++di) {
      w[(di + m) + (2 * m + 1) * (dj + jm)] = kernel_eps(Point(di * h, dj * h), p.epsilon, p.dim);
    }
  }
  const int n0 = grid.n(0);
  const int n1 = grid.dim() == 2 ? grid.n(1) : 1;
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const int i = grid.i_of(k);
    const int j = grid.j_of(k);
    double num = 0.0;
    double den = 0.0;
    for (int dj = -jm; dj <= jm; ++dj) {
      const int jj = j - dj;
      if (jj < 0 || jj >= n1) continue;
      for (int di = -m; di <= m; ++di) {
        const int ii = i - di;
        if (ii < 0 || ii >= n0) continue;
        const double wt = w[(di + m) + (2 * m + 1) * (dj + jm)];
        num += wt * values[grid.index(ii, jj)];
        den += wt;
      }
    }
    out[k] = num / den * std::pow(cutoff(grid.point(k), p), chi_power);
  }
  return out;
}

std::vector<double> mollify_field(const Grid& grid, const ScalarField& v, double t, const MollifierParams& p,
                                  int chi_power) {
  if (p.dim != grid.dim()) throw ArgumentError("mollifier and grid dimensions differ");
  const KernelStencil st(p, grid.spacing());
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point x = grid.point(k);
    out[k] = st.apply([&](const Point& y) { return v(t, y); }, x) * std::pow(cutoff(x, p), chi_power);
  }
  return out;
}

std::vector<double> truncate_drift(const Grid& grid, std::span<const double> b, const MollifierParams& p) {
  p.validate();
  const double cap = 1.0 / p.epsilon;
  std::vector<double> clipped(b.begin(), b.end());
  for (double& v : clipped) v = std::clamp(v, -cap, cap);
  return mollify_field(grid, clipped, p, 0);
}

std::vector<double> truncate_drift(const Grid& grid, const ScalarField& b, double t, const MollifierParams& p) {
  if (p.dim != grid.dim()) throw ArgumentError("mollifier and grid dimensions differ");
  const KernelStencil st(p, grid.spacing());
  const double cap = 1.0 / p.epsilon;
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out[k] = st.apply([&](const Point& y) { return std::clamp(b(t, y), -cap, cap); }, grid.point(k));
  }
  return out;
}

double mollify_at(const std::function<double(const Point&)>& v, const Point& x, const MollifierParams& p,
                  int nodes) {
  p.validate();
  if (nodes < 2) throw ArgumentError("mollify_at needs at least two nodes");
  const double eps = p.epsilon;
  const double step = 2.0 * eps / nodes;
  double num = 0.0;
  double den = 0.0;
  const int jn = p.dim == 2 ? nodes : 1;
  for (int j = 0; j < jn; ++j) {
    const double oy = p.dim == 2 ? (j + 0.5) * step - eps : 0.0;
    for (int i = 0; i < nodes; ++i) {
      const Point off((i + 0.5) * step - eps, oy);
      const double w = kernel_eps(off, eps, p.dim);
      if (w == 0.0) continue;
      num += w * v(x - off);
      den += w;
    }
  }
  return num / den;
}

CoefficientSet mollify_coefficients(const CoefficientSet& coeffs, const MollifierParams& p, double h) {
  if (p.dim != coeffs.dim) throw ArgumentError("mollifier and coefficient dimensions differ");
  const auto st = std::make_shared<const KernelStencil>(p, h);
  const auto src = std::make_shared<const CoefficientSet>(coeffs);
  const double cap = 1.0 / p.epsilon;
  CoefficientSet out = coeffs;
  out.div_a = nullptr;
  out.div_b = nullptr;
  out.sigma_hat = nullptr;
  out.sigma_hat_columns = 0;

  auto conv_vec = [st](const std::function<Vec2(const Point&)>& v, const Point& x) {
    Vec2 s = Vec2::Zero();
    const auto& w = st->weights();
    const auto& off = st->offsets();
    for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * v(x - off[m]);
    return s;
  };

  out.a = [st, src, p](double t, const Point& x) {
    Mat2 s = Mat2::Zero();
    const auto& w = st->weights();
    const auto& off = st->offsets();
    for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * src->a(t, x - off[m]);
    const double chi = cutoff(x, p);
    return Mat2(s * chi * chi);
  };
  out.b = [src, conv_vec, cap](double t, const Point& x) {
    return conv_vec(
        [&](const Point& y) {
          const Vec2 b = src->b(t, y);
          return Vec2(std::clamp(b[0], -cap, cap), std::clamp(b[1], -cap, cap));
        },
        x);
  };
  out.sigma = [src, conv_vec, p](double t, const Point& x, int l) {
    return Vec2(conv_vec([&](const Point& y) { return src->sigma(t, y, l); }, x) * cutoff(x, p));
  };
  out.c = [src, st, p](double t, const Point& x) {
    return st->apply([&](const Point& y) { return src->c(t, y); }, x) * cutoff(x, p);
  };
  out.f = [src, st, p](double t, const Point& x) {
    return st->apply([&](const Point& y) { return src->f(t, y); }, x) * cutoff(x, p);
  };
  out.h = [src, st, p](double t, const Point& x, int l) {
    return st->apply([&](const Point& y) { return src->h(t, y, l); }, x) * cutoff(x, p);
  };
  out.g = [src, st, p](double t, const Point& x, int l) {
    return st->apply([&](const Point& y) { return src->g(t, y, l); }, x) * cutoff(x, p);
  };
  out.description = coeffs.description + ";mollified eps=" + std::to_string(p.epsilon);
  return out;
}

ParabolicityReport mollified_parabolicity_check(const CoefficientSet& coeffs, const MollifierParams& p,
                                                const Grid& grid, std::span<const double> times,
                                                const ScalarFn& kappa, int n_dirs, std::uint64_t direction_seed) {
  const ParabolicityReport raw = verify_parabolicity(coeffs, grid, times, kappa, n_dirs, direction_seed);
  if (!raw.passed) {
    throw HypothesisError("coefficients violate the unmollified parabolic condition (min defect " +
                          std::to_string(raw.min_defect) + ")");
  }
  const KernelStencil st(p, grid.spacing());
  const auto dirs = sample_directions(coeffs.dim, n_dirs, direction_seed);
  const auto& w = st.weights();
  const auto& off = st.offsets();
  const int d = coeffs.dim;

  ParabolicityReport rep;
  rep.tolerance = 1e-10;
  rep.min_defect = std::numeric_limits<double>::infinity();
  rep.kappa_floor = raw.kappa_floor;
  std::vector<Vec2> sig(coeffs.drivers);
  for (double t : times) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point x = grid.point(k);
      Mat2 a = Mat2::Zero();
      double kap = 0.0;
      std::fill(sig.begin(), sig.end(), Vec2::Zero());
      for (std::size_t m = 0; m < w.size(); ++m) {
        const Point y = x - off[m];
        a += w[m] * coeffs.a(t, y);
        kap += w[m] * kappa(t, y);
        for (int l = 0; l < coeffs.drivers; ++l) sig[l] += w[m] * coeffs.sigma(t, y, l);
      }
      const double chi = cutoff(x, p);
      a *= chi * chi;
      for (auto& s : sig) s *= chi;
      for (const Vec2& xi0 : dirs) {
        const Vec2 xi = d == 1 ? Vec2(xi0[0], 0.0) : xi0;
        double noise = 0.0;
        for (const auto& s : sig) noise += std::pow(s.dot(xi), 2);
        const double defect = 2.0 * xi.dot(a * xi) - noise - kap * chi * chi * xi.squaredNorm();
        ++rep.samples;
        if (defect < rep.min_defect) {
          rep.min_defect = defect;
          rep.witnesses.assign(1, {t, x, xi, defect});
        }
      }
    }
  }
  rep.passed = rep.min_defect >= -rep.tolerance;
  return rep;
}

double jensen_gap(const CoefficientSet& coeffs, const MollifierParams& p, const Grid& grid, double t, int n_dirs,
                  std::uint64_t direction_seed) {
  const KernelStencil st(p, grid.spacing());
  const auto dirs = sample_directions(coeffs.dim, n_dirs, direction_seed);
  const auto& w = st.weights();
  const auto& off = st.offsets();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point x = grid.point(k);
    const double chi2 = std::pow(cutoff(x, p), 2);
    for (const Vec2& xi0 : dirs) {
      const Vec2 xi = coeffs.dim == 1 ? Vec2(xi0[0], 0.0) : xi0;
      for (int l = 0; l < coeffs.drivers; ++l) {
        double lin = 0.0;
        double sq = 0.0;
        for (std::size_t m = 0; m < w.size(); ++m) {
          const double v = coeffs.sigma(t, x - off[m], l).dot(xi);
          lin += w[m] * v;
          sq += w[m] * v * v;
        }
        worst = std::max(worst, (lin * lin - sq) * chi2);
      }
    }
  }
  return worst;
}

double cutoff_derivative_bound(const MollifierParams& p, const Grid& grid) {
  p.validate();
  double c = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) c = std::max(c, cutoff_gradient(grid.point(k), p).norm());
  return c / p.epsilon;
}

DivBoundRow div_bound_check(const ScalarField& b, const MollifierParams& p, const Grid& grid) {
  if (grid.dim() != 1 || p.dim != 1) throw ArgumentError("div_bound_check is one-dimensional");
  if (!b.differentiable()) throw HypothesisError("div_bound_check needs a differentiable drift");
  const double reach = 2.0 / p.epsilon + p.epsilon;
  if (grid.lo(0) > -reach || grid.hi(0) < reach) {
    throw ConfigError("grid must cover |x| <= 2/eps + eps = " + std::to_string(reach));
  }
  const KernelStencil st(p, grid.spacing());
  DivBoundRow row;
  row.epsilon = p.epsilon;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point x = grid.point(k);
    const double chi = cutoff(x, p);
    const double dchi = cutoff_gradient(x, p)[0];
    if (chi != 0.0 || dchi != 0.0) {
      const double bm = st.apply([&](const Point& y) { return b(0.0, y); }, x);
      const double dbm = st.apply([&](const Point& y) { return b.gradient(0.0, y)[0]; }, x);
      row.sup_div_mollified = std::max(row.sup_div_mollified, std::abs(dbm * chi + bm * dchi));
    }
    if (std::abs(x[0]) <= reach) {
      row.div_norm = std::max(row.div_norm, std::abs(b.gradient(0.0, x)[0]));
      row.growth_norm = std::max(row.growth_norm, std::abs(b(0.0, x)) / (1.0 + std::abs(x[0])));
    }
  }
  // First term: positive normalized kernel and chi <= 1 give constant 1.
  // Second term: |d chi_eps| <= K eps on the shell, and eps (1 + |y|) is
  // bounded there by 2 + eps + eps^2.
  const double k_chi = cutoff_derivative_bound(p, grid);
  row.constant = std::max(1.0, k_chi * (2.0 + p.epsilon + p.epsilon * p.epsilon));
  row.bound = row.constant * (row.div_norm + row.growth_norm);
  row.passed = row.sup_div_mollified <= row.bound;
  return row;
}

DivBoundSweep div_bound_sweep(const ScalarField& b, std::span<const double> epsilons, const Grid& grid) {
  if (epsilons.empty()) throw ArgumentError("empty epsilon sweep");
  DivBoundSweep sweep;
  double largest = -1.0;
  double left_at_largest = 0.0;
  double left_max = 0.0;
  bool all = true;
  for (double eps : epsilons) {
    sweep.rows.push_back(div_bound_check(b, MollifierParams{eps, 1}, grid));
    const auto& r = sweep.rows.back();
    all = all && r.passed;
    left_max = std::max(left_max, r.sup_div_mollified);
    if (eps > largest) {
      largest = eps;
      left_at_largest = r.sup_div_mollified;
    }
  }
  sweep.uniform = all && left_max <= 2.0 * left_at_largest;
  return sweep;
}

}  // namespace spdelab
