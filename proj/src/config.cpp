#include "spdelab/config.hpp"

#include "spdelab/error.hpp"
#include "spdelab/format.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace spdelab {
namespace {

namespace pt = boost::property_tree;

const std::set<std::string> kSections{"", "grid", "time", "coefficients", "filter", "picard", "commutator", "checks"};

// Fixed keys per section; indexed coefficient keys are matched by pattern.
const std::map<std::string, std::set<std::string>> kKeys{
    {"", {"name"}},
    {"grid", {"dim", "lo", "hi", "n", "boundary"}},
    {"time", {"dt", "t_end", "theta", "outputs", "seed", "stability_guard", "milstein", "mollify_eps"}},
    {"coefficients", {"drivers", "a11", "a12", "a22", "b1", "b2", "c", "f", "u0", "kappa"}},
    {"filter",
     {"model", "A", "Q", "H", "R", "m0", "P0", "b_hat", "sigma_hat", "b_tilde", "sigma_tilde", "prior", "prior_lo",
      "prior_hi", "x0", "K", "state_limit", "particles", "truth_seed", "particle_seed", "kushner",
      "extended_t_end"}},
    {"picard", {"f", "g", "tol", "max_iter", "guess", "residual_phi", "residual_threshold"}},
    {"commutator", {"b", "u", "c", "a", "epsilons", "radius", "exponent"}},
    {"checks",
     {"exact", "exact_tol", "refine", "refine_ratio", "mass_tol", "positivity_tol", "l1_sharp", "l1_decay_rate",
      "weak_phi", "weak_tol", "energy_tol", "energy_halving", "ensemble_paths", "ensemble_tol", "continuity_phi",
      "kalman_tol", "steady_state", "particle_sigmas", "kushner_tol", "mollifier_eps", "div_bound_b", "div_bound_fail_b",
      "div_bound_epsilons", "sweep_tol", "sweep_last_first", "gap_tol", "identity_tol", "picard_max_iterations",
      "picard_ratio", "picard_guess_tol", "picard_linear_lambda", "picard_linear_tol", "picard_growth"}},
};

const std::regex kCoeffIndexed{R"((sigma|sigma_hat)([12])([1-9])|(h|g)([1-9]))"};
const std::regex kFilterIndexed{R"((b_tilde|phi)([1-9]))"};

bool known_key(const std::string& section, const std::string& key) {
  if (kKeys.at(section).count(key)) return true;
  if (section == "coefficients") return std::regex_match(key, kCoeffIndexed);
  if (section == "filter") return std::regex_match(key, kFilterIndexed);
  return false;
}

std::string path_of(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

class Reader {
 public:
  Reader(const RawConfig& raw, std::string section) : raw_(raw), section_(std::move(section)) {}

  bool has(const std::string& key) const {
    auto s = raw_.find(section_);
    return s != raw_.end() && s->second.count(key);
  }
  const std::string& text(const std::string& key) const { return raw_.at(section_).at(key); }
  std::string text(const std::string& key, const std::string& def) const { return has(key) ? text(key) : def; }

  double number(const std::string& key, double def) const { return has(key) ? to_number(key, text(key)) : def; }
  std::optional<double> maybe_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return to_number(key, text(key));
  }
  int integer(const std::string& key, int def) const {
    const double v = number(key, def);
    if (v != std::floor(v) || std::abs(v) > 2e9) throw ValidationError(path_of(section_, key), "expected an integer");
    return static_cast<int>(v);
  }
  std::uint64_t seed(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(text(key), &used);
      if (used != text(key).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ParseError("key '" + path_of(section_, key) + "': expected an unsigned integer, got '" + text(key) + "'");
    }
  }
  bool flag(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const auto& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("key '" + path_of(section_, key) + "': expected a boolean, got '" + v + "'");
  }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream in(text(key));
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(to_number(key, item));
    return out;
  }
  ScalarField field(const std::string& key, const ScalarField& def = {}) const {
    if (!has(key)) return def;
    try {
      return ScalarField::parse(text(key));
    } catch (const ParseError& e) {
      throw ParseError("key '" + path_of(section_, key) + "': " + e.what());
    }
  }
  TestFunction test_function(const std::string& key) const {
    try {
      return TestFunction::parse(text(key));
    } catch (const ParseError& e) {
      throw ParseError("key '" + path_of(section_, key) + "': " + e.what());
    }
  }

 private:
  double to_number(const std::string& key, const std::string& v) const {
    try {
      return parse_double(v);
    } catch (const std::invalid_argument&) {
      throw ParseError("key '" + path_of(section_, key) + "': expected a number, got '" + v + "'");
    }
  }

  const RawConfig& raw_;
  std::string section_;
};

RawConfig read_tree(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ParseError(std::string("config syntax: ") + e.what());
  }
  RawConfig raw;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      // Top-level key (before any section header).
      if (!known_key("", name)) throw ParseError("unknown key '" + name + "'");
      raw[""][name] = node.data();
      continue;
    }
    if (!kSections.count(name) || name.empty()) throw ParseError("unknown section '" + name + "'");
    for (const auto& [key, leaf] : node) {
      if (!known_key(name, key)) throw ParseError("unknown key '" + path_of(name, key) + "'");
      raw[name][key] = leaf.data();
    }
  }
  return raw;
}

GridSpec parse_grid(const RawConfig& raw) {
  Reader r(raw, "grid");
  GridSpec g;
  g.dim = r.integer("dim", 1);
  if (g.dim != 1 && g.dim != 2) throw ValidationError("grid.dim", "must be 1 or 2");
  auto fill = [&](const std::string& key, auto& dst, auto convert) {
    if (!r.has(key)) return;
    const auto v = r.list(key);
    if (v.size() == 1) {
      dst[0] = dst[1] = convert(v[0]);
    } else if (v.size() == 2 && g.dim == 2) {
      dst[0] = convert(v[0]);
      dst[1] = convert(v[1]);
    } else {
      throw ValidationError("grid." + key, "expected one value per axis");
    }
  };
  fill("lo", g.lo, [](double v) { return v; });
  fill("hi", g.hi, [](double v) { return v; });
  fill("n", g.n, [](double v) {
    if (v != std::floor(v)) throw ValidationError("grid.n", "expected an integer");
    return static_cast<int>(v);
  });
  for (int a = 0; a < g.dim; ++a) {
    if (g.n[a] < 16) throw ValidationError("grid.n", "need at least 16 cells per axis, got " + std::to_string(g.n[a]));
    if (!(g.hi[a] > g.lo[a])) throw ValidationError("grid.hi", "upper bound must exceed lower bound");
  }
  if (g.dim == 2) {
    const double h0 = (g.hi[0] - g.lo[0]) / g.n[0];
    const double h1 = (g.hi[1] - g.lo[1]) / g.n[1];
    if (std::abs(h0 - h1) > 1e-12 * h0) throw ValidationError("grid.n", "both axes must share the same spacing");
  }
  try {
    g.boundary = boundary_from_string(r.text("boundary", "zero-flux"));
  } catch (const Error& e) {
    throw ValidationError("grid.boundary", e.what());
  }
  return g;
}

TimeSpec parse_time(const RawConfig& raw) {
  Reader r(raw, "time");
  TimeSpec t;
  t.solver.dt = r.number("dt", t.solver.dt);
  t.t_end = r.number("t_end", t.t_end);
  t.outputs = r.integer("outputs", t.outputs);
  t.seed = r.seed("seed", t.seed);
  t.solver.theta = r.number("theta", 1.0);
  t.solver.stability_guard = r.flag("stability_guard", true);
  t.solver.milstein = r.flag("milstein", false);
  t.solver.mollify_eps = r.maybe_number("mollify_eps");
  try {
    t.solver.validate();
  } catch (const Error& e) {
    throw ValidationError("time", e.what());
  }
  if (!(t.t_end > 0.0)) throw ValidationError("time.t_end", "must be positive");
  const double steps = t.t_end / t.solver.dt;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps) {
    throw ValidationError("time.t_end", "must be a whole number of steps");
  }
  if (t.outputs < 1 || t.n_steps() % t.outputs != 0) {
    throw ValidationError("time.outputs", "must divide the step count " + std::to_string(t.n_steps()));
  }
  return t;
}

void parse_coefficients(const RawConfig& raw, Scenario& sc) {
  Reader r(raw, "coefficients");
  CoefficientSpec& cs = sc.coefficients;
  cs.dim = sc.grid.dim;
  cs.drivers = r.integer("drivers", 1);
  if (cs.drivers < 1) throw ValidationError("coefficients.drivers", "need at least one driver");
  cs.a = {r.field("a11"), r.field("a12"), r.field("a22")};
  cs.b = {r.field("b1"), r.field("b2")};
  cs.c = r.field("c");
  cs.f = r.field("f");
  cs.sigma.assign(cs.drivers, {});
  cs.h.assign(cs.drivers, {});
  cs.g.assign(cs.drivers, {});
  int hat_columns = 0;
  if (auto it = raw.find("coefficients"); it != raw.end()) {
    for (const auto& [key, value] : it->second) {
      std::smatch m;
      if (!std::regex_match(key, m, kCoeffIndexed)) continue;
      const bool per_axis = m[1].matched;
      const int idx = std::stoi(per_axis ? m[3].str() : m[5].str()) - 1;
      if (per_axis && m[1].str() == "sigma_hat") {
        hat_columns = std::max(hat_columns, idx + 1);
        continue;
      }
      if (idx >= cs.drivers) {
        throw ValidationError("coefficients." + key, "driver index exceeds drivers = " + std::to_string(cs.drivers));
      }
      if (per_axis) {
        const int axis = std::stoi(m[2].str()) - 1;
        if (axis >= cs.dim) throw ValidationError("coefficients." + key, "axis index exceeds the dimension");
        cs.sigma[idx][axis] = r.field(key);
      } else if (m[4].str() == "h") {
        cs.h[idx] = r.field(key);
      } else {
        cs.g[idx] = r.field(key);
      }
    }
  }
  if (hat_columns > 0) {
    cs.sigma_hat.assign(hat_columns, {});
    for (int k = 0; k < hat_columns; ++k) {
      for (int axis = 0; axis < cs.dim; ++axis) {
        cs.sigma_hat[k][axis] = r.field("sigma_hat" + std::to_string(axis + 1) + std::to_string(k + 1));
      }
    }
  }
  if (cs.dim == 1 && (!cs.a[1].is_zero() || !cs.a[2].is_zero() || !cs.b[1].is_zero())) {
    throw ValidationError("coefficients", "second-axis coefficients set on a one-dimensional grid");
  }
  sc.u0 = r.field("u0", ScalarField::gaussian(1.0, Point::Zero(), 1.0));
  sc.kappa = r.field("kappa");
  try {
    cs.normalize();
  } catch (const Error& e) {
    throw ValidationError("coefficients", e.what());
  }
}

void parse_filter(const RawConfig& raw, Scenario& sc) {
  if (!raw.count("filter")) return;
  Reader r(raw, "filter");
  FilterSpec& fs = sc.filter;
  fs.present = true;
  const std::string model = r.text("model", "linear");
  if (model == "linear") {
    LinearGaussianModel m;
    m.A = r.number("A", m.A);
    m.Q = r.number("Q", m.Q);
    m.H = r.number("H", m.H);
    m.R = r.number("R", m.R);
    m.m0 = r.number("m0", m.m0);
    m.P0 = r.number("P0", m.P0);
    if (!(m.P0 > 0.0)) throw ValidationError("filter.P0", "prior variance must be positive");
    if (m.R == 0.0) throw ValidationError("filter.R", "observation noise must be non-degenerate");
    fs.scenario = FilterScenario::kalman_bucy(m);
  } else if (model == "general") {
    FilterScenario& f = fs.scenario;
    f.b_hat = r.field("b_hat");
    f.sigma_hat = r.field("sigma_hat", ScalarField::constant(1.0));
    std::vector<ScalarField> bt;
    if (r.has("b_tilde")) bt.push_back(r.field("b_tilde"));
    for (int k = 1; k <= 2; ++k) {
      if (r.has("b_tilde" + std::to_string(k))) bt.push_back(r.field("b_tilde" + std::to_string(k)));
    }
    if (!bt.empty()) f.b_tilde = bt;
    const int d1 = f.observation_dim();
    if (r.has("sigma_tilde")) {
      const auto v = r.list("sigma_tilde");
      if (v.size() == 1 && d1 > 1) {
        f.sigma_tilde = v[0] * Eigen::MatrixXd::Identity(d1, d1);
      } else if (static_cast<int>(v.size()) == d1 * d1) {
        f.sigma_tilde.resize(d1, d1);
        for (int i = 0; i < d1; ++i) {
          for (int j = 0; j < d1; ++j) f.sigma_tilde(i, j) = v[static_cast<std::size_t>(i * d1 + j)];
        }
      } else {
        throw ValidationError("filter.sigma_tilde", "expected d1 x d1 entries, row-major");
      }
    } else {
      f.sigma_tilde = Eigen::MatrixXd::Identity(d1, d1);
    }
    f.prior = r.field("prior", f.prior);
    f.prior_lo = r.number("prior_lo", sc.grid.lo[0]);
    f.prior_hi = r.number("prior_hi", sc.grid.hi[0]);
    f.x0 = r.maybe_number("x0");
    f.K = r.number("K", f.K);
    f.state_limit = r.number("state_limit", f.state_limit);
  } else {
    throw ValidationError("filter.model", "expected 'linear' or 'general'");
  }
  try {
    fs.scenario.validate();
  } catch (const Error& e) {
    throw ValidationError("filter", e.what());
  }
  if (sc.grid.dim != 1) throw ValidationError("grid.dim", "filter scenarios have a scalar signal");
  fs.particles = r.integer("particles", 0);
  if (fs.particles != 0 && fs.particles < 100) throw ValidationError("filter.particles", "need 0 or at least 100");
  fs.truth_seed = r.seed("truth_seed", sc.time.seed);
  fs.particle_seed = r.seed("particle_seed", sc.time.seed + 1);
  for (int k = 1; k <= 9; ++k) {
    const std::string key = "phi" + std::to_string(k);
    if (r.has(key)) fs.phis.push_back(r.field(key));
  }
  fs.kushner = r.flag("kushner", false);
  fs.extended_t_end = r.maybe_number("extended_t_end");
  if (fs.extended_t_end && *fs.extended_t_end < sc.time.t_end) {
    throw ValidationError("filter.extended_t_end", "must not be shorter than time.t_end");
  }
}

void parse_picard(const RawConfig& raw, Scenario& sc) {
  if (!raw.count("picard")) return;
  Reader r(raw, "picard");
  PicardSpec& p = sc.picard;
  p.present = true;
  p.f = r.text("f", p.f);
  p.g = r.text("g", p.g);
  p.tol = r.number("tol", p.tol);
  p.max_iter = r.integer("max_iter", p.max_iter);
  p.guess = r.text("guess", p.guess);
  if (p.guess != "initial" && p.guess != "zero") throw ValidationError("picard.guess", "expected 'initial' or 'zero'");
  if (!(p.tol > 0.0)) throw ValidationError("picard.tol", "must be positive");
  if (p.max_iter < 1) throw ValidationError("picard.max_iter", "must be positive");
  if (r.has("residual_phi")) p.residual_phi = r.test_function("residual_phi");
  p.residual_threshold = r.number("residual_threshold", p.residual_threshold);
}

void parse_commutator(const RawConfig& raw, Scenario& sc) {
  if (!raw.count("commutator")) return;
  Reader r(raw, "commutator");
  CommutatorSpec& c = sc.commutator;
  c.present = true;
  c.b = r.field("b");
  c.u = r.field("u");
  if (r.has("c")) c.c = r.field("c");
  if (r.has("a")) c.a = r.field("a");
  if (r.has("epsilons")) c.epsilons = r.list("epsilons");
  c.radius = r.number("radius", c.radius);
  c.exponent = r.number("exponent", c.exponent);
  if (sc.grid.dim != 1) throw ValidationError("grid.dim", "commutator sweeps are one-dimensional");
  for (std::size_t k = 1; k < c.epsilons.size(); ++k) {
    if (!(c.epsilons[k] < c.epsilons[k - 1])) throw ValidationError("commutator.epsilons", "must strictly decrease");
  }
}

void validate_model(Scenario& sc) {
  const Grid grid = sc.grid.build();
  const double times[] = {0.0, sc.time.t_end};
  CoefficientSet set;
  try {
    set = sc.coefficients.build();
  } catch (const Error& e) {
    throw ValidationError("coefficients", e.what());
  }
  try {
    validate_coefficients(set, grid, times);
  } catch (const ModelInvariantError& e) {
    const std::string what = e.what();
    const bool factor = what.find("sigma_hat") != std::string::npos;
    throw ValidationError(factor ? "coefficients.sigma_hat" : "coefficients.a", what);
  } catch (const EvaluationError& e) {
    throw ValidationError("coefficients." + e.field(), e.what());
  }
  // Parabolicity with the declared kappa; cheap on a coarsened copy of big grids.
  const ScalarField kappa = sc.kappa;
  const int factor = grid.dim() == 1 ? 4 : 8;
  const bool shrink = grid.size() > 4096 && grid.n(0) % factor == 0 && (grid.dim() == 1 || grid.n(1) % factor == 0);
  const Grid probe = shrink ? grid.coarsened(factor) : grid;
  const auto rep =
      verify_parabolicity(set, probe, times, [kappa](double t, const Point& x) { return kappa(t, x); }, 4 * grid.dim());
  if (!rep.passed) {
    throw ValidationError("coefficients.kappa",
                          "parabolicity 2a - sigma sigma^T >= kappa fails, min defect " + format_double(rep.min_defect));
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double v = sc.u0(0.0, grid.point(k));
    if (!std::isfinite(v)) throw ValidationError("coefficients.u0", "non-finite initial value");
  }
}

}  // namespace

Grid GridSpec::build() const {
  if (dim == 1) return Grid(lo[0], hi[0], n[0], boundary);
  return Grid(lo, hi, n, boundary);
}

int TimeSpec::n_steps() const { return static_cast<int>(std::lround(t_end / solver.dt)); }

std::vector<double> TimeSpec::output_times() const {
  const int steps = n_steps();
  const int stride = steps / outputs;
  std::vector<double> out;
  for (int k = 0; k <= outputs; ++k) out.push_back(k * stride * solver.dt);
  return out;
}

Scenario parse_config_text(const std::string& text) {
  Scenario sc;
  sc.raw = read_tree(text);
  Reader top(sc.raw, "");
  sc.name = top.text("name", sc.name);
  if (sc.name.empty() || sc.name.find_first_of("/\\ ") != std::string::npos) {
    throw ValidationError("name", "must be a non-empty token without spaces or slashes");
  }
  sc.grid = parse_grid(sc.raw);
  sc.time = parse_time(sc.raw);
  parse_coefficients(sc.raw, sc);
  parse_filter(sc.raw, sc);
  parse_picard(sc.raw, sc);
  parse_commutator(sc.raw, sc);
  if (auto it = sc.raw.find("checks"); it != sc.raw.end()) sc.checks = it->second;
  validate_model(sc);
  return sc;
}

Scenario parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string to_config_text(const RawConfig& raw) {
  std::string out;
  if (auto it = raw.find(""); it != raw.end()) {
    for (const auto& [k, v] : it->second) out += k + " = " + v + "\n";
  }
  for (const auto& [section, keys] : raw) {
    if (section.empty()) continue;
    out += "\n[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
  }
  return out;
}

}  // namespace spdelab
