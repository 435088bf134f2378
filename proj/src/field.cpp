#include "spdelab/field.hpp"

#include "spdelab/error.hpp"
#include "spdelab/format.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace spdelab {

double parse_double(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return v;
}

namespace {

std::string vec_str(const Vec2& v) { return format_double(v[0]) + "," + format_double(v[1]); }

class ConstantImpl final : public ScalarField::Impl {
 public:
  explicit ConstantImpl(double c) : c_(c) {}
  double value(const Point&) const override { return c_; }
  Vec2 gradient(const Point&) const override { return Vec2::Zero(); }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  bool is_constant() const override { return true; }
  std::string describe() const override { return "constant value=" + format_double(c_); }
  double c() const { return c_; }

 private:
  double c_;
};

class AffineImpl final : public ScalarField::Impl {
 public:
  AffineImpl(double offset, Vec2 slope) : offset_(offset), slope_(std::move(slope)) {}
  double value(const Point& x) const override { return offset_ + slope_.dot(x); }
  Vec2 gradient(const Point&) const override { return slope_; }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  bool is_constant() const override { return slope_.isZero(0.0); }
  std::string describe() const override {
    return "affine offset=" + format_double(offset_) + " slope=" + vec_str(slope_);
  }

 private:
  double offset_;
  Vec2 slope_;
};

class WaveImpl final : public ScalarField::Impl {
 public:
  WaveImpl(bool cosine, double amp, Vec2 freq, double phase, double offset)
      : cosine_(cosine), amp_(amp), freq_(std::move(freq)), phase_(phase), offset_(offset) {}
  double value(const Point& x) const override {
    const double arg = freq_.dot(x) + phase_;
    return amp_ * (cosine_ ? std::cos(arg) : std::sin(arg)) + offset_;
  }
  Vec2 gradient(const Point& x) const override {
    const double arg = freq_.dot(x) + phase_;
    const double d = cosine_ ? -std::sin(arg) : std::cos(arg);
    return amp_ * d * freq_;
  }
  Mat2 hessian(const Point& x) const override {
    const double arg = freq_.dot(x) + phase_;
    const double d2 = cosine_ ? -std::cos(arg) : -std::sin(arg);
    return amp_ * d2 * (freq_ * freq_.transpose());
  }
  bool is_constant() const override { return amp_ == 0.0 || freq_.isZero(0.0); }
  std::string describe() const override {
    return std::string(cosine_ ? "cosine" : "sine") + " amp=" + format_double(amp_) + " freq=" + vec_str(freq_) +
           " phase=" + format_double(phase_) + " offset=" + format_double(offset_);
  }

 private:
  bool cosine_;
  double amp_;
  Vec2 freq_;
  double phase_;
  double offset_;
};

class GaussianImpl final : public ScalarField::Impl {
 public:
  GaussianImpl(double amp, Point center, double width, double offset)
      : amp_(amp), center_(std::move(center)), width_(width), offset_(offset) {}
  double bump(const Point& x) const { return amp_ * std::exp(-(x - center_).squaredNorm() / (2 * width_ * width_)); }
  double value(const Point& x) const override { return bump(x) + offset_; }
  Vec2 gradient(const Point& x) const override { return -bump(x) / (width_ * width_) * (x - center_); }
  Mat2 hessian(const Point& x) const override {
    const double w2 = width_ * width_;
    const Vec2 r = x - center_;
    return bump(x) / w2 * (r * r.transpose() / w2 - Mat2::Identity());
  }
  bool is_constant() const override { return amp_ == 0.0; }
  std::string describe() const override {
    return "gaussian amp=" + format_double(amp_) + " center=" + vec_str(center_) + " width=" + format_double(width_) +
           " offset=" + format_double(offset_);
  }

 private:
  double amp_;
  Point center_;
  double width_;
  double offset_;
};

class PiecewiseLinearImpl final : public ScalarField::Impl {
 public:
  explicit PiecewiseLinearImpl(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {}
  double value(const Point& x) const override {
    const double s = x[0];
    if (s <= knots_.front().first) return knots_.front().second;
    if (s >= knots_.back().first) return knots_.back().second;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), s,
                               [](double v, const std::pair<double, double>& k) { return v < k.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (s - lo.first) / (hi.first - lo.first);
    return lo.second + w * (hi.second - lo.second);
  }
  Vec2 gradient(const Point& x) const override {
    const double s = x[0];
    if (s < knots_.front().first || s >= knots_.back().first) return Vec2::Zero();
    auto it = std::upper_bound(knots_.begin(), knots_.end(), s,
                               [](double v, const std::pair<double, double>& k) { return v < k.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    return Vec2((hi.second - lo.second) / (hi.first - lo.first), 0.0);
  }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  std::vector<double> breakpoints(double lo, double hi) const override {
    std::vector<double> out;
    for (const auto& k : knots_) {
      if (k.first >= lo && k.first <= hi) out.push_back(k.first);
    }
    return out;
  }
  bool is_constant() const override {
    return std::all_of(knots_.begin(), knots_.end(), [&](const auto& k) { return k.second == knots_.front().second; });
  }
  std::string describe() const override {
    std::string s = "pwl knots=";
    for (std::size_t i = 0; i < knots_.size(); ++i) {
      if (i) s += ";";
      s += format_double(knots_[i].first) + ":" + format_double(knots_[i].second);
    }
    return s;
  }

 private:
  std::vector<std::pair<double, double>> knots_;
};

class TriangleImpl final : public ScalarField::Impl {
 public:
  TriangleImpl(double amp, double period) : amp_(amp), period_(period) {}
  double value(const Point& x) const override {
    const double r = x[0] - period_ * std::floor(x[0] / period_);
    const double half = 0.5 * period_;
    return amp_ * (half - std::abs(r - half)) / half;
  }
  Vec2 gradient(const Point& x) const override {
    const double r = x[0] - period_ * std::floor(x[0] / period_);
    const double slope = amp_ / (0.5 * period_);
    return Vec2(r < 0.5 * period_ ? slope : -slope, 0.0);
  }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  std::vector<double> breakpoints(double lo, double hi) const override {
    std::vector<double> out;
    const double half = 0.5 * period_;
    for (double k = std::ceil(lo / half); k * half <= hi; k += 1.0) out.push_back(k * half);
    return out;
  }
  std::string describe() const override {
    return "triangle amp=" + format_double(amp_) + " period=" + format_double(period_);
  }

 private:
  double amp_;
  double period_;
};

class AbsImpl final : public ScalarField::Impl {
 public:
  AbsImpl(double amp, double center) : amp_(amp), center_(center) {}
  double value(const Point& x) const override { return amp_ * std::abs(x[0] - center_); }
  Vec2 gradient(const Point& x) const override { return Vec2(x[0] >= center_ ? amp_ : -amp_, 0.0); }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  std::vector<double> breakpoints(double lo, double hi) const override {
    if (center_ >= lo && center_ <= hi) return {center_};
    return {};
  }
  std::string describe() const override {
    return "abs amp=" + format_double(amp_) + " center=" + format_double(center_);
  }

 private:
  double amp_;
  double center_;
};

class StepImpl final : public ScalarField::Impl {
 public:
  StepImpl(double amp, double center) : amp_(amp), center_(center) {}
  double value(const Point& x) const override { return x[0] >= center_ ? amp_ : 0.0; }
  Vec2 gradient(const Point&) const override { return Vec2::Zero(); }
  Mat2 hessian(const Point&) const override { return Mat2::Zero(); }
  std::vector<double> breakpoints(double lo, double hi) const override {
    if (center_ >= lo && center_ <= hi) return {center_};
    return {};
  }
  bool differentiable() const override { return false; }
  std::string describe() const override {
    return "step amp=" + format_double(amp_) + " center=" + format_double(center_);
  }

 private:
  double amp_;
  double center_;
};

class PowerImpl final : public ScalarField::Impl {
 public:
  PowerImpl(double amp, int p) : amp_(amp), p_(p) {}
  double value(const Point& x) const override { return amp_ * std::pow(x[0], p_); }
  Vec2 gradient(const Point& x) const override {
    return Vec2(p_ == 0 ? 0.0 : amp_ * p_ * std::pow(x[0], p_ - 1), 0.0);
  }
  Mat2 hessian(const Point& x) const override {
    Mat2 h = Mat2::Zero();
    if (p_ >= 2) h(0, 0) = amp_ * p_ * (p_ - 1) * std::pow(x[0], p_ - 2);
    return h;
  }
  bool is_constant() const override { return p_ == 0 || amp_ == 0.0; }
  std::string describe() const override { return "power amp=" + format_double(amp_) + " p=" + std::to_string(p_); }

 private:
  double amp_;
  int p_;
};

std::vector<double> merge_breaks(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

class SumImpl final : public ScalarField::Impl {
 public:
  SumImpl(ScalarField a, ScalarField b) : a_(std::move(a)), b_(std::move(b)) {}
  double value(const Point& x) const override { return a_(0.0, x) + b_(0.0, x); }
  Vec2 gradient(const Point& x) const override { return a_.gradient(0.0, x) + b_.gradient(0.0, x); }
  Mat2 hessian(const Point& x) const override { return a_.hessian(0.0, x) + b_.hessian(0.0, x); }
  std::vector<double> breakpoints(double lo, double hi) const override {
    return merge_breaks(a_.breakpoints(lo, hi), b_.breakpoints(lo, hi));
  }
  bool differentiable() const override { return a_.differentiable() && b_.differentiable(); }
  bool is_constant() const override { return a_.is_constant() && b_.is_constant(); }
  std::string describe() const override { return "sum{" + a_.describe() + "}{" + b_.describe() + "}"; }

 private:
  ScalarField a_, b_;
};

class ProductImpl final : public ScalarField::Impl {
 public:
  ProductImpl(ScalarField a, ScalarField b) : a_(std::move(a)), b_(std::move(b)) {}
  double value(const Point& x) const override { return a_(0.0, x) * b_(0.0, x); }
  Vec2 gradient(const Point& x) const override {
    return a_.gradient(0.0, x) * b_(0.0, x) + a_(0.0, x) * b_.gradient(0.0, x);
  }
  Mat2 hessian(const Point& x) const override {
    const Vec2 ga = a_.gradient(0.0, x);
    const Vec2 gb = b_.gradient(0.0, x);
    return a_.hessian(0.0, x) * b_(0.0, x) + a_(0.0, x) * b_.hessian(0.0, x) + ga * gb.transpose() +
           gb * ga.transpose();
  }
  std::vector<double> breakpoints(double lo, double hi) const override {
    return merge_breaks(a_.breakpoints(lo, hi), b_.breakpoints(lo, hi));
  }
  bool differentiable() const override { return a_.differentiable() && b_.differentiable(); }
  bool is_constant() const override { return a_.is_constant() && b_.is_constant(); }
  std::string describe() const override { return "product{" + a_.describe() + "}{" + b_.describe() + "}"; }

 private:
  ScalarField a_, b_;
};

// ---- parsing ---------------------------------------------------------------

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Vec2 parse_vec(std::string_view text) {
  Vec2 v = Vec2::Zero();
  const auto comma = text.find(',');
  v[0] = parse_double(text.substr(0, comma));
  if (comma != std::string_view::npos) v[1] = parse_double(text.substr(comma + 1));
  return v;
}

// Splits "{A}{B}" into A and B, honoring nesting.
std::vector<std::string_view> brace_groups(std::string_view s) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '{') {
      if (depth++ == 0) start = i + 1;
    } else if (s[i] == '}') {
      if (--depth == 0) out.push_back(s.substr(start, i - start));
      if (depth < 0) throw ParseError("unbalanced braces in field spec");
    }
  }
  if (depth != 0) throw ParseError("unbalanced braces in field spec");
  return out;
}

class ParamReader {
 public:
  ParamReader(std::string family, std::map<std::string, std::string> params)
      : family_(std::move(family)), params_(std::move(params)) {}

  double number(const std::string& key, double fallback) {
    auto it = params_.find(key);
    if (it == params_.end()) return fallback;
    used_.push_back(key);
    try {
      return parse_double(it->second);
    } catch (const std::invalid_argument&) {
      throw ParseError("field family '" + family_ + "': bad number for '" + key + "': " + it->second);
    }
  }
  Vec2 vec(const std::string& key, Vec2 fallback) {
    auto it = params_.find(key);
    if (it == params_.end()) return fallback;
    used_.push_back(key);
    try {
      return parse_vec(it->second);
    } catch (const std::invalid_argument&) {
      throw ParseError("field family '" + family_ + "': bad vector for '" + key + "': " + it->second);
    }
  }
  std::string text(const std::string& key) {
    auto it = params_.find(key);
    if (it == params_.end()) throw ParseError("field family '" + family_ + "' requires '" + key + "'");
    used_.push_back(key);
    return it->second;
  }
  void finish() const {
    for (const auto& [k, v] : params_) {
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) {
        throw ParseError("field family '" + family_ + "': unknown parameter '" + k + "'");
      }
    }
  }

 private:
  std::string family_;
  std::map<std::string, std::string> params_;
  std::vector<std::string> used_;
};

}  // namespace

ScalarField::ScalarField() : impl_(std::make_shared<ConstantImpl>(0.0)) {}
ScalarField::ScalarField(std::shared_ptr<const Impl> impl, double time_slope)
    : impl_(std::move(impl)), time_slope_(time_slope) {}

ScalarField ScalarField::constant(double value) { return ScalarField(std::make_shared<ConstantImpl>(value)); }
ScalarField ScalarField::affine(double offset, Vec2 slope) {
  return ScalarField(std::make_shared<AffineImpl>(offset, std::move(slope)));
}
ScalarField ScalarField::sine(double amp, Vec2 freq, double phase, double offset) {
  return ScalarField(std::make_shared<WaveImpl>(false, amp, std::move(freq), phase, offset));
}
ScalarField ScalarField::cosine(double amp, Vec2 freq, double phase, double offset) {
  return ScalarField(std::make_shared<WaveImpl>(true, amp, std::move(freq), phase, offset));
}
ScalarField ScalarField::gaussian(double amp, Point center, double width, double offset) {
  if (!(width > 0.0)) throw ArgumentError("gaussian width must be positive");
  return ScalarField(std::make_shared<GaussianImpl>(amp, std::move(center), width, offset));
}
ScalarField ScalarField::piecewise_linear(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw ArgumentError("piecewise-linear field needs at least two knots");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].first > knots[i - 1].first)) throw ArgumentError("piecewise-linear knots must increase");
  }
  return ScalarField(std::make_shared<PiecewiseLinearImpl>(std::move(knots)));
}
ScalarField ScalarField::triangle(double amp, double period) {
  if (!(period > 0.0)) throw ArgumentError("triangle period must be positive");
  return ScalarField(std::make_shared<TriangleImpl>(amp, period));
}
ScalarField ScalarField::abs(double amp, double center) { return ScalarField(std::make_shared<AbsImpl>(amp, center)); }
ScalarField ScalarField::step(double amp, double center) {
  return ScalarField(std::make_shared<StepImpl>(amp, center));
}
ScalarField ScalarField::power(double amp, int p) {
  if (p < 0) throw ArgumentError("power exponent must be non-negative");
  return ScalarField(std::make_shared<PowerImpl>(amp, p));
}

double ScalarField::operator()(double t, const Point& x) const { return time_factor(t) * impl_->value(x); }
Vec2 ScalarField::gradient(double t, const Point& x) const { return time_factor(t) * impl_->gradient(x); }
Mat2 ScalarField::hessian(double t, const Point& x) const { return time_factor(t) * impl_->hessian(x); }
std::vector<double> ScalarField::breakpoints(double lo, double hi) const { return impl_->breakpoints(lo, hi); }
bool ScalarField::differentiable() const { return impl_->differentiable(); }
bool ScalarField::is_constant() const { return impl_->is_constant() && time_slope_ == 0.0; }
bool ScalarField::is_zero() const {
  auto c = std::dynamic_pointer_cast<const ConstantImpl>(impl_);
  return c && c->c() == 0.0;
}

std::string ScalarField::describe() const {
  std::string s = impl_->describe();
  if (time_slope_ != 0.0) s += " tslope=" + format_double(time_slope_);
  return s;
}

ScalarField ScalarField::operator+(const ScalarField& other) const {
  if (time_slope_ != 0.0 || other.time_slope_ != 0.0) {
    throw ArgumentError("composite fields require time-independent operands");
  }
  return ScalarField(std::make_shared<SumImpl>(*this, other));
}
ScalarField ScalarField::operator*(const ScalarField& other) const {
  if (time_slope_ != 0.0 || other.time_slope_ != 0.0) {
    throw ArgumentError("composite fields require time-independent operands");
  }
  return ScalarField(std::make_shared<ProductImpl>(*this, other));
}
ScalarField ScalarField::scaled(double factor) const { return (*this) * ScalarField::constant(factor); }

ScalarField ScalarField::parse(std::string_view spec) {
  spec = trim(spec);
  if (spec.empty()) throw ParseError("empty field spec");
  try {
    return constant(parse_double(spec));
  } catch (const std::invalid_argument&) {
  }
  const auto space = spec.find_first_of(" \t{");
  const std::string family(spec.substr(0, space));
  std::string_view rest = space == std::string_view::npos ? std::string_view{} : trim(spec.substr(space));

  if (family == "sum" || family == "product") {
    // Trailing " tslope=..." is not supported for composites.
    auto groups = brace_groups(rest);
    if (groups.size() != 2) throw ParseError("'" + family + "' needs exactly two {operands}");
    auto a = parse(groups[0]);
    auto b = parse(groups[1]);
    return family == "sum" ? a + b : a * b;
  }

  std::map<std::string, std::string> params;
  std::istringstream in{std::string(rest)};
  std::string token;
  std::vector<std::string> positional;
  while (in >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      positional.push_back(token);
    } else {
      params[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  if (family == "constant" && positional.size() == 1 && !params.count("value")) params["value"] = positional[0];
  else if (!positional.empty()) throw ParseError("field family '" + family + "': unexpected token '" + positional[0] + "'");

  ParamReader r(family, std::move(params));
  const double tslope = r.number("tslope", 0.0);
  ScalarField out;
  if (family == "constant") {
    out = constant(r.number("value", 0.0));
  } else if (family == "affine") {
    const double offset = r.number("offset", 0.0);
    out = affine(offset, r.vec("slope", Vec2::Zero()));
  } else if (family == "sine" || family == "cosine") {
    const double amp = r.number("amp", 1.0);
    const Vec2 freq = r.vec("freq", Vec2(1.0, 0.0));
    const double phase = r.number("phase", 0.0);
    const double offset = r.number("offset", 0.0);
    out = family == "sine" ? sine(amp, freq, phase, offset) : cosine(amp, freq, phase, offset);
  } else if (family == "gaussian") {
    const double amp = r.number("amp", 1.0);
    const Point center = r.vec("center", Point::Zero());
    const double width = r.number("width", 1.0);
    const double offset = r.number("offset", 0.0);
    out = gaussian(amp, center, width, offset);
  } else if (family == "pwl") {
    std::vector<std::pair<double, double>> knots;
    std::string list = r.text("knots");
    std::size_t pos = 0;
    while (pos <= list.size()) {
      const auto semi = std::min(list.find(';', pos), list.size());
      const std::string item = list.substr(pos, semi - pos);
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ParseError("pwl knot must be x:y, got '" + item + "'");
      try {
        knots.emplace_back(parse_double(item.substr(0, colon)), parse_double(item.substr(colon + 1)));
      } catch (const std::invalid_argument&) {
        throw ParseError("pwl knot must be x:y, got '" + item + "'");
      }
      pos = semi + 1;
    }
    out = piecewise_linear(std::move(knots));
  } else if (family == "triangle") {
    const double amp = r.number("amp", 1.0);
    out = triangle(amp, r.number("period", 2.0));
  } else if (family == "abs") {
    const double amp = r.number("amp", 1.0);
    out = abs(amp, r.number("center", 0.0));
  } else if (family == "step") {
    const double amp = r.number("amp", 1.0);
    out = step(amp, r.number("center", 0.0));
  } else if (family == "power") {
    const double amp = r.number("amp", 1.0);
    const double p = r.number("p", 1.0);
    if (p != std::floor(p)) throw ParseError("power exponent must be an integer");
    out = power(amp, static_cast<int>(p));
  } else {
    throw ParseError("unknown field family '" + family + "'");
  }
  r.finish();
  return tslope != 0.0 ? out.with_time_slope(tslope) : out;
}

// ---- test functions -----------------------------------------------------------

TestFunction TestFunction::gaussian(Point center, double width, double amp) {
  if (!(width > 0.0)) throw ArgumentError("test function width must be positive");
  return TestFunction(Kind::Gaussian, std::move(center), width, amp);
}

TestFunction TestFunction::compact_bump(Point center, double radius, double amp) {
  if (!(radius > 0.0)) throw ArgumentError("test function radius must be positive");
  return TestFunction(Kind::CompactBump, std::move(center), radius, amp);
}

TestFunction TestFunction::parse(std::string_view spec) {
  spec = trim(spec);
  const auto space = spec.find(' ');
  const std::string kind(spec.substr(0, space));
  std::map<std::string, std::string> params;
  if (space != std::string_view::npos) {
    std::istringstream in{std::string(spec.substr(space))};
    std::string token;
    while (in >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw ParseError("test function: expected key=value, got '" + token + "'");
      params[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  ParamReader r(kind, std::move(params));
  const Point center = r.vec("center", Point::Zero());
  const double amp = r.number("amp", 1.0);
  TestFunction out = [&] {
    if (kind == "gaussian") return gaussian(center, r.number("width", 1.0), amp);
    if (kind == "bump") return compact_bump(center, r.number("radius", 1.0), amp);
    throw ParseError("unknown test function '" + kind + "'");
  }();
  r.finish();
  return out;
}

double TestFunction::value(const Point& x) const {
  const double r2 = (x - center_).squaredNorm() / (width_ * width_);
  if (kind_ == Kind::Gaussian) return amp_ * std::exp(-0.5 * r2);
  if (r2 >= 1.0) return 0.0;
  return amp_ * std::exp(-1.0 / (1.0 - r2));
}

Vec2 TestFunction::gradient(const Point& x) const {
  const Vec2 r = (x - center_) / width_;
  const double r2 = r.squaredNorm();
  if (kind_ == Kind::Gaussian) return -value(x) * r / width_;
  if (r2 >= 1.0) return Vec2::Zero();
  const double s = 1.0 - r2;
  // d/dx exp(-1/s) = exp(-1/s) * (-2 r / s^2) / width
  return value(x) * (-2.0 / (s * s)) * r / width_;
}

Mat2 TestFunction::hessian(const Point& x) const {
  const Vec2 r = (x - center_) / width_;
  const double r2 = r.squaredNorm();
  const double w2 = width_ * width_;
  if (kind_ == Kind::Gaussian) return value(x) / w2 * (r * r.transpose() - Mat2::Identity());
  if (r2 >= 1.0) return Mat2::Zero();
  const double s = 1.0 - r2;
  // phi = exp(-1/s); grad_r phi = phi * g(r) r with g = -2/s^2.
  // d/dr_j (phi g r_i) = phi (g^2 r_i r_j + g' 2 r_j r_i + g delta_ij) with g' = dg/d(r2) = -4/s^3
  const double g = -2.0 / (s * s);
  const double gp = -4.0 / (s * s * s);
  return value(x) / w2 * ((g * g + 2.0 * gp) * (r * r.transpose()) + g * Mat2::Identity());
}

double TestFunction::support_radius() const {
  if (kind_ == Kind::CompactBump) return width_;
  return width_ * std::sqrt(2.0 * 16.0 * std::log(10.0));  // exp(-r^2/2w^2) = 1e-16
}

std::string TestFunction::describe() const {
  if (kind_ == Kind::Gaussian) {
    return "gaussian center=" + vec_str(center_) + " width=" + format_double(width_) + " amp=" + format_double(amp_);
  }
  return "bump center=" + vec_str(center_) + " radius=" + format_double(width_) + " amp=" + format_double(amp_);
}

}  // namespace spdelab
