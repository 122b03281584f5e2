#include "homog2s/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace homog2s {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

PorosityField PorosityField::constant(double value) {
  PorosityField p;
  p.kind = Kind::Constant;
  p.c0 = value;
  return p;
}

PorosityField PorosityField::affine(double c0, double c1, double c2) {
  PorosityField p;
  p.kind = Kind::Affine;
  p.c0 = c0;
  p.c1 = c1;
  p.c2 = c2;
  return p;
}

PorosityField PorosityField::sinusoidal(double mean, double amplitude, double k1, double k2) {
  PorosityField p;
  p.kind = Kind::Sinusoidal;
  p.c0 = mean;
  p.amplitude = amplitude;
  p.k1 = k1;
  p.k2 = k2;
  return p;
}

double PorosityField::operator()(Vec2 x) const {
  switch (kind) {
    case Kind::Constant:
      return c0;
    case Kind::Affine:
      return c0 + c1 * x.x + c2 * x.y;
    case Kind::Sinusoidal:
      return c0 + amplitude * std::sin(kTwoPi * (k1 * x.x + k2 * x.y));
  }
  return c0;
}

Vec2 PorosityField::gradient(Vec2 x) const {
  switch (kind) {
    case Kind::Constant:
      return {0.0, 0.0};
    case Kind::Affine:
      return {c1, c2};
    case Kind::Sinusoidal: {
      const double s = amplitude * kTwoPi * std::cos(kTwoPi * (k1 * x.x + k2 * x.y));
      return {s * k1, s * k2};
    }
  }
  return {0.0, 0.0};
}

double PorosityField::lipschitz() const {
  switch (kind) {
    case Kind::Constant:
      return 0.0;
    case Kind::Affine:
      return std::hypot(c1, c2);
    case Kind::Sinusoidal:
      return std::abs(amplitude) * kTwoPi * std::hypot(k1, k2);
  }
  return 0.0;
}

std::pair<double, double> PorosityField::range(double lx, double ly) const {
  switch (kind) {
    case Kind::Constant:
      return {c0, c0};
    case Kind::Affine: {
      const double v[4] = {c0, c0 + c1 * lx, c0 + c2 * ly, c0 + c1 * lx + c2 * ly};
      return {*std::min_element(v, v + 4), *std::max_element(v, v + 4)};
    }
    case Kind::Sinusoidal:
      // Conservative: the full sine range is reached on any domain spanning a period.
      return {c0 - std::abs(amplitude), c0 + std::abs(amplitude)};
  }
  return {c0, c0};
}

std::string PorosityField::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Constant:
      os << "constant(" << c0 << ")";
      break;
    case Kind::Affine:
      os << "affine(" << c0 << "," << c1 << "," << c2 << ")";
      break;
    case Kind::Sinusoidal:
      os << "sinusoidal(" << c0 << "," << amplitude << "," << k1 << "," << k2 << ")";
      break;
  }
  return os.str();
}

CoefficientField CoefficientField::identity() { return {}; }

CoefficientField CoefficientField::isotropic(double a0, double a1, Trig trig, int direction) {
  CoefficientField c;
  c.kind = Kind::Isotropic;
  c.a0 = a0;
  c.a1 = a1;
  c.trig = trig;
  c.direction = direction;
  return c;
}

CoefficientField CoefficientField::layered(double a0, double a1, double b, Trig trig, int direction) {
  CoefficientField c;
  c.kind = Kind::Layered;
  c.a0 = a0;
  c.a1 = a1;
  c.b = b;
  c.trig = trig;
  c.direction = direction;
  return c;
}

CoefficientField CoefficientField::checkerboard(double a0, double a1) {
  CoefficientField c;
  c.kind = Kind::Checkerboard;
  c.a0 = a0;
  c.a1 = a1;
  return c;
}

double CoefficientField::oscillation(Vec2 y) const {
  switch (kind) {
    case Kind::Identity:
      return 1.0;
    case Kind::Isotropic:
    case Kind::Layered: {
      const double arg = kTwoPi * y[direction];
      return a0 + a1 * (trig == Trig::Sin ? std::sin(arg) : std::cos(arg));
    }
    case Kind::Checkerboard:
      return a0 + a1 * std::sin(kTwoPi * y.x) * std::sin(kTwoPi * y.y);
  }
  return 1.0;
}

double CoefficientField::modulation(Vec2 x) const { return 1.0 + x_modulation * x.x; }

Mat2 CoefficientField::operator()(Vec2 x, Vec2 y) const {
  const double m = x_modulation == 0.0 ? 1.0 : modulation(x);
  const double osc = oscillation(y);
  if (kind == Kind::Layered) {
    return direction == 0 ? Mat2::diag(m * osc, m * b) : Mat2::diag(m * b, m * osc);
  }
  return Mat2::scalar(m * osc);
}

double CoefficientField::coercivity() const {
  const double mmin = std::min(1.0, 1.0 + x_modulation);
  double lo = 1.0;
  switch (kind) {
    case Kind::Identity:
      lo = 1.0;
      break;
    case Kind::Isotropic:
    case Kind::Checkerboard:
      lo = a0 - std::abs(a1);
      break;
    case Kind::Layered:
      lo = std::min(a0 - std::abs(a1), b);
      break;
  }
  return lo * mmin;
}

double CoefficientField::bound() const {
  const double mmax = std::max(1.0, 1.0 + x_modulation);
  double hi = 1.0;
  switch (kind) {
    case Kind::Identity:
      hi = 1.0;
      break;
    case Kind::Isotropic:
    case Kind::Checkerboard:
      hi = a0 + std::abs(a1);
      break;
    case Kind::Layered:
      hi = std::max(a0 + std::abs(a1), b);
      break;
  }
  return hi * mmax;
}

std::string CoefficientField::describe() const {
  std::ostringstream os;
  const char* t = trig == Trig::Sin ? "sin" : "cos";
  switch (kind) {
    case Kind::Identity:
      os << "identity";
      break;
    case Kind::Isotropic:
      os << "isotropic(" << a0 << "+" << a1 << "*" << t << "(2pi y" << direction + 1 << "))";
      break;
    case Kind::Layered:
      os << "layered(" << a0 << "+" << a1 << "*" << t << "(2pi y" << direction + 1 << ")," << b << ")";
      break;
    case Kind::Checkerboard:
      os << "checkerboard(" << a0 << "," << a1 << ")";
      break;
  }
  if (x_modulation != 0.0) os << "*(1+" << x_modulation << "x1)";
  return os.str();
}

SourceField SourceField::zero() { return {Kind::Zero, 0.0}; }
SourceField SourceField::constant(double value) { return {Kind::Constant, value}; }
SourceField SourceField::cosine(double amplitude) { return {Kind::Cosine, amplitude}; }

double SourceField::operator()(Vec2 x) const {
  switch (kind) {
    case Kind::Zero:
      return 0.0;
    case Kind::Constant:
      return amplitude;
    case Kind::Cosine:
      return amplitude * std::cos(std::numbers::pi * x.x) * std::cos(std::numbers::pi * x.y);
  }
  return 0.0;
}

SourceField SourceField::scaled(double s) const {
  SourceField f = *this;
  f.amplitude *= s;
  return f;
}

std::string SourceField::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Zero:
      os << "zero";
      break;
    case Kind::Constant:
      os << "constant(" << amplitude << ")";
      break;
    case Kind::Cosine:
      os << "cosine(" << amplitude << ")";
      break;
  }
  return os.str();
}

}  // namespace homog2s
