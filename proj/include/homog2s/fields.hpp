#pragma once

#include <string>

#include "homog2s/linalg.hpp"

namespace homog2s {

/// Local porosity Theta(x). Continuous on the closure of the domain.
struct PorosityField {
  enum class Kind { Constant, Affine, Sinusoidal };

  Kind kind = Kind::Constant;
  // Constant: value = c0.
  // Affine: c0 + c1 x1 + c2 x2.
  // Sinusoidal: c0 + amplitude * sin(2 pi (k1 x1 + k2 x2)).
  double c0 = 1.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double amplitude = 0.0;
  double k1 = 1.0;
  double k2 = 0.0;

  static PorosityField constant(double value);
  static PorosityField affine(double c0, double c1, double c2);
  static PorosityField sinusoidal(double mean, double amplitude, double k1, double k2);

  double operator()(Vec2 x) const;
  Vec2 gradient(Vec2 x) const;
  /// Bound on |grad Theta| over the plane; the Lipschitz constant used as modulus of continuity.
  double lipschitz() const;
  /// Range of Theta over [0, lx] x [0, ly], bounded from the closed form.
  std::pair<double, double> range(double lx, double ly) const;
  std::string describe() const;
};

/// Matrix coefficient A(x, y), Y-periodic in y. The two-scale limit of
/// A(x, x/eps) is A itself, so both routes evaluate it in closed form.
struct CoefficientField {
  enum class Kind { Identity, Isotropic, Layered, Checkerboard };
  enum class Trig { Sin, Cos };

  Kind kind = Kind::Identity;
  Trig trig = Trig::Cos;
  int direction = 0;  // y-component that oscillates (0 or 1)
  double a0 = 1.0;
  double a1 = 0.0;
  double b = 1.0;            // Layered: constant entry across the layers
  double x_modulation = 0.0; // A is multiplied by (1 + x_modulation * x1)

  static CoefficientField identity();
  /// (a0 + a1 trig(2 pi y_dir)) I
  static CoefficientField isotropic(double a0, double a1, Trig trig, int direction = 0);
  /// diag(a0 + a1 trig(2 pi y_dir), b) with the oscillating entry along `direction`
  static CoefficientField layered(double a0, double a1, double b, Trig trig, int direction = 0);
  /// (a0 + a1 sin(2 pi y1) sin(2 pi y2)) I
  static CoefficientField checkerboard(double a0, double a1);

  Mat2 operator()(Vec2 x, Vec2 y) const;
  bool depends_on_x() const { return x_modulation != 0.0; }
  /// Uniform coercivity constant alpha on [0,1]^2 x Y.
  double coercivity() const;
  /// Uniform bound on the spectral norm.
  double bound() const;
  std::string describe() const;

 private:
  double oscillation(Vec2 y) const;
  double modulation(Vec2 x) const;
};

/// Macroscopic source f(x); the micro source is its restriction.
struct SourceField {
  enum class Kind { Zero, Constant, Cosine };

  Kind kind = Kind::Constant;
  double amplitude = 1.0;  // Constant: value; Cosine: amplitude * cos(pi x1) cos(pi x2)

  static SourceField zero();
  static SourceField constant(double value);
  static SourceField cosine(double amplitude = 1.0);

  double operator()(Vec2 x) const;
  SourceField scaled(double s) const;
  std::string describe() const;
};

}  // namespace homog2s
