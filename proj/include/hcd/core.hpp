#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hcd {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }

/// Axis-aligned closed box [x0,x1] x [y0,y1].
struct Box {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
    bool contains(const Box& b) const { return b.x0 >= x0 && b.x1 <= x1 && b.y0 >= y0 && b.y1 <= y1; }
    Box scaled(double s) const { return {s * x0, s * y0, s * x1, s * y1}; }

    static Box centered(double half_width) { return {-half_width, -half_width, half_width, half_width}; }
};

using Mat2 = Eigen::Matrix2d;

/// Closed interval [lo, hi]; empty when hi < lo.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool empty() const { return hi < lo; }
    double width() const { return hi - lo; }
    double center() const { return 0.5 * (lo + hi); }
    bool contains(double v) const { return v >= lo && v <= hi; }
    bool contains(const Interval& o) const { return o.lo >= lo && o.hi <= hi; }
    Interval shrunk(double fraction) const
    {
        const double d = fraction * width();
        return {lo + d, hi - d};
    }
};

// Error taxonomy. Each maps to one failure class named in the module contracts.

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ConstraintViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct PoleProximityError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool is_spd(const Mat2& a);

} // namespace hcd
