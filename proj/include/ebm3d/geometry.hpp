#pragma once

#include <array>
#include <numbers>
#include <vector>

namespace ebm3d {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Gravity-aligned 3D box. (cx, cy, cz) is the geometric center; l extends
// along the heading direction phi, w perpendicular to it, h vertically.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double h = 1.0, w = 1.0, l = 1.0;
  double phi = 0.0;

  static constexpr int kDims = 7;
  // Coordinate order (cx, cy, cz, h, w, l, phi).
  std::array<double, kDims> to_array() const { return {cx, cy, cz, h, w, l, phi}; }
  static Box3D from_array(const std::array<double, kDims>& v) { return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]}; }
  bool valid() const { return h > 0.0 && w > 0.0 && l > 0.0; }
};

struct BoxBEV {
  double cx = 0.0, cy = 0.0;
  double w = 1.0, l = 1.0;
  double phi = 0.0;

  static constexpr int kDims = 5;
  // Coordinate order (cx, cy, w, l, phi).
  std::array<double, kDims> to_array() const { return {cx, cy, w, l, phi}; }
};

// A Box3D as a plain coordinate vector (cx, cy, cz, h, w, l, phi).
using BoxVector = std::array<double, Box3D::kDims>;

// Counter-clockwise convex polygon.
struct ConvexPolygon {
  std::vector<Vec2> vertices;

  double signed_area() const;
  double area() const;
};

BoxBEV to_bev(const Box3D& box);

// Reduces phi to (-pi, pi] with std::remainder, which is exact. Angles that
// differ by exactly one double-precision 2*pi map to the same value.
double reduce_angle(double phi);

// Wraps to [-pi, pi).
double wrap_angle(double phi);

ConvexPolygon bev_corners(const BoxBEV& box);

// Sutherland-Hodgman clip of a convex polygon against a convex clip polygon.
// Vertices closer than 1e-9 m are merged in the result.
ConvexPolygon clip_convex(const ConvexPolygon& subject, const ConvexPolygon& clip);

double bev_intersection_area(const BoxBEV& a, const BoxBEV& b);
double bev_iou(const BoxBEV& a, const BoxBEV& b);
double iou_3d(const Box3D& a, const Box3D& b);

}  // namespace ebm3d
