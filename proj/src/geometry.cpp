#include "ebm3d/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace ebm3d {

namespace {

constexpr double kMergeTol = 1e-9;
constexpr double kAreaTol = 1e-12;

void push_merged(std::vector<Vec2>& out, Vec2 p) {
  if (!out.empty()) {
    const Vec2 d = p - out.back();
    if (std::abs(d.x) < kMergeTol && std::abs(d.y) < kMergeTol) return;
  }
  out.push_back(p);
}

// Canonical argument order so the clipping arithmetic is identical for
// (a, b) and (b, a).
bool bev_less(const BoxBEV& a, const BoxBEV& b) {
  return std::tie(a.cx, a.cy, a.w, a.l, a.phi) < std::tie(b.cx, b.cy, b.w, b.l, b.phi);
}

}  // namespace

double ConvexPolygon::signed_area() const {
  const std::size_t n = vertices.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) twice += cross(vertices[i], vertices[(i + 1) % n]);
  return 0.5 * twice;
}

double ConvexPolygon::area() const { return std::abs(signed_area()); }

BoxBEV to_bev(const Box3D& box) { return {box.cx, box.cy, box.w, box.l, box.phi}; }

double reduce_angle(double phi) { return std::remainder(phi, kTwoPi); }

double wrap_angle(double phi) {
  double r = std::remainder(phi, kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  return r;
}

ConvexPolygon bev_corners(const BoxBEV& box) {
  const double phi = reduce_angle(box.phi);
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double hl = 0.5 * box.l;
  const double hw = 0.5 * box.w;
  // Local corners in CCW order: front-right, front-left, back-left, back-right.
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  ConvexPolygon poly;
  poly.vertices.reserve(4);
  for (const Vec2& p : local) {
    poly.vertices.push_back({box.cx + c * p.x - s * p.y, box.cy + s * p.x + c * p.y});
  }
  return poly;
}

ConvexPolygon clip_convex(const ConvexPolygon& subject, const ConvexPolygon& clip) {
  std::vector<Vec2> output = subject.vertices;
  const std::size_t nc = clip.vertices.size();
  for (std::size_t e = 0; e < nc && !output.empty(); ++e) {
    const Vec2 a = clip.vertices[e];
    const Vec2 b = clip.vertices[(e + 1) % nc];
    const Vec2 edge = b - a;
    std::vector<Vec2> input = std::move(output);
    output.clear();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = input[i];
      const Vec2 q = input[(i + 1) % n];
      // Left of the edge (CCW interior) is inside.
      const double dp = cross(edge, p - a);
      const double dq = cross(edge, q - a);
      const bool p_in = dp >= 0.0;
      const bool q_in = dq >= 0.0;
      if (p_in) push_merged(output, p);
      if (p_in != q_in) {
        const double t = dp / (dp - dq);
        push_merged(output, p + t * (q - p));
      }
    }
    if (output.size() >= 2) {
      const Vec2 d = output.front() - output.back();
      if (std::abs(d.x) < kMergeTol && std::abs(d.y) < kMergeTol) output.pop_back();
    }
  }
  ConvexPolygon result;
  if (output.size() >= 3) result.vertices = std::move(output);
  return result;
}

double bev_intersection_area(const BoxBEV& a, const BoxBEV& b) {
  const BoxBEV& first = bev_less(b, a) ? b : a;
  const BoxBEV& second = bev_less(b, a) ? a : b;
  const double area = clip_convex(bev_corners(first), bev_corners(second)).area();
  return area < kAreaTol ? 0.0 : area;
}

double bev_iou(const BoxBEV& a, const BoxBEV& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.w * a.l + b.w * b.l - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double bottom = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double top = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double overlap_z = std::max(0.0, top - bottom);
  if (overlap_z <= 0.0) return 0.0;
  const double inter = bev_intersection_area(to_bev(a), to_bev(b)) * overlap_z;
  if (inter <= 0.0) return 0.0;
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace ebm3d
