#pragma once

#include <cmath>

namespace d2dgain {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline double distance(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double horizontal_distance(const Vec3& a, const Vec3& b) {
    double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// axis-aligned rectangle in the ground plane
struct Rect {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;

    // strict interior; points on the boundary are outside
    bool contains_xy(double x, double y) const {
        return x > x_min && x < x_max && y > y_min && y < y_max;
    }
};

namespace detail {

// Counts how often the open segment a->b pierces the plane {axis = c}
// within the face's lateral span and strictly below the roof. Strict
// inequalities everywhere: endpoint contacts, corner grazes and
// roof-height ties do not count (fixed convention so tests are exact).
inline int face_crossing(double pa, double pb, double c,
                         double qa, double qb, double q_lo, double q_hi,
                         double za, double zb, double roof) {
    if (!((pa < c && pb > c) || (pa > c && pb < c))) return 0;
    double t = (c - pa) / (pb - pa);  // in (0,1) given the strict straddle
    double q = qa + t * (qb - qa);
    if (!(q > q_lo && q < q_hi)) return 0;
    double z = za + t * (zb - za);
    return (z < roof) ? 1 : 0;
}

}  // namespace detail

// Number of vertical wall faces of one box (footprint extruded to roof
// height) crossed by the open segment a->b.
inline int wall_faces_crossed(const Vec3& a, const Vec3& b, const Rect& r, double roof_m) {
    int n = 0;
    n += detail::face_crossing(a.x, b.x, r.x_min, a.y, b.y, r.y_min, r.y_max, a.z, b.z, roof_m);
    n += detail::face_crossing(a.x, b.x, r.x_max, a.y, b.y, r.y_min, r.y_max, a.z, b.z, roof_m);
    n += detail::face_crossing(a.y, b.y, r.y_min, a.x, b.x, r.x_min, r.x_max, a.z, b.z, roof_m);
    n += detail::face_crossing(a.y, b.y, r.y_max, a.x, b.x, r.x_min, r.x_max, a.z, b.z, roof_m);
    return n;
}

}  // namespace d2dgain
