#pragma once

#include <cmath>

namespace cmvrp {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) noexcept {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Counterclockwise angle of `p` around `origin`, in [0, 2*pi).
inline double polar_angle(const Point& origin, const Point& p) noexcept {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double a = std::atan2(p.y - origin.y, p.x - origin.x);
    if (a < 0.0) a += two_pi;
    if (a >= two_pi) a -= two_pi;
    return a;
}

}  // namespace cmvrp
