#pragma once

#include <impulse/numerics.hpp>

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace impulse {

struct Point {
    double y;
    double v;
};

/// Smallest concave majorant of the points, evaluated at their own
/// abscissae. When `pin` is given (left of every point) the envelope is
/// taken over the points together with the pin. Upper hull by monotone
/// chain, O(N).
inline std::vector<double> concave_envelope(const std::vector<Point>& pts, std::optional<Point> pin = std::nullopt) {
    if (pts.size() + (pin ? 1 : 0) < 2) throw std::invalid_argument("concave_envelope needs at least two points");
    for (std::size_t i = 1; i < pts.size(); ++i)
        if (!(pts[i].y > pts[i - 1].y)) throw std::invalid_argument("concave_envelope: abscissae must increase");
    if (pin && !(pin->y < pts.front().y)) throw std::invalid_argument("concave_envelope: pin must lie left of the points");

    std::vector<Point> hull;
    hull.reserve(pts.size() + 1);
    auto push = [&](const Point& p) {
        // Drop the last hull point while it lies on or below the chord from
        // its predecessor to p.
        while (hull.size() >= 2) {
            const Point& o = hull[hull.size() - 2];
            const Point& m = hull.back();
            const double cross = (m.y - o.y) * (p.v - o.v) - (m.v - o.v) * (p.y - o.y);
            if (cross >= 0.0) hull.pop_back();
            else break;
        }
        hull.push_back(p);
    };
    if (pin) push(*pin);
    for (const auto& p : pts) push(p);

    std::vector<double> out(pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double y = pts[i].y;
        if (hull.size() == 1) {
            out[i] = hull[0].v;
            continue;
        }
        while (k + 2 < hull.size() && hull[k + 1].y <= y) ++k;
        const Point& l = hull[k];
        const Point& r = hull[k + 1];
        if (y == l.y) out[i] = l.v;
        else if (y == r.y) out[i] = r.v;
        else out[i] = l.v + (y - l.y) / (r.y - l.y) * (r.v - l.v);
    }
    return out;
}

} // namespace impulse
