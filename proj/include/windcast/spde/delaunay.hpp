#pragma once

// Incremental Bowyer-Watson Delaunay triangulation with walking point location.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/field_store.hpp"

namespace windcast::spde {

using Triangle = std::array<std::size_t, 3>;

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
inline double orient(const Point& a, const Point& b, const Point& c) {
    const long double v = (static_cast<long double>(b.x) - a.x) * (static_cast<long double>(c.y) - a.y) -
                          (static_cast<long double>(b.y) - a.y) * (static_cast<long double>(c.x) - a.x);
    return static_cast<double>(v);
}

/// Positive when d lies strictly inside the circumcircle of the counter-clockwise triangle (a, b, c).
inline double incircle(const Point& a, const Point& b, const Point& c, const Point& d) {
    using L = long double;
    const L adx = static_cast<L>(a.x) - d.x, ady = static_cast<L>(a.y) - d.y;
    const L bdx = static_cast<L>(b.x) - d.x, bdy = static_cast<L>(b.y) - d.y;
    const L cdx = static_cast<L>(c.x) - d.x, cdy = static_cast<L>(c.y) - d.y;
    const L ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
    const L det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    return static_cast<double>(det);
}

namespace detail {

inline constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

struct Tri {
    Triangle v;
    /// nbr[k] is the triangle across the edge opposite v[k].
    std::array<std::size_t, 3> nbr{none, none, none};
    bool alive = true;
};

class Triangulator {
public:
    explicit Triangulator(const std::vector<Point>& pts) : pts_(pts) {
        double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
        const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
        const double big = 1e3 * span;
        super_ = pts_.size();
        pts_.push_back({cx - big, cy - big});
        pts_.push_back({cx + big, cy - big});
        pts_.push_back({cx, cy + big});
        tris_.push_back(Tri{{super_, super_ + 1, super_ + 2}});
    }

    void insert(std::size_t p) {
        const std::size_t root = locate(pts_[p]);
        // Cavity: triangles whose circumcircle contains p, grown from the containing triangle.
        std::vector<std::size_t> cavity{root};
        mark_.resize(tris_.size(), 0);
        mark_[root] = 1;
        for (std::size_t k = 0; k < cavity.size(); ++k) {
            for (auto n : tris_[cavity[k]].nbr) {
                if (n == none || mark_[n]) continue;
                const auto& t = tris_[n];
                if (incircle(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]], pts_[p]) > 0.0) {
                    mark_[n] = 1;
                    cavity.push_back(n);
                }
            }
        }
        // Rounding can leave a cavity that is not star-shaped from p; shrink it until every
        // boundary edge sees p on its left.
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t k = 0; k < cavity.size() && !changed; ++k) {
                const auto ti = cavity[k];
                if (ti == root) continue;
                const auto& t = tris_[ti];
                for (int e = 0; e < 3; ++e) {
                    const auto n = t.nbr[static_cast<std::size_t>(e)];
                    if (n != none && mark_[n]) continue;
                    const auto a = t.v[static_cast<std::size_t>((e + 1) % 3)], b = t.v[static_cast<std::size_t>((e + 2) % 3)];
                    if (orient(pts_[a], pts_[b], pts_[p]) <= 0.0) {
                        mark_[ti] = 0;
                        cavity.erase(cavity.begin() + static_cast<std::ptrdiff_t>(k));
                        changed = true;
                        break;
                    }
                }
            }
            if (changed) reconnect(cavity, root);
        }

        struct Edge {
            std::size_t a, b, outer, outer_slot;
        };
        std::vector<Edge> boundary;
        for (auto ti : cavity) {
            const auto& t = tris_[ti];
            for (int e = 0; e < 3; ++e) {
                const auto n = t.nbr[static_cast<std::size_t>(e)];
                if (n != none && mark_[n]) continue;
                Edge edge{t.v[static_cast<std::size_t>((e + 1) % 3)], t.v[static_cast<std::size_t>((e + 2) % 3)], n, 0};
                if (n != none) {
                    for (std::size_t s = 0; s < 3; ++s) {
                        if (tris_[n].nbr[s] == ti) edge.outer_slot = s;
                    }
                }
                boundary.push_back(edge);
            }
        }
        for (auto ti : cavity) {
            tris_[ti].alive = false;
            mark_[ti] = 0;
        }
        // Fan of new triangles (a, b, p); the edge opposite p is the old boundary edge.
        std::unordered_map<std::size_t, std::size_t> starts_at;  // vertex a -> new triangle with edge (a, b)
        std::unordered_map<std::size_t, std::size_t> ends_at;    // vertex b -> new triangle
        std::vector<std::size_t> created;
        for (const auto& e : boundary) {
            Tri t{{e.a, e.b, p}};
            t.nbr[2] = e.outer;
            const std::size_t id = tris_.size();
            tris_.push_back(t);
            if (e.outer != none) tris_[e.outer].nbr[e.outer_slot] = id;
            starts_at[e.a] = id;
            ends_at[e.b] = id;
            created.push_back(id);
        }
        for (auto id : created) {
            auto& t = tris_[id];
            // Edge opposite a is (b, p): shared with the triangle starting at b.
            t.nbr[0] = starts_at.at(t.v[1]);
            // Edge opposite b is (p, a): shared with the triangle ending at a.
            t.nbr[1] = ends_at.at(t.v[0]);
        }
        last_ = created.front();
    }

    std::vector<Triangle> finish() const {
        std::vector<Triangle> out;
        for (const auto& t : tris_) {
            if (!t.alive) continue;
            if (t.v[0] >= super_ || t.v[1] >= super_ || t.v[2] >= super_) continue;
            out.push_back(t.v);
        }
        return out;
    }

private:
    std::size_t locate(const Point& p) {
        std::size_t cur = last_;
        if (!tris_[cur].alive) cur = first_alive();
        for (std::size_t steps = 0; steps < 4 * tris_.size() + 16; ++steps) {
            const auto& t = tris_[cur];
            bool moved = false;
            for (std::size_t e = 0; e < 3; ++e) {
                const auto a = t.v[(e + 1) % 3], b = t.v[(e + 2) % 3];
                if (orient(pts_[a], pts_[b], p) < 0.0 && t.nbr[e] != none) {
                    cur = t.nbr[e];
                    moved = true;
                    break;
                }
            }
            if (!moved) return cur;
        }
        // Walk failed to settle (degenerate rounding); fall back to a scan.
        for (std::size_t i = 0; i < tris_.size(); ++i) {
            const auto& t = tris_[i];
            if (!t.alive) continue;
            if (orient(pts_[t.v[0]], pts_[t.v[1]], p) >= 0 && orient(pts_[t.v[1]], pts_[t.v[2]], p) >= 0 &&
                orient(pts_[t.v[2]], pts_[t.v[0]], p) >= 0) {
                return i;
            }
        }
        throw GeometryError("point location failed during triangulation");
    }

    std::size_t first_alive() const {
        for (std::size_t i = tris_.size(); i-- > 0;) {
            if (tris_[i].alive) return i;
        }
        throw GeometryError("triangulation has no live triangles");
    }

    // Keeps only the cavity triangles still connected to root.
    void reconnect(std::vector<std::size_t>& cavity, std::size_t root) {
        std::vector<std::size_t> keep{root};
        for (auto t : cavity) mark_[t] = 2;
        mark_[root] = 1;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            for (auto n : tris_[keep[k]].nbr) {
                if (n != none && mark_[n] == 2) {
                    mark_[n] = 1;
                    keep.push_back(n);
                }
            }
        }
        for (auto t : cavity) {
            if (mark_[t] == 2) mark_[t] = 0;
        }
        cavity = std::move(keep);
    }

    std::vector<Point> pts_;
    std::vector<Tri> tris_;
    std::vector<char> mark_;
    std::size_t super_ = 0;
    std::size_t last_ = 0;
};

}  // namespace detail

/// Delaunay triangulation of `pts` (counter-clockwise triangles indexing into pts).
/// Points must be distinct; insertion follows a spatially coherent order for fast walks.
inline std::vector<Triangle> delaunay(const std::vector<Point>& pts) {
    if (pts.size() < 3) throw GeometryError("triangulation needs at least 3 points");
    bool any_area = false;
    for (std::size_t k = 2; k < pts.size() && !any_area; ++k) {
        any_area = std::abs(orient(pts[0], pts[1], pts[k])) > 1e-12 * (1.0 + distance(pts[0], pts[1]) * distance(pts[0], pts[k]));
    }
    if (!any_area) throw GeometryError("all points are collinear; cannot triangulate");

    // Insert along a coarse row-major bucket order (serpentine) so consecutive points are close.
    double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
    for (const auto& p : pts) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const auto cells = static_cast<std::size_t>(std::max(1.0, std::sqrt(static_cast<double>(pts.size()) / 4.0)));
    auto cell_of = [&](const Point& p, double lo, double hi) {
        const double u = hi > lo ? (p.x - lo) / (hi - lo) : 0.0;
        return std::min(cells - 1, static_cast<std::size_t>(u * static_cast<double>(cells)));
    };
    std::vector<std::size_t> order(pts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto key = [&](std::size_t i) {
        const auto row = static_cast<std::size_t>(
            std::min(static_cast<double>(cells - 1),
                     ymax > ymin ? std::floor((pts[i].y - ymin) / (ymax - ymin) * static_cast<double>(cells)) : 0.0));
        const auto col = cell_of(pts[i], xmin, xmax);
        const auto c = row % 2 == 0 ? col : cells - 1 - col;
        return std::pair(row, c);
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    detail::Triangulator tr(pts);
    for (auto i : order) tr.insert(i);
    auto tris = tr.finish();
    if (tris.empty()) throw GeometryError("triangulation produced no triangles");
    return tris;
}

}  // namespace windcast::spde
