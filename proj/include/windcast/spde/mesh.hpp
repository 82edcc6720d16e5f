#pragma once

// Triangulated mesh over a spatial domain plus barycentric projection onto it.

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/core/text.hpp"
#include "windcast/field_store.hpp"
#include "windcast/spde/delaunay.hpp"

namespace windcast::spde {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct Mesh {
    std::vector<Point> vertices;
    std::vector<Triangle> triangles;
    std::vector<char> boundary;

    std::size_t size() const { return vertices.size(); }

    double area(std::size_t t) const {
        const auto& tri = triangles[t];
        return 0.5 * orient(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    }
};

struct MeshOptions {
    std::size_t target_vertices = 1000;
    /// Place a vertex at every domain location (lattice points too close to them are dropped).
    bool include_locations = false;
    /// Width of the extension band as a fraction of the domain diameter.
    double buffer = 0.25;
};

namespace detail {

struct Box {
    double xmin, xmax, ymin, ymax;
    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    bool contains(const Point& p, double pad = 0.0) const {
        return p.x >= xmin - pad && p.x <= xmax + pad && p.y >= ymin - pad && p.y <= ymax + pad;
    }
};

inline Box bounds(const std::vector<Point>& pts) {
    Box b{pts[0].x, pts[0].x, pts[0].y, pts[0].y};
    for (const auto& p : pts) {
        b.xmin = std::min(b.xmin, p.x);
        b.xmax = std::max(b.xmax, p.x);
        b.ymin = std::min(b.ymin, p.y);
        b.ymax = std::max(b.ymax, p.y);
    }
    return b;
}

/// Triangular lattice of spacing h covering box (rows offset by h/2).
inline void triangular_lattice(const Box& box, double h, std::vector<Point>& out) {
    const double dy = h * std::sqrt(3.0) / 2.0;
    const auto rows = static_cast<long>(std::ceil(box.height() / dy - 1e-9));
    const double y0 = 0.5 * (box.ymin + box.ymax) - 0.5 * static_cast<double>(rows) * dy;
    for (long r = 0; r <= rows; ++r) {
        const double y = y0 + static_cast<double>(r) * dy;
        const bool odd = r % 2 != 0;
        const auto cols = static_cast<long>(std::ceil(box.width() / h - 1e-9));
        const double x0 = 0.5 * (box.xmin + box.xmax) - 0.5 * static_cast<double>(cols) * h - (odd ? 0.5 * h : 0.0);
        for (long c = 0; c <= cols + (odd ? 1 : 0); ++c) out.push_back({x0 + static_cast<double>(c) * h, y});
    }
}

/// Lattice points for spacing h: fine triangular lattice over the padded domain box and a
/// twice-coarser square band out to the buffer, ending on the outer rectangle.
inline std::vector<Point> cover_points(const Box& dom, double h, double buffer_width) {
    std::vector<Point> pts;
    const Box inner{dom.xmin - h, dom.xmax + h, dom.ymin - h, dom.ymax + h};
    triangular_lattice(inner, h, pts);
    const double pad = std::max(buffer_width, 2.0 * h);
    const Box outer{dom.xmin - pad, dom.xmax + pad, dom.ymin - pad, dom.ymax + pad};
    const double H = 2.0 * h;
    const auto nx = static_cast<long>(std::ceil(outer.width() / H));
    const auto ny = static_cast<long>(std::ceil(outer.height() / H));
    const double sx = outer.width() / static_cast<double>(nx), sy = outer.height() / static_cast<double>(ny);
    for (long i = 0; i <= nx; ++i) {
        for (long j = 0; j <= ny; ++j) {
            const Point p{outer.xmin + static_cast<double>(i) * sx, outer.ymin + static_cast<double>(j) * sy};
            if (inner.contains(p, 0.5 * h)) continue;
            pts.push_back(p);
        }
    }
    return pts;
}

inline std::vector<Point> merge_locations(std::vector<Point> lattice, const std::vector<Point>& locs, double h) {
    // Bucket grid to drop lattice points within 0.4 h of a location.
    const double cell = h;
    std::map<std::pair<long, long>, std::vector<std::size_t>> grid;
    auto key = [&](const Point& p) {
        return std::pair(static_cast<long>(std::floor(p.x / cell)), static_cast<long>(std::floor(p.y / cell)));
    };
    for (std::size_t i = 0; i < locs.size(); ++i) grid[key(locs[i])].push_back(i);
    std::vector<Point> out = locs;
    for (const auto& p : lattice) {
        const auto [kx, ky] = key(p);
        bool near = false;
        for (long dx = -1; dx <= 1 && !near; ++dx) {
            for (long dy = -1; dy <= 1 && !near; ++dy) {
                auto it = grid.find({kx + dx, ky + dy});
                if (it == grid.end()) continue;
                for (auto i : it->second) {
                    if (distance(p, locs[i]) < 0.4 * h) {
                        near = true;
                        break;
                    }
                }
            }
        }
        if (!near) out.push_back(p);
    }
    return out;
}

inline std::vector<char> boundary_flags(std::size_t n, const std::vector<Triangle>& tris) {
    std::map<std::pair<std::size_t, std::size_t>, int> edges;
    for (const auto& t : tris) {
        for (int e = 0; e < 3; ++e) {
            auto a = t[static_cast<std::size_t>(e)], b = t[static_cast<std::size_t>((e + 1) % 3)];
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    }
    std::vector<char> flag(n, 0);
    for (const auto& [e, c] : edges) {
        if (c == 1) flag[e.first] = flag[e.second] = 1;
    }
    return flag;
}

}  // namespace detail

/// Mesh from an explicit vertex set (Delaunay; slivers below 1e-12 area dropped).
inline Mesh mesh_from_points(std::vector<Point> pts) {
    Mesh mesh;
    auto tris = delaunay(pts);
    mesh.vertices = std::move(pts);
    for (const auto& t : tris) {
        if (0.5 * orient(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) > 1e-12) {
            mesh.triangles.push_back(t);
        }
    }
    // Drop vertices no triangle uses, keeping the caller's order for the rest.
    std::vector<char> used(mesh.vertices.size(), 0);
    for (const auto& t : mesh.triangles) {
        for (auto v : t) used[v] = 1;
    }
    std::vector<std::size_t> renumber(mesh.vertices.size(), detail::none);
    std::vector<Point> verts;
    for (std::size_t i = 0; i < used.size(); ++i) {
        if (!used[i]) continue;
        renumber[i] = verts.size();
        verts.push_back(mesh.vertices[i]);
    }
    for (auto& t : mesh.triangles) {
        for (auto& v : t) v = renumber[v];
    }
    mesh.vertices = std::move(verts);
    mesh.boundary = detail::boundary_flags(mesh.vertices.size(), mesh.triangles);
    return mesh;
}

/// Mesh covering `domain` with an extension band; lattice spacing is bisected so the vertex
/// count lands within 10% of the target.
inline Mesh build_mesh(const LocationTable& domain, const MeshOptions& opt = {}) {
    const auto& locs = domain.coords();
    if (locs.size() < 3) throw GeometryError("mesh construction needs at least 3 locations");
    bool any_area = false;
    for (std::size_t k = 2; k < locs.size() && !any_area; ++k) {
        any_area = std::abs(orient(locs[0], locs[1], locs[k])) > 1e-12 * (1.0 + distance(locs[0], locs[1]) * distance(locs[0], locs[k]));
    }
    if (!any_area) throw GeometryError("domain locations are collinear; cannot build a 2-D mesh");
    const auto box = detail::bounds(locs);
    const double diam = std::hypot(box.width(), box.height());
    const double band = opt.buffer * diam;
    const std::size_t fixed = opt.include_locations ? locs.size() : 0;
    if (opt.target_vertices < fixed + 16) {
        throw ArgumentError("target vertex count " + std::to_string(opt.target_vertices) +
                            " is too small for this domain (need at least " + std::to_string(fixed + 16) + ")");
    }

    auto candidate = [&](double h) {
        auto pts = detail::cover_points(box, h, band);
        if (opt.include_locations) pts = detail::merge_locations(std::move(pts), locs, h);
        return pts;
    };
    const double target = static_cast<double>(opt.target_vertices);
    double lo = diam * 1e-4, hi = diam;
    std::vector<Point> best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 60; ++it) {
        const double h = std::sqrt(lo * hi);
        auto pts = candidate(h);
        const double err = std::abs(static_cast<double>(pts.size()) - target) / target;
        if (err < best_err) {
            best_err = err;
            best = pts;
        }
        if (err <= 0.02) break;
        if (static_cast<double>(pts.size()) > target) {
            lo = h;
        } else {
            hi = h;
        }
    }
    if (best_err > 0.1) {
        throw GeometryError("could not reach the requested vertex count " + std::to_string(opt.target_vertices) +
                            " within 10% (closest " + std::to_string(best.size()) + ")");
    }
    return mesh_from_points(std::move(best));
}

/// Triangle lookup via a uniform bucket grid over triangle bounding boxes.
class PointLocator {
public:
    explicit PointLocator(const Mesh& mesh) : mesh_(mesh) {
        box_ = detail::bounds(mesh.vertices);
        n_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(mesh.triangles.size()) / 2.0)));
        cells_.assign(n_ * n_, {});
        for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
            const auto& tri = mesh.triangles[t];
            double x0 = mesh.vertices[tri[0]].x, x1 = x0, y0 = mesh.vertices[tri[0]].y, y1 = y0;
            for (auto v : tri) {
                x0 = std::min(x0, mesh.vertices[v].x);
                x1 = std::max(x1, mesh.vertices[v].x);
                y0 = std::min(y0, mesh.vertices[v].y);
                y1 = std::max(y1, mesh.vertices[v].y);
            }
            for (auto i = cell_x(x0); i <= cell_x(x1); ++i) {
                for (auto j = cell_y(y0); j <= cell_y(y1); ++j) cells_[j * n_ + i].push_back(t);
            }
        }
    }

    /// Containing triangle and barycentric weights; throws GeometryError when outside the mesh.
    std::pair<std::size_t, std::array<double, 3>> locate(const Point& p) const {
        const double tol = 1e-10;
        if (box_.contains(p, tol * (1.0 + box_.width()))) {
            double best_min = -std::numeric_limits<double>::infinity();
            std::size_t best_t = detail::none;
            std::array<double, 3> best_w{};
            for (auto t : cells_[cell_y(p.y) * n_ + cell_x(p.x)]) {
                const auto& tri = mesh_.triangles[t];
                const auto& a = mesh_.vertices[tri[0]];
                const auto& b = mesh_.vertices[tri[1]];
                const auto& c = mesh_.vertices[tri[2]];
                const double area2 = orient(a, b, c);
                std::array<double, 3> w{orient(b, c, p) / area2, orient(c, a, p) / area2, orient(a, b, p) / area2};
                const double mn = std::min({w[0], w[1], w[2]});
                if (mn > best_min) {
                    best_min = mn;
                    best_t = t;
                    best_w = w;
                }
                if (mn >= 0.0) break;
            }
            if (best_t != detail::none && best_min >= -tol) {
                double s = 0.0;
                for (auto& w : best_w) {
                    w = std::clamp(w, 0.0, 1.0);
                    s += w;
                }
                for (auto& w : best_w) w /= s;
                return {best_t, best_w};
            }
        }
        throw GeometryError("location (" + text::format_double(p.x) + ", " + text::format_double(p.y) +
                            ") lies outside the mesh");
    }

private:
    std::size_t cell_x(double x) const {
        const double u = box_.width() > 0 ? (x - box_.xmin) / box_.width() : 0.0;
        return std::min(n_ - 1, static_cast<std::size_t>(std::max(0.0, u) * static_cast<double>(n_)));
    }
    std::size_t cell_y(double y) const {
        const double u = box_.height() > 0 ? (y - box_.ymin) / box_.height() : 0.0;
        return std::min(n_ - 1, static_cast<std::size_t>(std::max(0.0, u) * static_cast<double>(n_)));
    }

    const Mesh& mesh_;
    detail::Box box_{};
    std::size_t n_ = 1;
    std::vector<std::vector<std::size_t>> cells_;
};

/// Sparse n x m matrix of barycentric weights: row i interpolates vertex values at points[i].
inline SparseMatrix projection_matrix(const Mesh& mesh, const std::vector<Point>& points) {
    PointLocator loc(mesh);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(points.size() * 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto [t, w] = loc.locate(points[i]);
        for (int k = 0; k < 3; ++k) {
            if (w[static_cast<std::size_t>(k)] > 0.0) {
                trips.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(mesh.triangles[t][static_cast<std::size_t>(k)]),
                                   w[static_cast<std::size_t>(k)]);
            }
        }
    }
    SparseMatrix a(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(mesh.size()));
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    return a;
}

inline SparseMatrix projection_matrix(const Mesh& mesh, const LocationTable& locs) {
    return projection_matrix(mesh, locs.coords());
}

inline void write_mesh(const Mesh& mesh, const std::filesystem::path& vertices_csv,
                       const std::filesystem::path& triangles_csv) {
    auto v = text::open_output(vertices_csv);
    v << "id,x,y,boundary\n";
    for (std::size_t i = 0; i < mesh.size(); ++i) {
        v << i << ',' << text::format_double(mesh.vertices[i].x) << ',' << text::format_double(mesh.vertices[i].y) << ','
          << static_cast<int>(mesh.boundary[i]) << '\n';
    }
    text::check_written(v, vertices_csv);
    auto t = text::open_output(triangles_csv);
    t << "a,b,c\n";
    for (const auto& tri : mesh.triangles) t << tri[0] << ',' << tri[1] << ',' << tri[2] << '\n';
    text::check_written(t, triangles_csv);
}

inline Mesh read_mesh(const std::filesystem::path& vertices_csv, const std::filesystem::path& triangles_csv) {
    Mesh mesh;
    auto rows = [](const std::filesystem::path& path, std::size_t width) {
        auto in = text::open_input(path);
        std::string line;
        std::getline(in, line);
        std::vector<std::vector<double>> out;
        std::size_t row = 0;
        while (std::getline(in, line)) {
            ++row;
            if (text::trim(line).empty()) continue;
            const auto cells = text::split(line);
            if (cells.size() != width) throw SchemaError(path.string() + ": row " + std::to_string(row) + " has wrong width");
            std::vector<double> vals;
            for (auto c : cells) {
                auto v = text::parse_double(c);
                if (!v) throw SchemaError(path.string() + ": row " + std::to_string(row) + ": malformed value");
                vals.push_back(*v);
            }
            out.push_back(std::move(vals));
        }
        return out;
    };
    for (const auto& r : rows(vertices_csv, 4)) {
        mesh.vertices.push_back({r[1], r[2]});
        mesh.boundary.push_back(static_cast<char>(r[3] != 0.0));
    }
    for (const auto& r : rows(triangles_csv, 3)) {
        Triangle t{};
        for (std::size_t k = 0; k < 3; ++k) {
            if (r[k] < 0 || r[k] >= static_cast<double>(mesh.size())) {
                throw SchemaError(triangles_csv.string() + ": vertex index out of range");
            }
            t[k] = static_cast<std::size_t>(r[k]);
        }
        mesh.triangles.push_back(t);
    }
    return mesh;
}

}  // namespace windcast::spde
