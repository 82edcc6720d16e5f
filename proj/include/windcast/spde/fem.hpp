#pragma once

// Piecewise-linear finite elements: lumped mass, stiffness and the SPDE precision.

#include <Eigen/Sparse>

#include <array>
#include <string>
#include <vector>

#include "windcast/core/error.hpp"
#include "windcast/spde/mesh.hpp"

namespace windcast::spde {

struct FemMatrices {
    /// Lumped mass: diagonal of C (one third of the adjacent triangle areas per vertex).
    Vector c;
    /// Stiffness G_ij = integral of grad(psi_i) . grad(psi_j).
    SparseMatrix g;
};

inline FemMatrices assemble_fem(const Mesh& mesh) {
    const auto m = static_cast<Eigen::Index>(mesh.size());
    FemMatrices fem;
    fem.c = Vector::Zero(m);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(mesh.triangles.size() * 9);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double area = mesh.area(t);
        if (!(area > 0.0)) throw GeometryError("triangle " + std::to_string(t) + " has non-positive area");
        // Edge vectors opposite each vertex.
        std::array<Point, 3> e;
        for (std::size_t k = 0; k < 3; ++k) {
            const auto& a = mesh.vertices[tri[(k + 1) % 3]];
            const auto& b = mesh.vertices[tri[(k + 2) % 3]];
            e[k] = {b.x - a.x, b.y - a.y};
        }
        for (std::size_t i = 0; i < 3; ++i) {
            fem.c(static_cast<Eigen::Index>(tri[i])) += area / 3.0;
            for (std::size_t j = 0; j < 3; ++j) {
                trips.emplace_back(static_cast<Eigen::Index>(tri[i]), static_cast<Eigen::Index>(tri[j]),
                                   (e[i].x * e[j].x + e[i].y * e[j].y) / (4.0 * area));
            }
        }
    }
    fem.g.resize(m, m);
    fem.g.setFromTriplets(trips.begin(), trips.end());
    fem.g.makeCompressed();
    return fem;
}

/// alpha = 2: T (K C + G) C^{-1} (K C + G) T;  alpha = 1: T (K C + G) T,
/// with K = diag(kappa^2) and T = diag(tau) evaluated at the vertices.
inline SparseMatrix assemble_precision(const FemMatrices& fem, const Vector& kappa2, const Vector& tau, int alpha) {
    const auto m = fem.c.size();
    if (kappa2.size() != m || tau.size() != m) throw ShapeError("kappa/tau vectors must have one entry per vertex");
    if (alpha != 1 && alpha != 2) throw ArgumentError("alpha must be 1 or 2, got " + std::to_string(alpha));
    SparseMatrix k = fem.g;
    for (Eigen::Index i = 0; i < m; ++i) k.coeffRef(i, i) += kappa2(i) * fem.c(i);
    SparseMatrix q;
    if (alpha == 1) {
        q = k;
    } else {
        const Vector cinv = fem.c.cwiseInverse();
        SparseMatrix scaled = cinv.asDiagonal() * k;
        q = k * scaled;
    }
    q = tau.asDiagonal() * q * tau.asDiagonal();
    // Symmetrize exactly so factorizations see identical upper and lower triangles.
    SparseMatrix qt = q.transpose();
    q = 0.5 * (q + qt);
    q.makeCompressed();
    return q;
}


}  // namespace windcast::spde
