#pragma once

// Reference surface elements on the (eta, zeta) domain.
//
// Node ordering (corner nodes first, then midside nodes):
//
//   Q4  (-1,-1) (1,-1) (1,1) (-1,1)
//   Q8  Q4 corners, then (0,-1) (1,0) (0,1) (-1,0)
//   T3  (0,0) (1,0) (0,1)
//   T6  T3 corners, then (1/2,0) (1/2,1/2) (0,1/2)
//
// Quadrilaterals live on [-1,1]^2, triangles on the unit triangle
// eta, zeta >= 0, eta + zeta <= 1.

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sbfem {

enum class SurfaceKind { T3, Q4, T6, Q8 };

inline constexpr int kMaxSurfaceNodes = 8;

template <typename Scalar>
using ShapeVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxSurfaceNodes, 1>;

constexpr int node_count(SurfaceKind kind) noexcept {
    switch (kind) {
        case SurfaceKind::T3: return 3;
        case SurfaceKind::Q4: return 4;
        case SurfaceKind::T6: return 6;
        case SurfaceKind::Q8: return 8;
    }
    return 0;
}

constexpr int corner_count(SurfaceKind kind) noexcept {
    return (kind == SurfaceKind::T3 || kind == SurfaceKind::T6) ? 3 : 4;
}

constexpr bool is_triangle(SurfaceKind kind) noexcept { return corner_count(kind) == 3; }

constexpr bool is_quadratic(SurfaceKind kind) noexcept {
    return kind == SurfaceKind::T6 || kind == SurfaceKind::Q8;
}

/// Surface kind from its node count; throws for counts other than 3, 4, 6, 8.
inline SurfaceKind surface_kind_from_nodes(int n) {
    switch (n) {
        case 3: return SurfaceKind::T3;
        case 4: return SurfaceKind::Q4;
        case 6: return SurfaceKind::T6;
        case 8: return SurfaceKind::Q8;
        default:
            throw std::invalid_argument("unsupported surface node count " + std::to_string(n) +
                                        " (expected 3, 4, 6 or 8)");
    }
}

constexpr std::string_view to_string(SurfaceKind kind) noexcept {
    switch (kind) {
        case SurfaceKind::T3: return "T3";
        case SurfaceKind::Q4: return "Q4";
        case SurfaceKind::T6: return "T6";
        case SurfaceKind::Q8: return "Q8";
    }
    return "?";
}

/// Local node indices in traversal order around the perimeter
/// (midside nodes interleaved between their corners).
inline std::span<const int> perimeter_order(SurfaceKind kind) noexcept {
    static constexpr std::array<int, 3> t3{0, 1, 2};
    static constexpr std::array<int, 4> q4{0, 1, 2, 3};
    static constexpr std::array<int, 6> t6{0, 3, 1, 4, 2, 5};
    static constexpr std::array<int, 8> q8{0, 4, 1, 5, 2, 6, 3, 7};
    switch (kind) {
        case SurfaceKind::T3: return t3;
        case SurfaceKind::Q4: return q4;
        case SurfaceKind::T6: return t6;
        case SurfaceKind::Q8: return q8;
    }
    return {};
}

/// Natural coordinates of local node i.
inline Eigen::Vector2d reference_node(SurfaceKind kind, int i) {
    static constexpr double q[8][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1},
                                       {0, -1},  {1, 0},  {0, 1}, {-1, 0}};
    static constexpr double t[6][2] = {{0, 0}, {1, 0}, {0, 1}, {0.5, 0}, {0.5, 0.5}, {0, 0.5}};
    if (is_triangle(kind)) return {t[i][0], t[i][1]};
    return {q[i][0], q[i][1]};
}

/// Centroid of the reference domain.
inline Eigen::Vector2d reference_center(SurfaceKind kind) {
    return is_triangle(kind) ? Eigen::Vector2d(1.0 / 3.0, 1.0 / 3.0) : Eigen::Vector2d(0.0, 0.0);
}

template <typename Scalar>
bool inside_reference(SurfaceKind kind, Scalar eta, Scalar zeta, Scalar tol = Scalar(1e-12)) {
    if (is_triangle(kind)) return eta >= -tol && zeta >= -tol && eta + zeta <= Scalar(1) + tol;
    return eta >= Scalar(-1) - tol && eta <= Scalar(1) + tol && zeta >= Scalar(-1) - tol &&
           zeta <= Scalar(1) + tol;
}

template <typename Scalar>
ShapeVector<Scalar> shape_values(SurfaceKind kind, Scalar eta, Scalar zeta) {
    ShapeVector<Scalar> N(node_count(kind));
    const Scalar one(1), half(0.5), quarter(0.25);
    switch (kind) {
        case SurfaceKind::T3:
            N << one - eta - zeta, eta, zeta;
            break;
        case SurfaceKind::T6: {
            const Scalar l1 = one - eta - zeta;
            N << l1 * (2 * l1 - one), eta * (2 * eta - one), zeta * (2 * zeta - one),
                4 * l1 * eta, 4 * eta * zeta, 4 * zeta * l1;
            break;
        }
        case SurfaceKind::Q4:
            N << quarter * (one - eta) * (one - zeta), quarter * (one + eta) * (one - zeta),
                quarter * (one + eta) * (one + zeta), quarter * (one - eta) * (one + zeta);
            break;
        case SurfaceKind::Q8:
            N << quarter * (one - eta) * (one - zeta) * (-eta - zeta - one),
                quarter * (one + eta) * (one - zeta) * (eta - zeta - one),
                quarter * (one + eta) * (one + zeta) * (eta + zeta - one),
                quarter * (one - eta) * (one + zeta) * (-eta + zeta - one),
                half * (one - eta * eta) * (one - zeta), half * (one + eta) * (one - zeta * zeta),
                half * (one - eta * eta) * (one + zeta), half * (one - eta) * (one - zeta * zeta);
            break;
    }
    return N;
}

/// Derivatives with respect to eta and zeta.
template <typename Scalar>
struct ShapeDerivatives {
    ShapeVector<Scalar> d_eta;
    ShapeVector<Scalar> d_zeta;
};

template <typename Scalar>
ShapeDerivatives<Scalar> shape_derivs(SurfaceKind kind, Scalar eta, Scalar zeta) {
    const int n = node_count(kind);
    ShapeDerivatives<Scalar> d{ShapeVector<Scalar>(n), ShapeVector<Scalar>(n)};
    const Scalar one(1), half(0.5), quarter(0.25);
    switch (kind) {
        case SurfaceKind::T3:
            d.d_eta << -one, one, Scalar(0);
            d.d_zeta << -one, Scalar(0), one;
            break;
        case SurfaceKind::T6: {
            const Scalar l1 = one - eta - zeta;
            d.d_eta << -(4 * l1 - one), 4 * eta - one, Scalar(0), 4 * (l1 - eta), 4 * zeta, -4 * zeta;
            d.d_zeta << -(4 * l1 - one), Scalar(0), 4 * zeta - one, -4 * eta, 4 * eta, 4 * (l1 - zeta);
            break;
        }
        case SurfaceKind::Q4:
            d.d_eta << -quarter * (one - zeta), quarter * (one - zeta), quarter * (one + zeta),
                -quarter * (one + zeta);
            d.d_zeta << -quarter * (one - eta), -quarter * (one + eta), quarter * (one + eta),
                quarter * (one - eta);
            break;
        case SurfaceKind::Q8:
            d.d_eta << quarter * (one - zeta) * (2 * eta + zeta), quarter * (one - zeta) * (2 * eta - zeta),
                quarter * (one + zeta) * (2 * eta + zeta), quarter * (one + zeta) * (2 * eta - zeta),
                -eta * (one - zeta), half * (one - zeta * zeta), -eta * (one + zeta),
                -half * (one - zeta * zeta);
            d.d_zeta << quarter * (one - eta) * (eta + 2 * zeta), quarter * (one + eta) * (-eta + 2 * zeta),
                quarter * (one + eta) * (eta + 2 * zeta), quarter * (one - eta) * (-eta + 2 * zeta),
                -half * (one - eta * eta), -zeta * (one + eta), half * (one - eta * eta),
                -zeta * (one - eta);
            break;
    }
    return d;
}

/// Strict evaluation: rejects points outside the reference domain.
template <typename Scalar>
ShapeVector<Scalar> shape_values_checked(SurfaceKind kind, Scalar eta, Scalar zeta) {
    if (!inside_reference(kind, eta, zeta))
        throw std::domain_error("point outside the reference domain of " + std::string(to_string(kind)));
    return shape_values(kind, eta, zeta);
}

template <typename Scalar>
ShapeDerivatives<Scalar> shape_derivs_checked(SurfaceKind kind, Scalar eta, Scalar zeta) {
    if (!inside_reference(kind, eta, zeta))
        throw std::domain_error("point outside the reference domain of " + std::string(to_string(kind)));
    return shape_derivs(kind, eta, zeta);
}

struct QuadraturePoint {
    double eta;
    double zeta;
    double weight;
};

struct QuadratureRule {
    std::vector<QuadraturePoint> points;
    int degree;  ///< total polynomial degree integrated exactly
};

/// Gauss rule used for all surface integrals of the given kind:
/// 2x2 for Q4, 3x3 for Q8, 3 points for T3, 6 points for T6.
const QuadratureRule& gauss_rule(SurfaceKind kind);

}  // namespace sbfem
