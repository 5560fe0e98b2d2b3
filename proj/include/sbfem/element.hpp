#pragma once

// Scaled boundary polyhedral element: boundary Jacobian, strain operators,
// coefficient matrices, Hamiltonian eigen-solution, stiffness, mass and
// interior field recovery.
//
// Voigt order throughout: (xx, yy, zz, yz, xz, xy), engineering shear strains.
// Element DOFs are node-major: (u_x, u_y, u_z) of local node 0, then node 1, ...

#include "sbfem/mesh.hpp"
#include "sbfem/shape_functions.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <complex>

namespace sbfem {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix63d = Eigen::Matrix<double, 6, 3>;

struct ElasticMaterial {
    double youngs_modulus = 0.0;  ///< Pa
    double poisson_ratio = 0.0;
    double density = 0.0;  ///< kg/m^3

    /// Throws std::invalid_argument unless E > 0, rho >= 0 and -1 < nu < 0.5.
    void check() const;

    friend bool operator==(const ElasticMaterial&, const ElasticMaterial&) = default;
};

/// Isotropic elasticity matrix in Voigt order.
Matrix6d elasticity_matrix(const ElasticMaterial& mat);

/// Shear modulus E / (2 (1 + nu)).
inline double shear_modulus(const ElasticMaterial& mat) {
    return mat.youngs_modulus / (2.0 * (1.0 + mat.poisson_ratio));
}

using SurfaceCoords = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::ColMajor, kMaxSurfaceNodes, 3>;

/// One surface element in scaling-center-relative coordinates.
struct SurfaceGeometry {
    SurfaceKind kind = SurfaceKind::Q4;
    SurfaceCoords rel_coords;  ///< node_count(kind) rows
};

/// Surface `s` of a localized element.
SurfaceGeometry surface_geometry(const LocalElement& elem, int s);

struct BoundaryJacobian {
    Eigen::Matrix3d jb;  ///< rows: position, d/deta, d/dzeta
    double det = 0.0;
};

/// Jacobian on the boundary (xi = 1) at (eta, zeta). The determinant is the
/// triple product x . (x_eta x x_zeta), i.e. three times the volume density
/// of the sector spanned from the scaling center.
BoundaryJacobian boundary_jacobian(const SurfaceGeometry& geom, double eta, double zeta);

/// Same, throwing ElementError when det <= 0 (scaling center not visible).
BoundaryJacobian checked_boundary_jacobian(const SurfaceGeometry& geom, double eta, double zeta,
                                           int element = -1, int surface = -1, int point = -1);

struct StrainOperators {
    Matrix63d b1, b2, b3;
};

/// Voigt strain operators built from the columns of Jb^{-1}: b_k applied to a
/// derivative vector places column k of Jb^{-1} in the normal and shear rows.
StrainOperators b_matrices(const Eigen::Matrix3d& jb_inv);

/// Voigt strain-operator matrix for a gradient direction c, the building block
/// of b_matrices: eps = voigt_operator(c) * a for a displacement gradient c a^T.
Matrix63d voigt_operator(const Eigen::Vector3d& c);

/// Coefficient matrices of the scaled boundary equation. For a surface the
/// size is 3 * node_count; for an element 3 * element node count.
struct CoefficientMatrices {
    Eigen::MatrixXd e0, e1, e2, m0;
};

CoefficientMatrices surface_coefficients(const SurfaceGeometry& geom, const ElasticMaterial& mat);

/// Scatter-add of all surface coefficient matrices by local node id.
CoefficientMatrices element_coefficients(const LocalElement& elem, const ElasticMaterial& mat);

/// 2n x 2n Hamiltonian coefficient matrix
///   [ -E0^-1 E1^T + I/2        E0^-1          ]
///   [ E2 - E1 E0^-1 E1^T       E1 E0^-1 - I/2 ]
/// Throws ElementError when E0 cannot be factorized.
Eigen::MatrixXd hamiltonian(const CoefficientMatrices& cm);

struct RadialModes {
    Eigen::MatrixXcd phi_u1;       ///< n x n displacement modes
    Eigen::MatrixXcd phi_q1;       ///< n x n force modes
    Eigen::VectorXcd lambda_plus;  ///< n eigenvalues with positive real part
    Eigen::VectorXcd spectrum;     ///< all 2n eigenvalues, descending real part
};

/// Eigen-decomposition of Zp, sorted by descending real part (stable); the
/// first n eigenpairs are kept. Throws ElementError on non-convergence or
/// when the split between the n-th and (n+1)-th real parts is ambiguous.
RadialModes solve_modes(const Eigen::MatrixXd& zp);

/// Imaginary residue ||Im A||_inf / ||Re A||_inf accepted when taking the
/// real part of complex intermediates.
inline constexpr double kImaginaryResidueTol = 1e-8;

/// Phi_u1 condition number above which the element is rejected as defective.
inline constexpr double kMaxModeCondition = 1e12;

/// K = Phi_q1 Phi_u1^{-1}, real part after a residue check, symmetrized.
Eigen::MatrixXd stiffness(const Eigen::MatrixXcd& phi_q1, const Eigen::MatrixXcd& phi_u1);

/// M = Phi_u1^{-T} m Phi_u1^{-1} with m_ij = m0_ij / (lambda_i + lambda_j + 2)
/// and m0 = Phi_u1^T M0 Phi_u1; real part after a residue check, symmetrized.
Eigen::MatrixXd mass(const Eigen::MatrixXcd& phi_u1, const Eigen::VectorXcd& lambda_plus,
                     const Eigen::MatrixXd& m0);

/// C = alpha M + beta K. Works for dense and sparse operands.
template <typename StiffnessMatrix, typename MassMatrix>
StiffnessMatrix rayleigh_damping(const StiffnessMatrix& k, const MassMatrix& m, double alpha,
                                 double beta) {
    StiffnessMatrix c = alpha * m + beta * k;
    return c;
}

/// Everything kept per formed element.
struct ElementSolution {
    RadialModes modes;
    Eigen::MatrixXd k;
    Eigen::MatrixXd m;
    Eigen::PartialPivLU<Eigen::MatrixXcd> phi_u1_lu;
    double mode_condition = 0.0;  ///< estimated condition number of Phi_u1
};

/// Full pipeline: coefficients -> Zp -> modes -> K, M. ElementError carries
/// the mesh element id of `elem`.
ElementSolution form_element(const LocalElement& elem, const ElasticMaterial& mat);

struct FieldSample {
    Eigen::Vector3d displacement;
    Vector6d stress;
};

/// Radial displacement u(xi) and its derivative du/dxi at all element DOFs.
struct RadialField {
    double xi = 1.0;
    Eigen::VectorXd u, du;
};

/// Radial solution for boundary displacements d, C1 = Phi_u1^{-1} d.
/// Requires 0 < xi <= 1.
RadialField radial_field(const LocalElement& elem, const ElementSolution& sol,
                         const Eigen::VectorXd& d, double xi);

/// Displacement and stress at (eta, zeta) of local surface `surface` on the
/// scaled surface xi = radial.xi.
FieldSample surface_field(const LocalElement& elem, const ElasticMaterial& mat,
                          const RadialField& radial, double eta, double zeta, int surface);

/// Displacement and stress at scaled-boundary point (xi, eta, zeta) of
/// surface `surface` (local index), given boundary displacements d.
/// Requires 0 < xi <= 1.
FieldSample recover_field(const LocalElement& elem, const ElementSolution& sol,
                          const ElasticMaterial& mat, const Eigen::VectorXd& d, double xi,
                          double eta, double zeta, int surface);

}  // namespace sbfem
