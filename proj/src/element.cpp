#include "sbfem/element.hpp"

#include "sbfem/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace sbfem {

void ElasticMaterial::check() const {
    if (!(youngs_modulus > 0.0)) throw std::invalid_argument("Young's modulus must be positive");
    if (!(density >= 0.0)) throw std::invalid_argument("density must be non-negative");
    if (!(poisson_ratio > -1.0 && poisson_ratio < 0.5))
        throw std::invalid_argument("Poisson's ratio must lie in (-1, 0.5)");
}

Matrix6d elasticity_matrix(const ElasticMaterial& mat) {
    mat.check();
    const double nu = mat.poisson_ratio;
    const double c = mat.youngs_modulus / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Matrix6d d = Matrix6d::Zero();
    d.topLeftCorner<3, 3>().setConstant(nu);
    d.topLeftCorner<3, 3>().diagonal().setConstant(1.0 - nu);
    d.bottomRightCorner<3, 3>().diagonal().setConstant(0.5 * (1.0 - 2.0 * nu));
    return c * d;
}

SurfaceGeometry surface_geometry(const LocalElement& elem, int s) {
    const LocalSurface& surf = elem.surfaces[s];
    SurfaceGeometry g;
    g.kind = surf.kind;
    g.rel_coords.resize(static_cast<Eigen::Index>(surf.nodes.size()), 3);
    for (std::size_t i = 0; i < surf.nodes.size(); ++i)
        g.rel_coords.row(static_cast<Eigen::Index>(i)) = elem.rel_coords.row(surf.nodes[i]);
    return g;
}

BoundaryJacobian boundary_jacobian(const SurfaceGeometry& geom, double eta, double zeta) {
    const auto n = shape_values(geom.kind, eta, zeta);
    const auto dn = shape_derivs(geom.kind, eta, zeta);
    BoundaryJacobian j;
    j.jb.row(0) = n.transpose() * geom.rel_coords;
    j.jb.row(1) = dn.d_eta.transpose() * geom.rel_coords;
    j.jb.row(2) = dn.d_zeta.transpose() * geom.rel_coords;
    const Eigen::Vector3d x = j.jb.row(0), xe = j.jb.row(1), xz = j.jb.row(2);
    j.det = x.dot(xe.cross(xz));
    return j;
}

BoundaryJacobian checked_boundary_jacobian(const SurfaceGeometry& geom, double eta, double zeta,
                                           int element, int surface, int point) {
    BoundaryJacobian j = boundary_jacobian(geom, eta, zeta);
    if (!(j.det > 0.0)) {
        std::string where = "|Jb| = " + std::to_string(j.det) + " <= 0";
        if (surface >= 0) where += " on local surface " + std::to_string(surface + 1);
        if (point >= 0) where += " at quadrature point " + std::to_string(point + 1);
        throw ElementError(element, where + " (surface orientation or star-convexity violated)");
    }
    return j;
}

Matrix63d voigt_operator(const Eigen::Vector3d& c) {
    Matrix63d b = Matrix63d::Zero();
    b(0, 0) = c.x();
    b(1, 1) = c.y();
    b(2, 2) = c.z();
    b(3, 1) = c.z();
    b(3, 2) = c.y();
    b(4, 0) = c.z();
    b(4, 2) = c.x();
    b(5, 0) = c.y();
    b(5, 1) = c.x();
    return b;
}

StrainOperators b_matrices(const Eigen::Matrix3d& jb_inv) {
    return {voigt_operator(jb_inv.col(0)), voigt_operator(jb_inv.col(1)), voigt_operator(jb_inv.col(2))};
}

namespace {

using Matrix6Xd = Eigen::Matrix<double, 6, Eigen::Dynamic>;

struct SurfaceStrain {
    Matrix6Xd b1, b2;
    double det;
};

// B1 = b1 Nu and B2 = b2 Nu,eta + b3 Nu,zeta at one point of a surface.
SurfaceStrain surface_strain(const SurfaceGeometry& geom, double eta, double zeta, const BoundaryJacobian& j) {
    const int nn = node_count(geom.kind);
    const auto n = shape_values(geom.kind, eta, zeta);
    const auto dn = shape_derivs(geom.kind, eta, zeta);
    const StrainOperators b = b_matrices(j.jb.inverse());
    SurfaceStrain out{Matrix6Xd(6, 3 * nn), Matrix6Xd(6, 3 * nn), j.det};
    for (int i = 0; i < nn; ++i) {
        out.b1.middleCols<3>(3 * i) = b.b1 * n(i);
        out.b2.middleCols<3>(3 * i) = b.b2 * dn.d_eta(i) + b.b3 * dn.d_zeta(i);
    }
    return out;
}

}  // namespace

CoefficientMatrices surface_coefficients(const SurfaceGeometry& geom, const ElasticMaterial& mat) {
    const Matrix6d d = elasticity_matrix(mat);
    const int nn = node_count(geom.kind);
    const int n = 3 * nn;
    CoefficientMatrices cm{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                           Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    const auto& rule = gauss_rule(geom.kind);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
        const auto& qp = rule.points[q];
        const BoundaryJacobian j =
            checked_boundary_jacobian(geom, qp.eta, qp.zeta, -1, -1, static_cast<int>(q));
        const SurfaceStrain s = surface_strain(geom, qp.eta, qp.zeta, j);
        const double w = qp.weight * j.det;
        const Matrix6Xd db1 = d * s.b1;
        cm.e0.noalias() += w * s.b1.transpose() * db1;
        cm.e1.noalias() += w * s.b2.transpose() * db1;
        cm.e2.noalias() += w * s.b2.transpose() * (d * s.b2);

        const auto shape = shape_values(geom.kind, qp.eta, qp.zeta);
        for (int a = 0; a < nn; ++a)
            for (int b = 0; b < nn; ++b) {
                const double v = w * mat.density * shape(a) * shape(b);
                for (int k = 0; k < 3; ++k) cm.m0(3 * a + k, 3 * b + k) += v;
            }
    }
    return cm;
}

CoefficientMatrices element_coefficients(const LocalElement& elem, const ElasticMaterial& mat) {
    const int n = elem.num_dofs();
    CoefficientMatrices cm{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n),
                           Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (int s = 0; s < static_cast<int>(elem.surfaces.size()); ++s) {
        CoefficientMatrices se;
        try {
            se = surface_coefficients(surface_geometry(elem, s), mat);
        } catch (const ElementError& err) {
            throw ElementError(elem.mesh_element,
                               std::string(err.what()) + " on local surface " + std::to_string(s + 1));
        }
        const auto& nodes = elem.surfaces[s].nodes;
        const int nn = static_cast<int>(nodes.size());
        for (int a = 0; a < nn; ++a)
            for (int b = 0; b < nn; ++b) {
                const int ra = 3 * nodes[a], cb = 3 * nodes[b];
                cm.e0.block<3, 3>(ra, cb) += se.e0.block<3, 3>(3 * a, 3 * b);
                cm.e1.block<3, 3>(ra, cb) += se.e1.block<3, 3>(3 * a, 3 * b);
                cm.e2.block<3, 3>(ra, cb) += se.e2.block<3, 3>(3 * a, 3 * b);
                cm.m0.block<3, 3>(ra, cb) += se.m0.block<3, 3>(3 * a, 3 * b);
            }
    }
    return cm;
}

Eigen::MatrixXd hamiltonian(const CoefficientMatrices& cm) {
    const Eigen::Index n = cm.e0.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(cm.e0);
    if (llt.info() != Eigen::Success)
        throw ElementError(-1, "E0 is not positive definite; element is degenerate");
    const Eigen::MatrixXd e0inv_e1t = llt.solve(cm.e1.transpose());
    Eigen::MatrixXd e0inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    e0inv = 0.5 * (e0inv + e0inv.transpose()).eval();
    Eigen::MatrixXd z21 = cm.e2 - cm.e1 * e0inv_e1t;
    z21 = 0.5 * (z21 + z21.transpose()).eval();

    Eigen::MatrixXd zp(2 * n, 2 * n);
    zp.topLeftCorner(n, n) = -e0inv_e1t;
    zp.topLeftCorner(n, n).diagonal().array() += 0.5;
    zp.topRightCorner(n, n) = e0inv;
    zp.bottomLeftCorner(n, n) = z21;
    zp.bottomRightCorner(n, n) = -zp.topLeftCorner(n, n).transpose();
    return zp;
}

RadialModes solve_modes(const Eigen::MatrixXd& zp) {
    const Eigen::Index n2 = zp.rows();
    if (zp.cols() != n2 || n2 % 2 != 0) throw std::invalid_argument("Zp must be square of even size");
    const Eigen::Index n = n2 / 2;

    Eigen::EigenSolver<Eigen::MatrixXd> es(zp, true);
    if (es.info() != Eigen::Success) throw ElementError(-1, "eigensolver did not converge on Zp");
    const Eigen::VectorXcd values = es.eigenvalues();
    const Eigen::MatrixXcd vectors = es.eigenvectors();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n2));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a).real() > values(b).real(); });

    RadialModes modes;
    modes.spectrum.resize(n2);
    for (Eigen::Index i = 0; i < n2; ++i) modes.spectrum(i) = values(order[i]);

    const double split = modes.spectrum(n - 1).real() - modes.spectrum(n).real();
    const double scale = std::max(1.0, modes.spectrum.cwiseAbs().maxCoeff());
    if (split < 1e-8 * scale || modes.spectrum(n - 1).real() <= 0.0)
        throw ElementError(-1, "ill-posed partition of the Hamiltonian spectrum (Re lambda_n = " +
                                   std::to_string(modes.spectrum(n - 1).real()) + ", Re lambda_n+1 = " +
                                   std::to_string(modes.spectrum(n).real()) + ")");

    modes.phi_u1.resize(n, n);
    modes.phi_q1.resize(n, n);
    modes.lambda_plus = modes.spectrum.head(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        modes.phi_u1.col(j) = vectors.col(order[j]).head(n);
        modes.phi_q1.col(j) = vectors.col(order[j]).tail(n);
    }
    return modes;
}

namespace {

double inf_norm(const Eigen::MatrixXd& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

Eigen::MatrixXd real_symmetric_part(const Eigen::MatrixXcd& a, const char* what) {
    const Eigen::MatrixXd re = a.real();
    const double re_norm = inf_norm(re);
    const double im_norm = inf_norm(a.imag());
    if (im_norm > kImaginaryResidueTol * re_norm)
        throw ElementError(-1, std::string(what) + " has imaginary residue " +
                                   std::to_string(im_norm / re_norm) + " (defective eigen-solution)");
    return 0.5 * (re + re.transpose());
}

Eigen::MatrixXcd checked_inverse(const Eigen::MatrixXcd& phi_u1) {
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(phi_u1);
    const double rcond = lu.rcond();
    if (!(rcond * kMaxModeCondition > 1.0))
        throw ElementError(-1, "Phi_u1 is singular or ill-conditioned");
    return lu.inverse();
}

}  // namespace

Eigen::MatrixXd stiffness(const Eigen::MatrixXcd& phi_q1, const Eigen::MatrixXcd& phi_u1) {
    return real_symmetric_part(phi_q1 * checked_inverse(phi_u1), "stiffness matrix");
}

Eigen::MatrixXd mass(const Eigen::MatrixXcd& phi_u1, const Eigen::VectorXcd& lambda_plus,
                     const Eigen::MatrixXd& m0) {
    const Eigen::MatrixXcd inv = checked_inverse(phi_u1);
    Eigen::MatrixXcd m = phi_u1.transpose() * m0.cast<std::complex<double>>() * phi_u1;
    const Eigen::Index n = m.rows();
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) m(i, j) /= lambda_plus(i) + lambda_plus(j) + 2.0;
    const Eigen::MatrixXcd full = inv.transpose() * m * inv;
    if (m0.cwiseAbs().maxCoeff() == 0.0) return Eigen::MatrixXd::Zero(n, n);
    return real_symmetric_part(full, "mass matrix");
}

ElementSolution form_element(const LocalElement& elem, const ElasticMaterial& mat) {
    try {
        CoefficientMatrices cm = element_coefficients(elem, mat);

        // Solve with E-matrices normalized to O(1) so the Zp blocks are balanced;
        // eigenvalues are unchanged and Phi_q1 scales back linearly.
        const double scale = cm.e0.diagonal().mean();
        CoefficientMatrices unit{cm.e0 / scale, cm.e1 / scale, cm.e2 / scale, cm.m0};

        ElementSolution sol;
        sol.modes = solve_modes(hamiltonian(unit));
        sol.modes.phi_q1 *= scale;
        sol.phi_u1_lu.compute(sol.modes.phi_u1);
        const double rcond = sol.phi_u1_lu.rcond();
        sol.mode_condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
        if (!(sol.mode_condition <= kMaxModeCondition))
            throw ElementError(-1, "defective eigen-solution (cond(Phi_u1) = " +
                                       std::to_string(sol.mode_condition) +
                                       "); perturb the scaling center by about 1e-6 of the element size");
        sol.k = stiffness(sol.modes.phi_q1, sol.modes.phi_u1);
        sol.m = mass(sol.modes.phi_u1, sol.modes.lambda_plus, cm.m0);
        return sol;
    } catch (const ElementError& err) {
        if (err.element() >= 0 || elem.mesh_element < 0) throw;
        throw ElementError(elem.mesh_element, err.what());
    }
}

RadialField radial_field(const LocalElement& elem, const ElementSolution& sol,
                         const Eigen::VectorXd& d, double xi) {
    if (!(xi > 0.0 && xi <= 1.0)) throw std::domain_error("radial coordinate must lie in (0, 1]");
    if (d.size() != elem.num_dofs()) throw std::invalid_argument("displacement vector size mismatch");

    using cd = std::complex<double>;
    const Eigen::VectorXcd c1 = sol.phi_u1_lu.solve(d.cast<cd>());
    const Eigen::VectorXcd& lam = sol.modes.lambda_plus;
    Eigen::VectorXcd w_u(lam.size()), w_du(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const cd p = std::pow(cd(xi), lam(i) - 0.5);
        w_u(i) = p * c1(i);
        w_du(i) = (lam(i) - 0.5) * p / xi * c1(i);
    }
    const Eigen::VectorXcd u_c = sol.modes.phi_u1 * w_u;
    const Eigen::VectorXcd du_c = sol.modes.phi_u1 * w_du;

    const double ref = std::max({u_c.real().cwiseAbs().maxCoeff(), d.cwiseAbs().maxCoeff(),
                                 std::numeric_limits<double>::min()});
    if (u_c.imag().cwiseAbs().maxCoeff() > kImaginaryResidueTol * ref ||
        du_c.imag().cwiseAbs().maxCoeff() > kImaginaryResidueTol * ref / xi)
        throw ElementError(elem.mesh_element, "recovered field has imaginary residue above tolerance");
    return {xi, u_c.real(), du_c.real()};
}

FieldSample surface_field(const LocalElement& elem, const ElasticMaterial& mat,
                          const RadialField& radial, double eta, double zeta, int surface) {
    if (surface < 0 || surface >= static_cast<int>(elem.surfaces.size()))
        throw std::out_of_range("surface index out of range");
    const SurfaceGeometry geom = surface_geometry(elem, surface);
    const auto& nodes = elem.surfaces[surface].nodes;
    const int nn = static_cast<int>(nodes.size());
    Eigen::VectorXd us(3 * nn), dus(3 * nn);
    for (int a = 0; a < nn; ++a) {
        us.segment<3>(3 * a) = radial.u.segment<3>(3 * nodes[a]);
        dus.segment<3>(3 * a) = radial.du.segment<3>(3 * nodes[a]);
    }
    const BoundaryJacobian j = checked_boundary_jacobian(geom, eta, zeta, elem.mesh_element, surface);
    const SurfaceStrain s = surface_strain(geom, eta, zeta, j);
    const Vector6d strain = s.b1 * dus + (s.b2 * us) / radial.xi;

    FieldSample out;
    const auto n = shape_values(geom.kind, eta, zeta);
    out.displacement.setZero();
    for (int a = 0; a < nn; ++a) out.displacement += n(a) * us.segment<3>(3 * a);
    out.stress = elasticity_matrix(mat) * strain;
    return out;
}

FieldSample recover_field(const LocalElement& elem, const ElementSolution& sol,
                          const ElasticMaterial& mat, const Eigen::VectorXd& d, double xi,
                          double eta, double zeta, int surface) {
    if (surface < 0 || surface >= static_cast<int>(elem.surfaces.size()))
        throw std::out_of_range("surface index out of range");
    return surface_field(elem, mat, radial_field(elem, sol, d, xi), eta, zeta, surface);
}

}  // namespace sbfem
