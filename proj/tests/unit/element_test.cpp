#include "sbfem/element.hpp"
#include "sbfem/error.hpp"

#include "support/generators.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include <numeric>

namespace sbfem {
namespace {

const ElasticMaterial kSteelLike{210e9, 0.3, 7800.0};

double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

Eigen::VectorXd translation(int nodes, const Eigen::Vector3d& t) {
    Eigen::VectorXd u(3 * nodes);
    for (int i = 0; i < nodes; ++i) u.segment<3>(3 * i) = t;
    return u;
}

Eigen::VectorXd linear_field(const LocalElement& elem, const Eigen::Matrix3d& g) {
    Eigen::VectorXd u(elem.num_dofs());
    for (int i = 0; i < elem.num_nodes(); ++i) u.segment<3>(3 * i) = g * elem.rel_coords.row(i).transpose();
    return u;
}

Vector6d voigt_strain(const Eigen::Matrix3d& grad) {
    Vector6d e;
    e << grad(0, 0), grad(1, 1), grad(2, 2), grad(1, 2) + grad(2, 1), grad(0, 2) + grad(2, 0),
        grad(0, 1) + grad(1, 0);
    return e;
}

LocalElement unit_cube() { return localize(make_box_mesh(1, 1, 1, 1, 1, 1), 0); }

TEST(Material, ElasticityMatrixAndChecks) {
    const Matrix6d d = elasticity_matrix({1.0, 0.25, 0.0});
    const double lambda = 0.25 / (1.25 * 0.5), mu = 1.0 / 2.5;
    EXPECT_NEAR(d(0, 0), lambda + 2 * mu, 1e-15);
    EXPECT_NEAR(d(0, 1), lambda, 1e-15);
    EXPECT_NEAR(d(3, 3), mu, 1e-15);
    EXPECT_NEAR(d(5, 5), mu, 1e-15);
    EXPECT_NEAR(shear_modulus({10e9, 0.25, 0}), 4e9, 1e-3);
    EXPECT_THROW((ElasticMaterial{-1, 0.25, 0}).check(), std::invalid_argument);
    EXPECT_THROW((ElasticMaterial{1, 0.5, 0}).check(), std::invalid_argument);
    EXPECT_THROW((ElasticMaterial{1, 0.2, -1}).check(), std::invalid_argument);
    EXPECT_NO_THROW((ElasticMaterial{1, -0.9, 0}).check());
}

TEST(StrainOperators, RandomGradientIdentity) {
    testing::Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::Matrix3d jb = testing::random_affine(rng);
        const Eigen::Vector3d g(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1));
        const Eigen::Vector3d a(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1));
        // u(x) = a (g . x): derivatives along the scaled-boundary directions are (Jb g)_k a.
        const StrainOperators b = b_matrices(jb.inverse());
        const Eigen::Vector3d dk = jb * g;
        const Vector6d eps = b.b1 * (dk(0) * a) + b.b2 * (dk(1) * a) + b.b3 * (dk(2) * a);
        EXPECT_LT((eps - voigt_strain(a * g.transpose())).norm(), 1e-12);
        EXPECT_LT((voigt_operator(g) * a - voigt_strain(a * g.transpose())).norm(), 1e-14);
    }
}

TEST(BoundaryJacobian, CubeFaceDeterminant) {
    const LocalElement cube = unit_cube();
    double total = 0;
    for (std::size_t s = 0; s < cube.surfaces.size(); ++s) {
        const SurfaceGeometry geom = surface_geometry(cube, static_cast<int>(s));
        const BoundaryJacobian j = boundary_jacobian(geom, 0.3, -0.4);
        EXPECT_NEAR(j.det, 0.5 * 0.25, 1e-15);
        EXPECT_NEAR(j.jb.determinant(), j.det, 1e-15);
        total += j.det * 4 / 3;
    }
    EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(BoundaryJacobian, InvisibleSurfaceThrows) {
    PolyMesh mesh = make_box_mesh(1, 1, 1, 1, 1, 1);
    mesh.set_scaling_center(0, Eigen::Vector3d(2.0, 0.5, 0.5));
    const LocalElement elem = localize(mesh, 0);
    EXPECT_THROW(form_element(elem, kSteelLike), ElementError);
}

// Planar parallelogram face: the first column of Jb^{-1} is n / h with
// n the unit outward normal and h the distance from the center, and
// det Jb = h * area / 4 is constant. E0 then factors into the Q4
// consistent-mass pattern times B1^T D B1.
TEST(Coefficients, E0OfCubeFaceMatchesClosedForm) {
    const LocalElement cube = unit_cube();
    const ElasticMaterial mat{1.0, 0.0, 1.0};
    const Matrix6d d = elasticity_matrix(mat);
    for (std::size_t s = 0; s < cube.surfaces.size(); ++s) {
        const SurfaceGeometry geom = surface_geometry(cube, static_cast<int>(s));
        const Eigen::Vector3d x0 = geom.rel_coords.row(0), x1 = geom.rel_coords.row(1), x3 = geom.rel_coords.row(3);
        const Eigen::Vector3d n = (x1 - x0).cross(x3 - x0).normalized();
        const double h = n.dot(x0);
        ASSERT_GT(h, 0);
        Matrix63d b1 = Matrix63d::Zero();
        const Eigen::Vector3d c = n / h;
        b1(0, 0) = c(0), b1(1, 1) = c(1), b1(2, 2) = c(2);
        b1(3, 1) = c(2), b1(3, 2) = c(1);
        b1(4, 0) = c(2), b1(4, 2) = c(0);
        b1(5, 0) = c(1), b1(5, 1) = c(0);
        const Eigen::Matrix3d core = b1.transpose() * d * b1;
        const double det = h * 1.0 / 4.0;
        Eigen::Matrix4d mq;
        mq << 4, 2, 1, 2, 2, 4, 2, 1, 1, 2, 4, 2, 2, 1, 2, 4;
        mq /= 9.0;
        Eigen::MatrixXd expected(12, 12);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) expected.block<3, 3>(3 * i, 3 * j) = mq(i, j) * det * core;
        const CoefficientMatrices cm = surface_coefficients(geom, mat);
        EXPECT_LT((cm.e0 - expected).cwiseAbs().maxCoeff(), 1e-14) << "surface " << s;
        EXPECT_LT((cm.e0 - cm.e0.transpose()).norm(), 1e-14);
        EXPECT_LT((cm.e2 - cm.e2.transpose()).norm(), 1e-14);
    }
}

TEST(Coefficients, PermuteWithNodeOrder) {
    testing::Rng rng(32);
    const PolyMesh mesh = testing::random_star_polyhedron(rng, 0);
    std::vector<int> order = mesh.element_nodes(0);
    const LocalElement a = localize(mesh, 0, order);
    std::shuffle(order.begin(), order.end(), rng);
    const LocalElement b = localize(mesh, 0, order);
    const CoefficientMatrices ca = element_coefficients(a, kSteelLike), cb = element_coefficients(b, kSteelLike);
    Eigen::VectorXi perm(a.num_dofs());  // dof of b -> dof of a
    for (int i = 0; i < b.num_nodes(); ++i)
        for (int k = 0; k < 3; ++k) perm(3 * i + k) = 3 * a.global_to_local.at(b.local_to_global[i]) + k;
    auto permuted = [&](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd out(m.rows(), m.cols());
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) out(i, j) = m(perm(i), perm(j));
        return out;
    };
    EXPECT_LT(rel_diff(cb.e0, permuted(ca.e0)), 1e-14);
    EXPECT_LT(rel_diff(cb.e1, permuted(ca.e1)), 1e-14);
    EXPECT_LT(rel_diff(cb.e2, permuted(ca.e2)), 1e-14);
    EXPECT_LT(rel_diff(cb.m0, permuted(ca.m0)), 1e-14);
    const ElementSolution sa = form_element(a, kSteelLike), sb = form_element(b, kSteelLike);
    EXPECT_LT(rel_diff(sb.k, permuted(sa.k)), 1e-9);
    EXPECT_LT(rel_diff(sb.m, permuted(sa.m)), 1e-9);
}

TEST(Hamiltonian, SpectrumPairingAndRigidModes) {
    testing::Rng rng(33);
    for (int family = 0; family < 5; ++family) {
        const LocalElement elem = localize(testing::random_star_polyhedron(rng, family), 0);
        CoefficientMatrices cm = element_coefficients(elem, {1.0, 0.3, 1.0});
        const Eigen::MatrixXd zp = hamiltonian(cm);
        EXPECT_NEAR(zp.trace(), 0.0, 1e-9 * zp.norm()) << testing::family_name(family);
        const RadialModes modes = solve_modes(zp);
        const Eigen::Index n = elem.num_dofs();
        ASSERT_EQ(modes.spectrum.size(), 2 * n);
        for (Eigen::Index i = 0; i < n; ++i) {
            EXPECT_NEAR(modes.spectrum(i).real(), -modes.spectrum(2 * n - 1 - i).real(), 1e-6 * (1 + std::abs(modes.spectrum(i))));
            EXPECT_GT(modes.lambda_plus(i).real(), 0.0);
        }
        int translations = 0, linear = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(modes.lambda_plus(i) - 0.5) < 1e-7) ++translations;
            if (std::abs(modes.lambda_plus(i) - 1.5) < 1e-6) ++linear;
        }
        EXPECT_EQ(translations, 3) << testing::family_name(family);
        EXPECT_GE(linear, 9) << testing::family_name(family);
    }
}

TEST(Stiffness, RigidBodyModesAreInNullSpace) {
    testing::Rng rng(34);
    for (int trial = 0; trial < 15; ++trial) {
        const LocalElement elem = localize(testing::random_star_polyhedron(rng, trial % 5), 0);
        const ElementSolution sol = form_element(elem, kSteelLike);
        const double scale = sol.k.norm();
        EXPECT_LT((sol.k - sol.k.transpose()).norm(), 1e-12 * scale);
        for (int a = 0; a < 3; ++a) {
            const Eigen::VectorXd t = translation(elem.num_nodes(), Eigen::Vector3d::Unit(a));
            EXPECT_LT((sol.k * t).norm(), 1e-9 * scale * t.norm()) << testing::family_name(trial % 5);
            Eigen::Matrix3d w = Eigen::Matrix3d::Zero();
            w((a + 1) % 3, (a + 2) % 3) = 1;
            w((a + 2) % 3, (a + 1) % 3) = -1;
            const Eigen::VectorXd r = linear_field(elem, w);
            EXPECT_LT((sol.k * r).norm(), 1e-9 * scale * r.norm()) << testing::family_name(trial % 5);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sol.k);
        EXPECT_GT(eig.eigenvalues()(6), 1e-8 * eig.eigenvalues().maxCoeff());
    }
}

TEST(Stiffness, ScalesLinearlyWithSizeAndModulus) {
    testing::Rng rng(35);
    for (int family = 0; family < 5; ++family) {
        PolyMesh mesh = testing::random_star_polyhedron(rng, family);
        const ElementSolution a = form_element(localize(mesh, 0), kSteelLike);
        const double s = 2.5;
        PolyMesh scaled(mesh.node_coords() * s, mesh.surf_conn(), mesh.surf_index(), mesh.elem_conn(),
                        mesh.elem_index(), mesh.scaling_centers() * s);
        ElasticMaterial stiff = kSteelLike;
        stiff.youngs_modulus *= 3;
        stiff.density *= 2;
        const ElementSolution b = form_element(localize(scaled, 0), stiff);
        EXPECT_LT(rel_diff(b.k, 3 * s * a.k), 1e-9) << testing::family_name(family);
        EXPECT_LT(rel_diff(b.m, 2 * s * s * s * a.m), 1e-9) << testing::family_name(family);
    }
}

TEST(Mass, GrandSumEqualsTotalMass) {
    testing::Rng rng(36);
    for (int trial = 0; trial < 15; ++trial) {
        const PolyMesh mesh = testing::random_star_polyhedron(rng, trial % 5);
        const LocalElement elem = localize(mesh, 0);
        const ElementSolution sol = form_element(elem, kSteelLike);
        const double expected = kSteelLike.density * element_volume(mesh, 0);
        for (int a = 0; a < 3; ++a) {
            const Eigen::VectorXd t = translation(elem.num_nodes(), Eigen::Vector3d::Unit(a));
            EXPECT_NEAR(t.dot(sol.m * t), expected, 1e-9 * expected) << testing::family_name(trial % 5);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sol.m);
        EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Mass, UnitCubeGrandSum) {
    const ElementSolution sol = form_element(unit_cube(), {1e6, 0.25, 2000});
    EXPECT_NEAR(sol.m.sum(), 3 * 2000.0, 1e-8);
}

TEST(Recovery, TranslationAndLinearFieldsAreReproduced) {
    testing::Rng rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        const LocalElement elem = localize(testing::random_star_polyhedron(rng, trial % 5), 0);
        const ElementSolution sol = form_element(elem, kSteelLike);
        const Eigen::Vector3d t(0.1, -0.2, 0.3);
        Eigen::Matrix3d g;
        for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = testing::uniform(rng, -1e-3, 1e-3);
        const Eigen::VectorXd d = translation(elem.num_nodes(), t) + linear_field(elem, g);
        const Vector6d sigma = elasticity_matrix(kSteelLike) * voigt_strain(g);
        for (double xi : {1.0, 0.6, 0.05}) {
            const int s = trial % static_cast<int>(elem.surfaces.size());
            const double eta = 0.2, zeta = 0.1;
            const FieldSample f = recover_field(elem, sol, kSteelLike, d, xi, eta, zeta, s);
            const SurfaceGeometry geom = surface_geometry(elem, s);
            const Eigen::Vector3d xhat = (shape_values(geom.kind, eta, zeta).transpose() * geom.rel_coords).transpose();
            const Eigen::Vector3d expected = t + g * (xi * xhat);
            EXPECT_LT((f.displacement - expected).norm(), 1e-9 * expected.norm()) << "xi " << xi;
            EXPECT_LT((f.stress - sigma).norm(), 1e-6 * sigma.norm()) << "xi " << xi;
        }
    }
}

PolyMesh affine_image(const PolyMesh& mesh, const Eigen::Matrix3d& a) {
    const Eigen::MatrixX3d nodes = mesh.node_coords() * a.transpose();
    const Eigen::MatrixX3d centers = mesh.scaling_centers() * a.transpose();
    return PolyMesh(nodes, mesh.surf_conn(), mesh.surf_index(), mesh.elem_conn(), mesh.elem_index(), centers);
}

TEST(Oracle, AgreesWithRadialCollocationOnPlanarFaces) {
    testing::Rng rng(38);
    const ElasticMaterial mat{1.0, 0.25, 1.0};
    auto check = [&](const LocalElement& elem, const std::string& label, int face_order) {
        const ElementSolution sol = form_element(elem, mat);
        const testing::ElementReference ref = testing::radial_collocation_reference(elem, mat, 60, face_order);
        EXPECT_LT(rel_diff(sol.k, ref.k), 1e-9) << label;
        EXPECT_LT(rel_diff(sol.m, ref.m), 1e-9) << label;
    };
    check(unit_cube(), "unit cube", 12);
    check(localize(read_mesh_file(std::string(SBFEM_FIXTURE_DIR) + "/tetrahedron.txt"), 0), "tetrahedron", 12);
    check(localize(testing::random_star_polyhedron(rng, 1), 0), "perturbed octahedron", 12);
    for (int trial = 0; trial < 3; ++trial) {
        PolyMesh box = affine_image(make_box_mesh(1, 1, 1, 1, 1, 1), testing::random_affine(rng));
        check(localize(box, 0), "parallelepiped", 12);
    }
}

// Warped bilinear faces give rational surface integrands; with the same
// 2x2 face rule the comparison isolates the radial solution.
TEST(Oracle, AgreesWithRadialCollocationOnWarpedFaces) {
    testing::Rng rng(39);
    const ElasticMaterial mat{1.0, 0.25, 1.0};
    for (int family : {0, 2}) {
        const LocalElement elem = localize(testing::random_star_polyhedron(rng, family), 0);
        const ElementSolution sol = form_element(elem, mat);
        const testing::ElementReference ref = testing::radial_collocation_reference(elem, mat, 60, 2);
        EXPECT_LT(rel_diff(sol.k, ref.k), 1e-7) << testing::family_name(family);
        EXPECT_LT(rel_diff(sol.m, ref.m), 1e-7) << testing::family_name(family);
    }
}

TEST(Damping, RayleighCombination) {
    const ElementSolution sol = form_element(unit_cube(), {1e6, 0.25, 2000});
    EXPECT_EQ(rayleigh_damping(sol.k, sol.m, 0.0, 0.0), Eigen::MatrixXd::Zero(24, 24));
    EXPECT_LT(rel_diff(rayleigh_damping(sol.k, sol.m, 0.5, 0.0), 0.5 * sol.m), 1e-15);
    EXPECT_LT(rel_diff(rayleigh_damping(sol.k, sol.m, 0.0, 0.01), 0.01 * sol.k), 1e-15);
    const Eigen::SparseMatrix<double> ks = sol.k.sparseView(), ms = sol.m.sparseView();
    const Eigen::MatrixXd c = Eigen::MatrixXd(rayleigh_damping(ks, ms, 0.2, 0.003));
    EXPECT_LT(rel_diff(c, 0.2 * sol.m + 0.003 * sol.k), 1e-14);
}

}  // namespace
}  // namespace sbfem
