#pragma once

#include "sbfem/element.hpp"
#include "sbfem/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sbfem {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Global DOF id: 3 * node + direction (0 = x, 1 = y, 2 = z).
constexpr int global_dof(int node, int dir) noexcept { return 3 * node + dir; }

struct DirichletBC {
    int node = 0;
    int dir = 0;
    double value = 0.0;  ///< m
};

struct PointLoad {
    int node = 0;
    int dir = 0;
    double value = 0.0;  ///< N
};

/// Constant traction over one mesh surface.
struct SurfaceTraction {
    int surface = 0;
    Eigen::Vector3d traction = Eigen::Vector3d::Zero();  ///< Pa
};

/// Maps (node, direction) to a free equation index or to a prescribed value.
class DofMap {
public:
    DofMap() = default;
    DofMap(int num_nodes, std::span<const DirichletBC> constraints);

    int num_total() const noexcept { return static_cast<int>(equation_.size()); }
    int num_free() const noexcept { return num_free_; }
    int num_constrained() const noexcept { return num_total() - num_free_; }

    /// Free equation index of a global DOF, or -1 when constrained.
    int equation(int dof) const { return equation_[dof]; }
    bool is_constrained(int dof) const { return equation_[dof] < 0; }
    double prescribed(int dof) const { return prescribed_[dof]; }

    /// Global DOF of free equation i.
    int free_dof(int i) const { return free_dofs_[i]; }
    const std::vector<int>& constrained_dofs() const noexcept { return constrained_dofs_; }

    /// Prescribed values of the constrained DOFs, in constrained_dofs() order.
    Eigen::VectorXd prescribed_vector() const;

    Eigen::VectorXd restrict_free(const Eigen::VectorXd& full) const;
    /// Full vector from free values plus prescribed values.
    Eigen::VectorXd expand(const Eigen::VectorXd& free) const;

private:
    std::vector<int> equation_;
    std::vector<double> prescribed_;
    std::vector<int> free_dofs_;
    std::vector<int> constrained_dofs_;
    int num_free_ = 0;
};

/// Load amplitude a(t) multiplying every point load and traction.
struct Amplitude {
    enum class Kind { Constant, Sine, Tabular };
    Kind kind = Kind::Constant;
    double scale = 1.0;      ///< Constant value or sine amplitude
    double frequency = 0.0;  ///< Hz, sine only: scale * sin(2 pi f t)
    std::vector<std::pair<double, double>> table;  ///< (t, a), piecewise linear, held constant outside

    double operator()(double t) const;
};

struct StaticStep {};
struct ModalStep {
    int n_modes = 10;
};
struct TransientStep {
    double dt_max = 0.01;     ///< s; also the fixed step size
    double t_end = 1.0;       ///< s
    double hht_alpha = -0.05;  ///< in [-1/3, 0]
};
using Step = std::variant<StaticStep, ModalStep, TransientStep>;

struct Monitor {
    int node = 0;
    int dir = 0;
};

struct AnalysisJob {
    std::shared_ptr<const PolyMesh> mesh;
    std::vector<ElasticMaterial> materials;
    std::vector<int> element_material;  ///< per element, index into materials
    std::vector<DirichletBC> dirichlet;
    std::vector<PointLoad> point_loads;
    std::vector<SurfaceTraction> tractions;
    Step step = StaticStep{};
    double rayleigh_alpha = 0.0;  ///< 1/s
    double rayleigh_beta = 0.0;   ///< s
    Amplitude amplitude;
    std::vector<Monitor> monitors;
    int threads = 1;

    /// Throws Error when ids are out of range or step parameters invalid.
    void check() const;
};

/// Element localized and formed. Elements with identical local geometry,
/// topology and material share one solution.
struct FormedElement {
    LocalElement local;
    std::shared_ptr<const ElementSolution> solution;
    int material = 0;
};

struct FormedMesh {
    std::vector<FormedElement> elements;
    int unique_solutions = 0;
};

/// Forms every element, fanning out over `threads` workers. Results do not
/// depend on the thread count. Throws ElementError for the lowest failing
/// element id.
FormedMesh form_elements(const PolyMesh& mesh, std::span<const ElasticMaterial> materials,
                         std::span<const int> element_material, int threads = 1);

/// Consistent nodal forces of a constant traction over one surface, using
/// the surface-area Jacobian. Returns (node, force) pairs.
std::vector<std::pair<int, Eigen::Vector3d>> consistent_traction(const PolyMesh& mesh, int surface,
                                                                 const Eigen::Vector3d& traction);

struct GlobalSystem {
    SparseMatrix k;     ///< 3N x 3N
    SparseMatrix m;
    SparseMatrix c;     ///< Rayleigh damping
    Eigen::VectorXd f;  ///< reference load (amplitude 1)
};

/// Scatter-add of the formed element matrices and the load vector.
GlobalSystem assemble(const AnalysisJob& job, const FormedMesh& formed);

/// Free-free and free-constrained blocks of a global matrix.
std::pair<SparseMatrix, SparseMatrix> partition(const SparseMatrix& a, const DofMap& dofs);

}  // namespace sbfem
