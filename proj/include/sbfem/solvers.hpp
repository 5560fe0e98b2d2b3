#pragma once

#include "sbfem/assembly.hpp"

#include <Eigen/Core>

#include <memory>
#include <vector>

namespace sbfem {

/// Sparse factorization of a symmetric positive definite matrix. Uses a
/// supernodal Cholesky when built with CHOLMOD and falls back to a simplicial
/// LDL^T when that fails, which then reports singularity with an estimate of
/// the null-space dimension.
class SpdSolver {
public:
    /// Throws SolverError when the matrix is singular; `what` names the
    /// matrix in the message.
    explicit SpdSolver(const SparseMatrix& a, const char* what = "stiffness");
    ~SpdSolver();
    SpdSolver(SpdSolver&&) noexcept;
    SpdSolver& operator=(SpdSolver&&) noexcept;

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
    int size() const noexcept { return size_; }
    /// "cholmod-supernodal" or "eigen-simplicial".
    const char* backend() const noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int size_ = 0;
};

/// Everything a step needs besides the element matrices: assembled system,
/// DOF map and the blocks over free DOFs.
struct PreparedSystem {
    DofMap dofs;
    GlobalSystem global;
    SparseMatrix k_ff, k_fc, m_ff, c_ff;
    Eigen::VectorXd f_f;          ///< reference load on free DOFs
    Eigen::VectorXd u_c;          ///< prescribed values
    Eigen::VectorXd lift;         ///< -K_fc u_c, constant load from prescribed DOFs
};

PreparedSystem prepare_system(const AnalysisJob& job, const FormedMesh& formed);

struct StaticResult {
    Eigen::VectorXd displacement;  ///< 3N, node-major
    Eigen::VectorXd reaction;      ///< 3N, zero on free DOFs
    Eigen::MatrixXd stress;        ///< N x 6 Voigt, averaged over elements sharing a node
};

/// Solves K u = a(0) F with Dirichlet elimination; the load amplitude is
/// evaluated at t = 0.
StaticResult solve_static(const AnalysisJob& job, const FormedMesh& formed);

/// Nodal boundary stresses averaged over incident elements for a full
/// displacement vector.
Eigen::MatrixXd nodal_stress(const AnalysisJob& job, const FormedMesh& formed,
                             const Eigen::VectorXd& displacement);

struct ModalResult {
    Eigen::VectorXd eigenvalues;  ///< ascending, 1/s^2
    Eigen::MatrixXd modes;        ///< 3N x n, M-orthonormal, zero on constrained DOFs
};

/// Smallest generalized eigenpairs of K phi = lambda M phi on the free DOFs.
ModalResult solve_modal(const AnalysisJob& job, const FormedMesh& formed);

/// Same, on prepared free-DOF blocks; the modes returned are free-DOF vectors.
/// Small systems use a dense solver, larger ones shift-invert Lanczos.
ModalResult generalized_eigen(const SparseMatrix& k, const SparseMatrix& m, int n_modes);

struct TransientResult {
    std::vector<double> time;
    Eigen::MatrixXd u, v, a;        ///< steps+1 rows, one column per monitor
    std::vector<double> kinetic;    ///< J
    std::vector<double> strain;     ///< J
    std::vector<double> damping;    ///< cumulative dissipated work, J
    std::vector<double> external;   ///< cumulative external work, J
    Eigen::VectorXd final_displacement;  ///< 3N

    /// Energy balance residual per step, |T + U + W_damp - W_ext| / max(W_ext, T + U)
    /// with the denominator taken as the running maximum over the history.
    std::vector<double> energy_residual() const;
};

/// HHT-alpha integration from rest with a fixed step.
TransientResult solve_transient(const AnalysisJob& job, const FormedMesh& formed);

}  // namespace sbfem
