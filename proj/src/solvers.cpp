#include "sbfem/solvers.hpp"

#include "sbfem/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#ifdef SBFEM_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>

namespace sbfem {

struct SpdSolver::Impl {
#ifdef SBFEM_HAVE_CHOLMOD
    std::unique_ptr<Eigen::CholmodSupernodalLLT<SparseMatrix>> cholmod;
#endif
    std::unique_ptr<Eigen::SimplicialLDLT<SparseMatrix>> ldlt;
};

namespace {

#ifdef SBFEM_HAVE_CHOLMOD
// The supernodal path leans on the system BLAS; a solve against a known
// right-hand side guards against a faulty BLAS build.
bool cholmod_factor(const SparseMatrix& a, Eigen::CholmodSupernodalLLT<SparseMatrix>& llt) {
    llt.cholmod().print = 0;  // failures are reported through info() and the probe
    llt.compute(a);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(a.rows(), 1.0, 2.0);
    const Eigen::VectorXd b = a * x;
    const Eigen::VectorXd r = a * llt.solve(b) - b;
    return r.norm() <= 1e-8 * b.norm();
}
#endif

void simplicial_factor(const SparseMatrix& a, Eigen::SimplicialLDLT<SparseMatrix>& ldlt,
                       const char* what) {
    ldlt.compute(a);
    if (ldlt.info() != Eigen::Success)
        throw SolverError(std::string(what) + " matrix factorization failed");
    // Pivots tiny relative to the largest one count as null-space directions.
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    int deficient = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (std::abs(d[i]) <= 1e-12 * dmax || d[i] < 0.0) ++deficient;
    if (deficient > 0)
        throw SolverError(std::string(what) + " matrix is singular: estimated null-space dimension " +
                          std::to_string(deficient) +
                          " (check boundary conditions for unrestrained rigid-body modes)");
}

}  // namespace

SpdSolver::SpdSolver(const SparseMatrix& a, const char* what)
    : impl_(std::make_unique<Impl>()), size_(static_cast<int>(a.rows())) {
    if (size_ == 0) return;
#ifdef SBFEM_HAVE_CHOLMOD
    impl_->cholmod = std::make_unique<Eigen::CholmodSupernodalLLT<SparseMatrix>>();
    if (cholmod_factor(a, *impl_->cholmod)) return;
    impl_->cholmod.reset();
#endif
    impl_->ldlt = std::make_unique<Eigen::SimplicialLDLT<SparseMatrix>>();
    simplicial_factor(a, *impl_->ldlt, what);
}

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

Eigen::VectorXd SpdSolver::solve(const Eigen::VectorXd& b) const {
    if (size_ == 0) return Eigen::VectorXd(0);
#ifdef SBFEM_HAVE_CHOLMOD
    if (impl_->cholmod) return impl_->cholmod->solve(b);
#endif
    return impl_->ldlt->solve(b);
}

const char* SpdSolver::backend() const noexcept {
#ifdef SBFEM_HAVE_CHOLMOD
    if (impl_->cholmod) return "cholmod-supernodal";
#endif
    return "eigen-simplicial";
}

PreparedSystem prepare_system(const AnalysisJob& job, const FormedMesh& formed) {
    PreparedSystem ps;
    ps.dofs = DofMap(job.mesh->num_nodes(), job.dirichlet);
    ps.global = assemble(job, formed);
    std::tie(ps.k_ff, ps.k_fc) = partition(ps.global.k, ps.dofs);
    ps.m_ff = partition(ps.global.m, ps.dofs).first;
    ps.c_ff = partition(ps.global.c, ps.dofs).first;
    ps.f_f = ps.dofs.restrict_free(ps.global.f);
    ps.u_c = ps.dofs.prescribed_vector();
    ps.lift = -(ps.k_fc * ps.u_c);
    return ps;
}

Eigen::MatrixXd nodal_stress(const AnalysisJob& job, const FormedMesh& formed,
                             const Eigen::VectorXd& displacement) {
    const int nn = job.mesh->num_nodes();
    Eigen::MatrixXd stress = Eigen::MatrixXd::Zero(nn, 6);
    std::vector<int> count(static_cast<std::size_t>(nn), 0);
    for (const auto& fe : formed.elements) {
        const auto& loc = fe.local;
        Eigen::VectorXd d(loc.num_dofs());
        for (int i = 0; i < loc.num_nodes(); ++i)
            d.segment<3>(3 * i) = displacement.segment<3>(3 * loc.local_to_global[i]);
        const RadialField radial = radial_field(loc, *fe.solution, d, 1.0);
        const auto& mat = job.materials[fe.material];
        for (int s = 0; s < static_cast<int>(loc.surfaces.size()); ++s) {
            const auto& surf = loc.surfaces[s];
            for (int a = 0; a < static_cast<int>(surf.nodes.size()); ++a) {
                const Eigen::Vector2d r = reference_node(surf.kind, a);
                const FieldSample fs = surface_field(loc, mat, radial, r[0], r[1], s);
                const int g = loc.local_to_global[surf.nodes[a]];
                stress.row(g) += fs.stress.transpose();
                ++count[g];
            }
        }
    }
    for (int i = 0; i < nn; ++i)
        if (count[i] > 0) stress.row(i) /= count[i];
    return stress;
}

StaticResult solve_static(const AnalysisJob& job, const FormedMesh& formed) {
    const PreparedSystem ps = prepare_system(job, formed);
    StaticResult out;
    Eigen::VectorXd u_f = Eigen::VectorXd::Zero(ps.dofs.num_free());
    if (ps.dofs.num_free() > 0) {
        const SpdSolver solver(ps.k_ff);
        u_f = solver.solve(job.amplitude(0.0) * ps.f_f + ps.lift);
    }
    out.displacement = ps.dofs.expand(u_f);
    const Eigen::VectorXd internal = ps.global.k * out.displacement;
    out.reaction = Eigen::VectorXd::Zero(ps.dofs.num_total());
    for (int g : ps.dofs.constrained_dofs())
        out.reaction[g] = internal[g] - job.amplitude(0.0) * ps.global.f[g];
    out.stress = nodal_stress(job, formed, out.displacement);
    return out;
}

namespace {

// Deterministic sign: the largest-magnitude entry of each mode is positive.
void normalize_signs(Eigen::MatrixXd& modes) {
    for (Eigen::Index j = 0; j < modes.cols(); ++j) {
        Eigen::Index imax = 0;
        modes.col(j).cwiseAbs().maxCoeff(&imax);
        if (modes(imax, j) < 0.0) modes.col(j) *= -1.0;
    }
}

ModalResult dense_eigen(const SparseMatrix& k, const SparseMatrix& m, int n_modes) {
    const Eigen::MatrixXd kd(k), md(m);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(kd, md);
    if (es.info() != Eigen::Success)
        throw SolverError("dense generalized eigensolver failed (is the mass matrix positive definite?)");
    ModalResult out;
    out.eigenvalues = es.eigenvalues().head(n_modes);
    out.modes = es.eigenvectors().leftCols(n_modes);
    return out;
}

// Shift-invert Lanczos in the M inner product with full reorthogonalization.
// The operator is (K - sigma M)^{-1} M; its largest eigenvalues theta map to
// the generalized eigenvalues closest to sigma via lambda = sigma + 1/theta.
ModalResult lanczos_eigen(const SparseMatrix& k, const SparseMatrix& m, int n_modes) {
    const int n = static_cast<int>(k.rows());
    // Eigenvalues are taken from Rayleigh quotients, so the shift only
    // steers convergence and never enters the results.
    std::unique_ptr<SpdSolver> op;
    try {
        op = std::make_unique<SpdSolver>(k);
    } catch (const SolverError&) {
        // Unconstrained structure: shift below zero so K - sigma M is definite.
        const double sigma = -1e-4 * k.diagonal().mean() / m.diagonal().mean();
        const SparseMatrix shifted = k - sigma * m;
        op = std::make_unique<SpdSolver>(shifted);
    }

    const int max_steps = std::min(n, std::max(8 * n_modes + 60, 160));
    Eigen::MatrixXd v(n, max_steps);
    std::vector<double> alpha, beta;

    std::mt19937_64 rng(20240917);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = unif(rng);
    w = op->solve(m * w);  // project onto the range of the operator
    double b = std::sqrt(w.dot(m * w));
    if (!(b > 0.0)) throw SolverError("Lanczos start vector has zero mass norm");

    Eigen::VectorXd theta;
    Eigen::MatrixXd y;
    int steps = 0;
    int check_at = std::min(n, std::max(2 * n_modes + 20, 40));
    bool converged = false;
    while (steps < max_steps) {
        v.col(steps) = w / b;
        const Eigen::VectorXd mvj = m * v.col(steps);
        w = op->solve(mvj);
        const double a = w.dot(mvj);
        alpha.push_back(a);
        // Two passes of classical Gram-Schmidt against all previous vectors.
        for (int pass = 0; pass < 2; ++pass) {
            const Eigen::VectorXd coeff = v.leftCols(steps + 1).transpose() * (m * w);
            w -= v.leftCols(steps + 1) * coeff;
        }
        ++steps;
        b = std::sqrt(std::max(0.0, w.dot(m * w)));
        beta.push_back(b);

        const bool exhausted = b <= 1e-14 * std::abs(a) || steps == n;
        if (steps >= check_at || exhausted || steps == max_steps) {
            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
            for (int i = 0; i < steps; ++i) {
                t(i, i) = alpha[i];
                if (i + 1 < steps) t(i, i + 1) = t(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
            theta = es.eigenvalues().reverse();
            y = es.eigenvectors().rowwise().reverse();
            const int want = std::min(n_modes, steps);
            converged = want == n_modes;
            for (int i = 0; i < want && converged; ++i)
                if (std::abs(b * y(steps - 1, i)) > 1e-11 * std::abs(theta[i])) converged = false;
            if (converged || exhausted) break;
            check_at = steps + 10;
        }
    }
    if (!converged)
        throw SolverError("Lanczos iteration did not converge for " + std::to_string(n_modes) +
                          " modes in " + std::to_string(steps) + " steps");

    ModalResult out;
    out.eigenvalues.resize(n_modes);
    out.modes = v.leftCols(steps) * y.leftCols(n_modes);
    for (int i = 0; i < n_modes; ++i) {
        auto x = out.modes.col(i);
        const double mm = x.dot(m * x);
        x /= std::sqrt(mm);
        out.eigenvalues[i] = x.dot(k * x);  // Rayleigh quotient, mass norm is 1
    }
    // Order ascending; ties keep Lanczos order.
    std::vector<int> order(static_cast<std::size_t>(n_modes));
    for (int i = 0; i < n_modes; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int c) { return out.eigenvalues[a] < out.eigenvalues[c]; });
    ModalResult sorted;
    sorted.eigenvalues.resize(n_modes);
    sorted.modes.resize(n, n_modes);
    for (int i = 0; i < n_modes; ++i) {
        sorted.eigenvalues[i] = out.eigenvalues[order[i]];
        sorted.modes.col(i) = out.modes.col(order[i]);
    }
    return sorted;
}

}  // namespace

ModalResult generalized_eigen(const SparseMatrix& k, const SparseMatrix& m, int n_modes) {
    const int n = static_cast<int>(k.rows());
    if (n_modes > n)
        throw SolverError("requested " + std::to_string(n_modes) + " modes from " + std::to_string(n) +
                          " free DOFs");
    if (m.nonZeros() == 0) throw SolverError("modal analysis needs a positive density");
    ModalResult out = n <= 600 ? dense_eigen(k, m, n_modes) : lanczos_eigen(k, m, n_modes);
    normalize_signs(out.modes);
    return out;
}

ModalResult solve_modal(const AnalysisJob& job, const FormedMesh& formed) {
    const auto* step = std::get_if<ModalStep>(&job.step);
    const int n_modes = step ? step->n_modes : 10;
    const PreparedSystem ps = prepare_system(job, formed);
    ModalResult free = generalized_eigen(ps.k_ff, ps.m_ff, n_modes);
    ModalResult out;
    out.eigenvalues = free.eigenvalues;
    out.modes = Eigen::MatrixXd::Zero(ps.dofs.num_total(), n_modes);
    for (int i = 0; i < ps.dofs.num_free(); ++i) out.modes.row(ps.dofs.free_dof(i)) = free.modes.row(i);
    return out;
}

std::vector<double> TransientResult::energy_residual() const {
    std::vector<double> r(time.size(), 0.0);
    double scale = 0.0;
    for (std::size_t i = 0; i < time.size(); ++i) {
        scale = std::max({scale, std::abs(external[i]), kinetic[i] + strain[i]});
        const double bal = kinetic[i] + strain[i] + damping[i] - external[i];
        r[i] = scale > 0.0 ? std::abs(bal) / scale : 0.0;
    }
    return r;
}

TransientResult solve_transient(const AnalysisJob& job, const FormedMesh& formed) {
    const auto* step = std::get_if<TransientStep>(&job.step);
    if (!step) throw SolverError("transient solve requires a transient step");
    const PreparedSystem ps = prepare_system(job, formed);
    const int n = ps.dofs.num_free();

    const int nsteps = std::max(1, static_cast<int>(std::ceil(step->t_end / step->dt_max - 1e-9)));
    const double dt = step->t_end / nsteps;
    const double al = step->hht_alpha;
    const double beta = 0.25 * (1.0 - al) * (1.0 - al);
    const double gamma = 0.5 - al;

    auto load = [&](double t) -> Eigen::VectorXd { return job.amplitude(t) * ps.f_f + ps.lift; };

    Eigen::VectorXd u = Eigen::VectorXd::Zero(n), v = Eigen::VectorXd::Zero(n), a(n);
    Eigen::VectorXd f0 = load(0.0);
    if (f0.squaredNorm() > 0.0) {
        const SpdSolver msolve(ps.m_ff, "mass");
        a = msolve.solve(f0);
    } else {
        a.setZero();
    }

    const SparseMatrix s = ps.m_ff + ((1.0 + al) * gamma * dt) * ps.c_ff + ((1.0 + al) * beta * dt * dt) * ps.k_ff;
    const SpdSolver ssolve(s, "effective stiffness");

    const int nmon = static_cast<int>(job.monitors.size());
    std::vector<int> mon_eq(static_cast<std::size_t>(nmon));
    for (int i = 0; i < nmon; ++i) mon_eq[i] = ps.dofs.equation(global_dof(job.monitors[i].node, job.monitors[i].dir));

    TransientResult out;
    out.u.resize(nsteps + 1, nmon);
    out.v.resize(nsteps + 1, nmon);
    out.a.resize(nsteps + 1, nmon);
    auto record = [&](int i, double t) {
        out.time.push_back(t);
        for (int j = 0; j < nmon; ++j) {
            const int eq = mon_eq[j];
            const int g = global_dof(job.monitors[j].node, job.monitors[j].dir);
            out.u(i, j) = eq >= 0 ? u[eq] : ps.dofs.prescribed(g);
            out.v(i, j) = eq >= 0 ? v[eq] : 0.0;
            out.a(i, j) = eq >= 0 ? a[eq] : 0.0;
        }
        out.kinetic.push_back(0.5 * v.dot(ps.m_ff * v));
        out.strain.push_back(0.5 * u.dot(ps.k_ff * u));
    };
    out.damping.push_back(0.0);
    out.external.push_back(0.0);
    record(0, 0.0);

    Eigen::VectorXd ku = ps.k_ff * u, cv = ps.c_ff * v;
    for (int i = 1; i <= nsteps; ++i) {
        const double t1 = i * dt;
        const Eigen::VectorXd f1 = load(t1);
        const Eigen::VectorXd u_pred = u + dt * v + (dt * dt * (0.5 - beta)) * a;
        const Eigen::VectorXd v_pred = v + (dt * (1.0 - gamma)) * a;
        const Eigen::VectorXd rhs = (1.0 + al) * f1 - al * f0 -
                                    (1.0 + al) * (ps.c_ff * v_pred + ps.k_ff * u_pred) + al * (cv + ku);
        const Eigen::VectorXd a1 = ssolve.solve(rhs);
        const Eigen::VectorXd u1 = u_pred + (beta * dt * dt) * a1;
        const Eigen::VectorXd v1 = v_pred + (gamma * dt) * a1;

        const Eigen::VectorXd du = u1 - u;
        const Eigen::VectorXd cv1 = ps.c_ff * v1;
        out.external.push_back(out.external.back() + 0.5 * du.dot(f0 + f1));
        out.damping.push_back(out.damping.back() + 0.5 * du.dot(cv + cv1));

        u = u1;
        v = v1;
        a = a1;
        f0 = f1;
        ku = ps.k_ff * u;
        cv = cv1;
        record(i, t1);
    }
    out.final_displacement = ps.dofs.expand(u);
    return out;
}

}  // namespace sbfem
