#include "sbfem/assembly.hpp"

#include "sbfem/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <thread>
#include <tuple>

namespace sbfem {

DofMap::DofMap(int num_nodes, std::span<const DirichletBC> constraints)
    : equation_(static_cast<std::size_t>(3 * num_nodes), 0),
      prescribed_(static_cast<std::size_t>(3 * num_nodes), 0.0) {
    for (const auto& bc : constraints) {
        if (bc.node < 0 || bc.node >= num_nodes || bc.dir < 0 || bc.dir > 2)
            throw Error("boundary condition on node " + std::to_string(bc.node + 1) + " dof " +
                        std::to_string(bc.dir + 1) + " is out of range");
        const int g = global_dof(bc.node, bc.dir);
        // Repeated constraints on one DOF keep the last value.
        equation_[g] = -1;
        prescribed_[g] = bc.value;
    }
    for (int g = 0; g < num_total(); ++g) {
        if (equation_[g] < 0) {
            constrained_dofs_.push_back(g);
        } else {
            equation_[g] = num_free_++;
            free_dofs_.push_back(g);
        }
    }
}

Eigen::VectorXd DofMap::prescribed_vector() const {
    Eigen::VectorXd v(num_constrained());
    for (int i = 0; i < num_constrained(); ++i) v[i] = prescribed_[constrained_dofs_[i]];
    return v;
}

Eigen::VectorXd DofMap::restrict_free(const Eigen::VectorXd& full) const {
    Eigen::VectorXd v(num_free_);
    for (int i = 0; i < num_free_; ++i) v[i] = full[free_dofs_[i]];
    return v;
}

Eigen::VectorXd DofMap::expand(const Eigen::VectorXd& free) const {
    Eigen::VectorXd full(num_total());
    for (int g = 0; g < num_total(); ++g)
        full[g] = equation_[g] < 0 ? prescribed_[g] : free[equation_[g]];
    return full;
}

double Amplitude::operator()(double t) const {
    switch (kind) {
        case Kind::Constant:
            return scale;
        case Kind::Sine:
            return scale * std::sin(2.0 * std::numbers::pi * frequency * t);
        case Kind::Tabular: {
            if (table.empty()) return 0.0;
            if (t <= table.front().first) return table.front().second;
            if (t >= table.back().first) return table.back().second;
            auto hi = std::upper_bound(table.begin(), table.end(), t,
                                       [](double v, const auto& p) { return v < p.first; });
            auto lo = hi - 1;
            const double w = (t - lo->first) / (hi->first - lo->first);
            return (1.0 - w) * lo->second + w * hi->second;
        }
    }
    return 0.0;
}

void AnalysisJob::check() const {
    if (!mesh) throw Error("analysis job has no mesh");
    const int nn = mesh->num_nodes();
    const int ne = mesh->num_elements();
    if (static_cast<int>(element_material.size()) != ne)
        throw Error("element material map has " + std::to_string(element_material.size()) +
                    " entries for " + std::to_string(ne) + " elements");
    for (int e = 0; e < ne; ++e) {
        const int m = element_material[e];
        if (m < 0 || m >= static_cast<int>(materials.size()))
            throw Error("element " + std::to_string(e + 1) + " has no material");
    }
    for (const auto& mat : materials) mat.check();
    auto check_node = [&](int node, int dir, const char* what) {
        if (node < 0 || node >= nn)
            throw Error(std::string(what) + " references node " + std::to_string(node + 1) +
                        " outside 1.." + std::to_string(nn));
        if (dir < 0 || dir > 2)
            throw Error(std::string(what) + " references dof " + std::to_string(dir + 1));
    };
    for (const auto& bc : dirichlet) check_node(bc.node, bc.dir, "boundary condition");
    for (const auto& p : point_loads) check_node(p.node, p.dir, "point load");
    for (const auto& m : monitors) check_node(m.node, m.dir, "monitor");
    for (const auto& t : tractions)
        if (t.surface < 0 || t.surface >= mesh->num_surfaces())
            throw Error("traction references surface " + std::to_string(t.surface + 1) +
                        " outside 1.." + std::to_string(mesh->num_surfaces()));
    if (const auto* tr = std::get_if<TransientStep>(&step)) {
        if (!(tr->dt_max > 0.0)) throw Error("transient step needs dt > 0");
        if (!(tr->t_end > 0.0)) throw Error("transient step needs t_end > 0");
        if (!(tr->hht_alpha >= -1.0 / 3.0 && tr->hht_alpha <= 0.0))
            throw Error("HHT alpha must lie in [-1/3, 0]");
    }
    if (const auto* md = std::get_if<ModalStep>(&step))
        if (md->n_modes < 1) throw Error("modal step needs at least one mode");
    if (threads < 1) throw Error("thread count must be positive");
}

namespace {

// Cache key: material, surface topology and relative coordinates quantized
// relative to the element extent. Elements that differ only by translation
// hash to the same key even when the subtraction rounds differently. The
// extent exponent is part of the key so that copies scaled by a power of two
// stay distinct.
struct ElementKey {
    int material = 0;
    int exponent = 0;
    std::vector<int> topology;
    std::vector<std::int64_t> coords;

    friend bool operator<(const ElementKey& a, const ElementKey& b) {
        return std::tie(a.material, a.exponent, a.topology, a.coords) <
               std::tie(b.material, b.exponent, b.topology, b.coords);
    }
};

ElementKey make_key(const LocalElement& elem, int material) {
    ElementKey key;
    key.material = material;
    for (const auto& s : elem.surfaces) {
        key.topology.push_back(static_cast<int>(s.nodes.size()));
        key.topology.insert(key.topology.end(), s.nodes.begin(), s.nodes.end());
    }
    // Grid spacing 2^-40 times the power of two bounding the element extent.
    int exponent = 0;
    std::frexp(elem.rel_coords.cwiseAbs().maxCoeff(), &exponent);
    key.exponent = exponent;
    const double scale = std::ldexp(1.0, 40 - exponent);
    key.coords.reserve(static_cast<std::size_t>(elem.rel_coords.size()));
    for (int i = 0; i < elem.num_nodes(); ++i)
        for (int c = 0; c < 3; ++c) key.coords.push_back(std::llround(elem.rel_coords(i, c) * scale));
    return key;
}

}  // namespace

FormedMesh form_elements(const PolyMesh& mesh, std::span<const ElasticMaterial> materials,
                         std::span<const int> element_material, int threads) {
    const int ne = mesh.num_elements();
    FormedMesh out;
    out.elements.resize(static_cast<std::size_t>(ne));

    // Serial pass: localize and group elements by key, in element order.
    std::map<ElementKey, int> unique_index;
    std::vector<int> representative;  // element forming each unique solution
    std::vector<int> slot(static_cast<std::size_t>(ne));
    for (int e = 0; e < ne; ++e) {
        auto& fe = out.elements[e];
        fe.local = localize(mesh, e);
        fe.material = element_material[e];
        auto [it, inserted] =
            unique_index.emplace(make_key(fe.local, fe.material), static_cast<int>(representative.size()));
        if (inserted) representative.push_back(e);
        slot[e] = it->second;
    }
    const int nu = static_cast<int>(representative.size());
    out.unique_solutions = nu;

    std::vector<std::shared_ptr<const ElementSolution>> solutions(static_cast<std::size_t>(nu));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nu));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int u = next++; u < nu; u = next++) {
            const auto& fe = out.elements[representative[u]];
            try {
                solutions[u] = std::make_shared<const ElementSolution>(
                    form_element(fe.local, materials[fe.material]));
            } catch (...) {
                errors[u] = std::current_exception();
            }
        }
    };
    const int nt = std::clamp(threads, 1, std::max(1, nu));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(nt));
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    }
    // Report the failure of the lowest representative element id.
    for (int u = 0; u < nu; ++u)
        if (errors[u]) std::rethrow_exception(errors[u]);

    for (int e = 0; e < ne; ++e) out.elements[e].solution = solutions[slot[e]];
    return out;
}

std::vector<std::pair<int, Eigen::Vector3d>> consistent_traction(const PolyMesh& mesh, int surface,
                                                                 const Eigen::Vector3d& traction) {
    const auto nodes = mesh.surface_nodes(surface);
    const SurfaceKind kind = mesh.surface_kind(surface);
    const int n = static_cast<int>(nodes.size());
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
    double area = 0.0;
    for (const auto& qp : gauss_rule(kind).points) {
        const auto nv = shape_values<double>(kind, qp.eta, qp.zeta);
        const auto dn = shape_derivs<double>(kind, qp.eta, qp.zeta);
        Eigen::Vector3d x_eta = Eigen::Vector3d::Zero();
        Eigen::Vector3d x_zeta = Eigen::Vector3d::Zero();
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d x = mesh.node(nodes[i]);
            x_eta += dn.d_eta[i] * x;
            x_zeta += dn.d_zeta[i] * x;
        }
        const double ja = x_eta.cross(x_zeta).norm();
        area += qp.weight * ja;
        for (int i = 0; i < n; ++i) weights[i] += qp.weight * ja * nv[i];
    }
    if (!(area > 0.0))
        throw MeshError("surface " + std::to_string(surface + 1) + " has zero area");
    std::vector<std::pair<int, Eigen::Vector3d>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.emplace_back(nodes[i], weights[i] * traction);
    return out;
}

GlobalSystem assemble(const AnalysisJob& job, const FormedMesh& formed) {
    const PolyMesh& mesh = *job.mesh;
    const int nd = 3 * mesh.num_nodes();
    std::vector<Eigen::Triplet<double>> tk, tm;
    std::size_t reserve = 0;
    for (const auto& fe : formed.elements)
        reserve += static_cast<std::size_t>(fe.local.num_dofs()) * fe.local.num_dofs();
    tk.reserve(reserve);
    const bool has_mass = std::any_of(job.materials.begin(), job.materials.end(),
                                      [](const ElasticMaterial& m) { return m.density > 0.0; });
    if (has_mass) tm.reserve(reserve);

    std::vector<int> dofs;
    for (const auto& fe : formed.elements) {
        const int n = fe.local.num_nodes();
        dofs.resize(static_cast<std::size_t>(3 * n));
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) dofs[3 * i + c] = global_dof(fe.local.local_to_global[i], c);
        const auto& k = fe.solution->k;
        const auto& m = fe.solution->m;
        const bool elem_mass = m.size() > 0 && job.materials[fe.material].density > 0.0;
        for (int j = 0; j < 3 * n; ++j)
            for (int i = 0; i < 3 * n; ++i) {
                tk.emplace_back(dofs[i], dofs[j], k(i, j));
                if (elem_mass) tm.emplace_back(dofs[i], dofs[j], m(i, j));
            }
    }
    GlobalSystem sys;
    sys.k.resize(nd, nd);
    sys.k.setFromTriplets(tk.begin(), tk.end());
    sys.m.resize(nd, nd);
    sys.m.setFromTriplets(tm.begin(), tm.end());
    sys.c = rayleigh_damping(sys.k, sys.m, job.rayleigh_alpha, job.rayleigh_beta);
    sys.c.prune(0.0);

    sys.f = Eigen::VectorXd::Zero(nd);
    for (const auto& p : job.point_loads) sys.f[global_dof(p.node, p.dir)] += p.value;
    for (const auto& t : job.tractions)
        for (const auto& [node, force] : consistent_traction(mesh, t.surface, t.traction))
            for (int c = 0; c < 3; ++c) sys.f[global_dof(node, c)] += force[c];
    return sys;
}

std::pair<SparseMatrix, SparseMatrix> partition(const SparseMatrix& a, const DofMap& dofs) {
    const int nc = dofs.num_constrained();
    std::vector<int> cindex(static_cast<std::size_t>(dofs.num_total()), -1);
    for (int i = 0; i < nc; ++i) cindex[dofs.constrained_dofs()[i]] = i;
    std::vector<Eigen::Triplet<double>> ff, fc;
    ff.reserve(static_cast<std::size_t>(a.nonZeros()));
    for (int col = 0; col < a.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
            const int r = dofs.equation(static_cast<int>(it.row()));
            if (r < 0) continue;
            const int cf = dofs.equation(col);
            if (cf >= 0)
                ff.emplace_back(r, cf, it.value());
            else
                fc.emplace_back(r, cindex[col], it.value());
        }
    SparseMatrix aff(dofs.num_free(), dofs.num_free());
    aff.setFromTriplets(ff.begin(), ff.end());
    SparseMatrix afc(dofs.num_free(), nc);
    afc.setFromTriplets(fc.begin(), fc.end());
    return {std::move(aff), std::move(afc)};
}

}  // namespace sbfem
