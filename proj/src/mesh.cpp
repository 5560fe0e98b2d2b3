#include "sbfem/mesh.hpp"

#include "sbfem/element.hpp"
#include "sbfem/error.hpp"
#include "sbfem/format.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sbfem {

PolyMesh::PolyMesh(Eigen::MatrixX3d node_coords, std::vector<int> surf_conn,
                   std::vector<int> surf_index, std::vector<SurfaceRef> elem_conn,
                   std::vector<int> elem_index, Eigen::MatrixX3d scaling_centers)
    : nodes_(std::move(node_coords)),
      surf_conn_(std::move(surf_conn)),
      surf_index_(std::move(surf_index)),
      elem_conn_(std::move(elem_conn)),
      elem_index_(std::move(elem_index)),
      centers_(std::move(scaling_centers)) {
    check_structure();
}

void PolyMesh::check_structure() const {
    int prev = 0;
    for (std::size_t s = 0; s < surf_index_.size(); ++s) {
        const int count = surf_index_[s] - prev;
        if (count != 3 && count != 4 && count != 6 && count != 8)
            throw MeshError("surface " + std::to_string(s + 1) + " has " + std::to_string(count) +
                            " nodes (expected 3, 4, 6 or 8)");
        prev = surf_index_[s];
    }
    if (static_cast<std::size_t>(prev) != surf_conn_.size())
        throw MeshError("surface index does not cover the surface connectivity array");
    for (int id : surf_conn_)
        if (id < 0 || id >= num_nodes())
            throw MeshError("surface references node " + std::to_string(id + 1) + " out of range");

    prev = 0;
    for (std::size_t e = 0; e < elem_index_.size(); ++e) {
        if (elem_index_[e] <= prev)
            throw MeshError("element " + std::to_string(e + 1) + " has no surfaces");
        prev = elem_index_[e];
    }
    if (static_cast<std::size_t>(prev) != elem_conn_.size())
        throw MeshError("element index does not cover the element connectivity array");
    for (const auto& ref : elem_conn_)
        if (ref.surface < 0 || ref.surface >= num_surfaces())
            throw MeshError("element references surface " + std::to_string(ref.surface + 1) +
                            " out of range");
    if (centers_.rows() != num_elements())
        throw MeshError("expected one scaling center per element");
}

std::span<const int> PolyMesh::surface_nodes(int s) const {
    const int begin = s == 0 ? 0 : surf_index_[s - 1];
    return {surf_conn_.data() + begin, static_cast<std::size_t>(surf_index_[s] - begin)};
}

SurfaceKind PolyMesh::surface_kind(int s) const {
    return surface_kind_from_nodes(static_cast<int>(surface_nodes(s).size()));
}

std::span<const SurfaceRef> PolyMesh::element_surfaces(int e) const {
    const int begin = e == 0 ? 0 : elem_index_[e - 1];
    return {elem_conn_.data() + begin, static_cast<std::size_t>(elem_index_[e] - begin)};
}

std::vector<int> PolyMesh::element_nodes(int e) const {
    std::vector<int> ids;
    for (const auto& ref : element_surfaces(e))
        for (int n : surface_nodes(ref.surface)) ids.push_back(n);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Text format

namespace {

struct Token {
    std::string text;
    std::size_t line;
};

class TokenStream {
public:
    TokenStream(std::istream& in, std::string source) : source_(std::move(source)) {
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) tokens_.push_back({tok, line_no});
        }
        last_line_ = line_no;
    }

    const Token& next(const char* what) {
        if (pos_ >= tokens_.size())
            throw ParseError(source_, last_line_, "<eof>", std::string("unexpected end of input, expected ") + what);
        return tokens_[pos_++];
    }

    int next_int(const char* what) {
        const Token& t = next(what);
        int value = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
        if (ec != std::errc() || ptr != t.text.data() + t.text.size())
            throw ParseError(source_, t.line, t.text, std::string("malformed integer, expected ") + what);
        return value;
    }

    double next_double(const char* what) {
        const Token& t = next(what);
        double value = 0;
        const char* first = t.text.data();
        if (!t.text.empty() && t.text[0] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, t.text.data() + t.text.size(), value);
        if (ec != std::errc() || ptr != t.text.data() + t.text.size())
            throw ParseError(source_, t.line, t.text, std::string("malformed number, expected ") + what);
        return value;
    }

    const Token& previous() const { return tokens_[pos_ - 1]; }
    bool done() const { return pos_ >= tokens_.size(); }
    const Token& peek() const { return tokens_[pos_]; }
    const std::string& source() const { return source_; }

    [[noreturn]] void fail_previous(const std::string& what) const {
        const Token& t = previous();
        throw ParseError(source_, t.line, t.text, what);
    }

private:
    std::string source_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::size_t last_line_ = 0;
};

int read_count(TokenStream& ts, const char* what) {
    const int n = ts.next_int(what);
    if (n < 0) ts.fail_previous(std::string("negative ") + what);
    return n;
}

}  // namespace

PolyMesh parse_mesh_text(std::istream& in, const std::string& source) {
    TokenStream ts(in, source);

    const int n_nodes = read_count(ts, "node count");
    Eigen::MatrixX3d nodes(n_nodes, 3);
    for (int i = 0; i < n_nodes; ++i)
        for (int k = 0; k < 3; ++k) nodes(i, k) = ts.next_double("node coordinate");

    const int n_surf = read_count(ts, "surface count");
    std::vector<int> surf_conn, surf_index;
    surf_index.reserve(n_surf);
    for (int s = 0; s < n_surf; ++s) {
        const int k = ts.next_int("surface node count");
        if (k != 3 && k != 4 && k != 6 && k != 8)
            ts.fail_previous("unsupported surface node count (expected 3, 4, 6 or 8)");
        for (int j = 0; j < k; ++j) {
            const int id = ts.next_int("surface node id");
            if (id < 1 || id > n_nodes) ts.fail_previous("node id out of range");
            surf_conn.push_back(id - 1);
        }
        surf_index.push_back(static_cast<int>(surf_conn.size()));
    }

    const int n_elem = read_count(ts, "element count");
    std::vector<SurfaceRef> elem_conn;
    std::vector<int> elem_index;
    for (int e = 0; e < n_elem; ++e) {
        const int m = ts.next_int("element surface count");
        if (m < 1) ts.fail_previous("element must have at least one surface");
        for (int j = 0; j < m; ++j) {
            const int sid = ts.next_int("signed surface id");
            if (sid == 0 || std::abs(sid) > n_surf) ts.fail_previous("surface id out of range");
            elem_conn.push_back({std::abs(sid) - 1, sid < 0});
        }
        elem_index.push_back(static_cast<int>(elem_conn.size()));
    }

    Eigen::MatrixX3d centers(n_elem, 3);
    for (int e = 0; e < n_elem; ++e)
        for (int k = 0; k < 3; ++k) centers(e, k) = ts.next_double("scaling center coordinate");

    if (!ts.done()) {
        const Token& t = ts.peek();
        throw ParseError(ts.source(), t.line, t.text, "trailing data after scaling centers");
    }

    try {
        return PolyMesh(std::move(nodes), std::move(surf_conn), std::move(surf_index),
                        std::move(elem_conn), std::move(elem_index), std::move(centers));
    } catch (const MeshError& err) {
        throw ParseError(source, 0, "", err.what());
    }
}

PolyMesh parse_mesh_string(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    return parse_mesh_text(in, source);
}

PolyMesh read_mesh_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mesh file " + path.string());
    return parse_mesh_text(in, path.string());
}

std::string serialize_mesh_text(const PolyMesh& mesh) {
    std::string out;
    out += std::to_string(mesh.num_nodes()) + "\n";
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        for (int k = 0; k < 3; ++k) {
            if (k) out += ' ';
            append_number(out, mesh.node_coords()(i, k));
        }
        out += '\n';
    }
    out += std::to_string(mesh.num_surfaces()) + "\n";
    for (int s = 0; s < mesh.num_surfaces(); ++s) {
        auto nodes = mesh.surface_nodes(s);
        out += std::to_string(nodes.size());
        for (int n : nodes) out += " " + std::to_string(n + 1);
        out += '\n';
    }
    out += std::to_string(mesh.num_elements()) + "\n";
    for (int e = 0; e < mesh.num_elements(); ++e) {
        auto refs = mesh.element_surfaces(e);
        out += std::to_string(refs.size());
        for (const auto& r : refs) out += " " + std::to_string(r.flipped ? -(r.surface + 1) : r.surface + 1);
        out += '\n';
    }
    for (int e = 0; e < mesh.num_elements(); ++e) {
        for (int k = 0; k < 3; ++k) {
            if (k) out += ' ';
            append_number(out, mesh.scaling_centers()(e, k));
        }
        out += '\n';
    }
    return out;
}

void write_mesh_file(const PolyMesh& mesh, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write mesh file " + path.string());
    out << serialize_mesh_text(mesh);
    if (!out) throw Error("failed writing mesh file " + path.string());
}

std::vector<int> reversed_connectivity(SurfaceKind kind, std::span<const int> n) {
    switch (kind) {
        case SurfaceKind::T3: return {n[2], n[1], n[0]};
        case SurfaceKind::Q4: return {n[3], n[2], n[1], n[0]};
        case SurfaceKind::T6: return {n[2], n[1], n[0], n[4], n[3], n[5]};
        case SurfaceKind::Q8: return {n[3], n[2], n[1], n[0], n[6], n[5], n[4], n[7]};
    }
    return {};
}

Eigen::Vector3d default_scaling_center(const PolyMesh& mesh, int elem) {
    const auto ids = mesh.element_nodes(elem);
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (int id : ids) sum += mesh.node(id);
    return sum / static_cast<double>(ids.size());
}

// ---------------------------------------------------------------------------
// Localization

LocalElement localize(const PolyMesh& mesh, int elem, std::span<const int> node_order) {
    if (elem < 0 || elem >= mesh.num_elements())
        throw MeshError("element id " + std::to_string(elem + 1) + " out of range");

    LocalElement local;
    local.mesh_element = elem;
    local.local_to_global.assign(node_order.begin(), node_order.end());
    for (std::size_t i = 0; i < node_order.size(); ++i) {
        if (!local.global_to_local.emplace(node_order[i], static_cast<int>(i)).second)
            throw MeshError("element " + std::to_string(elem + 1) + ": node " +
                            std::to_string(node_order[i] + 1) + " listed twice in node order");
    }

    std::set<int> used;
    for (const auto& ref : mesh.element_surfaces(elem)) {
        const SurfaceKind kind = mesh.surface_kind(ref.surface);
        auto global = mesh.surface_nodes(ref.surface);
        std::vector<int> conn(global.begin(), global.end());
        if (ref.flipped) conn = reversed_connectivity(kind, conn);
        LocalSurface ls{kind, {}, ref.surface};
        for (int g : conn) {
            auto it = local.global_to_local.find(g);
            if (it == local.global_to_local.end())
                throw MeshError("element " + std::to_string(elem + 1) + ": node " +
                                std::to_string(g + 1) + " missing from node order");
            ls.nodes.push_back(it->second);
            used.insert(g);
        }
        local.surfaces.push_back(std::move(ls));
    }
    if (used.size() != node_order.size())
        throw MeshError("element " + std::to_string(elem + 1) +
                        ": node order contains nodes not used by the element surfaces");

    const Eigen::RowVector3d center = mesh.scaling_centers().row(elem);
    local.rel_coords.resize(static_cast<Eigen::Index>(node_order.size()), 3);
    for (std::size_t i = 0; i < node_order.size(); ++i)
        local.rel_coords.row(static_cast<Eigen::Index>(i)) = mesh.node_coords().row(node_order[i]) - center;
    return local;
}

LocalElement localize(const PolyMesh& mesh, int elem) {
    const auto order = mesh.element_nodes(elem);
    return localize(mesh, elem, order);
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::ok() const noexcept { return failure_count() == 0; }

int ValidationReport::failure_count() const noexcept {
    return static_cast<int>(std::count_if(elements.begin(), elements.end(),
                                          [](const ElementVerdict& v) { return !v.ok(); }));
}

std::string ValidationReport::summary() const {
    std::string out;
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const auto& v = elements[e];
        if (v.ok()) continue;
        out += "element " + std::to_string(e + 1) + ":";
        if (!v.watertight) out += " not watertight;";
        if (!v.oriented) out += " inconsistent orientation;";
        if (!v.star_convex) out += " not star-convex from its scaling center;";
        if (!v.detail.empty()) out += " " + v.detail;
        out += '\n';
    }
    return out.empty() ? "ok\n" : out;
}

namespace {

std::uint64_t edge_key(int a, int b) {
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    return (hi << 32) | lo;
}

ElementVerdict check_element(const PolyMesh& mesh, int e) {
    ElementVerdict v;
    // Edge use: undirected count and signed traversal balance.
    struct EdgeUse {
        int count = 0;
        int balance = 0;
    };
    std::unordered_map<std::uint64_t, EdgeUse> edges;
    for (const auto& ref : mesh.element_surfaces(e)) {
        const SurfaceKind kind = mesh.surface_kind(ref.surface);
        auto raw = mesh.surface_nodes(ref.surface);
        std::vector<int> conn(raw.begin(), raw.end());
        if (ref.flipped) conn = reversed_connectivity(kind, conn);
        const auto order = perimeter_order(kind);
        for (std::size_t i = 0; i < order.size(); ++i) {
            const int a = conn[order[i]];
            const int b = conn[order[(i + 1) % order.size()]];
            auto& use = edges[edge_key(a, b)];
            ++use.count;
            use.balance += a < b ? 1 : -1;
        }
    }
    int open_edges = 0, misoriented = 0;
    for (const auto& [key, use] : edges) {
        if (use.count != 2) ++open_edges;
        else if (use.balance != 0) ++misoriented;
    }
    if (open_edges) {
        v.watertight = false;
        v.detail += std::to_string(open_edges) + " edge(s) not shared by exactly two surfaces;";
    }
    if (misoriented) {
        v.oriented = false;
        v.detail += std::to_string(misoriented) + " edge(s) traversed in the same direction twice;";
    }

    const LocalElement local = localize(mesh, e);
    double volume = 0.0;
    int bad_points = 0;
    for (int s = 0; s < static_cast<int>(local.surfaces.size()); ++s) {
        const SurfaceGeometry geom = surface_geometry(local, s);
        for (const auto& qp : gauss_rule(geom.kind).points) {
            const double det = boundary_jacobian(geom, qp.eta, qp.zeta).det;
            volume += qp.weight * det / 3.0;
            if (!(det > 0.0)) ++bad_points;
        }
    }
    if (bad_points) {
        v.star_convex = false;
        v.detail += " " + std::to_string(bad_points) + " quadrature point(s) with |Jb| <= 0;";
    }
    if (!(volume > 0.0) && v.watertight) {
        v.oriented = false;
        v.detail += " non-positive enclosed volume (normals point inward);";
    }
    return v;
}

}  // namespace

ValidationReport validate(const PolyMesh& mesh) {
    ValidationReport report;
    report.elements.reserve(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) report.elements.push_back(check_element(mesh, e));
    return report;
}

double element_volume(const PolyMesh& mesh, int elem) {
    const LocalElement local = localize(mesh, elem);
    double volume = 0.0;
    for (int s = 0; s < static_cast<int>(local.surfaces.size()); ++s) {
        const SurfaceGeometry geom = surface_geometry(local, s);
        for (const auto& qp : gauss_rule(geom.kind).points)
            volume += qp.weight * boundary_jacobian(geom, qp.eta, qp.zeta).det / 3.0;
    }
    return volume;
}

// ---------------------------------------------------------------------------

PolyMesh make_box_mesh(int nx, int ny, int nz, double lx, double ly, double lz) {
    if (nx < 1 || ny < 1 || nz < 1) throw MeshError("box mesh needs at least one cell per direction");
    const int n_nodes = (nx + 1) * (ny + 1) * (nz + 1);
    Eigen::MatrixX3d nodes(n_nodes, 3);
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i <= nx; ++i)
                nodes.row(box_node_id(nx, ny, i, j, k)) << lx * i / nx, ly * j / ny, lz * k / nz;

    auto id = [&](int i, int j, int k) { return box_node_id(nx, ny, i, j, k); };
    std::vector<int> conn, index;
    auto add_face = [&](int a, int b, int c, int d) {
        conn.insert(conn.end(), {a, b, c, d});
        index.push_back(static_cast<int>(conn.size()));
        return static_cast<int>(index.size()) - 1;
    };

    // Faces normal to x, y, z. Each face is stored with its normal along +axis.
    std::vector<int> fx((nx + 1) * ny * nz), fy(nx * (ny + 1) * nz), fz(nx * ny * (nz + 1));
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i <= nx; ++i)
                fx[i + (nx + 1) * (j + ny * k)] =
                    add_face(id(i, j, k), id(i, j + 1, k), id(i, j + 1, k + 1), id(i, j, k + 1));
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j <= ny; ++j)
            for (int i = 0; i < nx; ++i)
                fy[i + nx * (j + (ny + 1) * k)] =
                    add_face(id(i, j, k), id(i, j, k + 1), id(i + 1, j, k + 1), id(i + 1, j, k));
    for (int k = 0; k <= nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                fz[i + nx * (j + ny * k)] =
                    add_face(id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k), id(i, j + 1, k));

    std::vector<SurfaceRef> elem_conn;
    std::vector<int> elem_index;
    Eigen::MatrixX3d centers(nx * ny * nz, 3);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                elem_conn.push_back({fx[i + (nx + 1) * (j + ny * k)], true});
                elem_conn.push_back({fx[i + 1 + (nx + 1) * (j + ny * k)], false});
                elem_conn.push_back({fy[i + nx * (j + (ny + 1) * k)], true});
                elem_conn.push_back({fy[i + nx * (j + 1 + (ny + 1) * k)], false});
                elem_conn.push_back({fz[i + nx * (j + ny * k)], true});
                elem_conn.push_back({fz[i + nx * (j + ny * (k + 1))], false});
                elem_index.push_back(static_cast<int>(elem_conn.size()));
                centers.row(static_cast<Eigen::Index>(elem_index.size()) - 1)
                    << lx * (i + 0.5) / nx, ly * (j + 0.5) / ny, lz * (k + 0.5) / nz;
            }

    return PolyMesh(std::move(nodes), std::move(conn), std::move(index), std::move(elem_conn),
                    std::move(elem_index), std::move(centers));
}

}  // namespace sbfem
