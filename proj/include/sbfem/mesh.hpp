#pragma once

#include "sbfem/shape_functions.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sbfem {

/// Reference from an element to one of its bounding surfaces. `flipped` is
/// set when the stored surface normal points into the element.
struct SurfaceRef {
    int surface = 0;
    bool flipped = false;

    friend bool operator==(const SurfaceRef&, const SurfaceRef&) = default;
};

/// Polyhedral mesh in flat-array form. All ids are 0-based; the text format
/// is 1-based and converted at the parse/serialize boundary.
///
/// `surf_index[s]` is the end offset of surface s in `surf_conn`, and
/// `elem_index[e]` the end offset of element e in `elem_conn`.
class PolyMesh {
public:
    PolyMesh() = default;

    /// Builds a mesh and checks the structural invariants (offset arrays,
    /// id ranges, supported surface sizes). Throws MeshError.
    PolyMesh(Eigen::MatrixX3d node_coords, std::vector<int> surf_conn, std::vector<int> surf_index,
             std::vector<SurfaceRef> elem_conn, std::vector<int> elem_index,
             Eigen::MatrixX3d scaling_centers);

    int num_nodes() const noexcept { return static_cast<int>(nodes_.rows()); }
    int num_surfaces() const noexcept { return static_cast<int>(surf_index_.size()); }
    int num_elements() const noexcept { return static_cast<int>(elem_index_.size()); }

    const Eigen::MatrixX3d& node_coords() const noexcept { return nodes_; }
    const Eigen::MatrixX3d& scaling_centers() const noexcept { return centers_; }
    Eigen::Vector3d node(int i) const { return nodes_.row(i).transpose(); }
    Eigen::Vector3d scaling_center(int e) const { return centers_.row(e).transpose(); }

    const std::vector<int>& surf_conn() const noexcept { return surf_conn_; }
    const std::vector<int>& surf_index() const noexcept { return surf_index_; }
    const std::vector<SurfaceRef>& elem_conn() const noexcept { return elem_conn_; }
    const std::vector<int>& elem_index() const noexcept { return elem_index_; }

    std::span<const int> surface_nodes(int s) const;
    SurfaceKind surface_kind(int s) const;
    std::span<const SurfaceRef> element_surfaces(int e) const;

    /// Distinct nodes of element e in ascending id order.
    std::vector<int> element_nodes(int e) const;

    void set_scaling_center(int e, const Eigen::Vector3d& c) { centers_.row(e) = c.transpose(); }

private:
    void check_structure() const;

    Eigen::MatrixX3d nodes_;
    std::vector<int> surf_conn_;
    std::vector<int> surf_index_;
    std::vector<SurfaceRef> elem_conn_;
    std::vector<int> elem_index_;
    Eigen::MatrixX3d centers_;
};

/// Parses the whitespace-delimited polyhedral mesh text format:
///
///   n_nodes      then n_nodes lines "x y z"
///   n_surfaces   then per surface "k id_1 ... id_k"          (1-based node ids)
///   n_elements   then per element "m sid_1 ... sid_m"        (signed 1-based surface ids)
///   then n_elements scaling-center lines "x y z"
///
/// '#' starts a comment that runs to end of line. Throws ParseError with the
/// line number and offending token.
PolyMesh parse_mesh_text(std::istream& in, const std::string& source = "<mesh>");
PolyMesh parse_mesh_string(const std::string& text, const std::string& source = "<mesh>");
PolyMesh read_mesh_file(const std::filesystem::path& path);

/// Inverse of parse_mesh_text; floats use the shortest round-trip form.
std::string serialize_mesh_text(const PolyMesh& mesh);
void write_mesh_file(const PolyMesh& mesh, const std::filesystem::path& path);

/// Connectivity of a surface traversed in the opposite direction. Involution.
std::vector<int> reversed_connectivity(SurfaceKind kind, std::span<const int> nodes);

/// Arithmetic mean of the element's distinct node coordinates.
Eigen::Vector3d default_scaling_center(const PolyMesh& mesh, int elem);

struct LocalSurface {
    SurfaceKind kind = SurfaceKind::Q4;
    std::vector<int> nodes;  ///< local ids, normal pointing away from the scaling center
    int mesh_surface = -1;   ///< global surface id
};

/// One element expressed in coordinates relative to its scaling center,
/// with surface connectivity in local node ids.
struct LocalElement {
    int mesh_element = -1;
    Eigen::MatrixX3d rel_coords;     ///< row i: node local_to_global[i] minus scaling center
    std::vector<LocalSurface> surfaces;
    std::vector<int> local_to_global;
    std::map<int, int> global_to_local;

    int num_nodes() const noexcept { return static_cast<int>(rel_coords.rows()); }
    int num_dofs() const noexcept { return 3 * num_nodes(); }
};

/// Localizes element `elem`. `node_order` lists the element's distinct
/// nodes in the order used for its DOFs; it must contain exactly the nodes
/// referenced by the element's surfaces. Negative surfaces are reversed.
LocalElement localize(const PolyMesh& mesh, int elem, std::span<const int> node_order);

/// Localizes with the ascending node order from PolyMesh::element_nodes.
LocalElement localize(const PolyMesh& mesh, int elem);

struct ElementVerdict {
    bool watertight = true;
    bool oriented = true;
    bool star_convex = true;
    std::string detail;

    bool ok() const noexcept { return watertight && oriented && star_convex; }
};

struct ValidationReport {
    std::vector<ElementVerdict> elements;

    bool ok() const noexcept;
    int failure_count() const noexcept;
    /// One line per failing element, or "ok".
    std::string summary() const;
};

/// Per-element watertightness, orientation and star-convexity checks.
/// Star-convexity is tested at every surface quadrature point.
ValidationReport validate(const PolyMesh& mesh);

/// Volume of element e from its scaled-boundary sectors (sum of the
/// integrals of |Jb| / 3 over the surfaces).
double element_volume(const PolyMesh& mesh, int elem);

/// Regular nx*ny*nz grid of hexahedral polyhedra (six Q4 faces each) over
/// [0,lx]x[0,ly]x[0,lz]; nodes ordered x fastest, scaling centers at cell
/// centroids, interior faces shared.
PolyMesh make_box_mesh(int nx, int ny, int nz, double lx, double ly, double lz);

/// Grid node id of (i, j, k) in a mesh built by make_box_mesh.
constexpr int box_node_id(int nx, int ny, int i, int j, int k) noexcept {
    return i + (nx + 1) * (j + (ny + 1) * k);
}

}  // namespace sbfem
