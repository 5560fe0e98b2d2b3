#pragma once

// Octree decomposition of labeled voxel images into hanging-node polyhedral
// meshes. Cells are axis-aligned cubes in voxel units; label 0 is void.

#include "sbfem/mesh.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sbfem {

struct VoxelImage {
    std::array<int, 3> dims{0, 0, 0};  ///< nx, ny, nz
    double spacing = 1.0;              ///< m per voxel
    std::vector<std::uint8_t> labels;  ///< x fastest, then y, then z

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    /// Label at (i, j, k); voxels outside the image are void.
    int label(int i, int j, int k) const {
        if (i < 0 || j < 0 || k < 0 || i >= dims[0] || j >= dims[1] || k >= dims[2]) return 0;
        return labels[static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(dims[0]) * (j + static_cast<std::size_t>(dims[1]) * k)];
    }
};

/// Header line "nx ny nz spacing", then either nx*ny*nz raw bytes or the
/// same number of whitespace-separated integers in 0..255. A payload made
/// only of digits and whitespace that parses to exactly nx*ny*nz integers is
/// read as text; otherwise it must be exactly nx*ny*nz bytes.
VoxelImage parse_voxel_image(std::istream& in, const std::string& source = "<image>");
VoxelImage read_voxel_image(const std::filesystem::path& path);
void write_voxel_image(const VoxelImage& img, const std::filesystem::path& path, bool binary);

struct OctreeCell {
    std::array<int, 3> origin{0, 0, 0};  ///< voxel coordinates of the low corner
    int size = 1;                        ///< edge length in voxels, a power of two
    int label = 0;                       ///< material, majority vote when mixed
    bool mixed = false;                  ///< min-size cell containing several labels

    friend bool operator==(const OctreeCell&, const OctreeCell&) = default;
};

/// Leaves of a 2:1 balanced octree (face, edge and vertex neighbors differ
/// by at most one level). The image is padded with void to a multiple of
/// max_size. Sorted by (z, y, x, size) of the origin.
/// Throws std::invalid_argument unless 1 <= min_size <= max_size, both powers of two.
std::vector<OctreeCell> build_octree(const VoxelImage& img, int min_size, int max_size);

/// True when no two touching leaves differ by more than a factor of two.
bool is_balanced(const std::vector<OctreeCell>& leaves);

struct InterfacePair {
    int surface = 0;           ///< 0-based mesh surface id
    int element_a = 0;         ///< element using the surface with + sign
    int element_b = 0;         ///< element using it with - sign
    int label_a = 0, label_b = 0;
};

struct OctreeMesh {
    PolyMesh mesh;
    std::vector<int> element_label;           ///< per element
    std::vector<InterfacePair> interfaces;    ///< shared surfaces between different labels
};

/// One polyhedral element per non-void leaf. Faces next to smaller leaves
/// are split into the neighbors' quads; faces with hanging edge midpoints
/// only are fanned into triangles around their center. Scaling centers are
/// the cell centroids. Throws MeshError for an unbalanced leaf set.
OctreeMesh extract_polyhedra(const std::vector<OctreeCell>& leaves, const VoxelImage& img);

/// CSV: surface,element_a,element_b,label_a,label_b,nodes (1-based ids,
/// nodes separated by ';').
std::string interface_csv(const OctreeMesh& om);

/// CSV: element,label (1-based element ids).
std::string label_csv(const OctreeMesh& om);

}  // namespace sbfem
