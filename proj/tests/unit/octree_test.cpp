#include "sbfem/error.hpp"
#include "sbfem/octree.hpp"
#include "sbfem/solvers.hpp"

#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include <unistd.h>

namespace sbfem {
namespace {

VoxelImage uniform_image(int nx, int ny, int nz, int label) {
    VoxelImage img;
    img.dims = {nx, ny, nz};
    img.labels.assign(img.voxel_count(), static_cast<std::uint8_t>(label));
    return img;
}

void set_label(VoxelImage& img, int i, int j, int k, int label) {
    img.labels[static_cast<std::size_t>(i + img.dims[0] * (j + img.dims[1] * k))] = static_cast<std::uint8_t>(label);
}

// Naive reference: recursive purity splits, then repeated pairwise balance
// splits until no touching pair differs by more than a factor of two.
class ReferenceOctree {
public:
    ReferenceOctree(const VoxelImage& img, int min_size, int max_size) : img_(img), min_(min_size) {
        std::array<int, 3> n{};
        for (int a = 0; a < 3; ++a) n[a] = (img.dims[a] + max_size - 1) / max_size;
        for (int k = 0; k < n[2]; ++k)
            for (int j = 0; j < n[1]; ++j)
                for (int i = 0; i < n[0]; ++i) subdivide({i * max_size, j * max_size, k * max_size}, max_size);
        balance();
        std::sort(leaves.begin(), leaves.end(), [](const OctreeCell& a, const OctreeCell& b) {
            return std::tie(a.origin[2], a.origin[1], a.origin[0], a.size) <
                   std::tie(b.origin[2], b.origin[1], b.origin[0], b.size);
        });
    }

    std::vector<OctreeCell> leaves;

private:
    std::map<int, int> histogram(const std::array<int, 3>& o, int s) const {
        std::map<int, int> h;
        for (int k = 0; k < s; ++k)
            for (int j = 0; j < s; ++j)
                for (int i = 0; i < s; ++i) ++h[img_.label(o[0] + i, o[1] + j, o[2] + k)];
        return h;
    }

    OctreeCell make_leaf(const std::array<int, 3>& o, int s) const {
        const auto h = histogram(o, s);
        int best = h.begin()->first;
        for (const auto& [label, count] : h)
            if (count > h.at(best)) best = label;
        return {o, s, best, h.size() > 1};
    }

    void subdivide(const std::array<int, 3>& o, int s) {
        if (s == min_ || histogram(o, s).size() == 1) {
            leaves.push_back(make_leaf(o, s));
            return;
        }
        for (const auto& c : children(o, s)) subdivide(c, s / 2);
    }

    static std::vector<std::array<int, 3>> children(const std::array<int, 3>& o, int s) {
        std::vector<std::array<int, 3>> out;
        const int h = s / 2;
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 2; ++j)
                for (int i = 0; i < 2; ++i) out.push_back({o[0] + i * h, o[1] + j * h, o[2] + k * h});
        return out;
    }

    static bool touching(const OctreeCell& a, const OctreeCell& b) {
        for (int d = 0; d < 3; ++d)
            if (a.origin[d] > b.origin[d] + b.size || b.origin[d] > a.origin[d] + a.size) return false;
        return true;
    }

    void balance() {
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t a = 0; a < leaves.size() && !changed; ++a)
                for (std::size_t b = 0; b < leaves.size() && !changed; ++b) {
                    if (leaves[a].size > 2 * leaves[b].size && touching(leaves[a], leaves[b])) {
                        const OctreeCell big = leaves[a];
                        leaves.erase(leaves.begin() + static_cast<std::ptrdiff_t>(a));
                        for (const auto& c : children(big.origin, big.size)) leaves.push_back(make_leaf(c, big.size / 2));
                        changed = true;
                    }
                }
        }
    }

    const VoxelImage& img_;
    int min_;
};

VoxelImage random_blob_image(testing::Rng& rng, int n, int labels) {
    VoxelImage img = uniform_image(n, n, n, 1);
    const int blobs = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int b = 0; b < blobs; ++b) {
        const Eigen::Vector3d c(testing::uniform(rng, 0, n), testing::uniform(rng, 0, n), testing::uniform(rng, 0, n));
        const double r = testing::uniform(rng, 1.0, n / 3.0);
        const int label = std::uniform_int_distribution<int>(0, labels)(rng);
        for (int k = 0; k < n; ++k)
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    if ((Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5) - c).norm() < r) set_label(img, i, j, k, label);
    }
    return img;
}

TEST(Octree, UniformImageIsOneLeaf) {
    const auto leaves = build_octree(uniform_image(16, 16, 16, 3), 1, 16);
    ASSERT_EQ(leaves.size(), 1u);
    EXPECT_EQ(leaves[0], (OctreeCell{{0, 0, 0}, 16, 3, false}));
}

TEST(Octree, RejectsBadSizes) {
    const VoxelImage img = uniform_image(4, 4, 4, 1);
    EXPECT_THROW(build_octree(img, 3, 4), std::invalid_argument);
    EXPECT_THROW(build_octree(img, 4, 2), std::invalid_argument);
    EXPECT_THROW(build_octree(img, 0, 2), std::invalid_argument);
}

TEST(Octree, CornerVoxelMatchesReferenceSubdivider) {
    VoxelImage img = uniform_image(16, 16, 16, 1);
    set_label(img, 0, 0, 0, 2);
    const auto leaves = build_octree(img, 2, 16);
    const ReferenceOctree ref(img, 2, 16);
    EXPECT_EQ(leaves, ref.leaves);
    EXPECT_TRUE(is_balanced(leaves));
    for (const auto& c : leaves)
        if (c.size < 8) {
            EXPECT_LT(std::max({c.origin[0], c.origin[1], c.origin[2]}), 8);
        }
    EXPECT_EQ(std::count_if(leaves.begin(), leaves.end(), [](const OctreeCell& c) { return c.mixed; }), 1);
    EXPECT_EQ(leaves.front().label, 1);  // majority in the 2^3 corner cell
}

TEST(Octree, RandomImagesMatchReferenceSubdivider) {
    testing::Rng rng(61);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = trial % 2 ? 8 : 12;
        const VoxelImage img = random_blob_image(rng, n, 3);
        const int min_size = trial % 3 == 0 ? 2 : 1;
        const auto leaves = build_octree(img, min_size, 8);
        const ReferenceOctree ref(img, min_size, 8);
        EXPECT_EQ(leaves, ref.leaves) << "trial " << trial;
        EXPECT_TRUE(is_balanced(leaves));
    }
}

TEST(Octree, HalfSpaceLeavesArePure) {
    VoxelImage img = uniform_image(16, 16, 16, 1);
    for (int k = 0; k < 16; ++k)
        for (int j = 0; j < 16; ++j)
            for (int i = 5; i < 16; ++i) set_label(img, i, j, k, 2);
    const auto leaves = build_octree(img, 1, 16);
    for (const auto& c : leaves) {
        EXPECT_FALSE(c.mixed);
        const bool left = c.origin[0] + c.size <= 5;
        EXPECT_EQ(c.label, left ? 1 : 2);
    }
}

TEST(Octree, BalanceDetection) {
    const std::vector<OctreeCell> unbalanced{{{0, 0, 0}, 4, 1, false}, {{4, 0, 0}, 1, 1, false}};
    EXPECT_FALSE(is_balanced(unbalanced));
    const std::vector<OctreeCell> corner_only{{{0, 0, 0}, 4, 1, false}, {{4, 4, 4}, 1, 1, false}};
    EXPECT_FALSE(is_balanced(corner_only));
    std::vector<OctreeCell> ok{{{0, 0, 0}, 2, 1, false}};
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 2; ++j)
            for (int i = 2; i < 4; ++i) ok.push_back({{i, j, k}, 1, 1, false});
    EXPECT_TRUE(is_balanced(ok));
    VoxelImage img = uniform_image(8, 4, 4, 1);
    EXPECT_THROW(extract_polyhedra(unbalanced, img), MeshError);
}

TEST(OctreeMesh, UniformBlockGivesEightHexahedra) {
    const VoxelImage img = uniform_image(2, 2, 2, 1);
    const auto leaves = build_octree(img, 1, 1);
    const OctreeMesh om = extract_polyhedra(leaves, img);
    ASSERT_EQ(om.mesh.num_elements(), 8);
    EXPECT_EQ(om.mesh.num_nodes(), 27);
    for (int e = 0; e < 8; ++e) {
        EXPECT_EQ(om.mesh.element_nodes(e).size(), 8u);
        EXPECT_EQ(om.mesh.element_surfaces(e).size(), 6u);
    }
    EXPECT_TRUE(validate(om.mesh).ok());
    EXPECT_TRUE(om.interfaces.empty());
}

TEST(OctreeMesh, LargeLeafBesideSmallLeaves) {
    VoxelImage img = uniform_image(4, 2, 2, 1);
    set_label(img, 3, 1, 1, 2);
    const auto leaves = build_octree(img, 1, 2);
    const OctreeMesh om = extract_polyhedra(leaves, img);
    ASSERT_TRUE(validate(om.mesh).ok()) << validate(om.mesh).summary();
    int big = -1;
    for (std::size_t i = 0, e = 0; i < leaves.size(); ++i)
        if (leaves[i].label != 0) {
            if (leaves[i].size == 2) big = static_cast<int>(e);
            ++e;
        }
    ASSERT_GE(big, 0);
    const auto nodes = om.mesh.element_nodes(big);
    EXPECT_GT(nodes.size(), 8u);
    EXPECT_LT(nodes.size(), 27u);
    // The shared face splits into four quads (face center and four edge
    // midpoints); the four side faces carry one hanging edge midpoint each
    // and are fanned around a new face center: 8 + 5 + 4 nodes and
    // 1 + 4 + 4 * 5 surfaces.
    EXPECT_EQ(nodes.size(), 17u);
    EXPECT_EQ(om.mesh.element_surfaces(big).size(), 25u);
    EXPECT_EQ(om.interfaces.size(), 3u);
}

TEST(OctreeMesh, RandomImagesProduceValidConformingMeshes) {
    testing::Rng rng(62);
    for (int trial = 0; trial < 8; ++trial) {
        VoxelImage img = random_blob_image(rng, 16, 2);
        img.spacing = 0.5;
        const auto leaves = build_octree(img, 1, 8);
        const OctreeMesh om = extract_polyhedra(leaves, img);
        const PolyMesh& mesh = om.mesh;
        const ValidationReport report = validate(mesh);
        EXPECT_TRUE(report.ok()) << report.summary();

        double volume = 0, expected = 0;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            volume += element_volume(mesh, e);
            EXPECT_LE(mesh.element_nodes(e).size(), 26u);
        }
        for (const auto& c : leaves)
            if (c.label != 0) expected += std::pow(c.size * img.spacing, 3);
        EXPECT_NEAR(volume, expected, 1e-12 * expected);

        // Interior faces appear once with each sign; faces used once lie on
        // the boundary of the non-void region.
        std::vector<int> plus(mesh.num_surfaces(), 0), minus(mesh.num_surfaces(), 0);
        for (const SurfaceRef& r : mesh.elem_conn()) ++(r.flipped ? minus : plus)[r.surface];
        std::map<std::array<int, 3>, int> owner;  // voxel -> label
        for (int s = 0; s < mesh.num_surfaces(); ++s) {
            EXPECT_LE(plus[s], 1);
            EXPECT_LE(minus[s], 1);
            EXPECT_GE(plus[s] + minus[s], 1);
            if (plus[s] + minus[s] == 2) continue;
            Eigen::Vector3d c = Eigen::Vector3d::Zero();
            for (int n : mesh.surface_nodes(s)) c += mesh.node(n);
            c /= static_cast<double>(mesh.surface_nodes(s).size()) * img.spacing;
            const Eigen::Vector3d normal = (mesh.node(mesh.surface_nodes(s)[1]) - mesh.node(mesh.surface_nodes(s)[0]))
                                               .cross(mesh.node(mesh.surface_nodes(s)[2]) - mesh.node(mesh.surface_nodes(s)[0]))
                                               .normalized();
            const Eigen::Vector3d a = c + 0.25 * normal, b = c - 0.25 * normal;
            auto voxel_label = [&](const Eigen::Vector3d& p) {
                for (const auto& leaf : leaves) {
                    bool inside = true;
                    for (int d = 0; d < 3; ++d) inside &= p[d] > leaf.origin[d] && p[d] < leaf.origin[d] + leaf.size;
                    if (inside) return leaf.label;
                }
                return 0;
            };
            EXPECT_TRUE(voxel_label(a) == 0 || voxel_label(b) == 0) << "surface " << s << " is interior but used once";
        }
        for (const InterfacePair& p : om.interfaces) {
            EXPECT_NE(p.label_a, p.label_b);
            EXPECT_EQ(om.element_label[p.element_a], p.label_a);
            EXPECT_EQ(om.element_label[p.element_b], p.label_b);
        }
    }
}

TEST(OctreeMesh, MixedSizeHomogeneousMeshPassesPatchTest) {
    VoxelImage img = uniform_image(8, 8, 8, 1);
    set_label(img, 3, 4, 4, 2);
    const auto leaves = build_octree(img, 1, 4);
    const OctreeMesh om = extract_polyhedra(leaves, img);
    AnalysisJob job;
    job.mesh = std::make_shared<PolyMesh>(om.mesh);
    job.materials = {{1e6, 0.25, 0.0}};
    job.element_material.assign(om.mesh.num_elements(), 0);
    for (int n = 0; n < om.mesh.num_nodes(); ++n) {
        const Eigen::Vector3d x = om.mesh.node(n);
        if (x.x() == 0) job.dirichlet.push_back({n, 0, 0.0});
        if (x.y() == 0) job.dirichlet.push_back({n, 1, 0.0});
        if (x.z() == 0) job.dirichlet.push_back({n, 2, 0.0});
        if (x.z() == 8) job.dirichlet.push_back({n, 2, 8e-3});
    }
    const StaticResult r = solve_static(job, form_elements(*job.mesh, job.materials, job.element_material));
    double err = 0;
    for (int n = 0; n < om.mesh.num_nodes(); ++n) {
        const Eigen::Vector3d x = om.mesh.node(n);
        const Eigen::Vector3d exact(-0.25e-3 * x.x(), -0.25e-3 * x.y(), 1e-3 * x.z());
        err = std::max(err, (r.displacement.segment<3>(3 * n) - exact).norm());
    }
    EXPECT_LT(err / 8e-3, 1e-8);
}

TEST(VoxelImage, TextAndBinaryPayloads) {
    testing::Rng rng(63);
    VoxelImage img = random_blob_image(rng, 6, 4);
    img.dims = {6, 6, 6};
    img.spacing = 1e-4;
    const auto dir = std::filesystem::temp_directory_path() / ("sbfem_voxel_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    for (bool binary : {false, true}) {
        const auto path = dir / (binary ? "img.bin" : "img.txt");
        write_voxel_image(img, path, binary);
        const VoxelImage back = read_voxel_image(path);
        EXPECT_EQ(back.dims, img.dims);
        EXPECT_EQ(back.spacing, img.spacing);
        EXPECT_EQ(back.labels, img.labels);
    }
    std::filesystem::remove_all(dir);

    std::istringstream text("2 1 1 0.5\n3 4\n");
    const VoxelImage small = parse_voxel_image(text);
    EXPECT_EQ(small.labels, (std::vector<std::uint8_t>{3, 4}));
    std::istringstream short_payload("2 2 2 1\n1 1 1\n");
    EXPECT_THROW(parse_voxel_image(short_payload), ParseError);
    std::istringstream bad_header("2 x 2 1\n");
    EXPECT_THROW(parse_voxel_image(bad_header), ParseError);
    std::istringstream out_of_range("1 1 1 1\n300\n");
    EXPECT_THROW(parse_voxel_image(out_of_range), ParseError);
}

TEST(OctreeMesh, CsvOutputs) {
    VoxelImage img = uniform_image(2, 1, 1, 1);
    set_label(img, 1, 0, 0, 2);
    const OctreeMesh om = extract_polyhedra(build_octree(img, 1, 1), img);
    EXPECT_EQ(label_csv(om), "element,label\n1,1\n2,2\n");
    const std::string ifc = interface_csv(om);
    EXPECT_EQ(ifc.substr(0, ifc.find('\n')), "surface,element_a,element_b,label_a,label_b,nodes");
    EXPECT_EQ(std::count(ifc.begin(), ifc.end(), '\n'), 2);
}

}  // namespace
}  // namespace sbfem
