#include "sbfem/octree.hpp"

#include "sbfem/error.hpp"
#include "sbfem/format.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sbfem {

// ---------------------------------------------------------------- image I/O

VoxelImage parse_voxel_image(std::istream& in, const std::string& source) {
    std::string header;
    if (!std::getline(in, header)) throw ParseError(source, 1, "", "missing header line");
    std::istringstream hs(header);
    VoxelImage img;
    std::string extra;
    if (!(hs >> img.dims[0] >> img.dims[1] >> img.dims[2] >> img.spacing))
        throw ParseError(source, 1, header, "header must be 'nx ny nz spacing'");
    if (hs >> extra) throw ParseError(source, 1, extra, "unexpected token in header");
    for (int d : img.dims)
        if (d <= 0) throw ParseError(source, 1, header, "image dimensions must be positive");
    if (!(img.spacing > 0.0)) throw ParseError(source, 1, header, "voxel spacing must be positive");

    const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t n = img.voxel_count();
    const bool textual = std::all_of(payload.begin(), payload.end(), [](char c) {
        return (c >= '0' && c <= '9') || c == ' ' || c == '\t' || c == '\n' || c == '\r';
    });
    if (textual) {
        img.labels.reserve(n);
        std::size_t line = 2, pos = 0;
        while (pos < payload.size()) {
            const char c = payload[pos];
            if (c == '\n') ++line;
            if (c < '0' || c > '9') {
                ++pos;
                continue;
            }
            unsigned v = 0;
            auto [ptr, ec] = std::from_chars(payload.data() + pos, payload.data() + payload.size(), v);
            const std::string token(payload.data() + pos, ptr);
            if (ec != std::errc() || v > 255) throw ParseError(source, line, token, "label must be in 0..255");
            img.labels.push_back(static_cast<std::uint8_t>(v));
            pos = static_cast<std::size_t>(ptr - payload.data());
        }
        if (img.labels.size() == n) return img;
        img.labels.clear();
    }
    if (payload.size() != n)
        throw ParseError(source, 2, "", "payload has " + std::to_string(payload.size()) + " bytes, expected " +
                                            std::to_string(n) + " raw labels or as many integers");
    img.labels.assign(payload.begin(), payload.end());
    return img;
}

VoxelImage read_voxel_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open image file " + path.string());
    return parse_voxel_image(in, path.string());
}

void write_voxel_image(const VoxelImage& img, const std::filesystem::path& path, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write image file " + path.string());
    out << img.dims[0] << ' ' << img.dims[1] << ' ' << img.dims[2] << ' ' << format_number(img.spacing) << '\n';
    if (binary) {
        out.write(reinterpret_cast<const char*>(img.labels.data()),
                  static_cast<std::streamsize>(img.labels.size()));
    } else {
        for (std::size_t i = 0; i < img.labels.size(); ++i) {
            out << static_cast<int>(img.labels[i]);
            out << ((i + 1) % static_cast<std::size_t>(img.dims[0]) == 0 ? '\n' : ' ');
        }
    }
    if (!out) throw Error("failed writing image file " + path.string());
}

// ---------------------------------------------------------------- octree

namespace {

using LeafKey = std::array<int, 4>;  // size, x, y, z

struct LeafData {
    int label = 0;
    bool mixed = false;
};

class LeafSet {
public:
    LeafSet(int min_size, int max_size, std::array<int, 3> extent)
        : min_(min_size), max_(max_size), extent_(extent) {}

    void insert(const std::array<int, 3>& o, int size, LeafData d) { map_[{size, o[0], o[1], o[2]}] = d; }

    bool inside(const std::array<int, 3>& p) const {
        for (int a = 0; a < 3; ++a)
            if (p[a] < 0 || p[a] >= extent_[a]) return false;
        return true;
    }

    /// Leaf containing voxel p, or end().
    std::map<LeafKey, LeafData>::iterator containing(const std::array<int, 3>& p) {
        for (int s = min_; s <= max_; s *= 2) {
            auto it = map_.find({s, p[0] / s * s, p[1] / s * s, p[2] / s * s});
            if (it != map_.end()) return it;
        }
        return map_.end();
    }

    void split(std::map<LeafKey, LeafData>::iterator it) {
        const auto [s, x, y, z] = it->first;
        const LeafData d{it->second.label, false};
        map_.erase(it);
        const int h = s / 2;
        for (int c = 0; c < 8; ++c)
            insert({x + (c & 1) * h, y + ((c >> 1) & 1) * h, z + ((c >> 2) & 1) * h}, h, d);
    }

    std::map<LeafKey, LeafData>& map() { return map_; }

private:
    int min_, max_;
    std::array<int, 3> extent_;
    std::map<LeafKey, LeafData> map_;
};

void subdivide(const VoxelImage& img, const std::array<int, 3>& o, int size, int min_size, LeafSet& leaves) {
    const int first = img.label(o[0], o[1], o[2]);
    bool pure = true;
    for (int k = o[2]; k < o[2] + size && pure; ++k)
        for (int j = o[1]; j < o[1] + size && pure; ++j)
            for (int i = o[0]; i < o[0] + size; ++i)
                if (img.label(i, j, k) != first) {
                    pure = false;
                    break;
                }
    if (pure) {
        leaves.insert(o, size, {first, false});
        return;
    }
    if (size == min_size) {
        std::array<int, 256> count{};
        for (int k = o[2]; k < o[2] + size; ++k)
            for (int j = o[1]; j < o[1] + size; ++j)
                for (int i = o[0]; i < o[0] + size; ++i) ++count[img.label(i, j, k)];
        // Majority label; max_element returns the first maximum, i.e. the smallest label.
        const int label = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
        leaves.insert(o, size, {label, true});
        return;
    }
    const int h = size / 2;
    for (int c = 0; c < 8; ++c)
        subdivide(img, {o[0] + (c & 1) * h, o[1] + ((c >> 1) & 1) * h, o[2] + ((c >> 2) & 1) * h}, h,
                  min_size, leaves);
}

constexpr std::array<std::array<int, 3>, 26> neighbor_directions() {
    std::array<std::array<int, 3>, 26> dirs{};
    int n = 0;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (dx != 0 || dy != 0 || dz != 0) dirs[n++] = {dx, dy, dz};
    return dirs;
}

std::vector<OctreeCell> sorted_cells(const std::map<LeafKey, LeafData>& map) {
    std::vector<OctreeCell> cells;
    cells.reserve(map.size());
    for (const auto& [k, d] : map) cells.push_back({{k[1], k[2], k[3]}, k[0], d.label, d.mixed});
    std::sort(cells.begin(), cells.end(), [](const OctreeCell& a, const OctreeCell& b) {
        return std::tie(a.origin[2], a.origin[1], a.origin[0], a.size) <
               std::tie(b.origin[2], b.origin[1], b.origin[0], b.size);
    });
    return cells;
}

}  // namespace

std::vector<OctreeCell> build_octree(const VoxelImage& img, int min_size, int max_size) {
    if (min_size < 1 || max_size < min_size || !std::has_single_bit(static_cast<unsigned>(min_size)) ||
        !std::has_single_bit(static_cast<unsigned>(max_size)))
        throw std::invalid_argument("octree sizes need 1 <= min <= max, both powers of two");
    std::array<int, 3> extent{};
    for (int a = 0; a < 3; ++a) extent[a] = (img.dims[a] + max_size - 1) / max_size * max_size;

    LeafSet leaves(min_size, max_size, extent);
    for (int z = 0; z < extent[2]; z += max_size)
        for (int y = 0; y < extent[1]; y += max_size)
            for (int x = 0; x < extent[0]; x += max_size) subdivide(img, {x, y, z}, max_size, min_size, leaves);

    // Ripple balancing: split any leaf more than twice the size of a touching leaf.
    constexpr auto dirs = neighbor_directions();
    for (bool changed = true; changed;) {
        changed = false;
        std::vector<LeafKey> keys;
        keys.reserve(leaves.map().size());
        for (const auto& kv : leaves.map()) keys.push_back(kv.first);
        for (const auto& key : keys) {
            if (!leaves.map().count(key)) continue;
            const int s = key[0];
            for (const auto& d : dirs) {
                const std::array<int, 3> q{key[1] + d[0] * s, key[2] + d[1] * s, key[3] + d[2] * s};
                if (!leaves.inside(q)) continue;
                for (auto it = leaves.containing(q); it->first[0] > 2 * s; it = leaves.containing(q)) {
                    leaves.split(it);
                    changed = true;
                }
            }
        }
    }
    return sorted_cells(leaves.map());
}

bool is_balanced(const std::vector<OctreeCell>& leaves) {
    if (leaves.empty()) return true;
    int min_size = leaves.front().size, max_size = min_size;
    std::array<int, 3> extent{0, 0, 0};
    for (const auto& c : leaves) {
        min_size = std::min(min_size, c.size);
        max_size = std::max(max_size, c.size);
        for (int a = 0; a < 3; ++a) extent[a] = std::max(extent[a], c.origin[a] + c.size);
    }
    LeafSet set(min_size, max_size, extent);
    for (const auto& c : leaves) set.insert(c.origin, c.size, {c.label, c.mixed});
    constexpr auto dirs = neighbor_directions();
    for (const auto& c : leaves)
        for (const auto& d : dirs) {
            const std::array<int, 3> q{c.origin[0] + d[0] * c.size, c.origin[1] + d[1] * c.size,
                                       c.origin[2] + d[2] * c.size};
            if (!set.inside(q)) continue;
            auto it = set.containing(q);
            if (it == set.map().end() || it->first[0] > 2 * c.size) return false;
        }
    return true;
}

// ---------------------------------------------------------------- extraction

namespace {

using Point = std::array<int, 3>;  // doubled voxel coordinates

struct FaceFrame {
    int a, b, c;  // normal axis and in-plane axes, (a, b, c) cyclic
    int side;     // 0 = low, 1 = high
};

// Point at in-plane parameters (u, v) in half-cell units (0, 1, 2) of the
// face of a cell at doubled origin o with doubled size s2.
Point face_point(const Point& o, int s2, const FaceFrame& f, int u, int v) {
    Point p = o;
    p[f.a] += f.side * s2;
    p[f.b] += u * s2 / 2;
    p[f.c] += v * s2 / 2;
    return p;
}

}  // namespace

OctreeMesh extract_polyhedra(const std::vector<OctreeCell>& leaves, const VoxelImage& img) {
    if (!is_balanced(leaves)) throw MeshError("octree leaves are not 2:1 balanced");

    // Corners of every leaf, void included, decide how faces split.
    std::set<Point> corners;
    for (const auto& c : leaves)
        for (int k = 0; k < 8; ++k)
            corners.insert({2 * (c.origin[0] + (k & 1) * c.size), 2 * (c.origin[1] + ((k >> 1) & 1) * c.size),
                            2 * (c.origin[2] + ((k >> 2) & 1) * c.size)});

    std::map<Point, int> node_id;
    std::vector<Point> node_points;
    auto node_of = [&](const Point& p) {
        auto [it, inserted] = node_id.emplace(p, static_cast<int>(node_points.size()));
        if (inserted) node_points.push_back(p);
        return it->second;
    };

    std::map<std::vector<int>, int> surface_id;  // sorted node ids -> surface
    std::vector<int> surf_conn, surf_index, surface_owner;
    std::vector<SurfaceRef> elem_conn;
    std::vector<int> elem_index;
    std::vector<Eigen::Vector3d> centers;
    OctreeMesh out;

    auto add_surface = [&](const std::vector<int>& nodes, int element) {
        std::vector<int> key = nodes;
        std::sort(key.begin(), key.end());
        auto [it, inserted] = surface_id.emplace(key, static_cast<int>(surface_owner.size()));
        if (inserted) {
            surf_conn.insert(surf_conn.end(), nodes.begin(), nodes.end());
            surf_index.push_back(static_cast<int>(surf_conn.size()));
            surface_owner.push_back(element);
            elem_conn.push_back({it->second, false});
            return;
        }
        const int owner = surface_owner[it->second];
        if (owner < 0) throw MeshError("octree surface shared by more than two elements");
        surface_owner[it->second] = -1;
        elem_conn.push_back({it->second, true});
        const int la = out.element_label[owner], lb = out.element_label[element];
        if (la != lb) out.interfaces.push_back({it->second, owner, element, la, lb});
    };

    for (const auto& cell : leaves) {
        if (cell.label == 0) continue;
        const int element = static_cast<int>(out.element_label.size());
        out.element_label.push_back(cell.label);
        const Point o{2 * cell.origin[0], 2 * cell.origin[1], 2 * cell.origin[2]};
        const int s2 = 2 * cell.size;
        for (int a = 0; a < 3; ++a)
            for (int side = 0; side < 2; ++side) {
                const FaceFrame f{a, (a + 1) % 3, (a + 2) % 3, side};
                // Perimeter in (u, v) half-steps, counter-clockwise about +a.
                static constexpr int perimeter[8][2] = {{0, 0}, {1, 0}, {2, 0}, {2, 1},
                                                        {2, 2}, {1, 2}, {0, 2}, {0, 1}};
                auto at = [&](int u, int v) { return face_point(o, s2, f, u, v); };
                // Outward orientation: keep the order on the high side, reverse on the low side.
                auto oriented = [&](std::vector<int> nodes) {
                    if (side == 0) std::reverse(nodes.begin(), nodes.end());
                    return nodes;
                };
                if (corners.count(at(1, 1))) {
                    for (int q = 0; q < 4; ++q) {
                        const int u0 = (q & 1), v0 = (q >> 1);
                        add_surface(oriented({node_of(at(u0, v0)), node_of(at(u0 + 1, v0)),
                                              node_of(at(u0 + 1, v0 + 1)), node_of(at(u0, v0 + 1))}),
                                    element);
                    }
                    continue;
                }
                std::vector<Point> ring;
                bool hanging = false;
                for (const auto& uv : perimeter) {
                    const bool corner = uv[0] != 1 && uv[1] != 1;
                    if (corner) {
                        ring.push_back(at(uv[0], uv[1]));
                    } else if (corners.count(at(uv[0], uv[1]))) {
                        ring.push_back(at(uv[0], uv[1]));
                        hanging = true;
                    }
                }
                if (!hanging) {
                    add_surface(oriented({node_of(ring[0]), node_of(ring[1]), node_of(ring[2]), node_of(ring[3])}),
                                element);
                    continue;
                }
                const int center = node_of(at(1, 1));
                for (std::size_t i = 0; i < ring.size(); ++i) {
                    const int p = node_of(ring[i]), q = node_of(ring[(i + 1) % ring.size()]);
                    add_surface(side == 1 ? std::vector<int>{center, p, q} : std::vector<int>{center, q, p},
                                element);
                }
            }
        elem_index.push_back(static_cast<int>(elem_conn.size()));
        centers.emplace_back(img.spacing * (cell.origin[0] + 0.5 * cell.size),
                             img.spacing * (cell.origin[1] + 0.5 * cell.size),
                             img.spacing * (cell.origin[2] + 0.5 * cell.size));
    }

    Eigen::MatrixX3d nodes(static_cast<Eigen::Index>(node_points.size()), 3);
    for (std::size_t i = 0; i < node_points.size(); ++i)
        for (int a = 0; a < 3; ++a) nodes(static_cast<Eigen::Index>(i), a) = 0.5 * img.spacing * node_points[i][a];
    Eigen::MatrixX3d ctr(static_cast<Eigen::Index>(centers.size()), 3);
    for (std::size_t e = 0; e < centers.size(); ++e) ctr.row(static_cast<Eigen::Index>(e)) = centers[e].transpose();
    out.mesh = PolyMesh(std::move(nodes), std::move(surf_conn), std::move(surf_index), std::move(elem_conn),
                        std::move(elem_index), std::move(ctr));
    return out;
}

std::string interface_csv(const OctreeMesh& om) {
    std::string s = "surface,element_a,element_b,label_a,label_b,nodes\n";
    for (const auto& p : om.interfaces) {
        s += std::to_string(p.surface + 1) + ',' + std::to_string(p.element_a + 1) + ',' +
             std::to_string(p.element_b + 1) + ',' + std::to_string(p.label_a) + ',' + std::to_string(p.label_b) + ',';
        const auto nodes = om.mesh.surface_nodes(p.surface);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(nodes[i] + 1);
        }
        s += '\n';
    }
    return s;
}

std::string label_csv(const OctreeMesh& om) {
    std::string s = "element,label\n";
    for (std::size_t e = 0; e < om.element_label.size(); ++e)
        s += std::to_string(e + 1) + ',' + std::to_string(om.element_label[e]) + '\n';
    return s;
}

}  // namespace sbfem
