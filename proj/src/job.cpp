#include "sbfem/job.hpp"

#include "sbfem/error.hpp"
#include "sbfem/format.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace sbfem {

namespace {

std::string trim(std::string_view v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = v.find_last_not_of(" \t\r");
    return std::string(v.substr(b, e - b + 1));
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

struct DataLine {
    std::size_t line = 0;
    std::string text;
    std::vector<std::string> fields;  // split on commas and whitespace
};

struct Block {
    std::size_t line = 0;
    std::string keyword;                        // upper case, single spaces
    std::map<std::string, std::string> params;  // upper-case keys
    std::vector<DataLine> data;
};

std::vector<std::string> split_fields(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

const std::set<std::string>& known_keywords() {
    static const std::set<std::string> k{"MESH",   "MATERIAL", "ELSET",  "NSET",      "SURFACE", "SOLID SECTION",
                                         "BOUNDARY", "CLOAD",  "DLOAD",  "AMPLITUDE", "STEP",    "DAMPING",
                                         "OUTPUT"};
    return k;
}

std::vector<Block> read_blocks(std::istream& in, const std::string& source) {
    std::vector<Block> blocks;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (raw.rfind("**", 0) == 0) continue;  // keyword-format comment line
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string text = trim(raw);
        if (text.empty()) continue;
        if (text[0] == '*') {
            Block b;
            b.line = line;
            std::vector<std::string> parts;
            std::size_t start = 1;
            while (true) {
                const auto comma = text.find(',', start);
                parts.push_back(trim(std::string_view(text).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            const auto words = split_fields(parts[0]);
            if (words.empty()) throw ParseError(source, line, text, "empty keyword");
            std::string kw;
            for (const auto& w : words) kw += (kw.empty() ? "" : " ") + upper(w);
            b.keyword = kw;
            // Inline data: "*MATERIAL 1e6, 0.25, 2000" carries its data line
            // after the keyword instead of on the next line.
            if (words.size() > 1 && !known_keywords().count(kw) && known_keywords().count(upper(words[0]))) {
                b.keyword = upper(words[0]);
                const std::string rest = trim(std::string_view(text).substr(text.find(words[0]) + words[0].size()));
                blocks.push_back(std::move(b));
                blocks.back().data.push_back({line, rest, split_fields(rest)});
                continue;
            }
            for (std::size_t i = 1; i < parts.size(); ++i) {
                if (parts[i].empty()) continue;
                const auto eq = parts[i].find('=');
                const std::string key = upper(trim(std::string_view(parts[i]).substr(0, eq)));
                const std::string value = eq == std::string::npos ? "" : trim(std::string_view(parts[i]).substr(eq + 1));
                if (b.params.count(key)) throw ParseError(source, line, key, "parameter given twice");
                b.params[key] = value;
            }
            blocks.push_back(std::move(b));
        } else {
            if (blocks.empty()) throw ParseError(source, line, text, "data line before the first keyword");
            blocks.back().data.push_back({line, text, split_fields(text)});
        }
    }
    return blocks;
}

class Interpreter {
public:
    Interpreter(std::string source, std::filesystem::path base) : source_(std::move(source)), base_(std::move(base)) {}

    [[noreturn]] void fail(std::size_t line, const std::string& token, const std::string& what) const {
        throw ParseError(source_, line, token, what);
    }

    double number(const DataLine& d, std::size_t i, const char* what) const {
        if (i >= d.fields.size()) fail(d.line, d.text, std::string("missing ") + what);
        const std::string& f = d.fields[i];
        double v = 0.0;
        const char* first = f.data();
        if (!f.empty() && f[0] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), v);
        if (ec != std::errc() || ptr != f.data() + f.size()) fail(d.line, f, std::string("expected a number for ") + what);
        return v;
    }

    int integer(const std::string& f, std::size_t line, const char* what) const {
        int v = 0;
        auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || ptr != f.data() + f.size()) fail(line, f, std::string("expected an integer for ") + what);
        return v;
    }

    static bool is_integer(const std::string& f) {
        return !f.empty() && std::all_of(f.begin(), f.end(), [](char c) { return c >= '0' && c <= '9'; });
    }

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_ / path;
    }

    void check_fields(const DataLine& d, std::size_t lo, std::size_t hi) const {
        if (d.fields.size() < lo || d.fields.size() > hi)
            fail(d.line, d.text, "expected " + std::to_string(lo) + (lo == hi ? "" : " to " + std::to_string(hi)) +
                                     " fields, found " + std::to_string(d.fields.size()));
    }

    const std::string& param(const Block& b, const char* key) const {
        auto it = b.params.find(key);
        if (it == b.params.end() || it->second.empty()) fail(b.line, b.keyword, std::string("missing parameter ") + key + "=");
        return it->second;
    }

    // 1-based id list with optional GENERATE triples, converted to 0-based.
    std::vector<int> id_list(const Block& b, int count, const char* what) const {
        std::vector<int> ids;
        const bool generate = b.params.count("GENERATE") > 0;
        for (const auto& d : b.data) {
            if (generate) {
                check_fields(d, 2, 3);
                const int first = integer(d.fields[0], d.line, what);
                const int last = integer(d.fields[1], d.line, what);
                const int inc = d.fields.size() > 2 ? integer(d.fields[2], d.line, "increment") : 1;
                if (inc <= 0 || last < first) fail(d.line, d.text, "GENERATE needs first <= last and a positive increment");
                for (int i = first; i <= last; i += inc) ids.push_back(checked_id(i, count, d.line, what));
            } else {
                for (const auto& f : d.fields) ids.push_back(checked_id(integer(f, d.line, what), count, d.line, what));
            }
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    }

    int checked_id(int id, int count, std::size_t line, const char* what) const {
        if (id < 1 || id > count)
            fail(line, std::to_string(id), std::string(what) + " id outside 1.." + std::to_string(count));
        return id - 1;
    }

    std::array<double, 6> box(const Block& b) const {
        if (b.data.size() != 1) fail(b.line, b.keyword, "BOX expects one data line 'xmin, ymin, zmin, xmax, ymax, zmax'");
        const auto& d = b.data[0];
        check_fields(d, 6, 6);
        std::array<double, 6> v{};
        for (std::size_t i = 0; i < 6; ++i) v[i] = number(d, i, "box bound");
        return v;
    }

    bool in_box(const Eigen::Vector3d& x, const std::array<double, 6>& bx, double tol) const {
        for (int a = 0; a < 3; ++a)
            if (x[a] < bx[a] - tol || x[a] > bx[a + 3] + tol) return false;
        return true;
    }

    double mesh_tolerance(const PolyMesh& mesh) const {
        const auto& x = mesh.node_coords();
        const double size = (x.colwise().maxCoeff() - x.colwise().minCoeff()).norm();
        return 1e-9 * std::max(size, 1.0e-300);
    }

    // Node targets: integer id or node set name.
    std::vector<int> nodes_of(const JobFile& job, const std::string& target, std::size_t line) const {
        if (is_integer(target)) return {checked_id(integer(target, line, "node"), job.analysis.mesh->num_nodes(), line, "node")};
        auto it = job.node_sets.find(upper(target));
        if (it == job.node_sets.end()) fail(line, target, "unknown node set");
        return it->second;
    }

    std::vector<int> surfaces_of(const JobFile& job, const std::string& target, std::size_t line) const {
        if (is_integer(target))
            return {checked_id(integer(target, line, "surface"), job.analysis.mesh->num_surfaces(), line, "surface")};
        auto it = job.surface_sets.find(upper(target));
        if (it == job.surface_sets.end()) fail(line, target, "unknown surface set");
        return it->second;
    }

    int dof(const std::string& f, std::size_t line) const {
        const int d = integer(f, line, "dof");
        if (d < 1 || d > 3) fail(line, f, "dof must be 1, 2 or 3");
        return d - 1;
    }

    const std::string source_;
    const std::filesystem::path base_;
};

}  // namespace

JobFile parse_job_text(std::istream& in, const std::filesystem::path& source) {
    const std::string src = source.string();
    const std::vector<Block> blocks = read_blocks(in, src);
    Interpreter ip(src, source.has_parent_path() ? source.parent_path() : std::filesystem::path("."));

    JobFile job;
    job.source = source;
    std::map<std::string, std::size_t> singleton_line;
    for (const auto& b : blocks) {
        if (!known_keywords().count(b.keyword)) ip.fail(b.line, "*" + b.keyword, "unknown keyword");
        for (const char* s : {"MESH", "STEP", "DAMPING", "AMPLITUDE"})
            if (b.keyword == s) {
                if (singleton_line.count(s))
                    ip.fail(b.line, "*" + b.keyword,
                            "duplicate block (first given on line " + std::to_string(singleton_line[s]) + ")");
                singleton_line[s] = b.line;
            }
    }
    if (!singleton_line.count("MESH")) ip.fail(0, "", "job has no *MESH block");
    if (!singleton_line.count("STEP")) ip.fail(0, "", "job has no *STEP block");

    // Pass 1: mesh, definitions and step data.
    for (const auto& b : blocks) {
        if (b.keyword != "MESH") continue;
        std::string path;
        if (b.params.count("FILE")) path = b.params.at("FILE");
        else if (b.data.size() == 1) path = b.data[0].text;
        else ip.fail(b.line, "*MESH", "expected one data line with the mesh path");
        job.mesh_path = ip.resolve(path);
        try {
            job.analysis.mesh = std::make_shared<const PolyMesh>(read_mesh_file(job.mesh_path));
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            ip.fail(b.line, path, e.what());
        }
    }
    const PolyMesh& mesh = *job.analysis.mesh;
    std::vector<int> all(static_cast<std::size_t>(mesh.num_elements()));
    for (int e = 0; e < mesh.num_elements(); ++e) all[e] = e;
    job.element_sets["ALL"] = all;

    std::map<std::string, int> material_index;
    std::map<std::string, std::size_t> set_line;
    for (const auto& b : blocks) {
        if (b.keyword == "MATERIAL") {
            std::string name = b.params.count("NAME") ? upper(b.params.at("NAME")) : "";
            if (name.empty()) name = "MATERIAL-" + std::to_string(job.material_names.size() + 1);
            if (material_index.count(name)) ip.fail(b.line, name, "material defined twice");
            if (b.data.size() != 1) ip.fail(b.line, "*MATERIAL", "expected one data line 'E, nu[, rho]'");
            const auto& d = b.data[0];
            ip.check_fields(d, 2, 3);
            ElasticMaterial m{ip.number(d, 0, "Young's modulus"), ip.number(d, 1, "Poisson's ratio"),
                              d.fields.size() > 2 ? ip.number(d, 2, "density") : 0.0};
            try {
                m.check();
            } catch (const std::invalid_argument& e) {
                ip.fail(d.line, d.text, e.what());
            }
            material_index[name] = static_cast<int>(job.analysis.materials.size());
            job.analysis.materials.push_back(m);
            job.material_names.push_back(name);
        } else if (b.keyword == "ELSET" || b.keyword == "NSET" || b.keyword == "SURFACE") {
            const std::string name = upper(ip.param(b, "NAME"));
            if (set_line.count(b.keyword + ":" + name) || (b.keyword == "ELSET" && name == "ALL"))
                ip.fail(b.line, name, "set defined twice");
            set_line[b.keyword + ":" + name] = b.line;
            std::vector<int> ids;
            if (b.keyword == "ELSET" && b.params.count("LABELS")) {
                const int wanted = ip.integer(ip.param(b, "LABEL"), b.line, "label");
                const auto path = ip.resolve(b.params.at("LABELS"));
                std::ifstream lf(path);
                if (!lf) ip.fail(b.line, path.string(), "cannot open label file");
                std::string row;
                std::size_t ln = 0;
                while (std::getline(lf, row)) {
                    ++ln;
                    const auto f = split_fields(row);
                    if (f.size() != 2 || !Interpreter::is_integer(f[0])) continue;  // header
                    if (ip.integer(f[1], b.line, "label") == wanted)
                        ids.push_back(ip.checked_id(ip.integer(f[0], b.line, "element"), mesh.num_elements(), b.line, "element"));
                }
            } else if (b.params.count("BOX")) {
                const auto bx = ip.box(b);
                const double tol = ip.mesh_tolerance(mesh);
                if (b.keyword == "NSET") {
                    for (int n = 0; n < mesh.num_nodes(); ++n)
                        if (ip.in_box(mesh.node(n), bx, tol)) ids.push_back(n);
                } else if (b.keyword == "SURFACE") {
                    for (int s = 0; s < mesh.num_surfaces(); ++s) {
                        const auto nodes = mesh.surface_nodes(s);
                        if (std::all_of(nodes.begin(), nodes.end(), [&](int n) { return ip.in_box(mesh.node(n), bx, tol); }))
                            ids.push_back(s);
                    }
                } else {
                    for (int e = 0; e < mesh.num_elements(); ++e)
                        if (ip.in_box(mesh.scaling_center(e), bx, tol)) ids.push_back(e);
                }
            } else {
                const int count = b.keyword == "ELSET" ? mesh.num_elements()
                                  : b.keyword == "NSET" ? mesh.num_nodes()
                                                        : mesh.num_surfaces();
                ids = ip.id_list(b, count, b.keyword == "ELSET" ? "element" : b.keyword == "NSET" ? "node" : "surface");
            }
            if (ids.empty()) ip.fail(b.line, name, "set is empty");
            auto& target = b.keyword == "ELSET" ? job.element_sets : b.keyword == "NSET" ? job.node_sets : job.surface_sets;
            target[name] = std::move(ids);
        } else if (b.keyword == "AMPLITUDE") {
            const std::string type = upper(b.params.count("TYPE") ? b.params.at("TYPE") : "TABULAR");
            Amplitude& a = job.analysis.amplitude;
            if (type == "SINE") {
                if (b.data.size() != 1) ip.fail(b.line, "*AMPLITUDE", "expected one data line 'amplitude, frequency'");
                ip.check_fields(b.data[0], 2, 2);
                a.kind = Amplitude::Kind::Sine;
                a.scale = ip.number(b.data[0], 0, "amplitude");
                a.frequency = ip.number(b.data[0], 1, "frequency");
            } else if (type == "CONSTANT") {
                if (b.data.size() != 1) ip.fail(b.line, "*AMPLITUDE", "expected one data line with the value");
                ip.check_fields(b.data[0], 1, 1);
                a.kind = Amplitude::Kind::Constant;
                a.scale = ip.number(b.data[0], 0, "value");
            } else if (type == "TABULAR") {
                a.kind = Amplitude::Kind::Tabular;
                std::vector<double> v;
                for (const auto& d : b.data)
                    for (std::size_t i = 0; i < d.fields.size(); ++i) v.push_back(ip.number(d, i, "table entry"));
                if (v.empty() || v.size() % 2) ip.fail(b.line, "*AMPLITUDE", "TABULAR expects (time, value) pairs");
                for (std::size_t i = 0; i < v.size(); i += 2) {
                    if (!a.table.empty() && !(v[i] > a.table.back().first))
                        ip.fail(b.line, "*AMPLITUDE", "TABULAR times must increase");
                    a.table.emplace_back(v[i], v[i + 1]);
                }
            } else {
                ip.fail(b.line, type, "amplitude TYPE must be SINE, TABULAR or CONSTANT");
            }
        } else if (b.keyword == "STEP") {
            if (b.data.size() != 1) ip.fail(b.line, "*STEP", "expected one data line: STATIC | MODAL, n | TRANSIENT, dt, t_end[, alpha]");
            const auto& d = b.data[0];
            const std::string kind = upper(d.fields.at(0));
            if (kind == "STATIC") {
                ip.check_fields(d, 1, 1);
                job.analysis.step = StaticStep{};
            } else if (kind == "MODAL") {
                ip.check_fields(d, 2, 2);
                const int n = ip.integer(d.fields[1], d.line, "mode count");
                if (n < 1) ip.fail(d.line, d.fields[1], "mode count must be positive");
                job.analysis.step = ModalStep{n};
            } else if (kind == "TRANSIENT") {
                ip.check_fields(d, 3, 4);
                TransientStep t;
                t.dt_max = ip.number(d, 1, "time step");
                t.t_end = ip.number(d, 2, "end time");
                if (d.fields.size() > 3) t.hht_alpha = ip.number(d, 3, "HHT alpha");
                if (!(t.dt_max > 0.0) || !(t.t_end > 0.0)) ip.fail(d.line, d.text, "time step and end time must be positive");
                if (!(t.hht_alpha >= -1.0 / 3.0 && t.hht_alpha <= 0.0)) ip.fail(d.line, d.text, "HHT alpha must lie in [-1/3, 0]");
                job.analysis.step = t;
            } else {
                ip.fail(d.line, d.fields[0], "step must be STATIC, MODAL or TRANSIENT");
            }
        } else if (b.keyword == "DAMPING") {
            if (b.data.size() != 1) ip.fail(b.line, "*DAMPING", "expected one data line 'alpha, beta'");
            ip.check_fields(b.data[0], 2, 2);
            job.analysis.rayleigh_alpha = ip.number(b.data[0], 0, "mass-proportional factor");
            job.analysis.rayleigh_beta = ip.number(b.data[0], 1, "stiffness-proportional factor");
        }
    }

    // Pass 2: everything that references definitions.
    std::vector<int> element_material(static_cast<std::size_t>(mesh.num_elements()), -1);
    bool any_section = false;
    for (const auto& b : blocks) {
        if (b.keyword == "SOLID SECTION") {
            any_section = true;
            const std::string es = upper(ip.param(b, "ELSET"));
            const std::string mat = upper(ip.param(b, "MATERIAL"));
            auto eit = job.element_sets.find(es);
            if (eit == job.element_sets.end()) ip.fail(b.line, es, "unknown element set");
            auto mit = material_index.find(mat);
            if (mit == material_index.end()) ip.fail(b.line, mat, "unknown material");
            for (int e : eit->second) element_material[e] = mit->second;
        } else if (b.keyword == "BOUNDARY") {
            for (const auto& d : b.data) {
                ip.check_fields(d, 2, 4);
                const auto nodes = ip.nodes_of(job, d.fields[0], d.line);
                int first = 0, last = 2;
                double value = 0.0;
                const std::string tag = upper(d.fields[1]);
                if (tag == "ENCASTRE" || tag == "PINNED") {
                    ip.check_fields(d, 2, 2);
                } else if (tag == "XSYMM" || tag == "YSYMM" || tag == "ZSYMM") {
                    ip.check_fields(d, 2, 2);
                    first = last = tag[0] - 'X';
                } else {
                    first = ip.dof(d.fields[1], d.line);
                    last = d.fields.size() > 2 ? ip.dof(d.fields[2], d.line) : first;
                    if (last < first) ip.fail(d.line, d.text, "last dof before first dof");
                    if (d.fields.size() > 3) value = ip.number(d, 3, "prescribed displacement");
                }
                for (int n : nodes)
                    for (int k = first; k <= last; ++k) job.analysis.dirichlet.push_back({n, k, value});
            }
        } else if (b.keyword == "CLOAD") {
            for (const auto& d : b.data) {
                ip.check_fields(d, 3, 3);
                const auto nodes = ip.nodes_of(job, d.fields[0], d.line);
                const int k = ip.dof(d.fields[1], d.line);
                const double value = ip.number(d, 2, "load");
                for (int n : nodes) job.analysis.point_loads.push_back({n, k, value});
            }
        } else if (b.keyword == "DLOAD") {
            for (const auto& d : b.data) {
                ip.check_fields(d, 4, 4);
                const auto surfaces = ip.surfaces_of(job, d.fields[0], d.line);
                const Eigen::Vector3d t(ip.number(d, 1, "traction x"), ip.number(d, 2, "traction y"),
                                        ip.number(d, 3, "traction z"));
                for (int s : surfaces) job.analysis.tractions.push_back({s, t});
            }
        } else if (b.keyword == "OUTPUT") {
            for (const auto& d : b.data) {
                const std::string kind = upper(d.fields.at(0));
                if (kind == "MONITOR") {
                    ip.check_fields(d, 3, 3);
                    const auto nodes = ip.nodes_of(job, d.fields[1], d.line);
                    const int k = ip.dof(d.fields[2], d.line);
                    for (int n : nodes) job.analysis.monitors.push_back({n, k});
                    continue;
                }
                const auto comma = d.text.find(',');
                const std::string path = trim(std::string_view(d.text).substr(comma == std::string::npos ? d.text.size() : comma + 1));
                if (path.empty()) ip.fail(d.line, d.text, "output needs a path");
                OutputRequest req;
                req.path = ip.resolve(path);
                if (kind == "VTU") req.kind = OutputKind::Vtu;
                else if (kind == "CSV") req.kind = OutputKind::Csv;
                else if (kind == "ENERGY") req.kind = OutputKind::Energy;
                else ip.fail(d.line, d.fields[0], "output must be VTU, CSV, ENERGY or MONITOR");
                if (req.kind == OutputKind::Energy && !std::holds_alternative<TransientStep>(job.analysis.step))
                    ip.fail(d.line, d.fields[0], "ENERGY output needs a transient step");
                job.outputs.push_back(req);
            }
        }
    }

    if (!any_section && job.analysis.materials.size() == 1) {
        std::fill(element_material.begin(), element_material.end(), 0);
    } else {
        for (int e = 0; e < mesh.num_elements(); ++e)
            if (element_material[e] < 0) ip.fail(0, "", "element " + std::to_string(e + 1) + " has no *SOLID SECTION");
    }
    job.analysis.element_material = std::move(element_material);
    if (std::holds_alternative<TransientStep>(job.analysis.step) && job.analysis.monitors.empty() &&
        std::any_of(job.outputs.begin(), job.outputs.end(), [](const OutputRequest& r) { return r.kind == OutputKind::Csv; }))
        ip.fail(0, "", "transient CSV output needs at least one MONITOR");
    try {
        job.analysis.check();
    } catch (const std::exception& e) {
        ip.fail(0, "", e.what());
    }
    return job;
}

JobFile parse_job(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open job file " + path.string());
    return parse_job_text(in, path);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    const auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error("cannot rename output into place: " + path.string());
    }
}

// ---------------------------------------------------------------- writers

namespace {

void append_array(std::string& s, const char* type, const std::string& attrs, const auto& values, auto&& put) {
    s += "        <DataArray type=\"";
    s += type;
    s += '"';
    s += attrs;
    s += " format=\"ascii\">\n          ";
    std::size_t i = 0;
    for (const auto& v : values) {
        if (i) s += (i % 12 == 0) ? "\n          " : " ";
        put(s, v);
        ++i;
    }
    s += "\n        </DataArray>\n";
}

}  // namespace

std::string vtu_document(const PolyMesh& mesh, const std::vector<PointField>& fields) {
    const int nn = mesh.num_nodes(), ne = mesh.num_elements();
    for (const auto& f : fields)
        if (f.values.size() != static_cast<std::size_t>(f.components) * nn)
            throw Error("point field '" + f.name + "' does not match the node count");

    std::vector<long long> connectivity, offsets, faces, faceoffsets;
    for (int e = 0; e < ne; ++e) {
        for (int n : mesh.element_nodes(e)) connectivity.push_back(n);
        offsets.push_back(static_cast<long long>(connectivity.size()));
        const auto surfaces = mesh.element_surfaces(e);
        faces.push_back(static_cast<long long>(surfaces.size()));
        for (const auto& ref : surfaces) {
            const auto nodes = mesh.surface_nodes(ref.surface);
            const SurfaceKind kind = mesh.surface_kind(ref.surface);
            // Faces are written as polygons along the perimeter, outward.
            std::vector<int> ring;
            for (int i : perimeter_order(kind)) ring.push_back(nodes[i]);
            if (ref.flipped) std::reverse(ring.begin(), ring.end());
            faces.push_back(static_cast<long long>(ring.size()));
            faces.insert(faces.end(), ring.begin(), ring.end());
        }
        faceoffsets.push_back(static_cast<long long>(faces.size()));
    }

    auto put_int = [](std::string& s, long long v) { s += std::to_string(v); };
    auto put_num = [](std::string& s, double v) { append_number(s, v); };

    std::string s;
    s += "<?xml version=\"1.0\"?>\n";
    s += "<VTKFile type=\"UnstructuredGrid\" version=\"1.0\" byte_order=\"LittleEndian\" header_type=\"UInt64\">\n";
    s += "  <UnstructuredGrid>\n";
    s += "    <Piece NumberOfPoints=\"" + std::to_string(nn) + "\" NumberOfCells=\"" + std::to_string(ne) + "\">\n";
    s += "      <PointData>\n";
    for (const auto& f : fields) {
        std::string attrs = " Name=\"" + f.name + "\" NumberOfComponents=\"" + std::to_string(f.components) + "\"";
        append_array(s, "Float64", attrs, f.values, put_num);
    }
    s += "      </PointData>\n";
    s += "      <Points>\n";
    std::vector<double> points(static_cast<std::size_t>(3) * nn);
    for (int i = 0; i < nn; ++i)
        for (int a = 0; a < 3; ++a) points[3 * i + a] = mesh.node_coords()(i, a);
    append_array(s, "Float64", " NumberOfComponents=\"3\"", points, put_num);
    s += "      </Points>\n";
    s += "      <Cells>\n";
    append_array(s, "Int64", " Name=\"connectivity\"", connectivity, put_int);
    append_array(s, "Int64", " Name=\"offsets\"", offsets, put_int);
    append_array(s, "UInt8", " Name=\"types\"", std::vector<long long>(static_cast<std::size_t>(ne), 42), put_int);
    append_array(s, "Int64", " Name=\"faces\"", faces, put_int);
    append_array(s, "Int64", " Name=\"faceoffsets\"", faceoffsets, put_int);
    s += "      </Cells>\n";
    s += "    </Piece>\n";
    s += "  </UnstructuredGrid>\n";
    s += "</VTKFile>\n";
    return s;
}

namespace {

PointField displacement_field(const Eigen::VectorXd& u, const std::string& name = "displacement") {
    return {name, 3, std::vector<double>(u.data(), u.data() + u.size())};
}

// Stress in the VTK symmetric-tensor component order XX, YY, ZZ, XY, YZ, XZ.
PointField stress_field(const Eigen::MatrixXd& stress) {
    PointField f{"stress", 6, {}};
    f.values.reserve(static_cast<std::size_t>(stress.rows()) * 6);
    for (Eigen::Index i = 0; i < stress.rows(); ++i)
        for (int c : {0, 1, 2, 5, 3, 4}) f.values.push_back(stress(i, c));
    return f;
}

void row(std::string& s, std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) s += ',';
        append_number(s, v);
        first = false;
    }
    s += '\n';
}

}  // namespace

std::string static_csv(const PolyMesh& mesh, const StaticResult& r) {
    std::string s = "node,x,y,z,ux,uy,uz,sxx,syy,szz,syz,sxz,sxy\n";
    for (int i = 0; i < mesh.num_nodes(); ++i) {
        s += std::to_string(i + 1) + ',';
        const Eigen::Vector3d x = mesh.node(i);
        row(s, {x[0], x[1], x[2], r.displacement[3 * i], r.displacement[3 * i + 1], r.displacement[3 * i + 2],
                r.stress(i, 0), r.stress(i, 1), r.stress(i, 2), r.stress(i, 3), r.stress(i, 4), r.stress(i, 5)});
    }
    return s;
}

std::string modal_csv(const ModalResult& r) {
    std::string s = "mode,eigenvalue,frequency_hz\n";
    for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i) {
        s += std::to_string(i + 1) + ',';
        const double lam = r.eigenvalues[i];
        row(s, {lam, std::sqrt(std::max(lam, 0.0)) / (2.0 * std::numbers::pi)});
    }
    return s;
}

std::string transient_csv(const AnalysisJob& job, const TransientResult& r) {
    std::string s = "t";
    const auto& mons = job.monitors;
    if (mons.size() == 1) {
        s += ",u,v,a";
    } else {
        for (const auto& m : mons) {
            const std::string tag = "_" + std::to_string(m.node + 1) + "_" + std::to_string(m.dir + 1);
            s += ",u" + tag + ",v" + tag + ",a" + tag;
        }
    }
    s += '\n';
    for (std::size_t i = 0; i < r.time.size(); ++i) {
        append_number(s, r.time[i]);
        for (std::size_t j = 0; j < mons.size(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            s += ',';
            append_number(s, r.u(ii, jj));
            s += ',';
            append_number(s, r.v(ii, jj));
            s += ',';
            append_number(s, r.a(ii, jj));
        }
        s += '\n';
    }
    return s;
}

std::string energy_csv(const TransientResult& r) {
    std::string s = "t,kinetic,strain,damping,external,residual\n";
    const auto res = r.energy_residual();
    for (std::size_t i = 0; i < r.time.size(); ++i)
        row(s, {r.time[i], r.kinetic[i], r.strain[i], r.damping[i], r.external[i], res[i]});
    return s;
}

// ---------------------------------------------------------------- runner

RunSummary run_job(const JobFile& job, int threads, std::ostream* log) {
    const AnalysisJob& a = job.analysis;
    const PolyMesh& mesh = *a.mesh;
    const ValidationReport report = validate(mesh);
    if (!report.ok()) throw MeshError("mesh validation failed:\n" + report.summary());

    RunSummary summary;
    summary.elements = mesh.num_elements();
    const FormedMesh formed = form_elements(mesh, a.materials, a.element_material, threads);
    summary.unique_elements = formed.unique_solutions;
    summary.equations = DofMap(mesh.num_nodes(), a.dirichlet).num_free();
    if (log)
        *log << "elements " << summary.elements << " (" << summary.unique_elements << " distinct), equations "
             << summary.equations << '\n';

    std::vector<std::pair<std::filesystem::path, std::string>> files;
    auto want = [&](OutputKind k) {
        std::vector<std::filesystem::path> paths;
        for (const auto& o : job.outputs)
            if (o.kind == k) paths.push_back(o.path);
        return paths;
    };

    if (std::holds_alternative<StaticStep>(a.step)) {
        const StaticResult r = solve_static(a, formed);
        for (const auto& p : want(OutputKind::Vtu))
            files.emplace_back(p, vtu_document(mesh, {displacement_field(r.displacement), stress_field(r.stress)}));
        for (const auto& p : want(OutputKind::Csv)) files.emplace_back(p, static_csv(mesh, r));
        if (log) *log << "static solve done, max |u| " << format_number(r.displacement.cwiseAbs().maxCoeff()) << '\n';
    } else if (std::holds_alternative<ModalStep>(a.step)) {
        const ModalResult r = solve_modal(a, formed);
        std::vector<PointField> fields;
        for (Eigen::Index i = 0; i < r.modes.cols(); ++i)
            fields.push_back(displacement_field(r.modes.col(i), "mode_" + std::to_string(i + 1)));
        for (const auto& p : want(OutputKind::Vtu)) files.emplace_back(p, vtu_document(mesh, fields));
        for (const auto& p : want(OutputKind::Csv)) files.emplace_back(p, modal_csv(r));
        if (log) *log << "modal solve done, " << r.eigenvalues.size() << " modes\n";
    } else {
        const TransientResult r = solve_transient(a, formed);
        for (const auto& p : want(OutputKind::Vtu)) {
            const Eigen::MatrixXd stress = nodal_stress(a, formed, r.final_displacement);
            files.emplace_back(p, vtu_document(mesh, {displacement_field(r.final_displacement), stress_field(stress)}));
        }
        for (const auto& p : want(OutputKind::Csv)) files.emplace_back(p, transient_csv(a, r));
        for (const auto& p : want(OutputKind::Energy)) files.emplace_back(p, energy_csv(r));
        if (log) *log << "transient solve done, " << r.time.size() - 1 << " steps\n";
    }
    for (const auto& [path, content] : files) {
        write_file_atomic(path, content);
        summary.written.push_back(path);
        if (log) *log << "wrote " << path.string() << '\n';
    }
    return summary;
}

}  // namespace sbfem
