#pragma once

// Keyword job files, the step runner and the VTU / CSV writers.

#include "sbfem/assembly.hpp"
#include "sbfem/solvers.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sbfem {

enum class OutputKind { Vtu, Csv, Energy };

struct OutputRequest {
    OutputKind kind = OutputKind::Csv;
    std::filesystem::path path;
};

/// A parsed job: the analysis plus where to write results.
struct JobFile {
    std::filesystem::path source;
    std::filesystem::path mesh_path;
    std::vector<std::string> material_names;
    std::map<std::string, std::vector<int>> element_sets;  ///< 0-based ids, ALL included
    std::map<std::string, std::vector<int>> node_sets;
    std::map<std::string, std::vector<int>> surface_sets;
    AnalysisJob analysis;
    std::vector<OutputRequest> outputs;
};

/// Parses a job file and loads the mesh it references. Relative paths are
/// resolved against the job file's directory. Throws ParseError with the
/// line number for syntax errors, unknown keywords, duplicate singleton
/// blocks and dangling references.
JobFile parse_job(const std::filesystem::path& path);
JobFile parse_job_text(std::istream& in, const std::filesystem::path& source);

struct RunSummary {
    int elements = 0;
    int unique_elements = 0;
    int equations = 0;
    std::vector<std::filesystem::path> written;
};

/// Forms elements, runs the step and writes every requested output
/// atomically. Throws on any failure; nothing partial is left behind.
RunSummary run_job(const JobFile& job, int threads, std::ostream* log = nullptr);

/// Writes `content` to `path` via a temporary file in the same directory
/// and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct PointField {
    std::string name;
    int components = 1;
    std::vector<double> values;  ///< node-major, components per node
};

/// XML unstructured grid with one general polyhedron cell (VTK type 42) per
/// element, described by its face streams. ASCII payload.
std::string vtu_document(const PolyMesh& mesh, const std::vector<PointField>& fields);

/// node,x,y,z,ux,uy,uz,sxx,syy,szz,syz,sxz,sxy
std::string static_csv(const PolyMesh& mesh, const StaticResult& result);
/// mode,eigenvalue,frequency_hz
std::string modal_csv(const ModalResult& result);
/// t,u,v,a for one monitor; t,u_N_D,v_N_D,a_N_D,... for several.
std::string transient_csv(const AnalysisJob& job, const TransientResult& result);
/// t,kinetic,strain,damping,external,residual
std::string energy_csv(const TransientResult& result);

}  // namespace sbfem
