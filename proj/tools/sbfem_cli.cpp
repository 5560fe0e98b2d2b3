// Command-line front end: solve, mesh-image, validate, cohesive-demo.

#include "sbfem/cohesive.hpp"
#include "sbfem/error.hpp"
#include "sbfem/job.hpp"
#include "sbfem/octree.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int cmd_solve(const std::string& job_path, int threads) {
    const sbfem::JobFile job = sbfem::parse_job(job_path);
    const sbfem::RunSummary s = sbfem::run_job(job, threads, &std::cout);
    std::cout << "ok: " << s.written.size() << " output file(s)\n";
    return 0;
}

int cmd_mesh_image(const std::string& image, const std::string& out, int min_size, int max_size) {
    const sbfem::VoxelImage img = sbfem::read_voxel_image(image);
    const auto leaves = sbfem::build_octree(img, min_size, max_size);
    const sbfem::OctreeMesh om = sbfem::extract_polyhedra(leaves, img);
    const sbfem::ValidationReport report = sbfem::validate(om.mesh);
    if (!report.ok()) throw sbfem::MeshError("generated mesh failed validation:\n" + report.summary());

    const std::filesystem::path out_path(out);
    const auto stem = out_path.parent_path() / out_path.stem();
    sbfem::write_file_atomic(out_path, sbfem::serialize_mesh_text(om.mesh));
    sbfem::write_file_atomic(stem.string() + ".labels.csv", sbfem::label_csv(om));
    sbfem::write_file_atomic(stem.string() + ".interfaces.csv", sbfem::interface_csv(om));
    std::cout << "leaves " << leaves.size() << ", elements " << om.mesh.num_elements() << ", nodes "
              << om.mesh.num_nodes() << ", surfaces " << om.mesh.num_surfaces() << ", interfaces "
              << om.interfaces.size() << '\n';
    return 0;
}

int cmd_validate(const std::string& mesh_path) {
    const sbfem::PolyMesh mesh = sbfem::read_mesh_file(mesh_path);
    const sbfem::ValidationReport report = sbfem::validate(mesh);
    std::cout << report.summary();
    return report.ok() ? 0 : 1;
}

int cmd_cohesive(const std::string& params_path, const std::string& out) {
    std::ifstream in(params_path);
    if (!in) throw sbfem::Error("cannot open " + params_path);
    const sbfem::CohesiveDemoConfig cfg = sbfem::parse_cohesive_config(in, params_path);
    const auto history = sbfem::cyclic_driver(cfg.program, cfg.program.duration(), cfg.params, cfg.options);
    const std::string csv = sbfem::cohesive_csv(history);
    if (out.empty()) std::cout << csv;
    else sbfem::write_file_atomic(out, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polyhedral scaled boundary finite element solver"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads for element formation (0 = all cores)")
        ->check(CLI::NonNegativeNumber);

    std::string job_path;
    auto* solve = app.add_subcommand("solve", "Run a keyword job file");
    solve->add_option("job", job_path, "Job file")->required()->check(CLI::ExistingFile);

    std::string image, mesh_out;
    int min_size = 1, max_size = 16;
    auto* mesh_image = app.add_subcommand("mesh-image", "Octree-mesh a labeled voxel image");
    mesh_image->add_option("image", image, "Voxel image")->required()->check(CLI::ExistingFile);
    mesh_image->add_option("out", mesh_out, "Output mesh file")->required();
    mesh_image->add_option("--min", min_size, "Smallest cell edge in voxels (power of two)")->capture_default_str();
    mesh_image->add_option("--max", max_size, "Largest cell edge in voxels (power of two)")->capture_default_str();

    std::string mesh_path;
    auto* validate = app.add_subcommand("validate", "Check a mesh file");
    validate->add_option("mesh", mesh_path, "Mesh file")->required()->check(CLI::ExistingFile);

    std::string params_path, cohesive_out;
    auto* cohesive = app.add_subcommand("cohesive-demo", "Cyclic opening of a single cohesive interface");
    cohesive->add_option("params", params_path, "Parameter CSV (name,value rows)")->required()->check(CLI::ExistingFile);
    cohesive->add_option("-o,--output", cohesive_out, "Write the history here instead of stdout");

    CLI11_PARSE(app, argc, argv);
    const int n = resolve_threads(threads);
    try {
        if (*solve) return cmd_solve(job_path, n);
        if (*mesh_image) return cmd_mesh_image(image, mesh_out, min_size, max_size);
        if (*validate) return cmd_validate(mesh_path);
        if (*cohesive) return cmd_cohesive(params_path, cohesive_out);
    } catch (const sbfem::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
