#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "grainpipe/config.hpp"
#include "grainpipe/errors.hpp"
#include "grainpipe/pipeline.hpp"
#include "grainpipe/pixcodec.hpp"

namespace {

using grainpipe::PipelineConfig;

std::optional<std::filesystem::path> opt_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
}

std::optional<std::uint64_t> env_seed() {
    const char* env = std::getenv("GRAINPIPE_SEED");
    if (!env || !*env) return std::nullopt;
    try {
        return std::stoFor further{};
    } catch (...) {
        throw grainpipe::FormatError(std::string("GRAINPIPE_SEED is not a number: ") + env);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"grainpipe: barley plate imaging pipeline"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> overrides;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;
    app.add_option("--config", config_file, "JSON config file (layered over defaults)");
    app.add_option("--set", overrides, "override one config value, e.g. --set ransac.iterations=500");
    app.add_option("--seed", seed_flag, "seed override (strongest layer)")->each([&](const std::string&) {
        seed_given = true;
    });

    // convert
    auto* convert = app.add_subcommand("convert", "re-pack a cube container");
    std::string cv_in, cv_out, cv_packing;
    convert->add_option("input", cv_in, "input .cube.json")->required();
    convert->add_option("output", cv_out, "output .cube.json")->required();
    convert->add_option("--packing", cv_packing, "u8 | u16 | mono12p | f32 (default: natural)");

    // synth
    auto* synth = app.add_subcommand("synth", "render a synthetic mini-dataset");
    grainpipe::SynthParams synth_params;
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--dishes", synth_params.dishes, "number of dishes");
    synth->add_option("--days", synth_params.days, "sessions per dish (0..days-1)");
    synth->add_option("--noise", synth_params.noise_sigma, "noise sigma, fraction of full scale");
    synth->add_option("--dropout", synth_params.dropout_rate, "HSI raw zero-dropout probability");

    // detect-grid
    auto* detect = app.add_subcommand("detect-grid", "one-time grid detection on a reference frame");
    std::string dg_ref, dg_dark, dg_markers, dg_dish = "dish", dg_out = "grid.json";
    detect->add_option("--reference", dg_ref, "reference RGB cube")->required();
    detect->add_option("--dark", dg_dark, "dark frame cube");
    detect->add_option("--markers", dg_markers, "external marker corner file");
    detect->add_option("--dish", dg_dish, "dish id recorded in the model");
    detect->add_option("--out", dg_out, "output grid JSON");

    // localize
    auto* localize = app.add_subcommand("localize", "track the grid into a day session");
    std::string lc_grid, lc_rgb, lc_hsi, lc_dark, lc_markers, lc_out = ".";
    localize->add_option("--grid", lc_grid, "reference grid JSON")->required();
    localize->add_option("--rgb", lc_rgb, "day RGB cube")->required();
    localize->add_option("--hsi", lc_hsi, "day HSI cube (enables A.3)");
    localize->add_option("--dark", lc_dark, "HSI dark frame cube");
    localize->add_option("--markers", lc_markers, "external marker corner file");
    localize->add_option("--out", lc_out, "output directory");

    // extract
    auto* extract = app.add_subcommand("extract", "cut the 25 grid cells out of a frame");
    std::string ex_grid, ex_frame, ex_dark, ex_dish = "dish", ex_out = ".";
    int ex_day = 0;
    extract->add_option("--grid", ex_grid, "day grid JSON (same frame)")->required();
    extract->add_option("--frame", ex_frame, "frame cube")->required();
    extract->add_option("--dark", ex_dark, "dark frame cube");
    extract->add_option("--dish", ex_dish, "dish id for provenance");
    extract->add_option("--day", ex_day, "day for provenance");
    extract->add_option("--out", ex_out, "output directory");

    // segment / spectra
    auto* segment = app.add_subcommand("segment", "segment kernels in extracted cells");
    auto* spectra = app.add_subcommand("spectra", "segment + mean pseudo-absorbance spectra");
    std::vector<std::string> sg_cells, sp_cells;
    std::string sg_out = ".", sp_out = ".";
    segment->add_option("cells", sg_cells, "cell .cube.json files")->required();
    segment->add_option("--out", sg_out, "output directory");
    spectra->add_option("cells", sp_cells, "cell .cube.json files")->required();
    spectra->add_option("--out", sp_out, "output directory");

    // run
    auto* run = app.add_subcommand("run", "full chain over a run manifest");
    std::string rn_manifest, rn_out;
    int rn_jobs = 0;
    run->add_option("--manifest", rn_manifest, "run manifest JSON")->required();
    run->add_option("--out", rn_out, "output root")->required();
    run->add_option("--jobs", rn_jobs, "worker threads (default: hardware)");

    // validate-dataset
    auto* validate = app.add_subcommand("validate-dataset", "check archive counts against the published tables");
    std::string vd_root;
    validate->add_option("--root", vd_root, "dataset root (contains dataset.json)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // help/version exit 0, bad invocation 2
    }

    // Setup phase: resolve configuration and manifests. Failures here are
    // invalid invocations (exit 2), not processing failures.
    PipelineConfig config;
    grainpipe::RunManifest run_manifest;
    try {
        std::optional<std::uint64_t> seed = env_seed();
        config = grainpipe::resolve_config(opt_path(config_file), overrides, seed);
        if (seed_given) config.seed = seed_flag;
        synth_params.seed = config.seed;
        if (run->parsed()) run_manifest = grainpipe::load_run_manifest(rn_manifest);
    } catch (const grainpipe::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (convert->parsed()) {
            const grainpipe::ImageCube cube = grainpipe::read_cube(cv_in);
            if (cv_packing.empty())
                grainpipe::write_cube(cube, cv_out);
            else
                grainpipe::write_cube(cube, cv_out, grainpipe::packing_from_string(cv_packing));
        } else if (synth->parsed()) {
            const auto manifest = grainpipe::cmd_synth(synth_params, synth_out);
            std::cout << manifest.string() << '\n';
        } else if (detect->parsed()) {
            grainpipe::cmd_detect_grid(dg_ref, opt_path(dg_dark), opt_path(dg_markers), dg_dish,
                                       config, dg_out);
            std::cout << dg_out << '\n';
        } else if (localize->parsed()) {
            grainpipe::cmd_localize(lc_grid, lc_rgb, opt_path(lc_hsi), opt_path(lc_dark),
                                    opt_path(lc_markers), config, lc_out);
        } else if (extract->parsed()) {
            const auto cells = grainpipe::cmd_extract(ex_grid, ex_frame, opt_path(ex_dark), config,
                                                      ex_dish, ex_day, ex_out);
            std::cout << cells.size() << " cells\n";
        } else if (segment->parsed() || spectra->parsed()) {
            const bool with_spectra = spectra->parsed();
            const auto& cell_args = with_spectra ? sp_cells : sg_cells;
            std::vector<std::filesystem::path> cells(cell_args.begin(), cell_args.end());
            const auto outcomes = grainpipe::cmd_segment_spectra(
                cells, config, with_spectra ? sp_out : sg_out, with_spectra);
            int failed = 0;
            for (const auto& o : outcomes) {
                if (!o.ok) {
                    ++failed;
                    std::cerr << o.cell.string() << ": " << o.error << '\n';
                }
            }
            if (failed > 0) {
                std::cerr << failed << " of " << outcomes.size() << " cells failed\n";
                return 1;
            }
        } else if (run->parsed()) {
            const grainpipe::RunReport report = grainpipe::cmd_run(run_manifest, config, rn_out, rn_jobs);
            for (const auto& dish : report.dishes) {
                if (!dish.ok)
                    std::cerr << dish.dish_id << ": FAILED: " << dish.error << '\n';
                else if (!dish.cell_failures.empty())
                    std::cerr << dish.dish_id << ": " << dish.cell_failures.size()
                              << " cell failure(s)\n";
            }
            if (!report.all_ok()) return 1;
        } else if (validate->parsed()) {
            const grainpipe::DatasetReport report = grainpipe::cmd_validate_dataset(vd_root);
            std::cout << report.format();
            if (!report.ok()) return 1;
        }
    } catch (const grainpipe::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
