#include "grainpipe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "grainpipe/errors.hpp"
#include "grainpipe/kernelproc.hpp"
#include "grainpipe/pixcodec.hpp"
#include "grainpipe/synthscene.hpp"

namespace grainpipe {
namespace {

using nlohmann::json;

std::string cell_stem(int i, int j) {
    return "cell_" + std::to_string(i) + "_" + std::to_string(j);
}

StandardizedFrame standardize_path(const std::filesystem::path& frame,
                                   const std::optional<std::filesystem::path>& dark,
                                   const ChessboardParams& params) {
    const ImageCube raw = read_cube(frame);
    if (dark) {
        const ImageCube dark_cube = read_cube(*dark);
        return standardize_frame(raw, &dark_cube, params);
    }
    return standardize_frame(raw, nullptr, params);
}

std::vector<Point2> board_centers(const std::vector<Chessboard>& boards) {
    std::vector<Point2> centers;
    centers.reserve(boards.size());
    for (const Chessboard& b : boards) centers.push_back(b.center);
    return centers;
}

json affine_json(const Affine2D& a) { return json(a.m); }

void dump_config(const PipelineConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_config(config, dir / "config.json");
}

ImageCube mask_to_cube(const BinaryMask& mask, Modality modality) {
    ImageCube cube(mask.height, mask.width, 1, 8, modality);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            cube.at(r, c, 0) = mask.at(r, c) ? 255.0 : 0.0;
    return cube;
}

/// One dish end to end; throws grainpipe::Error on dish-level failure and
/// collects per-cell failures instead of aborting.
DishOutcome process_dish(const SessionManifest& session, const PipelineConfig& config,
                         const std::filesystem::path& dish_dir) {
    DishOutcome outcome;
    outcome.dish_id = session.dish_id;
    std::filesystem::create_directories(dish_dir);

    StandardizedFrame ref = standardize_path(session.reference_rgb, std::nullopt, config.chessboard);
    GridModel grid;
    if (session.reference_markers) {
        const auto markers = load_marker_file(*session.reference_markers);
        grid = detect_grid(ref.plate, ref.boards, session.dish_id, &markers, config.grid);
    } else {
        grid = detect_grid(ref.plate, ref.boards, session.dish_id, nullptr, config.grid);
    }
    validate_grid_model(grid);
    save_grid_model(grid, dish_dir / "grid.json");

    for (const DayEntry& entry : session.days) {
        const std::filesystem::path day_dir = dish_dir / ("day" + std::to_string(entry.day));
        std::filesystem::create_directories(day_dir);

        StandardizedFrame rgb = standardize_path(entry.rgb_frame, std::nullopt, config.chessboard);
        LocalizedGrid rgb_loc;
        if (entry.grid_file) {
            rgb_loc.grid = load_grid_model(*entry.grid_file);
            rgb_loc.transform = Affine2D::identity();
        } else if (entry.markers_file) {
            rgb_loc = localize_rgb_from_markers(grid, load_marker_file(*entry.markers_file),
                                                config.ransac);
        } else {
            rgb_loc = localize_rgb(grid, rgb.plate, config.grid.markers, config.ransac);
        }
        save_grid_model(rgb_loc.grid, day_dir / "rgb_grid.json");

        StandardizedFrame hsi = standardize_path(entry.hsi_frame, entry.dark_frame, config.chessboard);
        LocalizedGrid hsi_loc = localize_hsi(rgb_loc.grid, board_centers(rgb.boards), hsi.plate,
                                             config.chessboard, config.ransac);
        save_grid_model(hsi_loc.grid, day_dir / "hsi_grid.json");

        {
            const json meta = {{"rgb", {{"transform", affine_json(rgb_loc.transform)},
                                        {"inliers", rgb_loc.inlier_count}}},
                               {"hsi", {{"transform", affine_json(hsi_loc.transform)},
                                        {"inliers", hsi_loc.inlier_count}}},
                               {"seed", config.seed}};
            std::ofstream out(day_dir / "localize_meta.json");
            if (!out) throw ValueError("cannot write " + (day_dir / "localize_meta.json").string());
            out << meta.dump(2) << '\n';
        }

        struct Pass {
            const StandardizedFrame* frame;
            const LocalizedGrid* loc;
            Modality modality;
            const char* name;
            bool spectra;
        };
        const Pass passes[2] = {{&rgb, &rgb_loc, Modality::RGB, "rgb", false},
                                {&hsi, &hsi_loc, Modality::HSI, "hsi", true}};
        for (const Pass& pass : passes) {
            const std::filesystem::path mdir = day_dir / pass.name;
            const CellProvenance prov{session.dish_id, entry.day, pass.modality};
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) {
                    const std::string tag = std::string(pass.name) + " day " +
                                            std::to_string(entry.day) + " cell (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")";
                    try {
                        const CellRecord cell = extract_cell(pass.frame->plate, pass.loc->grid, i, j);
                        save_cell_record(cell, prov, mdir, cell_stem(i, j));
                        const BinaryMask mask = segment_kernel(cell.image, config.segment);
                        write_cube(mask_to_cube(mask, pass.modality),
                                   mdir / (cell_stem(i, j) + ".mask.cube.json"));
                        if (pass.spectra) {
                            const Spectrum spectrum =
                                mean_pseudo_absorbance(cell.image, mask, config.spectrum);
                            write_spectrum_csv(spectrum, mdir / (cell_stem(i, j) + ".spectrum.csv"));
                            write_spectrum_sidecar(spectrum,
                                                   {session.dish_id, entry.day, i, j},
                                                   mdir / (cell_stem(i, j) + ".spectrum.json"));
                        }
                    } catch (const Error& e) {
                        outcome.cell_failures.push_back(tag + ": " + e.what());
                    }
                }
        }
    }
    outcome.ok = true;
    return outcome;
}

} // namespace

GridModel cmd_detect_grid(const std::filesystem::path& reference_frame,
                          const std::optional<std::filesystem::path>& dark_frame,
                          const std::optional<std::filesystem::path>& markers_file,
                          const std::string& dish_id, const PipelineConfig& config,
                          const std::filesystem::path& out_grid) {
    StandardizedFrame ref = standardize_path(reference_frame, dark_frame, config.chessboard);
    GridModel grid;
    if (markers_file) {
        const auto markers = load_marker_file(*markers_file);
        grid = detect_grid(ref.plate, ref.boards, dish_id, &markers, config.grid);
    } else {
        grid = detect_grid(ref.plate, ref.boards, dish_id, nullptr, config.grid);
    }
    validate_grid_model(grid);
    if (out_grid.has_parent_path()) std::filesystem::create_directories(out_grid.parent_path());
    save_grid_model(grid, out_grid);
    dump_config(config, out_grid.has_parent_path() ? out_grid.parent_path()
                                                   : std::filesystem::path("."));
    return grid;
}

LocalizeResult cmd_localize(const std::filesystem::path& grid_file,
                            const std::filesystem::path& rgb_frame,
                            const std::optional<std::filesystem::path>& hsi_frame,
                            const std::optional<std::filesystem::path>& dark_frame,
                            const std::optional<std::filesystem::path>& markers_file,
                            const PipelineConfig& config, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const GridModel grid = load_grid_model(grid_file);
    StandardizedFrame rgb = standardize_path(rgb_frame, std::nullopt, config.chessboard);

    LocalizeResult result;
    if (markers_file) {
        result.rgb = localize_rgb_from_markers(grid, load_marker_file(*markers_file), config.ransac);
    } else {
        result.rgb = localize_rgb(grid, rgb.plate, config.grid.markers, config.ransac);
    }
    save_grid_model(result.rgb.grid, out_dir / "rgb_grid.json");

    json meta = {{"rgb", {{"transform", affine_json(result.rgb.transform)},
                          {"inliers", result.rgb.inlier_count}}},
                 {"seed", config.seed}};
    if (hsi_frame) {
        StandardizedFrame hsi = standardize_path(*hsi_frame, dark_frame, config.chessboard);
        result.hsi = localize_hsi(result.rgb.grid, board_centers(rgb.boards), hsi.plate,
                                  config.chessboard, config.ransac);
        save_grid_model(result.hsi->grid, out_dir / "hsi_grid.json");
        meta["hsi"] = {{"transform", affine_json(result.hsi->transform)},
                       {"inliers", result.hsi->inlier_count}};
    }
    std::ofstream out(out_dir / "localize_meta.json");
    if (!out) throw ValueError("cannot write " + (out_dir / "localize_meta.json").string());
    out << meta.dump(2) << '\n';
    dump_config(config, out_dir);
    return result;
}

std::vector<std::filesystem::path> cmd_extract(const std::filesystem::path& grid_file,
                                               const std::filesystem::path& frame,
                                               const std::optional<std::filesystem::path>& dark_frame,
                                               const PipelineConfig& config,
                                               const std::string& dish_id, int day,
                                               const std::filesystem::path& out_dir) {
    const GridModel grid = load_grid_model(grid_file);
    StandardizedFrame std_frame = standardize_path(frame, dark_frame, config.chessboard);
    const CellProvenance prov{dish_id, day, std_frame.plate.cube.modality};
    std::vector<std::filesystem::path> headers;
    for (const CellRecord& cell : extract_all_cells(std_frame.plate, grid)) {
        const std::string stem = cell_stem(cell.i, cell.j);
        save_cell_record(cell, prov, out_dir, stem);
        headers.push_back(out_dir / (stem + ".cube.json"));
    }
    dump_config(config, out_dir);
    return headers;
}

std::vector<SegmentOutcome> cmd_segment_spectra(const std::vector<std::filesystem::path>& cells,
                                                const PipelineConfig& config,
                                                const std::filesystem::path& out_dir, bool spectra) {
    std::filesystem::create_directories(out_dir);
    std::vector<SegmentOutcome> outcomes;
    outcomes.reserve(cells.size());
    for (const std::filesystem::path& header : cells) {
        SegmentOutcome so;
        so.cell = header;
        try {
            const ImageCube cube = read_cube(header);
            // Cell files are "<stem>.cube.json"; strip both extensions.
            std::string stem = header.stem().string();
            if (stem.size() > 5 && stem.ends_with(".cube")) stem.resize(stem.size() - 5);

            SpectrumProvenance prov;
            const std::filesystem::path meta_path = header.parent_path() / (stem + ".meta.json");
            if (std::ifstream meta_in(meta_path); meta_in) {
                json meta;
                meta_in >> meta;
                prov.dish = meta.value("dish", std::string{});
                prov.day = meta.value("day", 0);
                if (meta.contains("cell")) {
                    prov.cell_i = meta["cell"].at(0).get<int>();
                    prov.cell_j = meta["cell"].at(1).get<int>();
                }
            }

            const BinaryMask mask = segment_kernel(cube, config.segment);
            so.mask = out_dir / (stem + ".mask.cube.json");
            write_cube(mask_to_cube(mask, cube.modality), so.mask);
            if (spectra && cube.modality == Modality::HSI && cube.reflectance) {
                const Spectrum spectrum = mean_pseudo_absorbance(cube, mask, config.spectrum);
                so.csv = out_dir / (stem + ".spectrum.csv");
                write_spectrum_csv(spectrum, so.csv);
                write_spectrum_sidecar(spectrum, prov, out_dir / (stem + ".spectrum.json"));
            }
            so.ok = true;
        } catch (const Error& e) {
            so.error = e.what();
        }
        outcomes.push_back(std::move(so));
    }
    dump_config(config, out_dir);
    return outcomes;
}

bool RunReport::all_ok() const {
    for (const DishOutcome& d : dishes)
        if (!d.ok || !d.cell_failures.empty()) return false;
    return true;
}

RunReport cmd_run(const RunManifest& manifest, const PipelineConfig& config,
                  const std::filesystem::path& out_root, int jobs) {
    validate_run_manifest(manifest);
    std::filesystem::create_directories(out_root);
    save_config(config, out_root / "config.json");

    const std::size_t n = manifest.dishes.size();
    RunReport report;
    report.dishes.resize(n);

    int workers = jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(n, 1)));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            const SessionManifest& session = manifest.dishes[i];
            try {
                report.dishes[i] = process_dish(session, config, out_root / session.dish_id);
            } catch (const std::exception& e) {
                report.dishes[i].dish_id = session.dish_id;
                report.dishes[i].ok = false;
                report.dishes[i].error = e.what();
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    json jdishes = json::array();
    for (const DishOutcome& d : report.dishes)
        jdishes.push_back({{"dish_id", d.dish_id},
                           {"ok", d.ok},
                           {"error", d.error},
                           {"cell_failures", d.cell_failures}});
    const json jreport = {{"dishes", jdishes}, {"all_ok", report.all_ok()}, {"seed", config.seed}};
    std::ofstream out(out_root / "report.json");
    if (!out) throw ValueError("cannot write " + (out_root / "report.json").string());
    out << jreport.dump(2) << '\n';
    return report;
}

DatasetIndex scan_dataset_layout(const std::filesystem::path& root) {
    const std::filesystem::path index_path = root / "dataset.json";
    std::ifstream in(index_path);
    if (!in) throw ValueError("dataset index not found: " + index_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("dataset index " + index_path.string() + ": " + e.what());
    }

    DatasetIndex index;
    try {
        for (const json& jd : j.at("dishes")) {
            const std::string dish = jd.at("dish_id").get<std::string>();
            const std::string variety = jd.at("variety").get<std::string>();
            index.dish_variety[dish] = variety;

            int complete = 0;
            for (const json& js : jd.value("sessions", json::array())) {
                const int day = js.at("day").get<int>();
                bool both = true;
                for (const char* mod : {"rgb", "hsi"}) {
                    if (!js.contains(mod)) {
                        index.problems.push_back(dish + " day " + std::to_string(day) +
                                                 ": no " + mod + " entry");
                        both = false;
                        continue;
                    }
                    const std::filesystem::path p = root / js[mod].get<std::string>();
                    if (!std::filesystem::exists(p)) {
                        index.problems.push_back(dish + " day " + std::to_string(day) +
                                                 ": missing " + mod + " file " + p.generic_string());
                        both = false;
                    }
                }
                if (both) ++complete;
            }

            for (const json& jk : jd.value("kernels", json::array())) {
                DatasetKernel k;
                k.dish = dish;
                k.variety = variety;
                k.cell_i = jk.at("cell").at(0).get<int>();
                k.cell_j = jk.at("cell").at(1).get<int>();
                k.germination_day = jk.value("germination_day", 0);
                k.complete_sessions = complete;
                index.kernels.push_back(std::move(k));
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("dataset index " + index_path.string() + ": " + e.what());
    }
    return index;
}

bool DatasetReport::ok() const {
    if (!problems.empty()) return false;
    for (const DatasetCheck& c : checks)
        if (!c.ok) return false;
    return true;
}

std::string DatasetReport::format() const {
    std::ostringstream out;
    for (const DatasetCheck& c : checks)
        out << (c.ok ? "      ok  " : "MISMATCH  ") << c.name << ": expected " << c.expected
            << ", found " << c.actual << '\n';
    for (const std::string& p : problems) out << " PROBLEM  " << p << '\n';
    out << (ok() ? "dataset validation passed\n" : "dataset validation found discrepancies\n");
    return out.str();
}

DatasetReport cmd_validate_dataset(const std::filesystem::path& root,
                                   const DatasetExpectations& expected) {
    const DatasetIndex index = scan_dataset_layout(root);
    DatasetReport report;
    report.problems = index.problems;

    auto check = [&](const std::string& name, long want, long got) {
        report.checks.push_back({name, std::to_string(want), std::to_string(got), want == got});
    };

    check("total kernels", expected.kernels, static_cast<long>(index.kernels.size()));
    check("total dishes", expected.dishes, static_cast<long>(index.dish_variety.size()));

    std::map<std::string, long> kernels_by_variety, any_by_variety, dishes_by_variety;
    std::array<long, 5> day_totals{};
    long any_total = 0, complete = 0;
    for (const auto& [dish, variety] : index.dish_variety) ++dishes_by_variety[variety];
    for (const DatasetKernel& k : index.kernels) {
        ++kernels_by_variety[k.variety];
        if (k.germination_day >= 1 && k.germination_day <= 5) {
            ++day_totals[static_cast<std::size_t>(k.germination_day - 1)];
            ++any_by_variety[k.variety];
            ++any_total;
        }
        if (k.complete_sessions >= expected.sessions_per_kernel) ++complete;
    }

    for (const auto& [variety, want] : expected.variety_kernels)
        check("kernels[" + variety + "]", want, kernels_by_variety[variety]);
    for (const auto& [variety, want] : expected.variety_dishes)
        check("dishes[" + variety + "]", want, dishes_by_variety[variety]);
    for (int d = 1; d <= 5; ++d)
        check("germinated on day " + std::to_string(d),
              expected.day_totals[static_cast<std::size_t>(d - 1)],
              day_totals[static_cast<std::size_t>(d - 1)]);
    for (const auto& [variety, want] : expected.variety_germinated_any)
        check("germinated any[" + variety + "]", want, any_by_variety[variety]);
    check("germinated total", expected.germinated_total, any_total);
    check("kernels with " + std::to_string(expected.sessions_per_kernel) +
              " complete sessions (both modalities)",
          static_cast<long>(index.kernels.size()), complete);
    return report;
}

std::filesystem::path cmd_synth(const SynthParams& params, const std::filesystem::path& out_root) {
    std::filesystem::create_directories(out_root);
    std::vector<std::filesystem::path> session_paths;
    json dataset_dishes = json::array();

    for (int d = 0; d < params.dishes; ++d) {
        char name[16];
        std::snprintf(name, sizeof name, "dish%02d", d + 1);
        const std::string dish_id = name;
        const std::filesystem::path dish_dir = out_root / dish_id;
        std::filesystem::create_directories(dish_dir);

        SceneSpec spec = make_random_scene(params.seed + static_cast<std::uint64_t>(d));
        spec.noise_sigma = params.noise_sigma;
        spec.dropout_rate = params.dropout_rate;
        std::mt19937_64 germ_rng(spec.seed ^ 0x6e72631ull);
        for (KernelSpec& k : spec.kernels) {
            const auto roll = germ_rng() % 100;
            k.germination_day = roll < 35 ? 0 : static_cast<int>(1 + roll % 5);
        }
        save_scene_spec(spec, dish_dir / "scene.json");

        const SceneRender ref = render_reference(spec);
        write_cube(ref.rgb.raw, dish_dir / "reference_rgb.cube.json");
        save_ground_truth(ref.truth, dish_dir / "reference_truth.json");

        SessionManifest manifest;
        manifest.dish_id = dish_id;
        manifest.variety = "Synthetic";
        manifest.reference_rgb = "reference_rgb.cube.json";
        json dataset_sessions = json::array();
        for (int day = 0; day < params.days; ++day) {
            const std::filesystem::path day_dir = dish_dir / ("day" + std::to_string(day));
            std::filesystem::create_directories(day_dir);
            const Affine2D affine = make_session_affine(spec.seed, day);
            const SessionRender session = render_session(spec, day, affine);
            write_cube(session.rgb.raw, day_dir / "rgb.cube.json");
            write_cube(session.hsi.raw, day_dir / "hsi.cube.json");
            write_cube(session.hsi_dark.raw, day_dir / "dark.cube.json");
            save_ground_truth(session.truth, day_dir / "truth.json");

            DayEntry entry;
            entry.day = day;
            const std::string rel = "day" + std::to_string(day) + "/";
            entry.rgb_frame = rel + "rgb.cube.json";
            entry.hsi_frame = rel + "hsi.cube.json";
            entry.dark_frame = rel + "dark.cube.json";
            manifest.days.push_back(entry);
            dataset_sessions.push_back({{"day", day},
                                        {"rgb", dish_id + "/" + rel + "rgb.cube.json"},
                                        {"hsi", dish_id + "/" + rel + "hsi.cube.json"}});
        }

        json dataset_kernels = json::array();
        for (const KernelSpec& k : spec.kernels) {
            std::map<int, bool> labels;
            for (int day = 1; day <= 5; ++day)
                labels[day] = k.germination_day > 0 && day >= k.germination_day;
            manifest.germination[{k.cell_i, k.cell_j}] = labels;
            dataset_kernels.push_back(
                {{"cell", {k.cell_i, k.cell_j}}, {"germination_day", k.germination_day}});
        }

        save_session_manifest(manifest, dish_dir / "manifest.json");
        session_paths.push_back(dish_id + "/manifest.json");
        dataset_dishes.push_back({{"dish_id", dish_id},
                                  {"variety", manifest.variety},
                                  {"kernels", dataset_kernels},
                                  {"sessions", dataset_sessions}});
    }

    const std::filesystem::path run_path = out_root / "run_manifest.json";
    save_run_manifest(session_paths, run_path);
    std::ofstream ds(out_root / "dataset.json");
    if (!ds) throw ValueError("cannot write " + (out_root / "dataset.json").string());
    ds << json{{"dishes", dataset_dishes}}.dump(2) << '\n';
    return run_path;
}

} // namespace grainpipe
