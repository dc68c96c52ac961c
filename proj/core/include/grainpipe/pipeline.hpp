#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grainpipe/config.hpp"
#include "grainpipe/gridtrack.hpp"
#include "grainpipe/manifest.hpp"

namespace grainpipe {

/// A.1 on one reference frame: standardize, optional external markers,
/// grid detection, persist. Returns the model (plate coordinates).
GridModel cmd_detect_grid(const std::filesystem::path& reference_frame,
                          const std::optional<std::filesystem::path>& dark_frame,
                          const std::optional<std::filesystem::path>& markers_file,
                          const std::string& dish_id, const PipelineConfig& config,
                          const std::filesystem::path& out_grid);

struct LocalizeResult {
    LocalizedGrid rgb;
    std::optional<LocalizedGrid> hsi;
};

/// A.2 (and A.3 when an HSI frame accompanies the RGB one). Writes
/// rgb_grid.json / hsi_grid.json plus localize_meta.json into out_dir.
LocalizeResult cmd_localize(const std::filesystem::path& grid_file,
                            const std::filesystem::path& rgb_frame,
                            const std::optional<std::filesystem::path>& hsi_frame,
                            const std::optional<std::filesystem::path>& dark_frame,
                            const std::optional<std::filesystem::path>& markers_file,
                            const PipelineConfig& config, const std::filesystem::path& out_dir);

/// Standardizes `frame` (RGB: no dark) and cuts the 25 cells of the given
/// day grid into out_dir/cell_<i>_<j>.*. Returns the cell header paths.
std::vector<std::filesystem::path> cmd_extract(const std::filesystem::path& grid_file,
                                               const std::filesystem::path& frame,
                                               const std::optional<std::filesystem::path>& dark_frame,
                                               const PipelineConfig& config,
                                               const std::string& dish_id, int day,
                                               const std::filesystem::path& out_dir);

struct SegmentOutcome {
    std::filesystem::path cell;
    bool ok = false;
    std::string error;           // set when !ok
    std::filesystem::path mask;  // written when ok
    std::filesystem::path csv;   // written for reflectance HSI cells
};

/// Per-cell segmentation and, for reflectance HSI cells, trimmed mean
/// pseudo-absorbance spectra (CSV + sidecar). Cell failures are reported,
/// not thrown.
std::vector<SegmentOutcome> cmd_segment_spectra(const std::vector<std::filesystem::path>& cells,
                                                const PipelineConfig& config,
                                                const std::filesystem::path& out_dir,
                                                bool spectra = true);

struct DishOutcome {
    std::string dish_id;
    bool ok = false;
    std::string error;                       // dish-level failure
    std::vector<std::string> cell_failures;  // quarantined kernels
};

struct RunReport {
    std::vector<DishOutcome> dishes;
    bool all_ok() const;
};

/// Whole chain for every dish/day in the manifest, dish-parallel with
/// `jobs` workers. Per-dish failures quarantine that dish only. Writes
/// config.json and report.json under out_root; the tree layout is a pure
/// function of the manifest.
RunReport cmd_run(const RunManifest& manifest, const PipelineConfig& config,
                  const std::filesystem::path& out_root, int jobs = 0);

struct DatasetExpectations {
    long kernels = 2242;
    long dishes = 90;
    std::map<std::string, long> variety_kernels{
        {"Laureate_0", 624}, {"Laureate_1", 600}, {"Prospect_0", 624}, {"Prospect_1", 394}};
    std::map<std::string, long> variety_dishes{
        {"Laureate_0", 25}, {"Laureate_1", 24}, {"Prospect_0", 25}, {"Prospect_1", 16}};
    std::map<std::string, long> variety_germinated_any{
        {"Laureate_0", 91}, {"Laureate_1", 202}, {"Prospect_0", 83}, {"Prospect_1", 5}};
    std::array<long, 5> day_totals{28, 93, 106, 88, 67}; // newly germinated, days 1..5
    long germinated_total = 382;
    int sessions_per_kernel = 6; // both modalities each time
};

struct DatasetCheck {
    std::string name;
    std::string expected;
    std::string actual;
    bool ok = false;
};

struct DatasetReport {
    std::vector<DatasetCheck> checks;
    std::vector<std::string> problems; // missing files etc.
    bool ok() const;
    std::string format() const; // human-readable itemized report
};

/// One kernel row of the dataset index (the layout adapter's output).
struct DatasetKernel {
    std::string dish;
    std::string variety;
    int cell_i = 0;
    int cell_j = 0;
    int germination_day = 0; // 0 = never germinated
    int complete_sessions = 0;
};

struct DatasetIndex {
    std::vector<DatasetKernel> kernels;
    std::map<std::string, std::string> dish_variety;
    std::vector<std::string> problems;
};

/// THE layout adapter: parses <root>/dataset.json and verifies the frame
/// files it references exist. Everything else in the validator works off
/// the returned index, so supporting another archive layout means changing
/// only this function.
DatasetIndex scan_dataset_layout(const std::filesystem::path& root);

DatasetReport cmd_validate_dataset(const std::filesystem::path& root,
                                   const DatasetExpectations& expected = {});

struct SynthParams {
    std::uint64_t seed = 1;
    int dishes = 1;
    int days = 6; // sessions 0..days-1
    double noise_sigma = 0.01;
    double dropout_rate = 0.002;
};

/// Renders a full synthetic mini-dataset: per-dish reference + day frames
/// (cube containers), ground truth JSONs, session manifests, one run
/// manifest, and a dataset.json index for the validator.
std::filesystem::path cmd_synth(const SynthParams& params, const std::filesystem::path& out_root);

} // namespace grainpipe
