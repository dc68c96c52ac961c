#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "grainpipe/image.hpp"

namespace grainpipe {

/// Mean pseudo-absorbance of one kernel (Section 3.3). `values` covers the
/// retained channels only (first/last 10 trimmed); `wavelengths` are the
/// matching nanometer positions; `n_pixels` the mask size.
struct Spectrum {
    std::vector<double> values;
    std::vector<double> wavelengths;
    std::size_t n_pixels = 0;
    std::size_t dead_pixels = 0;
    bool natural_log = false;
};

struct SegmentParams {
    /// Minimum grayscale spread for a cell to count as containing anything.
    double min_contrast = 0.15;
};

/// Otsu over the cell grayscale, then the largest 8-connected bright
/// component (drops paper reflections). Throws DetectionError when the cell
/// is effectively empty.
BinaryMask segment_kernel(const ImageCube& cell, const SegmentParams& params = {});

/// Dropout repair of one pixel's reflectance spectrum: channels <= 0 (raw
/// zeros can undershoot after dark subtraction) are filled by linear
/// interpolation between the nearest valid flanking channels; boundary runs
/// extend the nearest valid value. Throws ValueError when no channel is
/// valid (dead pixel).
std::vector<double> repair_zero_reflectance(const std::vector<double>& spectrum);

struct SpectrumParams {
    int trim = 10; // channels dropped at each end
    bool natural_log = false;
    double lambda_min_nm = 900.0;
    double lambda_max_nm = 1700.0;
};

/// Per-channel mean of -log10(reflectance) (or -ln with the flag) over the
/// mask, after per-pixel dropout repair; dead pixels are dropped and counted.
/// Throws ValueError for an empty mask, too few channels, or all-dead pixels.
Spectrum mean_pseudo_absorbance(const ImageCube& cell, const BinaryMask& mask,
                                const SpectrumParams& params = {});

/// CSV with header `wavelength_nm,absorbance`, one row per retained channel.
void write_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

struct SpectrumProvenance {
    std::string dish;
    int day = 0;
    int cell_i = 0;
    int cell_j = 0;
};

/// Sidecar JSON: {dish, day, cell, n_pixels, log_base, dead_pixels}.
void write_spectrum_sidecar(const Spectrum& spectrum, const SpectrumProvenance& prov,
                            const std::filesystem::path& path);

} // namespace grainpipe
