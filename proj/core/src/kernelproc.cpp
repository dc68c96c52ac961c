#include "grainpipe/kernelproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grainpipe/errors.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

BinaryMask segment_kernel(const ImageCube& cell, const SegmentParams& params) {
    const GrayImage gray = grayscale(cell);
    const auto [lo, hi] = std::minmax_element(gray.values.begin(), gray.values.end());
    if (*hi - *lo < params.min_contrast)
        throw DetectionError("segment_kernel: cell has no foreground (contrast " +
                             std::to_string(*hi - *lo) + ")");
    const double threshold = otsu_threshold(gray);
    const BinaryMask fg = binarize(gray, threshold);
    const LabeledRegions regions = connected_components(fg, 8);
    if (regions.count < 1) throw DetectionError("segment_kernel: empty foreground");
    return largest_components(regions, 1);
}

std::vector<double> repair_zero_reflectance(const std::vector<double>& spectrum) {
    std::vector<std::size_t> valid;
    for (std::size_t i = 0; i < spectrum.size(); ++i)
        if (spectrum[i] > 0.0) valid.push_back(i);
    if (valid.empty())
        throw ValueError("repair_zero_reflectance: dead pixel (no valid channel)");
    if (valid.size() == spectrum.size()) return spectrum;

    std::vector<double> out = spectrum;
    // Leading and trailing runs take the nearest valid value.
    for (std::size_t i = 0; i < valid.front(); ++i) out[i] = spectrum[valid.front()];
    for (std::size_t i = valid.back() + 1; i < spectrum.size(); ++i)
        out[i] = spectrum[valid.back()];
    // Interior runs interpolate between their flanking valid channels.
    for (std::size_t k = 0; k + 1 < valid.size(); ++k) {
        const std::size_t l = valid[k], r = valid[k + 1];
        for (std::size_t i = l + 1; i < r; ++i) {
            const double t = static_cast<double>(i - l) / static_cast<double>(r - l);
            out[i] = spectrum[l] + t * (spectrum[r] - spectrum[l]);
        }
    }
    return out;
}

Spectrum mean_pseudo_absorbance(const ImageCube& cell, const BinaryMask& mask,
                                const SpectrumParams& params) {
    if (mask.height != cell.height || mask.width != cell.width)
        throw ValueError("mean_pseudo_absorbance: mask does not match the cell");
    const int channels = cell.channels;
    if (channels <= 2 * params.trim)
        throw ValueError("mean_pseudo_absorbance: " + std::to_string(channels) +
                         " channels cannot be trimmed by 2x" + std::to_string(params.trim));

    Spectrum spec;
    spec.n_pixels = mask.count();
    spec.natural_log = params.natural_log;
    if (spec.n_pixels == 0) throw ValueError("mean_pseudo_absorbance: empty mask");

    std::vector<double> acc(static_cast<std::size_t>(channels), 0.0);
    std::vector<double> pixel(static_cast<std::size_t>(channels));
    std::size_t used = 0;
    for (int r = 0; r < cell.height; ++r) {
        for (int c = 0; c < cell.width; ++c) {
            if (!mask.at(r, c)) continue;
            bool any_valid = false;
            for (int k = 0; k < channels; ++k) {
                pixel[static_cast<std::size_t>(k)] = cell.at(r, c, k);
                if (pixel[static_cast<std::size_t>(k)] > 0.0) any_valid = true;
            }
            if (!any_valid) {
                ++spec.dead_pixels;
                continue;
            }
            const std::vector<double> repaired = repair_zero_reflectance(pixel);
            for (int k = 0; k < channels; ++k) {
                const double v = repaired[static_cast<std::size_t>(k)];
                acc[static_cast<std::size_t>(k)] -=
                    params.natural_log ? std::log(v) : std::log10(v);
            }
            ++used;
        }
    }
    if (used == 0) throw ValueError("mean_pseudo_absorbance: every masked pixel is dead");

    const double step = (params.lambda_max_nm - params.lambda_min_nm) / (channels - 1);
    for (int k = params.trim; k < channels - params.trim; ++k) {
        spec.values.push_back(acc[static_cast<std::size_t>(k)] / static_cast<double>(used));
        spec.wavelengths.push_back(params.lambda_min_nm + k * step);
    }
    return spec;
}

void write_spectrum_csv(const Spectrum& spectrum, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write spectrum: " + path.string());
    out << "wavelength_nm,absorbance\n";
    char buf[64];
    for (std::size_t i = 0; i < spectrum.values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.10g,%.10g\n", spectrum.wavelengths[i],
                      spectrum.values[i]);
        out << buf;
    }
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open spectrum: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "wavelength_nm,absorbance")
        throw FormatError("spectrum " + path.string() + ": bad header '" + line + "'");
    Spectrum spec;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError("spectrum " + path.string() + ": bad row '" + line + "'");
        try {
            spec.wavelengths.push_back(std::stod(line.substr(0, comma)));
            spec.values.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw FormatError("spectrum " + path.string() + ": bad row '" + line + "'");
        }
    }
    return spec;
}

void write_spectrum_sidecar(const Spectrum& spectrum, const SpectrumProvenance& prov,
                            const std::filesystem::path& path) {
    const nlohmann::json doc = {
        {"dish", prov.dish},
        {"day", prov.day},
        {"cell", {prov.cell_i, prov.cell_j}},
        {"n_pixels", spectrum.n_pixels},
        {"log_base", spectrum.natural_log ? "ln" : "log10"},
        {"dead_pixels", spectrum.dead_pixels},
    };
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write spectrum sidecar: " + path.string());
    out << doc.dump(2) << "\n";
}

} // namespace grainpipe
