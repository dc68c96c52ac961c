#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "grainpipe/gridfind.hpp"
#include "grainpipe/kernelproc.hpp"
#include "grainpipe/standardize.hpp"
#include "grainpipe/vision.hpp"

namespace grainpipe {

/// Every tunable the pipeline consumes, in one place. Layering:
/// struct defaults < config file < command-line overrides.
struct PipelineConfig {
    std::uint64_t seed = 0x5eed;
    ChessboardParams chessboard{};
    GridFindParams grid{};
    RansacParams ransac{};
    SegmentParams segment{};
    SpectrumParams spectrum{};
};

/// Applies a JSON config file on top of `config`; unknown keys throw
/// FormatError (typos should not silently fall back to defaults).
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

/// Applies one `dotted.path=value` override, e.g.
/// "grid.refine.window_px=12" or "seed=99". Throws FormatError for unknown
/// paths or unparsable values.
void apply_config_override(PipelineConfig& config, const std::string& assignment);

/// defaults < seed (the GRAINPIPE_SEED hook) < file (if given) < overrides.
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> seed = std::nullopt);

/// Full provenance dump (every field, current values).
void save_config(const PipelineConfig& config, const std::filesystem::path& path);
std::string config_to_json_string(const PipelineConfig& config);

} // namespace grainpipe
