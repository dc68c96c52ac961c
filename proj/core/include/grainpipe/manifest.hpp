#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace grainpipe {

struct DayEntry {
    int day = 0; // 0 = pre-moisture session
    std::filesystem::path rgb_frame;
    std::filesystem::path hsi_frame;
    std::filesystem::path dark_frame;
    std::optional<std::filesystem::path> grid_file;    // precomputed day grid
    std::optional<std::filesystem::path> markers_file; // external marker corners
};

/// Everything known about one dish. The grid reference frame is part of the
/// manifest so a run needs no directory scanning.
struct SessionManifest {
    std::string dish_id;
    std::string variety;
    std::filesystem::path reference_rgb; // white-paper A.1 frame
    std::optional<std::filesystem::path> reference_markers;
    std::vector<DayEntry> days; // sorted by day after load
    /// cell (i, j) -> day -> germinated. Days 1..5 only; day 0 is always
    /// pre-moisture and unlabeled.
    std::map<std::pair<int, int>, std::map<int, bool>> germination;
};

struct RunManifest {
    std::vector<SessionManifest> dishes;
};

/// Throws ValueError on: empty ids/paths, day outside 0..5, duplicate days,
/// cell outside the 5x5 grid, label days outside 1..5, or non-monotone
/// germination (a kernel cannot un-germinate).
void validate_session_manifest(const SessionManifest& manifest);
void validate_run_manifest(const RunManifest& manifest);

/// Relative frame paths are resolved against the manifest's directory.
SessionManifest load_session_manifest(const std::filesystem::path& path);

/// {"dishes": [...]} where each entry is an inline session object or a path
/// to a session manifest file (relative to this file).
RunManifest load_run_manifest(const std::filesystem::path& path);

/// Paths are written as given (keep them relative for relocatable trees).
void save_session_manifest(const SessionManifest& manifest, const std::filesystem::path& path);
void save_run_manifest(const std::vector<std::filesystem::path>& session_paths,
                       const std::filesystem::path& path);

} // namespace grainpipe
