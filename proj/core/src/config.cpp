#include "grainpipe/config.hpp"

#include <fstream>

#include <json.hpp>

#include "grainpipe/errors.hpp"

namespace grainpipe {
namespace {

using nlohmann::json;

json to_json(const EdgeParams& p) {
    return {{"high_ratio", p.high_ratio}, {"low_ratio", p.low_ratio}};
}
json to_json(const CircleHoughParams& p) {
    return {{"vote_ratio", p.vote_ratio},
            {"min_center_distance", p.min_center_distance},
            {"max_candidates", p.max_candidates}};
}
json to_json(const RadiusBand& p) {
    return {{"min_frac", p.min_frac}, {"max_frac", p.max_frac}};
}
json to_json(const LineHoughParams& p) {
    return {{"rho_step", p.rho_step},
            {"theta_step_deg", p.theta_step_deg},
            {"vote_ratio", p.vote_ratio},
            {"min_votes", p.min_votes},
            {"max_lines", p.max_lines},
            {"nms_rho_bins", p.nms_rho_bins},
            {"nms_theta_bins", p.nms_theta_bins}};
}
json to_json(const DishParams& p) {
    return {{"smooth_sigma", p.smooth_sigma},
            {"edges", to_json(p.edges)},
            {"hough", to_json(p.hough)},
            {"radius_band", to_json(p.radius_band)}};
}
json to_json(const GridLineParams& p) {
    return {{"smooth_sigma", p.smooth_sigma},
            {"edges", to_json(p.edges)},
            {"hough", to_json(p.hough)},
            {"cluster_rho_tol", p.cluster_rho_tol},
            {"cluster_theta_tol_deg", p.cluster_theta_tol_deg},
            {"inner_radius_factor", p.inner_radius_factor},
            {"marker_mask_scale", p.marker_mask_scale}};
}
json to_json(const RefineParams& p) {
    return {{"smooth_sigma", p.smooth_sigma}, {"window_px", p.window_px}};
}
json to_json(const MarkerParams& p) {
    return {{"min_side_px", p.min_side_px},
            {"max_side_px", p.max_side_px},
            {"max_side_ratio", p.max_side_ratio},
            {"min_fill", p.min_fill}};
}
json to_json(const GridFindParams& p) {
    return {{"dish", to_json(p.dish)},
            {"lines", to_json(p.lines)},
            {"refine", to_json(p.refine)},
            {"markers", to_json(p.markers)}};
}
json to_json(const ChessboardParams& p) {
    return {{"pattern", p.pattern},
            {"square_size_hint_px", p.square_size_hint_px},
            {"smooth_sigma", p.smooth_sigma},
            {"response_ratio", p.response_ratio},
            {"link_radius_factor", p.link_radius_factor},
            {"min_size_factor", p.min_size_factor},
            {"max_size_factor", p.max_size_factor}};
}
json to_json(const RansacParams& p) {
    return {{"inlier_tol_px", p.inlier_tol_px}, {"iterations", p.iterations}, {"seed", p.seed}};
}
json to_json(const SegmentParams& p) { return {{"min_contrast", p.min_contrast}}; }
json to_json(const SpectrumParams& p) {
    return {{"trim", p.trim},
            {"natural_log", p.natural_log},
            {"lambda_min_nm", p.lambda_min_nm},
            {"lambda_max_nm", p.lambda_max_nm}};
}

json to_json(const PipelineConfig& c) {
    return {{"seed", c.seed},
            {"chessboard", to_json(c.chessboard)},
            {"grid", to_json(c.grid)},
            {"ransac", to_json(c.ransac)},
            {"segment", to_json(c.segment)},
            {"spectrum", to_json(c.spectrum)}};
}

/// Assigns `patch` leaves into `full`, requiring every visited path to
/// already exist with a compatible shape.
void merge_strict(json& full, const json& patch, const std::string& prefix) {
    if (!patch.is_object())
        throw FormatError("config node '" + (prefix.empty() ? "<root>" : prefix) +
                          "' must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!full.contains(key)) throw FormatError("unknown config key: " + path);
        json& slot = full[key];
        if (slot.is_object()) {
            merge_strict(slot, value, path);
        } else {
            if (value.is_object() || value.is_array())
                throw FormatError("config key " + path + " expects a scalar");
            if (slot.is_boolean() != value.is_boolean())
                throw FormatError("config key " + path + " has the wrong type");
            if (!slot.is_boolean() && !value.is_number())
                throw FormatError("config key " + path + " expects a number");
            slot = value;
        }
    }
}

void read_back(const json& j, PipelineConfig& c) {
    c.seed = j.at("seed").get<std::uint64_t>();
    const json& cb = j.at("chessboard");
    c.chessboard.pattern = cb.at("pattern").get<int>();
    c.chessboard.square_size_hint_px = cb.at("square_size_hint_px").get<double>();
    c.chessboard.smooth_sigma = cb.at("smooth_sigma").get<double>();
    c.chessboard.response_ratio = cb.at("response_ratio").get<double>();
    c.chessboard.link_radius_factor = cb.at("link_radius_factor").get<double>();
    c.chessboard.min_size_factor = cb.at("min_size_factor").get<double>();
    c.chessboard.max_size_factor = cb.at("max_size_factor").get<double>();

    const json& gd = j.at("grid").at("dish");
    c.grid.dish.smooth_sigma = gd.at("smooth_sigma").get<double>();
    c.grid.dish.edges.high_ratio = gd.at("edges").at("high_ratio").get<double>();
    c.grid.dish.edges.low_ratio = gd.at("edges").at("low_ratio").get<double>();
    c.grid.dish.hough.vote_ratio = gd.at("hough").at("vote_ratio").get<double>();
    c.grid.dish.hough.min_center_distance = gd.at("hough").at("min_center_distance").get<double>();
    c.grid.dish.hough.max_candidates = gd.at("hough").at("max_candidates").get<int>();
    c.grid.dish.radius_band.min_frac = gd.at("radius_band").at("min_frac").get<double>();
    c.grid.dish.radius_band.max_frac = gd.at("radius_band").at("max_frac").get<double>();

    const json& gl = j.at("grid").at("lines");
    c.grid.lines.smooth_sigma = gl.at("smooth_sigma").get<double>();
    c.grid.lines.edges.high_ratio = gl.at("edges").at("high_ratio").get<double>();
    c.grid.lines.edges.low_ratio = gl.at("edges").at("low_ratio").get<double>();
    c.grid.lines.hough.rho_step = gl.at("hough").at("rho_step").get<double>();
    c.grid.lines.hough.theta_step_deg = gl.at("hough").at("theta_step_deg").get<double>();
    c.grid.lines.hough.vote_ratio = gl.at("hough").at("vote_ratio").get<double>();
    c.grid.lines.hough.min_votes = gl.at("hough").at("min_votes").get<int>();
    c.grid.lines.hough.max_lines = gl.at("hough").at("max_lines").get<int>();
    c.grid.lines.hough.nms_rho_bins = gl.at("hough").at("nms_rho_bins").get<int>();
    c.grid.lines.hough.nms_theta_bins = gl.at("hough").at("nms_theta_bins").get<int>();
    c.grid.lines.cluster_rho_tol = gl.at("cluster_rho_tol").get<double>();
    c.grid.lines.cluster_theta_tol_deg = gl.at("cluster_theta_tol_deg").get<double>();
    c.grid.lines.inner_radius_factor = gl.at("inner_radius_factor").get<double>();
    c.grid.lines.marker_mask_scale = gl.at("marker_mask_scale").get<double>();

    const json& gr = j.at("grid").at("refine");
    c.grid.refine.smooth_sigma = gr.at("smooth_sigma").get<double>();
    c.grid.refine.window_px = gr.at("window_px").get<int>();

    const json& gm = j.at("grid").at("markers");
    c.grid.markers.min_side_px = gm.at("min_side_px").get<double>();
    c.grid.markers.max_side_px = gm.at("max_side_px").get<double>();
    c.grid.markers.max_side_ratio = gm.at("max_side_ratio").get<double>();
    c.grid.markers.min_fill = gm.at("min_fill").get<double>();

    const json& ra = j.at("ransac");
    c.ransac.inlier_tol_px = ra.at("inlier_tol_px").get<double>();
    c.ransac.iterations = ra.at("iterations").get<int>();
    c.ransac.seed = ra.at("seed").get<std::uint64_t>();

    c.segment.min_contrast = j.at("segment").at("min_contrast").get<double>();

    const json& sp = j.at("spectrum");
    c.spectrum.trim = sp.at("trim").get<int>();
    c.spectrum.natural_log = sp.at("natural_log").get<bool>();
    c.spectrum.lambda_min_nm = sp.at("lambda_min_nm").get<double>();
    c.spectrum.lambda_max_nm = sp.at("lambda_max_nm").get<double>();
}

void apply_patch(PipelineConfig& config, const json& patch) {
    json full = to_json(config);
    merge_strict(full, patch, "");
    read_back(full, config);
}

} // namespace

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot read config file: " + path.string());
    json patch;
    try {
        in >> patch;
    } catch (const json::exception& e) {
        throw FormatError("config file " + path.string() + ": " + e.what());
    }
    apply_patch(config, patch);
}

void apply_config_override(PipelineConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw FormatError("config override must look like key.path=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) throw FormatError("cannot parse override value: " + assignment);

    // Build the nested single-leaf patch from the dotted path.
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        parts.push_back(path.substr(start, dot - start));
        if (parts.back().empty()) throw FormatError("empty path segment in override: " + assignment);
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json patch = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    apply_patch(config, patch);
}

PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> seed) {
    PipelineConfig config;
    if (seed) config.seed = *seed; // GRAINPIPE_SEED: above defaults, below file/flags
    if (file) apply_config_file(config, *file);
    for (const std::string& o : overrides) apply_config_override(config, o);
    return config;
}

std::string config_to_json_string(const PipelineConfig& config) {
    return to_json(config).dump(2) + "\n";
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write config: " + path.string());
    out << config_to_json_string(config);
}

} // namespace grainpipe
