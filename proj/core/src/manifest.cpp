#include "grainpipe/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "grainpipe/errors.hpp"

namespace grainpipe {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

SessionManifest session_from_json(const json& j, const std::filesystem::path& base) {
    SessionManifest m;
    try {
        m.dish_id = j.at("dish_id").get<std::string>();
        m.variety = j.value("variety", std::string{});
        m.reference_rgb = resolve(base, j.at("reference_rgb").get<std::string>());
        if (j.contains("reference_markers") && !j["reference_markers"].is_null())
            m.reference_markers = resolve(base, j["reference_markers"].get<std::string>());
        for (const json& jd : j.at("days")) {
            DayEntry d;
            d.day = jd.at("day").get<int>();
            d.rgb_frame = resolve(base, jd.at("rgb_frame").get<std::string>());
            d.hsi_frame = resolve(base, jd.at("hsi_frame").get<std::string>());
            d.dark_frame = resolve(base, jd.at("dark_frame").get<std::string>());
            if (jd.contains("grid_file") && !jd["grid_file"].is_null())
                d.grid_file = resolve(base, jd["grid_file"].get<std::string>());
            if (jd.contains("markers_file") && !jd["markers_file"].is_null())
                d.markers_file = resolve(base, jd["markers_file"].get<std::string>());
            m.days.push_back(std::move(d));
        }
        for (const json& jg : j.value("germination", json::array())) {
            const int ci = jg.at("cell").at(0).get<int>();
            const int cj = jg.at("cell").at(1).get<int>();
            std::map<int, bool> labels;
            for (const auto& [day_str, value] : jg.at("labels").items())
                labels[std::stoi(day_str)] = value.get<bool>();
            m.germination[{ci, cj}] = std::move(labels);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("session manifest: ") + e.what());
    }
    std::sort(m.days.begin(), m.days.end(), [](const DayEntry& a, const DayEntry& b) { return a.day < b.day; });
    validate_session_manifest(m);
    return m;
}

json session_to_json(const SessionManifest& m) {
    json j;
    j["dish_id"] = m.dish_id;
    j["variety"] = m.variety;
    j["reference_rgb"] = m.reference_rgb.generic_string();
    if (m.reference_markers) j["reference_markers"] = m.reference_markers->generic_string();
    j["days"] = json::array();
    for (const DayEntry& d : m.days) {
        json jd{{"day", d.day},
                {"rgb_frame", d.rgb_frame.generic_string()},
                {"hsi_frame", d.hsi_frame.generic_string()},
                {"dark_frame", d.dark_frame.generic_string()}};
        if (d.grid_file) jd["grid_file"] = d.grid_file->generic_string();
        if (d.markers_file) jd["markers_file"] = d.markers_file->generic_string();
        j["days"].push_back(std::move(jd));
    }
    j["germination"] = json::array();
    for (const auto& [cell, labels] : m.germination) {
        json jl = json::object();
        for (const auto& [day, flag] : labels) jl[std::to_string(day)] = flag;
        j["germination"].push_back({{"cell", {cell.first, cell.second}}, {"labels", std::move(jl)}});
    }
    return j;
}

} // namespace

void validate_session_manifest(const SessionManifest& m) {
    if (m.dish_id.empty()) throw ValueError("session manifest: empty dish_id");
    if (m.reference_rgb.empty())
        throw ValueError("session manifest " + m.dish_id + ": missing reference_rgb");
    if (m.days.empty()) throw ValueError("session manifest " + m.dish_id + ": no day entries");
    std::set<int> seen;
    for (const DayEntry& d : m.days) {
        if (d.day < 0 || d.day > 5)
            throw ValueError("session manifest " + m.dish_id + ": day " + std::to_string(d.day) +
                             " outside 0..5");
        if (!seen.insert(d.day).second)
            throw ValueError("session manifest " + m.dish_id + ": duplicate day " +
                             std::to_string(d.day));
        if (d.rgb_frame.empty() || d.hsi_frame.empty() || d.dark_frame.empty())
            throw ValueError("session manifest " + m.dish_id + ": day " + std::to_string(d.day) +
                             " has an empty frame path");
    }
    for (const auto& [cell, labels] : m.germination) {
        if (cell.first < 0 || cell.first > 4 || cell.second < 0 || cell.second > 4)
            throw ValueError("session manifest " + m.dish_id + ": cell (" +
                             std::to_string(cell.first) + ", " + std::to_string(cell.second) +
                             ") outside the 5x5 grid");
        bool germinated = false;
        for (const auto& [day, flag] : labels) {
            if (day < 1 || day > 5)
                throw ValueError("session manifest " + m.dish_id +
                                 ": germination label on day " + std::to_string(day) +
                                 " (labels cover days 1..5 only)");
            if (germinated && !flag)
                throw ValueError("session manifest " + m.dish_id + ": cell (" +
                                 std::to_string(cell.first) + ", " + std::to_string(cell.second) +
                                 ") un-germinates on day " + std::to_string(day));
            germinated = germinated || flag;
        }
    }
}

void validate_run_manifest(const RunManifest& manifest) {
    std::set<std::string> ids;
    for (const SessionManifest& m : manifest.dishes) {
        validate_session_manifest(m);
        if (!ids.insert(m.dish_id).second)
            throw ValueError("run manifest: duplicate dish_id " + m.dish_id);
    }
}

SessionManifest load_session_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot read session manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("session manifest " + path.string() + ": " + e.what());
    }
    return session_from_json(j, path.parent_path());
}

RunManifest load_run_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot read run manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError("run manifest " + path.string() + ": " + e.what());
    }
    RunManifest run;
    try {
        for (const json& jd : j.at("dishes")) {
            if (jd.is_string())
                run.dishes.push_back(
                    load_session_manifest(resolve(path.parent_path(), jd.get<std::string>())));
            else
                run.dishes.push_back(session_from_json(jd, path.parent_path()));
        }
    } catch (const json::exception& e) {
        throw FormatError("run manifest " + path.string() + ": " + e.what());
    }
    validate_run_manifest(run);
    return run;
}

void save_session_manifest(const SessionManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write session manifest: " + path.string());
    out << session_to_json(manifest).dump(2) << '\n';
}

void save_run_manifest(const std::vector<std::filesystem::path>& session_paths,
                       const std::filesystem::path& path) {
    json j;
    j["dishes"] = json::array();
    for (const auto& p : session_paths) j["dishes"].push_back(p.generic_string());
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write run manifest: " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace grainpipe
