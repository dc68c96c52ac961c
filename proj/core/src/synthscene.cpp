#include "grainpipe/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "grainpipe/errors.hpp"
#include "grainpipe/fiducial.hpp"

namespace grainpipe {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Noise / dropout stream ids, offset by day where applicable.
constexpr std::uint64_t kStreamRgbRef = 1;
constexpr std::uint64_t kStreamRgbDay = 10;
constexpr std::uint64_t kStreamHsiDay = 40;
constexpr std::uint64_t kStreamDarkDay = 70;
constexpr std::uint64_t kStreamDropDay = 100;

enum MaterialId : int {
    M_BACKGROUND = 0,
    M_PLATE,
    M_STRIP,
    M_RIM,
    M_PAPER,
    M_BAR,
    M_MARKER_BLACK,
    M_MARKER_WHITE,
    M_BOARD_BLACK,
    M_BOARD_WHITE,
    M_FIXED_COUNT,
};

struct MarkerShape {
    Point2 center;
    double cos_t = 1.0, sin_t = 0.0;
    double inv_module = 1.0;
    std::uint16_t code = 0;
};

struct KernelShape {
    Point2 center;
    double cos_t = 1.0, sin_t = 0.0;
    double inv_a2 = 0.0, inv_b2 = 0.0;
    bool sprouted = false;
    Point2 sprout_center;
    double sprout_inv_a2 = 0.0, sprout_inv_b2 = 0.0;
};

/// Scene shapes in canonical plate coordinates, evaluated top-down in
/// painter order. Session repositioning is handled by the caller mapping
/// sample points back into this frame.
struct CanonicalScene {
    const SceneSpec& spec;
    bool with_kernels = false;

    double cos_g = 1.0, sin_g = 0.0; // grid rotation
    double paper_radius = 0.0;
    double bar_clip_sq = 0.0; // bars end overlapping the rim
    double strip_left_lo, strip_left_hi, strip_right_lo, strip_right_hi;
    std::array<Point2, 4> board_centers{};
    std::array<MarkerShape, 2> markers{};
    std::vector<KernelShape> kernels;

    CanonicalScene(const SceneSpec& s, int day, bool kernels_on) : spec(s), with_kernels(kernels_on) {
        const double g = spec.grid_rotation_deg * kPi / 180.0;
        cos_g = std::cos(g);
        sin_g = std::sin(g);
        paper_radius = spec.dish_radius - spec.rim_width;
        const double clip = spec.dish_radius - 0.5 * spec.rim_width;
        bar_clip_sq = clip * clip;

        strip_left_lo = spec.strip_margin;
        strip_left_hi = spec.strip_margin + spec.strip_width;
        strip_right_hi = spec.plate_width - spec.strip_margin;
        strip_right_lo = strip_right_hi - spec.strip_width;

        board_centers = default_board_centers(spec);

        const auto& dict = marker_dictionary();
        for (int i = 0; i < 2; ++i) {
            const MarkerSpec& ms = spec.markers[i];
            if (ms.id < 0 || ms.id >= static_cast<int>(dict.size()))
                throw ValueError("marker id out of dictionary range: " + std::to_string(ms.id));
            const double t = g + ms.orientation * (kPi / 2.0);
            markers[i] = {ms.center, std::cos(t), std::sin(t), 1.0 / spec.marker_module,
                          dict[static_cast<std::size_t>(ms.id)]};
        }
        if (spec.markers[0].id == spec.markers[1].id) throw ValueError("duplicate marker id in scene spec");

        if (with_kernels) {
            kernels.reserve(spec.kernels.size());
            for (const KernelSpec& k : spec.kernels) {
                KernelShape ks;
                ks.center = k.center;
                ks.cos_t = std::cos(k.angle_rad);
                ks.sin_t = std::sin(k.angle_rad);
                ks.inv_a2 = 1.0 / (k.semi_major * k.semi_major);
                ks.inv_b2 = 1.0 / (k.semi_minor * k.semi_minor);
                ks.sprouted = k.germination_day > 0 && day >= k.germination_day;
                if (ks.sprouted) {
                    const double sa = 0.6 * k.semi_major;
                    const double sb = 0.35 * k.semi_minor;
                    const double off = k.semi_major + 0.4 * sa;
                    ks.sprout_center = {k.center.x + ks.cos_t * off, k.center.y + ks.sin_t * off};
                    ks.sprout_inv_a2 = 1.0 / (sa * sa);
                    ks.sprout_inv_b2 = 1.0 / (sb * sb);
                }
                kernels.push_back(ks);
            }
        }
    }

    static std::array<Point2, 4> default_board_centers(const SceneSpec& s) {
        const double x0 = s.strip_margin + s.board_inset;
        const double x1 = s.plate_width - s.strip_margin - s.board_inset;
        const double y0 = s.board_inset;
        const double y1 = s.plate_height - s.board_inset;
        return {Point2{x0, y0}, Point2{x1, y0}, Point2{x0, y1}, Point2{x1, y1}};
    }

    int marker_material(const MarkerShape& mk, double x, double y) const {
        const double dx = x - mk.center.x;
        const double dy = y - mk.center.y;
        const double u = (mk.cos_t * dx + mk.sin_t * dy) * mk.inv_module + 4.0;
        const double v = (-mk.sin_t * dx + mk.cos_t * dy) * mk.inv_module + 4.0;
        if (u < 0.0 || u >= 8.0 || v < 0.0 || v >= 8.0) return -1;
        if (u < 1.0 || u >= 7.0 || v < 1.0 || v >= 7.0) return M_MARKER_WHITE; // quiet zone
        const int gc = static_cast<int>(u - 1.0);
        const int gr = static_cast<int>(v - 1.0);
        if (gr == 0 || gr == 5 || gc == 0 || gc == 5) return M_MARKER_BLACK; // border ring
        const int bit = (gr - 1) * 4 + (gc - 1);
        return (mk.code >> bit) & 1 ? M_MARKER_BLACK : M_MARKER_WHITE;
    }

    int decoy_material(const DecoySpec& d, double x, double y) const {
        const double dx = x - d.center.x;
        const double dy = y - d.center.y;
        switch (d.type) {
        case DecoySpec::Type::BrightSpeck:
            return dx * dx + dy * dy <= d.radius * d.radius ? 1 : -1;
        case DecoySpec::Type::Ring: {
            const double r = std::sqrt(dx * dx + dy * dy);
            return std::abs(r - d.radius) <= 0.5 * d.width ? 1 : -1;
        }
        case DecoySpec::Type::Scratch: {
            const double c = std::cos(d.angle_rad), s = std::sin(d.angle_rad);
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            return std::abs(u) <= d.length && std::abs(v) <= 0.5 * d.width ? 1 : -1;
        }
        }
        return -1;
    }

    int material_at(double x, double y) const {
        for (std::size_t i = 0; i < spec.decoys.size(); ++i)
            if (decoy_material(spec.decoys[i], x, y) >= 0)
                return M_FIXED_COUNT + static_cast<int>(i);

        const int decoy_count = static_cast<int>(spec.decoys.size());
        const int kernel_base = M_FIXED_COUNT + decoy_count;
        const int sprout_base = kernel_base + static_cast<int>(kernels.size());
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            const KernelShape& k = kernels[i];
            double dx = x - k.center.x, dy = y - k.center.y;
            double u = k.cos_t * dx + k.sin_t * dy;
            double v = -k.sin_t * dx + k.cos_t * dy;
            if (u * u * k.inv_a2 + v * v * k.inv_b2 <= 1.0) return kernel_base + static_cast<int>(i);
            if (k.sprouted) {
                dx = x - k.sprout_center.x;
                dy = y - k.sprout_center.y;
                u = k.cos_t * dx + k.sin_t * dy;
                v = -k.sin_t * dx + k.cos_t * dy;
                if (u * u * k.sprout_inv_a2 + v * v * k.sprout_inv_b2 <= 1.0)
                    return sprout_base + static_cast<int>(i);
            }
        }

        for (const MarkerShape& mk : markers) {
            const int m = marker_material(mk, x, y);
            if (m >= 0) return m;
        }

        for (const Point2& bc : board_centers) {
            const double half = 0.5 * spec.board_pattern * spec.board_square;
            const double dx = x - bc.x, dy = y - bc.y;
            if (std::abs(dx) < half && std::abs(dy) < half) {
                const int cx = static_cast<int>((dx + half) / spec.board_square);
                const int cy = static_cast<int>((dy + half) / spec.board_square);
                return (cx + cy) % 2 == 0 ? M_BOARD_WHITE : M_BOARD_BLACK;
            }
        }

        const double dx = x - spec.dish_center.x;
        const double dy = y - spec.dish_center.y;
        const double r2 = dx * dx + dy * dy;
        if (r2 <= bar_clip_sq) {
            const double u = cos_g * dx + sin_g * dy;
            const double v = -sin_g * dx + cos_g * dy;
            const double s = spec.grid_spacing;
            const double hw = 0.5 * spec.bar_width;
            const long kx = std::lround(u / s + 2.5);
            if (kx >= 0 && kx <= 5 && std::abs(u - (kx - 2.5) * s) <= hw) return M_BAR;
            const long ky = std::lround(v / s + 2.5);
            if (ky >= 0 && ky <= 5 && std::abs(v - (ky - 2.5) * s) <= hw) return M_BAR;
        }
        if (r2 <= paper_radius * paper_radius) return M_PAPER;
        if (r2 <= spec.dish_radius * spec.dish_radius) return M_RIM;

        if (y >= 0.0 && y <= spec.plate_height) {
            if ((x >= strip_left_lo && x <= strip_left_hi) ||
                (x >= strip_right_lo && x <= strip_right_hi))
                return M_STRIP;
            if (x >= 0.0 && x <= spec.plate_width) return M_PLATE;
        }
        return M_BACKGROUND;
    }
};

/// Per-material reflectance rows for one modality.
std::vector<std::vector<double>> reflectance_table(const CanonicalScene& scene, bool rgb) {
    const SceneSpec& spec = scene.spec;
    const int channels = rgb ? 3 : spec.hsi_channels;
    const double paper = spec.white_paper ? spec.paper_white_albedo : spec.paper_black_albedo;
    std::vector<std::vector<double>> table;
    table.reserve(M_FIXED_COUNT + spec.decoys.size() + 2 * scene.kernels.size());

    auto flat = [&](double a) { return std::vector<double>(static_cast<std::size_t>(channels), a); };
    table.push_back(flat(0.04)); // background
    table.push_back(flat(0.30)); // plate
    table.push_back(flat(0.95)); // strip
    table.push_back(flat(0.08)); // rim
    table.push_back(flat(paper));
    table.push_back(flat(0.05)); // bar
    table.push_back(flat(0.05)); // marker black
    table.push_back(flat(0.95)); // marker white
    table.push_back(flat(0.06)); // board black
    table.push_back(flat(0.95)); // board white

    for (const DecoySpec& d : spec.decoys) table.push_back(flat(d.albedo));

    auto kernel_row = [&](const KernelSpec& k, double boost) {
        std::vector<double> row(static_cast<std::size_t>(channels));
        if (rgb) {
            for (int c = 0; c < 3; ++c) row[c] = std::min(0.9, k.rgb_albedo[c] + boost);
        } else {
            if (static_cast<int>(k.hsi_reflectance.size()) != channels)
                throw ValueError("kernel HSI reflectance length " +
                                 std::to_string(k.hsi_reflectance.size()) + " != channel count " +
                                 std::to_string(channels));
            for (int c = 0; c < channels; ++c) row[c] = std::min(0.9, k.hsi_reflectance[c] + boost);
        }
        return row;
    };
    if (scene.with_kernels) {
        for (const KernelSpec& k : spec.kernels) table.push_back(kernel_row(k, 0.0));
        for (const KernelSpec& k : spec.kernels) table.push_back(kernel_row(k, 0.15));
    }
    return table;
}

std::vector<double> white_levels(bool rgb, int channels) {
    std::vector<double> l(static_cast<std::size_t>(channels));
    if (rgb) {
        l = {0.94, 0.90, 0.87};
    } else {
        for (int c = 0; c < channels; ++c)
            l[c] = 0.90 - 0.05 * std::sin(kPi * c / std::max(1, channels - 1));
    }
    return l;
}

double dark_value(const SceneSpec& spec, int channels, int ch, int row, int height) {
    const double base = spec.hsi_dark_level * (1.0 + 0.1 * std::sin(1.0 + 2.0 * kPi * ch / channels));
    return base * (1.0 + 0.2 * std::sin(2.0 * kPi * row / height + 0.7));
}

struct FrameParams {
    bool rgb = true;
    int day = 0; // stream offset only
    std::uint64_t noise_stream = kStreamRgbRef;
    bool with_dark = false;    // add the HSI dark current
    bool with_dropout = false; // apply raw zeroing faults
};

RenderedFrame render_frame(const CanonicalScene& scene, const Affine2D& session, const FrameParams& fp) {
    const SceneSpec& spec = scene.spec;
    const double scale = fp.rgb ? 1.0 : spec.hsi_scale;
    const double stretch = fp.rgb ? spec.stretch_rgb : spec.stretch_hsi;
    const double sx = scale * stretch;
    const double sy = scale;
    const double m = spec.frame_margin;
    const int width = static_cast<int>(std::lround((spec.plate_width + 2.0 * m) * sx));
    const int height = static_cast<int>(std::lround((spec.plate_height + 2.0 * m) * sy));
    const int channels = fp.rgb ? 3 : spec.hsi_channels;
    const double maxval = fp.rgb ? 255.0 : 4095.0;

    Affine2D phys_to_raw;
    phys_to_raw.m = {sx, 0.0, (m + 0.5) * sx - 0.5, 0.0, sy, (m + 0.5) * sy - 0.5};
    const Affine2D raw_to_canon = session.then(phys_to_raw).inverse();

    const auto table = reflectance_table(scene, fp.rgb);
    const auto levels = white_levels(fp.rgb, channels);

    RenderedFrame out;
    out.raw = ImageCube(height, width, channels, fp.rgb ? 8 : 12,
                        fp.rgb ? Modality::RGB : Modality::HSI);
    out.phys_to_raw = phys_to_raw;

    std::mt19937_64 noise_rng(mix_seed(spec.seed, fp.noise_stream + fp.day));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::mt19937_64 drop_rng(mix_seed(spec.seed, kStreamDropDay + fp.day));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const bool noisy = spec.noise_sigma > 0.0;
    const bool dropping = fp.with_dropout && spec.dropout_rate > 0.0;

    std::vector<double> mixed(static_cast<std::size_t>(channels));
    static constexpr double corner_off[4][2] = {{-0.25, -0.25}, {0.25, -0.25}, {-0.25, 0.25}, {0.25, 0.25}};

    for (int r = 0; r < height; ++r) {
        const double gain = 1.0 - spec.illumination_amplitude *
                                      std::pow(std::sin(kPi * r / height + spec.illumination_phase), 2);
        for (int c = 0; c < width; ++c) {
            int first = -1;
            bool uniform = true;
            for (int k = 0; k < 4; ++k) {
                const Point2 p = raw_to_canon.apply({c + corner_off[k][0], r + corner_off[k][1]});
                const int id = scene.material_at(p.x, p.y);
                if (k == 0)
                    first = id;
                else if (id != first)
                    uniform = false;
            }
            const double* refl = nullptr;
            if (uniform) {
                refl = table[static_cast<std::size_t>(first)].data();
            } else {
                std::fill(mixed.begin(), mixed.end(), 0.0);
                for (int ky = 0; ky < 4; ++ky)
                    for (int kx = 0; kx < 4; ++kx) {
                        const Point2 p = raw_to_canon.apply(
                            {c - 0.375 + 0.25 * kx, r - 0.375 + 0.25 * ky});
                        const auto& row = table[static_cast<std::size_t>(scene.material_at(p.x, p.y))];
                        for (int ch = 0; ch < channels; ++ch) mixed[ch] += row[ch];
                    }
                for (int ch = 0; ch < channels; ++ch) mixed[ch] *= 1.0 / 16.0;
                refl = mixed.data();
            }
            for (int ch = 0; ch < channels; ++ch) {
                double v = refl[ch] * gain * levels[ch];
                if (fp.with_dark) v += dark_value(spec, channels, ch, r, height);
                v *= maxval;
                if (noisy) v += spec.noise_sigma * maxval * gauss(noise_rng);
                if (dropping && uni(drop_rng) < spec.dropout_rate) v = 0.0;
                if (spec.quantize) v = std::clamp(std::round(v), 0.0, maxval);
                out.raw.at(r, c, ch) = v;
            }
        }
    }
    return out;
}

/// Dark reference frame: shutter closed, dark current plus read noise only.
RenderedFrame render_dark(const SceneSpec& spec, int day, const Affine2D& phys_to_raw, int height,
                          int width) {
    const int channels = spec.hsi_channels;
    RenderedFrame out;
    out.raw = ImageCube(height, width, channels, 12, Modality::HSI);
    out.phys_to_raw = phys_to_raw;
    std::mt19937_64 rng(mix_seed(spec.seed, kStreamDarkDay + day));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sigma = 0.3 * spec.noise_sigma * 4095.0;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            for (int ch = 0; ch < channels; ++ch) {
                double v = dark_value(spec, channels, ch, r, height) * 4095.0;
                if (sigma > 0.0) v += sigma * gauss(rng);
                if (spec.quantize) v = std::clamp(std::round(v), 0.0, 4095.0);
                out.raw.at(r, c, ch) = v;
            }
    return out;
}

GroundTruth make_truth(const SceneSpec& spec, const CanonicalScene& scene, const Affine2D& session,
                       const Affine2D& phys_to_raw_rgb, const Affine2D& phys_to_raw_hsi) {
    GroundTruth gt;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            gt.lattice[{i, j}] = session.apply(lattice_to_phys(spec, i, j));

    const double rot = std::atan2(session.m[3], session.m[0]);
    const double sim_scale = std::sqrt(std::abs(session.det()));

    std::array<int, 2> order{0, 1};
    if (spec.markers[0].id > spec.markers[1].id) order = {1, 0};
    const double g = spec.grid_rotation_deg * kPi / 180.0;
    static constexpr double pat[4][2] = {{-3.0, -3.0}, {3.0, -3.0}, {3.0, 3.0}, {-3.0, 3.0}};
    for (int oi = 0; oi < 2; ++oi) {
        const MarkerSpec& ms = spec.markers[order[oi]];
        gt.marker_ids[oi] = ms.id;
        const double t = g + ms.orientation * (kPi / 2.0);
        const double ct = std::cos(t), st = std::sin(t);
        for (int k = 0; k < 4; ++k) {
            const double px = pat[k][0] * spec.marker_module;
            const double py = pat[k][1] * spec.marker_module;
            gt.marker_corners[oi][k] =
                session.apply({ms.center.x + ct * px - st * py, ms.center.y + st * px + ct * py});
        }
    }

    const auto bc = CanonicalScene::default_board_centers(spec);
    for (int i = 0; i < 4; ++i) gt.board_centers[i] = session.apply(bc[i]);
    gt.board_square_w = spec.board_square * sim_scale;
    gt.board_square_h = spec.board_square * sim_scale;

    gt.dish.center = session.apply(spec.dish_center);
    gt.dish.radius = (spec.dish_radius - spec.rim_width) * sim_scale;

    const double x0 = spec.strip_margin, x1 = spec.strip_margin + spec.strip_width;
    const double x3 = spec.plate_width - spec.strip_margin, x2 = x3 - spec.strip_width;
    const double h = spec.plate_height;
    gt.strips[0] = {session.apply({x0, 0}), session.apply({x1, 0}), session.apply({x1, h}),
                    session.apply({x0, h})};
    gt.strips[1] = {session.apply({x2, 0}), session.apply({x3, 0}), session.apply({x3, h}),
                    session.apply({x2, h})};

    gt.kernels = spec.kernels;
    for (KernelSpec& k : gt.kernels) {
        k.center = session.apply(k.center);
        k.angle_rad += rot;
        k.semi_major *= sim_scale;
        k.semi_minor *= sim_scale;
    }

    gt.session_affine = session;
    gt.phys_to_raw_rgb = phys_to_raw_rgb;
    gt.phys_to_raw_hsi = phys_to_raw_hsi;
    return gt;
}

/// The would-be raw affine for a modality; used when the frame itself is not
/// rendered (e.g. the HSI affine of a reference scene).
Affine2D nominal_phys_to_raw(const SceneSpec& spec, bool rgb) {
    const double scale = rgb ? 1.0 : spec.hsi_scale;
    const double sx = scale * (rgb ? spec.stretch_rgb : spec.stretch_hsi);
    const double sy = scale;
    Affine2D a;
    a.m = {sx, 0.0, (spec.frame_margin + 0.5) * sx - 0.5, 0.0, sy, (spec.frame_margin + 0.5) * sy - 0.5};
    return a;
}

nlohmann::json point_json(const Point2& p) { return nlohmann::json::array({p.x, p.y}); }

Point2 point_from_json(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

nlohmann::json affine_json(const Affine2D& a) { return nlohmann::json(a.m); }

} // namespace

Point2 lattice_to_phys(const SceneSpec& spec, double lx, double ly) {
    const double g = spec.grid_rotation_deg * kPi / 180.0;
    const double u = (lx - 2.5) * spec.grid_spacing;
    const double v = (ly - 2.5) * spec.grid_spacing;
    return {spec.dish_center.x + std::cos(g) * u - std::sin(g) * v,
            spec.dish_center.y + std::sin(g) * u + std::cos(g) * v};
}

void place_fiducials(SceneSpec& spec) {
    if (spec.markers[0].id > spec.markers[1].id) std::swap(spec.markers[0], spec.markers[1]);
    spec.markers[0].center = lattice_to_phys(spec, 2.5, -0.95);
    spec.markers[1].center = lattice_to_phys(spec, -0.95, 2.5);
}

SceneRender render_reference(const SceneSpec& spec) {
    SceneSpec ref = spec;
    ref.white_paper = true;
    const CanonicalScene scene(ref, -1, false);
    const Affine2D session = Affine2D::identity();
    FrameParams fp;
    fp.rgb = true;
    fp.noise_stream = kStreamRgbRef;
    SceneRender out;
    out.rgb = render_frame(scene, session, fp);
    out.truth = make_truth(ref, scene, session, out.rgb.phys_to_raw, nominal_phys_to_raw(ref, false));
    return out;
}

SessionRender render_session(const SceneSpec& spec, int day, const Affine2D& session_affine) {
    if (day < 0) throw ValueError("session day must be >= 0, got " + std::to_string(day));
    SceneSpec ses = spec;
    ses.white_paper = false;
    const CanonicalScene scene(ses, day, true);

    SessionRender out;
    FrameParams fp;
    fp.rgb = true;
    fp.day = day;
    fp.noise_stream = kStreamRgbDay;
    out.rgb = render_frame(scene, session_affine, fp);

    fp.rgb = false;
    fp.noise_stream = kStreamHsiDay;
    fp.with_dark = true;
    fp.with_dropout = true;
    out.hsi = render_frame(scene, session_affine, fp);

    out.hsi_dark = render_dark(ses, day, out.hsi.phys_to_raw, out.hsi.raw.height, out.hsi.raw.width);
    out.truth = make_truth(ses, scene, session_affine, out.rgb.phys_to_raw, out.hsi.phys_to_raw);
    return out;
}

SceneSpec make_random_scene(std::uint64_t seed) {
    std::mt19937_64 rng(mix_seed(seed, 0));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    SceneSpec spec;
    spec.seed = seed;
    spec.dish_center = {spec.plate_width / 2.0 + range(-8.0, 8.0),
                        spec.plate_height / 2.0 + range(-8.0, 8.0)};
    spec.grid_rotation_deg = range(-5.0, 5.0);
    spec.stretch_rgb = range(1.2, 1.4);
    spec.stretch_hsi = range(1.2, 1.4);
    spec.illumination_amplitude = range(0.05, 0.15);
    spec.illumination_phase = range(0.0, kPi);

    const int id_a = static_cast<int>(rng() % 16);
    int id_b = static_cast<int>(rng() % 15);
    if (id_b >= id_a) ++id_b;
    spec.markers[0].id = std::min(id_a, id_b);
    spec.markers[1].id = std::max(id_a, id_b);
    spec.markers[0].orientation = static_cast<int>(rng() % 4);
    spec.markers[1].orientation = static_cast<int>(rng() % 4);
    place_fiducials(spec);

    const double s = spec.grid_spacing;
    const int channels = spec.hsi_channels;
    spec.kernels.reserve(25);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            KernelSpec k;
            k.cell_i = i;
            k.cell_j = j;
            const Point2 c = lattice_to_phys(spec, i + 0.5, j + 0.5);
            k.center = {c.x + range(-0.1, 0.1) * s, c.y + range(-0.1, 0.1) * s};
            k.semi_major = range(0.32, 0.38) * s;
            k.semi_minor = range(0.22, 0.27) * s;
            k.angle_rad = range(0.0, kPi);
            const double base = range(0.50, 0.68);
            for (int ch = 0; ch < 3; ++ch) k.rgb_albedo[ch] = std::clamp(base + range(-0.05, 0.05), 0.4, 0.8);
            const double hbase = range(0.40, 0.60);
            const double amp = range(0.05, 0.15);
            const double freq = range(0.5, 1.5);
            const double phase = range(0.0, 2.0 * kPi);
            k.hsi_reflectance.resize(static_cast<std::size_t>(channels));
            for (int ch = 0; ch < channels; ++ch)
                k.hsi_reflectance[ch] =
                    std::clamp(hbase + amp * std::sin(2.0 * kPi * freq * ch / channels + phase), 0.25, 0.8);
            spec.kernels.push_back(std::move(k));
        }
    return spec;
}

Affine2D make_session_affine(std::uint64_t seed, int day) {
    std::mt19937_64 rng(mix_seed(seed, 200 + static_cast<std::uint64_t>(day)));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
    const double rot = range(-2.0, 2.0) * kPi / 180.0;
    const double scale = range(0.985, 1.015);
    return Affine2D::similarity(rot, scale, {range(-5.0, 5.0), range(-5.0, 5.0)}, {280.0, 216.0});
}

void save_scene_spec(const SceneSpec& spec, const std::filesystem::path& path) {
    nlohmann::json j;
    j["seed"] = spec.seed;
    j["plate_width"] = spec.plate_width;
    j["plate_height"] = spec.plate_height;
    j["frame_margin"] = spec.frame_margin;
    j["strip_margin"] = spec.strip_margin;
    j["strip_width"] = spec.strip_width;
    j["dish_center"] = point_json(spec.dish_center);
    j["dish_radius"] = spec.dish_radius;
    j["rim_width"] = spec.rim_width;
    j["grid_spacing"] = spec.grid_spacing;
    j["grid_rotation_deg"] = spec.grid_rotation_deg;
    j["bar_width"] = spec.bar_width;
    j["white_paper"] = spec.white_paper;
    j["board_pattern"] = spec.board_pattern;
    j["board_square"] = spec.board_square;
    j["board_inset"] = spec.board_inset;
    j["marker_module"] = spec.marker_module;
    j["markers"] = nlohmann::json::array();
    for (const MarkerSpec& m : spec.markers)
        j["markers"].push_back({{"id", m.id}, {"center", point_json(m.center)}, {"orientation", m.orientation}});
    j["paper_white_albedo"] = spec.paper_white_albedo;
    j["paper_black_albedo"] = spec.paper_black_albedo;
    j["illumination_amplitude"] = spec.illumination_amplitude;
    j["illumination_phase"] = spec.illumination_phase;
    j["noise_sigma"] = spec.noise_sigma;
    j["hsi_dark_level"] = spec.hsi_dark_level;
    j["dropout_rate"] = spec.dropout_rate;
    j["quantize"] = spec.quantize;
    j["stretch_rgb"] = spec.stretch_rgb;
    j["stretch_hsi"] = spec.stretch_hsi;
    j["hsi_scale"] = spec.hsi_scale;
    j["hsi_channels"] = spec.hsi_channels;
    j["kernels"] = nlohmann::json::array();
    for (const KernelSpec& k : spec.kernels)
        j["kernels"].push_back({{"center", point_json(k.center)},
                                {"semi_major", k.semi_major},
                                {"semi_minor", k.semi_minor},
                                {"angle_rad", k.angle_rad},
                                {"rgb_albedo", k.rgb_albedo},
                                {"hsi_reflectance", k.hsi_reflectance},
                                {"cell", {k.cell_i, k.cell_j}},
                                {"germination_day", k.germination_day}});
    j["decoys"] = nlohmann::json::array();
    for (const DecoySpec& d : spec.decoys) {
        const char* type = d.type == DecoySpec::Type::BrightSpeck ? "bright_speck"
                           : d.type == DecoySpec::Type::Scratch  ? "scratch"
                                                                 : "ring";
        j["decoys"].push_back({{"type", type},
                               {"center", point_json(d.center)},
                               {"radius", d.radius},
                               {"length", d.length},
                               {"width", d.width},
                               {"angle_rad", d.angle_rad},
                               {"albedo", d.albedo}});
    }
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write scene spec: " + path.string());
    out << j.dump(2) << '\n';
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValueError("cannot read scene spec: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scene spec " + path.string() + ": " + e.what());
    }
    SceneSpec spec;
    try {
        spec.seed = j.value("seed", spec.seed);
        spec.plate_width = j.value("plate_width", spec.plate_width);
        spec.plate_height = j.value("plate_height", spec.plate_height);
        spec.frame_margin = j.value("frame_margin", spec.frame_margin);
        spec.strip_margin = j.value("strip_margin", spec.strip_margin);
        spec.strip_width = j.value("strip_width", spec.strip_width);
        if (j.contains("dish_center")) spec.dish_center = point_from_json(j["dish_center"]);
        spec.dish_radius = j.value("dish_radius", spec.dish_radius);
        spec.rim_width = j.value("rim_width", spec.rim_width);
        spec.grid_spacing = j.value("grid_spacing", spec.grid_spacing);
        spec.grid_rotation_deg = j.value("grid_rotation_deg", spec.grid_rotation_deg);
        spec.bar_width = j.value("bar_width", spec.bar_width);
        spec.white_paper = j.value("white_paper", spec.white_paper);
        spec.board_pattern = j.value("board_pattern", spec.board_pattern);
        spec.board_square = j.value("board_square", spec.board_square);
        spec.board_inset = j.value("board_inset", spec.board_inset);
        spec.marker_module = j.value("marker_module", spec.marker_module);
        if (j.contains("markers")) {
            const auto& jm = j["markers"];
            for (std::size_t i = 0; i < 2 && i < jm.size(); ++i) {
                spec.markers[i].id = jm[i].at("id").get<int>();
                spec.markers[i].center = point_from_json(jm[i].at("center"));
                spec.markers[i].orientation = jm[i].value("orientation", 0);
            }
        }
        spec.paper_white_albedo = j.value("paper_white_albedo", spec.paper_white_albedo);
        spec.paper_black_albedo = j.value("paper_black_albedo", spec.paper_black_albedo);
        spec.illumination_amplitude = j.value("illumination_amplitude", spec.illumination_amplitude);
        spec.illumination_phase = j.value("illumination_phase", spec.illumination_phase);
        spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
        spec.hsi_dark_level = j.value("hsi_dark_level", spec.hsi_dark_level);
        spec.dropout_rate = j.value("dropout_rate", spec.dropout_rate);
        spec.quantize = j.value("quantize", spec.quantize);
        spec.stretch_rgb = j.value("stretch_rgb", spec.stretch_rgb);
        spec.stretch_hsi = j.value("stretch_hsi", spec.stretch_hsi);
        spec.hsi_scale = j.value("hsi_scale", spec.hsi_scale);
        spec.hsi_channels = j.value("hsi_channels", spec.hsi_channels);
        for (const auto& jk : j.value("kernels", nlohmann::json::array())) {
            KernelSpec k;
            k.center = point_from_json(jk.at("center"));
            k.semi_major = jk.at("semi_major").get<double>();
            k.semi_minor = jk.at("semi_minor").get<double>();
            k.angle_rad = jk.value("angle_rad", 0.0);
            if (jk.contains("rgb_albedo")) k.rgb_albedo = jk["rgb_albedo"].get<std::array<double, 3>>();
            if (jk.contains("hsi_reflectance"))
                k.hsi_reflectance = jk["hsi_reflectance"].get<std::vector<double>>();
            if (jk.contains("cell")) {
                k.cell_i = jk["cell"].at(0).get<int>();
                k.cell_j = jk["cell"].at(1).get<int>();
            }
            k.germination_day = jk.value("germination_day", 0);
            spec.kernels.push_back(std::move(k));
        }
        for (const auto& jd : j.value("decoys", nlohmann::json::array())) {
            DecoySpec d;
            const std::string type = jd.at("type").get<std::string>();
            if (type == "bright_speck")
                d.type = DecoySpec::Type::BrightSpeck;
            else if (type == "scratch")
                d.type = DecoySpec::Type::Scratch;
            else if (type == "ring")
                d.type = DecoySpec::Type::Ring;
            else
                throw FormatError("unknown decoy type: " + type);
            d.center = point_from_json(jd.at("center"));
            d.radius = jd.value("radius", d.radius);
            d.length = jd.value("length", d.length);
            d.width = jd.value("width", d.width);
            d.angle_rad = jd.value("angle_rad", d.angle_rad);
            d.albedo = jd.value("albedo", d.albedo);
            spec.decoys.push_back(d);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scene spec " + path.string() + ": " + e.what());
    }
    return spec;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    nlohmann::json j;
    j["lattice"] = nlohmann::json::array();
    for (const auto& [idx, p] : truth.lattice)
        j["lattice"].push_back({{"ix", idx.first}, {"iy", idx.second}, {"point", point_json(p)}});
    j["markers"] = nlohmann::json::array();
    for (int i = 0; i < 2; ++i) {
        nlohmann::json corners = nlohmann::json::array();
        for (const Point2& c : truth.marker_corners[i]) corners.push_back(point_json(c));
        j["markers"].push_back({{"id", truth.marker_ids[i]}, {"corners", corners}});
    }
    j["board_centers"] = nlohmann::json::array();
    for (const Point2& c : truth.board_centers) j["board_centers"].push_back(point_json(c));
    j["board_square_w"] = truth.board_square_w;
    j["board_square_h"] = truth.board_square_h;
    j["dish"] = {{"center", point_json(truth.dish.center)}, {"radius", truth.dish.radius}};
    j["strips"] = nlohmann::json::array();
    for (const auto& quad : truth.strips) {
        nlohmann::json q = nlohmann::json::array();
        for (const Point2& p : quad) q.push_back(point_json(p));
        j["strips"].push_back(q);
    }
    j["kernels"] = nlohmann::json::array();
    for (const KernelSpec& k : truth.kernels)
        j["kernels"].push_back({{"center", point_json(k.center)},
                                {"semi_major", k.semi_major},
                                {"semi_minor", k.semi_minor},
                                {"angle_rad", k.angle_rad},
                                {"cell", {k.cell_i, k.cell_j}},
                                {"germination_day", k.germination_day}});
    j["session_affine"] = affine_json(truth.session_affine);
    j["phys_to_raw_rgb"] = affine_json(truth.phys_to_raw_rgb);
    j["phys_to_raw_hsi"] = affine_json(truth.phys_to_raw_hsi);
    std::ofstream out(path);
    if (!out) throw ValueError("cannot write ground truth: " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace grainpipe
