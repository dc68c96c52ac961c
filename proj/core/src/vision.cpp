#include "grainpipe/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <limits>
#include <numeric>

#include "grainpipe/errors.hpp"

namespace grainpipe {

namespace {

// Compare a*b against c*d where a, c fit in unsigned __int128 and b, d in
// uint64, i.e. a 192-bit product comparison done with 128-bit limbs.
int compare_products(unsigned __int128 a, std::uint64_t b, unsigned __int128 c, std::uint64_t d) {
    constexpr unsigned __int128 mask64 = ~std::uint64_t{0};
    auto mul = [&](unsigned __int128 x, std::uint64_t y, unsigned __int128& hi, std::uint64_t& lo) {
        unsigned __int128 p = (x & mask64) * y;
        lo = static_cast<std::uint64_t>(p & mask64);
        hi = (x >> 64) * y + (p >> 64);
    };
    unsigned __int128 hi_ab, hi_cd;
    std::uint64_t lo_ab, lo_cd;
    mul(a, b, hi_ab, lo_ab);
    mul(c, d, hi_cd, lo_cd);
    if (hi_ab != hi_cd) return hi_ab < hi_cd ? -1 : 1;
    if (lo_ab != lo_cd) return lo_ab < lo_cd ? -1 : 1;
    return 0;
}

int reflect_index(int i, int n) {
    // Mirror across the border, edge pixel repeated: -1 -> 0, n -> n-1.
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

} // namespace

GrayImage grayscale(const ImageCube& cube) {
    GrayImage out;
    out.height = cube.height;
    out.width = cube.width;
    out.values.resize(static_cast<std::size_t>(cube.height) * cube.width);
    const double inv = 1.0 / cube.channels;
    for (int r = 0; r < cube.height; ++r) {
        for (int c = 0; c < cube.width; ++c) {
            double acc = 0.0;
            for (int k = 0; k < cube.channels; ++k) acc += cube.at(r, c, k);
            out.values[static_cast<std::size_t>(r) * cube.width + c] = acc * inv;
        }
    }
    return out;
}

int otsu_split_from_histogram(const std::vector<std::uint64_t>& counts) {
    const int n = static_cast<int>(counts.size());
    if (n < 2) throw DetectionError("otsu: histogram needs at least two bins");

    std::uint64_t total = 0;
    unsigned __int128 weighted = 0;
    int populated = 0;
    for (int i = 0; i < n; ++i) {
        total += counts[i];
        weighted += static_cast<unsigned __int128>(counts[i]) * static_cast<std::uint64_t>(i);
        if (counts[i] > 0) ++populated;
    }
    if (populated < 2) throw DetectionError("otsu: histogram is degenerate (single populated bin)");

    // Validity domain for the exact comparison below: |S0*W - S*W0| must fit
    // in 120 bits when squared, which holds for count*bins < 2^60.
    if (total > (std::uint64_t{1} << 40) || n > (1 << 20))
        throw ValueError("otsu: histogram too large for exact comparison");

    // Between-class variance at split t is proportional to N^2 / D with
    // N = S0*W - S*W0 and D = W0*(W - W0); compare candidates exactly so the
    // argmax (lowest t on ties) does not depend on floating-point rounding.
    const unsigned __int128 s_total = weighted;
    std::uint64_t w0 = 0;
    unsigned __int128 s0 = 0;
    int best = -1;
    unsigned __int128 best_n2 = 0;
    std::uint64_t best_d = 1;
    for (int t = 0; t + 1 < n; ++t) {
        w0 += counts[t];
        s0 += static_cast<unsigned __int128>(counts[t]) * static_cast<std::uint64_t>(t);
        if (w0 == 0 || w0 == total) continue;
        const unsigned __int128 lhs = s0 * total;
        const unsigned __int128 rhs = s_total * w0;
        const unsigned __int128 num = lhs > rhs ? lhs - rhs : rhs - lhs;
        const unsigned __int128 n2 = num * num;
        const std::uint64_t d = w0 * (total - w0);
        if (best < 0 || compare_products(n2, best_d, best_n2, d) > 0) {
            best = t;
            best_n2 = n2;
            best_d = d;
        }
    }
    if (best < 0) throw DetectionError("otsu: no valid split");
    return best;
}

double otsu_threshold(const GrayImage& img, int bins) {
    if (bins < 2) throw ValueError("otsu: bins must be >= 2");
    if (img.values.empty()) throw ValueError("otsu: empty image");
    auto [lo_it, hi_it] = std::minmax_element(img.values.begin(), img.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw DetectionError("otsu: constant image");

    std::vector<std::uint64_t> counts(static_cast<std::size_t>(bins), 0);
    const double scale = bins / (hi - lo);
    for (double v : img.values) {
        int b = static_cast<int>((v - lo) * scale);
        if (b >= bins) b = bins - 1;
        if (b < 0) b = 0;
        ++counts[static_cast<std::size_t>(b)];
    }
    const int t = otsu_split_from_histogram(counts);
    return lo + (t + 1) * (hi - lo) / bins;
}

BinaryMask binarize(const GrayImage& img, double threshold) {
    BinaryMask mask;
    mask.height = img.height;
    mask.width = img.width;
    mask.bits.resize(img.values.size());
    for (std::size_t i = 0; i < img.values.size(); ++i)
        mask.bits[i] = img.values[i] > threshold ? 1 : 0;
    return mask;
}

BinaryMask LabeledRegions::mask_of(const std::vector<int>& keep_labels) const {
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(count) + 1, 0);
    for (int l : keep_labels) {
        if (l < 1 || l > count) throw ValueError("mask_of: label out of range");
        keep[static_cast<std::size_t>(l)] = 1;
    }
    BinaryMask mask;
    mask.height = height;
    mask.width = width;
    mask.bits.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        mask.bits[i] = labels[i] > 0 && keep[static_cast<std::size_t>(labels[i])] ? 1 : 0;
    return mask;
}

LabeledRegions connected_components(const BinaryMask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw ValueError("connected_components: connectivity must be 4 or 8");

    LabeledRegions out;
    out.height = mask.height;
    out.width = mask.width;
    out.labels.assign(mask.bits.size(), 0);

    const int dr4[] = {-1, 0, 0, 1};
    const int dc4[] = {0, -1, 1, 0};
    const int dr8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dc8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    const int* dr = connectivity == 4 ? dr4 : dr8;
    const int* dc = connectivity == 4 ? dc4 : dc8;
    const int nn = connectivity;

    out.areas.push_back(0); // label 0 placeholder
    out.first_pixel.push_back(0);

    std::vector<std::size_t> queue;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            const std::size_t start = static_cast<std::size_t>(r) * mask.width + c;
            if (!mask.bits[start] || out.labels[start] != 0) continue;
            const int label = ++out.count;
            out.labels[start] = label;
            queue.clear();
            queue.push_back(start);
            std::size_t area = 0;
            for (std::size_t head = 0; head < queue.size(); ++head) {
                const std::size_t idx = queue[head];
                ++area;
                const int pr = static_cast<int>(idx) / mask.width;
                const int pc = static_cast<int>(idx) % mask.width;
                for (int k = 0; k < nn; ++k) {
                    const int qr = pr + dr[k], qc = pc + dc[k];
                    if (qr < 0 || qr >= mask.height || qc < 0 || qc >= mask.width) continue;
                    const std::size_t qi = static_cast<std::size_t>(qr) * mask.width + qc;
                    if (mask.bits[qi] && out.labels[qi] == 0) {
                        out.labels[qi] = label;
                        queue.push_back(qi);
                    }
                }
            }
            out.areas.push_back(area);
            out.first_pixel.push_back(start);
        }
    }
    return out;
}

std::vector<int> largest_component_labels(const LabeledRegions& regions, int k) {
    if (k < 1) throw ValueError("largest_components: k must be >= 1");
    if (regions.count < k)
        throw DetectionError("largest_components: found " + std::to_string(regions.count) +
                             " regions, need " + std::to_string(k));
    std::vector<int> order(static_cast<std::size_t>(regions.count));
    std::iota(order.begin(), order.end(), 1);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (regions.areas[static_cast<std::size_t>(a)] != regions.areas[static_cast<std::size_t>(b)])
            return regions.areas[static_cast<std::size_t>(a)] > regions.areas[static_cast<std::size_t>(b)];
        return regions.first_pixel[static_cast<std::size_t>(a)] < regions.first_pixel[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

BinaryMask largest_components(const LabeledRegions& regions, int k) {
    return regions.mask_of(largest_component_labels(regions, k));
}

GrayImage gaussian_smooth(const GrayImage& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    GrayImage tmp = img, out = img;
    // Horizontal pass.
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       img.at(r, reflect_index(c + i, img.width));
            tmp.values[static_cast<std::size_t>(r) * img.width + c] = acc;
        }
    }
    // Vertical pass.
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp.at(reflect_index(r + i, img.height), c);
            out.values[static_cast<std::size_t>(r) * img.width + c] = acc;
        }
    }
    return out;
}

Gradients sobel_gradients(const GrayImage& img) {
    Gradients g;
    g.gx = img;
    g.gy = img;
    g.magnitude = img;
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            auto v = [&](int dr, int dc) {
                return img.at(reflect_index(r + dr, img.height), reflect_index(c + dc, img.width));
            };
            const double gx = (v(-1, 1) + 2 * v(0, 1) + v(1, 1) -
                               v(-1, -1) - 2 * v(0, -1) - v(1, -1)) / 4.0;
            const double gy = (v(1, -1) + 2 * v(1, 0) + v(1, 1) -
                               v(-1, -1) - 2 * v(-1, 0) - v(-1, 1)) / 4.0;
            const std::size_t i = static_cast<std::size_t>(r) * img.width + c;
            g.gx.values[i] = gx;
            g.gy.values[i] = gy;
            g.magnitude.values[i] = std::hypot(gx, gy);
        }
    }
    return g;
}

BinaryMask edge_detect(const GrayImage& img, const EdgeParams& params) {
    const Gradients g = sobel_gradients(img);
    const double max_mag = *std::max_element(g.magnitude.values.begin(), g.magnitude.values.end());
    BinaryMask edges;
    edges.height = img.height;
    edges.width = img.width;
    edges.bits.assign(img.values.size(), 0);
    if (max_mag <= 0.0) return edges;

    const double high = params.high_ratio * max_mag;
    const double low = params.low_ratio * max_mag;

    // Non-maximum suppression along the quantized gradient direction:
    // 0 = strong pixels, 1 = weak (candidates), absent = suppressed.
    std::vector<std::uint8_t> cls(img.values.size(), 0); // 0 none, 1 weak, 2 strong
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * img.width + c;
            const double m = g.magnitude.values[i];
            if (m < low) continue;
            const double gx = g.gx.values[i], gy = g.gy.values[i];
            // Sector of the gradient direction, in 45-degree steps.
            double angle = std::atan2(gy, gx);
            if (angle < 0) angle += M_PI;
            int dr1, dc1;
            if (angle < M_PI / 8 || angle >= 7 * M_PI / 8) {
                dr1 = 0; dc1 = 1;
            } else if (angle < 3 * M_PI / 8) {
                dr1 = 1; dc1 = 1;
            } else if (angle < 5 * M_PI / 8) {
                dr1 = 1; dc1 = 0;
            } else {
                dr1 = 1; dc1 = -1;
            }
            auto mag_at = [&](int rr, int cc) {
                if (rr < 0 || rr >= img.height || cc < 0 || cc >= img.width) return 0.0;
                return g.magnitude.values[static_cast<std::size_t>(rr) * img.width + cc];
            };
            if (m >= mag_at(r + dr1, c + dc1) && m >= mag_at(r - dr1, c - dc1))
                cls[i] = m >= high ? 2 : 1;
        }
    }

    // Hysteresis: grow strong pixels through 8-connected weak ones.
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < cls.size(); ++i) {
        if (cls[i] == 2) {
            edges.bits[i] = 1;
            queue.push_back(i);
        }
    }
    const int dr8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dc8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::size_t idx = queue[head];
        const int pr = static_cast<int>(idx) / img.width;
        const int pc = static_cast<int>(idx) % img.width;
        for (int k = 0; k < 8; ++k) {
            const int qr = pr + dr8[k], qc = pc + dc8[k];
            if (qr < 0 || qr >= img.height || qc < 0 || qc >= img.width) continue;
            const std::size_t qi = static_cast<std::size_t>(qr) * img.width + qc;
            if (cls[qi] == 1 && !edges.bits[qi]) {
                edges.bits[qi] = 1;
                queue.push_back(qi);
            }
        }
    }
    return edges;
}

double bilinear_sample(const GrayImage& img, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    const int x0 = std::min(static_cast<int>(x), img.width - 2 >= 0 ? img.width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), img.height - 2 >= 0 ? img.height - 2 : 0);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0, fy = y - y0;
    const double top = (1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
    const double bot = (1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
    return (1 - fy) * top + fy * bot;
}

ImageCube bilinear_resize_horizontal(const ImageCube& cube, double factor) {
    if (!(factor > 0.0) || factor > 1.0)
        throw GeometryError("resize: factor must lie in (0, 1], got " + std::to_string(factor));
    const int new_width = std::max(1, static_cast<int>(std::lround(cube.width * factor)));
    ImageCube out(cube.height, new_width, cube.channels, cube.bit_depth, cube.modality,
                  cube.reflectance);
    for (int x = 0; x < new_width; ++x) {
        const double sx = (x + 0.5) / factor - 0.5;
        int x0 = static_cast<int>(std::floor(sx));
        double f = sx - x0;
        if (x0 < 0) { x0 = 0; f = 0.0; }
        if (x0 >= cube.width - 1) { x0 = cube.width - 1; f = 0.0; }
        const int x1 = std::min(x0 + 1, cube.width - 1);
        for (int r = 0; r < cube.height; ++r) {
            for (int k = 0; k < cube.channels; ++k) {
                const double v = (1.0 - f) * cube.at(r, x0, k) + f * cube.at(r, x1, k);
                out.data[out.index(r, x, k)] = v;
            }
        }
    }
    return out;
}

namespace {

double interpolated_quantile(std::vector<double>& vals, double q) {
    std::sort(vals.begin(), vals.end());
    const double pos = q * (static_cast<double>(vals.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, vals.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return vals[lo] + frac * (vals[hi] - vals[lo]);
}

} // namespace

RowStats row_quantile(const ImageCube& cube, const BinaryMask& mask, double q) {
    if (mask.height != cube.height || mask.width != cube.width)
        throw ValueError("row_quantile: mask dimensions do not match cube");
    if (q < 0.0 || q > 1.0) throw ValueError("row_quantile: q out of [0, 1]");
    RowStats stats;
    std::vector<double> vals;
    for (int r = 0; r < cube.height; ++r) {
        std::vector<double> per_channel(static_cast<std::size_t>(cube.channels));
        bool any = false;
        for (int k = 0; k < cube.channels; ++k) {
            vals.clear();
            for (int c = 0; c < cube.width; ++c)
                if (mask.at(r, c)) vals.push_back(cube.at(r, c, k));
            if (vals.empty()) { any = false; break; }
            any = true;
            per_channel[static_cast<std::size_t>(k)] = interpolated_quantile(vals, q);
        }
        if (any) {
            stats.rows.push_back(r);
            stats.values.push_back(std::move(per_channel));
        }
    }
    return stats;
}

RowStats row_median(const ImageCube& cube, const std::vector<int>& rows) {
    RowStats stats;
    std::vector<double> vals(static_cast<std::size_t>(cube.width));
    for (int r : rows) {
        if (r < 0 || r >= cube.height) throw ValueError("row_median: row out of range");
        std::vector<double> per_channel(static_cast<std::size_t>(cube.channels));
        for (int k = 0; k < cube.channels; ++k) {
            for (int c = 0; c < cube.width; ++c) vals[static_cast<std::size_t>(c)] = cube.at(r, c, k);
            std::sort(vals.begin(), vals.end());
            const std::size_t n = vals.size();
            per_channel[static_cast<std::size_t>(k)] =
                n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
        }
        stats.rows.push_back(r);
        stats.values.push_back(std::move(per_channel));
    }
    return stats;
}

} // namespace grainpipe
