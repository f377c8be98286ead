#include "hadit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace hadit {

namespace {

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

Lab rgb_to_lab(double r, double g, double b) {
    const double rl = srgb_to_linear(r);
    const double gl = srgb_to_linear(g);
    const double bl = srgb_to_linear(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double fx = lab_f(x / 0.95047);
    const double fy = lab_f(y / 1.0);
    const double fz = lab_f(z / 1.08883);
    Lab lab;
    lab.L = 116.0 * fy - 16.0;
    lab.a = 500.0 * (fx - fy);
    lab.b = 200.0 * (fy - fz);
    return lab;
}

double luminance(double r, double g, double b) {
    return 0.2126 * r + 0.7152 * g + 0.0722 * b;
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace

ColorRegionMap segment_color_regions(const RgbImage& gt, const RgbImage& line,
                                     const SegmentParams& params) {
    if (!gt.same_shape(line))
        throw std::invalid_argument("segment_color_regions: dimension mismatch");
    const int w = gt.width, h = gt.height;
    const int n = w * h;

    std::vector<bool> is_line(n);
    std::vector<Lab> lab(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            is_line[i] =
                luminance(line.channel(x, y, 0), line.channel(x, y, 1), line.channel(x, y, 2)) <
                params.line_luminance_threshold;
            if (!is_line[i])
                lab[i] = rgb_to_lab(gt.channel(x, y, 0), gt.channel(x, y, 1), gt.channel(x, y, 2));
        }
    }

    UnionFind uf(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            if (is_line[i]) continue;
            if (x + 1 < w && !is_line[i + 1] &&
                delta_e76(lab[i], lab[i + 1]) <= params.delta_e_threshold)
                uf.unite(i, i + 1);
            if (y + 1 < h && !is_line[i + w] &&
                delta_e76(lab[i], lab[i + w]) <= params.delta_e_threshold)
                uf.unite(i, i + w);
        }
    }

    ColorRegionMap map;
    map.width = w;
    map.height = h;
    map.labels.assign(n, kLineLabel);
    std::vector<int> root_to_label(n, -1);
    int next_label = 0;
    for (int i = 0; i < n; ++i) {
        if (is_line[i]) continue;
        const int r = uf.find(i);
        if (root_to_label[r] < 0) root_to_label[r] = next_label++;
        map.labels[i] = root_to_label[r];
    }

    // Deepest interior pixel per region: L1 distance to the nearest pixel
    // outside the region (other label, line, or image border), computed with
    // one multi-source BFS that never crosses label boundaries.
    std::vector<int> dist(n, 0);
    std::deque<int> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            if (map.labels[i] == kLineLabel) continue;
            const bool edge = x == 0 || y == 0 || x == w - 1 || y == h - 1 ||
                              map.labels[i - 1] != map.labels[i] ||
                              map.labels[i + 1] != map.labels[i] ||
                              map.labels[i - w] != map.labels[i] ||
                              map.labels[i + w] != map.labels[i];
            if (edge) {
                dist[i] = 1;
                queue.push_back(i);
            }
        }
    }
    const int dx[4] = {1, -1, 0, 0};
    const int dy[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int x = i % w, y = i / w;
        for (int k = 0; k < 4; ++k) {
            const int nx = x + dx[k], ny = y + dy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int j = ny * w + nx;
            if (map.labels[j] != map.labels[i] || dist[j] != 0) continue;
            dist[j] = dist[i] + 1;
            queue.push_back(j);
        }
    }

    map.representatives.assign(next_label, {-1, -1});
    std::vector<int> best(next_label, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = y * w + x;
            const int l = map.labels[i];
            if (l == kLineLabel) continue;
            if (dist[i] > best[l]) {  // strict: first max in (y, x) order wins
                best[l] = dist[i];
                map.representatives[l] = {x, y};
            }
        }
    }
    return map;
}

double mse_cr(const RgbImage& gen, const RgbImage& gt, const ColorRegionMap& regions) {
    if (!gen.same_shape(gt) || gt.width != regions.width || gt.height != regions.height)
        throw std::invalid_argument("mse_cr: dimension mismatch");
    if (regions.region_count() == 0) throw std::invalid_argument("mse_cr: zero regions");
    double total = 0.0;
    for (const auto& [x, y] : regions.representatives) {
        double e = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double d = gen.channel(x, y, c) - gt.channel(x, y, c);
            e += d * d;
        }
        total += e / 3.0;
    }
    return total / regions.region_count();
}

double psnr(const RgbImage& gen, const RgbImage& gt) {
    if (!gen.same_shape(gt)) throw std::invalid_argument("psnr: dimension mismatch");
    double se = 0.0;
    const size_t n = gen.pixels.size();
    for (size_t i = 0; i < n; ++i) {
        const double d = gen.pixels[i] / 255.0 - gt.pixels[i] / 255.0;
        se += d * d;
    }
    const double mse = se / static_cast<double>(n);
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, -10.0 * std::log10(mse));
}

double ssim(const RgbImage& gen, const RgbImage& gt) {
    if (!gen.same_shape(gt)) throw std::invalid_argument("ssim: dimension mismatch");
    constexpr int win = 8;
    if (gen.width < win || gen.height < win)
        throw std::invalid_argument("ssim: images must be at least 8x8");
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    const int w = gen.width, h = gen.height;
    std::vector<double> la(static_cast<size_t>(w) * h), lb(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            la[static_cast<size_t>(y) * w + x] =
                luminance(gen.channel(x, y, 0), gen.channel(x, y, 1), gen.channel(x, y, 2));
            lb[static_cast<size_t>(y) * w + x] =
                luminance(gt.channel(x, y, 0), gt.channel(x, y, 1), gt.channel(x, y, 2));
        }
    double total = 0.0;
    int count = 0;
    constexpr int nw = win * win;
    for (int y0 = 0; y0 + win <= h; ++y0) {
        for (int x0 = 0; x0 + win <= w; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + win; ++y)
                for (int x = x0; x < x0 + win; ++x) {
                    const double a = la[static_cast<size_t>(y) * w + x];
                    const double b = lb[static_cast<size_t>(y) * w + x];
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                }
            const double ma = sa / nw, mb = sb / nw;
            const double va = saa / nw - ma * ma;
            const double vb = sbb / nw - mb * mb;
            const double cov = sab / nw - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    }
    return total / count;
}

}  // namespace hadit
