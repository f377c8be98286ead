#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hadit/image.hpp"

namespace hadit {

struct Lab {
    double L = 0.0, a = 0.0, b = 0.0;
};

// sRGB in [0,1]^3 -> linear RGB -> XYZ (D65) -> CIELab. L in [0,100].
Lab rgb_to_lab(double r, double g, double b);

inline double delta_e76(const Lab& x, const Lab& y) {
    const double dl = x.L - y.L, da = x.a - y.a, db = x.b - y.b;
    return std::sqrt(dl * dl + da * da + db * db);
}

// Rec.709 luma of the (nonlinear) sRGB channels, in [0,1]. Used for the
// line-pixel test and for SSIM.
double luminance(double r, double g, double b);

constexpr int kLineLabel = -1;

// Per-pixel region labels over a ground-truth image. Line pixels carry
// kLineLabel; every other pixel belongs to exactly one region. Each region
// has a representative interior pixel.
struct ColorRegionMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;                          // row-major, -1 = line/boundary
    std::vector<std::pair<int, int>> representatives;  // region id -> (x, y)

    int label(int x, int y) const { return labels[static_cast<size_t>(y) * width + x]; }
    int region_count() const { return static_cast<int>(representatives.size()); }
};

struct SegmentParams {
    double delta_e_threshold = 10.0;
    double line_luminance_threshold = 0.5;
};

// Union-find over non-line pixels: two 4-connected neighbors merge iff their
// CIE76 distance in Lab is <= threshold and neither is a line pixel (line-art
// luminance below the line threshold). Line boundaries always separate
// regions, even between identical colors. The representative of a region is
// its deepest interior pixel (max L1 distance to any non-region pixel),
// ties broken by smallest (y, x).
ColorRegionMap segment_color_regions(const RgbImage& gt, const RgbImage& line,
                                     const SegmentParams& params = {});

// Mean over regions of the mean-channel squared error between generated and
// ground-truth colors sampled at each region's representative pixel.
double mse_cr(const RgbImage& gen, const RgbImage& gt, const ColorRegionMap& regions);

// -10 log10(MSE) over all channels in [0,1] scale, capped at 100 dB.
double psnr(const RgbImage& gen, const RgbImage& gt);

// Uniform-window SSIM over 8x8 sliding luminance windows,
// C1 = 0.01^2, C2 = 0.03^2.
double ssim(const RgbImage& gen, const RgbImage& gt);

}  // namespace hadit
