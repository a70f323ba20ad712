#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenefit/tensor.hpp"

namespace scenefit {

// HWC image with values in [0,1]; c is 1 (mask/gray) or 3 (RGB).
struct Image {
    int w = 0;
    int h = 0;
    int c = 0;
    std::vector<double> px;

    Image() = default;
    Image(int w_, int h_, int c_, double fill = 0.0)
        : w(w_), h(h_), c(c_),
          px(static_cast<size_t>(w_) * h_ * c_, fill) {}

    double& at(int x, int y, int ch) {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    double at(int x, int y, int ch) const {
        return px[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    bool inside(int x, int y) const { return x >= 0 && x < w && y >= 0 && y < h; }
    void set_rgb(int x, int y, double r, double g, double b) {
        at(x, y, 0) = r;
        at(x, y, 1) = g;
        at(x, y, 2) = b;
    }
};

// 8-bit quantization used by the PNG writer; exposed so pixel-exact
// compositing contracts can be checked against file bytes.
uint8_t quantize8(double v);

Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

Image resize_bilinear(const Image& src, int nw, int nh);
Image resize_nearest(const Image& src, int nw, int nh);

void fill_circle(Image& img, double cx, double cy, double radius,
                 const double rgb[3]);
void draw_segment(Image& img, double x0, double y0, double x1, double y1,
                  double thickness, const double rgb[3]);
// convex polygon, vertices in order
void fill_convex_poly(Image& img, const std::vector<double>& xs,
                      const std::vector<double>& ys, const double rgb[3]);

// [1,C,H,W] <-> Image bridges
Var image_to_chw(const Image& img);
Image chw_to_image(const Var& x, int batch_index = 0);
// stack a set of images into one [N,C,H,W] batch
Var images_to_batch(const std::vector<Image>& imgs);

double mean_abs_diff(const Image& a, const Image& b);

}  // namespace scenefit
