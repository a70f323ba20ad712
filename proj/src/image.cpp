#include "scenefit/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "scenefit/errors.hpp"

namespace scenefit {

uint8_t quantize8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

Image load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) {
        throw ValidationError("cannot open PNG: " + path);
    }
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("PNG decode failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) {
        png_set_strip_16(png);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(png);
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);

    const int channels = static_cast<int>(png_get_channels(png, info));
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<uint8_t> raw(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; y++) {
        rows[y] = raw.data() + y * rowbytes;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    Image img(w, h, channels == 1 ? 1 : 3);
    for (int y = 0; y < h; y++) {
        for (int x = 0; x < w; x++) {
            for (int ch = 0; ch < img.c; ch++) {
                img.at(x, y, ch) =
                    raw[y * rowbytes + x * channels + std::min(ch, channels - 1)] /
                    255.0;
            }
        }
    }
    return img;
}

void save_png(const Image& img, const std::string& path) {
    if (img.c != 1 && img.c != 3) {
        throw ValidationError("save_png: channels must be 1 or 3");
    }
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) {
        throw ValidationError("cannot write PNG: " + path);
    }
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ValidationError("PNG encode failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.w, img.h, 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; y++) {
        for (int x = 0; x < img.w; x++) {
            for (int ch = 0; ch < img.c; ch++) {
                row[x * img.c + ch] = quantize8(img.at(x, y, ch));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image resize_bilinear(const Image& src, int nw, int nh) {
    Image dst(nw, nh, src.c);
    const double sx = static_cast<double>(src.w) / nw;
    const double sy = static_cast<double>(src.h) / nh;
    for (int y = 0; y < nh; y++) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < nw; x++) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 =
                std::clamp(static_cast<int>(std::floor(fx)), 0, src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int ch = 0; ch < src.c; ch++) {
                const double top =
                    src.at(x0, y0, ch) * (1 - wx) + src.at(x1, y0, ch) * wx;
                const double bot =
                    src.at(x0, y1, ch) * (1 - wx) + src.at(x1, y1, ch) * wx;
                dst.at(x, y, ch) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

Image resize_nearest(const Image& src, int nw, int nh) {
    Image dst(nw, nh, src.c);
    for (int y = 0; y < nh; y++) {
        const int sy = std::min(static_cast<int>(static_cast<int64_t>(y) *
                                                 src.h / nh),
                                src.h - 1);
        for (int x = 0; x < nw; x++) {
            const int sx = std::min(static_cast<int>(static_cast<int64_t>(x) *
                                                     src.w / nw),
                                    src.w - 1);
            for (int ch = 0; ch < src.c; ch++) {
                dst.at(x, y, ch) = src.at(sx, sy, ch);
            }
        }
    }
    return dst;
}

void fill_circle(Image& img, double cx, double cy, double radius,
                 const double rgb[3]) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(cy + radius)));
    for (int y = y0; y <= y1; y++) {
        for (int x = x0; x <= x1; x++) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius) {
                for (int ch = 0; ch < img.c; ch++) {
                    img.at(x, y, ch) = rgb[std::min(ch, 2)];
                }
            }
        }
    }
}

void draw_segment(Image& img, double x0, double y0, double x1, double y1,
                  double thickness, const double rgb[3]) {
    const double r = thickness * 0.5;
    const int bx0 = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - r)));
    const int bx1 =
        std::min(img.w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + r)));
    const int by0 = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - r)));
    const int by1 =
        std::min(img.h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + r)));
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = by0; y <= by1; y++) {
        for (int x = bx0; x <= bx1; x++) {
            double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = x0 + t * dx, py = y0 + t * dy;
            const double ddx = x - px, ddy = y - py;
            if (ddx * ddx + ddy * ddy <= r * r) {
                for (int ch = 0; ch < img.c; ch++) {
                    img.at(x, y, ch) = rgb[std::min(ch, 2)];
                }
            }
        }
    }
}

void fill_convex_poly(Image& img, const std::vector<double>& xs,
                      const std::vector<double>& ys, const double rgb[3]) {
    const size_t n = xs.size();
    if (n < 3 || ys.size() != n) {
        return;
    }
    double minx = xs[0], maxx = xs[0], miny = ys[0], maxy = ys[0];
    for (size_t i = 1; i < n; i++) {
        minx = std::min(minx, xs[i]);
        maxx = std::max(maxx, xs[i]);
        miny = std::min(miny, ys[i]);
        maxy = std::max(maxy, ys[i]);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(minx)));
    const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(maxx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(miny)));
    const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(maxy)));
    for (int y = y0; y <= y1; y++) {
        for (int x = x0; x <= x1; x++) {
            bool pos = false, negv = false;
            for (size_t i = 0; i < n; i++) {
                const size_t j = (i + 1) % n;
                const double cross = (xs[j] - xs[i]) * (y - ys[i]) -
                                     (ys[j] - ys[i]) * (x - xs[i]);
                if (cross > 0) {
                    pos = true;
                } else if (cross < 0) {
                    negv = true;
                }
            }
            if (!(pos && negv)) {
                for (int ch = 0; ch < img.c; ch++) {
                    img.at(x, y, ch) = rgb[std::min(ch, 2)];
                }
            }
        }
    }
}

Var image_to_chw(const Image& img) {
    std::vector<double> d(static_cast<size_t>(img.c) * img.h * img.w);
    for (int ch = 0; ch < img.c; ch++) {
        for (int y = 0; y < img.h; y++) {
            for (int x = 0; x < img.w; x++) {
                d[(static_cast<size_t>(ch) * img.h + y) * img.w + x] =
                    img.at(x, y, ch);
            }
        }
    }
    return leaf({1, img.c, img.h, img.w}, std::move(d));
}

Image chw_to_image(const Var& x, int batch_index) {
    const Shape& s = x.shape();
    if (s.size() != 4) {
        throw ValidationError("chw_to_image: need [N,C,H,W]");
    }
    const int c = s[1], h = s[2], w = s[3];
    Image img(w, h, c == 1 ? 1 : 3);
    const int64_t off = static_cast<int64_t>(batch_index) * c * h * w;
    for (int ch = 0; ch < img.c; ch++) {
        for (int y = 0; y < h; y++) {
            for (int xx = 0; xx < w; xx++) {
                img.at(xx, y, ch) =
                    x.data()[off + (static_cast<int64_t>(ch) * h + y) * w + xx];
            }
        }
    }
    return img;
}

Var images_to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) {
        throw ValidationError("images_to_batch: empty list");
    }
    const int c = imgs[0].c, h = imgs[0].h, w = imgs[0].w;
    std::vector<double> d(static_cast<size_t>(imgs.size()) * c * h * w);
    for (size_t n = 0; n < imgs.size(); n++) {
        const Image& img = imgs[n];
        if (img.c != c || img.h != h || img.w != w) {
            throw ValidationError("images_to_batch: inconsistent shapes");
        }
        for (int ch = 0; ch < c; ch++) {
            for (int y = 0; y < h; y++) {
                for (int x = 0; x < w; x++) {
                    d[((n * c + ch) * h + y) * w + x] = img.at(x, y, ch);
                }
            }
        }
    }
    return leaf({static_cast<int>(imgs.size()), c, h, w}, std::move(d));
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (a.px.size() != b.px.size()) {
        throw ValidationError("mean_abs_diff: shape mismatch");
    }
    double s = 0.0;
    for (size_t i = 0; i < a.px.size(); i++) {
        s += std::abs(a.px[i] - b.px[i]);
    }
    return a.px.empty() ? 0.0 : s / a.px.size();
}

}  // namespace scenefit
