#include "scenefit/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>

#include "scenefit/errors.hpp"
#include "scenefit/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace scenefit {

// ---------------------------------------------------------------------------
// palette
// ---------------------------------------------------------------------------

const char* hpm_category_name(HpmCategory c) {
    switch (c) {
        case HpmCategory::background: return "background";
        case HpmCategory::hair: return "hair";
        case HpmCategory::face: return "face";
        case HpmCategory::upper_clothes: return "upper-clothes";
        case HpmCategory::lower_clothes: return "lower-clothes";
        case HpmCategory::shoes: return "shoes";
        case HpmCategory::skin: return "skin";
        case HpmCategory::accessories: return "accessories";
    }
    return "?";
}

Palette Palette::standard() {
    Palette p;
    p.colors = {{
        {0, 0, 0},        // background
        {255, 128, 0},    // hair
        {0, 255, 255},    // face
        {255, 0, 0},      // upper-clothes
        {0, 0, 255},      // lower-clothes
        {255, 255, 0},    // shoes
        {255, 0, 255},    // skin
        {0, 255, 0},      // accessories
    }};
    return p;
}

bool Palette::injective() const {
    for (int i = 0; i < kNumHpmCategories; i++) {
        for (int j = i + 1; j < kNumHpmCategories; j++) {
            if (colors[i] == colors[j]) {
                return false;
            }
        }
    }
    return true;
}

HpmCategory Palette::nearest(double r, double g, double b,
                             double* dist2) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (int i = 0; i < kNumHpmCategories; i++) {
        const double dr = r - colors[i][0] / 255.0;
        const double dg = g - colors[i][1] / 255.0;
        const double db = b - colors[i][2] / 255.0;
        const double d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    if (dist2) {
        *dist2 = best_d;
    }
    return static_cast<HpmCategory>(best);
}

void Palette::rgb01(HpmCategory c, double out[3]) const {
    const auto& col = colors[static_cast<int>(c)];
    out[0] = col[0] / 255.0;
    out[1] = col[1] / 255.0;
    out[2] = col[2] / 255.0;
}

std::string Palette::to_json() const {
    json j;
    for (int i = 0; i < kNumHpmCategories; i++) {
        j[hpm_category_name(static_cast<HpmCategory>(i))] = {
            colors[i][0], colors[i][1], colors[i][2]};
    }
    return j.dump(2);
}

Palette Palette::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("palette file not found: " + path);
    }
    json j;
    in >> j;
    Palette p;
    for (int i = 0; i < kNumHpmCategories; i++) {
        const char* name = hpm_category_name(static_cast<HpmCategory>(i));
        if (!j.contains(name)) {
            throw ValidationError(std::string("palette missing category: ") +
                                  name);
        }
        for (int k = 0; k < 3; k++) {
            p.colors[i][k] = j[name][k].get<uint8_t>();
        }
    }
    if (!p.injective()) {
        throw ValidationError("palette is not injective");
    }
    return p;
}

void Palette::save_json(const std::string& path) const {
    std::ofstream out(path);
    out << to_json() << "\n";
}

Image encode_hpm(const LabelGrid& labels, const Palette& palette) {
    Image img(labels.w, labels.h, 3);
    for (int y = 0; y < labels.h; y++) {
        for (int x = 0; x < labels.w; x++) {
            const auto& c = palette.colors[labels.at(x, y)];
            img.set_rgb(x, y, c[0] / 255.0, c[1] / 255.0, c[2] / 255.0);
        }
    }
    return img;
}

LabelGrid decode_hpm(const Image& rgb, const Palette& palette) {
    if (rgb.c != 3) {
        throw ValidationError("decode_hpm: need RGB input");
    }
    LabelGrid g(rgb.w, rgb.h);
    for (int y = 0; y < rgb.h; y++) {
        for (int x = 0; x < rgb.w; x++) {
            g.at(x, y) = static_cast<uint8_t>(
                palette.nearest(rgb.at(x, y, 0), rgb.at(x, y, 1),
                                rgb.at(x, y, 2)));
        }
    }
    return g;
}

std::array<double, kNumHpmCategories> category_histogram(const LabelGrid& g) {
    std::array<double, kNumHpmCategories> h{};
    for (uint8_t l : g.labels) {
        h[l] += 1.0;
    }
    const double total = static_cast<double>(g.labels.size());
    for (auto& v : h) {
        v /= total;
    }
    return h;
}

bool hpm_connected(const LabelGrid& g) {
    // BFS over the union of non-background pixels, 4-connectivity
    int start = -1;
    int nonbg = 0;
    for (size_t i = 0; i < g.labels.size(); i++) {
        if (g.labels[i] != 0) {
            nonbg++;
            if (start < 0) {
                start = static_cast<int>(i);
            }
        }
    }
    if (nonbg == 0) {
        return false;
    }
    std::vector<uint8_t> seen(g.labels.size(), 0);
    std::deque<int> q{start};
    seen[start] = 1;
    int count = 0;
    while (!q.empty()) {
        const int i = q.front();
        q.pop_front();
        count++;
        const int x = i % g.w, y = i / g.w;
        const int nx[4] = {x - 1, x + 1, x, x};
        const int ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; k++) {
            if (nx[k] < 0 || nx[k] >= g.w || ny[k] < 0 || ny[k] >= g.h) {
                continue;
            }
            const int j = ny[k] * g.w + nx[k];
            if (!seen[j] && g.labels[j] != 0) {
                seen[j] = 1;
                q.push_back(j);
            }
        }
    }
    return count == nonbg;
}

// ---------------------------------------------------------------------------
// filtering
// ---------------------------------------------------------------------------

void FilterConfig::validate() const {
    if (min_height_px <= 0 || min_width_px <= 0 || target_resolution <= 0 ||
        dilation_radius_px < 0) {
        throw ValidationError("FilterConfig: dimensions must be positive");
    }
    if (max_width_to_height <= 0.0 || max_width_to_height > 1.0) {
        throw ValidationError("FilterConfig: max_width_to_height in (0,1]");
    }
}

const char* filter_reason_name(FilterReason r) {
    switch (r) {
        case FilterReason::accepted: return "accepted";
        case FilterReason::size: return "size";
        case FilterReason::aspect: return "aspect";
        case FilterReason::mask_consistency: return "mask_consistency";
        case FilterReason::connectivity: return "connectivity";
    }
    return "?";
}

BBox mask_bbox(const Image& mask) {
    BBox b;
    b.x0 = mask.w;
    b.y0 = mask.h;
    b.x1 = -1;
    b.y1 = -1;
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            if (mask.at(x, y, 0) > 0.5) {
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
        }
    }
    return b;
}

FilterDecision filter_record(const ContextRecord& record,
                             const FilterConfig& cfg) {
    cfg.validate();
    const Image& img = record.image_with_human;
    const Image& mask = record.human_mask;
    if (img.w <= 0 || img.h <= 0 || img.c != 3) {
        throw ValidationError("record.image_with_human: malformed grid");
    }
    if (mask.w != img.w || mask.h != img.h || mask.c != 1) {
        throw ValidationError("record.human_mask: malformed grid");
    }
    if (record.hpm.w != img.w || record.hpm.h != img.h) {
        throw ValidationError("record.hpm: malformed grid");
    }
    for (uint8_t l : record.hpm.labels) {
        if (l >= kNumHpmCategories) {
            throw ValidationError("record.hpm: label out of range");
        }
    }

    const BBox bbox = mask_bbox(mask);
    if (bbox.empty()) {
        throw ValidationError("record.human_mask: empty mask");
    }
    if (bbox.height() < cfg.min_height_px || bbox.width() < cfg.min_width_px) {
        return {false, FilterReason::size};
    }
    if (static_cast<double>(bbox.width()) >
        cfg.max_width_to_height * bbox.height()) {
        return {false, FilterReason::aspect};
    }
    // non-background parsing pixels must sit inside the dilated human support
    const Image dil = dilate_mask(mask, cfg.dilation_radius_px);
    for (int y = 0; y < record.hpm.h; y++) {
        for (int x = 0; x < record.hpm.w; x++) {
            if (record.hpm.at(x, y) != 0 && dil.at(x, y, 0) < 0.5) {
                return {false, FilterReason::mask_consistency};
            }
        }
    }
    if (!hpm_connected(record.hpm)) {
        return {false, FilterReason::connectivity};
    }
    return {true, FilterReason::accepted};
}

// ---------------------------------------------------------------------------
// masks
// ---------------------------------------------------------------------------

Image dilate_mask(const Image& mask, int radius) {
    if (mask.c != 1) {
        throw ValidationError("dilate_mask: need single-channel mask");
    }
    if (radius < 0) {
        throw ValidationError("dilate_mask: radius must be >= 0");
    }
    if (radius == 0) {
        return mask;
    }
    // separable running max: square structuring element of half-width radius
    Image tmp(mask.w, mask.h, 1);
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            double m = 0.0;
            for (int dx = -radius; dx <= radius; dx++) {
                const int xx = x + dx;
                if (xx >= 0 && xx < mask.w) {
                    m = std::max(m, mask.at(xx, y, 0));
                }
            }
            tmp.at(x, y, 0) = m;
        }
    }
    Image out(mask.w, mask.h, 1);
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            double m = 0.0;
            for (int dy = -radius; dy <= radius; dy++) {
                const int yy = y + dy;
                if (yy >= 0 && yy < mask.h) {
                    m = std::max(m, tmp.at(x, yy, 0));
                }
            }
            out.at(x, y, 0) = m > 0.5 ? 1.0 : 0.0;
        }
    }
    return out;
}

namespace {

// Chebyshev distance to the nearest set pixel; two-pass chamfer with unit
// weights is exact for this metric. Unreached pixels stay at a large value.
std::vector<double> chebyshev_distance(const Image& mask) {
    const double inf = 1e9;
    std::vector<double> d(static_cast<size_t>(mask.w) * mask.h, inf);
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            if (mask.at(x, y, 0) > 0.5) {
                d[static_cast<size_t>(y) * mask.w + x] = 0.0;
            }
        }
    }
    auto at = [&](int x, int y) -> double& {
        return d[static_cast<size_t>(y) * mask.w + x];
    };
    for (int y = 0; y < mask.h; y++) {
        for (int x = 0; x < mask.w; x++) {
            double m = at(x, y);
            if (x > 0) m = std::min(m, at(x - 1, y) + 1);
            if (y > 0) {
                m = std::min(m, at(x, y - 1) + 1);
                if (x > 0) m = std::min(m, at(x - 1, y - 1) + 1);
                if (x < mask.w - 1) m = std::min(m, at(x + 1, y - 1) + 1);
            }
            at(x, y) = m;
        }
    }
    for (int y = mask.h - 1; y >= 0; y--) {
        for (int x = mask.w - 1; x >= 0; x--) {
            double m = at(x, y);
            if (x < mask.w - 1) m = std::min(m, at(x + 1, y) + 1);
            if (y < mask.h - 1) {
                m = std::min(m, at(x, y + 1) + 1);
                if (x < mask.w - 1) m = std::min(m, at(x + 1, y + 1) + 1);
                if (x > 0) m = std::min(m, at(x - 1, y + 1) + 1);
            }
            at(x, y) = m;
        }
    }
    return d;
}

}  // namespace

Image compute_background_mask(const Image& human_mask, int dilation_radius_px,
                              bool feather) {
    if (human_mask.c != 1) {
        throw ValidationError("compute_background_mask: need 1-channel mask");
    }
    if (dilation_radius_px < 0) {
        throw ValidationError("compute_background_mask: radius must be >= 0");
    }
    const double r = static_cast<double>(dilation_radius_px);
    const double fw = feather ? r / 2.0 : 0.0;
    Image out(human_mask.w, human_mask.h, 1);
    const std::vector<double> dist = chebyshev_distance(human_mask);
    for (int y = 0; y < human_mask.h; y++) {
        for (int x = 0; x < human_mask.w; x++) {
            const double d = dist[static_cast<size_t>(y) * human_mask.w + x];
            double v;
            if (fw >= 1.0) {
                v = std::clamp((d - r) / fw, 0.0, 1.0);
            } else {
                v = d > r ? 1.0 : 0.0;
            }
            out.at(x, y, 0) = v;
        }
    }
    return out;
}

Image mask_context(const Image& image_with_human,
                   const Image& background_mask) {
    if (image_with_human.w != background_mask.w ||
        image_with_human.h != background_mask.h || background_mask.c != 1) {
        throw ValidationError("mask_context: shape mismatch");
    }
    Image out = image_with_human;
    for (int y = 0; y < out.h; y++) {
        for (int x = 0; x < out.w; x++) {
            const double m = background_mask.at(x, y, 0);
            for (int ch = 0; ch < out.c; ch++) {
                out.at(x, y, ch) *= m;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// pose rendering
// ---------------------------------------------------------------------------

const std::array<const char*, 18> kJointNames = {
    "nose",       "neck",       "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow",    "l_wrist",    "r_hip",   "r_knee",
    "r_ankle",    "l_hip",      "l_knee",     "l_ankle", "r_eye",
    "l_eye",      "r_ear",      "l_ear"};

const std::vector<LimbSpec>& skeleton_spec() {
    static const std::vector<LimbSpec> spec = {
        {0, 1, {0.85, 0.10, 0.10}},   // nose-neck
        {1, 2, {0.90, 0.45, 0.10}},   // neck-r_shoulder
        {2, 3, {0.95, 0.70, 0.10}},   // r upper arm
        {3, 4, {0.90, 0.90, 0.15}},   // r forearm
        {1, 5, {0.55, 0.85, 0.15}},   // neck-l_shoulder
        {5, 6, {0.20, 0.80, 0.25}},   // l upper arm
        {6, 7, {0.15, 0.85, 0.60}},   // l forearm
        {1, 8, {0.15, 0.80, 0.85}},   // neck-r_hip
        {8, 9, {0.15, 0.55, 0.90}},   // r thigh
        {9, 10, {0.15, 0.25, 0.90}},  // r shin
        {1, 11, {0.45, 0.15, 0.90}},  // neck-l_hip
        {11, 12, {0.70, 0.15, 0.90}},  // l thigh
        {12, 13, {0.90, 0.15, 0.80}},  // l shin
        {0, 14, {0.90, 0.15, 0.45}},  // nose-r_eye
        {0, 15, {0.60, 0.35, 0.25}},  // nose-l_eye
        {14, 16, {0.45, 0.45, 0.45}},  // r_eye-r_ear
        {15, 17, {0.70, 0.70, 0.70}},  // l_eye-l_ear
    };
    return spec;
}

namespace {

struct RectMap {
    double x0, y0, w, h;  // source rect mapped onto the 32x64 canvas
    void to_canvas(double x, double y, double& cx, double& cy) const {
        cx = (x - x0) / w * kPoseWidth;
        cy = (y - y0) / h * kPoseHeight;
    }
};

Image render_pose_rect(const std::vector<Keypoint>& keypoints,
                       double confidence_threshold, const RectMap& rect) {
    Image canvas(kPoseWidth, kPoseHeight, 3);
    const auto& spec = skeleton_spec();
    const double thickness = 1.6;
    for (const auto& limb : spec) {
        if (limb.a >= static_cast<int>(keypoints.size()) ||
            limb.b >= static_cast<int>(keypoints.size())) {
            continue;
        }
        const Keypoint& a = keypoints[limb.a];
        const Keypoint& b = keypoints[limb.b];
        if (a.c <= confidence_threshold || b.c <= confidence_threshold) {
            continue;
        }
        double ax, ay, bx, by;
        rect.to_canvas(a.x, a.y, ax, ay);
        rect.to_canvas(b.x, b.y, bx, by);
        draw_segment(canvas, ax, ay, bx, by, thickness, limb.rgb);
    }
    return canvas;
}

// Expand the confident-keypoint bbox with fixed margins (hair above, feet
// below, arms sideways), then widen/tall-en to the 1:2 tile aspect.
RectMap keypoint_rect(const std::vector<Keypoint>& keypoints,
                      double confidence_threshold) {
    double minx = 1e18, miny = 1e18, maxx = -1e18, maxy = -1e18;
    int confident = 0;
    for (const auto& k : keypoints) {
        if (k.c > confidence_threshold) {
            confident++;
            minx = std::min(minx, k.x);
            maxx = std::max(maxx, k.x);
            miny = std::min(miny, k.y);
            maxy = std::max(maxy, k.y);
        }
    }
    if (confident < 2) {
        throw ValidationError("render_pose: degenerate pose, fewer than two "
                              "confident joints");
    }
    const double kh = std::max(maxy - miny, 1.0);
    const double kw = std::max(maxx - minx, 1.0);
    miny -= 0.14 * kh;  // hair / hat headroom
    maxy += 0.08 * kh;  // feet
    minx -= 0.10 * kw;
    maxx += 0.10 * kw;
    double w = maxx - minx, h = maxy - miny;
    // match the 1:2 tile aspect
    if (w < h / 2.0) {
        const double grow = h / 2.0 - w;
        minx -= grow / 2.0;
        w = h / 2.0;
    } else {
        const double grow = 2.0 * w - h;
        miny -= grow / 2.0;
        h = 2.0 * w;
    }
    return {minx, miny, w, h};
}

}  // namespace

Image render_pose(const std::vector<Keypoint>& keypoints,
                  double confidence_threshold) {
    const RectMap rect = keypoint_rect(keypoints, confidence_threshold);
    return render_pose_rect(keypoints, confidence_threshold, rect);
}

// ---------------------------------------------------------------------------
// synthetic world
// ---------------------------------------------------------------------------

RuleTable RuleTable::standard() {
    RuleTable t;
    EnvRule snow;
    snow.name = "snow";
    snow.weight = 1.0;
    snow.p_long_upper = 0.92;
    snow.p_long_lower = 0.90;
    snow.p_hat = 0.65;
    snow.sky_rgb[0] = 0.80; snow.sky_rgb[1] = 0.88; snow.sky_rgb[2] = 0.97;
    snow.ground_rgb[0] = 0.96; snow.ground_rgb[1] = 0.96; snow.ground_rgb[2] = 0.99;
    snow.texture_amp = 0.03;
    EnvRule beach;
    beach.name = "beach";
    beach.weight = 1.0;
    beach.p_long_upper = 0.10;
    beach.p_long_lower = 0.12;
    beach.p_hat = 0.30;
    beach.sky_rgb[0] = 0.45; beach.sky_rgb[1] = 0.72; beach.sky_rgb[2] = 0.95;
    beach.ground_rgb[0] = 0.90; beach.ground_rgb[1] = 0.80; beach.ground_rgb[2] = 0.55;
    beach.texture_amp = 0.04;
    EnvRule forest;
    forest.name = "forest";
    forest.weight = 1.0;
    forest.p_long_upper = 0.65;
    forest.p_long_lower = 0.70;
    forest.p_hat = 0.20;
    forest.sky_rgb[0] = 0.62; forest.sky_rgb[1] = 0.78; forest.sky_rgb[2] = 0.88;
    forest.ground_rgb[0] = 0.28; forest.ground_rgb[1] = 0.48; forest.ground_rgb[2] = 0.30;
    forest.texture_amp = 0.06;
    EnvRule urban;
    urban.name = "urban";
    urban.weight = 1.0;
    urban.p_long_upper = 0.50;
    urban.p_long_lower = 0.55;
    urban.p_hat = 0.10;
    urban.sky_rgb[0] = 0.70; urban.sky_rgb[1] = 0.72; urban.sky_rgb[2] = 0.78;
    urban.ground_rgb[0] = 0.47; urban.ground_rgb[1] = 0.46; urban.ground_rgb[2] = 0.50;
    urban.texture_amp = 0.05;
    t.envs = {snow, beach, forest, urban};
    return t;
}

const EnvRule& RuleTable::by_name(const std::string& name) const {
    for (const auto& e : envs) {
        if (e.name == name) {
            return e;
        }
    }
    throw ValidationError("unknown environment: " + name);
}

int RuleTable::index_of(const std::string& name) const {
    for (size_t i = 0; i < envs.size(); i++) {
        if (envs[i].name == name) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

namespace {

constexpr int kWorldRes = 200;

void paint(Image& img, LabelGrid& labels, int x, int y, HpmCategory cat,
           const Palette& pal) {
    if (!img.inside(x, y)) {
        return;
    }
    double rgb[3];
    pal.rgb01(cat, rgb);
    img.set_rgb(x, y, rgb[0], rgb[1], rgb[2]);
    labels.at(x, y) = static_cast<uint8_t>(cat);
}

struct Painter {
    Image& img;
    LabelGrid& labels;
    const Palette& pal;

    void circle(double cx, double cy, double r, HpmCategory cat) {
        for (int y = std::max(0, static_cast<int>(cy - r - 1));
             y <= std::min(img.h - 1, static_cast<int>(cy + r + 1)); y++) {
            for (int x = std::max(0, static_cast<int>(cx - r - 1));
                 x <= std::min(img.w - 1, static_cast<int>(cx + r + 1)); x++) {
                const double dx = x - cx, dy = y - cy;
                if (dx * dx + dy * dy <= r * r) {
                    paint(img, labels, x, y, cat, pal);
                }
            }
        }
    }

    void stroke(double x0, double y0, double x1, double y1, double thickness,
                HpmCategory cat) {
        const double r = thickness * 0.5;
        const double dx = x1 - x0, dy = y1 - y0;
        const double len2 = dx * dx + dy * dy;
        const int bx0 = std::max(0, static_cast<int>(std::min(x0, x1) - r - 1));
        const int bx1 = std::min(img.w - 1,
                                 static_cast<int>(std::max(x0, x1) + r + 1));
        const int by0 = std::max(0, static_cast<int>(std::min(y0, y1) - r - 1));
        const int by1 = std::min(img.h - 1,
                                 static_cast<int>(std::max(y0, y1) + r + 1));
        for (int y = by0; y <= by1; y++) {
            for (int x = bx0; x <= bx1; x++) {
                double t = len2 > 0
                               ? ((x - x0) * dx + (y - y0) * dy) / len2
                               : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double px = x0 + t * dx, py = y0 + t * dy;
                const double ddx = x - px, ddy = y - py;
                if (ddx * ddx + ddy * ddy <= r * r) {
                    paint(img, labels, x, y, cat, pal);
                }
            }
        }
    }

    void quad(double xs[4], double ys[4], HpmCategory cat) {
        double minx = xs[0], maxx = xs[0], miny = ys[0], maxy = ys[0];
        for (int i = 1; i < 4; i++) {
            minx = std::min(minx, xs[i]);
            maxx = std::max(maxx, xs[i]);
            miny = std::min(miny, ys[i]);
            maxy = std::max(maxy, ys[i]);
        }
        for (int y = std::max(0, static_cast<int>(miny));
             y <= std::min(img.h - 1, static_cast<int>(maxy + 1)); y++) {
            for (int x = std::max(0, static_cast<int>(minx));
                 x <= std::min(img.w - 1, static_cast<int>(maxx + 1)); x++) {
                bool pos = false, neg = false;
                for (int i = 0; i < 4; i++) {
                    const int j = (i + 1) % 4;
                    const double cr = (xs[j] - xs[i]) * (y - ys[i]) -
                                      (ys[j] - ys[i]) * (x - xs[i]);
                    if (cr > 0) pos = true;
                    if (cr < 0) neg = true;
                }
                if (!(pos && neg)) {
                    paint(img, labels, x, y, cat, pal);
                }
            }
        }
    }
};

void paint_background(Image& img, const EnvRule& env, Rng& rng) {
    const double horizon = img.h * rng.uniform(0.50, 0.60);
    const double jitter = rng.uniform(-0.04, 0.04);
    for (int y = 0; y < img.h; y++) {
        const double t = static_cast<double>(y) / img.h;
        double base[3];
        if (y < horizon) {
            const double u = y / horizon;
            for (int c = 0; c < 3; c++) {
                base[c] = env.sky_rgb[c] * (1.0 - 0.15 * u) + jitter;
            }
        } else {
            const double u = (y - horizon) / std::max(1.0, img.h - horizon);
            for (int c = 0; c < 3; c++) {
                base[c] = env.ground_rgb[c] * (1.0 - 0.10 * u) + jitter;
            }
        }
        for (int x = 0; x < img.w; x++) {
            (void)t;
            double tex = 0.0;
            if (env.name == "forest" && y < horizon) {
                // vertical trunk streaks
                tex = (static_cast<int>(x / 13) % 3 == 0) ? -env.texture_amp : 0.0;
            } else if (env.name == "urban" && y < horizon) {
                // block pattern
                tex = ((x / 23 + y / 17) % 2 == 0) ? -env.texture_amp
                                                   : env.texture_amp * 0.5;
            } else {
                tex = env.texture_amp * (rng.uniform() - 0.5);
            }
            for (int c = 0; c < 3; c++) {
                img.at(x, y, c) = std::clamp(base[c] + tex, 0.02, 0.995);
            }
        }
    }
}

}  // namespace

ContextRecord generate_synthetic_record(uint64_t seed, int index,
                                        const RuleTable& rules) {
    Rng rng(derive_seed(derive_seed(seed, "synthetic-world"),
                        static_cast<uint64_t>(index)));

    // environment choice, weighted
    double total_w = 0.0;
    for (const auto& e : rules.envs) {
        total_w += e.weight;
    }
    double pick = rng.uniform() * total_w;
    const EnvRule* env = &rules.envs.back();
    for (const auto& e : rules.envs) {
        if (pick < e.weight) {
            env = &e;
            break;
        }
        pick -= e.weight;
    }

    ContextRecord rec;
    rec.environment = env->name;
    rec.source_id = "synthetic/" + env->name + "/" + std::to_string(index);
    rec.image_with_human = Image(kWorldRes, kWorldRes, 3);
    rec.human_mask = Image(kWorldRes, kWorldRes, 1);
    rec.hpm = LabelGrid(kWorldRes, kWorldRes);

    paint_background(rec.image_with_human, *env, rng);

    // outfit from the rule table
    const bool long_upper = rng.uniform() < env->p_long_upper;
    const bool long_lower = rng.uniform() < env->p_long_lower;
    const bool hat = rng.uniform() < env->p_hat;

    // body geometry: tall standing figure filling most of the frame
    const double hb = rng.uniform(182.0, 196.0);
    const double ratio = rng.uniform(0.38, 0.48);
    const double wb = hb * ratio;
    const double cx = kWorldRes / 2.0 + rng.uniform(-6.0, 6.0);
    const double top = (kWorldRes - hb) / 2.0;

    const double head_r = 0.072 * hb;
    const double head_cy = top + head_r * 1.25;
    const double neck_y = top + 0.165 * hb;
    const double shoulder_y = top + 0.21 * hb;
    const double hip_y = top + 0.53 * hb;
    const double knee_y = top + 0.745 * hb;
    const double ankle_y = top + 0.945 * hb;
    const double shoulder_hw = 0.30 * wb;
    const double hip_hw = 0.24 * wb;
    const double arm_spread = rng.uniform(0.34, 0.46) * wb;
    const double leg_spread = rng.uniform(0.10, 0.16) * wb;
    const double arm_th = 0.050 * hb;
    const double leg_th = 0.065 * hb;

    const Palette pal = Palette::standard();
    Painter p{rec.image_with_human, rec.hpm, pal};

    // order matters: later strokes overwrite earlier ones
    p.circle(cx, head_cy, head_r * 1.18, HpmCategory::hair);
    p.circle(cx, head_cy + head_r * 0.28, head_r * 0.92, HpmCategory::face);
    if (hat) {
        double xs[4] = {cx - head_r * 1.3, cx + head_r * 1.3,
                        cx + head_r * 1.05, cx - head_r * 1.05};
        double ys[4] = {head_cy - head_r * 0.85, head_cy - head_r * 0.85,
                        head_cy - head_r * 1.75, head_cy - head_r * 1.75};
        p.quad(xs, ys, HpmCategory::accessories);
    }
    // neck
    p.stroke(cx, head_cy + head_r * 0.8, cx, shoulder_y + 2.0, arm_th,
             HpmCategory::skin);
    // torso
    {
        double xs[4] = {cx - shoulder_hw, cx + shoulder_hw, cx + hip_hw,
                        cx - hip_hw};
        double ys[4] = {shoulder_y, shoulder_y, hip_y, hip_y};
        p.quad(xs, ys, HpmCategory::upper_clothes);
    }
    // arms
    for (int side = -1; side <= 1; side += 2) {
        const double sx = cx + side * shoulder_hw;
        const double ex = cx + side * arm_spread;
        const double elbow_y = shoulder_y + 0.16 * hb;
        const double wrist_y = shoulder_y + 0.315 * hb;
        const double mx = (sx + ex) * 0.5 + side * 0.04 * wb;
        p.stroke(sx, shoulder_y + 1.5, mx, elbow_y, arm_th,
                 HpmCategory::upper_clothes);
        p.stroke(mx, elbow_y, ex, wrist_y, arm_th,
                 long_upper ? HpmCategory::upper_clothes : HpmCategory::skin);
        p.circle(ex, wrist_y + arm_th * 0.6, arm_th * 0.62, HpmCategory::skin);
    }
    // legs
    for (int side = -1; side <= 1; side += 2) {
        const double hx = cx + side * hip_hw * 0.62;
        const double kx = cx + side * leg_spread;
        const double ax = cx + side * leg_spread * 1.1;
        p.stroke(hx, hip_y - 2.0, kx, knee_y, leg_th,
                 HpmCategory::lower_clothes);
        p.stroke(kx, knee_y, ax, ankle_y, leg_th,
                 long_lower ? HpmCategory::lower_clothes : HpmCategory::skin);
        // shoe
        p.stroke(ax - leg_th * 0.4, ankle_y + leg_th * 0.35,
                 ax + side * leg_th * 0.9, ankle_y + leg_th * 0.35,
                 leg_th * 1.05, HpmCategory::shoes);
    }

    // mask = union of painted pixels
    for (int y = 0; y < kWorldRes; y++) {
        for (int x = 0; x < kWorldRes; x++) {
            rec.human_mask.at(x, y, 0) = rec.hpm.at(x, y) != 0 ? 1.0 : 0.0;
        }
    }

    // keypoints (confidence 1.0)
    auto kp = [&](const char* name, double x, double y) {
        rec.keypoints.push_back({name, x, y, 1.0});
    };
    const double elbow_y = shoulder_y + 0.16 * hb;
    const double wrist_y = shoulder_y + 0.315 * hb;
    kp("nose", cx, head_cy);
    kp("neck", cx, neck_y);
    kp("r_shoulder", cx - shoulder_hw, shoulder_y);
    kp("r_elbow", cx - (shoulder_hw + arm_spread) * 0.5, elbow_y);
    kp("r_wrist", cx - arm_spread, wrist_y);
    kp("l_shoulder", cx + shoulder_hw, shoulder_y);
    kp("l_elbow", cx + (shoulder_hw + arm_spread) * 0.5, elbow_y);
    kp("l_wrist", cx + arm_spread, wrist_y);
    kp("r_hip", cx - hip_hw * 0.62, hip_y);
    kp("r_knee", cx - leg_spread, knee_y);
    kp("r_ankle", cx - leg_spread * 1.1, ankle_y);
    kp("l_hip", cx + hip_hw * 0.62, hip_y);
    kp("l_knee", cx + leg_spread, knee_y);
    kp("l_ankle", cx + leg_spread * 1.1, ankle_y);
    kp("r_eye", cx - head_r * 0.35, head_cy - head_r * 0.1);
    kp("l_eye", cx + head_r * 0.35, head_cy - head_r * 0.1);
    kp("r_ear", cx - head_r * 0.75, head_cy);
    kp("l_ear", cx + head_r * 0.75, head_cy);

    return rec;
}

std::vector<ContextRecord> generate_synthetic_world(uint64_t seed,
                                                    int n_records,
                                                    const RuleTable& rules) {
    std::vector<ContextRecord> out;
    out.reserve(n_records);
    for (int i = 0; i < n_records; i++) {
        out.push_back(generate_synthetic_record(seed, i, rules));
    }
    return out;
}

// ---------------------------------------------------------------------------
// derived training views
// ---------------------------------------------------------------------------

LabelGrid hpm_tile(const ContextRecord& record) {
    const RectMap rect = keypoint_rect(record.keypoints, 0.1);
    LabelGrid tile(kPoseWidth, kPoseHeight);
    for (int y = 0; y < kPoseHeight; y++) {
        for (int x = 0; x < kPoseWidth; x++) {
            const int sx = static_cast<int>(rect.x0 + (x + 0.5) / kPoseWidth *
                                                          rect.w);
            const int sy = static_cast<int>(rect.y0 + (y + 0.5) / kPoseHeight *
                                                          rect.h);
            if (sx >= 0 && sx < record.hpm.w && sy >= 0 && sy < record.hpm.h) {
                tile.at(x, y) = record.hpm.at(sx, sy);
            }
        }
    }
    return tile;
}

Image pose_tile(const ContextRecord& record) {
    const RectMap rect = keypoint_rect(record.keypoints, 0.1);
    return render_pose_rect(record.keypoints, 0.1, rect);
}

Image context_image64(const ContextRecord& record, const FilterConfig& cfg) {
    const Image bg = compute_background_mask(record.human_mask,
                                             cfg.dilation_radius_px);
    const Image ctx = mask_context(record.image_with_human, bg);
    return resize_bilinear(ctx, 64, 64);
}

ContextRecord standardize_record(const ContextRecord& record,
                                 const FilterConfig& cfg) {
    const BBox bbox = mask_bbox(record.human_mask);
    if (bbox.empty()) {
        throw ValidationError("standardize_record: empty human mask");
    }
    const int side = std::max(bbox.width(), bbox.height());
    const int cx = (bbox.x0 + bbox.x1) / 2;
    const int cy = (bbox.y0 + bbox.y1) / 2;
    int x0 = cx - side / 2, y0 = cy - side / 2;
    x0 = std::clamp(x0, 0, std::max(0, record.image_with_human.w - side));
    y0 = std::clamp(y0, 0, std::max(0, record.image_with_human.h - side));
    const int cw = std::min(side, record.image_with_human.w);
    const int ch = std::min(side, record.image_with_human.h);

    Image crop_img(cw, ch, 3);
    Image crop_mask(cw, ch, 1);
    LabelGrid crop_labels(cw, ch);
    for (int y = 0; y < ch; y++) {
        for (int x = 0; x < cw; x++) {
            for (int c = 0; c < 3; c++) {
                crop_img.at(x, y, c) =
                    record.image_with_human.at(x0 + x, y0 + y, c);
            }
            crop_mask.at(x, y, 0) = record.human_mask.at(x0 + x, y0 + y, 0);
            crop_labels.at(x, y) = record.hpm.at(x0 + x, y0 + y);
        }
    }

    ContextRecord out;
    out.source_id = record.source_id;
    out.environment = record.environment;
    const int res = cfg.target_resolution;
    out.image_with_human = resize_bilinear(crop_img, res, res);
    out.human_mask = resize_nearest(crop_mask, res, res);
    const Image labels_img = resize_nearest(
        encode_hpm(crop_labels, Palette::standard()), res, res);
    out.hpm = decode_hpm(labels_img, Palette::standard());
    for (const auto& k : record.keypoints) {
        Keypoint nk = k;
        nk.x = (k.x - x0) * res / cw;
        nk.y = (k.y - y0) * res / ch;
        out.keypoints.push_back(nk);
    }
    return out;
}

// ---------------------------------------------------------------------------
// manifest I/O
// ---------------------------------------------------------------------------

void write_record_files(const ContextRecord& record, const Palette& palette,
                        const std::string& dir, const std::string& stem,
                        ManifestEntry& entry) {
    fs::create_directories(dir);
    entry.source_id = record.source_id;
    entry.environment = record.environment;
    entry.image = stem + "_image.png";
    entry.mask = stem + "_mask.png";
    entry.labels = stem + "_labels.png";
    entry.keypoints = stem + "_keypoints.json";
    save_png(record.image_with_human, dir + "/" + entry.image);
    save_png(record.human_mask, dir + "/" + entry.mask);
    save_png(encode_hpm(record.hpm, palette), dir + "/" + entry.labels);
    json j;
    j["joints"] = json::array();
    for (const auto& k : record.keypoints) {
        j["joints"].push_back({{"name", k.name}, {"x", k.x}, {"y", k.y},
                               {"c", k.c}});
    }
    std::ofstream out(dir + "/" + entry.keypoints);
    out << j.dump() << "\n";
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot write manifest: " + path);
    }
    for (const auto& e : entries) {
        json j = {{"source_id", e.source_id}, {"environment", e.environment},
                  {"image", e.image},         {"mask", e.mask},
                  {"labels", e.labels},       {"keypoints", e.keypoints}};
        out << j.dump() << "\n";
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot read manifest: " + path);
    }
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        json j = json::parse(line);
        ManifestEntry e;
        e.source_id = j.value("source_id", "");
        e.environment = j.value("environment", "");
        e.image = j.at("image").get<std::string>();
        e.mask = j.at("mask").get<std::string>();
        e.labels = j.at("labels").get<std::string>();
        e.keypoints = j.at("keypoints").get<std::string>();
        out.push_back(e);
    }
    return out;
}

ContextRecord load_record(const ManifestEntry& entry, const Palette& palette,
                          const std::string& base_dir) {
    ContextRecord rec;
    rec.source_id = entry.source_id;
    rec.environment = entry.environment;
    rec.image_with_human = load_png(base_dir + "/" + entry.image);
    Image mask = load_png(base_dir + "/" + entry.mask);
    for (auto& v : mask.px) {
        v = v > 0.5 ? 1.0 : 0.0;
    }
    rec.human_mask = mask;
    rec.hpm = decode_hpm(load_png(base_dir + "/" + entry.labels), palette);
    std::ifstream in(base_dir + "/" + entry.keypoints);
    if (!in) {
        throw ValidationError("cannot read keypoints: " + entry.keypoints);
    }
    json j;
    in >> j;
    for (const auto& jk : j.at("joints")) {
        rec.keypoints.push_back({jk.at("name").get<std::string>(),
                                 jk.at("x").get<double>(),
                                 jk.at("y").get<double>(),
                                 jk.at("c").get<double>()});
    }
    return rec;
}

}  // namespace scenefit
