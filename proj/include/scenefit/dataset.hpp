#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scenefit/image.hpp"

namespace scenefit {

// ---------------------------------------------------------------------------
// Human parsing maps
// ---------------------------------------------------------------------------

enum class HpmCategory : uint8_t {
    background = 0,
    hair,
    face,
    upper_clothes,
    lower_clothes,
    shoes,
    skin,
    accessories,
};
constexpr int kNumHpmCategories = 8;
const char* hpm_category_name(HpmCategory c);

struct Palette {
    // category index -> RGB byte triple; must stay injective
    std::array<std::array<uint8_t, 3>, kNumHpmCategories> colors;

    static Palette standard();
    bool injective() const;
    // nearest category for an RGB value in [0,1]; distance returned optionally
    HpmCategory nearest(double r, double g, double b,
                        double* dist2 = nullptr) const;
    void rgb01(HpmCategory c, double out[3]) const;
    std::string to_json() const;
    static Palette from_json_file(const std::string& path);
    void save_json(const std::string& path) const;
};

struct LabelGrid {
    int w = 0;
    int h = 0;
    std::vector<uint8_t> labels;

    LabelGrid() = default;
    LabelGrid(int w_, int h_) : w(w_), h(h_), labels(static_cast<size_t>(w_) * h_, 0) {}
    uint8_t& at(int x, int y) { return labels[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int x, int y) const { return labels[static_cast<size_t>(y) * w + x]; }
    bool operator==(const LabelGrid& o) const {
        return w == o.w && h == o.h && labels == o.labels;
    }
};

Image encode_hpm(const LabelGrid& labels, const Palette& palette);
LabelGrid decode_hpm(const Image& rgb, const Palette& palette);

// fraction of pixels per category (sums to 1)
std::array<double, kNumHpmCategories> category_histogram(const LabelGrid& g);

// union of non-background pixels is one 4-connected component
bool hpm_connected(const LabelGrid& g);

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct Keypoint {
    std::string name;
    double x = 0.0;
    double y = 0.0;
    double c = 0.0;  // confidence
};

// 18-joint set; order is fixed and stored with the skeleton spec
extern const std::array<const char*, 18> kJointNames;

struct ContextRecord {
    Image image_with_human;  // RGB, [0,1]
    Image human_mask;        // single channel, binary
    LabelGrid hpm;           // same resolution as the image
    std::vector<Keypoint> keypoints;
    std::string source_id;
    std::string environment;  // synthetic world tag ("" for ingested data)
};

struct FilterConfig {
    int min_height_px = 180;
    int min_width_px = 90;
    int target_resolution = 200;
    double max_width_to_height = 0.5;
    int dilation_radius_px = 5;

    void validate() const;
};

enum class FilterReason {
    accepted,
    size,
    aspect,
    mask_consistency,
    connectivity,
};
const char* filter_reason_name(FilterReason r);

struct FilterDecision {
    bool accepted = false;
    FilterReason reason = FilterReason::accepted;
};

struct BBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool empty() const { return x1 < x0 || y1 < y0; }
};

BBox mask_bbox(const Image& mask);

// Throws ValidationError on malformed grids (naming the offending field).
FilterDecision filter_record(const ContextRecord& record,
                             const FilterConfig& cfg);

// binary dilation with a Chebyshev-metric disk (square structuring element)
Image dilate_mask(const Image& mask, int radius);

// 1 - dilate(mask, radius), optionally feathered with a linear ramp over
// radius/2 outside the dilated support
Image compute_background_mask(const Image& human_mask, int dilation_radius_px,
                              bool feather = true);

Image mask_context(const Image& image_with_human, const Image& background_mask);

// ---------------------------------------------------------------------------
// Pose rendering
// ---------------------------------------------------------------------------

struct LimbSpec {
    int a, b;            // joint indices
    double rgb[3];
};
// fixed limb-pair/colour table (versioned via the config file it is dumped to)
const std::vector<LimbSpec>& skeleton_spec();

constexpr int kPoseWidth = 32;
constexpr int kPoseHeight = 64;

// Deterministic rasterization of the skeleton into a 32x64 RGB canvas.
// Throws ValidationError when fewer than two joints pass the threshold.
Image render_pose(const std::vector<Keypoint>& keypoints,
                  double confidence_threshold = 0.1);

// ---------------------------------------------------------------------------
// Synthetic world
// ---------------------------------------------------------------------------

struct EnvRule {
    std::string name;
    double weight = 1.0;        // mixture weight across environments
    double p_long_upper = 0.5;  // long sleeves
    double p_long_lower = 0.5;  // full-length trousers
    double p_hat = 0.2;         // accessories
    // background look
    double sky_rgb[3] = {0.5, 0.7, 0.9};
    double ground_rgb[3] = {0.4, 0.5, 0.3};
    double texture_amp = 0.05;
};

struct RuleTable {
    std::vector<EnvRule> envs;

    static RuleTable standard();
    const EnvRule& by_name(const std::string& name) const;
    int index_of(const std::string& name) const;
};

std::vector<ContextRecord> generate_synthetic_world(uint64_t seed,
                                                    int n_records,
                                                    const RuleTable& rules);
// single record, addressable by index (sharding-friendly)
ContextRecord generate_synthetic_record(uint64_t seed, int index,
                                        const RuleTable& rules);

// ---------------------------------------------------------------------------
// Derived training views
// ---------------------------------------------------------------------------

// expand the human bbox to 1:2 aspect and crop-resize the labels to 32x64
LabelGrid hpm_tile(const ContextRecord& record);
// context image (human removed) resized to 64x64
Image context_image64(const ContextRecord& record, const FilterConfig& cfg);
// crop-resize keypoints consistently with hpm_tile and render at 32x64
Image pose_tile(const ContextRecord& record);

// standardization for ingested data: center-crop on the human bbox, then
// resize (bilinear image / nearest labels+mask) to cfg.target_resolution
ContextRecord standardize_record(const ContextRecord& record,
                                 const FilterConfig& cfg);

// ---------------------------------------------------------------------------
// Manifest I/O (JSON-lines, one record per line with relative paths)
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string source_id;
    std::string environment;
    std::string image;      // relative PNG path
    std::string mask;       // relative PNG path
    std::string labels;     // relative PNG path (palette-encoded)
    std::string keypoints;  // relative JSON path
};

void write_record_files(const ContextRecord& record, const Palette& palette,
                        const std::string& dir, const std::string& stem,
                        ManifestEntry& entry);
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);
ContextRecord load_record(const ManifestEntry& entry, const Palette& palette,
                          const std::string& base_dir);

}  // namespace scenefit
