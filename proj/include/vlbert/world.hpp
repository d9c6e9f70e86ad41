#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace vlb {

class Rng;

enum class Shape { square = 0, circle = 1, triangle = 2 };
enum class Color { red = 0, green = 1, blue = 2, yellow = 3 };

constexpr int kNumShapes = 3;
constexpr int kNumColors = 4;
constexpr int kNumCategories = kNumShapes * kNumColors;  // 12
// Sentinel category for the whole-image region; never a classification target.
constexpr int kFullImageCategory = -1;

int category_of(Shape s, Color c);
Shape shape_of_category(int category);
Color color_of_category(int category);
const char* shape_name(Shape s);
const char* color_name(Color c);
Shape shape_from_name(const std::string& name);
Color color_from_name(const std::string& name);

// Axis-aligned object in pixel coordinates; the box is half-open
// [x0,x1) x [y0,y1).
struct ObjectSpec {
    Shape shape;
    Color color;
    int x0, y0, x1, y1;
};

struct SceneSpec {
    int width = 32;
    int height = 32;
    std::vector<ObjectSpec> objects;
    uint64_t seed = 0;
};

// W*H*3 values in [0,1], row-major, channel-minor.
struct ImageRaster {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    double& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    static ImageRaster zeros(int w, int h) { return {w, h, std::vector<double>(static_cast<size_t>(w) * h * 3, 0.0)}; }
};

// Region of interest with a normalized box (x_lt, y_lt, x_rb, y_rb) in
// [0,1]^4, a synthetic detector score, its ground-truth category, and the
// pretraining mask flag.
struct RoI {
    std::array<double, 4> box{0, 0, 0, 0};
    double score = 1.0;
    int category = kFullImageCategory;
    bool masked = false;
};

RoI full_image_roi();
void validate_roi(const RoI& roi);

ImageRaster render_scene(const SceneSpec& spec);

// Ground-truth boxes plus jittered distractor copies, scored synthetically
// (ground truth in [0.6,1.0), distractors in [0.2,0.8)), filtered by
// score > threshold, capped at max_rois by descending score; if fewer than
// min_rois pass the threshold, the top min_rois by score are taken anyway.
std::vector<RoI> propose_rois(const SceneSpec& spec, uint64_t jitter_seed, int max_rois,
                              int min_rois, double score_threshold, double jitter_frac = 0.1,
                              int distractors_per_object = 1);

// Copy of the raster with every masked RoI's pixel region zeroed.
ImageRaster mask_roi_pixels(const ImageRaster& image, const std::vector<RoI>& rois);

// Average-pool the RoI's pixel region into a grid x grid x 3 vector. Cells
// pool the pixels whose centers they cover; a cell covering no pixel center
// falls back to the single pixel nearest its center.
std::vector<double> pooled_grid(const ImageRaster& image, const RoI& roi, int grid = 4);

// Templated caption naming each object's color and shape, objects in
// left-to-right order, joined by spatial relations or "and" (seed-chosen).
std::vector<std::string> caption_for_scene(const SceneSpec& spec, uint64_t template_seed);

// All words any caption can emit (for vocabulary closure).
std::vector<std::string> caption_word_inventory();

// Categories in caption mention order (parse of "a {color} {shape}" groups).
std::vector<int> parse_caption_categories(const std::vector<std::string>& caption);

// One scene per line: "W H seed shape,color,x0,y0,x1,y1 shape,color,..."
std::string format_scene(const SceneSpec& spec);
SceneSpec parse_scene(const std::string& line);

// Binary NetPBM writers for inspection artifacts.
std::string encode_ppm(const ImageRaster& image);
std::string encode_pgm(const std::vector<double>& gray, int width, int height);

// Deterministic random scene: `max_objects` capped at 4 (one per quadrant so
// objects never overlap); objects sorted left-to-right; shapes/colors drawn
// independently unless distinct_shapes is set.
SceneSpec random_scene(uint64_t seed, int min_objects, int max_objects, bool distinct_shapes,
                       int width = 32, int height = 32);

}  // namespace vlb
