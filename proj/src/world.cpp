#include "vlbert/world.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vlbert/tensor.hpp"

namespace vlb {

int category_of(Shape s, Color c) { return static_cast<int>(s) * kNumColors + static_cast<int>(c); }

Shape shape_of_category(int category) {
    if (category < 0 || category >= kNumCategories) {
        throw std::out_of_range("shape_of_category: category " + std::to_string(category));
    }
    return static_cast<Shape>(category / kNumColors);
}

Color color_of_category(int category) {
    if (category < 0 || category >= kNumCategories) {
        throw std::out_of_range("color_of_category: category " + std::to_string(category));
    }
    return static_cast<Color>(category % kNumColors);
}

const char* shape_name(Shape s) {
    switch (s) {
        case Shape::square: return "square";
        case Shape::circle: return "circle";
        case Shape::triangle: return "triangle";
    }
    throw std::invalid_argument("shape_name: bad shape");
}

const char* color_name(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::yellow: return "yellow";
    }
    throw std::invalid_argument("color_name: bad color");
}

Shape shape_from_name(const std::string& name) {
    for (int i = 0; i < kNumShapes; ++i)
        if (name == shape_name(static_cast<Shape>(i))) return static_cast<Shape>(i);
    throw std::invalid_argument("shape_from_name: unknown shape '" + name + "'");
}

Color color_from_name(const std::string& name) {
    for (int i = 0; i < kNumColors; ++i)
        if (name == color_name(static_cast<Color>(i))) return static_cast<Color>(i);
    throw std::invalid_argument("color_from_name: unknown color '" + name + "'");
}

RoI full_image_roi() {
    RoI r;
    r.box = {0.0, 0.0, 1.0, 1.0};
    r.score = 1.0;
    r.category = kFullImageCategory;
    r.masked = false;
    return r;
}

void validate_roi(const RoI& roi) {
    for (double c : roi.box) {
        if (!(c >= 0.0 && c <= 1.0)) {
            throw std::invalid_argument("RoI: box coordinate " + std::to_string(c) + " outside [0,1]");
        }
    }
    if (roi.box[0] > roi.box[2] || roi.box[1] > roi.box[3]) {
        throw std::invalid_argument("RoI: box corners out of order");
    }
    if (!(roi.score >= 0.0 && roi.score <= 1.0)) {
        throw std::invalid_argument("RoI: score " + std::to_string(roi.score) + " outside [0,1]");
    }
}

namespace {

void color_rgb(Color c, double rgb[3]) {
    rgb[0] = rgb[1] = rgb[2] = 0.0;
    switch (c) {
        case Color::red: rgb[0] = 1.0; break;
        case Color::green: rgb[1] = 1.0; break;
        case Color::blue: rgb[2] = 1.0; break;
        case Color::yellow: rgb[0] = rgb[1] = 1.0; break;
    }
}

bool inside_object(const ObjectSpec& o, double px, double py) {
    switch (o.shape) {
        case Shape::square:
            return px >= o.x0 && px < o.x1 && py >= o.y0 && py < o.y1;
        case Shape::circle: {
            const double cx = 0.5 * (o.x0 + o.x1), cy = 0.5 * (o.y0 + o.y1);
            const double rx = 0.5 * (o.x1 - o.x0), ry = 0.5 * (o.y1 - o.y0);
            if (rx <= 0 || ry <= 0) return false;
            const double u = (px - cx) / rx, v = (py - cy) / ry;
            return u * u + v * v <= 1.0;
        }
        case Shape::triangle: {
            // apex at top-center, base along the bottom edge
            const double ax = 0.5 * (o.x0 + o.x1), ay = o.y0;
            const double bx = o.x0, by = o.y1;
            const double cx = o.x1, cy = o.y1;
            auto edge = [](double x1, double y1, double x2, double y2, double x, double y) {
                return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
            };
            const double e0 = edge(ax, ay, bx, by, px, py);
            const double e1 = edge(bx, by, cx, cy, px, py);
            const double e2 = edge(cx, cy, ax, ay, px, py);
            const bool non_neg = e0 >= 0 && e1 >= 0 && e2 >= 0;
            const bool non_pos = e0 <= 0 && e1 <= 0 && e2 <= 0;
            return non_neg || non_pos;
        }
    }
    return false;
}

}  // namespace

ImageRaster render_scene(const SceneSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0) {
        throw std::invalid_argument("render_scene: non-positive raster size");
    }
    if (spec.objects.size() > 6) {
        throw std::invalid_argument("render_scene: more than 6 objects");
    }
    for (const auto& o : spec.objects) {
        if (o.x0 < 0 || o.y0 < 0 || o.x1 > spec.width || o.y1 > spec.height || o.x0 >= o.x1 ||
            o.y0 >= o.y1) {
            throw std::invalid_argument("render_scene: object box out of bounds");
        }
    }
    ImageRaster img = ImageRaster::zeros(spec.width, spec.height);
    for (const auto& o : spec.objects) {
        double rgb[3];
        color_rgb(o.color, rgb);
        for (int y = o.y0; y < o.y1; ++y) {
            for (int x = o.x0; x < o.x1; ++x) {
                if (inside_object(o, x + 0.5, y + 0.5)) {
                    img.at(x, y, 0) = rgb[0];
                    img.at(x, y, 1) = rgb[1];
                    img.at(x, y, 2) = rgb[2];
                }
            }
        }
    }
    return img;
}

std::vector<RoI> propose_rois(const SceneSpec& spec, uint64_t jitter_seed, int max_rois,
                              int min_rois, double score_threshold, double jitter_frac,
                              int distractors_per_object) {
    if (min_rois < 1 || max_rois < min_rois) {
        throw std::invalid_argument("propose_rois: need max_rois >= min_rois >= 1");
    }
    Rng rng(jitter_seed);
    const double W = spec.width, H = spec.height;
    std::vector<RoI> pool;
    for (const auto& o : spec.objects) {
        RoI gt;
        gt.box = {o.x0 / W, o.y0 / H, o.x1 / W, o.y1 / H};
        gt.score = rng.uniform(0.6, 1.0);
        gt.category = category_of(o.shape, o.color);
        pool.push_back(gt);
        for (int k = 0; k < distractors_per_object; ++k) {
            const double bw = (o.x1 - o.x0) / W, bh = (o.y1 - o.y0) / H;
            RoI d = gt;
            d.box[0] = std::clamp(gt.box[0] + rng.uniform(-jitter_frac, jitter_frac) * bw, 0.0, 1.0);
            d.box[1] = std::clamp(gt.box[1] + rng.uniform(-jitter_frac, jitter_frac) * bh, 0.0, 1.0);
            d.box[2] = std::clamp(gt.box[2] + rng.uniform(-jitter_frac, jitter_frac) * bw, 0.0, 1.0);
            d.box[3] = std::clamp(gt.box[3] + rng.uniform(-jitter_frac, jitter_frac) * bh, 0.0, 1.0);
            if (d.box[0] > d.box[2]) std::swap(d.box[0], d.box[2]);
            if (d.box[1] > d.box[3]) std::swap(d.box[1], d.box[3]);
            d.score = rng.uniform(0.2, 0.8);
            pool.push_back(d);
        }
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [](const RoI& a, const RoI& b) { return a.score > b.score; });
    std::vector<RoI> selected;
    for (const auto& r : pool) {
        if (r.score > score_threshold) selected.push_back(r);
        if (static_cast<int>(selected.size()) == max_rois) break;
    }
    if (static_cast<int>(selected.size()) < min_rois) {
        selected.assign(pool.begin(),
                        pool.begin() + std::min<size_t>(pool.size(), static_cast<size_t>(min_rois)));
    }
    for (const auto& r : selected) validate_roi(r);
    return selected;
}

ImageRaster mask_roi_pixels(const ImageRaster& image, const std::vector<RoI>& rois) {
    ImageRaster out = image;
    for (const auto& r : rois) {
        if (!r.masked) continue;
        validate_roi(r);
        for (int y = 0; y < image.height; ++y) {
            const double py = (y + 0.5) / image.height;
            if (py < r.box[1] || py >= r.box[3]) continue;
            for (int x = 0; x < image.width; ++x) {
                const double px = (x + 0.5) / image.width;
                if (px < r.box[0] || px >= r.box[2]) continue;
                out.at(x, y, 0) = out.at(x, y, 1) = out.at(x, y, 2) = 0.0;
            }
        }
    }
    return out;
}

std::vector<double> pooled_grid(const ImageRaster& image, const RoI& roi, int grid) {
    validate_roi(roi);
    if (grid < 1) throw std::invalid_argument("pooled_grid: grid must be >= 1");
    const double px0 = roi.box[0] * image.width, px1 = roi.box[2] * image.width;
    const double py0 = roi.box[1] * image.height, py1 = roi.box[3] * image.height;
    std::vector<double> out(static_cast<size_t>(grid) * grid * 3, 0.0);
    for (int gy = 0; gy < grid; ++gy) {
        const double cy0 = py0 + (py1 - py0) * gy / grid;
        const double cy1 = py0 + (py1 - py0) * (gy + 1) / grid;
        for (int gx = 0; gx < grid; ++gx) {
            const double cx0 = px0 + (px1 - px0) * gx / grid;
            const double cx1 = px0 + (px1 - px0) * (gx + 1) / grid;
            double acc[3] = {0, 0, 0};
            int count = 0;
            for (int y = static_cast<int>(std::floor(cy0)); y < static_cast<int>(std::ceil(cy1)); ++y) {
                if (y < 0 || y >= image.height) continue;
                const double pcy = y + 0.5;
                if (pcy < cy0 || pcy >= cy1) continue;
                for (int x = static_cast<int>(std::floor(cx0)); x < static_cast<int>(std::ceil(cx1)); ++x) {
                    if (x < 0 || x >= image.width) continue;
                    const double pcx = x + 0.5;
                    if (pcx < cx0 || pcx >= cx1) continue;
                    for (int c = 0; c < 3; ++c) acc[c] += image.at(x, y, c);
                    ++count;
                }
            }
            if (count == 0) {
                // degenerate cell: nearest pixel to the cell center
                const int nx = std::clamp(static_cast<int>(0.5 * (cx0 + cx1)), 0, image.width - 1);
                const int ny = std::clamp(static_cast<int>(0.5 * (cy0 + cy1)), 0, image.height - 1);
                for (int c = 0; c < 3; ++c) acc[c] = image.at(nx, ny, c);
                count = 1;
            }
            for (int c = 0; c < 3; ++c) out[(static_cast<size_t>(gy) * grid + gx) * 3 + c] = acc[c] / count;
        }
    }
    return out;
}

namespace {

std::vector<const ObjectSpec*> objects_left_to_right(const SceneSpec& spec) {
    std::vector<const ObjectSpec*> ptrs;
    for (const auto& o : spec.objects) ptrs.push_back(&o);
    std::stable_sort(ptrs.begin(), ptrs.end(), [](const ObjectSpec* a, const ObjectSpec* b) {
        const double ax = a->x0 + a->x1, bx = b->x0 + b->x1;
        if (ax != bx) return ax < bx;
        return a->y0 + a->y1 < b->y0 + b->y1;
    });
    return ptrs;
}

const char* relation_between(const ObjectSpec& prev, const ObjectSpec& cur) {
    const double dx = 0.5 * (prev.x0 + prev.x1) - 0.5 * (cur.x0 + cur.x1);
    const double dy = 0.5 * (prev.y0 + prev.y1) - 0.5 * (cur.y0 + cur.y1);
    if (std::fabs(dx) >= std::fabs(dy)) return dx <= 0 ? "left" : "right";
    return dy <= 0 ? "above" : "below";
}

}  // namespace

std::vector<std::string> caption_for_scene(const SceneSpec& spec, uint64_t template_seed) {
    if (spec.objects.empty()) throw std::invalid_argument("caption_for_scene: no objects");
    Rng rng(template_seed);
    auto order = objects_left_to_right(spec);
    std::vector<std::string> words;
    for (size_t i = 0; i < order.size(); ++i) {
        if (i > 0) {
            if (rng.bernoulli(0.5)) {
                words.push_back(relation_between(*order[i - 1], *order[i]));
                words.push_back("of");
            } else {
                words.push_back("and");
            }
        }
        words.push_back("a");
        words.push_back(color_name(order[i]->color));
        words.push_back(shape_name(order[i]->shape));
    }
    return words;
}

std::vector<std::string> caption_word_inventory() {
    std::vector<std::string> inv = {"a", "and", "of", "left", "right", "above", "below"};
    for (int i = 0; i < kNumColors; ++i) inv.push_back(color_name(static_cast<Color>(i)));
    for (int i = 0; i < kNumShapes; ++i) inv.push_back(shape_name(static_cast<Shape>(i)));
    return inv;
}

std::vector<int> parse_caption_categories(const std::vector<std::string>& caption) {
    std::vector<int> cats;
    for (size_t i = 0; i < caption.size(); ++i) {
        if (caption[i] != "a" || i + 2 >= caption.size()) continue;
        try {
            Color c = color_from_name(caption[i + 1]);
            Shape s = shape_from_name(caption[i + 2]);
            cats.push_back(category_of(s, c));
            i += 2;
        } catch (const std::invalid_argument&) {
            continue;
        }
    }
    return cats;
}

std::string format_scene(const SceneSpec& spec) {
    std::ostringstream out;
    out << spec.width << ' ' << spec.height << ' ' << spec.seed;
    for (const auto& o : spec.objects) {
        out << ' ' << shape_name(o.shape) << ',' << color_name(o.color) << ',' << o.x0 << ',' << o.y0
            << ',' << o.x1 << ',' << o.y1;
    }
    return out.str();
}

SceneSpec parse_scene(const std::string& line) {
    std::istringstream in(line);
    SceneSpec spec;
    if (!(in >> spec.width >> spec.height >> spec.seed)) {
        throw std::invalid_argument("parse_scene: bad header in '" + line + "'");
    }
    std::string group;
    while (in >> group) {
        std::replace(group.begin(), group.end(), ',', ' ');
        std::istringstream gs(group);
        std::string shape, color;
        ObjectSpec o{};
        if (!(gs >> shape >> color >> o.x0 >> o.y0 >> o.x1 >> o.y1)) {
            throw std::invalid_argument("parse_scene: bad object group '" + group + "'");
        }
        o.shape = shape_from_name(shape);
        o.color = color_from_name(color);
        spec.objects.push_back(o);
    }
    return spec;
}

std::string encode_ppm(const ImageRaster& image) {
    std::ostringstream out;
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
    return out.str();
}

std::string encode_pgm(const std::vector<double>& gray, int width, int height) {
    if (static_cast<int>(gray.size()) != width * height) {
        throw std::invalid_argument("encode_pgm: size mismatch");
    }
    std::ostringstream out;
    out << "P5\n" << width << ' ' << height << "\n255\n";
    for (double v : gray) {
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
    return out.str();
}

SceneSpec random_scene(uint64_t seed, int min_objects, int max_objects, bool distinct_shapes,
                       int width, int height) {
    if (min_objects < 1 || max_objects < min_objects || max_objects > 4) {
        throw std::invalid_argument("random_scene: object count must satisfy 1 <= min <= max <= 4");
    }
    if (distinct_shapes && max_objects > kNumShapes) {
        throw std::invalid_argument("random_scene: distinct shapes support at most 3 objects");
    }
    if (width < 16 || height < 16) throw std::invalid_argument("random_scene: raster too small");
    Rng rng(seed);
    SceneSpec spec;
    spec.width = width;
    spec.height = height;
    spec.seed = seed;
    const int n = min_objects + static_cast<int>(rng.integer(max_objects - min_objects + 1));

    int quads[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) std::swap(quads[i], quads[rng.integer(i + 1)]);

    int shapes[kNumShapes] = {0, 1, 2};
    for (int i = kNumShapes - 1; i > 0; --i) std::swap(shapes[i], shapes[rng.integer(i + 1)]);

    const int qw = width / 2, qh = height / 2;
    for (int i = 0; i < n; ++i) {
        ObjectSpec o{};
        o.shape = distinct_shapes ? static_cast<Shape>(shapes[i])
                                  : static_cast<Shape>(rng.integer(kNumShapes));
        o.color = static_cast<Color>(rng.integer(kNumColors));
        const int lo = qw / 2, hi = 3 * qw / 4;  // object size range, e.g. 8..12 at 32x32
        const int sw = lo + static_cast<int>(rng.integer(hi - lo + 1));
        const int sh = lo + static_cast<int>(rng.integer(hi - lo + 1));
        const int qx = (quads[i] % 2) * qw, qy = (quads[i] / 2) * qh;
        const int max_ox = qw - sw - 2, max_oy = qh - sh - 2;
        const int ox = 1 + static_cast<int>(rng.integer(std::max(1, max_ox)));
        const int oy = 1 + static_cast<int>(rng.integer(std::max(1, max_oy)));
        o.x0 = qx + ox;
        o.y0 = qy + oy;
        o.x1 = o.x0 + sw;
        o.y1 = o.y0 + sh;
        spec.objects.push_back(o);
    }
    std::stable_sort(spec.objects.begin(), spec.objects.end(),
                     [](const ObjectSpec& a, const ObjectSpec& b) {
                         if (a.x0 + a.x1 != b.x0 + b.x1) return a.x0 + a.x1 < b.x0 + b.x1;
                         return a.y0 + a.y1 < b.y0 + b.y1;
                     });
    return spec;
}

}  // namespace vlb
