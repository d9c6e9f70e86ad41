#pragma once

#include <functional>

#include "vlbert/ops.hpp"
#include "vlbert/sequence.hpp"

namespace vlb {

// Toy detector stand-in: a trainable affine map from the pooled RoI grid to
// the appearance feature space.
template <typename S>
struct DetectorParams {
    int grid = 4;
    Tensor<S> w;  // [grid*grid*3 × d_app]
    Tensor<S> b;  // [d_app]
};

template <typename S>
DetectorParams<S> make_detector(int grid, int d_app, Rng& rng, double init_std = 0.02) {
    DetectorParams<S> det;
    det.grid = grid;
    det.w = Tensor<S>::gaussian({grid * grid * 3, d_app}, rng, 0.0, init_std).set_requires_grad();
    det.b = Tensor<S>::zeros({d_app}).set_requires_grad();
    return det;
}

// Differentiable appearance feature of one RoI: average-pooled grid through
// the detector affine map. Gradients flow into the detector parameters.
template <typename S>
Tensor<S> extract_appearance(const ImageRaster& image, const RoI& roi,
                             const DetectorParams<S>& det) {
    const std::vector<double> pooled = pooled_grid(image, roi, det.grid);
    std::vector<S> vals(pooled.begin(), pooled.end());
    Tensor<S> x = Tensor<S>::from({1, static_cast<int>(vals.size())}, vals);
    if (x.extent(1) != det.w.extent(0)) {
        throw std::invalid_argument("extract_appearance: pooled width " +
                                    std::to_string(x.extent(1)) + " != detector input width " +
                                    std::to_string(det.w.extent(0)));
    }
    return reshape(add_rowvec(matmul(x, det.w), det.b), {det.b.size()});
}

// Fixed sinusoid code of a normalized box (x_lt, y_lt, x_rb, y_rb):
// for each coordinate c and frequency k: sin(c / 10000^(8k/d_g)) then
// cos(c / 10000^(8k/d_g)); coordinate-major, frequency-minor, sin first.
template <typename S>
Tensor<S> geometry_embedding(const std::array<double, 4>& box, int d_g) {
    if (d_g < 8 || d_g % 8 != 0) {
        throw std::invalid_argument("geometry_embedding: d_g must be a positive multiple of 8");
    }
    for (double c : box) {
        if (!(c >= 0.0 && c <= 1.0)) {
            throw std::invalid_argument("geometry_embedding: coordinate " + std::to_string(c) +
                                        " outside [0,1]");
        }
    }
    const int per_coord = d_g / 4;
    const int freqs = per_coord / 2;
    Tensor<S> out = Tensor<S>::zeros({d_g});
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k < freqs; ++k) {
            const double wavelength = std::pow(10000.0, 8.0 * k / d_g);
            const double arg = box[c] / wavelength;
            out.at(c * per_coord + 2 * k) = static_cast<S>(std::sin(arg));
            out.at(c * per_coord + 2 * k + 1) = static_cast<S>(std::cos(arg));
        }
    }
    return out;
}

// All learned input-side tables. The visual projection maps the concatenated
// appearance + geometry vector to model width; text_visual is the shared
// visual term used for every element of an image-free sequence.
template <typename S>
struct EmbeddingTables {
    int d = 0, d_app = 0, d_g = 0, max_positions = 0;
    Tensor<S> token;        // [V × d]
    Tensor<S> segment;      // [3 × d]
    Tensor<S> position;     // [P × d]
    Tensor<S> vis_w;        // [(d_app + d_g) × d]
    Tensor<S> vis_b;        // [d]
    Tensor<S> text_visual;  // [d]
};

template <typename S>
EmbeddingTables<S> make_embedding_tables(int vocab_size, int d, int d_app, int d_g,
                                         int max_positions, Rng& rng, double init_std = 0.02) {
    EmbeddingTables<S> t;
    t.d = d;
    t.d_app = d_app;
    t.d_g = d_g;
    t.max_positions = max_positions;
    t.token = Tensor<S>::gaussian({vocab_size, d}, rng, 0.0, init_std).set_requires_grad();
    t.segment = Tensor<S>::gaussian({3, d}, rng, 0.0, init_std).set_requires_grad();
    t.position = Tensor<S>::gaussian({max_positions, d}, rng, 0.0, init_std).set_requires_grad();
    t.vis_w = Tensor<S>::gaussian({d_app + d_g, d}, rng, 0.0, init_std).set_requires_grad();
    t.vis_b = Tensor<S>::zeros({d}).set_requires_grad();
    t.text_visual = Tensor<S>::gaussian({d}, rng, 0.0, init_std).set_requires_grad();
    return t;
}

// Projection of [appearance ‖ geometry(box)] to model width.
template <typename S>
Tensor<S> visual_feature_embedding(const Tensor<S>& appearance, const std::array<double, 4>& box,
                                   const EmbeddingTables<S>& tables) {
    if (appearance.size() != tables.d_app) {
        throw std::invalid_argument("visual_feature_embedding: appearance length " +
                                    std::to_string(appearance.size()) + " != d_app " +
                                    std::to_string(tables.d_app));
    }
    Tensor<S> app2 = reshape(appearance, {1, tables.d_app});
    Tensor<S> geo = reshape(geometry_embedding<S>(box, tables.d_g), {1, tables.d_g});
    Tensor<S> joint = concat_cols(app2, geo);
    return reshape(add_rowvec(matmul(joint, tables.vis_w), tables.vis_b), {tables.d});
}

// Supplies appearance features: index >= 0 resolves that RoI of the sample,
// index -1 the whole-image region.
template <typename S>
using AppearanceProvider = std::function<Tensor<S>(int roi_index)>;

// Per element: token + visual-feature + segment + position embeddings.
// Image-free sequences use the shared text_visual term for every element.
template <typename S>
Tensor<S> sum_embeddings(const InputSequence& seq, const EmbeddingTables<S>& tables,
                         const AppearanceProvider<S>& appearance) {
    const int n = seq.length();
    if (n == 0) throw std::invalid_argument("sum_embeddings: empty sequence");
    std::vector<int> token_ids(n), segment_ids(n), position_ids(n);
    for (int i = 0; i < n; ++i) {
        const auto& e = seq.elements[i];
        token_ids[i] = e.token_id;
        segment_ids[i] = static_cast<int>(e.segment);
        position_ids[i] = e.position;
        if (e.position >= tables.max_positions) {
            throw std::invalid_argument("sum_embeddings: position " + std::to_string(e.position) +
                                        " exceeds table size " + std::to_string(tables.max_positions));
        }
    }
    Tensor<S> tok = embedding_lookup(tables.token, token_ids);
    Tensor<S> segm = embedding_lookup(tables.segment, segment_ids);
    Tensor<S> posn = embedding_lookup(tables.position, position_ids);

    std::vector<Tensor<S>> visual_rows(n);
    if (seq.has_image) {
        Tensor<S> whole = visual_feature_embedding(appearance(-1), seq.whole_image.box, tables);
        std::vector<Tensor<S>> per_roi(seq.rois.size());
        for (int i = 0; i < n; ++i) {
            const auto& e = seq.elements[i];
            if (e.kind == ElementKind::visual) {
                if (e.roi < 0 || e.roi >= static_cast<int>(seq.rois.size())) {
                    throw std::invalid_argument("sum_embeddings: unresolved roi reference " +
                                                std::to_string(e.roi));
                }
                if (per_roi[e.roi].size() == 0) {
                    per_roi[e.roi] =
                        visual_feature_embedding(appearance(e.roi), seq.rois[e.roi].box, tables);
                }
                visual_rows[i] = per_roi[e.roi];
            } else {
                visual_rows[i] = whole;
            }
        }
    } else {
        for (int i = 0; i < n; ++i) visual_rows[i] = tables.text_visual;
    }
    Tensor<S> vis = stack_rows(visual_rows);
    return add(add(tok, vis), add(segm, posn));
}

}  // namespace vlb
