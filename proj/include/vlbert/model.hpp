#pragma once

#include "vlbert/embedding.hpp"
#include "vlbert/transformer.hpp"

namespace vlb {

struct ModelConfig {
    int d = 64;
    int layers = 4;
    int heads = 4;
    int d_ff = 256;
    int d_app = 32;
    int d_g = 32;
    int vocab_size = 0;
    int n_categories = kNumCategories;
    int n_answers = 12;
    int max_positions = 64;
    int pool_grid = 4;
    bool scale_attention = true;
    double init_std = 0.02;

    void validate() const {
        if (d <= 0 || layers <= 0 || heads <= 0 || d_ff <= 0 || d_app <= 0 || d_g <= 0) {
            throw std::invalid_argument("ModelConfig: dimensions must be positive");
        }
        if (d % heads != 0) throw std::invalid_argument("ModelConfig: heads must divide d");
        if (d_g % 8 != 0) throw std::invalid_argument("ModelConfig: d_g must be a multiple of 8");
        if (vocab_size <= Vocabulary::num_specials) {
            throw std::invalid_argument("ModelConfig: vocabulary too small");
        }
        if (n_categories <= 0 || n_answers <= 0 || max_positions <= 2 || pool_grid <= 0) {
            throw std::invalid_argument("ModelConfig: invalid head/table sizes");
        }
    }
};

template <typename S>
struct EncodeResult {
    Tensor<S> hidden;  // [N × d]
    std::vector<AttentionRecord<S>> records;
};

// The unified single-stream model: embedding tables, detector stub, encoder
// stack, and every output head used by pretraining and the downstream tasks.
// All heads exist from initialization so checkpoints have one layout.
template <typename S>
class VLBertModel {
public:
    VLBertModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        tables_ = make_embedding_tables<S>(cfg_.vocab_size, cfg_.d, cfg_.d_app, cfg_.d_g,
                                           cfg_.max_positions, rng, cfg_.init_std);
        detector_ = make_detector<S>(cfg_.pool_grid, cfg_.d_app, rng, cfg_.init_std);
        for (int l = 0; l < cfg_.layers; ++l) {
            layers_.push_back(make_layer<S>(cfg_.d, cfg_.heads, cfg_.d_ff, rng, cfg_.init_std));
        }
        auto head = [&](int out) {
            return std::pair<Tensor<S>, Tensor<S>>(
                Tensor<S>::gaussian({cfg_.d, out}, rng, 0.0, cfg_.init_std).set_requires_grad(),
                Tensor<S>::zeros({out}).set_requires_grad());
        };
        std::tie(mlm_w_, mlm_b_) = head(cfg_.vocab_size);
        std::tie(roi_w_, roi_b_) = head(cfg_.n_categories);
        std::tie(nsp_w_, nsp_b_) = head(1);
        std::tie(vcr_w_, vcr_b_) = head(1);
        std::tie(vqa_w_, vqa_b_) = head(cfg_.n_answers);
        std::tie(ref_w_, ref_b_) = head(1);
        register_params();
    }

    const ModelConfig& config() const { return cfg_; }
    std::map<std::string, Tensor<S>>& params() { return params_; }
    const std::map<std::string, Tensor<S>>& params() const { return params_; }
    EmbeddingTables<S>& tables() { return tables_; }
    DetectorParams<S>& detector() { return detector_; }
    std::vector<LayerParams<S>>& layers() { return layers_; }

    // Detector freezing for the pretraining ablation column.
    void set_detector_trainable(bool trainable) {
        detector_.w.set_requires_grad(trainable);
        detector_.b.set_requires_grad(trainable);
    }
    bool detector_trainable() const { return detector_.w.requires_grad(); }

    // Full forward: embeddings then encoder. `image_override` substitutes the
    // raster features are extracted from (e.g. the pixel-zeroed copy) while
    // keeping the sequence's boxes and layout.
    EncodeResult<S> encode(const InputSequence& seq, bool capture = false,
                           const ImageRaster* image_override = nullptr) const {
        const ImageRaster* raster = image_override ? image_override : &seq.image;
        AppearanceProvider<S> provider = [&](int roi_index) {
            if (roi_index == -1) return extract_appearance(*raster, seq.whole_image, detector_);
            if (roi_index < 0 || roi_index >= static_cast<int>(seq.rois.size())) {
                throw std::invalid_argument("encode: unresolved roi reference " +
                                            std::to_string(roi_index));
            }
            return extract_appearance(*raster, seq.rois[roi_index], detector_);
        };
        Tensor<S> x = sum_embeddings(seq, tables_, provider);
        EncodeResult<S> out;
        out.hidden = encoder_forward(x, layers_, capture, capture ? &out.records : nullptr,
                                     cfg_.scale_attention);
        return out;
    }

    // Heads. Each takes final features [N×d] and selects rows itself.
    Tensor<S> word_logits(const Tensor<S>& hidden, const std::vector<int>& positions) const {
        return add_rowvec(matmul(take_rows(hidden, positions), mlm_w_), mlm_b_);
    }
    Tensor<S> roi_logits(const Tensor<S>& hidden, const std::vector<int>& positions) const {
        return add_rowvec(matmul(take_rows(hidden, positions), roi_w_), roi_b_);
    }
    Tensor<S> nsp_logit(const Tensor<S>& hidden) const {
        return reshape(add_rowvec(matmul(take_rows(hidden, {0}), nsp_w_), nsp_b_), {1});
    }
    Tensor<S> vcr_logit(const Tensor<S>& hidden) const {
        return reshape(add_rowvec(matmul(take_rows(hidden, {0}), vcr_w_), vcr_b_), {1});
    }
    Tensor<S> vqa_logits(const Tensor<S>& hidden, int mask_position) const {
        return add_rowvec(matmul(take_rows(hidden, {mask_position}), vqa_w_), vqa_b_);
    }
    Tensor<S> ref_logits(const Tensor<S>& hidden, const std::vector<int>& positions) const {
        return reshape(add_rowvec(matmul(take_rows(hidden, positions), ref_w_), ref_b_),
                       {static_cast<int>(positions.size())});
    }

private:
    void register_params() {
        params_["emb.token"] = tables_.token;
        params_["emb.segment"] = tables_.segment;
        params_["emb.position"] = tables_.position;
        params_["emb.vis_w"] = tables_.vis_w;
        params_["emb.vis_b"] = tables_.vis_b;
        params_["emb.text_visual"] = tables_.text_visual;
        params_["det.w"] = detector_.w;
        params_["det.b"] = detector_.b;
        for (int l = 0; l < cfg_.layers; ++l) {
            register_layer(params_, "layer" + std::to_string(l), layers_[l]);
        }
        params_["head.mlm.w"] = mlm_w_;
        params_["head.mlm.b"] = mlm_b_;
        params_["head.roi.w"] = roi_w_;
        params_["head.roi.b"] = roi_b_;
        params_["head.nsp.w"] = nsp_w_;
        params_["head.nsp.b"] = nsp_b_;
        params_["head.vcr.w"] = vcr_w_;
        params_["head.vcr.b"] = vcr_b_;
        params_["head.vqa.w"] = vqa_w_;
        params_["head.vqa.b"] = vqa_b_;
        params_["head.ref.w"] = ref_w_;
        params_["head.ref.b"] = ref_b_;
    }

    ModelConfig cfg_;
    EmbeddingTables<S> tables_;
    DetectorParams<S> detector_;
    std::vector<LayerParams<S>> layers_;
    Tensor<S> mlm_w_, mlm_b_, roi_w_, roi_b_, nsp_w_, nsp_b_;
    Tensor<S> vcr_w_, vcr_b_, vqa_w_, vqa_b_, ref_w_, ref_b_;
    std::map<std::string, Tensor<S>> params_;
};

}  // namespace vlb
