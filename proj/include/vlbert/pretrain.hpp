#pragma once

#include <optional>

#include "vlbert/corpus.hpp"
#include "vlbert/model.hpp"
#include "vlbert/optim.hpp"

namespace vlb {

// How selected words are corrupted. The default replaces every selected word
// with [MASK]; the alternative is the classic 80/10/10 corruption mix.
enum class MaskScheme { replace_only, bert_80_10_10 };

struct TaskFlags {
    bool mlm_visual = true;
    bool roi_cls = true;
    bool text_mlm = true;
    bool nsp = false;

    bool any() const { return mlm_visual || roi_cls || text_mlm || nsp; }
};

struct MaskedWords {
    InputSequence seq;
    std::vector<int> positions;  // element indices
    std::vector<int> targets;    // original token ids
};

// Independently masks each word with probability p; if none is selected the
// lowest-index word is forced so every sample contributes loss.
MaskedWords mask_words(const InputSequence& seq, double p, Rng& rng, const Vocabulary& vocab,
                       MaskScheme scheme = MaskScheme::replace_only);

struct MaskedRois {
    std::vector<RoI> rois;       // copy with masked flags set
    std::vector<int> positions;  // element indices of masked visual elements
    std::vector<int> targets;    // ground-truth categories
};

// Flags each real region with probability p; the whole-image region (category
// sentinel) is exempt; forces the lowest-index region when none is selected.
MaskedRois mask_rois(const InputSequence& seq, double p, Rng& rng);

struct PretrainSample {
    enum class Source { visual_linguistic, text_only };
    Source source = Source::visual_linguistic;
    InputSequence input;  // word masks applied; input.image is the clean raster
    std::vector<int> masked_word_positions, masked_word_targets;
    std::vector<int> masked_roi_positions, masked_roi_targets;
    std::optional<int> nsp_label;
    ImageRaster masked_image;  // pixel-zeroed copy; equals the clean raster when
                               // no region is masked
};

struct MiniBatch {
    std::vector<PretrainSample> samples;
    int vl_count = 0;
    int text_count = 0;
};

struct SamplerOptions {
    double mask_word_p = 0.15;
    double mask_roi_p = 0.15;
    MaskScheme scheme = MaskScheme::replace_only;
    TaskFlags flags;
    int text_max_tokens = 64;
    int ratio_vl = 1;
    int ratio_text = 1;
};

// Draws batch_size samples, ratio_vl : ratio_text from the two corpora, and
// applies the maskings the enabled tasks need. Deterministic given seed.
MiniBatch sample_minibatch(const VlCorpus& vl, const TextCorpus& text, int batch_size,
                           uint64_t seed, const Vocabulary& vocab, const SamplerOptions& opt);

// Builds one paired sample outside the batch sampler (used by evaluations).
PretrainSample make_vl_sample(const VlCorpusItem& item, const std::vector<std::string>& caption,
                              uint64_t seed, const Vocabulary& vocab, const SamplerOptions& opt);

// ----- losses --------------------------------------------------------------

// Masked-word prediction over the vocabulary from the sample's canonical
// visual input (regions pixel-zeroed if region masking was applied).
template <typename S>
Tensor<S> mlm_loss_from_hidden(const VLBertModel<S>& model, const Tensor<S>& hidden,
                               const PretrainSample& sample) {
    if (sample.masked_word_positions.empty()) {
        throw std::invalid_argument("mlm loss: sample has no masked words");
    }
    Tensor<S> logits = model.word_logits(hidden, sample.masked_word_positions);
    std::vector<uint8_t> mask(sample.masked_word_positions.size(), 1);
    return cross_entropy(logits, sample.masked_word_targets, mask);
}

template <typename S>
Tensor<S> mlm_visual_loss(const VLBertModel<S>& model, const PretrainSample& sample) {
    if (sample.source != PretrainSample::Source::visual_linguistic) {
        throw std::invalid_argument("mlm_visual_loss: expected a visual-linguistic sample");
    }
    return mlm_loss_from_hidden(model, model.encode(sample.input, false, &sample.masked_image).hidden,
                                sample);
}

template <typename S>
Tensor<S> roi_cls_loss_from_hidden(const VLBertModel<S>& model, const Tensor<S>& hidden,
                                   const PretrainSample& sample) {
    if (sample.masked_roi_positions.empty()) {
        throw std::invalid_argument("roi cls loss: sample has no masked regions");
    }
    Tensor<S> logits = model.roi_logits(hidden, sample.masked_roi_positions);
    std::vector<uint8_t> mask(sample.masked_roi_positions.size(), 1);
    return cross_entropy(logits, sample.masked_roi_targets, mask);
}

// Category prediction for pixel-zeroed regions; the forward runs on the
// masked raster, so the zeroed content is invisible everywhere, including
// through the whole-image feature.
template <typename S>
Tensor<S> masked_roi_cls_loss(const VLBertModel<S>& model, const PretrainSample& sample) {
    return roi_cls_loss_from_hidden(
        model, model.encode(sample.input, false, &sample.masked_image).hidden, sample);
}

template <typename S>
Tensor<S> text_only_mlm_loss(const VLBertModel<S>& model, const PretrainSample& sample) {
    if (sample.source != PretrainSample::Source::text_only || sample.input.has_image ||
        !sample.input.rois.empty()) {
        throw std::invalid_argument("text_only_mlm_loss: sample carries visual content");
    }
    return mlm_loss_from_hidden(model, model.encode(sample.input).hidden, sample);
}

// Binary logistic loss on the [CLS] output: -[t log g + (1-t) log(1-g)].
template <typename S>
Tensor<S> nsp_loss(const VLBertModel<S>& model, const PretrainSample& sample) {
    if (!sample.nsp_label.has_value()) {
        throw std::invalid_argument("nsp_loss: sample has no relationship label");
    }
    Tensor<S> hidden = model.encode(sample.input, false, &sample.masked_image).hidden;
    return binary_cross_entropy_with_logits(model.nsp_logit(hidden),
                                            {static_cast<S>(*sample.nsp_label)});
}

// ----- Markov-random-field reading of masked prediction --------------------

// Log-potential of position i: the output-head logit of the true token, with
// position i masked in the input.
template <typename S>
double log_potential(const VLBertModel<S>& model, const InputSequence& seq, int element_index,
                     const Vocabulary& vocab) {
    if (element_index < 0 || element_index >= seq.length() ||
        seq.elements[element_index].kind != ElementKind::word) {
        throw std::invalid_argument("log_potential: element " + std::to_string(element_index) +
                                    " is not a word");
    }
    NoGradGuard ng;
    InputSequence masked = seq;
    const int true_id = masked.elements[element_index].token_id;
    masked.elements[element_index].token_id = vocab.mask();
    Tensor<S> hidden = model.encode(masked).hidden;
    Tensor<S> logits = model.word_logits(hidden, {element_index});
    return static_cast<double>(logits.at(true_id));
}

// Sum over word positions of the normalized conditional log-probability
// log softmax(f_i(x with i masked))[x_i] — the tractable pseudo-likelihood.
template <typename S>
double pseudo_log_likelihood(const VLBertModel<S>& model, const InputSequence& seq,
                             const Vocabulary& vocab) {
    const auto words = word_positions(seq);
    if (words.empty()) throw std::invalid_argument("pseudo_log_likelihood: sequence has no words");
    NoGradGuard ng;
    double total = 0.0;
    for (int i : words) {
        InputSequence masked = seq;
        const int true_id = masked.elements[i].token_id;
        masked.elements[i].token_id = vocab.mask();
        Tensor<S> logits = model.word_logits(model.encode(masked).hidden, {i});
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.size(); ++j) mx = std::max(mx, static_cast<double>(logits.at(j)));
        double lse = 0.0;
        for (int j = 0; j < logits.size(); ++j) lse += std::exp(static_cast<double>(logits.at(j)) - mx);
        total += static_cast<double>(logits.at(true_id)) - (mx + std::log(lse));
    }
    return total;
}

// ----- one optimization step ------------------------------------------------

struct StepMetrics {
    double total = 0.0;
    double mlm_visual = 0.0;
    double roi_cls = 0.0;
    double text_mlm = 0.0;
    double nsp = 0.0;
    int mlm_samples = 0, roi_samples = 0, text_samples = 0, nsp_samples = 0;
};

// Sums the enabled per-task mean losses over the batch, backpropagates once,
// and applies one optimizer step. Disabled tasks contribute no gradient.
template <typename S>
StepMetrics pretrain_step(VLBertModel<S>& model, const MiniBatch& batch,
                          OptimizerState<S>& state, const TaskFlags& flags,
                          const AdamConfig& adam) {
    if (!flags.any()) throw std::invalid_argument("pretrain_step: no task enabled");
    if (batch.samples.empty()) throw std::invalid_argument("pretrain_step: empty batch");
    zero_grads(model.params());

    std::vector<Tensor<S>> mlm_terms, roi_terms, text_terms, nsp_terms;
    for (const auto& sample : batch.samples) {
        if (sample.source == PretrainSample::Source::text_only) {
            if (flags.text_mlm && !sample.masked_word_positions.empty()) {
                text_terms.push_back(text_only_mlm_loss(model, sample));
            }
            continue;
        }
        // one shared forward serves every enabled loss on this sample
        const bool need_words = flags.mlm_visual && !sample.masked_word_positions.empty();
        const bool need_rois = flags.roi_cls && !sample.masked_roi_positions.empty();
        const bool need_nsp = flags.nsp && sample.nsp_label.has_value();
        if (!need_words && !need_rois && !need_nsp) continue;
        Tensor<S> hidden = model.encode(sample.input, false, &sample.masked_image).hidden;
        if (need_words) mlm_terms.push_back(mlm_loss_from_hidden(model, hidden, sample));
        if (need_rois) roi_terms.push_back(roi_cls_loss_from_hidden(model, hidden, sample));
        if (need_nsp) {
            nsp_terms.push_back(binary_cross_entropy_with_logits(
                model.nsp_logit(hidden), {static_cast<S>(*sample.nsp_label)}));
        }
    }

    auto mean_of = [](std::vector<Tensor<S>>& terms) {
        Tensor<S> acc = terms[0];
        for (size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
        return scalar_mul(acc, static_cast<S>(1.0 / terms.size()));
    };

    StepMetrics metrics;
    Tensor<S> total;
    auto accumulate = [&](std::vector<Tensor<S>>& terms, double& slot, int& count) {
        if (terms.empty()) return;
        Tensor<S> m = mean_of(terms);
        slot = static_cast<double>(m.item());
        count = static_cast<int>(terms.size());
        total = total.size() == 0 ? m : add(total, m);
    };
    accumulate(mlm_terms, metrics.mlm_visual, metrics.mlm_samples);
    accumulate(roi_terms, metrics.roi_cls, metrics.roi_samples);
    accumulate(text_terms, metrics.text_mlm, metrics.text_samples);
    accumulate(nsp_terms, metrics.nsp, metrics.nsp_samples);
    if (total.size() == 0) {
        throw std::invalid_argument("pretrain_step: no enabled task produced a loss");
    }
    metrics.total = static_cast<double>(total.item());
    backward(total);
    adam_step(model.params(), state, adam);
    return metrics;
}

}  // namespace vlb
