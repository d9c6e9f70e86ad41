#pragma once

#include "vlbert/model.hpp"
#include "vlbert/pretrain.hpp"

namespace vlb {

enum class VcrSubtask { qa, qar };

// One ⟨Question, Answer, Image⟩ sequence per candidate. For the rationale
// subtask the caller passes question ‖ chosen-answer tokens as `question`;
// the layout itself is identical for both subtasks.
std::array<InputSequence, 4> pack_vcr(const std::vector<int>& question,
                                      const std::array<std::vector<int>, 4>& candidates,
                                      const std::vector<RoI>& rois, const ImageRaster& image,
                                      const Vocabulary& vocab, VcrSubtask subtask);

// ⟨Question, [MASK], Image⟩: the answer section holds exactly one [MASK].
InputSequence pack_vqa(const std::vector<int>& question, const std::vector<RoI>& rois,
                       const ImageRaster& image, const Vocabulary& vocab);

// Element index of the answer-section [MASK].
int vqa_mask_position(const InputSequence& seq, const Vocabulary& vocab);

// ⟨Query, Image⟩.
InputSequence pack_ref(const std::vector<int>& query, const std::vector<RoI>& rois,
                       const ImageRaster& image, const Vocabulary& vocab);

// ----- losses and inference -------------------------------------------------

// Stacks the four per-candidate [CLS] logits into one 4-way softmax
// cross-entropy. When aux_weight > 0 an auxiliary masked-region
// classification loss on the correct candidate's sequence is added.
template <typename S>
Tensor<S> vcr_forward_loss(const VLBertModel<S>& model, const VcrInstance& inst,
                           const Vocabulary& vocab, VcrSubtask subtask, double aux_weight,
                           uint64_t aux_seed, double aux_mask_p) {
    std::array<std::vector<int>, 4> cand_ids;
    for (int c = 0; c < 4; ++c) cand_ids[c] = vocab.encode(inst.candidates[c]);
    auto seqs = pack_vcr(vocab.encode(inst.question), cand_ids, inst.rois, inst.image, vocab, subtask);
    std::vector<Tensor<S>> logit_rows;
    for (int c = 0; c < 4; ++c) {
        logit_rows.push_back(model.vcr_logit(model.encode(seqs[c]).hidden));
    }
    Tensor<S> logits = reshape(stack_rows(logit_rows), {1, 4});
    Tensor<S> loss = cross_entropy(logits, {inst.correct}, {1});
    if (aux_weight > 0.0) {
        Rng rng(aux_seed);
        MaskedRois mr = mask_rois(seqs[inst.correct], aux_mask_p, rng);
        PretrainSample aux;
        aux.source = PretrainSample::Source::visual_linguistic;
        aux.input = seqs[inst.correct];
        aux.input.rois = mr.rois;
        aux.masked_roi_positions = std::move(mr.positions);
        aux.masked_roi_targets = std::move(mr.targets);
        aux.masked_image = mask_roi_pixels(aux.input.image, aux.input.rois);
        loss = add(loss, scalar_mul(masked_roi_cls_loss(model, aux), static_cast<S>(aux_weight)));
    }
    return loss;
}

template <typename S>
int vcr_inference(const VLBertModel<S>& model, const VcrInstance& inst, const Vocabulary& vocab,
                  VcrSubtask subtask) {
    NoGradGuard ng;
    std::array<std::vector<int>, 4> cand_ids;
    for (int c = 0; c < 4; ++c) cand_ids[c] = vocab.encode(inst.candidates[c]);
    auto seqs = pack_vcr(vocab.encode(inst.question), cand_ids, inst.rois, inst.image, vocab, subtask);
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
        const double s = static_cast<double>(model.vcr_logit(model.encode(seqs[c]).hidden).item());
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return best;
}

// Answer-pool classification on the [MASK] element's output feature.
template <typename S>
Tensor<S> vqa_forward_loss(const VLBertModel<S>& model, const VqaInstance& inst,
                           const Vocabulary& vocab) {
    if (inst.answer < 0 || inst.answer >= model.config().n_answers) {
        throw std::out_of_range("vqa_forward_loss: answer index outside the pool");
    }
    InputSequence seq = pack_vqa(vocab.encode(inst.question), inst.rois, inst.image, vocab);
    Tensor<S> logits =
        model.vqa_logits(model.encode(seq).hidden, vqa_mask_position(seq, vocab));
    return cross_entropy(logits, {inst.answer}, {1});
}

template <typename S>
int vqa_inference(const VLBertModel<S>& model, const VqaInstance& inst, const Vocabulary& vocab) {
    NoGradGuard ng;
    InputSequence seq = pack_vqa(vocab.encode(inst.question), inst.rois, inst.image, vocab);
    Tensor<S> logits = model.vqa_logits(model.encode(seq).hidden, vqa_mask_position(seq, vocab));
    int best = 0;
    for (int j = 1; j < logits.size(); ++j) {
        if (static_cast<double>(logits.at(j)) > static_cast<double>(logits.at(best))) best = j;
    }
    return best;
}

// Per-region binary logistic loss: positive at the target region, negative
// elsewhere, mean over regions.
template <typename S>
Tensor<S> ref_forward_loss(const VLBertModel<S>& model, const RefInstance& inst,
                           const Vocabulary& vocab) {
    if (inst.target < 0 || inst.target >= static_cast<int>(inst.rois.size())) {
        throw std::out_of_range("ref_forward_loss: target region index invalid");
    }
    InputSequence seq = pack_ref(vocab.encode(inst.query), inst.rois, inst.image, vocab);
    const auto positions = visual_positions(seq);
    Tensor<S> logits = model.ref_logits(model.encode(seq).hidden, positions);
    std::vector<S> labels(positions.size(), S(0));
    for (size_t i = 0; i < positions.size(); ++i) {
        if (seq.elements[positions[i]].roi == inst.target) labels[i] = S(1);
    }
    return binary_cross_entropy_with_logits(logits, labels);
}

// Argmax of per-region scores; ties broken toward the lowest index.
template <typename S>
int ref_inference(const VLBertModel<S>& model, const RefInstance& inst, const Vocabulary& vocab) {
    NoGradGuard ng;
    InputSequence seq = pack_ref(vocab.encode(inst.query), inst.rois, inst.image, vocab);
    const auto positions = visual_positions(seq);
    Tensor<S> logits = model.ref_logits(model.encode(seq).hidden, positions);
    int best = 0;
    for (int j = 1; j < logits.size(); ++j) {
        if (static_cast<double>(logits.at(j)) > static_cast<double>(logits.at(best))) best = j;
    }
    return seq.elements[positions[best]].roi;
}

// ----- accuracy evaluations ---------------------------------------------------

template <typename S>
double evaluate_vcr(const VLBertModel<S>& model, const std::vector<VcrInstance>& data,
                    const Vocabulary& vocab, VcrSubtask subtask) {
    if (data.empty()) throw std::invalid_argument("evaluate_vcr: empty dataset");
    int hits = 0;
    for (const auto& inst : data) {
        if (vcr_inference(model, inst, vocab, subtask) == inst.correct) ++hits;
    }
    return static_cast<double>(hits) / data.size();
}

template <typename S>
double evaluate_vqa(const VLBertModel<S>& model, const std::vector<VqaInstance>& data,
                    const Vocabulary& vocab) {
    if (data.empty()) throw std::invalid_argument("evaluate_vqa: empty dataset");
    int hits = 0;
    for (const auto& inst : data) {
        if (vqa_inference(model, inst, vocab) == inst.answer) ++hits;
    }
    return static_cast<double>(hits) / data.size();
}

template <typename S>
double evaluate_ref(const VLBertModel<S>& model, const std::vector<RefInstance>& data,
                    const Vocabulary& vocab) {
    if (data.empty()) throw std::invalid_argument("evaluate_ref: empty dataset");
    int hits = 0;
    for (const auto& inst : data) {
        if (ref_inference(model, inst, vocab) == inst.target) ++hits;
    }
    return static_cast<double>(hits) / data.size();
}

}  // namespace vlb
