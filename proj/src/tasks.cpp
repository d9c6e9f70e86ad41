#include "vlbert/tasks.hpp"

namespace vlb {

std::array<InputSequence, 4> pack_vcr(const std::vector<int>& question,
                                      const std::array<std::vector<int>, 4>& candidates,
                                      const std::vector<RoI>& rois, const ImageRaster& image,
                                      const Vocabulary& vocab, VcrSubtask subtask) {
    (void)subtask;  // both subtasks share the layout; callers pre-concatenate Q‖A for rationales
    if (question.empty()) throw std::invalid_argument("pack_vcr: empty question");
    for (const auto& c : candidates) {
        if (c.empty()) throw std::invalid_argument("pack_vcr: empty candidate");
    }
    std::array<InputSequence, 4> out;
    for (int i = 0; i < 4; ++i) {
        out[i] = assemble_input(InputFormat::question_answer_image, {question, candidates[i]}, rois,
                                &image, vocab);
    }
    return out;
}

InputSequence pack_vqa(const std::vector<int>& question, const std::vector<RoI>& rois,
                       const ImageRaster& image, const Vocabulary& vocab) {
    if (question.empty()) throw std::invalid_argument("pack_vqa: empty question");
    return assemble_input(InputFormat::question_answer_image, {question, {vocab.mask()}}, rois,
                          &image, vocab);
}

int vqa_mask_position(const InputSequence& seq, const Vocabulary& vocab) {
    for (int i = 0; i < seq.length(); ++i) {
        const auto& e = seq.elements[i];
        if (e.kind == ElementKind::word && e.segment == SegmentTag::B &&
            e.token_id == vocab.mask()) {
            return i;
        }
    }
    throw std::invalid_argument("vqa_mask_position: no [MASK] in the answer section");
}

InputSequence pack_ref(const std::vector<int>& query, const std::vector<RoI>& rois,
                       const ImageRaster& image, const Vocabulary& vocab) {
    if (query.empty()) throw std::invalid_argument("pack_ref: empty query");
    return assemble_input(InputFormat::query_image, {query}, rois, &image, vocab);
}

}  // namespace vlb
