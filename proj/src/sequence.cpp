#include "vlbert/sequence.hpp"

#include <stdexcept>

namespace vlb {

namespace {

void push_sentence(InputSequence& seq, const std::vector<int>& tokens, SegmentTag tag, int& pos,
                   const Vocabulary& vocab) {
    for (int id : tokens) {
        if (id < 0 || id >= vocab.size()) {
            throw std::invalid_argument("assemble_input: token id " + std::to_string(id) +
                                        " outside vocabulary");
        }
        seq.elements.push_back({ElementKind::word, id, tag, pos++, -1});
    }
    // the separator closing a sentence carries that sentence's segment
    seq.elements.push_back({ElementKind::separator, vocab.sep(), tag, pos++, -1});
}

}  // namespace

InputSequence assemble_input(InputFormat format, const std::vector<std::vector<int>>& sentences,
                             const std::vector<RoI>& rois, const ImageRaster* image,
                             const Vocabulary& vocab) {
    const bool wants_image = format != InputFormat::text_only;
    if (wants_image && image == nullptr) {
        throw std::invalid_argument("assemble_input: this format requires an image");
    }
    if (!wants_image && (image != nullptr || !rois.empty())) {
        throw std::invalid_argument("assemble_input: text-only input cannot carry an image or RoIs");
    }
    const size_t want_sentences = format == InputFormat::question_answer_image ? 2 : 1;
    if (sentences.size() != want_sentences) {
        throw std::invalid_argument("assemble_input: format expects " +
                                    std::to_string(want_sentences) + " sentence(s), got " +
                                    std::to_string(sentences.size()));
    }
    if (wants_image && rois.empty()) {
        throw std::invalid_argument("assemble_input: image input requires at least one RoI");
    }

    InputSequence seq;
    int pos = 0;
    seq.elements.push_back({ElementKind::classification, vocab.cls(), SegmentTag::A, pos++, -1});
    push_sentence(seq, sentences[0], SegmentTag::A, pos, vocab);
    if (format == InputFormat::question_answer_image) {
        push_sentence(seq, sentences[1], SegmentTag::B, pos, vocab);
    }

    if (wants_image) {
        seq.has_image = true;
        seq.image = *image;
        seq.rois = rois;
        for (const auto& r : seq.rois) validate_roi(r);
        const int visual_pos = pos++;  // shared by every visual element
        for (size_t i = 0; i < rois.size(); ++i) {
            seq.elements.push_back(
                {ElementKind::visual, vocab.img(), SegmentTag::C, visual_pos, static_cast<int>(i)});
        }
        seq.elements.push_back({ElementKind::end, vocab.end(), SegmentTag::C, pos++, -1});
    } else {
        seq.elements.push_back({ElementKind::end, vocab.end(), SegmentTag::A, pos++, -1});
    }

    validate_sequence(seq, vocab);
    return seq;
}

void validate_sequence(const InputSequence& seq, const Vocabulary& vocab) {
    const auto& el = seq.elements;
    if (el.size() < 3) throw std::invalid_argument("InputSequence: fewer than 3 elements");
    if (el.front().kind != ElementKind::classification || el.front().token_id != vocab.cls() ||
        el.front().position != 0) {
        throw std::invalid_argument("InputSequence: must start with [CLS] at position 0");
    }
    if (el.back().kind != ElementKind::end || el.back().token_id != vocab.end()) {
        throw std::invalid_argument("InputSequence: must end with [END]");
    }

    int visual_pos = -1;
    int expected_pos = 0;
    bool seen_visual = false;
    for (size_t i = 0; i < el.size(); ++i) {
        const auto& e = el[i];
        if (e.kind == ElementKind::visual) {
            if (!seq.has_image) throw std::invalid_argument("InputSequence: visual element without image");
            if (e.token_id != vocab.img()) {
                throw std::invalid_argument("InputSequence: visual element must carry [IMG]");
            }
            if (e.segment != SegmentTag::C) {
                throw std::invalid_argument("InputSequence: visual element must be segment C");
            }
            if (e.roi < 0 || e.roi >= static_cast<int>(seq.rois.size())) {
                throw std::invalid_argument("InputSequence: visual element roi reference " +
                                            std::to_string(e.roi) + " out of range");
            }
            if (!seen_visual) {
                seen_visual = true;
                visual_pos = e.position;
                if (visual_pos != expected_pos) {
                    throw std::invalid_argument("InputSequence: visual block position out of order");
                }
                ++expected_pos;
            } else if (e.position != visual_pos) {
                throw std::invalid_argument("InputSequence: visual elements must share one position");
            }
            if (i > 0 && el[i - 1].kind != ElementKind::separator &&
                el[i - 1].kind != ElementKind::visual) {
                throw std::invalid_argument(
                    "InputSequence: visual block must follow a [SEP] separator");
            }
        } else {
            if (e.roi != -1) {
                throw std::invalid_argument("InputSequence: non-visual element carries a roi reference");
            }
            if (seen_visual && e.kind != ElementKind::end) {
                throw std::invalid_argument("InputSequence: linguistic element after visual block");
            }
            if (e.position != expected_pos) {
                throw std::invalid_argument("InputSequence: position " + std::to_string(e.position) +
                                            " at element " + std::to_string(i) + ", expected " +
                                            std::to_string(expected_pos));
            }
            ++expected_pos;
            if (e.kind == ElementKind::word && !vocab.is_word(e.token_id) &&
                e.token_id != vocab.mask()) {
                throw std::invalid_argument("InputSequence: word element carries a special token");
            }
            if (e.kind == ElementKind::separator && e.token_id != vocab.sep()) {
                throw std::invalid_argument("InputSequence: separator must carry [SEP]");
            }
        }
    }
    if (seq.has_image && !seen_visual) {
        throw std::invalid_argument("InputSequence: image present but no visual elements");
    }
    if (!seq.has_image && seen_visual) {
        throw std::invalid_argument("InputSequence: visual elements without image");
    }
    // a separator must close the linguistic block before the visual block
    if (seen_visual) {
        size_t first_visual = 0;
        while (el[first_visual].kind != ElementKind::visual) ++first_visual;
        if (el[first_visual - 1].kind != ElementKind::separator) {
            throw std::invalid_argument("InputSequence: missing [SEP] before visual block");
        }
    }
}

std::vector<int> word_positions(const InputSequence& seq) {
    std::vector<int> out;
    for (size_t i = 0; i < seq.elements.size(); ++i) {
        if (seq.elements[i].kind == ElementKind::word) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> visual_positions(const InputSequence& seq) {
    std::vector<int> out;
    for (size_t i = 0; i < seq.elements.size(); ++i) {
        if (seq.elements[i].kind == ElementKind::visual) out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace vlb
