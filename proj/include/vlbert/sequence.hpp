#pragma once

#include <optional>

#include "vlbert/vocab.hpp"
#include "vlbert/world.hpp"

namespace vlb {

enum class ElementKind { classification, word, separator, visual, end };

enum class SegmentTag { A = 0, B = 1, C = 2 };

struct InputElement {
    ElementKind kind;
    int token_id;
    SegmentTag segment;
    int position;
    int roi = -1;  // index into InputSequence::rois; -1 for non-visual elements
};

// Canonical packed input: [CLS] sentence(s) [SEP]... visual block [END].
// Every visual element shares one sequence-position index.
struct InputSequence {
    std::vector<InputElement> elements;
    bool has_image = false;
    ImageRaster image;                // clean raster (empty when has_image is false)
    std::vector<RoI> rois;            // referenced by visual elements
    RoI whole_image = full_image_roi();  // feature source for non-visual elements

    int length() const { return static_cast<int>(elements.size()); }
};

enum class InputFormat { caption_image, question_answer_image, query_image, text_only };

// Lays out sentences and RoIs into the canonical element order with segment
// tags and position indices assigned. `sentences` carries token ids:
// one sentence for caption/query/text formats, two (question, answer) for
// question_answer_image. Pass a null image only with text_only.
InputSequence assemble_input(InputFormat format, const std::vector<std::vector<int>>& sentences,
                             const std::vector<RoI>& rois, const ImageRaster* image,
                             const Vocabulary& vocab);

// Checks every structural invariant; throws with a diagnostic on violation.
void validate_sequence(const InputSequence& seq, const Vocabulary& vocab);

// Element indices of each kind, in order.
std::vector<int> word_positions(const InputSequence& seq);
std::vector<int> visual_positions(const InputSequence& seq);

}  // namespace vlb
