#pragma once

#include "vlbert/sequence.hpp"

namespace vlb {

// World generation knobs shared by the pretraining corpus and task builders.
struct WorldConfig {
    int image_size = 32;
    int min_objects = 1;
    int max_objects = 3;
    int roi_max = 100;
    int roi_min = 10;
    double roi_score_threshold = 0.5;
    double roi_jitter = 0.1;
    int roi_distractors = 1;
};

// One paired caption+image sample. RoIs come from the proposer; the raster is
// pre-rendered so repeated sampling is cheap.
struct VlCorpusItem {
    SceneSpec scene;
    ImageRaster image;
    std::vector<std::string> caption;
    std::vector<RoI> rois;  // proposed regions, without the whole-image region
};

struct VlCorpus {
    std::vector<VlCorpusItem> items;
};

struct TextCorpus {
    std::vector<std::vector<std::string>> sentences;
};

// Pretraining scenes draw shapes independently (repeats allowed) so the
// visible regions carry no information about a hidden object's category.
VlCorpus make_vl_corpus(int size, uint64_t seed, const WorldConfig& world);

// Image-free sentences built from the same caption grammar, occasionally
// concatenated pairs, capped at max_tokens.
TextCorpus make_text_corpus(int size, uint64_t seed, const WorldConfig& world, int max_tokens);

// Every word any generator can emit, for vocabulary closure.
std::vector<std::string> project_word_inventory();
Vocabulary build_project_vocab();

// The shared answer pool: 4 colors, 3 shapes, five count words.
std::vector<std::string> answer_pool();
int answer_index(const std::string& word);

// ----- downstream toy tasks ---------------------------------------------

struct VcrInstance {
    SceneSpec scene;
    ImageRaster image;
    std::vector<RoI> rois;
    std::vector<std::string> question;  // for the rationale subtask: question ‖ answer
    std::array<std::vector<std::string>, 4> candidates;
    int correct;  // index into candidates
};

struct VqaInstance {
    SceneSpec scene;
    ImageRaster image;
    std::vector<RoI> rois;
    std::vector<std::string> question;
    int answer;  // index into answer_pool()
};

struct RefInstance {
    SceneSpec scene;
    ImageRaster image;
    std::vector<RoI> rois;  // ground-truth object boxes, left-to-right
    std::vector<std::string> query;  // appearance words only
    int target;  // index into rois
};

template <typename T>
struct Split {
    std::vector<T> train;
    std::vector<T> val;
};

struct ToyTasks {
    Split<VcrInstance> vcr_qa;
    Split<VcrInstance> vcr_qar;
    Split<VqaInstance> vqa;
    Split<RefInstance> ref;
};

// Train/val scene seeds are disjoint by construction. Every REF query is
// checked at generation to match exactly one RoI.
ToyTasks make_toy_tasks(uint64_t seed, int train_size, int val_size, const WorldConfig& world);

// Line-delimited record serialization (documented in the README).
std::string format_vqa(const VqaInstance& x);
std::string format_vcr(const VcrInstance& x);
std::string format_ref(const RefInstance& x);

}  // namespace vlb
