#include "vlbert/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "vlbert/tensor.hpp"

namespace vlb {

namespace {

constexpr uint64_t kTagScene = 11;
constexpr uint64_t kTagCaption = 12;
constexpr uint64_t kTagRois = 13;
constexpr uint64_t kTagText = 14;
constexpr uint64_t kTagTask = 15;

SceneSpec corpus_scene(uint64_t seed, const WorldConfig& world, bool distinct_shapes) {
    return random_scene(seed, world.min_objects, world.max_objects, distinct_shapes,
                        world.image_size, world.image_size);
}

std::vector<std::string> count_words() { return {"one", "two", "three", "four", "five"}; }

}  // namespace

VlCorpus make_vl_corpus(int size, uint64_t seed, const WorldConfig& world) {
    if (size <= 0) throw std::invalid_argument("make_vl_corpus: size must be positive");
    VlCorpus corpus;
    corpus.items.reserve(size);
    for (int i = 0; i < size; ++i) {
        VlCorpusItem item;
        item.scene = corpus_scene(mix_seed(seed, kTagScene, i), world, false);
        item.image = render_scene(item.scene);
        item.caption = caption_for_scene(item.scene, mix_seed(seed, kTagCaption, i));
        item.rois = propose_rois(item.scene, mix_seed(seed, kTagRois, i), world.roi_max,
                                 world.roi_min, world.roi_score_threshold, world.roi_jitter,
                                 world.roi_distractors);
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

TextCorpus make_text_corpus(int size, uint64_t seed, const WorldConfig& world, int max_tokens) {
    if (size <= 0) throw std::invalid_argument("make_text_corpus: size must be positive");
    if (max_tokens < 3) throw std::invalid_argument("make_text_corpus: max_tokens too small");
    TextCorpus corpus;
    corpus.sentences.reserve(size);
    for (int i = 0; i < size; ++i) {
        Rng rng(mix_seed(seed, kTagText, i));
        SceneSpec a = corpus_scene(rng.integer(UINT64_C(1) << 62), world, false);
        std::vector<std::string> words = caption_for_scene(a, rng.integer(UINT64_C(1) << 62));
        if (rng.bernoulli(0.5)) {
            SceneSpec b = corpus_scene(rng.integer(UINT64_C(1) << 62), world, false);
            words.push_back("and");
            for (auto& w : caption_for_scene(b, rng.integer(UINT64_C(1) << 62))) words.push_back(w);
        }
        if (static_cast<int>(words.size()) > max_tokens) words.resize(max_tokens);
        corpus.sentences.push_back(std::move(words));
    }
    return corpus;
}

std::vector<std::string> project_word_inventory() {
    std::vector<std::string> inv = caption_word_inventory();
    for (const char* w : {"what", "color", "shape", "is", "the", "how", "many", "shapes", "thing"}) {
        inv.push_back(w);
    }
    for (const auto& w : count_words()) inv.push_back(w);
    return inv;
}

Vocabulary build_project_vocab() { return Vocabulary::build(project_word_inventory()); }

std::vector<std::string> answer_pool() {
    std::vector<std::string> pool;
    for (int i = 0; i < kNumColors; ++i) pool.push_back(color_name(static_cast<Color>(i)));
    for (int i = 0; i < kNumShapes; ++i) pool.push_back(shape_name(static_cast<Shape>(i)));
    for (const auto& w : count_words()) pool.push_back(w);
    return pool;
}

int answer_index(const std::string& word) {
    const auto pool = answer_pool();
    for (size_t i = 0; i < pool.size(); ++i) {
        if (pool[i] == word) return static_cast<int>(i);
    }
    throw std::out_of_range("answer_index: '" + word + "' is not in the answer pool");
}

namespace {

std::vector<RoI> ground_truth_rois(const SceneSpec& scene) {
    std::vector<RoI> rois;
    const double W = scene.width, H = scene.height;
    for (const auto& o : scene.objects) {
        RoI r;
        r.box = {o.x0 / W, o.y0 / H, o.x1 / W, o.y1 / H};
        r.score = 1.0;
        r.category = category_of(o.shape, o.color);
        rois.push_back(r);
    }
    return rois;
}

// A scene whose shapes are pairwise distinct, so "the {shape}" and
// "the {color} {shape}" each pick out exactly one object.
SceneSpec distinct_scene(uint64_t seed, const WorldConfig& world, int min_objects) {
    return random_scene(seed, std::max(min_objects, world.min_objects),
                        std::min(world.max_objects, kNumShapes), true, world.image_size,
                        world.image_size);
}

VcrInstance make_vcr_instance(uint64_t seed, const WorldConfig& world, bool rationale) {
    Rng rng(seed);
    VcrInstance inst;
    inst.scene = distinct_scene(rng.integer(UINT64_C(1) << 62), world, 1);
    inst.image = render_scene(inst.scene);
    inst.rois = ground_truth_rois(inst.scene);
    const auto& obj = inst.scene.objects[rng.integer(inst.scene.objects.size())];
    inst.question = {"what", "color", "is", "the", shape_name(obj.shape)};

    int order[kNumColors] = {0, 1, 2, 3};
    for (int i = kNumColors - 1; i > 0; --i) std::swap(order[i], order[rng.integer(i + 1)]);
    inst.correct = -1;
    for (int i = 0; i < kNumColors; ++i) {
        const Color c = static_cast<Color>(order[i]);
        if (rationale) {
            inst.candidates[i] = {"the", shape_name(obj.shape), "is", color_name(c)};
        } else {
            inst.candidates[i] = {color_name(c)};
        }
        if (c == obj.color) inst.correct = i;
    }
    if (rationale) {
        // rationale subtask: the question section carries question ‖ answer
        inst.question.push_back(color_name(obj.color));
    }
    return inst;
}

VqaInstance make_vqa_instance(uint64_t seed, const WorldConfig& world) {
    Rng rng(seed);
    VqaInstance inst;
    inst.scene = distinct_scene(rng.integer(UINT64_C(1) << 62), world, 1);
    inst.image = render_scene(inst.scene);
    inst.rois = ground_truth_rois(inst.scene);
    const int kind = static_cast<int>(rng.integer(2));
    if (kind == 0) {
        const auto& obj = inst.scene.objects[rng.integer(inst.scene.objects.size())];
        inst.question = {"what", "color", "is", "the", shape_name(obj.shape)};
        inst.answer = answer_index(color_name(obj.color));
    } else {
        inst.question = {"how", "many", "shapes"};
        inst.answer = answer_index(count_words()[inst.scene.objects.size() - 1]);
    }
    return inst;
}

RefInstance make_ref_instance(uint64_t seed, const WorldConfig& world) {
    Rng rng(seed);
    RefInstance inst;
    // always three objects so grounding chance stays at 1/3
    inst.scene = distinct_scene(rng.integer(UINT64_C(1) << 62), world, kNumShapes);
    inst.image = render_scene(inst.scene);
    inst.rois = ground_truth_rois(inst.scene);
    inst.target = static_cast<int>(rng.integer(inst.rois.size()));
    const auto& obj = inst.scene.objects[inst.target];
    inst.query = {"the", color_name(obj.color), shape_name(obj.shape)};
    int matches = 0;
    for (const auto& r : inst.rois) {
        if (r.category == category_of(obj.shape, obj.color)) ++matches;
    }
    if (matches != 1) {
        throw std::logic_error("make_ref_instance: query must match exactly one region");
    }
    return inst;
}

}  // namespace

ToyTasks make_toy_tasks(uint64_t seed, int train_size, int val_size, const WorldConfig& world) {
    if (train_size <= 0 || val_size <= 0) {
        throw std::invalid_argument("make_toy_tasks: sizes must be positive");
    }
    if (world.max_objects < kNumShapes) {
        throw std::invalid_argument("make_toy_tasks: grounding needs max_objects >= 3");
    }
    ToyTasks tasks;
    // split tag 0 = train, 1 = val: seed spaces are disjoint by construction
    auto task_seed = [&](uint64_t task_tag, int split, int i) {
        return mix_seed(mix_seed(seed, kTagTask, task_tag), split, i);
    };
    for (int split = 0; split < 2; ++split) {
        const int n = split == 0 ? train_size : val_size;
        for (int i = 0; i < n; ++i) {
            auto& qa = split == 0 ? tasks.vcr_qa.train : tasks.vcr_qa.val;
            auto& qar = split == 0 ? tasks.vcr_qar.train : tasks.vcr_qar.val;
            auto& vqa = split == 0 ? tasks.vqa.train : tasks.vqa.val;
            auto& ref = split == 0 ? tasks.ref.train : tasks.ref.val;
            qa.push_back(make_vcr_instance(task_seed(1, split, i), world, false));
            qar.push_back(make_vcr_instance(task_seed(2, split, i), world, true));
            vqa.push_back(make_vqa_instance(task_seed(3, split, i), world));
            ref.push_back(make_ref_instance(task_seed(4, split, i), world));
        }
    }
    return tasks;
}

namespace {

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

}  // namespace

std::string format_vqa(const VqaInstance& x) {
    std::ostringstream out;
    out << format_scene(x.scene) << '\t' << join(x.question) << '\t' << x.answer;
    return out.str();
}

std::string format_vcr(const VcrInstance& x) {
    std::ostringstream out;
    out << format_scene(x.scene) << '\t' << join(x.question);
    for (const auto& c : x.candidates) out << '\t' << join(c);
    out << '\t' << x.correct;
    return out.str();
}

std::string format_ref(const RefInstance& x) {
    std::ostringstream out;
    out << format_scene(x.scene) << '\t' << join(x.query) << '\t' << x.target;
    return out.str();
}

}  // namespace vlb
