// Downstream packings, their losses against reference math, inference
// tie-breaking, and the toy task generators.
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "vlbert/corpus.hpp"
#include "vlbert/tasks.hpp"

using namespace vlb;
using T = Tensor<double>;

namespace {
WorldConfig task_world() {
    WorldConfig w;
    w.image_size = 32;
    w.min_objects = 1;
    w.max_objects = 3;
    return w;
}

ModelConfig tiny_model_config(int vocab_size) {
    ModelConfig cfg;
    cfg.d = 16;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.d_ff = 32;
    cfg.d_app = 8;
    cfg.d_g = 8;
    cfg.vocab_size = vocab_size;
    cfg.max_positions = 32;
    cfg.pool_grid = 2;
    return cfg;
}

double reference_ce_row(const std::vector<double>& logits, int target) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    return mx + std::log(lse) - logits[target];
}

double reference_bce(const std::vector<double>& z, const std::vector<double>& t) {
    double total = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        total += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::fabs(z[i])));
    }
    return total / z.size();
}

void zero_param(VLBertModel<double>& model, const std::string& name) {
    auto& p = model.params().at(name);
    std::fill(p.values().begin(), p.values().end(), 0.0);
}
}  // namespace

TEST_CASE("vcr packing emits four question-answer sequences over one image") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(3, 2, 1, task_world());
    const VcrInstance& inst = tasks.vcr_qa.train[0];

    std::array<std::vector<int>, 4> cand_ids;
    for (int c = 0; c < 4; ++c) cand_ids[c] = vocab.encode(inst.candidates[c]);
    const auto seqs = pack_vcr(vocab.encode(inst.question), cand_ids, inst.rois, inst.image, vocab,
                               VcrSubtask::qa);
    for (int c = 0; c < 4; ++c) {
        CHECK_NOTHROW(validate_sequence(seqs[c], vocab));
        // Question section identical across candidates, candidate section differs.
        const int qlen = static_cast<int>(inst.question.size());
        for (int i = 1; i <= qlen; ++i) {
            CHECK(seqs[c].elements[i].token_id == seqs[0].elements[i].token_id);
            CHECK(seqs[c].elements[i].segment == SegmentTag::A);
        }
        const int cand_start = qlen + 2;  // after [CLS] question [SEP]
        CHECK(seqs[c].elements[cand_start].kind == ElementKind::word);
        CHECK(seqs[c].elements[cand_start].segment == SegmentTag::B);
        CHECK(seqs[c].elements[cand_start].token_id == cand_ids[c][0]);
        CHECK(visual_positions(seqs[c]).size() == inst.rois.size());
    }
    // The layout is subtask-independent; rationales differ only in token content.
    const auto qar = pack_vcr(vocab.encode(inst.question), cand_ids, inst.rois, inst.image, vocab,
                              VcrSubtask::qar);
    for (int c = 0; c < 4; ++c) CHECK(qar[c].length() == seqs[c].length());

    CHECK_THROWS_AS((void)pack_vcr({}, cand_ids, inst.rois, inst.image, vocab, VcrSubtask::qa),
                    std::invalid_argument);
    std::array<std::vector<int>, 4> with_empty = cand_ids;
    with_empty[2].clear();
    CHECK_THROWS_AS((void)pack_vcr(vocab.encode(inst.question), with_empty, inst.rois, inst.image,
                                   vocab, VcrSubtask::qa),
                    std::invalid_argument);
}

TEST_CASE("vqa packing plants exactly one [MASK] in the answer section") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(4, 2, 1, task_world());
    const VqaInstance& inst = tasks.vqa.train[0];

    const InputSequence seq = pack_vqa(vocab.encode(inst.question), inst.rois, inst.image, vocab);
    CHECK_NOTHROW(validate_sequence(seq, vocab));
    const int pos = vqa_mask_position(seq, vocab);
    CHECK(pos == static_cast<int>(inst.question.size()) + 2);
    CHECK(seq.elements[pos].token_id == vocab.mask());
    CHECK(seq.elements[pos].segment == SegmentTag::B);
    int mask_count = 0;
    for (const auto& e : seq.elements) mask_count += e.token_id == vocab.mask() ? 1 : 0;
    CHECK(mask_count == 1);
    // The element after the [MASK] closes the answer sentence.
    CHECK(seq.elements[pos + 1].kind == ElementKind::separator);

    // A query-only sequence has no answer-section [MASK] to find.
    const InputSequence ref_seq = pack_ref(vocab.encode({"the", "red", "square"}),
                                           inst.rois, inst.image, vocab);
    CHECK_THROWS_AS((void)vqa_mask_position(ref_seq, vocab), std::invalid_argument);
    CHECK_THROWS_AS((void)pack_vqa({}, inst.rois, inst.image, vocab), std::invalid_argument);
}

TEST_CASE("ref packing exposes one visual element per candidate region") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(5, 2, 1, task_world());
    const RefInstance& inst = tasks.ref.train[0];

    const InputSequence seq = pack_ref(vocab.encode(inst.query), inst.rois, inst.image, vocab);
    CHECK_NOTHROW(validate_sequence(seq, vocab));
    const auto positions = visual_positions(seq);
    REQUIRE(positions.size() == inst.rois.size());
    for (size_t i = 0; i < positions.size(); ++i) {
        CHECK(seq.elements[positions[i]].roi == static_cast<int>(i));
    }
    CHECK_THROWS_AS((void)pack_ref({}, inst.rois, inst.image, vocab), std::invalid_argument);
}

TEST_CASE("vcr loss is the 4-way softmax cross-entropy plus a weighted auxiliary") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(6, 2, 1, task_world());
    const VcrInstance& inst = tasks.vcr_qa.train[0];
    VLBertModel<double> model(tiny_model_config(vocab.size()), 8);

    const double base = vcr_forward_loss(model, inst, vocab, VcrSubtask::qa, 0.0, 123, 0.5).item();
    {
        NoGradGuard ng;
        std::array<std::vector<int>, 4> cand_ids;
        for (int c = 0; c < 4; ++c) cand_ids[c] = vocab.encode(inst.candidates[c]);
        const auto seqs = pack_vcr(vocab.encode(inst.question), cand_ids, inst.rois, inst.image,
                                   vocab, VcrSubtask::qa);
        std::vector<double> logits;
        for (int c = 0; c < 4; ++c) {
            logits.push_back(model.vcr_logit(model.encode(seqs[c]).hidden).item());
        }
        CHECK(base == doctest::Approx(reference_ce_row(logits, inst.correct)).epsilon(1e-9));
    }

    // The auxiliary term scales linearly in its weight and only adds loss.
    const double with1 = vcr_forward_loss(model, inst, vocab, VcrSubtask::qa, 1.0, 123, 0.5).item();
    const double with2 = vcr_forward_loss(model, inst, vocab, VcrSubtask::qa, 2.0, 123, 0.5).item();
    CHECK(with1 > base);
    CHECK(with2 - base == doctest::Approx(2.0 * (with1 - base)).epsilon(1e-9));

    // Rationale subtask runs on the same machinery.
    const double qar = vcr_forward_loss(model, tasks.vcr_qar.train[0], vocab, VcrSubtask::qar,
                                        1.0, 9, 0.5).item();
    CHECK(std::isfinite(qar));
}

TEST_CASE("vqa loss is answer-pool cross-entropy at the [MASK] feature") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(7, 2, 1, task_world());
    const VqaInstance& inst = tasks.vqa.train[0];
    VLBertModel<double> model(tiny_model_config(vocab.size()), 10);

    const double loss = vqa_forward_loss(model, inst, vocab).item();
    {
        NoGradGuard ng;
        const InputSequence seq = pack_vqa(vocab.encode(inst.question), inst.rois, inst.image, vocab);
        const T row = model.vqa_logits(model.encode(seq).hidden, vqa_mask_position(seq, vocab));
        REQUIRE(row.extent(1) == static_cast<int>(answer_pool().size()));
        std::vector<double> logits(row.values().begin(), row.values().end());
        CHECK(loss == doctest::Approx(reference_ce_row(logits, inst.answer)).epsilon(1e-9));
    }

    VqaInstance bad = inst;
    bad.answer = 99;
    CHECK_THROWS_AS((void)vqa_forward_loss(model, bad, vocab), std::out_of_range);
}

TEST_CASE("ref loss is a per-region binary logistic objective") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(8, 2, 1, task_world());
    const RefInstance& inst = tasks.ref.train[0];
    VLBertModel<double> model(tiny_model_config(vocab.size()), 12);

    const double loss = ref_forward_loss(model, inst, vocab).item();
    {
        NoGradGuard ng;
        const InputSequence seq = pack_ref(vocab.encode(inst.query), inst.rois, inst.image, vocab);
        const auto positions = visual_positions(seq);
        const T z = model.ref_logits(model.encode(seq).hidden, positions);
        std::vector<double> logits(z.values().begin(), z.values().end());
        std::vector<double> labels(logits.size(), 0.0);
        labels[inst.target] = 1.0;
        CHECK(loss == doctest::Approx(reference_bce(logits, labels)).epsilon(1e-9));
    }

    RefInstance bad = inst;
    bad.target = static_cast<int>(bad.rois.size());
    CHECK_THROWS_AS((void)ref_forward_loss(model, bad, vocab), std::out_of_range);
}

TEST_CASE("inference breaks score ties toward the lowest index") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(9, 2, 1, task_world());
    VLBertModel<double> model(tiny_model_config(vocab.size()), 14);
    // Zeroed heads make every candidate score identical.
    zero_param(model, "head.vcr.w");
    zero_param(model, "head.vcr.b");
    zero_param(model, "head.vqa.w");
    zero_param(model, "head.vqa.b");
    zero_param(model, "head.ref.w");
    zero_param(model, "head.ref.b");

    CHECK(vcr_inference(model, tasks.vcr_qa.train[0], vocab, VcrSubtask::qa) == 0);
    CHECK(vqa_inference(model, tasks.vqa.train[0], vocab) == 0);
    CHECK(ref_inference(model, tasks.ref.train[0], vocab) == 0);
}

TEST_CASE("evaluations average exact-match hits") {
    const Vocabulary vocab = build_project_vocab();
    const ToyTasks tasks = make_toy_tasks(10, 3, 2, task_world());
    VLBertModel<double> model(tiny_model_config(vocab.size()), 15);
    const double acc = evaluate_vqa(model, tasks.vqa.val, vocab);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    // Hand-count against the single-instance inference calls.
    int hits = 0;
    for (const auto& inst : tasks.vqa.val) {
        if (vqa_inference(model, inst, vocab) == inst.answer) ++hits;
    }
    CHECK(acc == doctest::Approx(hits / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)evaluate_vqa(model, {}, vocab), std::invalid_argument);
    CHECK_THROWS_AS((void)evaluate_ref(model, {}, vocab), std::invalid_argument);
    CHECK_THROWS_AS((void)evaluate_vcr(model, {}, vocab, VcrSubtask::qa), std::invalid_argument);
}

TEST_CASE("toy task instances are answerable by construction") {
    const ToyTasks tasks = make_toy_tasks(11, 20, 10, task_world());
    REQUIRE(tasks.vcr_qa.train.size() == 20);
    REQUIRE(tasks.vcr_qa.val.size() == 10);

    const auto pool = answer_pool();
    REQUIRE(pool.size() == 12);  // 4 colours + 3 shapes + 5 count words

    for (const auto& inst : tasks.vcr_qa.train) {
        REQUIRE(inst.correct >= 0);
        REQUIRE(inst.correct < 4);
        // The named shape exists and the correct candidate names its colour.
        const Shape asked = shape_from_name(inst.question.back());
        bool found = false;
        for (const auto& o : inst.scene.objects) {
            if (o.shape == asked) {
                CHECK(inst.candidates[inst.correct] ==
                      std::vector<std::string>{color_name(o.color)});
                found = true;
            }
        }
        CHECK(found);
        // Exactly four distinct single-colour candidates.
        std::set<std::string> cand_set;
        for (const auto& c : inst.candidates) {
            REQUIRE(c.size() == 1);
            cand_set.insert(c[0]);
        }
        CHECK(cand_set.size() == 4);
    }

    for (const auto& inst : tasks.vcr_qar.train) {
        // Rationale questions carry the answer colour appended to the base question.
        CHECK(inst.question.size() == 6);
        CHECK(inst.candidates[inst.correct].back() == inst.question.back());
        for (const auto& c : inst.candidates) CHECK(c.size() == 4);
    }

    for (const auto& inst : tasks.vqa.train) {
        if (inst.question.front() == "what") {
            const Shape asked = shape_from_name(inst.question.back());
            for (const auto& o : inst.scene.objects) {
                if (o.shape == asked) CHECK(pool[inst.answer] == color_name(o.color));
            }
        } else {
            CHECK(inst.question == std::vector<std::string>{"how", "many", "shapes"});
            CHECK(inst.answer == answer_index(pool[6 + inst.scene.objects.size()]));
        }
    }

    for (const auto& inst : tasks.ref.train) {
        REQUIRE(inst.scene.objects.size() == 3);  // fixed 1/3 grounding chance
        std::set<Shape> shapes;
        for (const auto& o : inst.scene.objects) shapes.insert(o.shape);
        CHECK(shapes.size() == 3);
        REQUIRE(inst.rois.size() == 3);
        // The query names exactly the target region's category.
        const int cat = category_of(shape_from_name(inst.query[2]),
                                    color_from_name(inst.query[1]));
        int matches = 0;
        for (size_t i = 0; i < inst.rois.size(); ++i) {
            if (inst.rois[i].category == cat) {
                CHECK(static_cast<int>(i) == inst.target);
                ++matches;
            }
        }
        CHECK(matches == 1);
    }

    CHECK_THROWS_AS((void)make_toy_tasks(1, 0, 5, task_world()), std::invalid_argument);
    CHECK_THROWS_AS((void)make_toy_tasks(1, 5, 0, task_world()), std::invalid_argument);
    WorldConfig narrow = task_world();
    narrow.max_objects = 2;
    CHECK_THROWS_AS((void)make_toy_tasks(1, 5, 5, narrow), std::invalid_argument);
}

TEST_CASE("train and val splits draw from disjoint scene seeds") {
    const ToyTasks tasks = make_toy_tasks(12, 30, 15, task_world());
    std::set<std::string> train_scenes, val_scenes;
    for (const auto& i : tasks.vqa.train) train_scenes.insert(format_scene(i.scene));
    for (const auto& i : tasks.vqa.val) val_scenes.insert(format_scene(i.scene));
    for (const auto& s : val_scenes) CHECK(train_scenes.count(s) == 0);

    // Regeneration with the same seed reproduces both splits exactly.
    const ToyTasks again = make_toy_tasks(12, 30, 15, task_world());
    for (size_t i = 0; i < tasks.vqa.train.size(); ++i) {
        CHECK(format_vqa(tasks.vqa.train[i]) == format_vqa(again.vqa.train[i]));
    }
    for (size_t i = 0; i < tasks.ref.val.size(); ++i) {
        CHECK(format_ref(tasks.ref.val[i]) == format_ref(again.ref.val[i]));
    }
    for (size_t i = 0; i < tasks.vcr_qa.val.size(); ++i) {
        CHECK(format_vcr(tasks.vcr_qa.val[i]) == format_vcr(again.vcr_qa.val[i]));
    }
}

TEST_CASE("record lines carry the scene, the words, and the label") {
    const ToyTasks tasks = make_toy_tasks(13, 2, 1, task_world());

    const VqaInstance& q = tasks.vqa.train[0];
    const std::string vqa_line = format_vqa(q);
    std::istringstream in(vqa_line);
    std::string scene_part, words_part, label_part;
    std::getline(in, scene_part, '\t');
    std::getline(in, words_part, '\t');
    std::getline(in, label_part, '\t');
    CHECK(scene_part == format_scene(q.scene));
    CHECK(label_part == std::to_string(q.answer));
    const auto parsed = split_whitespace(words_part);
    CHECK(parsed == q.question);

    const VcrInstance& v = tasks.vcr_qa.train[0];
    const std::string vcr_line = format_vcr(v);
    std::vector<std::string> fields;
    std::istringstream vin(vcr_line);
    std::string field;
    while (std::getline(vin, field, '\t')) fields.push_back(field);
    REQUIRE(fields.size() == 7);  // scene, question, 4 candidates, correct
    CHECK(fields[0] == format_scene(v.scene));
    CHECK(fields.back() == std::to_string(v.correct));
    for (int c = 0; c < 4; ++c) {
        CHECK(split_whitespace(fields[2 + c]) == v.candidates[c]);
    }

    const RefInstance& r = tasks.ref.train[0];
    const std::string ref_line = format_ref(r);
    std::istringstream rin(ref_line);
    std::getline(rin, scene_part, '\t');
    std::getline(rin, words_part, '\t');
    std::getline(rin, label_part, '\t');
    CHECK(scene_part == format_scene(r.scene));
    CHECK(split_whitespace(words_part) == r.query);
    CHECK(label_part == std::to_string(r.target));
}
