#pragma once

#include <cstdio>
#include <functional>
#include <string>

#include "vlbert/checkpoint.hpp"
#include "vlbert/config.hpp"
#include "vlbert/gradcheck.hpp"
#include "vlbert/pretrain.hpp"
#include "vlbert/tasks.hpp"

namespace vlb {

// ----- file helpers (runner.cpp) ---------------------------------------------

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Fixed scientific formatting so metrics files are byte-stable across runs.
std::string format_metric(double v);

// ----- pretraining ------------------------------------------------------------

template <typename S>
struct PretrainRun {
    Vocabulary vocab;
    VLBertModel<S> model;
    OptimizerState<S> opt;
    std::string metrics;  // TSV, header + one row per executed step
    RawCheckpoint final_checkpoint;
};

using CheckpointSink = std::function<void(int64_t step, const RawCheckpoint&)>;

inline Vocabulary vocab_for(const RunConfig& cfg) {
    if (cfg.vocab_path.empty()) return build_project_vocab();
    return Vocabulary::deserialize(read_text_file(cfg.vocab_path));
}

// Deterministic seed tags; every stream derived from cfg.seed gets its own tag
// so adding a consumer never shifts an existing one.
namespace seed_tag {
constexpr uint64_t model = 0xA11;
constexpr uint64_t vl_corpus = 0xC0;
constexpr uint64_t text_corpus = 0xC1;
constexpr uint64_t batch = 0xBA;
constexpr uint64_t tasks = 0x7A;
constexpr uint64_t pick = 0x71;
constexpr uint64_t aux = 0x72;
}  // namespace seed_tag

// Runs the pretraining loop: warmup+linear-decay schedule, one Adam step per
// iteration, metrics row per step. `init` resumes (parameters, moments, and
// step counter); `periodic` receives intermediate checkpoints.
template <typename S>
PretrainRun<S> run_pretrain(const RunConfig& cfg, const RawCheckpoint* init = nullptr,
                            const CheckpointSink& periodic = {}) {
    cfg.validate();
    const TaskFlags flags = cfg.to_task_flags();
    if (!flags.any()) {
        throw std::invalid_argument("pretrain: every task flag is disabled; nothing to train");
    }
    Vocabulary vocab = vocab_for(cfg);
    const ModelConfig mc = cfg.to_model_config(vocab.size());
    const WorldConfig world = cfg.to_world_config();
    const uint64_t fingerprint = config_fingerprint(cfg);

    PretrainRun<S> run{std::move(vocab), VLBertModel<S>(mc, mix_seed(cfg.seed, seed_tag::model)),
                       OptimizerState<S>{}, std::string(), RawCheckpoint{}};
    run.model.set_detector_trainable(cfg.tune_detector);

    const VlCorpus vl = cfg.ratio_vl > 0
                            ? make_vl_corpus(cfg.corpus_vl_size,
                                             mix_seed(cfg.seed, seed_tag::vl_corpus), world)
                            : VlCorpus{};
    const TextCorpus text =
        cfg.ratio_text > 0 ? make_text_corpus(cfg.corpus_text_size,
                                              mix_seed(cfg.seed, seed_tag::text_corpus), world,
                                              cfg.text_max_tokens)
                           : TextCorpus{};
    const SamplerOptions sampler = cfg.to_sampler_options();

    int64_t start_step = 0;
    if (init) {
        from_raw(*init, run.model.params(), run.opt);
        start_step = static_cast<int64_t>(init->step);
        if (init->fingerprint != fingerprint) {
            std::fprintf(stderr,
                         "warning: resuming from a checkpoint with config fingerprint %016llx, "
                         "current config is %016llx; training continues under the current config\n",
                         static_cast<unsigned long long>(init->fingerprint),
                         static_cast<unsigned long long>(fingerprint));
        }
    }

    run.metrics = "step\tlr\tloss_total\tloss_mlm_visual\tloss_roi_cls\tloss_text_mlm\tloss_nsp\n";
    const int64_t total = cfg.pretrain_steps;
    for (int64_t step = start_step + 1; step <= total; ++step) {
        // schedule over [1, total] with the zero only past the end, so every
        // executed step has a positive rate
        const double lr = lr_schedule(step, cfg.warmup_steps, total + 1, cfg.lr);
        AdamConfig adam = cfg.to_adam_config();
        adam.lr = lr;
        const MiniBatch batch =
            sample_minibatch(vl, text, cfg.batch_size,
                             mix_seed(cfg.seed, seed_tag::batch, static_cast<uint64_t>(step)),
                             run.vocab, sampler);
        const StepMetrics m = pretrain_step(run.model, batch, run.opt, flags, adam);
        run.metrics += std::to_string(step) + '\t' + format_metric(lr) + '\t' +
                       format_metric(m.total) + '\t' + format_metric(m.mlm_visual) + '\t' +
                       format_metric(m.roi_cls) + '\t' + format_metric(m.text_mlm) + '\t' +
                       format_metric(m.nsp) + '\n';
        if (periodic && step % cfg.checkpoint_every == 0 && step != total) {
            periodic(step, to_raw(run.model.params(), run.opt, static_cast<uint64_t>(step),
                                  fingerprint));
        }
    }
    run.final_checkpoint =
        to_raw(run.model.params(), run.opt, static_cast<uint64_t>(total), fingerprint);
    return run;
}

// ----- fine-tuning --------------------------------------------------------------

template <typename S>
struct FinetuneRun {
    Vocabulary vocab;
    VLBertModel<S> model;
    double val_accuracy = 0.0;
    std::string report;  // TSV: task, split, accuracy, steps, seed
    RawCheckpoint final_checkpoint;
};

inline void check_task_name(const std::string& task) {
    if (task != "vcr_qa" && task != "vcr_qar" && task != "vqa" && task != "ref") {
        throw std::invalid_argument("task must be one of vcr_qa, vcr_qar, vqa, ref (got '" + task +
                                    "')");
    }
}

// Fine-tunes every parameter end-to-end on one toy task, from `init` when
// given or from fresh initialization otherwise. VCR uses SGD with momentum;
// VQA and grounding use Adam.
template <typename S>
FinetuneRun<S> run_finetune(const RunConfig& cfg, const std::string& task,
                            const RawCheckpoint* init = nullptr) {
    cfg.validate();
    check_task_name(task);
    Vocabulary vocab = vocab_for(cfg);
    const ModelConfig mc = cfg.to_model_config(vocab.size());
    const ToyTasks tasks = make_toy_tasks(mix_seed(cfg.seed, seed_tag::tasks), cfg.train_size,
                                          cfg.val_size, cfg.to_world_config());

    FinetuneRun<S> run{std::move(vocab), VLBertModel<S>(mc, mix_seed(cfg.seed, seed_tag::model)),
                       0.0, std::string(), RawCheckpoint{}};
    run.model.set_detector_trainable(true);
    if (init) load_params(*init, run.model.params());

    const bool use_sgd = (task == "vcr_qa" || task == "vcr_qar");
    const VcrSubtask subtask = (task == "vcr_qar") ? VcrSubtask::qar : VcrSubtask::qa;
    OptimizerState<S> opt;
    const int64_t total = cfg.ft_steps;
    const int64_t warmup = static_cast<int64_t>(cfg.ft_warmup_frac * total);
    Rng pick(mix_seed(cfg.seed, seed_tag::pick));

    const auto& vcr_split = (subtask == VcrSubtask::qar) ? tasks.vcr_qar : tasks.vcr_qa;
    const size_t train_n = task == "vqa" ? tasks.vqa.train.size()
                           : task == "ref" ? tasks.ref.train.size()
                                           : vcr_split.train.size();

    for (int64_t step = 1; step <= total; ++step) {
        const double base = use_sgd ? cfg.ft_sgd_lr : cfg.ft_lr;
        const double lr = lr_schedule(step, warmup, total + 1, base);
        zero_grads(run.model.params());
        Tensor<S> loss;
        for (int b = 0; b < cfg.ft_batch; ++b) {
            const size_t idx = static_cast<size_t>(pick.integer(train_n));
            Tensor<S> term;
            if (task == "vqa") {
                term = vqa_forward_loss(run.model, tasks.vqa.train[idx], run.vocab);
            } else if (task == "ref") {
                term = ref_forward_loss(run.model, tasks.ref.train[idx], run.vocab);
            } else {
                const uint64_t aux_seed =
                    mix_seed(cfg.seed, seed_tag::aux,
                             static_cast<uint64_t>(step) * 8192 + static_cast<uint64_t>(b));
                term = vcr_forward_loss(run.model, vcr_split.train[idx], run.vocab, subtask,
                                        cfg.vcr_aux_weight, aux_seed, cfg.mask_roi_p);
            }
            loss = (loss.size() == 0) ? term : add(loss, term);
        }
        loss = scalar_mul(loss, static_cast<S>(1.0 / cfg.ft_batch));
        backward(loss);
        if (use_sgd) {
            SgdConfig sgd;
            sgd.lr = lr;
            sgd.momentum = cfg.sgd_momentum;
            sgd.weight_decay = cfg.weight_decay;
            sgd_momentum_step(run.model.params(), opt, sgd);
        } else {
            AdamConfig adam = cfg.to_adam_config();
            adam.lr = lr;
            adam_step(run.model.params(), opt, adam);
        }
    }

    if (task == "vqa") {
        run.val_accuracy = evaluate_vqa(run.model, tasks.vqa.val, run.vocab);
    } else if (task == "ref") {
        run.val_accuracy = evaluate_ref(run.model, tasks.ref.val, run.vocab);
    } else {
        run.val_accuracy = evaluate_vcr(run.model, vcr_split.val, run.vocab, subtask);
    }
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", run.val_accuracy);
    run.report = "task\tsplit\taccuracy\tsteps\tseed\n" + task + "\tval\t" + acc + '\t' +
                 std::to_string(total) + '\t' + std::to_string(cfg.seed) + '\n';
    run.final_checkpoint = to_raw(run.model.params(), opt, static_cast<uint64_t>(total),
                                  config_fingerprint(cfg));
    return run;
}

// ----- ablation grid ---------------------------------------------------------

struct AblationRow {
    std::string setting;
    double vcr_qa = 0.0, vcr_qar = 0.0, vqa = 0.0, ref = 0.0;
};

struct AblationSetting {
    std::string name;
    bool pretrain = true;
    TaskFlags flags;
    bool tune_detector = false;
};

// The six-setting grid: no pretraining; masked-word prediction only; + masked
// region classification; + sentence-image relationship; + text-only corpus;
// and the full setting which also lets gradients into the detector stub
// during pretraining. Fine-tuning always runs at half the configured steps.
std::vector<AblationSetting> ablation_grid();

std::string format_ablation_table(const std::vector<AblationRow>& rows);

template <typename S>
std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& out_dir = "") {
    cfg.validate();
    std::vector<AblationRow> rows;
    for (const AblationSetting& setting : ablation_grid()) {
        RunConfig scfg = cfg;
        scfg.task_mlm_visual = setting.flags.mlm_visual;
        scfg.task_roi_cls = setting.flags.roi_cls;
        scfg.task_text_mlm = setting.flags.text_mlm;
        scfg.task_nsp = setting.flags.nsp;
        scfg.tune_detector = setting.tune_detector;
        scfg.ratio_text = setting.flags.text_mlm ? cfg.ratio_text : 0;
        scfg.ft_steps = std::max(1, cfg.ft_steps / 2);

        RawCheckpoint start;
        bool have_start = false;
        if (setting.pretrain) {
            PretrainRun<S> pre = run_pretrain<S>(scfg);
            start = std::move(pre.final_checkpoint);
            have_start = true;
            if (!out_dir.empty()) {
                ensure_dir(out_dir + "/" + setting.name);
                write_text_file(out_dir + "/" + setting.name + "/pretrain_metrics.tsv",
                                pre.metrics);
            }
        }
        AblationRow row;
        row.setting = setting.name;
        row.vcr_qa =
            run_finetune<S>(scfg, "vcr_qa", have_start ? &start : nullptr).val_accuracy;
        row.vcr_qar =
            run_finetune<S>(scfg, "vcr_qar", have_start ? &start : nullptr).val_accuracy;
        row.vqa = run_finetune<S>(scfg, "vqa", have_start ? &start : nullptr).val_accuracy;
        row.ref = run_finetune<S>(scfg, "ref", have_start ? &start : nullptr).val_accuracy;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ----- attention dumping -------------------------------------------------------

struct AttentionDump {
    std::string records;  // TSV: layer, head, query element, key element, raw, rescaled
    std::vector<std::pair<std::string, std::string>> heatmaps;  // filename -> PGM bytes
    int n_text = 0;
    int n_roi = 0;
    int layers = 0;
    int heads = 0;
};

// Encodes one deterministic caption+image sample with attention capture and
// extracts the text-query x region-key block of every head. Intensities are
// affinely rescaled to [0,1] per layer across that layer's heads.
template <typename S>
AttentionDump run_dump_attention(const RunConfig& cfg, const RawCheckpoint* init = nullptr) {
    cfg.validate();
    Vocabulary vocab = vocab_for(cfg);
    const ModelConfig mc = cfg.to_model_config(vocab.size());
    VLBertModel<S> model(mc, mix_seed(cfg.seed, seed_tag::model));
    if (init) load_params(*init, model.params());

    const WorldConfig world = cfg.to_world_config();
    const VlCorpus corpus = make_vl_corpus(1, mix_seed(cfg.seed, seed_tag::vl_corpus), world);
    const VlCorpusItem& item = corpus.items.front();
    std::vector<RoI> rois;
    rois.push_back(full_image_roi());
    rois.insert(rois.end(), item.rois.begin(), item.rois.end());
    const InputSequence seq = assemble_input(InputFormat::caption_image,
                                             {vocab.encode(item.caption)}, rois, &item.image, vocab);

    NoGradGuard ng;
    EncodeResult<S> enc = model.encode(seq, /*capture=*/true);
    const std::vector<int> queries = word_positions(seq);
    const std::vector<int> keys = visual_positions(seq);
    const int N = seq.length();

    AttentionDump dump;
    dump.n_text = static_cast<int>(queries.size());
    dump.n_roi = static_cast<int>(keys.size());
    dump.layers = mc.layers;
    dump.heads = mc.heads;
    dump.records = "layer\thead\tquery\tkey\traw\trescaled\n";

    for (int layer = 0; layer < mc.layers; ++layer) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& rec : enc.records) {
            if (rec.layer != layer) continue;
            for (int q : queries) {
                for (int k : keys) {
                    const double v = static_cast<double>(rec.weights.at(q * N + k));
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
        }
        const double span = hi - lo;
        for (const auto& rec : enc.records) {
            if (rec.layer != layer) continue;
            std::vector<double> gray;
            gray.reserve(static_cast<size_t>(dump.n_text) * dump.n_roi);
            for (int q : queries) {
                for (int k : keys) {
                    const double raw = static_cast<double>(rec.weights.at(q * N + k));
                    const double rescaled = span > 0 ? (raw - lo) / span : 0.0;
                    gray.push_back(rescaled);
                    dump.records += std::to_string(rec.layer) + '\t' + std::to_string(rec.head) +
                                    '\t' + std::to_string(q) + '\t' + std::to_string(k) + '\t' +
                                    format_metric(raw) + '\t' + format_metric(rescaled) + '\n';
                }
            }
            dump.heatmaps.emplace_back(
                "attn_l" + std::to_string(rec.layer) + "_h" + std::to_string(rec.head) + ".pgm",
                encode_pgm(gray, dump.n_roi, dump.n_text));
        }
    }
    return dump;
}

// ----- gradient checking -------------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
};

// Central-difference verification of every differentiable op plus the fully
// composed model (pretraining and downstream losses), at 64-bit precision.
std::vector<GradCheckEntry> gradcheck_suite(uint64_t seed);

// ----- CLI entry points (runner.cpp) --------------------------------------------

int cmd_pretrain(const RunConfig& cfg, const std::string& out_dir, const std::string& init_path);
int cmd_finetune(const RunConfig& cfg, const std::string& task, const std::string& out_dir,
                 const std::string& init_path);
int cmd_ablate(const RunConfig& cfg, const std::string& out_dir);
int cmd_dump_attention(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& init_path);
int cmd_gradcheck(const RunConfig& cfg);

}  // namespace vlb
