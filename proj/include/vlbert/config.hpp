#pragma once

#include <cstdint>
#include <string>

#include "vlbert/corpus.hpp"
#include "vlbert/model.hpp"
#include "vlbert/optim.hpp"
#include "vlbert/pretrain.hpp"

namespace vlb {

// Every run setting, parsed from key=value text. Field names double as the
// config keys; unknown keys are rejected so typos can't silently fall back to
// defaults.
struct RunConfig {
    // model dimensions
    int d = 64;
    int layers = 4;
    int heads = 4;
    int d_ff = 256;
    int d_app = 32;
    int d_g = 32;
    int max_positions = 64;
    int pool_grid = 4;
    std::string attn_scaling = "inv_sqrt_dh";  // or "none"
    double init_std = 0.02;
    std::string vocab_path;  // empty: derive the vocabulary from the toy world

    // world generation
    int image_size = 32;
    int min_objects = 1;
    int max_objects = 3;
    int roi_max = 100;
    int roi_min = 10;
    int roi_distractors = 1;
    double roi_score_threshold = 0.5;
    double roi_jitter = 0.1;

    // pretraining
    int pretrain_steps = 2000;
    int warmup_steps = 200;
    int batch_size = 16;
    double lr = 2e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double mask_word_p = 0.15;
    double mask_roi_p = 0.15;
    std::string mask_scheme = "replace_only";  // or "bert_80_10_10"
    int ratio_vl = 1;
    int ratio_text = 1;
    int corpus_vl_size = 2000;
    int corpus_text_size = 1000;
    int text_max_tokens = 64;
    int checkpoint_every = 500;
    bool task_mlm_visual = true;
    bool task_roi_cls = true;
    bool task_text_mlm = true;
    bool task_nsp = false;
    bool tune_detector = true;

    // fine-tuning
    int ft_steps = 600;
    int ft_batch = 8;
    int train_size = 1500;
    int val_size = 300;
    double ft_lr = 5e-4;
    double ft_sgd_lr = 5e-3;
    double sgd_momentum = 0.9;
    double ft_warmup_frac = 0.1;
    double vcr_aux_weight = 1.0;

    // run
    uint64_t seed = 42;
    std::string precision = "f32";  // or "f64"
    std::string out_dir = "out";

    template <typename Self, typename V>
    static void visit_impl(Self& self, V&& v) {
        v("d", self.d);
        v("layers", self.layers);
        v("heads", self.heads);
        v("d_ff", self.d_ff);
        v("d_app", self.d_app);
        v("d_g", self.d_g);
        v("max_positions", self.max_positions);
        v("pool_grid", self.pool_grid);
        v("attn_scaling", self.attn_scaling);
        v("init_std", self.init_std);
        v("vocab_path", self.vocab_path);
        v("image_size", self.image_size);
        v("min_objects", self.min_objects);
        v("max_objects", self.max_objects);
        v("roi_max", self.roi_max);
        v("roi_min", self.roi_min);
        v("roi_distractors", self.roi_distractors);
        v("roi_score_threshold", self.roi_score_threshold);
        v("roi_jitter", self.roi_jitter);
        v("pretrain_steps", self.pretrain_steps);
        v("warmup_steps", self.warmup_steps);
        v("batch_size", self.batch_size);
        v("lr", self.lr);
        v("adam_beta1", self.adam_beta1);
        v("adam_beta2", self.adam_beta2);
        v("adam_eps", self.adam_eps);
        v("weight_decay", self.weight_decay);
        v("mask_word_p", self.mask_word_p);
        v("mask_roi_p", self.mask_roi_p);
        v("mask_scheme", self.mask_scheme);
        v("ratio_vl", self.ratio_vl);
        v("ratio_text", self.ratio_text);
        v("corpus_vl_size", self.corpus_vl_size);
        v("corpus_text_size", self.corpus_text_size);
        v("text_max_tokens", self.text_max_tokens);
        v("checkpoint_every", self.checkpoint_every);
        v("task_mlm_visual", self.task_mlm_visual);
        v("task_roi_cls", self.task_roi_cls);
        v("task_text_mlm", self.task_text_mlm);
        v("task_nsp", self.task_nsp);
        v("tune_detector", self.tune_detector);
        v("ft_steps", self.ft_steps);
        v("ft_batch", self.ft_batch);
        v("train_size", self.train_size);
        v("val_size", self.val_size);
        v("ft_lr", self.ft_lr);
        v("ft_sgd_lr", self.ft_sgd_lr);
        v("sgd_momentum", self.sgd_momentum);
        v("ft_warmup_frac", self.ft_warmup_frac);
        v("vcr_aux_weight", self.vcr_aux_weight);
        v("seed", self.seed);
        v("precision", self.precision);
        v("out_dir", self.out_dir);
    }
    template <typename V>
    void visit(V&& v) {
        visit_impl(*this, v);
    }
    template <typename V>
    void visit(V&& v) const {
        visit_impl(*this, v);
    }

    void validate() const;

    ModelConfig to_model_config(int vocab_size) const;
    WorldConfig to_world_config() const;
    SamplerOptions to_sampler_options() const;
    TaskFlags to_task_flags() const;
    MaskScheme mask_scheme_enum() const;
    AdamConfig to_adam_config() const;
};

// key=value per line, '#' starts a comment, blank lines ignored. Unknown or
// repeated keys and malformed values are errors (with line numbers).
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Canonical form: one key=value per line, keys sorted, fixed number
// formatting. parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& cfg);

// FNV-1a over the canonical serialization; stamped into checkpoints so a
// resume under different settings warns instead of silently diverging.
uint64_t config_fingerprint(const RunConfig& cfg);

}  // namespace vlb
