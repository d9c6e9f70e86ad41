#include "vlbert/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vlb {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
    throw std::invalid_argument("config: key '" + key + "' expects " + want + ", got '" + value +
                                "'");
}

// Assigns one raw string onto the visited field matching `key`.
struct Setter {
    const std::string& key;
    const std::string& value;
    bool* found;

    void operator()(const char* name, int& field) const {
        if (key != name) return;
        *found = true;
        size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(value, &used);
        } catch (const std::exception&) {
            bad_value(key, value, "an integer");
        }
        if (used != value.size() || v < INT32_MIN || v > INT32_MAX) {
            bad_value(key, value, "an integer");
        }
        field = static_cast<int>(v);
    }
    void operator()(const char* name, uint64_t& field) const {
        if (key != name) return;
        *found = true;
        size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(value, &used);
        } catch (const std::exception&) {
            bad_value(key, value, "an unsigned integer");
        }
        if (used != value.size() || (!value.empty() && value[0] == '-')) {
            bad_value(key, value, "an unsigned integer");
        }
        field = static_cast<uint64_t>(v);
    }
    void operator()(const char* name, double& field) const {
        if (key != name) return;
        *found = true;
        size_t used = 0;
        double v = 0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            bad_value(key, value, "a number");
        }
        if (used != value.size()) bad_value(key, value, "a number");
        field = v;
    }
    void operator()(const char* name, bool& field) const {
        if (key != name) return;
        *found = true;
        if (value == "1" || value == "true") {
            field = true;
        } else if (value == "0" || value == "false") {
            field = false;
        } else {
            bad_value(key, value, "0/1 or true/false");
        }
    }
    void operator()(const char* name, std::string& field) const {
        if (key != name) return;
        *found = true;
        field = value;
    }
};

// Renders every field as `key=value` into a sorted map.
struct Emitter {
    std::map<std::string, std::string>* out;

    static std::string fmt(int v) { return std::to_string(v); }
    static std::string fmt(uint64_t v) { return std::to_string(v); }
    static std::string fmt(bool v) { return v ? "1" : "0"; }
    static std::string fmt(const std::string& v) { return v; }
    static std::string fmt(double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    template <typename T>
    void operator()(const char* name, const T& field) const {
        (*out)[name] = fmt(field);
    }
};

}  // namespace

void RunConfig::validate() const {
    to_model_config(Vocabulary::num_specials + 1);  // dimension checks
    if (attn_scaling != "inv_sqrt_dh" && attn_scaling != "none") {
        throw std::invalid_argument("config: attn_scaling must be inv_sqrt_dh or none");
    }
    if (mask_scheme != "replace_only" && mask_scheme != "bert_80_10_10") {
        throw std::invalid_argument("config: mask_scheme must be replace_only or bert_80_10_10");
    }
    if (precision != "f32" && precision != "f64") {
        throw std::invalid_argument("config: precision must be f32 or f64");
    }
    if (init_std <= 0) throw std::invalid_argument("config: init_std must be positive");
    if (image_size < 8) throw std::invalid_argument("config: image_size must be at least 8");
    if (min_objects < 1 || max_objects < min_objects || max_objects > 4) {
        throw std::invalid_argument("config: need 1 <= min_objects <= max_objects <= 4");
    }
    if (roi_max < 1 || roi_min < 0 || roi_distractors < 0) {
        throw std::invalid_argument("config: RoI counts must be non-negative (roi_max >= 1)");
    }
    if (roi_score_threshold < 0 || roi_score_threshold > 1) {
        throw std::invalid_argument("config: roi_score_threshold must lie in [0,1]");
    }
    if (roi_jitter < 0 || roi_jitter > 0.5) {
        throw std::invalid_argument("config: roi_jitter must lie in [0,0.5]");
    }
    if (pretrain_steps < 1 || warmup_steps < 0 || warmup_steps > pretrain_steps) {
        throw std::invalid_argument("config: need 0 <= warmup_steps <= pretrain_steps, steps >= 1");
    }
    if (batch_size < 1 || ft_batch < 1) throw std::invalid_argument("config: batch sizes >= 1");
    if (lr <= 0 || ft_lr <= 0 || ft_sgd_lr <= 0) {
        throw std::invalid_argument("config: learning rates must be positive");
    }
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1 || adam_eps <= 0) {
        throw std::invalid_argument("config: Adam settings out of range");
    }
    if (weight_decay < 0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (mask_word_p < 0 || mask_word_p > 1 || mask_roi_p < 0 || mask_roi_p > 1) {
        throw std::invalid_argument("config: mask probabilities must lie in [0,1]");
    }
    if (ratio_vl < 0 || ratio_text < 0 || ratio_vl + ratio_text == 0) {
        throw std::invalid_argument("config: mixing ratio parts must be >= 0 and not both zero");
    }
    if (corpus_vl_size < 1 || corpus_text_size < 1 || text_max_tokens < 4) {
        throw std::invalid_argument("config: corpus sizes >= 1 and text_max_tokens >= 4");
    }
    if (checkpoint_every < 1) throw std::invalid_argument("config: checkpoint_every must be >= 1");
    if (ft_steps < 1 || train_size < 1 || val_size < 1) {
        throw std::invalid_argument("config: fine-tune sizes must be >= 1");
    }
    if (sgd_momentum < 0 || sgd_momentum >= 1) {
        throw std::invalid_argument("config: sgd_momentum must lie in [0,1)");
    }
    if (ft_warmup_frac < 0 || ft_warmup_frac > 1) {
        throw std::invalid_argument("config: ft_warmup_frac must lie in [0,1]");
    }
    if (vcr_aux_weight < 0) throw std::invalid_argument("config: vcr_aux_weight must be >= 0");
}

ModelConfig RunConfig::to_model_config(int vocab_size) const {
    ModelConfig mc;
    mc.d = d;
    mc.layers = layers;
    mc.heads = heads;
    mc.d_ff = d_ff;
    mc.d_app = d_app;
    mc.d_g = d_g;
    mc.vocab_size = vocab_size;
    mc.n_categories = kNumCategories;
    mc.n_answers = static_cast<int>(answer_pool().size());
    mc.max_positions = max_positions;
    mc.pool_grid = pool_grid;
    mc.scale_attention = (attn_scaling == "inv_sqrt_dh");
    mc.init_std = init_std;
    mc.validate();
    return mc;
}

WorldConfig RunConfig::to_world_config() const {
    WorldConfig w;
    w.image_size = image_size;
    w.min_objects = min_objects;
    w.max_objects = max_objects;
    w.roi_max = roi_max;
    w.roi_min = roi_min;
    w.roi_score_threshold = roi_score_threshold;
    w.roi_jitter = roi_jitter;
    w.roi_distractors = roi_distractors;
    return w;
}

TaskFlags RunConfig::to_task_flags() const {
    TaskFlags f;
    f.mlm_visual = task_mlm_visual;
    f.roi_cls = task_roi_cls;
    f.text_mlm = task_text_mlm;
    f.nsp = task_nsp;
    return f;
}

MaskScheme RunConfig::mask_scheme_enum() const {
    return mask_scheme == "bert_80_10_10" ? MaskScheme::bert_80_10_10 : MaskScheme::replace_only;
}

SamplerOptions RunConfig::to_sampler_options() const {
    SamplerOptions opt;
    opt.mask_word_p = mask_word_p;
    opt.mask_roi_p = mask_roi_p;
    opt.scheme = mask_scheme_enum();
    opt.flags = to_task_flags();
    opt.text_max_tokens = text_max_tokens;
    opt.ratio_vl = ratio_vl;
    opt.ratio_text = ratio_text;
    return opt;
}

AdamConfig RunConfig::to_adam_config() const {
    AdamConfig a;
    a.lr = lr;
    a.beta1 = adam_beta1;
    a.beta2 = adam_beta2;
    a.eps = adam_eps;
    a.weight_decay = weight_decay;
    return a;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::map<std::string, int> seen;  // key -> first line
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                        " is not key=value: '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument("config: empty key on line " + std::to_string(line_no));
        }
        auto [it, fresh] = seen.emplace(key, line_no);
        if (!fresh) {
            throw std::invalid_argument("config: key '" + key + "' repeated on line " +
                                        std::to_string(line_no) + " (first on line " +
                                        std::to_string(it->second) + ")");
        }
        bool found = false;
        cfg.visit(Setter{key, value, &found});
        if (!found) {
            throw std::invalid_argument("config: unknown key '" + key + "' on line " +
                                        std::to_string(line_no));
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string serialize_config(const RunConfig& cfg) {
    std::map<std::string, std::string> kv;
    cfg.visit(Emitter{&kv});
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

uint64_t config_fingerprint(const RunConfig& cfg) {
    // where artifacts land has no bearing on what a run computes
    RunConfig semantic = cfg;
    semantic.out_dir.clear();
    const std::string canon = serialize_config(semantic);
    uint64_t h = 14695981039346656037ull;  // FNV offset basis
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;  // FNV prime
    }
    return h;
}

}  // namespace vlb
