#include "vlbert/runner.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace vlb {

void ensure_dir(const std::string& path) {
    if (path.empty()) return;
    std::filesystem::create_directories(path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9e", v);
    return buf;
}

std::vector<AblationSetting> ablation_grid() {
    auto flags = [](bool mlm, bool roi, bool text, bool nsp) {
        TaskFlags f;
        f.mlm_visual = mlm;
        f.roi_cls = roi;
        f.text_mlm = text;
        f.nsp = nsp;
        return f;
    };
    return {
        {"wo_pretraining", false, flags(false, false, false, false), false},
        {"a_masked_words", true, flags(true, false, false, false), false},
        {"b_plus_masked_regions", true, flags(true, true, false, false), false},
        {"c_plus_sentence_image", true, flags(true, true, false, true), false},
        {"d_plus_text_corpus", true, flags(true, true, true, false), false},
        {"full_tuned_detector", true, flags(true, true, true, false), true},
    };
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = "setting\tvcr_qa\tvcr_qar\tvqa\tref\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%.6f\t%.6f\t%.6f\n", r.setting.c_str(),
                      r.vcr_qa, r.vcr_qar, r.vqa, r.ref);
        out += buf;
    }
    return out;
}

// ----- gradient-check suite ----------------------------------------------------

namespace {

using T = Tensor<double>;
using ParamMap = std::map<std::string, T>;

T randt(const std::vector<int>& shape, Rng& rng) {
    return Tensor<double>::gaussian(shape, rng, 0.0, 1.0).set_requires_grad();
}

// Fixed random weighting so a structural op's gradient differs per coordinate
// (a plain sum would hide permutation/offset mistakes).
T weight_like(const T& t, Rng& rng) {
    Tensor<double> w = Tensor<double>::gaussian(t.shape(), rng, 0.0, 1.0);
    return w;  // not a parameter: no gradient flows into it
}

struct Suite {
    uint64_t seed;
    std::vector<GradCheckEntry> entries;

    void run(const std::string& name, ParamMap& params, const std::function<T()>& fn,
             int max_coords = -1) {
        const GradCheckReport rep = grad_check<double>(params, fn, 1e-4, max_coords);
        entries.push_back({name, rep.max_rel_err, rep.checked});
    }
};

void op_checks(Suite& s) {
    Rng rng(mix_seed(s.seed, 0x09));

    {
        ParamMap p{{"a", randt({3, 4}, rng)}, {"b", randt({4, 2}, rng)}};
        T w = weight_like(matmul(p["a"], p["b"]), rng);
        s.run("matmul", p, [=]() mutable { return sum_all(mul(matmul(p["a"], p["b"]), w)); });
    }
    {
        ParamMap p{{"a", randt({3, 4}, rng)}, {"b", randt({5, 4}, rng)}};
        T w = weight_like(matmul_nt(p["a"], p["b"]), rng);
        s.run("matmul_nt", p, [=]() mutable { return sum_all(mul(matmul_nt(p["a"], p["b"]), w)); });
    }
    {
        ParamMap p{{"a", randt({3, 4}, rng)}, {"b", randt({3, 4}, rng)}};
        T w = weight_like(p["a"], rng);
        s.run("add", p, [=]() mutable { return sum_all(mul(add(p["a"], p["b"]), w)); });
    }
    {
        ParamMap p{{"x", randt({3, 4}, rng)}, {"v", randt({4}, rng)}};
        T w = weight_like(p["x"], rng);
        s.run("add_rowvec", p, [=]() mutable { return sum_all(mul(add_rowvec(p["x"], p["v"]), w)); });
    }
    {
        ParamMap p{{"a", randt({3, 4}, rng)}, {"b", randt({3, 4}, rng)}};
        s.run("mul", p, [=]() mutable { return sum_all(mul(p["a"], p["b"])); });
    }
    {
        ParamMap p{{"a", randt({3, 4}, rng)}};
        T w = weight_like(p["a"], rng);
        s.run("scalar_mul", p,
              [=]() mutable { return sum_all(mul(scalar_mul(p["a"], 1.7), w)); });
    }
    {
        ParamMap p{{"a", randt({3, 2}, rng)}, {"b", randt({3, 3}, rng)}};
        T w = weight_like(Tensor<double>::zeros({3, 5}), rng);
        s.run("concat_cols", p,
              [=]() mutable { return sum_all(mul(concat_cols(p["a"], p["b"]), w)); });
    }
    {
        // repeats "r0" so shared-row gradient accumulation is exercised
        ParamMap p{{"r0", randt({5}, rng)}, {"r1", randt({5}, rng)}};
        T w = weight_like(Tensor<double>::zeros({3, 5}), rng);
        s.run("stack_rows", p, [=]() mutable {
            const std::vector<T> rows{p["r0"], p["r1"], p["r0"]};
            return sum_all(mul(stack_rows(rows), w));
        });
    }
    {
        ParamMap p{{"table", randt({7, 4}, rng)}};
        const std::vector<int> ids{1, 5, 5, 0, 3};
        T w = weight_like(Tensor<double>::zeros({5, 4}), rng);
        s.run("embedding_lookup", p,
              [=]() mutable { return sum_all(mul(embedding_lookup(p["table"], ids), w)); });
    }
    {
        ParamMap p{{"x", randt({6, 3}, rng)}};
        const std::vector<int> ids{4, 4, 1};
        T w = weight_like(Tensor<double>::zeros({3, 3}), rng);
        s.run("take_rows", p, [=]() mutable { return sum_all(mul(take_rows(p["x"], ids), w)); });
    }
    {
        ParamMap p{{"x", randt({3, 5}, rng)}};
        T w = weight_like(p["x"], rng);
        s.run("softmax", p, [=]() mutable { return sum_all(mul(softmax(p["x"]), w)); });
    }
    {
        ParamMap p{{"x", randt({3, 5}, rng)}};
        T w = weight_like(p["x"], rng);
        const std::vector<uint8_t> valid{1, 0, 1, 1, 0};
        s.run("softmax_masked", p,
              [=]() mutable { return sum_all(mul(softmax(p["x"], &valid), w)); });
    }
    {
        ParamMap p{{"x", randt({3, 6}, rng)},
                   {"gain", randt({6}, rng)},
                   {"bias", randt({6}, rng)}};
        T w = weight_like(p["x"], rng);
        s.run("layer_norm", p, [=]() mutable {
            return sum_all(mul(layer_norm(p["x"], p["gain"], p["bias"]), w));
        });
    }
    {
        ParamMap p{{"x", randt({2, 7}, rng)}};
        T w = weight_like(p["x"], rng);
        s.run("gelu", p, [=]() mutable { return sum_all(mul(gelu(p["x"]), w)); });
    }
    {
        ParamMap p{{"x", randt({2, 7}, rng)}};
        T w = weight_like(p["x"], rng);
        s.run("sigmoid", p, [=]() mutable { return sum_all(mul(sigmoid(p["x"]), w)); });
    }
    {
        ParamMap p{{"logits", randt({4, 6}, rng)}};
        const std::vector<int> targets{1, 0, 5, 2};
        const std::vector<uint8_t> mask{1, 1, 0, 1};
        s.run("cross_entropy", p,
              [=]() mutable { return cross_entropy(p["logits"], targets, mask); });
    }
    {
        ParamMap p{{"z", randt({5}, rng)}};
        const std::vector<double> labels{1, 0, 1, 1, 0};
        s.run("binary_cross_entropy", p,
              [=]() mutable { return binary_cross_entropy_with_logits(p["z"], labels); });
    }
    {
        ParamMap p{{"x", randt({3, 3}, rng)}};
        s.run("sum_all", p, [=]() mutable { return sum_all(p["x"]); });
    }
    {
        ParamMap p{{"x", randt({3, 4}, rng)}};
        T w = weight_like(Tensor<double>::zeros({2, 6}), rng);
        s.run("reshape", p,
              [=]() mutable { return sum_all(mul(reshape(p["x"], {2, 6}), w)); });
    }
    {
        ParamMap p{{"x", randt({3, 4}, rng)}};
        T w = weight_like(Tensor<double>::zeros({4, 3}), rng);
        s.run("transpose", p, [=]() mutable { return sum_all(mul(transpose(p["x"]), w)); });
    }
    {
        // the per-call Rng restart makes the drop mask identical across
        // finite-difference evaluations
        ParamMap p{{"x", randt({4, 6}, rng)}};
        T w = weight_like(p["x"], rng);
        const uint64_t drop_seed = mix_seed(s.seed, 0xD0);
        s.run("dropout", p, [=]() mutable {
            Rng drop(drop_seed);
            return sum_all(mul(dropout(p["x"], 0.3, drop), w));
        });
    }
    {
        Rng lrng(mix_seed(s.seed, 0x10));
        LayerParams<double> layer = make_layer<double>(8, 2, 16, lrng, 0.2);
        ParamMap p;
        register_layer(p, "layer", layer);
        p["x"] = randt({5, 8}, lrng);
        T w = weight_like(p["x"], lrng);
        s.run("transformer_layer", p, [=]() mutable {
            return sum_all(mul(transformer_layer(p["x"], layer), w));
        });
    }
}

// One tiny model checked end-to-end through every head it has.
void model_checks(Suite& s) {
    const Vocabulary vocab = build_project_vocab();
    ModelConfig mc;
    mc.d = 16;
    mc.layers = 2;
    mc.heads = 2;
    mc.d_ff = 32;
    mc.d_app = 8;
    mc.d_g = 8;
    mc.vocab_size = vocab.size();
    mc.max_positions = 32;
    mc.pool_grid = 2;
    mc.validate();

    WorldConfig world;
    world.image_size = 16;
    world.max_objects = 3;
    world.roi_max = 6;
    world.roi_min = 2;

    VLBertModel<double> model(mc, mix_seed(s.seed, 0x20));
    model.set_detector_trainable(true);

    const VlCorpus corpus = make_vl_corpus(1, mix_seed(s.seed, 0x21), world);
    SamplerOptions opts;
    opts.flags.nsp = true;
    PretrainSample sample = make_vl_sample(corpus.items.front(), corpus.items.front().caption,
                                           mix_seed(s.seed, 0x22), vocab, opts);
    sample.nsp_label = 1;

    s.run(
        "model_pretrain_losses", model.params(),
        [&]() {
            Tensor<double> loss = mlm_visual_loss(model, sample);
            loss = add(loss, masked_roi_cls_loss(model, sample));
            loss = add(loss, nsp_loss(model, sample));
            return loss;
        },
        2);

    const ToyTasks tasks = make_toy_tasks(mix_seed(s.seed, 0x23), 1, 1, world);
    s.run(
        "model_downstream_losses", model.params(),
        [&]() {
            Tensor<double> loss = vcr_forward_loss(model, tasks.vcr_qa.train[0], vocab,
                                                   VcrSubtask::qa, 1.0, mix_seed(s.seed, 0x24),
                                                   0.5);
            loss = add(loss, vqa_forward_loss(model, tasks.vqa.train[0], vocab));
            loss = add(loss, ref_forward_loss(model, tasks.ref.train[0], vocab));
            return loss;
        },
        2);
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_suite(uint64_t seed) {
    Suite s{seed, {}};
    op_checks(s);
    model_checks(s);
    return s.entries;
}

// ----- CLI entry points ----------------------------------------------------------

namespace {

constexpr double kGradTolerance = 1e-4;

template <typename S>
int pretrain_impl(const RunConfig& cfg, const std::string& out_dir, const RawCheckpoint* init) {
    const CheckpointSink sink = [&](int64_t step, const RawCheckpoint& ck) {
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_%06lld.vlbc", static_cast<long long>(step));
        save_checkpoint_file(out_dir + "/" + name, ck);
    };
    PretrainRun<S> run = run_pretrain<S>(cfg, init, sink);
    write_text_file(out_dir + "/metrics.tsv", run.metrics);
    save_checkpoint_file(out_dir + "/checkpoint_final.vlbc", run.final_checkpoint);
    write_text_file(out_dir + "/config.txt", serialize_config(cfg));
    std::printf("pretrain: %d steps done, artifacts in %s\n", cfg.pretrain_steps, out_dir.c_str());
    return 0;
}

template <typename S>
int finetune_impl(const RunConfig& cfg, const std::string& task, const std::string& out_dir,
                  const RawCheckpoint* init) {
    FinetuneRun<S> run = run_finetune<S>(cfg, task, init);
    write_text_file(out_dir + "/report.tsv", run.report);
    save_checkpoint_file(out_dir + "/checkpoint_final.vlbc", run.final_checkpoint);
    write_text_file(out_dir + "/config.txt", serialize_config(cfg));
    std::printf("finetune %s: val accuracy %.4f after %d steps (%s)\n", task.c_str(),
                run.val_accuracy, cfg.ft_steps, init ? "from checkpoint" : "from scratch");
    return 0;
}

template <typename S>
int ablate_impl(const RunConfig& cfg, const std::string& out_dir) {
    const std::vector<AblationRow> rows = run_ablate<S>(cfg, out_dir);
    const std::string table = format_ablation_table(rows);
    write_text_file(out_dir + "/ablation.tsv", table);
    std::fputs(table.c_str(), stdout);
    return 0;
}

template <typename S>
int dump_attention_impl(const RunConfig& cfg, const std::string& out_dir,
                        const RawCheckpoint* init) {
    const AttentionDump dump = run_dump_attention<S>(cfg, init);
    write_text_file(out_dir + "/records.tsv", dump.records);
    for (const auto& [name, bytes] : dump.heatmaps) {
        write_text_file(out_dir + "/" + name, bytes);
    }
    std::printf("dump-attention: %d layers x %d heads over %d text x %d region cells -> %s\n",
                dump.layers, dump.heads, dump.n_text, dump.n_roi, out_dir.c_str());
    return 0;
}

int guard(const std::function<int()>& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int cmd_pretrain(const RunConfig& cfg, const std::string& out_dir, const std::string& init_path) {
    return guard([&]() {
        cfg.validate();
        if (!cfg.to_task_flags().any()) {
            throw std::invalid_argument("pretrain: every task flag is disabled; nothing to train");
        }
        RawCheckpoint init;
        const bool have_init = !init_path.empty();
        if (have_init) init = load_checkpoint_file(init_path);
        ensure_dir(out_dir);
        return cfg.precision == "f64" ? pretrain_impl<double>(cfg, out_dir, have_init ? &init : nullptr)
                                      : pretrain_impl<float>(cfg, out_dir, have_init ? &init : nullptr);
    });
}

int cmd_finetune(const RunConfig& cfg, const std::string& task, const std::string& out_dir,
                 const std::string& init_path) {
    return guard([&]() {
        cfg.validate();
        check_task_name(task);
        RawCheckpoint init;
        const bool have_init = !init_path.empty();
        if (have_init) init = load_checkpoint_file(init_path);
        ensure_dir(out_dir);
        return cfg.precision == "f64"
                   ? finetune_impl<double>(cfg, task, out_dir, have_init ? &init : nullptr)
                   : finetune_impl<float>(cfg, task, out_dir, have_init ? &init : nullptr);
    });
}

int cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
    return guard([&]() {
        cfg.validate();
        ensure_dir(out_dir);
        return cfg.precision == "f64" ? ablate_impl<double>(cfg, out_dir)
                                      : ablate_impl<float>(cfg, out_dir);
    });
}

int cmd_dump_attention(const RunConfig& cfg, const std::string& out_dir,
                       const std::string& init_path) {
    return guard([&]() {
        cfg.validate();
        RawCheckpoint init;
        const bool have_init = !init_path.empty();
        if (have_init) init = load_checkpoint_file(init_path);
        ensure_dir(out_dir);
        return cfg.precision == "f64"
                   ? dump_attention_impl<double>(cfg, out_dir, have_init ? &init : nullptr)
                   : dump_attention_impl<float>(cfg, out_dir, have_init ? &init : nullptr);
    });
}

int cmd_gradcheck(const RunConfig& cfg) {
    return guard([&]() {
        cfg.validate();
        bool ok = true;
        std::printf("%-28s %-14s %-8s %s\n", "op", "max_rel_err", "coords", "status");
        for (int round = 0; round < 3; ++round) {
            const uint64_t seed = mix_seed(cfg.seed, 0x6C, static_cast<uint64_t>(round));
            for (const GradCheckEntry& e : gradcheck_suite(seed)) {
                const bool pass = e.max_rel_err <= kGradTolerance;
                ok = ok && pass;
                std::printf("%-28s %-14.3e %-8d %s\n", e.name.c_str(), e.max_rel_err, e.checked,
                            pass ? "pass" : "FAIL");
            }
        }
        return ok ? 0 : 1;
    });
}

}  // namespace vlb
