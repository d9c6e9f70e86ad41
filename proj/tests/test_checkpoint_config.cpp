// Binary checkpoint codec against a test-side encoder, parameter restore
// contracts, and the run-config text format with its fingerprint.
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "vlbert/checkpoint.hpp"
#include "vlbert/config.hpp"
#include "vlbert/corpus.hpp"

using namespace vlb;

namespace {
// Independent little-endian writers so the layout test does not lean on the
// library's own encoder.
void push_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void push_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void push_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    push_u32(out, bits);
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

template <typename F>
std::string thrown_message(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}
}  // namespace

TEST_CASE("checkpoint bytes follow the documented layout exactly") {
    RawCheckpoint ckpt;
    ckpt.params["a"] = RawTensor{{2}, {1.5f, -2.0f}};
    ckpt.step = 7;
    ckpt.fingerprint = 0x1122334455667788ull;

    std::string want;
    want.append("VLBC");
    push_u32(want, 1);                     // version
    push_u32(want, 1);                     // parameter count
    push_u32(want, 1);                     // name length
    want.push_back('a');                   // name
    push_u32(want, 1);                     // rank
    push_u64(want, 2);                     // extent
    push_f32(want, 1.5f);
    push_f32(want, -2.0f);
    push_u32(want, 0);                     // optimizer count
    push_u64(want, 7);                     // step
    push_u64(want, 0x1122334455667788ull); // fingerprint

    const std::string got = encode_checkpoint(ckpt);
    REQUIRE(got.size() == 57);
    CHECK(got == want);

    // Multi-tensor blocks come out name-sorted regardless of insertion order.
    RawCheckpoint two;
    two.params["beta"] = RawTensor{{1}, {2.0f}};
    two.params["alpha"] = RawTensor{{1}, {1.0f}};
    const std::string bytes = encode_checkpoint(two);
    CHECK(bytes.find("alpha") < bytes.find("beta"));

    // A shape that disagrees with the value count cannot be written.
    RawCheckpoint bad;
    bad.params["a"] = RawTensor{{2, 2}, {1.0f, 2.0f, 3.0f}};
    CHECK(contains(thrown_message([&] { (void)encode_checkpoint(bad); }),
                   "3 values but shape implies 4"));
}

TEST_CASE("checkpoint decode inverts encode for mixed-rank payloads") {
    RawCheckpoint ckpt;
    ckpt.params["emb"] = RawTensor{{3, 2}, {0.5f, -0.25f, 1e-8f, 3e7f, -0.0f, 42.0f}};
    ckpt.params["bias"] = RawTensor{{4}, {1.0f, 2.0f, 3.0f, 4.0f}};
    ckpt.opt["m:emb"] = RawTensor{{6}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f}};
    ckpt.opt["v:emb"] = RawTensor{{6}, {1.1f, 1.2f, 1.3f, 1.4f, 1.5f, 1.6f}};
    ckpt.step = 12345;
    ckpt.fingerprint = 0xDEADBEEFCAFEF00Dull;

    const RawCheckpoint back = decode_checkpoint(encode_checkpoint(ckpt));
    CHECK(back.step == ckpt.step);
    CHECK(back.fingerprint == ckpt.fingerprint);
    REQUIRE(back.params.size() == 2);
    REQUIRE(back.opt.size() == 2);
    for (const auto& [name, rt] : ckpt.params) {
        REQUIRE(back.params.count(name) == 1);
        CHECK(back.params.at(name).shape == rt.shape);
        CHECK(back.params.at(name).values == rt.values);
    }
    for (const auto& [name, rt] : ckpt.opt) {
        REQUIRE(back.opt.count(name) == 1);
        CHECK(back.opt.at(name).shape == rt.shape);
        CHECK(back.opt.at(name).values == rt.values);
    }
}

TEST_CASE("checkpoint decode rejects malformed byte streams with positions") {
    RawCheckpoint ckpt;
    ckpt.params["a"] = RawTensor{{2}, {1.5f, -2.0f}};
    ckpt.step = 7;
    ckpt.fingerprint = 9;
    const std::string good = encode_checkpoint(ckpt);

    // Every strict prefix is a truncation error.
    for (size_t n = 0; n < good.size(); ++n) {
        CHECK_THROWS_AS((void)decode_checkpoint(good.substr(0, n)), std::invalid_argument);
    }
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(good.substr(0, 56)); }),
                   "config fingerprint at byte 49 (file has 56 bytes)"));
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(good.substr(0, 20)); }),
                   "tensor rank at byte 17"));

    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(good + "x"); }),
                   "1 trailing bytes after byte 57"));

    std::string wrong_magic = good;
    wrong_magic[0] = 'X';
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(wrong_magic); }), "bad magic"));

    std::string wrong_version = good;
    wrong_version[4] = 2;
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(wrong_version); }),
                   "unsupported version 2"));

    // Hand-built stream with names out of order.
    std::string unsorted;
    unsorted.append("VLBC");
    push_u32(unsorted, 1);
    push_u32(unsorted, 2);
    for (const char* name : {"b", "a"}) {
        push_u32(unsorted, 1);
        unsorted.append(name);
        push_u32(unsorted, 1);
        push_u64(unsorted, 1);
        push_f32(unsorted, 0.0f);
    }
    push_u32(unsorted, 0);
    push_u64(unsorted, 0);
    push_u64(unsorted, 0);
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(unsorted); }),
                   "not name-sorted ('a' after 'b')"));

    // A zero extent is invalid even when no values follow.
    std::string zero_extent;
    zero_extent.append("VLBC");
    push_u32(zero_extent, 1);
    push_u32(zero_extent, 1);
    push_u32(zero_extent, 1);
    zero_extent.append("a");
    push_u32(zero_extent, 1);
    push_u64(zero_extent, 0);
    push_u32(zero_extent, 0);
    push_u64(zero_extent, 0);
    push_u64(zero_extent, 0);
    CHECK(contains(thrown_message([&] { (void)decode_checkpoint(zero_extent); }),
                   "invalid extent 0"));
}

TEST_CASE("checkpoint files restore a model bit-exactly") {
    const Vocabulary vocab = build_project_vocab();
    const ModelConfig mc = tiny_model_config(vocab.size());
    VLBertModel<float> source(mc, 21);
    VLBertModel<float> target(mc, 22);  // different init, to be overwritten

    OptimizerState<float> state;
    Rng rng(77);
    for (const auto& [name, t] : source.params()) {
        std::vector<float> m(t.values().size()), v(t.values().size());
        for (auto& x : m) x = static_cast<float>(rng.gaussian());
        for (auto& x : v) x = static_cast<float>(rng.uniform());
        state.m[name] = std::move(m);
        state.v[name] = std::move(v);
    }
    state.t = 11;

    const RawCheckpoint raw = to_raw(source.params(), state, 11, 0xABCDEFull);
    const std::string path = "ckpt_roundtrip_tmp.vlbc";
    save_checkpoint_file(path, raw);
    const RawCheckpoint loaded = load_checkpoint_file(path);
    std::remove(path.c_str());
    CHECK(encode_checkpoint(loaded) == encode_checkpoint(raw));

    OptimizerState<float> restored;
    from_raw(loaded, target.params(), restored);
    for (const auto& [name, t] : source.params()) {
        CHECK(target.params().at(name).values() == t.values());
    }
    CHECK(restored.t == 11);
    REQUIRE(restored.m.size() == state.m.size());
    REQUIRE(restored.v.size() == state.v.size());
    for (const auto& [name, buf] : state.m) CHECK(restored.m.at(name) == buf);
    for (const auto& [name, buf] : state.v) CHECK(restored.v.at(name) == buf);

    CHECK_THROWS_AS((void)load_checkpoint_file("no_such_dir/nope.vlbc"), std::runtime_error);
}

TEST_CASE("parameter restore rejects mismatched tensor inventories") {
    const Vocabulary vocab = build_project_vocab();
    const ModelConfig mc = tiny_model_config(vocab.size());
    VLBertModel<float> model(mc, 5);
    const RawCheckpoint complete = to_raw(model.params(), OptimizerState<float>{}, 0, 0);

    RawCheckpoint missing = complete;
    missing.params.erase("emb.token");
    CHECK(contains(
        thrown_message([&] { load_params(missing, model.params()); }),
        "missing tensor 'emb.token'"));

    RawCheckpoint extra = complete;
    extra.params["zzz.unknown"] = RawTensor{{1}, {0.0f}};
    CHECK(contains(thrown_message([&] { load_params(extra, model.params()); }),
                   "unexpected tensor 'zzz.unknown'"));

    RawCheckpoint reshaped = complete;
    reshaped.params["det.b"].shape = {1, static_cast<int>(reshaped.params["det.b"].values.size())};
    CHECK(contains(thrown_message([&] { load_params(reshaped, model.params()); }),
                   "'det.b' has shape"));

    RawCheckpoint bad_opt = complete;
    bad_opt.opt["x:emb.token"] = RawTensor{{1}, {0.0f}};
    OptimizerState<float> st;
    CHECK(contains(thrown_message([&] { from_raw(bad_opt, model.params(), st); }),
                   "malformed optimizer entry 'x:emb.token'"));

    RawCheckpoint orphan_opt = complete;
    orphan_opt.opt["m:ghost.param"] = RawTensor{{1}, {0.0f}};
    CHECK(contains(thrown_message([&] { from_raw(orphan_opt, model.params(), st); }),
                   "optimizer entry for unknown parameter 'ghost.param'"));
}

TEST_CASE("config text parses values, comments, and whitespace") {
    const RunConfig cfg = parse_config_text(
        "# model width\n"
        "d = 32   # trailing comment\n"
        "\n"
        "   layers =2\r\n"
        "task_nsp=true\n"
        "tune_detector=0\n"
        "seed=123\n"
        "lr=2.5e-4\n"
        "out_dir=runs/a\n");
    CHECK(cfg.d == 32);
    CHECK(cfg.layers == 2);
    CHECK(cfg.task_nsp == true);
    CHECK(cfg.tune_detector == false);
    CHECK(cfg.seed == 123);
    CHECK(cfg.lr == 2.5e-4);
    CHECK(cfg.out_dir == "runs/a");
    CHECK(cfg.heads == 4);  // untouched keys keep their defaults

    // The empty text is the all-defaults config.
    CHECK(serialize_config(parse_config_text("")) == serialize_config(RunConfig{}));
}

TEST_CASE("config parse errors carry the key and the line number") {
    CHECK(contains(thrown_message([] { (void)parse_config_text("d=32\nbogus_key=1\n"); }),
                   "unknown key 'bogus_key' on line 2"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("d=32\n\nd=16\n"); }),
                   "key 'd' repeated on line 3 (first on line 1)"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("just some words\n"); }),
                   "line 1 is not key=value"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("=5\n"); }),
                   "empty key on line 1"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("d=twelve\n"); }),
                   "expects an integer"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("d=12x\n"); }),
                   "expects an integer"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("d=9999999999999\n"); }),
                   "expects an integer"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("lr=fast\n"); }),
                   "expects a number"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("task_nsp=maybe\n"); }),
                   "0/1 or true/false"));
    CHECK(contains(thrown_message([] { (void)parse_config_text("seed=-1\n"); }),
                   "unsigned integer"));

    // Cross-field validation runs after parsing.
    CHECK_THROWS_AS((void)parse_config_text("min_objects=3\nmax_objects=2\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_config_text("precision=f16\n"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_config_text("mask_scheme=weird\n"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_config_text("warmup_steps=50\npretrain_steps=10\n"),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)parse_config_text("attn_scaling=double\n"), std::invalid_argument);
}

TEST_CASE("canonical config form is sorted, complete, and round-trips") {
    RunConfig cfg;
    cfg.d = 48;
    cfg.roi_jitter = 0.1;
    cfg.lr = 7e-4;
    cfg.init_std = 0.012345678901234567;
    cfg.mask_scheme = "bert_80_10_10";
    cfg.task_nsp = true;
    cfg.seed = 987654321;
    cfg.out_dir = "runs/canonical";

    const std::string canon = serialize_config(cfg);
    std::vector<std::string> keys;
    std::istringstream in(canon);
    std::string line;
    while (std::getline(in, line)) {
        const size_t eq = line.find('=');
        REQUIRE(eq != std::string::npos);
        keys.push_back(line.substr(0, eq));
    }
    CHECK(keys.size() == 53);
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    // Doubles print with enough digits to round-trip exactly.
    CHECK(contains(canon, "roi_jitter=0.10000000000000001\n"));
    CHECK(contains(canon, "init_std=0.012345678901234567\n"));
    CHECK(contains(canon, "task_nsp=1\n"));

    const RunConfig back = parse_config_text(canon);
    CHECK(back.roi_jitter == cfg.roi_jitter);
    CHECK(back.init_std == cfg.init_std);
    CHECK(serialize_config(back) == canon);
}

TEST_CASE("config files load through the same parser") {
    const std::string path = "config_load_tmp.cfg";
    {
        std::ofstream f(path);
        f << "d=32\nlayers=2\n";
    }
    const RunConfig cfg = load_config_file(path);
    std::remove(path.c_str());
    CHECK(cfg.d == 32);
    CHECK(cfg.layers == 2);
    CHECK_THROWS_AS((void)load_config_file("no_such_config_file.cfg"), std::runtime_error);
}

TEST_CASE("config fingerprints ignore the output directory only") {
    RunConfig a;
    a.out_dir = "first";
    RunConfig b;
    b.out_dir = "second/elsewhere";
    CHECK(config_fingerprint(a) == config_fingerprint(b));

    RunConfig c = a;
    c.seed = 43;
    CHECK(config_fingerprint(c) != config_fingerprint(a));
    RunConfig d = a;
    d.mask_word_p = 0.2;
    CHECK(config_fingerprint(d) != config_fingerprint(a));

    // FNV-1a over the canonical text with out_dir cleared, recomputed here.
    RunConfig semantic = a;
    semantic.out_dir.clear();
    const std::string canon = serialize_config(semantic);
    uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    CHECK(config_fingerprint(a) == h);
}
