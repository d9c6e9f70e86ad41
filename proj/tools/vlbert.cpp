// Command-line workbench: pretraining, task fine-tuning, the ablation grid,
// attention dumping, and gradient checking, all driven by one key=value
// config plus a few overriding flags.
#include "CLI11.hpp"
#include "vlbert/config.hpp"
#include "vlbert/runner.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string init_path;
    std::string precision;
    uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* precision_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& c, bool with_init) {
    cmd->add_option("--config", c.config_path, "key=value settings file")
        ->check(CLI::ExistingFile);
    c.seed_opt = cmd->add_option("--seed", c.seed, "override the config seed");
    c.out_opt = cmd->add_option("--out", c.out_dir, "output directory");
    if (with_init) {
        cmd->add_option("--init", c.init_path, "checkpoint to start from")
            ->check(CLI::ExistingFile);
    }
    c.precision_opt =
        cmd->add_option("--precision", c.precision, "working precision")
            ->check(CLI::IsMember({"f32", "f64"}));
}

vlb::RunConfig resolve(const CommonFlags& c) {
    vlb::RunConfig cfg =
        c.config_path.empty() ? vlb::RunConfig{} : vlb::load_config_file(c.config_path);
    if (c.seed_opt && c.seed_opt->count() > 0) cfg.seed = c.seed;
    if (c.precision_opt && c.precision_opt->count() > 0) cfg.precision = c.precision;
    if (c.out_opt && c.out_opt->count() > 0) cfg.out_dir = c.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale visual-linguistic transformer workbench"};
    app.require_subcommand(1);

    CommonFlags pre_f, fin_f, abl_f, att_f, grd_f;
    std::string task;

    CLI::App* pre = app.add_subcommand("pretrain", "run the two-task pretraining loop");
    add_common(pre, pre_f, /*with_init=*/true);

    CLI::App* fin = app.add_subcommand("finetune", "fine-tune on one toy task");
    add_common(fin, fin_f, /*with_init=*/true);
    fin->add_option("--task", task, "vcr_qa, vcr_qar, vqa, or ref")->required();

    CLI::App* abl = app.add_subcommand("ablate", "run the six-setting pretraining ablation grid");
    add_common(abl, abl_f, /*with_init=*/false);

    CLI::App* att =
        app.add_subcommand("dump-attention", "export attention probabilities and heatmaps");
    add_common(att, att_f, /*with_init=*/true);

    CLI::App* grd = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    add_common(grd, grd_f, /*with_init=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(pre)) {
            const vlb::RunConfig cfg = resolve(pre_f);
            return vlb::cmd_pretrain(cfg, cfg.out_dir, pre_f.init_path);
        }
        if (app.got_subcommand(fin)) {
            const vlb::RunConfig cfg = resolve(fin_f);
            return vlb::cmd_finetune(cfg, task, cfg.out_dir, fin_f.init_path);
        }
        if (app.got_subcommand(abl)) {
            const vlb::RunConfig cfg = resolve(abl_f);
            return vlb::cmd_ablate(cfg, cfg.out_dir);
        }
        if (app.got_subcommand(att)) {
            const vlb::RunConfig cfg = resolve(att_f);
            return vlb::cmd_dump_attention(cfg, cfg.out_dir, att_f.init_path);
        }
        if (app.got_subcommand(grd)) {
            return vlb::cmd_gradcheck(resolve(grd_f));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
