#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "deltaseg/gradsuite.hpp"
#include "deltaseg/train.hpp"

namespace {

using namespace deltaseg;

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

// one settable config key: the flag that overrides it plus a string parser
struct ConfigKey {
    std::string flag;
    std::function<void(const std::string&)> apply;
};

void apply_config_file(const std::string& path, CLI::App* cmd, const std::map<std::string, ConfigKey>& keys) {
    if (path.empty()) return;
    for (const auto& [key, val] : read_config_file(path)) {
        auto it = keys.find(key);
        if (it == keys.end()) throw std::runtime_error("config file key '" + key + "' is not recognized");
        const CLI::Option* opt = cmd->get_option_no_throw(it->second.flag);
        if (opt && opt->count() > 0) continue;  // an explicit flag wins over the file
        it->second.apply(val);
    }
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("expected a boolean, got '" + v + "'");
}

struct CommonModelFlags {
    std::string variant = "full";
    int classes = 7;
    int input_size = 256;
    double width_mult = 1.0;
    std::uint64_t seed = 0;

    ModelConfig to_model_config() const {
        ModelConfig mc;
        mc.variant = parse_variant(variant);
        mc.num_classes = classes;
        mc.input_h = mc.input_w = input_size;
        mc.width_multiplier = width_mult;
        mc.seed = seed;
        return mc;
    }
};

void add_model_flags(CLI::App* cmd, CommonModelFlags& mf) {
    cmd->add_option("--variant", mf.variant, "model variant: v1, v2 or full")->check(CLI::IsMember({"v1", "v2", "full"}));
    cmd->add_option("--classes", mf.classes, "number of classes including background");
    cmd->add_option("--input-size", mf.input_size, "square input resolution");
    cmd->add_option("--width-mult", mf.width_mult, "channel width multiplier");
    cmd->add_option("--seed", mf.seed, "rng seed");
}

constexpr double kParamTargets[3] = {1.96e6, 5.44e6, 7.14e6};  // v1, v2, full

int cmd_params(const CommonModelFlags& mf) {
    ModelConfig mc = mf.to_model_config();
    mc.input_h = mc.input_w = 256;  // parameters do not depend on resolution
    DeltaSegModel model(mc);
    auto pc = model.count_params();
    std::printf("variant %s, %d classes, width x%.3g\n", variant_name(mc.variant).c_str(), mc.num_classes,
                mc.width_multiplier);
    for (const auto& [mod, n] : pc.by_module) std::printf("  %-16s %12lld\n", mod.c_str(), static_cast<long long>(n));
    std::printf("  %-16s %12lld\n", "total", static_cast<long long>(pc.total));

    const bool default_widths = mc.width_multiplier == 1.0 && mc.encoder_widths == std::array<int, 5>{64, 128, 256, 256, 256};
    if (!default_widths) return 0;
    const double target = kParamTargets[static_cast<int>(mc.variant)];
    const double dev = (pc.total - target) / target;
    const bool ok = std::abs(dev) <= 0.10;
    std::printf("reference total %.2fM, deviation %+.2f%% -> %s\n", target / 1e6, dev * 100.0, ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

int cmd_gradcheck(double tol, std::uint64_t seed) {
    auto entries = run_module_gradient_suite(tol, seed);
    entries.push_back(run_model_gradient_check(std::max(tol, 1e-3), seed));
    bool all = true;
    for (const auto& e : entries) {
        std::printf("%-48s max rel err %.3e  %s\n", e.name.c_str(), e.max_rel_error, e.pass ? "PASS" : "FAIL");
        all = all && e.pass;
    }
    std::printf("%s\n", all ? "gradient suite: all checks passed" : "gradient suite: FAILURES present");
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DeltaSeg segmentation toolkit"};
    app.require_subcommand(0, 1);

    // train
    auto* t = app.add_subcommand("train", "train a model on a dataset root");
    CommonModelFlags t_mf;
    RunConfig rc;
    std::string t_config;
    bool t_no_augment = false, t_quiet = false;
    t->add_option("--config", t_config, "key = value config file; command-line flags override it");
    t->add_option("--data", rc.data_root, "dataset root directory");
    t->add_option("--out", rc.out_dir, "output directory for logs and checkpoints");
    t->add_option("--epochs", rc.epochs, "training epochs");
    t->add_option("--batch-size", rc.batch_size, "batch size");
    t->add_option("--lr", rc.lr0, "initial learning rate");
    t->add_option("--eta-min", rc.eta_min, "cosine annealing floor");
    t->add_option("--weight-decay", rc.weight_decay, "AdamW weight decay");
    t->add_option("--eval-interval", rc.eval_interval, "epochs between validation passes");
    t->add_option("--class-weights", rc.class_weight_mode, "auto or uniform")
        ->check(CLI::IsMember({"auto", "uniform"}));
    t->add_flag("--no-augment", t_no_augment, "disable training augmentation");
    t->add_flag("--quiet", t_quiet, "suppress per-step stdout lines");
    add_model_flags(t, t_mf);

    // eval
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string e_ckpt, e_data, e_split = "val", e_csv;
    e->add_option("--checkpoint", e_ckpt, "checkpoint path")->required();
    e->add_option("--data", e_data, "dataset root directory")->required();
    e->add_option("--split", e_split, "dataset split (train/val/test)");
    e->add_option("--csv", e_csv, "also write the metric table to this CSV file");

    // predict
    auto* p = app.add_subcommand("predict", "segment images with a checkpoint");
    std::string p_ckpt, p_out, p_palette;
    std::vector<std::string> p_images;
    p->add_option("--checkpoint", p_ckpt, "checkpoint path")->required();
    p->add_option("--out", p_out, "output directory")->required();
    p->add_option("--palette", p_palette, "palette sidecar for colourization");
    p->add_option("images", p_images, "input image paths")->required();

    // gradcheck
    auto* g = app.add_subcommand("gradcheck", "run the finite-difference gradient suites");
    double g_tol = 1e-4;
    std::uint64_t g_seed = 0;
    g->add_option("--tol", g_tol, "relative error tolerance for module checks");
    g->add_option("--seed", g_seed, "rng seed");

    // params
    auto* pa = app.add_subcommand("params", "print the parameter count breakdown");
    CommonModelFlags pa_mf;
    add_model_flags(pa, pa_mf);

    // synth
    auto* s = app.add_subcommand("synth", "generate a synthetic defect dataset");
    CommonModelFlags s_mf;
    s_mf.classes = 4;
    s_mf.input_size = 64;
    std::string s_out;
    int s_count = 8, s_val = 2, s_test = 2;
    s->add_option("--out", s_out, "dataset root to create")->required();
    s->add_option("--count", s_count, "training samples");
    s->add_option("--val-count", s_val, "validation samples");
    s->add_option("--test-count", s_test, "test samples");
    add_model_flags(s, s_mf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);  // nonzero, prints usage
    }

    if (app.get_subcommands().empty()) {
        std::cout << app.help() << std::flush;
        return 2;
    }

    try {
        if (t->parsed()) {
            const std::map<std::string, ConfigKey> keys = {
                {"data", {"--data", [&](const std::string& v) { rc.data_root = v; }}},
                {"out", {"--out", [&](const std::string& v) { rc.out_dir = v; }}},
                {"epochs", {"--epochs", [&](const std::string& v) { rc.epochs = std::stoi(v); }}},
                {"batch-size", {"--batch-size", [&](const std::string& v) { rc.batch_size = std::stoi(v); }}},
                {"lr", {"--lr", [&](const std::string& v) { rc.lr0 = std::stod(v); }}},
                {"eta-min", {"--eta-min", [&](const std::string& v) { rc.eta_min = std::stod(v); }}},
                {"weight-decay", {"--weight-decay", [&](const std::string& v) { rc.weight_decay = std::stod(v); }}},
                {"eval-interval", {"--eval-interval", [&](const std::string& v) { rc.eval_interval = std::stoi(v); }}},
                {"class-weights", {"--class-weights", [&](const std::string& v) { rc.class_weight_mode = v; }}},
                {"augment", {"--no-augment", [&](const std::string& v) { t_no_augment = !parse_bool(v); }}},
                {"variant", {"--variant", [&](const std::string& v) { t_mf.variant = v; }}},
                {"classes", {"--classes", [&](const std::string& v) { t_mf.classes = std::stoi(v); }}},
                {"input-size", {"--input-size", [&](const std::string& v) { t_mf.input_size = std::stoi(v); }}},
                {"width-mult", {"--width-mult", [&](const std::string& v) { t_mf.width_mult = std::stod(v); }}},
                {"seed", {"--seed", [&](const std::string& v) { t_mf.seed = std::stoull(v); }}},
            };
            apply_config_file(t_config, t, keys);
            rc.model = t_mf.to_model_config();
            rc.seed = t_mf.seed;
            rc.augment = !t_no_augment;
            auto res = train(rc, t_quiet);
            std::cout << "final checkpoint: " << res.last_checkpoint << "\n";
            if (!res.best_checkpoint.empty()) std::cout << "best checkpoint: " << res.best_checkpoint << "\n";
            return 0;
        }
        if (e->parsed()) {
            auto rep = evaluate_checkpoint(e_ckpt, e_data, e_split);
            std::cout << rep.to_pretty();
            if (!e_csv.empty()) {
                std::ofstream f(e_csv);
                f << rep.to_csv();
            }
            return 0;
        }
        if (p->parsed()) return predict(p_ckpt, p_images, p_out, p_palette);
        if (g->parsed()) return cmd_gradcheck(g_tol, g_seed);
        if (pa->parsed()) return cmd_params(pa_mf);
        if (s->parsed()) {
            write_synthetic_dataset(s_out, s_count, s_val, s_test, s_mf.classes, s_mf.input_size, s_mf.seed);
            std::cout << "wrote synthetic dataset to " << s_out << "\n";
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
