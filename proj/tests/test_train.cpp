#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "deltaseg/train.hpp"

using namespace deltaseg;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "deltaseg_train_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

ParamListT<float> single_param(TensorPtr t, const std::string& name = "p") {
    return {{name, t, nullptr, true}};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

RunConfig tiny_run(const std::string& data_root, const std::string& out_dir, std::uint64_t seed = 1) {
    RunConfig rc;
    rc.data_root = data_root;
    rc.out_dir = out_dir;
    rc.epochs = 2;
    rc.batch_size = 4;
    rc.seed = seed;
    rc.augment = false;
    rc.eval_interval = 1;
    rc.model.num_classes = 3;
    rc.model.input_h = rc.model.input_w = 32;
    rc.model.width_multiplier = 0.25;
    rc.model.seed = seed;
    return rc;
}

}  // namespace

TEST_CASE("cosine schedule endpoints, midpoint and monotonicity") {
    CHECK(cosine_lr(0, 100, 1e-3, 0.0) == doctest::Approx(1e-3));
    CHECK(cosine_lr(100, 100, 1e-3, 0.0) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 1e-3, 0.0) == doctest::Approx(5e-4));
    CHECK(cosine_lr(100, 100, 1e-3, 1e-5) == doctest::Approx(1e-5));
    double prev = cosine_lr(0, 1000, 1e-3, 1e-6);
    for (int s = 1; s <= 1000; ++s) {
        const double cur = cosine_lr(s, 1000, 1e-3, 1e-6);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
    CHECK_THROWS_AS(cosine_lr(-1, 10, 1e-3, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(11, 10, 1e-3, 0.0), std::invalid_argument);
}

TEST_CASE("adamw single-step behaviour") {
    SUBCASE("zero gradient and zero decay leave parameters untouched") {
        auto p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
        p->ensure_grad();
        AdamW opt(single_param(p), {});
        opt.step(1e-3);
        CHECK(p->data == std::vector<float>{1.0f, -2.0f, 0.5f});
    }
    SUBCASE("first step with unit gradient moves by lr/(1+eps)") {
        auto p = Tensor::from_data({1}, {0.0f}, true);
        p->ensure_grad();
        p->grad[0] = 1.0f;
        AdamW opt(single_param(p), {});
        opt.step(1e-3);
        // bias corrections cancel for a constant gradient: update = lr * 1/(1 + eps)
        CHECK(p->data[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-9));
    }
    SUBCASE("decay-only step scales parameters by exactly (1 - lr wd)") {
        auto p = Tensor::from_data({2}, {4.0f, -8.0f}, true);
        p->ensure_grad();
        AdamWConfig cfg;
        cfg.weight_decay = 1e-5;
        AdamW opt(single_param(p), cfg);
        opt.step(1e-3);
        CHECK(p->data[0] == 4.0f * (1.0f - static_cast<float>(1e-3 * 1e-5)));
        CHECK(p->data[1] == -8.0f * (1.0f - static_cast<float>(1e-3 * 1e-5)));
    }
    SUBCASE("a non-finite gradient aborts naming the parameter") {
        auto p = Tensor::from_data({1}, {0.0f}, true);
        p->ensure_grad();
        p->grad[0] = std::numeric_limits<float>::quiet_NaN();
        AdamW opt(single_param(p, "encoder.stage1.dsc1.depthwise.weight"), {});
        CHECK_THROWS_WITH_AS(opt.step(1e-3), doctest::Contains("encoder.stage1.dsc1.depthwise.weight"),
                             std::runtime_error);
    }
    SUBCASE("a missing gradient buffer aborts") {
        auto p = Tensor::from_data({1}, {0.0f}, true);
        AdamW opt(single_param(p), {});
        CHECK_THROWS_AS(opt.step(1e-3), std::runtime_error);
    }
}

TEST_CASE("adamw with zero decay follows a hand-rolled adam trajectory") {
    std::mt19937_64 rng(3);
    std::normal_distribution<float> g(0.0f, 1.0f);
    const int n = 5, steps = 25;
    auto p = Tensor::create({n}, true);
    for (auto& v : p->data) v = g(rng);
    std::vector<float> ref = p->data;
    std::vector<double> m(n, 0.0), v2(n, 0.0);

    AdamW opt(single_param(p), {});
    std::mt19937_64 grng(17);
    for (int s = 1; s <= steps; ++s) {
        p->ensure_grad();
        for (int i = 0; i < n; ++i) p->grad[static_cast<std::size_t>(i)] = g(grng);
        // reference Adam update with the same gradients
        const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        for (int i = 0; i < n; ++i) {
            const double gi = p->grad[static_cast<std::size_t>(i)];
            m[static_cast<std::size_t>(i)] = b1 * m[static_cast<std::size_t>(i)] + (1 - b1) * gi;
            v2[static_cast<std::size_t>(i)] = b2 * v2[static_cast<std::size_t>(i)] + (1 - b2) * gi * gi;
            const double mh = m[static_cast<std::size_t>(i)] / (1 - std::pow(b1, s));
            const double vh = v2[static_cast<std::size_t>(i)] / (1 - std::pow(b2, s));
            ref[static_cast<std::size_t>(i)] -= static_cast<float>(lr * mh / (std::sqrt(vh) + eps));
        }
        opt.step(1e-3);
        opt.zero_grad();
        for (int i = 0; i < n; ++i)
            CHECK(p->data[static_cast<std::size_t>(i)] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-5));
    }
}

TEST_CASE("training loop accounting and determinism") {
    const auto data = fresh_dir("loop_data");
    write_synthetic_dataset(data.string(), 10, 2, 0, 3, 32, 5);

    SUBCASE("one epoch of ten samples at batch four records three steps") {
        const auto out = fresh_dir("loop_steps");
        RunConfig rc = tiny_run(data.string(), out.string());
        rc.epochs = 1;
        auto res = train(rc, true);
        CHECK(res.steps.size() == 3);
        CHECK(res.epochs.size() == 1);
        CHECK(fs::exists(res.last_checkpoint));
        CHECK(fs::exists(res.best_checkpoint));
    }
    SUBCASE("identical seeds reproduce the loss log bitwise") {
        const auto out1 = fresh_dir("det1");
        const auto out2 = fresh_dir("det2");
        RunConfig rc = tiny_run(data.string(), out1.string(), 7);
        rc.augment = true;  // exercise the seeded augmentation path too
        auto r1 = train(rc, true);
        rc.out_dir = out2.string();
        auto r2 = train(rc, true);
        REQUIRE(r1.steps.size() == r2.steps.size());
        for (std::size_t i = 0; i < r1.steps.size(); ++i) {
            CHECK(r1.steps[i].total == r2.steps[i].total);
            CHECK(r1.steps[i].ce == r2.steps[i].ce);
            CHECK(r1.steps[i].dice == r2.steps[i].dice);
            CHECK(r1.steps[i].focal == r2.steps[i].focal);
        }
        CHECK(slurp(out1 / "train_log.csv") == slurp(out2 / "train_log.csv"));
        CHECK(slurp(out1 / "val_log.csv") == slurp(out2 / "val_log.csv"));
    }
    SUBCASE("a different seed changes the trajectory") {
        const auto out1 = fresh_dir("seed1");
        const auto out2 = fresh_dir("seed2");
        auto r1 = train(tiny_run(data.string(), out1.string(), 7), true);
        auto r2 = train(tiny_run(data.string(), out2.string(), 8), true);
        CHECK(r1.steps[0].total != r2.steps[0].total);
    }
    SUBCASE("class weights land in the training log") {
        const auto out = fresh_dir("weights");
        auto res = train(tiny_run(data.string(), out.string()), true);
        CHECK(res.class_weights.size() == 3);
        CHECK(fs::exists(out / "class_weights.csv"));
    }
}

TEST_CASE("evaluation is repeatable and checkpoints survive the round trip") {
    const auto data = fresh_dir("eval_data");
    write_synthetic_dataset(data.string(), 6, 2, 2, 3, 32, 9);
    const auto out = fresh_dir("eval_run");
    RunConfig rc = tiny_run(data.string(), out.string(), 3);
    auto res = train(rc, true);

    auto rep1 = evaluate_checkpoint(res.last_checkpoint, data.string(), "val");
    auto rep2 = evaluate_checkpoint(res.last_checkpoint, data.string(), "val");
    CHECK(rep1.to_csv() == rep2.to_csv());

    // eval outputs equal those of the in-memory model that wrote the checkpoint
    auto model = load_checkpoint(res.last_checkpoint);
    auto [mf, samples] = load_dataset(data.string(), "val", 3, 32, 32);
    auto direct = evaluate_model(*model, samples, mf.class_names);
    CHECK(direct.to_csv() == rep1.to_csv());
}

TEST_CASE("evaluation refuses a dataset whose class list disagrees with the checkpoint") {
    const auto data = fresh_dir("mismatch_data");
    write_synthetic_dataset(data.string(), 4, 2, 0, 4, 32, 11);  // classes.txt lists 4
    const auto out = fresh_dir("mismatch_run");
    RunConfig rc = tiny_run(data.string(), out.string());  // model has 3 classes
    rc.model.num_classes = 3;
    // training itself fails on out-of-range labels, so build a 3-class model directly
    DeltaSegModel m(rc.model);
    const std::string ckpt = (out / "m.ckpt").string();
    save_checkpoint(m, ckpt);
    CHECK_THROWS_WITH_AS(evaluate_checkpoint(ckpt, data.string(), "train"), doctest::Contains("class-count"),
                         std::runtime_error);
}

TEST_CASE("predict writes an index mask and a palette colourization per input") {
    const auto data = fresh_dir("pred_data");
    write_synthetic_dataset(data.string(), 4, 1, 0, 3, 32, 13);
    const auto out = fresh_dir("pred_run");
    RunConfig rc = tiny_run(data.string(), out.string());
    rc.epochs = 1;
    auto res = train(rc, true);

    const auto pred_out = fresh_dir("pred_out");
    const std::string img = (data / "train" / "images" / "synth_train_0.png").string();
    const int code = predict(res.last_checkpoint, {img}, pred_out.string(), (data / "palette.txt").string());
    CHECK(code == 0);
    REQUIRE(fs::exists(pred_out / "synth_train_0_mask.png"));
    REQUIRE(fs::exists(pred_out / "synth_train_0_color.png"));

    auto mask = read_png((pred_out / "synth_train_0_mask.png").string());
    CHECK(mask.channels == 1);
    CHECK(mask.width == 32);
    for (auto v : mask.pixels) CHECK(v < 3);

    auto color = read_png((pred_out / "synth_train_0_color.png").string());
    auto pal = read_palette((data / "palette.txt").string());
    for (int y = 0; y < color.height; ++y)
        for (int x = 0; x < color.width; ++x) {
            bool in_palette = false;
            for (const auto& c : pal)
                in_palette = in_palette || (color.at(y, x, 0) == c[0] && color.at(y, x, 1) == c[1] &&
                                            color.at(y, x, 2) == c[2]);
            CHECK(in_palette);
        }

    SUBCASE("unreadable inputs are skipped with a nonzero exit") {
        const int bad = predict(res.last_checkpoint, {(data / "nope.png").string(), img}, pred_out.string());
        CHECK(bad != 0);
        // the valid image was still processed
        CHECK(fs::exists(pred_out / "synth_train_0_mask.png"));
    }
}

TEST_CASE("run config validation") {
    RunConfig rc;
    rc.epochs = 0;
    CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
    rc = RunConfig{};
    rc.lr0 = 0.0;
    CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
    rc = RunConfig{};
    rc.class_weight_mode = "magic";
    CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
}
