#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "deltaseg/network.hpp"
#include "oracles.hpp"

using namespace deltaseg;

namespace {

ModelConfig small_cfg(Variant v = Variant::Full, int classes = 3, int size = 32, double wm = 0.25,
                      std::uint64_t seed = 0) {
    ModelConfig c;
    c.variant = v;
    c.num_classes = classes;
    c.input_h = c.input_w = size;
    c.width_multiplier = wm;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("variant parsing") {
    CHECK(parse_variant("full") == Variant::Full);
    CHECK(parse_variant("V1") == Variant::V1);
    CHECK(parse_variant("v2") == Variant::V2);
    CHECK_THROWS_AS(parse_variant("huge"), std::invalid_argument);
}

TEST_CASE("config validation") {
    ModelConfig c;
    c.input_h = 30;  // not divisible by 4
    c.input_w = 32;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.input_h = 32;
    c.num_classes = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("parameter counts sit inside the reference bands and order by variant") {
    const double targets[3] = {1.96e6, 5.44e6, 7.14e6};
    std::int64_t totals[3];
    for (Variant v : {Variant::V1, Variant::V2, Variant::Full}) {
        ModelConfig c;
        c.variant = v;
        c.num_classes = 7;
        c.input_h = c.input_w = 256;
        DeltaSegModel m(c);
        auto pc = m.count_params();
        totals[static_cast<int>(v)] = pc.total;
        const double dev = std::abs(pc.total - targets[static_cast<int>(v)]) / targets[static_cast<int>(v)];
        INFO(variant_name(v) << " total " << pc.total);
        CHECK(dev <= 0.10);
        // breakdown sums to the total
        std::int64_t sum = 0;
        for (const auto& [mod, n] : pc.by_module) sum += n;
        CHECK(sum == pc.total);
    }
    CHECK(totals[0] < totals[1]);
    CHECK(totals[1] < totals[2]);
}

TEST_CASE("depthwise-plus-pointwise parameter arithmetic for one biased pair") {
    std::mt19937_64 rng(1);
    ConvSpec dw;
    dw.in_channels = dw.out_channels = 64;
    dw.kernel = 3;
    dw.padding = 1;
    dw.groups = 64;
    Conv2dLayerT<float> d(dw, true, rng);
    ConvSpec pw;
    pw.in_channels = pw.out_channels = 64;
    pw.kernel = 1;
    Conv2dLayerT<float> p(pw, true, rng);
    CHECK(d.param_count() + p.param_count() == 3 * 3 * 64 + 64 + 64 * 64 + 64);  // 4800
}

TEST_CASE("encoder stage ladder") {
    SUBCASE("128 input") {
        ModelConfig c;
        c.num_classes = 9;
        c.input_h = c.input_w = 128;
        DeltaSegModel m(c);
        auto x = Tensor::full({1, 3, 128, 128}, 0.5f);
        auto f = m.encoder_forward(x);
        REQUIRE(f.size() == 5);
        CHECK(f[0]->shape == std::vector<int>{1, 64, 128, 128});
        CHECK(f[1]->shape == std::vector<int>{1, 128, 64, 64});
        CHECK(f[2]->shape == std::vector<int>{1, 256, 32, 32});
        CHECK(f[3]->shape == std::vector<int>{1, 256, 32, 32});
        CHECK(f[4]->shape == std::vector<int>{1, 256, 32, 32});
    }
    SUBCASE("256 input halves the ladder one step later") {
        ModelConfig c;
        c.num_classes = 7;
        c.input_h = c.input_w = 256;
        DeltaSegModel m(c);
        auto x = Tensor::full({1, 3, 256, 256}, 0.5f);
        auto f = m.encoder_forward(x);
        CHECK(f[0]->dim(2) == 256);
        CHECK(f[1]->dim(2) == 128);
        CHECK(f[2]->dim(2) == 64);
        CHECK(f[3]->dim(2) == 64);
        CHECK(f[4]->dim(2) == 64);
    }
    SUBCASE("zero input stays finite through the normalization guards") {
        DeltaSegModel m(small_cfg());
        auto x = Tensor::create({1, 3, 32, 32});
        auto f = m.encoder_forward(x);
        for (const auto& t : f)
            for (float v : t->data) CHECK(std::isfinite(v));
    }
    SUBCASE("size mismatch is rejected") {
        DeltaSegModel m(small_cfg());
        CHECK_THROWS_AS(m.encoder_forward(Tensor::full({1, 3, 64, 64}, 0.1f)), std::invalid_argument);
    }
}

TEST_CASE("aspp keeps the bottleneck geometry and is deterministic in eval mode") {
    DeltaSegModel m(small_cfg(Variant::Full, 3, 32, 1.0));  // full width: 256 channels
    m.set_training(false);
    std::mt19937_64 rng(3);
    auto f5 = oracle::randn<float>({1, 256, 8, 8}, rng);
    auto b1 = m.aspp_forward(f5);
    CHECK(b1->shape == std::vector<int>{1, 256, 8, 8});
    auto b2 = m.aspp_forward(f5);
    CHECK(b1->data == b2->data);  // dropout disabled
}

TEST_CASE("aspp dropout makes train-mode forwards differ") {
    DeltaSegModel m(small_cfg(Variant::Full, 3, 32, 0.25, 5));
    m.set_training(true);
    std::mt19937_64 rng(4);
    auto f5 = oracle::randn<float>({2, 64, 8, 8}, rng, 0.5);
    auto a = m.aspp_forward(f5);
    auto b = m.aspp_forward(f5);
    CHECK(a->data != b->data);
}

TEST_CASE("full forward produces logits at the input resolution") {
    SUBCASE("9-class 128 configuration") {
        ModelConfig c;
        c.num_classes = 9;
        c.input_h = c.input_w = 128;
        c.width_multiplier = 0.25;  // keep runtime small; shapes are width-independent
        DeltaSegModel m(c);
        auto out = m.forward(Tensor::full({1, 3, 128, 128}, 0.3f));
        CHECK(out.primary->shape == std::vector<int>{1, 9, 128, 128});
        CHECK(out.aux.empty());  // eval mode by default
    }
    SUBCASE("7-class 256 configuration") {
        ModelConfig c;
        c.num_classes = 7;
        c.input_h = c.input_w = 256;
        c.width_multiplier = 0.25;
        DeltaSegModel m(c);
        auto out = m.forward(Tensor::full({1, 3, 256, 256}, 0.3f));
        CHECK(out.primary->shape == std::vector<int>{1, 7, 256, 256});
    }
    SUBCASE("train mode exposes four heads at native resolutions") {
        DeltaSegModel m(small_cfg(Variant::Full, 3, 32, 0.25));
        m.set_training(true);
        auto out = m.forward(Tensor::full({2, 3, 32, 32}, 0.3f));
        REQUIRE(out.aux.size() == 3);
        CHECK(out.primary->shape == std::vector<int>{2, 3, 32, 32});
        CHECK(out.aux[0]->shape == std::vector<int>{2, 3, 16, 16});  // dec2
        CHECK(out.aux[1]->shape == std::vector<int>{2, 3, 8, 8});    // dec3
        CHECK(out.aux[2]->shape == std::vector<int>{2, 3, 8, 8});    // dec4
    }
}

TEST_CASE("every variant builds, runs and stays finite across seeds") {
    for (Variant v : {Variant::V1, Variant::V2, Variant::Full}) {
        DeltaSegModel m(small_cfg(v, 4, 32, 0.25, 11));
        std::mt19937_64 rng(static_cast<std::uint64_t>(7 + static_cast<int>(v)));
        for (int s = 0; s < 4; ++s) {
            auto x = oracle::randn<float>({1, 3, 32, 32}, rng, 0.5);
            auto out = m.forward(x);
            for (float vv : out.primary->data) CHECK(std::isfinite(vv));
        }
    }
}

TEST_CASE("finite logits across one hundred random seeds") {
    DeltaSegModel m(small_cfg(Variant::Full, 3, 32, 0.25, 21));
    std::mt19937_64 rng(99);
    int bad = 0;
    for (int s = 0; s < 100; ++s) {
        auto x = oracle::randn<float>({1, 3, 32, 32}, rng, 1.0);
        auto out = m.forward(x);
        for (float v : out.primary->data)
            if (!std::isfinite(v)) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("eval forwards are bitwise deterministic") {
    DeltaSegModel m(small_cfg(Variant::Full, 4, 32, 0.5, 13));
    m.set_training(false);
    std::mt19937_64 rng(5);
    auto x = oracle::randn<float>({2, 3, 32, 32}, rng, 0.5);
    auto a = m.forward(x);
    auto b = m.forward(x);
    CHECK(a.primary->data == b.primary->data);
}

TEST_CASE("shape contract holds across random configurations") {
    std::mt19937_64 rng(17);
    const int sizes[] = {32, 64};
    const double wms[] = {0.25, 0.5};
    for (int t = 0; t < 4; ++t) {
        const int classes = 2 + static_cast<int>(rng() % 8);
        const int size = sizes[rng() % 2];
        const double wm = wms[rng() % 2];
        const Variant v = static_cast<Variant>(rng() % 3);
        DeltaSegModel m(small_cfg(v, classes, size, wm, rng()));
        const int n = 1 + static_cast<int>(rng() % 2);
        auto out = m.forward(Tensor::full({n, 3, size, size}, 0.4f));
        CHECK(out.primary->shape == std::vector<int>{n, classes, size, size});
    }
}

TEST_CASE("decoder rejects missing inputs") {
    DeltaSegModel m(small_cfg());
    auto x = Tensor::full({1, 3, 32, 32}, 0.2f);
    auto skips = m.encoder_forward(x);
    auto b = m.aspp_forward(skips[4]);
    auto broken = skips;
    broken[2] = nullptr;
    CHECK_THROWS_WITH_AS(m.decoder_forward(b, broken), doctest::Contains("missing skip"), std::invalid_argument);
    CHECK_THROWS_AS(m.decoder_forward(nullptr, skips), std::invalid_argument);
}

TEST_CASE("width multiplier scales every stage and the model still runs") {
    DeltaSegModel m(small_cfg(Variant::Full, 3, 32, 0.25));
    auto full = DeltaSegModel(small_cfg(Variant::Full, 3, 32, 1.0)).count_params().total;
    auto quarter = m.count_params().total;
    CHECK(quarter < full / 8);  // parameters scale roughly quadratically in width
    auto out = m.forward(Tensor::full({1, 3, 32, 32}, 0.5f));
    CHECK(out.primary->shape == std::vector<int>{1, 3, 32, 32});
}

TEST_CASE("checkpoint round-trip reproduces eval outputs bitwise") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "deltaseg_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.ckpt").string();

    DeltaSegModel m(small_cfg(Variant::Full, 4, 32, 0.25, 31));
    m.set_training(false);
    std::mt19937_64 rng(7);
    auto x = oracle::randn<float>({1, 3, 32, 32}, rng, 0.5);
    auto before = m.forward(x);
    save_checkpoint(m, path);

    auto loaded = load_checkpoint(path);
    loaded->set_training(false);
    CHECK(loaded->config().num_classes == 4);
    auto after = loaded->forward(x);
    CHECK(before.primary->data == after.primary->data);

    SUBCASE("a truncated or foreign file is rejected") {
        const std::string bad = (dir / "bad.ckpt").string();
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("not a checkpoint", f);
        std::fclose(f);
        CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    }
}

TEST_CASE("parameter paths are unique and follow the module hierarchy") {
    DeltaSegModel m(small_cfg(Variant::Full, 4, 32, 0.25));
    auto params = m.params();
    std::set<std::string> names;
    for (const auto& p : params) {
        CHECK(names.insert(p.path).second);
        CHECK((p.tensor != nullptr) != (p.buffer != nullptr));
    }
    auto has = [&](const std::string& n) { return names.count(n) > 0; };
    CHECK(has("encoder.stage3.dsc2.pointwise.weight"));
    CHECK(has("encoder.stage1.se1.w1.bias"));
    CHECK(has("aspp.project.conv.weight"));
    CHECK(has("bottleneck_ca.compress.weight"));
    CHECK(has("skip4.delta.dir1.weight"));
    CHECK(has("skip1.gate.psi.bias"));
    CHECK(has("decoder.dec1.ca2.expand_w.weight"));
    CHECK(has("heads.head4.weight"));
    CHECK(has("encoder.stage2.dsc1.bn_pw.running_mean"));
}
