#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "deltaseg/loss.hpp"
#include "oracles.hpp"

using namespace deltaseg;

namespace {

LabelMap labels_2x2(std::vector<std::int32_t> v) {
    LabelMap m(1, 2, 2);
    m.v = std::move(v);
    return m;
}

}  // namespace

TEST_CASE("loss weight invariants") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.ce = 0.6;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.head_lambdas = {1.0, 1.0, 0.6, 0.4};
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("cross entropy") {
    SUBCASE("confident correct prediction drives the loss to zero") {
        auto logits = Tensor::create({1, 3, 2, 2});
        LabelMap t = labels_2x2({0, 1, 2, 1});
        for (int p = 0; p < 4; ++p) logits->data[static_cast<std::size_t>(t.v[static_cast<std::size_t>(p)] * 4 + p)] = 50.0f;
        auto l = ce_loss<float>(logits, t, {1, 1, 1});
        CHECK(l->item() < 1e-6f);
    }
    SUBCASE("uniform logits over four classes give ln 4") {
        auto logits = Tensor::full({1, 4, 2, 2}, 0.7f);
        LabelMap t = labels_2x2({0, 1, 2, 3});
        auto l = ce_loss<float>(logits, t, {1, 1, 1, 1});
        CHECK(l->item() == doctest::Approx(std::log(4.0)).epsilon(1e-5));
    }
    SUBCASE("class weights follow the per-pixel hand computation") {
        // 2 classes on a 2x2 grid with weights (2, 1)
        auto logits = TensorT<double>::from_data({1, 2, 2, 2}, {0.4, -1.0, 2.0, 0.3, -0.2, 1.5, 0.0, 0.9});
        LabelMap t = labels_2x2({0, 1, 1, 0});
        const std::vector<double> w = {2.0, 1.0};
        auto l = ce_loss<double>(logits, t, w);

        double num = 0.0, den = 0.0;
        for (int p = 0; p < 4; ++p) {
            const double a = logits->data[static_cast<std::size_t>(p)];
            const double b = logits->data[static_cast<std::size_t>(4 + p)];
            const double m = std::max(a, b);
            const double logz = m + std::log(std::exp(a - m) + std::exp(b - m));
            const int y = t.v[static_cast<std::size_t>(p)];
            const double logp = (y == 0 ? a : b) - logz;
            num += w[static_cast<std::size_t>(y)] * (-logp);
            den += w[static_cast<std::size_t>(y)];
        }
        CHECK(l->item() == doctest::Approx(num / den).epsilon(1e-12));
    }
    SUBCASE("an out-of-range label names its coordinate") {
        auto logits = Tensor::full({1, 2, 2, 2}, 0.0f);
        LabelMap t = labels_2x2({0, 1, 3, 0});
        CHECK_THROWS_WITH_AS(ce_loss<float>(logits, t, {1, 1}), doctest::Contains("(n=0,i=1,j=0)"),
                             std::invalid_argument);
    }
}

TEST_CASE("dice loss") {
    SUBCASE("exact one-hot prediction scores zero") {
        auto logits = Tensor::create({1, 3, 2, 2});
        LabelMap t = labels_2x2({0, 1, 2, 0});
        for (int p = 0; p < 4; ++p) logits->data[static_cast<std::size_t>(t.v[static_cast<std::size_t>(p)] * 4 + p)] = 60.0f;
        CHECK(dice_loss<float>(logits, t, 1.0f)->item() < 1e-6f);
    }
    SUBCASE("a class absent from prediction and target is not penalized") {
        // class 2 never appears; smoothing keeps its dice at 1
        auto logits = Tensor::create({1, 3, 2, 2});
        LabelMap t = labels_2x2({0, 1, 1, 0});
        for (int p = 0; p < 4; ++p) logits->data[static_cast<std::size_t>(t.v[static_cast<std::size_t>(p)] * 4 + p)] = 60.0f;
        CHECK(dice_loss<float>(logits, t, 1.0f)->item() < 1e-6f);
    }
    SUBCASE("uniform half probabilities match the summation formula") {
        // two classes, p = 0.5 everywhere, target = three of class 0, one of class 1
        auto logits = Tensor::create({1, 2, 2, 2});
        LabelMap t = labels_2x2({0, 0, 0, 1});
        auto l = dice_loss<float>(logits, t, 1.0f);
        // class 0: (2*0.5*3 + 1)/(2 + 3 + 1) = 4/6; class 1: (2*0.5*1 + 1)/(2 + 1 + 1) = 2/4
        const double expect = 1.0 - 0.5 * (4.0 / 6.0 + 2.0 / 4.0);
        CHECK(l->item() == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("focal loss") {
    std::mt19937_64 rng(3);
    SUBCASE("gamma zero reduces to unweighted cross entropy") {
        auto logits = oracle::randn<double>({2, 3, 4, 4}, rng);
        LabelMap t(2, 4, 4);
        std::uniform_int_distribution<int> cls(0, 2);
        for (auto& v : t.v) v = cls(rng);
        auto f = focal_loss<double>(logits, t, 0.0);
        auto ce = ce_loss<double>(logits, t, {1, 1, 1});
        CHECK(f->item() == doctest::Approx(ce->item()).epsilon(1e-10));
    }
    SUBCASE("half-confidence pixels contribute a quarter of ln 2") {
        // 2 classes with equal logits: p_y = 0.5, (1-p)^2 log p = 0.25 ln 2
        auto logits = Tensor::create({1, 2, 2, 2});
        LabelMap t = labels_2x2({0, 1, 0, 1});
        auto f = focal_loss<float>(logits, t, 2.0f);
        CHECK(f->item() == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-6));
    }
    SUBCASE("perfect prediction vanishes") {
        auto logits = Tensor::create({1, 2, 2, 2});
        LabelMap t = labels_2x2({0, 1, 1, 0});
        for (int p = 0; p < 4; ++p) logits->data[static_cast<std::size_t>(t.v[static_cast<std::size_t>(p)] * 4 + p)] = 40.0f;
        CHECK(focal_loss<float>(logits, t, 2.0f)->item() < 1e-8f);
    }
}

TEST_CASE("composite loss combines the three terms with the fixed weights") {
    std::mt19937_64 rng(5);
    auto logits = oracle::randn<double>({1, 3, 4, 4}, rng);
    LabelMap t(1, 4, 4);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& v : t.v) v = cls(rng);
    LossWeights w;
    const std::vector<double> cw = {1.0, 1.5, 0.7};
    auto rep = composite_loss<double>(logits, t, w, cw);
    CHECK(rep.total->item() == doctest::Approx(0.5 * rep.ce + 0.3 * rep.dice + 0.2 * rep.focal).epsilon(1e-12));
    CHECK(rep.ce >= 0.0);
    CHECK(rep.dice >= 0.0);
    CHECK(rep.focal >= 0.0);
    // the stated arithmetic: terms (1.0, 0.5, 0.2) combine to 0.69
    CHECK(0.5 * 1.0 + 0.3 * 0.5 + 0.2 * 0.2 == doctest::Approx(0.69));

    SUBCASE("perfect prediction is zero to within the smoothing residual") {
        auto sharp = Tensor::create({1, 3, 4, 4});
        for (int p = 0; p < 16; ++p)
            sharp->data[static_cast<std::size_t>(t.v[static_cast<std::size_t>(p)] * 16 + p)] = 60.0f;
        auto r = composite_loss<float>(sharp, t, w, {1, 1, 1});
        CHECK(r.total->item() < 1e-6f);
    }
}

TEST_CASE("deep supervision") {
    std::mt19937_64 rng(7);
    LossWeights w;
    const std::vector<double> cw = {1.0, 1.0, 1.0};
    LabelMap t(1, 4, 4);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& v : t.v) v = cls(rng);

    SUBCASE("four identical heads reduce to the single composite loss") {
        auto logits = oracle::randn<double>({1, 3, 4, 4}, rng);
        ModelOutputsT<double> mo;
        mo.primary = logits;
        mo.aux = {logits, logits, logits};  // same resolution: upsampling is the identity
        auto rep = deep_supervised_loss<double>(mo, t, w, cw);
        auto single = composite_loss<double>(logits, t, w, cw);
        CHECK(rep.total->item() == doctest::Approx(single.total->item()).epsilon(1e-9));
    }
    SUBCASE("total is the lambda-weighted mean of the reported per-head losses") {
        ModelOutputsT<double> mo;
        mo.primary = oracle::randn<double>({1, 3, 4, 4}, rng);
        mo.aux = {oracle::randn<double>({1, 3, 2, 2}, rng), oracle::randn<double>({1, 3, 2, 2}, rng),
                  oracle::randn<double>({1, 3, 2, 2}, rng)};
        auto rep = deep_supervised_loss<double>(mo, t, w, cw);
        double expect = 0.0;
        for (int k = 0; k < 4; ++k) expect += w.head_lambdas[static_cast<std::size_t>(k)] * rep.head_losses[static_cast<std::size_t>(k)];
        expect /= 2.8;
        CHECK(rep.total->item() == doctest::Approx(expect).epsilon(1e-9));
        // the worked example: per-head losses (1,1,1,0) average to 2.4/2.8
        CHECK((1.0 * 1.0 + 0.8 * 1.0 + 0.6 * 1.0 + 0.4 * 0.0) / 2.8 == doctest::Approx(0.857142857));
    }
    SUBCASE("head gradients scale with lambda_k / 2.8") {
        auto base = oracle::randn<double>({1, 3, 4, 4}, rng);
        std::vector<TensorPtrT<double>> heads;
        for (int k = 0; k < 4; ++k) heads.push_back(base->detach(true));
        ModelOutputsT<double> mo;
        mo.primary = heads[0];
        mo.aux = {heads[1], heads[2], heads[3]};
        auto rep = deep_supervised_loss<double>(mo, t, w, cw);
        backward(rep.total);
        for (int k = 1; k < 4; ++k) {
            const double ratio = w.head_lambdas[static_cast<std::size_t>(k)] / w.head_lambdas[0];
            for (std::size_t i = 0; i < heads[0]->grad.size(); ++i) {
                if (std::abs(heads[0]->grad[i]) < 1e-9) continue;
                CHECK(heads[static_cast<std::size_t>(k)]->grad[i] / heads[0]->grad[i] ==
                      doctest::Approx(ratio).epsilon(1e-4));
            }
        }
    }
    SUBCASE("permuting heads together with their lambdas leaves the total unchanged") {
        std::vector<TensorPtrT<double>> heads;
        for (int k = 0; k < 4; ++k) heads.push_back(oracle::randn<double>({1, 3, 4, 4}, rng));
        ModelOutputsT<double> a;
        a.primary = heads[0];
        a.aux = {heads[1], heads[2], heads[3]};
        auto ra = deep_supervised_loss<double>(a, t, w, cw);

        LossWeights wp = w;
        wp.head_lambdas = {0.6, 0.4, 1.0, 0.8};  // heads permuted below in the same way
        ModelOutputsT<double> b;
        b.primary = heads[2];
        b.aux = {heads[3], heads[0], heads[1]};
        auto rb = deep_supervised_loss<double>(b, t, wp, cw);
        CHECK(ra.total->item() == doctest::Approx(rb.total->item()).epsilon(1e-12));
    }
    SUBCASE("wrong head count is rejected") {
        ModelOutputsT<double> mo;
        mo.primary = oracle::randn<double>({1, 3, 4, 4}, rng);
        mo.aux = {oracle::randn<double>({1, 3, 2, 2}, rng)};
        CHECK_THROWS_WITH_AS(deep_supervised_loss<double>(mo, t, w, cw), doctest::Contains("4 heads"),
                             std::invalid_argument);
    }
}

TEST_CASE("losses are non-negative on random inputs") {
    std::mt19937_64 rng(11);
    LossWeights w;
    for (int trial = 0; trial < 20; ++trial) {
        const int C = 2 + static_cast<int>(rng() % 4);
        auto logits = oracle::randn<float>({1, C, 3, 3}, rng, 4.0);
        LabelMap t(1, 3, 3);
        std::uniform_int_distribution<int> cls(0, C - 1);
        for (auto& v : t.v) v = cls(rng);
        std::vector<float> cw(static_cast<std::size_t>(C), 1.0f);
        auto rep = composite_loss<float>(logits, t, w, cw);
        CHECK(rep.ce >= 0.0);
        CHECK(rep.dice >= 0.0);
        CHECK(rep.focal >= 0.0);
        CHECK(rep.total->item() >= 0.0f);
    }
}

TEST_CASE("composite and deep-supervised losses pass gradient checks") {
    std::mt19937_64 rng(13);
    LossWeights w;
    const std::vector<double> cw = {1.5, 0.8, 1.0};
    LabelMap t(1, 4, 4);
    std::uniform_int_distribution<int> cls(0, 2);
    for (auto& v : t.v) v = cls(rng);

    auto logits = oracle::randn<double>({1, 3, 4, 4}, rng, 1.0, true);
    auto rep = grad_check<double>(
        [&t, &w, &cw](const std::vector<TensorPtrT<double>>& in) { return composite_loss(in[0], t, w, cw).total; },
        {logits}, 1e-5, 1e-3);
    CHECK(rep.pass);

    auto a1 = oracle::randn<double>({1, 3, 2, 2}, rng, 1.0, true);
    auto a2 = oracle::randn<double>({1, 3, 2, 2}, rng, 1.0, true);
    auto a3 = oracle::randn<double>({1, 3, 2, 2}, rng, 1.0, true);
    auto rep2 = grad_check<double>(
        [&t, &w, &cw](const std::vector<TensorPtrT<double>>& in) {
            ModelOutputsT<double> mo;
            mo.primary = in[0];
            mo.aux = {in[1], in[2], in[3]};
            return deep_supervised_loss(mo, t, w, cw).total;
        },
        {logits, a1, a2, a3}, 1e-5, 1e-3);
    CHECK(rep2.pass);
}

TEST_CASE("inverse-frequency class weights") {
    SUBCASE("uniform frequencies give unit weights") {
        auto w = auto_class_weights({100, 100, 100, 100});
        for (double v : w) CHECK(v == doctest::Approx(1.0));
    }
    SUBCASE("a 90/10 split gives (0.556, 5.0)") {
        auto w = auto_class_weights({900, 100});
        CHECK(w[0] == doctest::Approx(1000.0 / (2 * 900.0)).epsilon(1e-9));
        CHECK(w[0] == doctest::Approx(0.556).epsilon(1e-3));
        CHECK(w[1] == doctest::Approx(5.0));
    }
    SUBCASE("zero-count classes clamp to the upper bound") {
        auto w = auto_class_weights({1000, 0});
        CHECK(w[1] == 50.0);
    }
    SUBCASE("extremely rare classes clamp at 50 and dominant ones at 0.1") {
        auto w = auto_class_weights({1000000, 1});
        CHECK(w[1] == 50.0);
        // one class holding nearly every pixel across 12 classes: 1000011/(12e6) < 0.1
        auto w2 = auto_class_weights({1000000, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1});
        CHECK(w2[0] == doctest::Approx(0.1).epsilon(1e-9));
    }
}
