#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "deltaseg/metrics.hpp"

using namespace deltaseg;

namespace {

LabelMap grid_2x2(std::vector<std::int32_t> v) {
    LabelMap m(1, 2, 2);
    m.v = std::move(v);
    return m;
}

// brute-force IoU/Dice on pixel index sets, independent of the confusion path
struct SetScores {
    std::optional<double> iou, dice;
};

SetScores set_scores(const LabelMap& pred, const LabelMap& target, int cls) {
    std::set<std::int64_t> p, t;
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        if (pred.v[static_cast<std::size_t>(i)] == cls) p.insert(i);
        if (target.v[static_cast<std::size_t>(i)] == cls) t.insert(i);
    }
    if (p.empty() && t.empty()) return {};
    std::int64_t inter = 0;
    for (auto i : p) inter += t.count(i);
    const std::int64_t uni = static_cast<std::int64_t>(p.size() + t.size()) - inter;
    SetScores s;
    s.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    s.dice = static_cast<double>(2 * inter) / static_cast<double>(p.size() + t.size());
    return s;
}

}  // namespace

TEST_CASE("perfect prediction scores one on every present class") {
    ConfusionAccumulator acc(3);
    LabelMap t = grid_2x2({0, 1, 2, 1});
    auto rep = accumulate_and_score(acc, t, t);
    for (const auto& s : rep.per_class) {
        REQUIRE(s.iou.has_value());
        CHECK(*s.iou == 1.0);
        CHECK(*s.dice == 1.0);
    }
    REQUIRE(rep.defect_miou.has_value());
    CHECK(*rep.defect_miou == 1.0);
    CHECK(rep.pixel_accuracy == 1.0);
}

TEST_CASE("the worked 2x2 example gives defect mIoU 2/3") {
    ConfusionAccumulator acc(2);
    LabelMap target = grid_2x2({0, 1, 1, 1});
    LabelMap pred = grid_2x2({0, 1, 0, 1});
    auto rep = accumulate_and_score(acc, pred, target);
    REQUIRE(rep.per_class[1].iou.has_value());
    CHECK(*rep.per_class[1].iou == doctest::Approx(2.0 / 3.0));
    CHECK(*rep.defect_miou == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("disjoint prediction and target give zero IoU when both are present") {
    ConfusionAccumulator acc(2);
    LabelMap target = grid_2x2({1, 1, 0, 0});
    LabelMap pred = grid_2x2({0, 0, 1, 1});
    auto rep = accumulate_and_score(acc, pred, target);
    CHECK(*rep.per_class[1].iou == 0.0);
    CHECK(*rep.defect_miou == 0.0);
}

TEST_CASE("classes absent from both sides are excluded, not scored") {
    ConfusionAccumulator acc(4);
    LabelMap target = grid_2x2({0, 1, 1, 0});
    LabelMap pred = grid_2x2({0, 1, 0, 0});
    auto rep = accumulate_and_score(acc, pred, target);
    CHECK_FALSE(rep.per_class[2].iou.has_value());
    CHECK_FALSE(rep.per_class[3].iou.has_value());
    // the mean runs over class 1 only
    CHECK(*rep.defect_miou == doctest::Approx(0.5));
}

TEST_CASE("background-only data leaves the defect mean undefined") {
    ConfusionAccumulator acc(3);
    LabelMap t = grid_2x2({0, 0, 0, 0});
    auto rep = accumulate_and_score(acc, t, t);
    CHECK_FALSE(rep.defect_miou.has_value());
    CHECK_FALSE(rep.mean_f1.has_value());
    CHECK(rep.to_csv().find("undefined") != std::string::npos);
    CHECK(rep.to_pretty().find("n/a") != std::string::npos);
}

TEST_CASE("confusion-matrix scores equal brute-force set computations on 1000 random grids") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const int C = 2 + static_cast<int>(rng() % 4);
        LabelMap pred(1, 8, 8), target(1, 8, 8);
        std::uniform_int_distribution<int> cls(0, C - 1);
        for (auto& v : pred.v) v = cls(rng);
        for (auto& v : target.v) v = cls(rng);

        ConfusionAccumulator acc(C);
        acc.add(pred, target);
        auto rep = score(acc);
        for (int c = 0; c < C; ++c) {
            auto ref = set_scores(pred, target, c);
            REQUIRE(rep.per_class[static_cast<std::size_t>(c)].iou.has_value() == ref.iou.has_value());
            if (ref.iou) {
                // both sides compute exact integer ratios
                CHECK(*rep.per_class[static_cast<std::size_t>(c)].iou == *ref.iou);
                CHECK(*rep.per_class[static_cast<std::size_t>(c)].dice == *ref.dice);
            }
        }
    }
}

TEST_CASE("F1 equals 2 IoU / (1 + IoU) pointwise and dice stays in [0,1]") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 2 + static_cast<int>(rng() % 5);
        LabelMap pred(1, 8, 8), target(1, 8, 8);
        std::uniform_int_distribution<int> cls(0, C - 1);
        for (auto& v : pred.v) v = cls(rng);
        for (auto& v : target.v) v = cls(rng);
        ConfusionAccumulator acc(C);
        acc.add(pred, target);
        auto rep = score(acc);
        for (const auto& s : rep.per_class) {
            if (!s.iou) continue;
            CHECK(*s.dice >= 0.0);
            CHECK(*s.dice <= 1.0);
            CHECK(*s.dice == doctest::Approx(2.0 * *s.iou / (1.0 + *s.iou)).epsilon(1e-12));
        }
    }
}

TEST_CASE("independently filled accumulators merge to the jointly filled one") {
    std::mt19937_64 rng(9);
    const int C = 4;
    LabelMap p1(1, 8, 8), t1(1, 8, 8), p2(1, 8, 8), t2(1, 8, 8);
    std::uniform_int_distribution<int> cls(0, C - 1);
    for (auto* m : {&p1, &t1, &p2, &t2})
        for (auto& v : m->v) v = cls(rng);

    ConfusionAccumulator joint(C), a(C), b(C);
    joint.add(p1, t1);
    joint.add(p2, t2);
    a.add(p1, t1);
    b.add(p2, t2);
    a.merge(b);
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) CHECK(a.count(i, j) == joint.count(i, j));

    // commutativity
    ConfusionAccumulator a2(C), b2(C);
    a2.add(p1, t1);
    b2.add(p2, t2);
    b2.merge(a2);
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j) CHECK(b2.count(i, j) == a.count(i, j));
}

TEST_CASE("shape mismatches and bad labels are rejected") {
    ConfusionAccumulator acc(2);
    LabelMap a(1, 2, 2), b(1, 3, 3);
    CHECK_THROWS_AS(acc.add(a, b), std::invalid_argument);
    LabelMap bad = grid_2x2({0, 1, 2, 0});  // label 2 with C=2
    CHECK_THROWS_AS(acc.add(bad, grid_2x2({0, 0, 0, 0})), std::invalid_argument);
}

TEST_CASE("argmax over the class axis picks the largest logit") {
    auto logits = Tensor::from_data({1, 3, 1, 2}, {0.1f, 5.0f, 2.0f, -1.0f, 0.3f, 4.9f});
    LabelMap lab = argmax_classes(logits);
    CHECK(lab.at(0, 0, 0) == 1);  // logits (0.1, 2.0, 0.3)
    CHECK(lab.at(0, 0, 1) == 0);  // logits (5.0, -1.0, 4.9)
}

TEST_CASE("csv table lists one row per class plus a summary") {
    ConfusionAccumulator acc(2);
    LabelMap t = grid_2x2({0, 1, 1, 0});
    auto rep = accumulate_and_score(acc, t, t, {"background", "crack"});
    const std::string csv = rep.to_csv();
    CHECK(csv.find("class,iou,dice,pixels") == 0);
    CHECK(csv.find("background,") != std::string::npos);
    CHECK(csv.find("crack,") != std::string::npos);
    CHECK(csv.find("defect_mIoU,") != std::string::npos);
}
