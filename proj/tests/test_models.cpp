#include <doctest.h>

#include <cmath>
#include <random>

#include "ponwatch/models.hpp"

using namespace ponwatch;

namespace {

// tiny separable sequence task: class c puts a bump at position 3 + 4c
NetworkDataset toy_network_dataset(int per_class, int num_classes,
                                   std::size_t seq_len, std::uint64_t seed) {
    NetworkDataset ds;
    ds.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (int c = 0; c < num_classes; ++c) {
        for (int j = 0; j < per_class; ++j) {
            NetworkSample s;
            s.label = c;
            s.values.assign(seq_len, 0.1);
            std::size_t at = 3 + 4 * static_cast<std::size_t>(c);
            s.values[at] += 0.8;
            s.values[at + 1] += 0.4;
            for (auto& v : s.values) v += noise(rng);
            ds.records.push_back(std::move(s));
        }
    }
    split_dataset(ds, {0.6, 0.2, 0.2}, seed);
    return ds;
}

WindowDataset toy_window_dataset(int per_class, std::uint64_t seed) {
    WindowDataset ds;
    ds.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.02);
    std::uniform_int_distribution<int> where(2, 27);
    for (int c = 0; c < kNumEventClasses; ++c) {
        int arity = reflections_for_class(c);
        for (int j = 0; j < per_class; ++j) {
            WindowSample s;
            s.event_class = c;
            s.values.assign(kWindowLen, 0.1);
            std::vector<int> spots;
            while (static_cast<int>(spots.size()) < arity) {
                int at = where(rng);
                bool clash = false;
                for (int o : spots)
                    if (std::abs(o - at) < 5) clash = true;
                if (!clash) spots.push_back(at);
            }
            std::sort(spots.begin(), spots.end());
            for (int k = 0; k < arity; ++k) {
                bool faulty = (c == 5) || (c == 3) ||
                              (c == 1 && k == 0) || (c == 2 && k == 1);
                double h = faulty ? 0.25 : 0.8;
                s.values[static_cast<std::size_t>(spots[static_cast<std::size_t>(k)])] += h;
                s.positions[static_cast<std::size_t>(k)] =
                    static_cast<double>(spots[static_cast<std::size_t>(k)]) / kWindowLen;
                s.levels[static_cast<std::size_t>(k)] = h;
                s.target_mask[static_cast<std::size_t>(k)] = true;
            }
            for (auto& v : s.values) v += noise(rng);
            ds.records.push_back(std::move(s));
        }
    }
    split_dataset(ds, {0.6, 0.2, 0.2}, seed);
    return ds;
}

}  // namespace

TEST_CASE("classifier outputs valid probabilities and fixed shapes") {
    BranchClassifier m = BranchClassifier::init(1, {8, 6}, 4, 20);
    CHECK(m.num_classes() == 4);
    Mat x = Mat::Random(5, 20).cwiseAbs();
    Mat p = m.predict(x);
    CHECK(p.rows() == 5);
    CHECK(p.cols() == 4);
    for (Eigen::Index r = 0; r < 5; ++r) {
        CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(p.row(r).minCoeff() >= 0.0);
    }
    CHECK_THROWS_AS(m.predict(Mat::Zero(2, 21)), std::invalid_argument);
    CHECK_THROWS_AS(BranchClassifier::init(1, {}), std::invalid_argument);
}

TEST_CASE("init is deterministic under the seed") {
    BranchClassifier a = BranchClassifier::init(9, {8}, 3, 10);
    BranchClassifier b = BranchClassifier::init(9, {8}, 3, 10);
    BranchClassifier c = BranchClassifier::init(10, {8}, 3, 10);
    Vec fa, fb, fc;
    a.params().flatten(fa);
    b.params().flatten(fb);
    c.params().flatten(fc);
    CHECK(fa == fb);
    CHECK(fa != fc);
}

TEST_CASE("branch classifier learns a separable toy task") {
    NetworkDataset ds = toy_network_dataset(30, 3, 20, 5);
    BranchClassifier m = BranchClassifier::init(5, {12}, 3, 20);
    TrainConfig tc;
    tc.max_epochs = 150;
    tc.patience = 150;
    tc.batch_size = 16;
    tc.learning_rate = 8e-3;
    tc.seed = 5;
    TrainHistory hist = train_branch_classifier(m, ds, tc);
    REQUIRE(!hist.train_loss.empty());
    CHECK(hist.train_loss.back() < hist.train_loss.front());
    CHECK(hist.best_epoch >= 0);
    ConfusionMatrix cm = evaluate_classifier(m, ds, kTest);
    CHECK(cm.total() == 18);
    CHECK(cm.accuracy() >= 0.9);
}

TEST_CASE("training is bitwise deterministic under the seed") {
    NetworkDataset ds = toy_network_dataset(10, 3, 20, 6);
    TrainConfig tc;
    tc.max_epochs = 4;
    tc.batch_size = 8;
    tc.seed = 6;
    BranchClassifier a = BranchClassifier::init(6, {8}, 3, 20);
    BranchClassifier b = BranchClassifier::init(6, {8}, 3, 20);
    TrainHistory ha = train_branch_classifier(a, ds, tc);
    TrainHistory hb = train_branch_classifier(b, ds, tc);
    Vec fa, fb;
    a.params().flatten(fa);
    b.params().flatten(fb);
    CHECK(fa == fb);
    CHECK(ha.train_loss == hb.train_loss);
    CHECK(ha.val_loss == hb.val_loss);
}

TEST_CASE("model A loss decomposes across the task weights") {
    WindowDataset ds = toy_window_dataset(6, 3);
    GenericModelA m = GenericModelA::init(3);
    std::vector<std::size_t> idx = {0, 7, 13, 20, 29, 35};
    WindowBatch b = window_batch(ds, idx);

    auto loss_with = [&](double wc, double wp, double wl) {
        nn::ParamGrads g = nn::ParamGrads::zeros_like(m.params());
        TaskWeights w{wc, wp, wl};
        return m.loss_and_grad(b.x, b.count_labels, b.pos, b.lvl, b.mask, w, g);
    };
    double cls = loss_with(1, 0, 0);
    double pos = loss_with(0, 1, 0);
    double lvl = loss_with(0, 0, 1);
    CHECK(loss_with(1, 1, 1) == doctest::Approx(cls + pos + lvl).epsilon(1e-12));
    CHECK(loss_with(2, 0.5, 1) ==
          doctest::Approx(2 * cls + 0.5 * pos + lvl).epsilon(1e-12));
    CHECK_THROWS_AS(loss_with(0, 0, 0), std::invalid_argument);
}

TEST_CASE("model A heads stay in range") {
    GenericModelA m = GenericModelA::init(8);
    Mat x = Mat::Random(4, static_cast<Eigen::Index>(kWindowLen)).cwiseAbs();
    ModelAOutput out = m.predict(x);
    for (Eigen::Index r = 0; r < 4; ++r) {
        CHECK(out.type_probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
        for (int k = 0; k < 2; ++k) {
            CHECK(out.positions(r, k) > 0.0);
            CHECK(out.positions(r, k) < 1.0);
            CHECK(out.levels(r, k) > 0.0);
            CHECK(out.levels(r, k) < 1.0);
        }
    }
    std::vector<double> window(kWindowLen, 0.2);
    ReflectionPrediction p = predict_reflections(m, window);
    CHECK(p.count >= 0);
    CHECK(p.count <= 2);
    CHECK_THROWS_AS(predict_reflections(m, std::vector<double>(29, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("model B learns event classes and locations on a toy task") {
    WindowDataset ds = toy_window_dataset(40, 11);
    GenericModelB m = GenericModelB::init(11);
    TrainConfig tc;
    tc.max_epochs = 120;
    tc.batch_size = 32;
    tc.learning_rate = 5e-3;
    tc.patience = 120;
    tc.seed = 11;
    TrainHistory hist = train_generic_b(m, ds, tc);
    CHECK(hist.train_loss.back() < hist.train_loss.front());
    ModelBEval ev = evaluate_model_b(m, ds, kTest);
    CHECK(ev.event_confusion.total() == 56);
    CHECK(ev.event_confusion.accuracy() >= 0.6);
    CHECK(ev.regression.pos_mae_samples < 3.0);
    std::vector<double> window(kWindowLen, 0.1);
    EventPrediction p = predict_event(m, window);
    CHECK(p.event_class >= 0);
    CHECK(p.event_class < kNumEventClasses);
}

TEST_CASE("window_batch mirrors the records") {
    WindowDataset ds = toy_window_dataset(4, 7);
    std::vector<std::size_t> idx = {0, 5, 13};
    WindowBatch b = window_batch(ds, idx);
    CHECK(b.x.rows() == 3);
    CHECK(b.x.cols() == static_cast<Eigen::Index>(kWindowLen));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& rec = ds.records[idx[r]];
        auto ri = static_cast<Eigen::Index>(r);
        CHECK(b.event_labels[r] == rec.event_class);
        CHECK(b.count_labels[r] == reflections_for_class(rec.event_class));
        CHECK(b.x(ri, 4) == rec.values[4]);
        CHECK(b.pos(ri, 0) == rec.positions[0]);
        CHECK(b.mask(ri, 1) == rec.target_mask[1]);
    }
}

TEST_CASE("confusion matrix and histogram behave") {
    ConfusionMatrix cm;
    cm.counts = Mat::Zero(2, 2);
    cm.counts << 8, 2, 1, 9;
    CHECK(cm.accuracy() == doctest::Approx(0.85));
    CHECK(cm.total() == 20);
    Mat n = cm.row_normalized();
    CHECK(n(0, 0) == doctest::Approx(0.8));
    CHECK(n(1, 1) == doctest::Approx(0.9));

    Histogram h;
    h.init(0.0, 3.0, 30);
    h.add(0.05);
    h.add(1.55);
    h.add(99.0);  // clamps into the last bin
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[15] == 1);
    CHECK(h.counts[29] == 1);
    CHECK(h.edge(10) == doctest::Approx(1.0));
}

TEST_CASE("training refuses an unsplit dataset") {
    NetworkDataset ds = toy_network_dataset(4, 2, 10, 1);
    ds.split.assign(ds.records.size(), kTrain);  // no validation rows
    BranchClassifier m = BranchClassifier::init(1, {4}, 2, 10);
    TrainConfig tc;
    CHECK_THROWS_AS(train_branch_classifier(m, ds, tc), std::invalid_argument);
}
