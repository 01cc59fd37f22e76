#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "ponwatch/dataset.hpp"
#include "ponwatch/serialize.hpp"

using namespace ponwatch;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// independent re-derivation of the window label, peak by peak
std::optional<int> oracle_class(const WindowShell& shell,
                                const std::vector<ExpectedPeak>& peaks,
                                double threshold) {
    struct Hit { std::size_t idx; bool faulty; };
    std::vector<Hit> hits;
    for (const auto& p : peaks) {
        if (p.abs_index < shell.abs_start) continue;
        if (p.abs_index >= shell.abs_start + shell.values.size()) continue;
        hits.push_back({p.abs_index, p.actual_height < threshold * p.ref_height});
    }
    std::sort(hits.begin(), hits.end(),
              [](const Hit& a, const Hit& b) { return a.idx < b.idx; });
    if (hits.size() > 2) return std::nullopt;
    if (hits.empty()) return 6;
    if (hits.size() == 1) return hits[0].faulty ? 5 : 4;
    if (hits[0].faulty && hits[1].faulty) return 3;
    if (hits[0].faulty) return 1;
    if (hits[1].faulty) return 2;
    return 0;
}

}  // namespace

TEST_CASE("normalize_minmax maps min to 0 and max to 1") {
    CHECK(normalize_minmax({0.0, 5.0, 10.0}) ==
          std::vector<double>{0.0, 0.5, 1.0});
    auto v = normalize_minmax({-2.0, 0.0, 2.0});
    CHECK(v[1] == doctest::Approx(0.5));
    CHECK_THROWS_AS(normalize_minmax({3.0, 3.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_minmax({}), std::invalid_argument);
}

TEST_CASE("class helpers agree with the C_0..C_6 layout") {
    CHECK(reflections_for_class(0) == 2);
    CHECK(reflections_for_class(3) == 2);
    CHECK(reflections_for_class(4) == 1);
    CHECK(reflections_for_class(5) == 1);
    CHECK(reflections_for_class(6) == 0);
    CHECK_THROWS_AS(reflections_for_class(7), std::invalid_argument);

    CHECK(event_class_from_flags({}) == 6);
    CHECK(event_class_from_flags({false}) == 4);
    CHECK(event_class_from_flags({true}) == 5);
    CHECK(event_class_from_flags({false, false}) == 0);
    CHECK(event_class_from_flags({true, false}) == 1);
    CHECK(event_class_from_flags({false, true}) == 2);
    CHECK(event_class_from_flags({true, true}) == 3);
    CHECK_THROWS_AS(event_class_from_flags({true, true, true}),
                    std::invalid_argument);
}

TEST_CASE("reduce_reflection_height scales the excess only") {
    PonTopology topo = default_topology();
    SimConfig cfg;
    OtdrTrace region =
        make_normalized_region(topo, {}, cfg, splitter_index(topo, cfg), 280);

    SUBCASE("factor 1 is the identity") {
        OtdrTrace same = reduce_reflection_height(region, 3, 1.0, cfg);
        for (std::size_t i = 0; i < region.samples.size(); ++i)
            CHECK(same.samples[i] == doctest::Approx(region.samples[i]));
    }
    SUBCASE("factor 0 flattens the peak to the baseline") {
        OtdrTrace gone = reduce_reflection_height(region, 3, 0.0, cfg);
        std::size_t idx = region.ground_truth[2].peak_index;
        CHECK(gone.samples[idx] == doctest::Approx(gone.baseline[idx]));
        CHECK(gone.ground_truth[2].peak_height == 0.0);
    }
    SUBCASE("factor 0.251 scales height and leaves other peaks alone") {
        OtdrTrace cut = reduce_reflection_height(region, 3, 0.251, cfg);
        CHECK(cut.ground_truth[2].peak_height ==
              doctest::Approx(0.251 * region.ground_truth[2].peak_height));
        std::size_t idx = region.ground_truth[2].peak_index;
        double excess = cut.samples[idx] - cut.baseline[idx];
        CHECK(excess ==
              doctest::Approx(0.251 * (region.samples[idx] - region.baseline[idx]))
                  .epsilon(1e-9));
        for (std::size_t k = 0; k < 8; ++k) {
            if (k == 2) continue;
            CHECK(cut.ground_truth[k].peak_height ==
                  region.ground_truth[k].peak_height);
        }
    }
    SUBCASE("invalid arguments throw") {
        CHECK_THROWS_AS(reduce_reflection_height(region, 99, 0.5, cfg),
                        std::invalid_argument);
        CHECK_THROWS_AS(reduce_reflection_height(region, 3, 1.5, cfg),
                        std::invalid_argument);
    }
}

TEST_CASE("network dataset has per_class records for each of the 9 classes") {
    PonTopology topo = default_topology();
    SimConfig cfg;
    NetworkRecipe recipe;
    recipe.per_class_count = 10;
    recipe.seed = 11;
    NetworkDataset ds = build_network_dataset(topo, cfg, recipe);
    REQUIRE(ds.records.size() == 90);
    REQUIRE(ds.split.size() == 90);
    std::vector<int> per_class(9, 0);
    for (const auto& r : ds.records) {
        REQUIRE(r.values.size() == kNetworkSeqLen);
        REQUIRE(r.label >= 0);
        REQUIRE(r.label <= 8);
        ++per_class[static_cast<std::size_t>(r.label)];
        CHECK(r.pnr_db >= recipe.pnr_min_db);
        CHECK(r.pnr_db <= recipe.pnr_max_db);
    }
    for (int c : per_class) CHECK(c == 10);
    int n_train = 0, n_val = 0, n_test = 0;
    for (SplitTag t : ds.split)
        (t == kTrain ? n_train : t == kVal ? n_val : n_test)++;
    CHECK(n_train == 54);
    CHECK(n_val == 18);
    CHECK(n_test == 18);
}

TEST_CASE("split arithmetic: 44460 records -> 26676/8892/8892") {
    std::vector<int> classes;
    for (int c = 0; c < 9; ++c)
        for (int j = 0; j < 4940; ++j) classes.push_back(c);
    auto tags = split_by_class(classes, {0.6, 0.2, 0.2}, 3);
    std::array<long, 3> n{};
    for (SplitTag t : tags) ++n[static_cast<std::size_t>(t)];
    CHECK(n[0] == 26676);
    CHECK(n[1] == 8892);
    CHECK(n[2] == 8892);
}

TEST_CASE("split is stratified to within one record per class") {
    std::mt19937_64 rng(5);
    std::vector<int> classes;
    std::vector<int> sizes = {7, 10, 13, 101};
    for (std::size_t c = 0; c < sizes.size(); ++c)
        for (int j = 0; j < sizes[c]; ++j) classes.push_back(static_cast<int>(c));
    std::shuffle(classes.begin(), classes.end(), rng);
    auto tags = split_by_class(classes, {0.6, 0.2, 0.2}, 17);
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        std::array<long, 3> n{};
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == static_cast<int>(c)) ++n[static_cast<std::size_t>(tags[i])];
        CHECK(n[0] + n[1] + n[2] == sizes[c]);
        for (int s = 0; s < 3; ++s) {
            double exact = (s == 0 ? 0.6 : 0.2) * sizes[c];
            CHECK(std::abs(static_cast<double>(n[static_cast<std::size_t>(s)]) - exact) <= 1.0);
        }
    }
    CHECK_THROWS_AS(split_by_class({0, 0, 1}, {0.6, 0.2, 0.2}, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(split_by_class({0, 0, 0}, {0.6, 0.3, 0.2}, 1),
                    std::invalid_argument);
}

TEST_CASE("window_trace yields 9 disjoint or 17 half-overlapping windows") {
    OtdrTrace tr;
    tr.normalized = true;
    tr.samples.resize(280);
    for (std::size_t i = 0; i < 280; ++i) tr.samples[i] = static_cast<double>(i);
    auto disjoint = window_trace(tr, 30, 30);
    CHECK(disjoint.size() == 9);
    CHECK(disjoint[0].abs_start == 0);
    CHECK(disjoint[8].abs_start == 240);
    auto overlapping = window_trace(tr, 30, 15);
    CHECK(overlapping.size() == 17);
    CHECK(overlapping[16].abs_start == 240);
    CHECK(overlapping[1].values.front() == 15.0);
    tr.start_index = 1000;
    CHECK(window_trace(tr, 30, 30)[1].abs_start == 1030);
    CHECK_THROWS_AS(window_trace(tr, 0, 30), std::invalid_argument);
    CHECK_THROWS_AS(window_trace(tr, 300, 30), std::invalid_argument);
}

TEST_CASE("window_is_guarded keeps only well-inside or well-outside peaks") {
    // window [100, 129], guard 5: inside means rel in [5, 24]
    CHECK(window_is_guarded(100, 30, {105}, 5));
    CHECK(window_is_guarded(100, 30, {124}, 5));
    CHECK_FALSE(window_is_guarded(100, 30, {104}, 5));
    CHECK_FALSE(window_is_guarded(100, 30, {125}, 5));
    // outside means rel <= -6 or rel >= 35
    CHECK(window_is_guarded(100, 30, {94}, 5));
    CHECK(window_is_guarded(100, 30, {135}, 5));
    CHECK_FALSE(window_is_guarded(100, 30, {95}, 5));
    CHECK_FALSE(window_is_guarded(100, 30, {134}, 5));
    // one offending peak taints the window; none at all is fine
    CHECK_FALSE(window_is_guarded(100, 30, {110, 129}, 5));
    CHECK(window_is_guarded(100, 30, {}, 5));
    // guard 0 degenerates to plain inside/outside
    CHECK(window_is_guarded(100, 30, {100, 129, 99, 130}, 0));
}

TEST_CASE("label_window covers the worked examples") {
    WindowShell shell;
    shell.values.assign(30, 0.1);
    shell.abs_start = 60;
    FaultinessRule rule;  // threshold 0.8

    SUBCASE("no peaks -> C_6, nothing masked") {
        auto s = label_window(shell, {}, rule);
        REQUIRE(s.has_value());
        CHECK(s->event_class == 6);
        CHECK_FALSE(s->target_mask[0]);
        CHECK_FALSE(s->target_mask[1]);
    }
    SUBCASE("one healthy peak at offset 12 -> C_4, position 0.4") {
        std::vector<ExpectedPeak> peaks = {{3, 72, 0.5, 0.45}};
        auto s = label_window(shell, peaks, rule);
        REQUIRE(s.has_value());
        CHECK(s->event_class == 4);
        CHECK(s->positions[0] == doctest::Approx(0.4));
        CHECK(s->levels[0] == doctest::Approx(0.45));
        CHECK(s->target_mask[0]);
        CHECK_FALSE(s->target_mask[1]);
    }
    SUBCASE("first of two peaks degraded -> C_1") {
        std::vector<ExpectedPeak> peaks = {{3, 65, 0.5, 0.2}, {4, 80, 0.5, 0.48}};
        auto s = label_window(shell, peaks, rule);
        REQUIRE(s.has_value());
        CHECK(s->event_class == 1);
        CHECK(s->positions[0] == doctest::Approx(5.0 / 30.0));
        CHECK(s->positions[1] == doctest::Approx(20.0 / 30.0));
        CHECK(s->target_mask[0]);
        CHECK(s->target_mask[1]);
    }
    SUBCASE("vanished peak still counts as an expected reflection") {
        std::vector<ExpectedPeak> peaks = {{3, 70, 0.5, 0.0}};
        auto s = label_window(shell, peaks, rule);
        REQUIRE(s.has_value());
        CHECK(s->event_class == 5);
        CHECK(s->levels[0] == 0.0);
    }
    SUBCASE("three reflections are out of the label's domain") {
        std::vector<ExpectedPeak> peaks = {
            {1, 62, 0.5, 0.5}, {2, 70, 0.5, 0.5}, {3, 78, 0.5, 0.5}};
        CHECK_FALSE(label_window(shell, peaks, rule).has_value());
    }
    SUBCASE("peaks outside the window are ignored") {
        std::vector<ExpectedPeak> peaks = {{1, 59, 0.5, 0.5}, {2, 90, 0.5, 0.5}};
        auto s = label_window(shell, peaks, rule);
        REQUIRE(s.has_value());
        CHECK(s->event_class == 6);
    }
}

TEST_CASE("label_window agrees with the brute-force oracle") {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    FaultinessRule rule;
    int labeled = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        WindowShell shell;
        shell.values.assign(30, 0.0);
        shell.abs_start = rng() % 500;
        std::vector<ExpectedPeak> peaks;
        int np = static_cast<int>(rng() % 5);
        for (int k = 0; k < np; ++k) {
            ExpectedPeak p;
            p.branch_id = k + 1;
            p.abs_index = shell.abs_start + rng() % 60;  // half fall outside
            p.ref_height = 0.2 + 0.8 * u01(rng);
            p.actual_height = p.ref_height * u01(rng) * 1.1;
            peaks.push_back(p);
        }
        auto got = label_window(shell, peaks, rule);
        auto want = oracle_class(shell, peaks, rule.faulty_level_threshold);
        REQUIRE(got.has_value() == want.has_value());
        if (!got) continue;
        ++labeled;
        CHECK(got->event_class == *want);
        // mask consistency with the class arity
        int arity = reflections_for_class(got->event_class);
        CHECK(got->target_mask[0] == (arity >= 1));
        CHECK(got->target_mask[1] == (arity >= 2));
        if (got->target_mask[0]) {
            CHECK(got->positions[0] >= 0.0);
            CHECK(got->positions[0] < 1.0);
        }
    }
    CHECK(labeled > 500);
}

TEST_CASE("generic dataset fills every class bucket") {
    PonTopology topo = default_topology();
    SimConfig cfg;
    GenericRecipe recipe;
    recipe.per_class_count = 20;
    recipe.seed = 21;
    WindowDataset ds = build_generic_dataset(topo, cfg, recipe);
    REQUIRE(ds.records.size() == 140);
    std::vector<int> per_class(kNumEventClasses, 0);
    for (const auto& r : ds.records) {
        REQUIRE(r.values.size() == kWindowLen);
        ++per_class[static_cast<std::size_t>(r.event_class)];
        int arity = reflections_for_class(r.event_class);
        CHECK(r.target_mask[0] == (arity >= 1));
        CHECK(r.target_mask[1] == (arity >= 2));
    }
    for (int c : per_class) CHECK(c == 20);
}

TEST_CASE("generic dataset reports the starving class by name") {
    PonTopology topo = default_topology();
    SimConfig cfg;
    GenericRecipe recipe;
    recipe.per_class_count = 20;
    recipe.attenuator_branches = {};  // no faults can ever appear
    try {
        build_generic_dataset(topo, cfg, recipe);
        FAIL("expected a starved-class error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("C_") != std::string::npos);
    }
}

TEST_CASE("datasets rebuild byte-identically from the same seed") {
    PonTopology topo = default_topology();
    SimConfig cfg;
    NetworkRecipe recipe;
    recipe.per_class_count = 4;
    recipe.seed = 77;
    NetworkDataset a = build_network_dataset(topo, cfg, recipe);
    NetworkDataset b = build_network_dataset(topo, cfg, recipe);
    save_dataset(a, "det_a.ponds");
    save_dataset(b, "det_b.ponds");
    CHECK(slurp("det_a.ponds") == slurp("det_b.ponds"));

    recipe.seed = 78;
    NetworkDataset c = build_network_dataset(topo, cfg, recipe);
    save_dataset(c, "det_c.ponds");
    CHECK(slurp("det_a.ponds") != slurp("det_c.ponds"));

    NetworkDataset back = load_network_dataset("det_a.ponds");
    REQUIRE(back.records.size() == a.records.size());
    CHECK(back.seed == a.seed);
    CHECK(back.config_digest == a.config_digest);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(back.records[i].values == a.records[i].values);
        CHECK(back.records[i].label == a.records[i].label);
        CHECK(back.split[i] == a.split[i]);
    }
    std::remove("det_a.ponds");
    std::remove("det_b.ponds");
    std::remove("det_c.ponds");
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(1, 5) == derive_seed(1, 5));
}
