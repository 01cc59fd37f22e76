#include <doctest.h>

#include "ponwatch/monitor.hpp"

using namespace ponwatch;

namespace {

struct Fixture {
    PonTopology topo = default_topology();
    SimConfig cfg;
    OtdrTrace healthy;
    ReferenceMap ref;

    Fixture() {
        healthy = make_normalized_region(topo, {}, cfg,
                                         monitored_region_start(topo, cfg), kNetworkSeqLen);
        ref = build_reference(healthy, topo);
    }
};

}  // namespace

TEST_CASE("build_reference binds the eight peaks to branch ids") {
    Fixture f;
    REQUIRE(f.ref.entries.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
        const auto& e = f.ref.entries[k];
        CHECK(e.branch_id == static_cast<int>(k) + 1);
        CHECK(e.peak_index ==
              f.healthy.start_index + f.healthy.ground_truth[k].peak_index);
        CHECK(e.level > 0.0);
        if (k > 0) CHECK(e.peak_index > f.ref.entries[k - 1].peak_index);
    }
}

TEST_CASE("build_reference is deterministic") {
    Fixture a, b;
    CHECK(a.ref.trace_digest == b.ref.trace_digest);
    REQUIRE(a.ref.entries.size() == b.ref.entries.size());
    for (std::size_t k = 0; k < a.ref.entries.size(); ++k) {
        CHECK(a.ref.entries[k].peak_index == b.ref.entries[k].peak_index);
        CHECK(a.ref.entries[k].level == b.ref.entries[k].level);
    }
}

TEST_CASE("build_reference rejects traces with missing peaks") {
    Fixture f;
    FaultScenario scen;
    scen.branch_attenuation_db[3] = FaultScenario::kBreak;
    OtdrTrace broken = make_normalized_region(
        f.topo, scen, f.cfg, monitored_region_start(f.topo, f.cfg), kNetworkSeqLen);
    CHECK_THROWS_AS(build_reference(broken, f.topo), std::invalid_argument);

    OtdrTrace linear = synthesize_clean_trace(f.topo, {}, f.cfg);
    CHECK_THROWS_AS(build_reference(linear, f.topo), std::invalid_argument);
}

TEST_CASE("map_position_to_branch snaps within the tolerance") {
    Fixture f;
    const auto& e = f.ref.entries[2];
    double at = static_cast<double>(e.peak_index);
    CHECK(map_position_to_branch(at, f.ref) == e.branch_id);
    CHECK(map_position_to_branch(at + 3.0, f.ref) == e.branch_id);
    CHECK(map_position_to_branch(at - 2.5, f.ref) == e.branch_id);
    // far from every reference peak
    CHECK_FALSE(map_position_to_branch(at + 200.0, f.ref).has_value());
    // nearest entry wins between two peaks
    double mid = 0.5 * (static_cast<double>(f.ref.entries[0].peak_index) +
                        static_cast<double>(f.ref.entries[1].peak_index));
    auto got = map_position_to_branch(mid + 1.0, f.ref, 10);
    CHECK(got == f.ref.entries[1].branch_id);
}

TEST_CASE("verdict names render for reports") {
    CHECK(to_string(Verdict::Healthy) == "healthy");
    CHECK(to_string(Verdict::Degraded) == "degraded");
    CHECK(to_string(Verdict::Lost) == "lost");

    FaultReport r;
    r.branch_id = 4;
    r.verdict = Verdict::Degraded;
    std::string text = render_report_text({r});
    CHECK(text.find("branch 4") != std::string::npos);
    CHECK(text.find("degraded") != std::string::npos);
    std::string csv = render_report_csv({r});
    CHECK(csv.find("branch_id,verdict") != std::string::npos);
    CHECK(any_fault({r}));
    r.verdict = Verdict::Healthy;
    CHECK_FALSE(any_fault({r}));
}

TEST_CASE("monitoring an empty reference map throws") {
    Fixture f;
    ReferenceMap empty;
    GenericModelA a = GenericModelA::init(1);
    GenericModelB b = GenericModelB::init(1);
    CHECK_THROWS_AS(monitor_with_model_a(f.healthy, a, empty),
                    std::invalid_argument);
    CHECK_THROWS_AS(monitor_with_model_b(f.healthy, b, empty),
                    std::invalid_argument);
}

TEST_CASE("untrained models still yield one report per branch") {
    Fixture f;
    GenericModelA a = GenericModelA::init(2);
    GenericModelB b = GenericModelB::init(2);
    auto ra = monitor_with_model_a(f.healthy, a, f.ref, {}, &f.cfg);
    auto rb = monitor_with_model_b(f.healthy, b, f.ref, {}, &f.cfg);
    CHECK(ra.size() == 8);
    CHECK(rb.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) {
        CHECK(ra[k].branch_id == static_cast<int>(k) + 1);
        CHECK(rb[k].branch_id == static_cast<int>(k) + 1);
        CHECK(ra[k].location_m > 0.0);
    }
}
