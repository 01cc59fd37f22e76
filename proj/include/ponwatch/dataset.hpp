#pragma once

// Labeled training data built from synthetic traces: the length-280
// network-dependent samples (label = faulty branch id or 0) and the
// length-30 generic windows (event classes C_0..C_6 with masked
// position/level regression targets).

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ponwatch/otdr.hpp"

namespace ponwatch {

constexpr std::size_t kNetworkSeqLen = 280;
constexpr std::size_t kWindowLen = 30;
constexpr int kNumEventClasses = 7;
// A window is only labeled/voted when every peak keeps this many samples of
// clearance from the window edges (a cut Gaussian or a tail leaking in from
// just outside makes the reflection count ambiguous).
constexpr std::size_t kPeakGuard = 5;

enum SplitTag : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

struct NetworkSample {
    std::vector<double> values;  // length 280, normalized
    int label = 0;               // 0 = normal, i = branch i faulty
    double pnr_db = 0.0;
};

struct WindowSample {
    std::vector<double> values;  // length 30, normalized
    int event_class = 6;         // C_0..C_6
    std::array<double, 2> positions{0.0, 0.0};  // in-window index / window_len
    std::array<double, 2> levels{0.0, 0.0};     // normalized peak heights
    std::array<bool, 2> target_mask{false, false};
    std::size_t abs_start = 0;  // absolute start index of the window
    double pnr_db = 0.0;
};

// reflections implied by an event class: C_0..C_3 -> 2, C_4/C_5 -> 1, C_6 -> 0
int reflections_for_class(int event_class);
// class from ordered per-reflection faulty flags
int event_class_from_flags(const std::vector<bool>& faulty);

struct FaultinessRule {
    double faulty_level_threshold = 0.8;  // fraction of the reference height
};

struct NetworkDataset {
    std::vector<NetworkSample> records;
    std::vector<SplitTag> split;  // empty until split_dataset runs
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
};

struct WindowDataset {
    std::vector<WindowSample> records;
    std::vector<SplitTag> split;
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
};

// (v - min)/(max - min); throws on constant input
std::vector<double> normalize_minmax(const std::vector<double>& values);

// Scale one peak's excess over the local baseline by `factor` within a
// 3*FWHM support and relabel; operates on a normalized trace.
OtdrTrace reduce_reflection_height(const OtdrTrace& trace, int branch_id,
                                   double factor, const SimConfig& cfg);

struct NetworkRecipe {
    int per_class_count = 1000;
    double pnr_min_db = 5.0, pnr_max_db = 30.0;
    double fault_min_db = 1.0, fault_max_db = 10.0;  // one-way
    double break_fraction = 0.05;
    std::uint64_t seed = 0;
};

NetworkDataset build_network_dataset(const PonTopology& topo,
                                     const SimConfig& cfg,
                                     const NetworkRecipe& recipe);

// Fixed-length window shells; incomplete tail dropped.
struct WindowShell {
    std::vector<double> values;
    std::size_t abs_start = 0;
};
std::vector<WindowShell> window_trace(const OtdrTrace& trace,
                                      std::size_t window_len, std::size_t stride,
                                      std::size_t start = 0);

// One expected reflection: the reference (healthy) peak plus the height it
// actually has under the current scenario (0 when vanished).
struct ExpectedPeak {
    int branch_id = 0;
    std::size_t abs_index = 0;
    double ref_height = 0.0;
    double actual_height = 0.0;
};

// Labels a shell from the expected peaks falling inside it; nullopt when the
// window holds 3+ reflections (caller counts rejections).
std::optional<WindowSample> label_window(const WindowShell& shell,
                                         const std::vector<ExpectedPeak>& peaks,
                                         const FaultinessRule& rule);

// true when every peak index is either >= guard samples inside both window
// edges or >= guard samples outside them
bool window_is_guarded(std::size_t window_start, std::size_t window_len,
                       const std::vector<std::size_t>& peak_indices,
                       std::size_t guard = kPeakGuard);

struct GenericRecipe {
    int per_class_count = 2000;
    std::vector<int> attenuator_branches = {1, 3, 4, 5};  // 3/10/12/18 m ends
    double pnr_min_db = 5.0, pnr_max_db = 30.0;
    double fault_min_db = 3.0, fault_max_db = 8.0;  // one-way
    double break_fraction = 0.1;                    // per placed attenuator
    FaultinessRule rule{};
    std::uint64_t seed = 0;
};

WindowDataset build_generic_dataset(const PonTopology& topo,
                                    const SimConfig& cfg,
                                    const GenericRecipe& recipe);

// Stratified 60/20/20 (or custom) split; deterministic under seed; exact to
// within one record per class.
std::vector<SplitTag> split_by_class(const std::vector<int>& class_of_record,
                                     const std::array<double, 3>& fractions,
                                     std::uint64_t seed);
void split_dataset(NetworkDataset& ds, const std::array<double, 3>& fractions,
                   std::uint64_t seed);
void split_dataset(WindowDataset& ds, const std::array<double, 3>& fractions,
                   std::uint64_t seed);

// Per-record RNG stream derivation (splitmix64 over (master, index)).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace ponwatch
