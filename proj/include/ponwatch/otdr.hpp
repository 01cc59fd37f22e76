#pragma once

// Synthetic OTDR trace generation for multi-branch PONs: backscatter
// baseline, reflector peaks, fault attenuation, AWGN at a calibrated
// peak-to-noise ratio.

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ponwatch {

constexpr double kSpeedOfLight = 299792458.0;  // m/s, vacuum

struct BranchSpec {
    int branch_id = 0;      // 1..B, unique, contiguous
    double length_m = 0.0;  // beyond the splitter
    bool has_reflector = true;
};

struct PonTopology {
    double feeder_length_m = 1000.0;
    int split_ratio = 128;  // power of two
    std::vector<BranchSpec> branches;

    // Throws std::invalid_argument on a malformed topology.
    void validate(double min_gap_m = 2.0, double max_gap_m = 6.0) const;
};

// Default 8-branch lab topology: feeder 1 km, 1:128 split, branch ends at
// {3,5,10,12,18,21,26,30} m with consecutive gaps of 2-6 m.
PonTopology default_topology();

struct SimConfig {
    double pulse_width_ns = 10.0;
    double sample_interval_ns = 2.0;
    double wavelength_nm = 1650.0;  // metadata only
    double group_index = 1.468;
    double attenuation_db_per_km = 0.3;   // one-way
    double splitter_loss_db = -1.0;       // <0: derive 10*log10(split_ratio)
    double reflector_return_db = 25.0;    // peak excess over local baseline
    std::size_t trace_len = 5200;
    double dynamic_range_db = 30.0;       // clip floor below trace start

    double sample_spacing_m() const;      // c*dt/(2*n_g)
    double fwhm_samples() const { return pulse_width_ns / sample_interval_ns; }
    double effective_splitter_loss_db(const PonTopology& topo) const;
    void validate() const;
};

struct FaultScenario {
    // one-way dB per branch; kBreak means the reflection has vanished
    static constexpr double kBreak = std::numeric_limits<double>::infinity();
    std::map<int, double> branch_attenuation_db;
    double feeder_extra_loss_db = 0.0;  // inserted at the feeder end

    double attenuation_for(int branch_id) const;
    bool is_break(int branch_id) const;
};

struct PeakTruth {
    int branch_id = 0;
    std::size_t peak_index = 0;  // relative to the trace's own origin
    double peak_height = 0.0;    // excess over local baseline
};

struct OtdrTrace {
    std::vector<double> samples;   // linear power or normalized amplitude
    std::vector<double> baseline;  // peak-free counterpart, same domain
    double sample_interval_ns = 2.0;
    std::vector<PeakTruth> ground_truth;  // strictly increasing peak_index
    std::optional<double> pnr_db;         // set once noise is injected
    bool normalized = false;
    std::size_t start_index = 0;  // absolute offset of sample 0
    int dropped_peaks = 0;        // peaks lost to region extraction
    std::vector<std::string> notes;
};

// meters -> nearest sample index. Throws std::out_of_range past trace_len
// and std::invalid_argument for negative distance.
std::size_t distance_to_index(double distance_m, const SimConfig& cfg);
double index_to_distance(std::size_t index, const SimConfig& cfg);

// Linear-power trace: decaying backscatter baseline, round-trip splitter and
// feeder-fault step drops, one Gaussian peak per surviving reflector.
// Ground-truth heights are linear excesses until normalize_trace() rescales
// them.
OtdrTrace synthesize_clean_trace(const PonTopology& topo,
                                 const FaultScenario& scen,
                                 const SimConfig& cfg);

// 10*log10 display conversion, floor clip at dynamic_range_db below the
// trace start, then min-max to [0,1]. Ground-truth heights become
// normalized excesses over the local baseline.
OtdrTrace normalize_trace(const OtdrTrace& linear, const SimConfig& cfg);

// i.i.d. Gaussian noise with sigma = h_max / 10^(pnr_db/10), h_max the
// tallest ground-truth peak height (falls back to max(samples) when the
// trace has no peaks, noted on the trace).
OtdrTrace add_awgn(const OtdrTrace& trace, double pnr_db, std::uint64_t seed);

// Contiguous sub-trace; ground truth re-based, out-of-region peaks dropped
// and counted.
OtdrTrace extract_region(const OtdrTrace& trace, std::size_t start,
                         std::size_t len);

// Start of the default monitored region: `margin` samples before the first
// reflector peak.
std::size_t default_region_start(const PonTopology& topo, const SimConfig& cfg,
                                 std::size_t margin = 10);
std::size_t splitter_index(const PonTopology& topo, const SimConfig& cfg);

// First post-splitter sample. Regions fed to the generic models must start
// here (or later): the sample at splitter_index itself still carries the
// pre-splitter level, which sits far enough above the post-splitter
// backscatter that the -30 dB dynamic-range clip would floor the whole
// baseline.
std::size_t monitored_region_start(const PonTopology& topo,
                                   const SimConfig& cfg);

// Convenience: synthesize -> extract 'len' samples from 'start' -> normalize.
OtdrTrace make_normalized_region(const PonTopology& topo,
                                 const FaultScenario& scen,
                                 const SimConfig& cfg, std::size_t start,
                                 std::size_t len);

}  // namespace ponwatch
