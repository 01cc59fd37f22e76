#pragma once

// Reference-trace fault monitoring: bind the healthy trace's peaks to branch
// ids, slide a trained generic model over incoming traces in small steps
// (skipping windows whose edges cut through a reference peak), and turn the
// predictions into per-branch verdicts with locations.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ponwatch/models.hpp"

namespace ponwatch {

struct ReferenceEntry {
    int branch_id = 0;
    std::size_t peak_index = 0;  // absolute samples
    double level = 0.0;          // normalized
};

struct ReferenceMap {
    std::vector<ReferenceEntry> entries;  // strictly increasing peak_index
    std::uint64_t trace_digest = 0;
};

enum class Verdict { Healthy, Degraded, Lost };
std::string to_string(Verdict v);

struct WindowEvidence {
    std::size_t window_start = 0;
    int predicted = -1;  // model-dependent class
    double level = 0.0;
    double position = 0.0;  // absolute samples
};

struct FaultReport {
    int branch_id = 0;
    Verdict verdict = Verdict::Healthy;
    double measured_level = 0.0;
    double level_drop = 0.0;     // (ref - measured)/ref
    double level_drop_db = 0.0;  // round-trip equivalent
    double location_index = 0.0;  // absolute samples
    double location_m = 0.0;
    std::vector<WindowEvidence> evidence;
};

struct MonitorConfig {
    double threshold = 0.2;        // relative level drop for "degraded"
    std::size_t match_tol = 3;     // samples, prediction-to-reference
    // unit stride so every peak collects all of its guarded windows; close
    // peak pairs leave only a handful of alignments with no edge-cut peak
    std::size_t stride = 1;
};

// Extract the reference map from a healthy normalized trace (simulation-mode
// ground truth). Throws when the peak count does not match the topology or a
// reference peak is missing/degenerate.
ReferenceMap build_reference(const OtdrTrace& healthy_trace,
                             const PonTopology& topo);

// nearest reference entry within tol samples, or nullopt
std::optional<int> map_position_to_branch(double abs_index,
                                          const ReferenceMap& ref,
                                          std::size_t tol = 3);

std::vector<FaultReport> monitor_with_model_a(const OtdrTrace& trace,
                                              const GenericModelA& model,
                                              const ReferenceMap& ref,
                                              const MonitorConfig& cfg = {},
                                              const SimConfig* sim = nullptr);

std::vector<FaultReport> monitor_with_model_b(const OtdrTrace& trace,
                                              const GenericModelB& model,
                                              const ReferenceMap& ref,
                                              const MonitorConfig& cfg = {},
                                              const SimConfig* sim = nullptr);

bool any_fault(const std::vector<FaultReport>& reports);
std::string render_report_text(const std::vector<FaultReport>& reports);
std::string render_report_csv(const std::vector<FaultReport>& reports);

}  // namespace ponwatch
