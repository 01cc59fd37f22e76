#include "ponwatch/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ponwatch/config.hpp"

namespace ponwatch {

namespace {

std::uint64_t samples_digest(const OtdrTrace& tr) {
    std::string bytes(reinterpret_cast<const char*>(tr.samples.data()),
                      tr.samples.size() * sizeof(double));
    return fnv1a64(bytes);
}

struct Event {
    double position = 0.0;  // absolute samples
    double level = 0.0;
    double centrality = 0.0;  // distance to nearest window edge
    std::size_t window_start = 0;
};

// events within tol samples collapse; the most window-central prediction wins
std::vector<Event> merge_events(std::vector<Event> events, double tol) {
    std::sort(events.begin(), events.end(),
              [](const Event& a, const Event& b) { return a.position < b.position; });
    std::vector<Event> merged;
    for (const auto& e : events) {
        if (!merged.empty() && e.position - merged.back().position <= tol) {
            if (e.centrality > merged.back().centrality) merged.back() = e;
        } else {
            merged.push_back(e);
        }
    }
    return merged;
}

FaultReport report_for(const ReferenceEntry& ref, Verdict v, double measured,
                       double location, const SimConfig* sim) {
    FaultReport r;
    r.branch_id = ref.branch_id;
    r.verdict = v;
    r.measured_level = measured;
    r.level_drop = ref.level > 0 ? (ref.level - measured) / ref.level : 0.0;
    double ratio = ref.level > 0 ? std::max(measured, 0.0) / ref.level : 1.0;
    r.level_drop_db = ratio > 0 ? -10.0 * std::log10(ratio)
                                : std::numeric_limits<double>::infinity();
    r.location_index = location;
    if (sim) r.location_m = location * sim->sample_spacing_m();
    return r;
}

}  // namespace

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Healthy: return "healthy";
        case Verdict::Degraded: return "degraded";
        case Verdict::Lost: return "lost";
    }
    return "?";
}

ReferenceMap build_reference(const OtdrTrace& trace, const PonTopology& topo) {
    if (!trace.normalized)
        throw std::invalid_argument("build_reference: trace must be normalized");
    std::size_t reflectors = 0;
    for (const auto& b : topo.branches)
        if (b.has_reflector) ++reflectors;
    if (trace.ground_truth.size() != reflectors)
        throw std::invalid_argument(
            "build_reference: reference trace must show every reflector (" +
            std::to_string(trace.ground_truth.size()) + " of " +
            std::to_string(reflectors) + " peaks)");

    ReferenceMap map;
    map.trace_digest = samples_digest(trace);
    std::size_t prev = 0;
    for (const auto& p : trace.ground_truth) {
        if (p.peak_height <= 0.0)
            throw std::invalid_argument("build_reference: degenerate reference peak");
        std::size_t abs = trace.start_index + p.peak_index;
        if (!map.entries.empty() && abs <= prev)
            throw std::invalid_argument("build_reference: peaks not increasing");
        map.entries.push_back({p.branch_id, abs, p.peak_height});
        prev = abs;
    }
    return map;
}

std::optional<int> map_position_to_branch(double abs_index,
                                          const ReferenceMap& ref,
                                          std::size_t tol) {
    const ReferenceEntry* best = nullptr;
    double best_d = 0.0;
    for (const auto& e : ref.entries) {
        double d = std::abs(abs_index - static_cast<double>(e.peak_index));
        if (d <= static_cast<double>(tol) && (!best || d < best_d)) {
            best = &e;
            best_d = d;
        }
    }
    if (!best) return std::nullopt;
    return best->branch_id;
}

std::vector<FaultReport> monitor_with_model_a(const OtdrTrace& trace,
                                              const GenericModelA& model,
                                              const ReferenceMap& ref,
                                              const MonitorConfig& cfg,
                                              const SimConfig* sim) {
    if (ref.entries.empty())
        throw std::invalid_argument("monitor: empty reference map");
    auto shells = window_trace(trace, kWindowLen, cfg.stride);
    std::vector<std::size_t> ref_peaks;
    for (const auto& e : ref.entries) ref_peaks.push_back(e.peak_index);

    std::vector<Event> events;
    std::map<std::size_t, std::vector<WindowEvidence>> evidence_near;
    for (const auto& shell : shells) {
        // the model is only trained on windows with no edge-cut peaks
        if (!window_is_guarded(shell.abs_start, kWindowLen, ref_peaks)) continue;
        ReflectionPrediction pred = predict_reflections(model, shell.values);
        for (int k = 0; k < pred.count; ++k) {
            Event e;
            double in_window = pred.positions[static_cast<std::size_t>(k)] *
                               static_cast<double>(kWindowLen);
            e.position = static_cast<double>(shell.abs_start) + in_window;
            e.level = pred.levels[static_cast<std::size_t>(k)];
            e.centrality = std::min(in_window, static_cast<double>(kWindowLen) - in_window);
            e.window_start = shell.abs_start;
            events.push_back(e);
        }
    }
    auto merged = merge_events(std::move(events),
                               static_cast<double>(cfg.match_tol));

    std::vector<FaultReport> reports;
    for (const auto& entry : ref.entries) {
        const Event* match = nullptr;
        double best_d = 0.0;
        for (const auto& e : merged) {
            double d = std::abs(e.position - static_cast<double>(entry.peak_index));
            if (d <= static_cast<double>(cfg.match_tol) && (!match || d < best_d)) {
                match = &e;
                best_d = d;
            }
        }
        if (!match) {
            reports.push_back(report_for(entry, Verdict::Lost, 0.0,
                                         static_cast<double>(entry.peak_index), sim));
            continue;
        }
        double drop = (entry.level - match->level) / entry.level;
        Verdict v = drop > cfg.threshold ? Verdict::Degraded : Verdict::Healthy;
        FaultReport r = report_for(entry, v, match->level, match->position, sim);
        r.evidence.push_back({match->window_start, -1, match->level, match->position});
        reports.push_back(std::move(r));
    }
    return reports;
}

std::vector<FaultReport> monitor_with_model_b(const OtdrTrace& trace,
                                              const GenericModelB& model,
                                              const ReferenceMap& ref,
                                              const MonitorConfig& cfg,
                                              const SimConfig* sim) {
    if (ref.entries.empty())
        throw std::invalid_argument("monitor: empty reference map");
    auto shells = window_trace(trace, kWindowLen, cfg.stride);
    std::vector<std::size_t> ref_peaks;
    for (const auto& e : ref.entries) ref_peaks.push_back(e.peak_index);

    // verdict votes per branch across the overlapping windows
    std::map<int, std::vector<Verdict>> votes;
    std::map<int, std::vector<WindowEvidence>> evidence;
    std::map<int, std::vector<double>> locations;

    for (const auto& shell : shells) {
        // the model is only trained on windows with no edge-cut peaks
        if (!window_is_guarded(shell.abs_start, kWindowLen, ref_peaks)) continue;
        std::vector<const ReferenceEntry*> expected;
        for (const auto& e : ref.entries)
            if (e.peak_index >= shell.abs_start &&
                e.peak_index < shell.abs_start + kWindowLen)
                expected.push_back(&e);
        if (expected.size() > 2) continue;  // outside the model's domain

        EventPrediction pred = predict_event(model, shell.values);
        int pred_count = reflections_for_class(pred.event_class);
        std::vector<bool> pred_faulty;
        switch (pred.event_class) {
            case 0: pred_faulty = {false, false}; break;
            case 1: pred_faulty = {true, false}; break;
            case 2: pred_faulty = {false, true}; break;
            case 3: pred_faulty = {true, true}; break;
            case 4: pred_faulty = {false}; break;
            case 5: pred_faulty = {true}; break;
            default: break;
        }
        std::vector<double> pred_pos;
        for (int k = 0; k < pred_count; ++k)
            pred_pos.push_back(static_cast<double>(shell.abs_start) +
                               pred.locations[static_cast<std::size_t>(k)] *
                                   static_cast<double>(kWindowLen));

        // match predicted reflections to the expected ones in order when the
        // counts agree, by nearest location otherwise
        std::vector<int> match_of_expected(expected.size(), -1);
        if (pred_count == static_cast<int>(expected.size())) {
            for (std::size_t k = 0; k < expected.size(); ++k)
                match_of_expected[k] = static_cast<int>(k);
        } else {
            for (int k = 0; k < pred_count; ++k) {
                int best = -1;
                double best_d = 1e18;
                for (std::size_t j = 0; j < expected.size(); ++j) {
                    if (match_of_expected[j] >= 0) continue;
                    double d = std::abs(pred_pos[static_cast<std::size_t>(k)] -
                                        static_cast<double>(expected[j]->peak_index));
                    if (d < best_d) {
                        best_d = d;
                        best = static_cast<int>(j);
                    }
                }
                if (best >= 0) match_of_expected[static_cast<std::size_t>(best)] = k;
            }
        }

        for (std::size_t j = 0; j < expected.size(); ++j) {
            int branch = expected[j]->branch_id;
            Verdict v;
            double loc = static_cast<double>(expected[j]->peak_index);
            int k = match_of_expected[j];
            if (k < 0) {
                v = Verdict::Lost;
            } else {
                v = pred_faulty[static_cast<std::size_t>(k)] ? Verdict::Degraded
                                                             : Verdict::Healthy;
                loc = pred_pos[static_cast<std::size_t>(k)];
            }
            votes[branch].push_back(v);
            locations[branch].push_back(loc);
            evidence[branch].push_back(
                {shell.abs_start, pred.event_class, 0.0, loc});
        }
    }

    std::vector<FaultReport> reports;
    for (const auto& entry : ref.entries) {
        const auto& vs = votes[entry.branch_id];
        int n_lost = 0, n_deg = 0, n_ok = 0;
        for (Verdict v : vs) {
            if (v == Verdict::Lost) ++n_lost;
            else if (v == Verdict::Degraded) ++n_deg;
            else ++n_ok;
        }
        Verdict final = Verdict::Healthy;
        if (n_lost + n_deg > n_ok) final = n_lost >= n_deg ? Verdict::Lost
                                                           : Verdict::Degraded;
        else if (n_lost + n_deg == n_ok && n_ok > 0 && n_lost + n_deg > 0)
            final = n_lost >= n_deg ? Verdict::Lost : Verdict::Degraded;

        double loc = static_cast<double>(entry.peak_index);
        if (final != Verdict::Lost && !locations[entry.branch_id].empty()) {
            double s = 0;
            for (double l : locations[entry.branch_id]) s += l;
            loc = s / static_cast<double>(locations[entry.branch_id].size());
        }
        FaultReport r = report_for(entry, final,
                                   final == Verdict::Healthy ? entry.level : 0.0,
                                   loc, sim);
        r.evidence = evidence[entry.branch_id];
        reports.push_back(std::move(r));
    }
    return reports;
}

bool any_fault(const std::vector<FaultReport>& reports) {
    return std::any_of(reports.begin(), reports.end(), [](const FaultReport& r) {
        return r.verdict != Verdict::Healthy;
    });
}

std::string render_report_text(const std::vector<FaultReport>& reports) {
    std::ostringstream out;
    for (const auto& r : reports) {
        out << "branch " << r.branch_id << ": " << to_string(r.verdict)
            << " level=" << r.measured_level << " drop_db=" << r.level_drop_db
            << " location=" << r.location_index << " (" << r.location_m
            << " m)\n";
    }
    return out.str();
}

std::string render_report_csv(const std::vector<FaultReport>& reports) {
    std::ostringstream out;
    out << "branch_id,verdict,measured_level,level_drop,level_drop_db,"
           "location_index,location_m\n";
    for (const auto& r : reports) {
        out << r.branch_id << "," << to_string(r.verdict) << ","
            << r.measured_level << "," << r.level_drop << "," << r.level_drop_db
            << "," << r.location_index << "," << r.location_m << "\n";
    }
    return out.str();
}

}  // namespace ponwatch
