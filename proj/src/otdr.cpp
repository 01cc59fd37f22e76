#include "ponwatch/otdr.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace ponwatch {

namespace {

constexpr double kLinearFloor = 1e-30;

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void PonTopology::validate(double min_gap_m, double max_gap_m) const {
    if (feeder_length_m <= 0.0)
        throw std::invalid_argument("topology: feeder_length_m must be > 0");
    if (!is_power_of_two(split_ratio))
        throw std::invalid_argument("topology: split_ratio must be a power of two");
    if (static_cast<int>(branches.size()) > split_ratio)
        throw std::invalid_argument("topology: more branches than splitter ports");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& b = branches[i];
        if (b.branch_id != static_cast<int>(i) + 1)
            throw std::invalid_argument("topology: branch_ids must be 1..B in order");
        if (b.length_m <= 0.0)
            throw std::invalid_argument("topology: branch length must be > 0");
        if (i > 0) {
            double gap = b.length_m - branches[i - 1].length_m;
            if (gap <= 0.0)
                throw std::invalid_argument(
                    "topology: branch lengths must be strictly increasing");
            if (gap < min_gap_m || gap > max_gap_m)
                throw std::invalid_argument(
                    "topology: consecutive branch length gap outside configured range");
        }
    }
}

PonTopology default_topology() {
    PonTopology t;
    t.feeder_length_m = 1000.0;
    t.split_ratio = 128;
    const double lengths[] = {3, 5, 10, 12, 18, 21, 26, 30};
    int id = 1;
    for (double L : lengths) t.branches.push_back({id++, L, true});
    return t;
}

double SimConfig::sample_spacing_m() const {
    return kSpeedOfLight * sample_interval_ns * 1e-9 / (2.0 * group_index);
}

double SimConfig::effective_splitter_loss_db(const PonTopology& topo) const {
    if (splitter_loss_db >= 0.0) return splitter_loss_db;
    return 10.0 * std::log10(static_cast<double>(topo.split_ratio));
}

void SimConfig::validate() const {
    if (pulse_width_ns <= 0 || sample_interval_ns <= 0 || group_index <= 0 ||
        attenuation_db_per_km <= 0 || reflector_return_db <= 0 ||
        trace_len == 0 || dynamic_range_db <= 0)
        throw std::invalid_argument("sim config: all parameters must be positive");
}

double FaultScenario::attenuation_for(int branch_id) const {
    auto it = branch_attenuation_db.find(branch_id);
    return it == branch_attenuation_db.end() ? 0.0 : it->second;
}

bool FaultScenario::is_break(int branch_id) const {
    return std::isinf(attenuation_for(branch_id));
}

std::size_t distance_to_index(double distance_m, const SimConfig& cfg) {
    if (distance_m < 0.0)
        throw std::invalid_argument("distance_to_index: negative distance");
    auto idx = static_cast<long long>(std::llround(distance_m / cfg.sample_spacing_m()));
    if (idx >= static_cast<long long>(cfg.trace_len))
        throw std::out_of_range("distance_to_index: beyond trace end");
    return static_cast<std::size_t>(idx);
}

double index_to_distance(std::size_t index, const SimConfig& cfg) {
    return static_cast<double>(index) * cfg.sample_spacing_m();
}

std::size_t splitter_index(const PonTopology& topo, const SimConfig& cfg) {
    return distance_to_index(topo.feeder_length_m, cfg);
}

std::size_t monitored_region_start(const PonTopology& topo,
                                   const SimConfig& cfg) {
    return splitter_index(topo, cfg) + 1;
}

std::size_t default_region_start(const PonTopology& topo, const SimConfig& cfg,
                                 std::size_t margin) {
    if (topo.branches.empty()) return splitter_index(topo, cfg);
    std::size_t first =
        distance_to_index(topo.feeder_length_m + topo.branches.front().length_m, cfg);
    return first > margin ? first - margin : 0;
}

OtdrTrace synthesize_clean_trace(const PonTopology& topo,
                                 const FaultScenario& scen,
                                 const SimConfig& cfg) {
    cfg.validate();
    if (!topo.branches.empty()) topo.validate();
    for (const auto& [id, att] : scen.branch_attenuation_db) {
        if (att < 0.0)
            throw std::invalid_argument("scenario: attenuation must be >= 0");
        if (id < 1 || id > static_cast<int>(topo.branches.size()))
            throw std::invalid_argument("scenario: unknown branch id");
    }

    const double dx = cfg.sample_spacing_m();
    const std::size_t n = cfg.trace_len;
    const std::size_t split_idx = splitter_index(topo, cfg);
    const double splitter_db = cfg.effective_splitter_loss_db(topo);
    const double split_rt = db_to_linear(-2.0 * splitter_db);
    const double extra_rt = db_to_linear(-2.0 * scen.feeder_extra_loss_db);

    // Reference single-path backscatter level at sample i (feeder decay,
    // plus round-trip splitter and inserted loss beyond the splitter).
    auto ref_level = [&](std::size_t i) {
        double d_km = static_cast<double>(i) * dx * 1e-3;
        double level = db_to_linear(-2.0 * cfg.attenuation_db_per_km * d_km);
        if (i > split_idx) level *= split_rt * extra_rt;
        return level;
    };

    OtdrTrace tr;
    tr.sample_interval_ns = cfg.sample_interval_ns;
    tr.samples.assign(n, 0.0);
    tr.baseline.assign(n, 0.0);

    // Feeder backscatter up to the splitter.
    for (std::size_t i = 0; i <= std::min(split_idx, n - 1); ++i)
        tr.baseline[i] = ref_level(i);

    // Beyond the splitter each branch carries an equal share of the
    // backscatter up to its own end; with all branches healthy the shares sum
    // back to the single-path level, i.e. a clean round-trip splitter step.
    // Faults sit at the branch end just before the reflector (a bad connector
    // or a cut there), so the branch's own backscatter is upstream of the
    // fault and keeps its healthy level; only the reflection is affected.
    const double share =
        topo.branches.empty() ? 0.0 : 1.0 / static_cast<double>(topo.branches.size());
    for (const auto& b : topo.branches) {
        std::size_t end_idx;
        try {
            end_idx = distance_to_index(topo.feeder_length_m + b.length_m, cfg);
        } catch (const std::out_of_range&) {
            throw std::invalid_argument("synthesize: branch end beyond trace length");
        }
        for (std::size_t i = split_idx + 1; i <= end_idx; ++i)
            tr.baseline[i] += share * ref_level(i);
    }

    tr.samples = tr.baseline;

    // Reflector peaks: Gaussian, FWHM = pulse width in samples, amplitude
    // referenced to the healthy single-path level so traces superpose
    // branch-by-branch in linear power.
    const double fwhm = cfg.fwhm_samples();
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double gain = db_to_linear(cfg.reflector_return_db) - 1.0;
    const int support = static_cast<int>(std::ceil(5.0 * sigma));

    for (const auto& b : topo.branches) {
        if (!b.has_reflector || scen.is_break(b.branch_id)) continue;
        std::size_t center =
            distance_to_index(topo.feeder_length_m + b.length_m, cfg);
        double att_rt = db_to_linear(-2.0 * scen.attenuation_for(b.branch_id));
        double amp = ref_level(center) * gain * att_rt;
        for (int k = -support; k <= support; ++k) {
            long long i = static_cast<long long>(center) + k;
            if (i < 0 || i >= static_cast<long long>(n)) continue;
            tr.samples[static_cast<std::size_t>(i)] +=
                amp * std::exp(-0.5 * (k / sigma) * (k / sigma));
        }
        tr.ground_truth.push_back({b.branch_id, center, amp});
    }
    return tr;
}

OtdrTrace normalize_trace(const OtdrTrace& linear, const SimConfig& cfg) {
    if (linear.normalized)
        throw std::invalid_argument("normalize_trace: trace already normalized");
    if (linear.samples.empty())
        throw std::invalid_argument("normalize_trace: empty trace");

    auto to_db = [](double v) {
        return 10.0 * std::log10(std::max(v, kLinearFloor));
    };
    const double floor_db = to_db(linear.samples.front()) - cfg.dynamic_range_db;
    auto clip = [&](double v) { return std::max(to_db(v), floor_db); };

    double mn = clip(linear.samples[0]), mx = mn;
    for (double v : linear.samples) {
        double d = clip(v);
        mn = std::min(mn, d);
        mx = std::max(mx, d);
    }
    if (mx - mn < 1e-12)
        throw std::invalid_argument("normalize_trace: degenerate (constant) trace");

    OtdrTrace out = linear;
    out.normalized = true;
    auto norm = [&](double v) { return (clip(v) - mn) / (mx - mn); };
    for (auto& v : out.samples) v = norm(v);
    for (auto& v : out.baseline) v = norm(v);
    for (auto& p : out.ground_truth) {
        double total = linear.samples[p.peak_index];
        double base = linear.baseline[p.peak_index];
        p.peak_height = norm(total) - norm(base);
    }
    return out;
}

OtdrTrace add_awgn(const OtdrTrace& trace, double pnr_db, std::uint64_t seed) {
    if (!trace.normalized)
        throw std::invalid_argument("add_awgn: trace must be normalized first");
    if (!std::isfinite(pnr_db))
        throw std::invalid_argument("add_awgn: pnr_db must be finite");

    OtdrTrace out = trace;
    double h_max = 0.0;
    for (const auto& p : trace.ground_truth)
        h_max = std::max(h_max, p.peak_height);
    if (h_max <= 0.0) {
        h_max = *std::max_element(trace.samples.begin(), trace.samples.end());
        out.notes.push_back("pnr reference fell back to max(samples): no peaks");
    }
    const double sigma = h_max / std::pow(10.0, pnr_db / 10.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : out.samples) v += noise(rng);
    out.pnr_db = pnr_db;
    return out;
}

OtdrTrace extract_region(const OtdrTrace& trace, std::size_t start,
                         std::size_t len) {
    if (start + len > trace.samples.size())
        throw std::out_of_range("extract_region: region exceeds trace");
    if (len == 0) throw std::invalid_argument("extract_region: empty region");

    OtdrTrace out;
    out.sample_interval_ns = trace.sample_interval_ns;
    out.pnr_db = trace.pnr_db;
    out.normalized = trace.normalized;
    out.start_index = trace.start_index + start;
    out.notes = trace.notes;
    out.samples.assign(trace.samples.begin() + start,
                       trace.samples.begin() + start + len);
    if (!trace.baseline.empty())
        out.baseline.assign(trace.baseline.begin() + start,
                            trace.baseline.begin() + start + len);
    for (const auto& p : trace.ground_truth) {
        if (p.peak_index >= start && p.peak_index < start + len) {
            out.ground_truth.push_back(
                {p.branch_id, p.peak_index - start, p.peak_height});
        } else {
            ++out.dropped_peaks;
        }
    }
    if (out.dropped_peaks > 0)
        out.notes.push_back("extract_region dropped " +
                            std::to_string(out.dropped_peaks) + " peak(s)");
    return out;
}

OtdrTrace make_normalized_region(const PonTopology& topo,
                                 const FaultScenario& scen,
                                 const SimConfig& cfg, std::size_t start,
                                 std::size_t len) {
    OtdrTrace clean = synthesize_clean_trace(topo, scen, cfg);
    return normalize_trace(extract_region(clean, start, len), cfg);
}

}  // namespace ponwatch
