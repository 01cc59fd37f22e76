#include "ponwatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ponwatch/config.hpp"

namespace ponwatch {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t topo_digest(const PonTopology& topo, const SimConfig& cfg,
                          const std::string& recipe_text) {
    std::ostringstream ss;
    ss << topo.feeder_length_m << "," << topo.split_ratio << ";";
    for (const auto& b : topo.branches) ss << b.length_m << ",";
    ss << ";" << cfg.pulse_width_ns << "," << cfg.sample_interval_ns << ","
       << cfg.group_index << "," << cfg.attenuation_db_per_km << ","
       << cfg.splitter_loss_db << "," << cfg.reflector_return_db << ","
       << cfg.trace_len << "," << cfg.dynamic_range_db << ";" << recipe_text;
    return fnv1a64(ss.str());
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

int reflections_for_class(int event_class) {
    switch (event_class) {
        case 0: case 1: case 2: case 3: return 2;
        case 4: case 5: return 1;
        case 6: return 0;
    }
    throw std::invalid_argument("unknown event class");
}

int event_class_from_flags(const std::vector<bool>& faulty) {
    switch (faulty.size()) {
        case 0:
            return 6;
        case 1:
            return faulty[0] ? 5 : 4;
        case 2:
            if (faulty[0] && faulty[1]) return 3;
            if (faulty[0]) return 1;
            if (faulty[1]) return 2;
            return 0;
    }
    throw std::invalid_argument("event class defined for at most 2 reflections");
}

std::vector<double> normalize_minmax(const std::vector<double>& values) {
    if (values.empty())
        throw std::invalid_argument("normalize_minmax: empty input");
    auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    double mn = *mn_it, mx = *mx_it;
    if (mx - mn < 1e-300)
        throw std::invalid_argument("normalize_minmax: constant input");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = (values[i] - mn) / (mx - mn);
    return out;
}

OtdrTrace reduce_reflection_height(const OtdrTrace& trace, int branch_id,
                                   double factor, const SimConfig& cfg) {
    if (!trace.normalized)
        throw std::invalid_argument("reduce_reflection_height: trace not normalized");
    if (factor < 0.0 || factor > 1.0)
        throw std::invalid_argument("reduce_reflection_height: factor outside [0,1]");
    auto it = std::find_if(trace.ground_truth.begin(), trace.ground_truth.end(),
                           [&](const PeakTruth& p) { return p.branch_id == branch_id; });
    if (it == trace.ground_truth.end())
        throw std::invalid_argument("reduce_reflection_height: branch has no peak");

    OtdrTrace out = trace;
    const long center = static_cast<long>(it->peak_index);
    const long radius = std::lround(1.5 * cfg.fwhm_samples());
    for (long i = center - radius; i <= center + radius; ++i) {
        if (i < 0 || i >= static_cast<long>(out.samples.size())) continue;
        auto u = static_cast<std::size_t>(i);
        out.samples[u] = out.baseline[u] + factor * (out.samples[u] - out.baseline[u]);
    }
    for (auto& p : out.ground_truth)
        if (p.branch_id == branch_id) p.peak_height *= factor;
    return out;
}

NetworkDataset build_network_dataset(const PonTopology& topo,
                                     const SimConfig& cfg,
                                     const NetworkRecipe& recipe) {
    if (recipe.per_class_count <= 0)
        throw std::invalid_argument("build_network_dataset: per_class_count <= 0");
    topo.validate();
    const int num_branches = static_cast<int>(topo.branches.size());
    const std::size_t start = default_region_start(topo, cfg);
    const OtdrTrace base =
        make_normalized_region(topo, FaultScenario{}, cfg, start, kNetworkSeqLen);

    NetworkDataset ds;
    ds.seed = recipe.seed;
    {
        std::ostringstream rs;
        rs << "network," << recipe.per_class_count << "," << recipe.pnr_min_db
           << "," << recipe.pnr_max_db << "," << recipe.fault_min_db << ","
           << recipe.fault_max_db << "," << recipe.break_fraction << ","
           << recipe.seed;
        ds.config_digest = topo_digest(topo, cfg, rs.str());
    }

    std::uint64_t index = 0;
    for (int cls = 0; cls <= num_branches; ++cls) {
        for (int j = 0; j < recipe.per_class_count; ++j, ++index) {
            std::mt19937_64 rng(derive_seed(recipe.seed, index));
            std::uniform_real_distribution<double> upnr(recipe.pnr_min_db,
                                                        recipe.pnr_max_db);
            std::uniform_real_distribution<double> ufault(recipe.fault_min_db,
                                                          recipe.fault_max_db);
            std::uniform_real_distribution<double> u01(0.0, 1.0);

            OtdrTrace tr = base;
            if (cls > 0) {
                double factor = 0.0;  // break
                if (u01(rng) >= recipe.break_fraction) {
                    double one_way_db = ufault(rng);
                    factor = std::pow(10.0, -2.0 * one_way_db / 10.0);
                }
                tr = reduce_reflection_height(base, cls, factor, cfg);
            }
            double pnr = upnr(rng);
            OtdrTrace noisy = add_awgn(tr, pnr, rng());

            NetworkSample s;
            s.values = std::move(noisy.samples);
            s.label = cls;
            s.pnr_db = pnr;
            ds.records.push_back(std::move(s));
        }
    }
    split_dataset(ds, {0.6, 0.2, 0.2}, recipe.seed);
    return ds;
}

std::vector<WindowShell> window_trace(const OtdrTrace& trace,
                                      std::size_t window_len, std::size_t stride,
                                      std::size_t start) {
    if (window_len == 0 || stride == 0)
        throw std::invalid_argument("window_trace: zero window or stride");
    if (start + window_len > trace.samples.size())
        throw std::invalid_argument("window_trace: trace shorter than one window");
    std::vector<WindowShell> shells;
    for (std::size_t at = start; at + window_len <= trace.samples.size();
         at += stride) {
        WindowShell w;
        w.values.assign(trace.samples.begin() + at,
                        trace.samples.begin() + at + window_len);
        w.abs_start = trace.start_index + at;
        shells.push_back(std::move(w));
    }
    return shells;
}

std::optional<WindowSample> label_window(const WindowShell& shell,
                                         const std::vector<ExpectedPeak>& peaks,
                                         const FaultinessRule& rule) {
    const std::size_t w = shell.values.size();
    std::vector<const ExpectedPeak*> inside;
    for (const auto& p : peaks)
        if (p.abs_index >= shell.abs_start && p.abs_index < shell.abs_start + w)
            inside.push_back(&p);
    if (inside.size() > 2) return std::nullopt;

    std::sort(inside.begin(), inside.end(),
              [](const ExpectedPeak* a, const ExpectedPeak* b) {
                  return a->abs_index < b->abs_index;
              });
    std::vector<bool> faulty;
    for (const auto* p : inside)
        faulty.push_back(p->actual_height <
                         rule.faulty_level_threshold * p->ref_height);

    WindowSample s;
    s.values = shell.values;
    s.abs_start = shell.abs_start;
    s.event_class = event_class_from_flags(faulty);
    for (std::size_t k = 0; k < inside.size(); ++k) {
        s.positions[k] = static_cast<double>(inside[k]->abs_index - shell.abs_start) /
                         static_cast<double>(w);
        s.levels[k] = inside[k]->actual_height;
        s.target_mask[k] = true;
    }
    return s;
}

bool window_is_guarded(std::size_t window_start, std::size_t window_len,
                       const std::vector<std::size_t>& peak_indices,
                       std::size_t guard) {
    const auto start = static_cast<long>(window_start);
    const auto len = static_cast<long>(window_len);
    const auto g = static_cast<long>(guard);
    for (std::size_t p : peak_indices) {
        long rel = static_cast<long>(p) - start;
        bool inside = rel >= g && rel <= len - 1 - g;
        bool outside = rel <= -g - 1 || rel >= len + g;
        if (!inside && !outside) return false;
    }
    return true;
}

WindowDataset build_generic_dataset(const PonTopology& topo,
                                    const SimConfig& cfg,
                                    const GenericRecipe& recipe) {
    if (recipe.per_class_count <= 0)
        throw std::invalid_argument("build_generic_dataset: per_class_count <= 0");
    topo.validate();
    for (int b : recipe.attenuator_branches)
        if (b < 1 || b > static_cast<int>(topo.branches.size()))
            throw std::invalid_argument("build_generic_dataset: bad attenuator branch");

    const std::size_t base_start = monitored_region_start(topo, cfg);
    const std::size_t region_len = kNetworkSeqLen;
    // cycle the window grid over half-window shifts so peaks appear at every
    // guarded in-window offset across the dataset
    const std::size_t n_shifts = kWindowLen / 2;
    std::vector<OtdrTrace> references;
    for (std::size_t s = 0; s < n_shifts; ++s)
        references.push_back(make_normalized_region(topo, FaultScenario{}, cfg,
                                                    base_start + s, region_len));

    WindowDataset ds;
    ds.seed = recipe.seed;
    {
        std::ostringstream rs;
        rs << "window," << recipe.per_class_count << "," << recipe.pnr_min_db
           << "," << recipe.pnr_max_db << "," << recipe.fault_min_db << ","
           << recipe.fault_max_db << "," << recipe.break_fraction << ","
           << recipe.rule.faulty_level_threshold << "," << recipe.seed;
        for (int b : recipe.attenuator_branches) rs << "," << b;
        ds.config_digest = topo_digest(topo, cfg, rs.str());
    }

    std::vector<std::vector<WindowSample>> buckets(kNumEventClasses);
    const std::size_t target = static_cast<std::size_t>(recipe.per_class_count);
    const std::size_t subsets = 1ull << recipe.attenuator_branches.size();

    auto all_full = [&]() {
        return std::all_of(buckets.begin(), buckets.end(),
                           [&](const auto& b) { return b.size() >= target; });
    };

    constexpr std::uint64_t kMaxInstances = 400000;
    std::uint64_t instance = 0;
    for (; instance < kMaxInstances && !all_full(); ++instance) {
        std::mt19937_64 rng(derive_seed(recipe.seed ^ 0x57a9u, instance));
        std::uniform_real_distribution<double> upnr(recipe.pnr_min_db,
                                                    recipe.pnr_max_db);
        std::uniform_real_distribution<double> ufault(recipe.fault_min_db,
                                                      recipe.fault_max_db);
        std::uniform_real_distribution<double> u01(0.0, 1.0);

        // cycle the attenuator placements so every class keeps appearing
        std::size_t subset = instance % subsets;
        FaultScenario scen;
        for (std::size_t k = 0; k < recipe.attenuator_branches.size(); ++k) {
            if (!(subset & (1ull << k))) continue;
            int branch = recipe.attenuator_branches[k];
            scen.branch_attenuation_db[branch] =
                u01(rng) < recipe.break_fraction ? FaultScenario::kBreak
                                                 : ufault(rng);
        }

        const std::size_t start = base_start + instance % n_shifts;
        const OtdrTrace& reference = references[instance % n_shifts];
        OtdrTrace clean = make_normalized_region(topo, scen, cfg, start, region_len);

        std::vector<ExpectedPeak> expected;
        std::vector<std::size_t> peak_indices;
        for (const auto& rp : reference.ground_truth) {
            ExpectedPeak e;
            e.branch_id = rp.branch_id;
            e.abs_index = reference.start_index + rp.peak_index;
            e.ref_height = rp.peak_height;
            e.actual_height = 0.0;  // vanished unless found below
            for (const auto& ap : clean.ground_truth)
                if (ap.branch_id == rp.branch_id) e.actual_height = ap.peak_height;
            peak_indices.push_back(e.abs_index);
            expected.push_back(e);
        }

        double pnr = upnr(rng);
        OtdrTrace noisy = add_awgn(clean, pnr, rng());
        // half-window stride + the 15 grid shifts above cover every in-window
        // peak alignment the monitor can produce
        for (const auto& shell : window_trace(noisy, kWindowLen, kWindowLen / 2)) {
            // edge-cut peaks make the label ambiguous; the monitor skips the
            // same windows
            if (!window_is_guarded(shell.abs_start, kWindowLen, peak_indices))
                continue;
            auto sample = label_window(shell, expected, recipe.rule);
            if (!sample) continue;  // 3+ reflections, rejected
            sample->pnr_db = pnr;
            auto& bucket = buckets[static_cast<std::size_t>(sample->event_class)];
            if (bucket.size() < target) bucket.push_back(std::move(*sample));
        }
    }

    for (int c = 0; c < kNumEventClasses; ++c)
        if (buckets[static_cast<std::size_t>(c)].size() < target)
            throw std::runtime_error(
                "build_generic_dataset: class C_" + std::to_string(c) +
                " has only " +
                std::to_string(buckets[static_cast<std::size_t>(c)].size()) +
                " of " + std::to_string(target) + " samples");

    for (auto& bucket : buckets)
        for (auto& s : bucket) ds.records.push_back(std::move(s));
    split_dataset(ds, {0.6, 0.2, 0.2}, recipe.seed);
    return ds;
}

std::vector<SplitTag> split_by_class(const std::vector<int>& class_of_record,
                                     const std::array<double, 3>& fractions,
                                     std::uint64_t seed) {
    double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must sum to 1");

    std::map<int, std::vector<std::size_t>> per_class;
    for (std::size_t i = 0; i < class_of_record.size(); ++i)
        per_class[class_of_record[i]].push_back(i);

    std::vector<SplitTag> tags(class_of_record.size(), kTrain);
    std::mt19937_64 rng(derive_seed(seed, 0xdeadu));
    for (auto& [cls, idx] : per_class) {
        if (idx.size() < 3 && fractions[1] > 0 && fractions[2] > 0)
            throw std::invalid_argument("split: class " + std::to_string(cls) +
                                        " has fewer than 3 records");
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n = idx.size();
        // largest-remainder apportionment, exact to within one record
        std::array<std::size_t, 3> count{};
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            double exact = fractions[static_cast<std::size_t>(s)] * static_cast<double>(n);
            count[static_cast<std::size_t>(s)] = static_cast<std::size_t>(exact);
            rem[static_cast<std::size_t>(s)] = exact - std::floor(exact);
            assigned += count[static_cast<std::size_t>(s)];
        }
        while (assigned < n) {
            int best = 0;
            for (int s = 1; s < 3; ++s)
                if (rem[static_cast<std::size_t>(s)] > rem[static_cast<std::size_t>(best)] + 1e-12)
                    best = s;
            ++count[static_cast<std::size_t>(best)];
            rem[static_cast<std::size_t>(best)] = -1.0;
            ++assigned;
        }
        std::size_t at = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < count[static_cast<std::size_t>(s)]; ++k)
                tags[idx[at++]] = static_cast<SplitTag>(s);
    }
    return tags;
}

void split_dataset(NetworkDataset& ds, const std::array<double, 3>& fractions,
                   std::uint64_t seed) {
    std::vector<int> classes;
    classes.reserve(ds.records.size());
    for (const auto& r : ds.records) classes.push_back(r.label);
    ds.split = split_by_class(classes, fractions, seed);
}

void split_dataset(WindowDataset& ds, const std::array<double, 3>& fractions,
                   std::uint64_t seed) {
    std::vector<int> classes;
    classes.reserve(ds.records.size());
    for (const auto& r : ds.records) classes.push_back(r.event_class);
    ds.split = split_by_class(classes, fractions, seed);
}

}  // namespace ponwatch
