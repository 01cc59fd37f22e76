// ponwatch: synthesize PON OTDR traces, build datasets, train and evaluate
// the fault-monitoring models, and run the reference-trace monitor.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ponwatch/config.hpp"
#include "ponwatch/monitor.hpp"
#include "ponwatch/serialize.hpp"

namespace fs = std::filesystem;
using namespace ponwatch;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
};

ConfigMap merged_config(const CommonOpts& o) {
    ConfigMap cfg;
    if (!o.config_path.empty()) cfg = parse_config_file(o.config_path);
    for (const auto& kv : o.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got: " + kv);
        cfg[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return cfg;
}

FaultScenario scenario_from_flags(const std::vector<std::string>& faults,
                                  double feeder_extra_db) {
    FaultScenario scen;
    scen.feeder_extra_loss_db = feeder_extra_db;
    for (const auto& f : faults) {
        auto colon = f.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("--fault expects branch:db or branch:break, got: " + f);
        int branch = std::stoi(f.substr(0, colon));
        std::string level = f.substr(colon + 1);
        scen.branch_attenuation_db[branch] =
            level == "break" ? FaultScenario::kBreak : std::stod(level);
    }
    return scen;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "key=value config file");
    cmd->add_option("--set", o.overrides, "override a config key (key=value)");
    cmd->add_option("--seed", o.seed, "RNG seed");
}

std::vector<std::string> branch_class_names(int n) {
    std::vector<std::string> names = {"normal"};
    for (int i = 1; i < n; ++i) names.push_back("faulty_branch_" + std::to_string(i));
    return names;
}

std::vector<std::string> event_class_names() {
    std::vector<std::string> names;
    for (int c = 0; c < kNumEventClasses; ++c) names.push_back("C_" + std::to_string(c));
    return names;
}

std::vector<std::string> count_class_names() {
    return {"no_reflection", "one_reflection", "two_reflections"};
}

void write_metrics(const std::string& path,
                   const std::vector<std::pair<std::string, double>>& kv,
                   std::uint64_t seed, std::uint64_t digest) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "# ponwatch v1 seed=" << seed << " digest=" << std::hex << digest
      << std::dec << "\n";
    f << "metric,value\n" << std::setprecision(10);
    for (const auto& [k, v] : kv) f << k << "," << v << "\n";
}

int cmd_simulate(const CommonOpts& common, const std::string& out,
                 const std::vector<std::string>& faults, double feeder_extra,
                 double pnr) {
    ConfigMap cfg = merged_config(common);
    PonTopology topo = topology_from_config(cfg);
    SimConfig sim = simconfig_from_config(cfg);
    FaultScenario scen = scenario_from_flags(faults, feeder_extra);

    OtdrTrace region = make_normalized_region(
        topo, scen, sim, default_region_start(topo, sim), kNetworkSeqLen);
    OtdrTrace noisy = add_awgn(region, pnr, derive_seed(common.seed, 1));
    export_trace_csv(noisy, out, common.seed, config_digest(cfg));
    for (const auto& p : region.ground_truth)
        std::cout << "branch " << p.branch_id << " peak_index "
                  << region.start_index + p.peak_index << " height "
                  << p.peak_height << "\n";
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_gen_dataset(const CommonOpts& common, const std::string& kind,
                    int per_class, double pnr_min, double pnr_max,
                    const std::vector<int>& fault_branches,
                    const std::string& out, const std::string& csv) {
    ConfigMap cfg = merged_config(common);
    PonTopology topo = topology_from_config(cfg);
    SimConfig sim = simconfig_from_config(cfg);

    if (kind == "network") {
        NetworkRecipe recipe;
        recipe.per_class_count = per_class;
        recipe.pnr_min_db = pnr_min;
        recipe.pnr_max_db = pnr_max;
        recipe.seed = common.seed;
        NetworkDataset ds = build_network_dataset(topo, sim, recipe);
        save_dataset(ds, out);
        if (!csv.empty()) export_dataset_csv(ds, csv);
        std::cout << "wrote " << out << " (" << ds.records.size() << " records)\n";
    } else if (kind == "window") {
        GenericRecipe recipe;
        recipe.per_class_count = per_class;
        recipe.pnr_min_db = pnr_min;
        recipe.pnr_max_db = pnr_max;
        if (!fault_branches.empty()) recipe.attenuator_branches = fault_branches;
        recipe.seed = common.seed;
        WindowDataset ds = build_generic_dataset(topo, sim, recipe);
        save_dataset(ds, out);
        if (!csv.empty()) export_dataset_csv(ds, csv);
        std::cout << "wrote " << out << " (" << ds.records.size() << " records)\n";
    } else {
        throw std::runtime_error("--kind must be 'network' or 'window'");
    }
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& model_kind,
              const std::string& dataset_path, const std::string& out,
              const std::string& history_path, TrainConfig tc,
              const std::string& hidden_csv) {
    tc.seed = common.seed;
    if (model_kind == "branch") {
        NetworkDataset ds = load_network_dataset(dataset_path);
        std::vector<int> hidden = {64, 32, 16};
        if (!hidden_csv.empty()) {
            hidden.clear();
            std::istringstream ss(hidden_csv);
            std::string tok;
            while (std::getline(ss, tok, ',')) hidden.push_back(std::stoi(tok));
        }
        BranchClassifier model = BranchClassifier::init(common.seed, hidden);
        TrainHistory hist = train_branch_classifier(model, ds, tc);
        save_checkpoint(model, out, common.seed, ds.config_digest);
        if (!history_path.empty())
            export_history_csv(hist, history_path, common.seed, ds.config_digest);
        std::cout << "best epoch " << hist.best_epoch << " val loss "
                  << hist.best_val_loss << "\n";
    } else if (model_kind == "generic-a" || model_kind == "generic-b") {
        WindowDataset ds = load_window_dataset(dataset_path);
        TrainHistory hist;
        if (model_kind == "generic-a") {
            GenericModelA model = GenericModelA::init(common.seed);
            hist = train_generic_a(model, ds, tc);
            save_checkpoint(model, out, common.seed, ds.config_digest);
        } else {
            GenericModelB model = GenericModelB::init(common.seed);
            hist = train_generic_b(model, ds, tc);
            save_checkpoint(model, out, common.seed, ds.config_digest);
        }
        if (!history_path.empty())
            export_history_csv(hist, history_path, common.seed, ds.config_digest);
        std::cout << "best epoch " << hist.best_epoch << " val loss "
                  << hist.best_val_loss << "\n";
    } else {
        throw std::runtime_error("--model must be branch, generic-a or generic-b");
    }
    std::cout << "wrote " << out << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt,
             const std::string& dataset_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::string kind = peek_checkpoint_kind(ckpt);
    if (kind == "branch") {
        BranchClassifier model = load_branch_checkpoint(ckpt);
        NetworkDataset ds = load_network_dataset(dataset_path);
        ConfusionMatrix cm = evaluate_classifier(model, ds, kTest);
        export_confusion_csv(cm, out_dir + "/branch_confusion.csv", common.seed,
                             ds.config_digest,
                             branch_class_names(model.num_classes()));
        Mat norm = cm.row_normalized();
        write_metrics(out_dir + "/branch_metrics.csv",
                      {{"branch_accuracy", cm.accuracy()},
                       {"branch_normal_row_rate", norm(0, 0)}},
                      common.seed, ds.config_digest);
        std::cout << "accuracy " << cm.accuracy() << "\n";
    } else if (kind == "generic-a") {
        GenericModelA model = load_model_a_checkpoint(ckpt);
        WindowDataset ds = load_window_dataset(dataset_path);
        ModelAEval ev = evaluate_model_a(model, ds, kTest);
        export_confusion_csv(ev.type_confusion, out_dir + "/generic_a_confusion.csv",
                             common.seed, ds.config_digest, count_class_names());
        export_histogram_csv(ev.regression.pos_hist,
                             out_dir + "/generic_a_pos_hist.csv", common.seed,
                             ds.config_digest);
        export_histogram_csv(ev.regression.lvl_hist,
                             out_dir + "/generic_a_lvl_hist.csv", common.seed,
                             ds.config_digest);
        write_metrics(out_dir + "/generic_a_metrics.csv",
                      {{"a_type_accuracy", ev.type_confusion.accuracy()},
                       {"a_pos_mae_samples", ev.regression.pos_mae_samples},
                       {"a_lvl_mae", ev.regression.lvl_mae}},
                      common.seed, ds.config_digest);
        std::cout << "type accuracy " << ev.type_confusion.accuracy()
                  << " pos MAE " << ev.regression.pos_mae_samples
                  << " lvl MAE " << ev.regression.lvl_mae << "\n";
    } else if (kind == "generic-b") {
        GenericModelB model = load_model_b_checkpoint(ckpt);
        WindowDataset ds = load_window_dataset(dataset_path);
        ModelBEval ev = evaluate_model_b(model, ds, kTest);
        export_confusion_csv(ev.event_confusion, out_dir + "/generic_b_confusion.csv",
                             common.seed, ds.config_digest, event_class_names());
        export_histogram_csv(ev.regression.pos_hist,
                             out_dir + "/generic_b_pos_hist.csv", common.seed,
                             ds.config_digest);
        write_metrics(out_dir + "/generic_b_metrics.csv",
                      {{"b_event_accuracy", ev.event_confusion.accuracy()},
                       {"b_loc_mae_samples", ev.regression.pos_mae_samples}},
                      common.seed, ds.config_digest);
        std::cout << "event accuracy " << ev.event_confusion.accuracy()
                  << " loc MAE " << ev.regression.pos_mae_samples << "\n";
    } else {
        throw std::runtime_error("unknown checkpoint kind: " + kind);
    }
    return 0;
}

int cmd_monitor(const CommonOpts& common, const std::string& ckpt,
                const std::vector<std::string>& faults, double feeder_extra,
                double pnr, double threshold, const std::string& out) {
    ConfigMap cfg = merged_config(common);
    PonTopology topo = topology_from_config(cfg);
    SimConfig sim = simconfig_from_config(cfg);
    FaultScenario scen = scenario_from_flags(faults, feeder_extra);

    const std::size_t start = monitored_region_start(topo, sim);
    OtdrTrace reference =
        make_normalized_region(topo, FaultScenario{}, sim, start, kNetworkSeqLen);
    ReferenceMap ref = build_reference(reference, topo);

    OtdrTrace trace = make_normalized_region(topo, scen, sim, start, kNetworkSeqLen);
    OtdrTrace noisy = add_awgn(trace, pnr, derive_seed(common.seed, 7));

    MonitorConfig mc;
    mc.threshold = threshold;
    std::vector<FaultReport> reports;
    std::string kind = peek_checkpoint_kind(ckpt);
    if (kind == "generic-a") {
        GenericModelA model = load_model_a_checkpoint(ckpt);
        reports = monitor_with_model_a(noisy, model, ref, mc, &sim);
    } else if (kind == "generic-b") {
        GenericModelB model = load_model_b_checkpoint(ckpt);
        reports = monitor_with_model_b(noisy, model, ref, mc, &sim);
    } else {
        throw std::runtime_error("monitor needs a generic-a or generic-b checkpoint");
    }

    std::cout << render_report_text(reports);
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("cannot write " + out);
        f << "# ponwatch v1 seed=" << common.seed << " digest=" << std::hex
          << config_digest(cfg) << std::dec << "\n";
        f << render_report_csv(reports);
    }
    return any_fault(reports) ? 2 : 0;
}

int cmd_report(const std::string& metrics_dir) {
    const std::vector<std::string> expected = {
        "branch_metrics.csv", "generic_a_metrics.csv", "generic_b_metrics.csv"};
    std::vector<std::string> missing;
    bool any = false;
    std::cout << "metric,value\n";
    for (const auto& name : expected) {
        fs::path p = fs::path(metrics_dir) / name;
        if (!fs::exists(p)) {
            missing.push_back(name);
            continue;
        }
        any = true;
        std::ifstream f(p);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#' || line == "metric,value") continue;
            std::cout << line << "\n";
        }
    }
    for (const auto& m : missing)
        std::cerr << "missing metrics file: " << m << "\n";
    if (!any) {
        std::cerr << "no metrics found in " << metrics_dir
                  << "; expected one of:";
        for (const auto& e : expected) std::cerr << " " << e;
        std::cerr << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PON OTDR fault-monitoring pipeline"};
    app.require_subcommand(1);

    CommonOpts common;

    auto* simulate = app.add_subcommand("simulate", "synthesize one noisy trace");
    std::string sim_out = "trace.csv";
    std::vector<std::string> sim_faults;
    double sim_extra = 0.0, sim_pnr = 25.0;
    add_common(simulate, common);
    simulate->add_option("--out", sim_out, "trace CSV path");
    simulate->add_option("--fault", sim_faults, "branch:db or branch:break");
    simulate->add_option("--feeder-extra-loss", sim_extra, "dB after the feeder");
    simulate->add_option("--pnr", sim_pnr, "peak-to-noise ratio in dB");

    auto* gen = app.add_subcommand("gen-dataset", "build a labeled dataset");
    std::string gen_kind = "network", gen_out = "dataset.ponds", gen_csv;
    int gen_per_class = 1000;
    double gen_pnr_min = 5.0, gen_pnr_max = 30.0;
    add_common(gen, common);
    gen->add_option("--kind", gen_kind, "network | window");
    gen->add_option("--per-class", gen_per_class, "records per class");
    gen->add_option("--pnr-min", gen_pnr_min, "lowest PNR in dB");
    gen->add_option("--pnr-max", gen_pnr_max, "highest PNR in dB");
    std::vector<int> gen_fault_branches;
    gen->add_option("--fault-branches", gen_fault_branches,
                    "window kind: branches eligible for attenuators");
    gen->add_option("--out", gen_out, "output dataset path");
    gen->add_option("--csv", gen_csv, "optional CSV export path");

    auto* train = app.add_subcommand("train", "train a model from a dataset");
    std::string train_model = "branch", train_ds, train_out = "model.ckpt";
    std::string train_hist, train_hidden;
    TrainConfig tc;
    add_common(train, common);
    train->add_option("--model", train_model, "branch | generic-a | generic-b");
    train->add_option("--dataset", train_ds, "dataset path")->required();
    train->add_option("--out", train_out, "checkpoint path");
    train->add_option("--history", train_hist, "loss-curve CSV path");
    train->add_option("--epochs", tc.max_epochs, "max epochs");
    train->add_option("--lr", tc.learning_rate, "Adam learning rate");
    train->add_option("--batch", tc.batch_size, "mini-batch size");
    train->add_option("--patience", tc.patience, "early-stop patience");
    train->add_option("--hidden", train_hidden, "GRU widths, comma separated");
    train->add_option("--w-cls", tc.weights.cls, "classification loss weight");
    train->add_option("--w-pos", tc.weights.pos, "position loss weight");
    train->add_option("--w-lvl", tc.weights.lvl, "level loss weight");
    train->add_flag("--verbose", tc.verbose, "per-epoch loss to stderr");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test split");
    std::string eval_ckpt, eval_ds, eval_out = "metrics";
    add_common(eval, common);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--dataset", eval_ds, "dataset path")->required();
    eval->add_option("--out", eval_out, "metrics output directory");

    auto* monitor = app.add_subcommand("monitor", "run the reference-trace monitor");
    std::string mon_ckpt, mon_out;
    std::vector<std::string> mon_faults;
    double mon_extra = 0.0, mon_pnr = 25.0, mon_threshold = 0.2;
    add_common(monitor, common);
    monitor->add_option("--checkpoint", mon_ckpt, "generic model checkpoint")->required();
    monitor->add_option("--fault", mon_faults, "branch:db or branch:break");
    monitor->add_option("--feeder-extra-loss", mon_extra, "dB after the feeder");
    monitor->add_option("--pnr", mon_pnr, "peak-to-noise ratio in dB");
    monitor->add_option("--threshold", mon_threshold, "relative level-drop threshold");
    monitor->add_option("--out", mon_out, "report CSV path");

    auto* report = app.add_subcommand("report", "summarize metric CSVs");
    std::string report_dir = "metrics";
    report->add_option("--metrics", report_dir, "metrics directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed())
            return cmd_simulate(common, sim_out, sim_faults, sim_extra, sim_pnr);
        if (gen->parsed())
            return cmd_gen_dataset(common, gen_kind, gen_per_class, gen_pnr_min,
                                   gen_pnr_max, gen_fault_branches, gen_out,
                                   gen_csv);
        if (train->parsed())
            return cmd_train(common, train_model, train_ds, train_out, train_hist,
                             tc, train_hidden);
        if (eval->parsed()) return cmd_eval(common, eval_ckpt, eval_ds, eval_out);
        if (monitor->parsed())
            return cmd_monitor(common, mon_ckpt, mon_faults, mon_extra, mon_pnr,
                               mon_threshold, mon_out);
        if (report->parsed()) return cmd_report(report_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
