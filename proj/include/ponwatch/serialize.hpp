#pragma once

// On-disk formats: the PONDS1 little-endian dataset container, structured
// text checkpoints with hex-encoded parameter blocks, and CSV exports for
// traces, confusion matrices, histograms and loss curves.

#include <string>

#include "ponwatch/dataset.hpp"
#include "ponwatch/models.hpp"

namespace ponwatch {

// Dataset container: header {magic "PONDS1", version u32, kind u32,
// count u64, config digest u64, seed u64}, then fixed-size records, each
// carrying its split tag.
void save_dataset(const NetworkDataset& ds, const std::string& path);
void save_dataset(const WindowDataset& ds, const std::string& path);
NetworkDataset load_network_dataset(const std::string& path);
WindowDataset load_window_dataset(const std::string& path);
// 0 = network, 1 = window
int peek_dataset_kind(const std::string& path);

// CSV inspection export: one row per record, values then labels.
void export_dataset_csv(const NetworkDataset& ds, const std::string& path);
void export_dataset_csv(const WindowDataset& ds, const std::string& path);

// Checkpoints: versioned text with a layer-dimension manifest and base-16
// parameter blocks; load-then-save reproduces the file byte for byte.
void save_checkpoint(BranchClassifier& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest);
void save_checkpoint(GenericModelA& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest);
void save_checkpoint(GenericModelB& model, const std::string& path,
                     std::uint64_t seed, std::uint64_t digest);
std::string peek_checkpoint_kind(const std::string& path);
BranchClassifier load_branch_checkpoint(const std::string& path);
GenericModelA load_model_a_checkpoint(const std::string& path);
GenericModelB load_model_b_checkpoint(const std::string& path);

// CSV artifacts; every file starts with a "# ponwatch v1 seed=... digest=..."
// provenance line.
void export_trace_csv(const OtdrTrace& trace, const std::string& path,
                      std::uint64_t seed, std::uint64_t digest);
void export_confusion_csv(const ConfusionMatrix& cm, const std::string& path,
                          std::uint64_t seed, std::uint64_t digest,
                          const std::vector<std::string>& class_names);
void export_histogram_csv(const Histogram& h, const std::string& path,
                          std::uint64_t seed, std::uint64_t digest);
void export_history_csv(const TrainHistory& h, const std::string& path,
                        std::uint64_t seed, std::uint64_t digest);

}  // namespace ponwatch
