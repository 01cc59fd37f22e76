#pragma once

// The three fault-monitoring networks: a 3-layer GRU branch classifier over
// length-280 traces, and two LSTM multi-task models over length-30 windows
// (A: reflection count + positions + levels; B: event class + locations).
// Plus the shared mini-batch Adam training loop and evaluation metrics.

#include <array>
#include <cstdint>
#include <vector>

#include "ponwatch/dataset.hpp"
#include "ponwatch/nn.hpp"

namespace ponwatch {

using nn::Mat;
using nn::Vec;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct TaskWeights {
    double cls = 1.0;
    double pos = 1.0;  // model B: location head
    double lvl = 1.0;  // model A only

    void validate(bool has_level_head) const;
};

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 64;
    int max_epochs = 50;
    int patience = 10;  // early stop on validation loss
    TaskWeights weights{};
    std::uint64_t seed = 0;
    bool verbose = false;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

// ---------------------------------------------------------------------------

struct BranchClassifier {
    std::vector<nn::GruParams> gru_stack;  // default widths 64/32/16
    nn::DenseParams head;                  // last hidden -> 9 logits
    std::size_t seq_len = kNetworkSeqLen;

    static BranchClassifier init(std::uint64_t seed,
                                 const std::vector<int>& hidden = {64, 32, 16},
                                 int num_classes = 9,
                                 std::size_t seq_len = kNetworkSeqLen);
    nn::ParamRefs params();
    int num_classes() const { return head.out_dim(); }

    // batch of sequences, one row per sample -> class probabilities
    Mat predict(const Mat& x) const;
    Vec classify(const std::vector<double>& seq) const;
    // mean CCE over the batch; gradients accumulated with weight `scale`
    double loss_and_grad(const Mat& x, const std::vector<int>& labels,
                         nn::ParamGrads& grads, double scale = 1.0) const;
};

struct ModelAOutput {
    Mat type_probs;  // B x 3 (reflection count)
    Mat positions;   // B x 2, sigmoid-bounded
    Mat levels;      // B x 2
};

struct GenericModelA {
    nn::LstmParams encoder;  // 1 -> 16
    nn::DenseParams type_hidden, type_out;  // 16 -> 16 -> 3
    nn::DenseParams pos_hidden, pos_out;    // 16 -> 32 -> 2
    nn::DenseParams lvl_hidden, lvl_out;    // 16 -> 16 -> 2

    static GenericModelA init(std::uint64_t seed, int hidden = 16);
    nn::ParamRefs params();

    ModelAOutput predict(const Mat& x) const;
    double loss_and_grad(const Mat& x, const std::vector<int>& count_labels,
                         const Mat& pos_target, const Mat& lvl_target,
                         const BoolMat& mask, const TaskWeights& w,
                         nn::ParamGrads& grads, double scale = 1.0) const;
};

struct ModelBOutput {
    Mat event_probs;  // B x 7
    Mat locations;    // B x 2
};

struct GenericModelB {
    nn::LstmParams encoder;
    nn::DenseParams event_hidden, event_out;  // 16 -> 16 -> 7
    nn::DenseParams loc_hidden, loc_out;      // 16 -> 32 -> 2

    static GenericModelB init(std::uint64_t seed, int hidden = 16);
    nn::ParamRefs params();

    ModelBOutput predict(const Mat& x) const;
    double loss_and_grad(const Mat& x, const std::vector<int>& event_labels,
                         const Mat& loc_target, const BoolMat& mask,
                         const TaskWeights& w, nn::ParamGrads& grads,
                         double scale = 1.0) const;
};

// single-window prediction helpers
struct ReflectionPrediction {
    int count = 0;  // 0, 1, or 2 reflections
    std::array<double, 2> positions{};  // fraction of the window
    std::array<double, 2> levels{};
};
ReflectionPrediction predict_reflections(const GenericModelA& m,
                                         const std::vector<double>& window);

struct EventPrediction {
    int event_class = 6;
    std::array<double, 2> locations{};
};
EventPrediction predict_event(const GenericModelB& m,
                              const std::vector<double>& window);

// ---------------------------------------------------------------------------
// Batch assembly

Mat rows_from_values(const std::vector<const std::vector<double>*>& rows);
Mat network_batch(const NetworkDataset& ds, const std::vector<std::size_t>& idx,
                  std::vector<int>& labels);
struct WindowBatch {
    Mat x;
    std::vector<int> count_labels;  // for model A
    std::vector<int> event_labels;  // for model B
    Mat pos, lvl;
    BoolMat mask;
};
WindowBatch window_batch(const WindowDataset& ds,
                         const std::vector<std::size_t>& idx);

// ---------------------------------------------------------------------------
// Training (mini-batch Adam, seeded shuffling, early stop, best-val restore).
// Deterministic: batches are split into fixed 16-row chunks whose gradients
// are reduced in chunk order, independent of thread count.

TrainHistory train_branch_classifier(BranchClassifier& model,
                                     const NetworkDataset& ds,
                                     const TrainConfig& cfg);
TrainHistory train_generic_a(GenericModelA& model, const WindowDataset& ds,
                             const TrainConfig& cfg);
TrainHistory train_generic_b(GenericModelB& model, const WindowDataset& ds,
                             const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation

struct ConfusionMatrix {
    Mat counts;  // true x predicted

    double accuracy() const;
    Mat row_normalized() const;
    long total() const;
};

struct Histogram {
    double lo = 0.0, hi = 1.0;
    int bins = 20;
    std::vector<long> counts;

    void init(double lo_, double hi_, int bins_);
    void add(double v);  // clamps into the edge bins
    double edge(int k) const;
};

ConfusionMatrix evaluate_classifier(const BranchClassifier& model,
                                    const NetworkDataset& ds, SplitTag tag);
ConfusionMatrix evaluate_classifier(const BranchClassifier& model,
                                    const std::vector<NetworkSample>& samples);

struct RegressionEval {
    double pos_mae_samples = 0.0;  // position error in samples
    double pos_rmse_samples = 0.0;
    double lvl_mae = 0.0;  // normalized level error
    double lvl_rmse = 0.0;
    long n_pos = 0, n_lvl = 0;
    Histogram pos_hist;  // samples
    Histogram lvl_hist;  // normalized
};

struct ModelAEval {
    ConfusionMatrix type_confusion;  // 3x3 reflection count
    RegressionEval regression;
};
ModelAEval evaluate_model_a(const GenericModelA& model, const WindowDataset& ds,
                            SplitTag tag, std::size_t window_len = kWindowLen);

struct ModelBEval {
    ConfusionMatrix event_confusion;  // 7x7
    RegressionEval regression;        // locations only (lvl fields unused)
};
ModelBEval evaluate_model_b(const GenericModelB& model, const WindowDataset& ds,
                            SplitTag tag, std::size_t window_len = kWindowLen);

// PONWATCH_THREADS env var, clamped to [1, hardware_concurrency]
int worker_thread_count();

}  // namespace ponwatch
