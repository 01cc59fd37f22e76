#include "ponwatch/models.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace ponwatch {

namespace {

using nn::DenseCache;
using nn::DenseParams;
using nn::GruCache;
using nn::GruGrads;
using nn::LstmCache;
using nn::LstmGrads;
using nn::ParamGrads;
using nn::ParamRefs;

constexpr std::size_t kChunkRows = 16;  // fixed, so reductions are
                                        // independent of thread count

std::vector<Mat> sequence_steps(const Mat& x) {
    std::vector<Mat> xs(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index t = 0; t < x.cols(); ++t)
        xs[static_cast<std::size_t>(t)] = x.col(t);
    return xs;
}

void run_chunks(std::size_t n_chunks, const std::function<void(std::size_t)>& work) {
    int threads = std::min<std::size_t>(worker_thread_count(), n_chunks);
    if (threads <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) work(c);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                std::size_t c = next.fetch_add(1);
                if (c >= n_chunks) return;
                work(c);
            }
        });
    }
    for (auto& th : pool) th.join();
}

std::vector<std::vector<std::size_t>> fixed_chunks(
    const std::vector<std::size_t>& idx) {
    std::vector<std::vector<std::size_t>> chunks;
    for (std::size_t at = 0; at < idx.size(); at += kChunkRows) {
        std::size_t end = std::min(at + kChunkRows, idx.size());
        chunks.emplace_back(idx.begin() + static_cast<long>(at),
                            idx.begin() + static_cast<long>(end));
    }
    return chunks;
}

std::vector<std::size_t> split_indices(const std::vector<SplitTag>& split,
                                       SplitTag tag) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == tag) out.push_back(i);
    return out;
}

}  // namespace

int worker_thread_count() {
    static int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw <= 0) hw = 1;
        if (const char* env = std::getenv("PONWATCH_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return std::min(v, hw);
        }
        return hw;
    }();
    return cached;
}

void TaskWeights::validate(bool has_level_head) const {
    if (cls < 0 || pos < 0 || lvl < 0)
        throw std::invalid_argument("task weights must be >= 0");
    double total = cls + pos + (has_level_head ? lvl : 0.0);
    if (total <= 0.0)
        throw std::invalid_argument("task weights must not all be zero");
}

// ---------------------------------------------------------------------------
// BranchClassifier

BranchClassifier BranchClassifier::init(std::uint64_t seed,
                                        const std::vector<int>& hidden,
                                        int num_classes, std::size_t seq_len) {
    if (hidden.empty())
        throw std::invalid_argument("BranchClassifier: need at least one GRU layer");
    std::mt19937_64 rng(seed);
    BranchClassifier m;
    m.seq_len = seq_len;
    int in = 1;
    for (int h : hidden) {
        m.gru_stack.push_back(nn::make_gru(in, h, rng));
        in = h;
    }
    m.head = nn::make_dense(in, num_classes, nn::Activation::Identity, rng);
    return m;
}

ParamRefs BranchClassifier::params() {
    ParamRefs refs;
    for (auto& g : gru_stack) refs.add(nn::collect_params(g), nn::collect_biases(g));
    refs.add(nn::collect_params(head), nn::collect_biases(head));
    return refs;
}

Mat BranchClassifier::predict(const Mat& x) const {
    if (static_cast<std::size_t>(x.cols()) != seq_len)
        throw std::invalid_argument("BranchClassifier: wrong sequence length");
    std::vector<Mat> xs = sequence_steps(x);
    for (const auto& g : gru_stack) xs = nn::gru_forward(xs, g);
    return nn::softmax(nn::dense_forward(xs.back(), head));
}

Vec BranchClassifier::classify(const std::vector<double>& seq) const {
    if (seq.size() != seq_len)
        throw std::invalid_argument("BranchClassifier: wrong sequence length");
    Mat x(1, static_cast<Eigen::Index>(seq.size()));
    for (std::size_t i = 0; i < seq.size(); ++i)
        x(0, static_cast<Eigen::Index>(i)) = seq[i];
    return predict(x).row(0).transpose();
}

double BranchClassifier::loss_and_grad(const Mat& x, const std::vector<int>& labels,
                                       ParamGrads& grads, double scale) const {
    const std::size_t L = gru_stack.size();
    std::vector<GruCache> caches(L);
    std::vector<Mat> xs = sequence_steps(x);
    for (std::size_t l = 0; l < L; ++l)
        xs = nn::gru_forward(xs, gru_stack[l], &caches[l]);

    DenseCache head_cache;
    Mat logits = nn::dense_forward(xs.back(), head, &head_cache);
    Mat probs = nn::softmax(logits);
    double loss = nn::categorical_crossentropy(probs, labels);

    Mat dW = Mat::Zero(head.W.rows(), head.W.cols());
    Vec db = Vec::Zero(head.b.size());
    Mat dh_last =
        nn::dense_backward(nn::softmax_cce_grad(probs, labels), head, head_cache, dW, db);
    grads.mats[L * 6] += scale * dW;
    grads.vecs[L * 3] += scale * db;

    std::vector<Mat> dh(xs.size(), Mat::Zero(x.rows(), gru_stack.back().hidden_dim()));
    dh.back() = dh_last;
    for (std::size_t l = L; l-- > 0;) {
        GruGrads g = GruGrads::zeros_like(gru_stack[l]);
        std::vector<Mat> dxs = nn::gru_backward(dh, gru_stack[l], caches[l], g);
        grads.mats[l * 6 + 0] += scale * g.Wz;
        grads.mats[l * 6 + 1] += scale * g.Wr;
        grads.mats[l * 6 + 2] += scale * g.Wh;
        grads.mats[l * 6 + 3] += scale * g.Uz;
        grads.mats[l * 6 + 4] += scale * g.Ur;
        grads.mats[l * 6 + 5] += scale * g.Uh;
        grads.vecs[l * 3 + 0] += scale * g.bz;
        grads.vecs[l * 3 + 1] += scale * g.br;
        grads.vecs[l * 3 + 2] += scale * g.bh;
        dh = std::move(dxs);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// GenericModelA

GenericModelA GenericModelA::init(std::uint64_t seed, int hidden) {
    std::mt19937_64 rng(seed);
    GenericModelA m;
    m.encoder = nn::make_lstm(1, hidden, rng);
    m.type_hidden = nn::make_dense(hidden, 16, nn::Activation::Tanh, rng);
    m.type_out = nn::make_dense(16, 3, nn::Activation::Identity, rng);
    m.pos_hidden = nn::make_dense(hidden, 32, nn::Activation::Tanh, rng);
    m.pos_out = nn::make_dense(32, 2, nn::Activation::Sigmoid, rng);
    m.lvl_hidden = nn::make_dense(hidden, 16, nn::Activation::Tanh, rng);
    m.lvl_out = nn::make_dense(16, 2, nn::Activation::Sigmoid, rng);
    return m;
}

ParamRefs GenericModelA::params() {
    ParamRefs refs;
    refs.add(nn::collect_params(encoder), nn::collect_biases(encoder));
    for (auto* d : {&type_hidden, &type_out, &pos_hidden, &pos_out, &lvl_hidden,
                    &lvl_out})
        refs.add(nn::collect_params(*d), nn::collect_biases(*d));
    return refs;
}

ModelAOutput GenericModelA::predict(const Mat& x) const {
    std::vector<Mat> hs = nn::lstm_forward(sequence_steps(x), encoder);
    const Mat& h = hs.back();
    ModelAOutput out;
    out.type_probs =
        nn::softmax(nn::dense_forward(nn::dense_forward(h, type_hidden), type_out));
    out.positions = nn::dense_forward(nn::dense_forward(h, pos_hidden), pos_out);
    out.levels = nn::dense_forward(nn::dense_forward(h, lvl_hidden), lvl_out);
    return out;
}

double GenericModelA::loss_and_grad(const Mat& x, const std::vector<int>& count_labels,
                                    const Mat& pos_target, const Mat& lvl_target,
                                    const BoolMat& mask, const TaskWeights& w,
                                    ParamGrads& grads, double scale) const {
    w.validate(true);
    LstmCache enc_cache;
    std::vector<Mat> hs = nn::lstm_forward(sequence_steps(x), encoder, &enc_cache);
    const Mat& h = hs.back();

    DenseCache c_th, c_to, c_ph, c_po, c_lh, c_lo;
    Mat th = nn::dense_forward(h, type_hidden, &c_th);
    Mat logits = nn::dense_forward(th, type_out, &c_to);
    Mat probs = nn::softmax(logits);
    Mat ph = nn::dense_forward(h, pos_hidden, &c_ph);
    Mat pos = nn::dense_forward(ph, pos_out, &c_po);
    Mat lh = nn::dense_forward(h, lvl_hidden, &c_lh);
    Mat lvl = nn::dense_forward(lh, lvl_out, &c_lo);

    double cce = nn::categorical_crossentropy(probs, count_labels);
    double mse_p = nn::mse_loss(pos, pos_target, mask);
    double mse_l = nn::mse_loss(lvl, lvl_target, mask);
    double loss = w.cls * cce + w.pos * mse_p + w.lvl * mse_l;

    // grads layout: mats 0..7 encoder, 8.. dense in params() order
    auto dense_bwd = [&](const Mat& dy, const DenseParams& p, const DenseCache& c,
                         std::size_t slot) {
        Mat dW = Mat::Zero(p.W.rows(), p.W.cols());
        Vec db = Vec::Zero(p.b.size());
        Mat dx = nn::dense_backward(dy, p, c, dW, db);
        grads.mats[8 + slot] += scale * dW;
        grads.vecs[4 + slot] += scale * db;
        return dx;
    };

    Mat dlogits = w.cls * nn::softmax_cce_grad(probs, count_labels);
    Mat dh = dense_bwd(dense_bwd(dlogits, type_out, c_to, 1), type_hidden, c_th, 0);
    Mat dpos = w.pos * nn::mse_grad(pos, pos_target, mask);
    dh += dense_bwd(dense_bwd(dpos, pos_out, c_po, 3), pos_hidden, c_ph, 2);
    Mat dlvl = w.lvl * nn::mse_grad(lvl, lvl_target, mask);
    dh += dense_bwd(dense_bwd(dlvl, lvl_out, c_lo, 5), lvl_hidden, c_lh, 4);

    std::vector<Mat> dhs(hs.size(), Mat::Zero(h.rows(), h.cols()));
    dhs.back() = dh;
    LstmGrads g = LstmGrads::zeros_like(encoder);
    nn::lstm_backward(dhs, encoder, enc_cache, g);
    const Mat* gm[] = {&g.Wi, &g.Wf, &g.Wo, &g.Wg, &g.Ui, &g.Uf, &g.Uo, &g.Ug};
    for (std::size_t k = 0; k < 8; ++k) grads.mats[k] += scale * *gm[k];
    const Vec* gv[] = {&g.bi, &g.bf, &g.bo, &g.bg};
    for (std::size_t k = 0; k < 4; ++k) grads.vecs[k] += scale * *gv[k];
    return loss;
}

// ---------------------------------------------------------------------------
// GenericModelB

GenericModelB GenericModelB::init(std::uint64_t seed, int hidden) {
    std::mt19937_64 rng(seed);
    GenericModelB m;
    m.encoder = nn::make_lstm(1, hidden, rng);
    m.event_hidden = nn::make_dense(hidden, 16, nn::Activation::Tanh, rng);
    m.event_out = nn::make_dense(16, kNumEventClasses, nn::Activation::Identity, rng);
    m.loc_hidden = nn::make_dense(hidden, 32, nn::Activation::Tanh, rng);
    m.loc_out = nn::make_dense(32, 2, nn::Activation::Sigmoid, rng);
    return m;
}

ParamRefs GenericModelB::params() {
    ParamRefs refs;
    refs.add(nn::collect_params(encoder), nn::collect_biases(encoder));
    for (auto* d : {&event_hidden, &event_out, &loc_hidden, &loc_out})
        refs.add(nn::collect_params(*d), nn::collect_biases(*d));
    return refs;
}

ModelBOutput GenericModelB::predict(const Mat& x) const {
    std::vector<Mat> hs = nn::lstm_forward(sequence_steps(x), encoder);
    const Mat& h = hs.back();
    ModelBOutput out;
    out.event_probs =
        nn::softmax(nn::dense_forward(nn::dense_forward(h, event_hidden), event_out));
    out.locations = nn::dense_forward(nn::dense_forward(h, loc_hidden), loc_out);
    return out;
}

double GenericModelB::loss_and_grad(const Mat& x, const std::vector<int>& event_labels,
                                    const Mat& loc_target, const BoolMat& mask,
                                    const TaskWeights& w, ParamGrads& grads,
                                    double scale) const {
    w.validate(false);
    LstmCache enc_cache;
    std::vector<Mat> hs = nn::lstm_forward(sequence_steps(x), encoder, &enc_cache);
    const Mat& h = hs.back();

    DenseCache c_eh, c_eo, c_lh, c_lo;
    Mat eh = nn::dense_forward(h, event_hidden, &c_eh);
    Mat logits = nn::dense_forward(eh, event_out, &c_eo);
    Mat probs = nn::softmax(logits);
    Mat lh = nn::dense_forward(h, loc_hidden, &c_lh);
    Mat loc = nn::dense_forward(lh, loc_out, &c_lo);

    double cce = nn::categorical_crossentropy(probs, event_labels);
    double mse = nn::mse_loss(loc, loc_target, mask);
    double loss = w.cls * cce + w.pos * mse;

    auto dense_bwd = [&](const Mat& dy, const DenseParams& p, const DenseCache& c,
                         std::size_t slot) {
        Mat dW = Mat::Zero(p.W.rows(), p.W.cols());
        Vec db = Vec::Zero(p.b.size());
        Mat dx = nn::dense_backward(dy, p, c, dW, db);
        grads.mats[8 + slot] += scale * dW;
        grads.vecs[4 + slot] += scale * db;
        return dx;
    };

    Mat dlogits = w.cls * nn::softmax_cce_grad(probs, event_labels);
    Mat dh = dense_bwd(dense_bwd(dlogits, event_out, c_eo, 1), event_hidden, c_eh, 0);
    Mat dloc = w.pos * nn::mse_grad(loc, loc_target, mask);
    dh += dense_bwd(dense_bwd(dloc, loc_out, c_lo, 3), loc_hidden, c_lh, 2);

    std::vector<Mat> dhs(hs.size(), Mat::Zero(h.rows(), h.cols()));
    dhs.back() = dh;
    LstmGrads g = LstmGrads::zeros_like(encoder);
    nn::lstm_backward(dhs, encoder, enc_cache, g);
    const Mat* gm[] = {&g.Wi, &g.Wf, &g.Wo, &g.Wg, &g.Ui, &g.Uf, &g.Uo, &g.Ug};
    for (std::size_t k = 0; k < 8; ++k) grads.mats[k] += scale * *gm[k];
    const Vec* gv[] = {&g.bi, &g.bf, &g.bo, &g.bg};
    for (std::size_t k = 0; k < 4; ++k) grads.vecs[k] += scale * *gv[k];
    return loss;
}

ReflectionPrediction predict_reflections(const GenericModelA& m,
                                         const std::vector<double>& window) {
    if (window.size() != kWindowLen)
        throw std::invalid_argument("predict_reflections: wrong window length");
    Mat x(1, static_cast<Eigen::Index>(window.size()));
    for (std::size_t i = 0; i < window.size(); ++i)
        x(0, static_cast<Eigen::Index>(i)) = window[i];
    ModelAOutput out = m.predict(x);
    ReflectionPrediction p;
    Eigen::Index cnt;
    out.type_probs.row(0).maxCoeff(&cnt);
    p.count = static_cast<int>(cnt);
    p.positions = {out.positions(0, 0), out.positions(0, 1)};
    p.levels = {out.levels(0, 0), out.levels(0, 1)};
    return p;
}

EventPrediction predict_event(const GenericModelB& m,
                              const std::vector<double>& window) {
    if (window.size() != kWindowLen)
        throw std::invalid_argument("predict_event: wrong window length");
    Mat x(1, static_cast<Eigen::Index>(window.size()));
    for (std::size_t i = 0; i < window.size(); ++i)
        x(0, static_cast<Eigen::Index>(i)) = window[i];
    ModelBOutput out = m.predict(x);
    EventPrediction p;
    Eigen::Index cls;
    out.event_probs.row(0).maxCoeff(&cls);
    p.event_class = static_cast<int>(cls);
    p.locations = {out.locations(0, 0), out.locations(0, 1)};
    return p;
}

// ---------------------------------------------------------------------------
// Batch assembly

Mat rows_from_values(const std::vector<const std::vector<double>*>& rows) {
    if (rows.empty()) return Mat();
    Mat x(static_cast<Eigen::Index>(rows.size()),
          static_cast<Eigen::Index>(rows[0]->size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r]->size(); ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                (*rows[r])[c];
    return x;
}

Mat network_batch(const NetworkDataset& ds, const std::vector<std::size_t>& idx,
                  std::vector<int>& labels) {
    std::vector<const std::vector<double>*> rows;
    labels.clear();
    for (auto i : idx) {
        rows.push_back(&ds.records[i].values);
        labels.push_back(ds.records[i].label);
    }
    return rows_from_values(rows);
}

WindowBatch window_batch(const WindowDataset& ds,
                         const std::vector<std::size_t>& idx) {
    WindowBatch b;
    std::vector<const std::vector<double>*> rows;
    b.pos = Mat::Zero(static_cast<Eigen::Index>(idx.size()), 2);
    b.lvl = Mat::Zero(static_cast<Eigen::Index>(idx.size()), 2);
    b.mask = BoolMat::Constant(static_cast<Eigen::Index>(idx.size()), 2, false);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& rec = ds.records[idx[r]];
        rows.push_back(&rec.values);
        b.count_labels.push_back(reflections_for_class(rec.event_class));
        b.event_labels.push_back(rec.event_class);
        for (int k = 0; k < 2; ++k) {
            b.pos(static_cast<Eigen::Index>(r), k) = rec.positions[static_cast<std::size_t>(k)];
            b.lvl(static_cast<Eigen::Index>(r), k) = rec.levels[static_cast<std::size_t>(k)];
            b.mask(static_cast<Eigen::Index>(r), k) = rec.target_mask[static_cast<std::size_t>(k)];
        }
    }
    b.x = rows_from_values(rows);
    return b;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Problem {
    // averaged loss over the given records; grads scaled by n/total
    std::function<double(const std::vector<std::size_t>&, ParamGrads&, double)>
        chunk_loss_grad;
    std::function<double(const std::vector<std::size_t>&)> chunk_loss;
};

double chunked_loss_grad(const Problem& p, const std::vector<std::size_t>& idx,
                         ParamRefs& refs, ParamGrads& grads) {
    auto chunks = fixed_chunks(idx);
    std::vector<ParamGrads> partial(chunks.size());
    std::vector<double> losses(chunks.size(), 0.0);
    run_chunks(chunks.size(), [&](std::size_t c) {
        partial[c] = ParamGrads::zeros_like(refs);
        double w = static_cast<double>(chunks[c].size()) /
                   static_cast<double>(idx.size());
        losses[c] = w * p.chunk_loss_grad(chunks[c], partial[c], w);
    });
    double loss = 0.0;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        loss += losses[c];
        grads.add_scaled(partial[c], 1.0);
    }
    return loss;
}

double chunked_loss(const Problem& p, const std::vector<std::size_t>& idx) {
    auto chunks = fixed_chunks(idx);
    std::vector<double> losses(chunks.size(), 0.0);
    run_chunks(chunks.size(), [&](std::size_t c) {
        double w = static_cast<double>(chunks[c].size()) /
                   static_cast<double>(idx.size());
        losses[c] = w * p.chunk_loss(chunks[c]);
    });
    double loss = 0.0;
    for (double l : losses) loss += l;
    return loss;
}

TrainHistory run_training(ParamRefs refs, const Problem& problem,
                          std::vector<std::size_t> train_idx,
                          const std::vector<std::size_t>& val_idx,
                          const TrainConfig& cfg) {
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("train: dataset needs train and val splits");

    nn::AdamState adam = nn::AdamState::init(refs, cfg.learning_rate);
    TrainHistory hist;
    Vec best_params;
    refs.flatten(best_params);
    hist.best_val_loss = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(train_idx.begin(), train_idx.end(), rng);

        double epoch_loss = 0.0;
        for (std::size_t at = 0; at < train_idx.size();
             at += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end = std::min(at + static_cast<std::size_t>(cfg.batch_size),
                                       train_idx.size());
            std::vector<std::size_t> batch(train_idx.begin() + static_cast<long>(at),
                                           train_idx.begin() + static_cast<long>(end));
            ParamGrads grads = ParamGrads::zeros_like(refs);
            double loss = chunked_loss_grad(problem, batch, refs, grads);
            if (!std::isfinite(loss))
                throw std::runtime_error("train: loss diverged at epoch " +
                                         std::to_string(epoch));
            grads.check_finite("training batch");
            nn::adam_step(refs, grads, adam);
            epoch_loss += loss * static_cast<double>(batch.size());
        }
        epoch_loss /= static_cast<double>(train_idx.size());

        double val = chunked_loss(problem, val_idx);
        hist.train_loss.push_back(epoch_loss);
        hist.val_loss.push_back(val);
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d train %.5f val %.5f\n", epoch,
                         epoch_loss, val);
        if (val < hist.best_val_loss) {
            hist.best_val_loss = val;
            hist.best_epoch = epoch;
            refs.flatten(best_params);
        } else if (epoch - hist.best_epoch >= cfg.patience) {
            break;
        }
    }
    refs.unflatten(best_params);
    return hist;
}

}  // namespace

TrainHistory train_branch_classifier(BranchClassifier& model,
                                     const NetworkDataset& ds,
                                     const TrainConfig& cfg) {
    ParamRefs refs = model.params();
    Problem p;
    p.chunk_loss_grad = [&](const std::vector<std::size_t>& idx, ParamGrads& g,
                            double w) {
        std::vector<int> labels;
        Mat x = network_batch(ds, idx, labels);
        return model.loss_and_grad(x, labels, g, w);
    };
    p.chunk_loss = [&](const std::vector<std::size_t>& idx) {
        std::vector<int> labels;
        Mat x = network_batch(ds, idx, labels);
        return nn::categorical_crossentropy(model.predict(x), labels);
    };
    return run_training(std::move(refs), p, split_indices(ds.split, kTrain),
                        split_indices(ds.split, kVal), cfg);
}

TrainHistory train_generic_a(GenericModelA& model, const WindowDataset& ds,
                             const TrainConfig& cfg) {
    cfg.weights.validate(true);
    ParamRefs refs = model.params();
    Problem p;
    p.chunk_loss_grad = [&](const std::vector<std::size_t>& idx, ParamGrads& g,
                            double w) {
        WindowBatch b = window_batch(ds, idx);
        return model.loss_and_grad(b.x, b.count_labels, b.pos, b.lvl, b.mask,
                                   cfg.weights, g, w);
    };
    p.chunk_loss = [&](const std::vector<std::size_t>& idx) {
        WindowBatch b = window_batch(ds, idx);
        ModelAOutput out = model.predict(b.x);
        return cfg.weights.cls *
                   nn::categorical_crossentropy(out.type_probs, b.count_labels) +
               cfg.weights.pos * nn::mse_loss(out.positions, b.pos, b.mask) +
               cfg.weights.lvl * nn::mse_loss(out.levels, b.lvl, b.mask);
    };
    return run_training(std::move(refs), p, split_indices(ds.split, kTrain),
                        split_indices(ds.split, kVal), cfg);
}

TrainHistory train_generic_b(GenericModelB& model, const WindowDataset& ds,
                             const TrainConfig& cfg) {
    cfg.weights.validate(false);
    ParamRefs refs = model.params();
    Problem p;
    p.chunk_loss_grad = [&](const std::vector<std::size_t>& idx, ParamGrads& g,
                            double w) {
        WindowBatch b = window_batch(ds, idx);
        return model.loss_and_grad(b.x, b.event_labels, b.pos, b.mask, cfg.weights,
                                   g, w);
    };
    p.chunk_loss = [&](const std::vector<std::size_t>& idx) {
        WindowBatch b = window_batch(ds, idx);
        ModelBOutput out = model.predict(b.x);
        return cfg.weights.cls *
                   nn::categorical_crossentropy(out.event_probs, b.event_labels) +
               cfg.weights.pos * nn::mse_loss(out.locations, b.pos, b.mask);
    };
    return run_training(std::move(refs), p, split_indices(ds.split, kTrain),
                        split_indices(ds.split, kVal), cfg);
}

// ---------------------------------------------------------------------------
// Evaluation

double ConfusionMatrix::accuracy() const {
    double tr = counts.trace();
    double total = counts.sum();
    return total == 0.0 ? 0.0 : tr / total;
}

Mat ConfusionMatrix::row_normalized() const {
    Mat out = counts;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        double s = out.row(r).sum();
        if (s > 0) out.row(r) /= s;
    }
    return out;
}

long ConfusionMatrix::total() const { return static_cast<long>(counts.sum()); }

void Histogram::init(double lo_, double hi_, int bins_) {
    lo = lo_;
    hi = hi_;
    bins = bins_;
    counts.assign(static_cast<std::size_t>(bins), 0);
}

void Histogram::add(double v) {
    if (counts.empty()) init(lo, hi, bins);
    int k = static_cast<int>((v - lo) / (hi - lo) * bins);
    k = std::clamp(k, 0, bins - 1);
    ++counts[static_cast<std::size_t>(k)];
}

double Histogram::edge(int k) const {
    return lo + (hi - lo) * static_cast<double>(k) / bins;
}

ConfusionMatrix evaluate_classifier(const BranchClassifier& model,
                                    const std::vector<NetworkSample>& samples) {
    ConfusionMatrix cm;
    int K = model.head.out_dim();
    cm.counts = Mat::Zero(K, K);
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto chunks = fixed_chunks(idx);
    std::vector<Mat> partial(chunks.size());
    run_chunks(chunks.size(), [&](std::size_t c) {
        std::vector<const std::vector<double>*> rows;
        for (auto i : chunks[c]) rows.push_back(&samples[i].values);
        Mat probs = model.predict(rows_from_values(rows));
        Mat local = Mat::Zero(K, K);
        for (std::size_t r = 0; r < chunks[c].size(); ++r) {
            Eigen::Index pred;
            probs.row(static_cast<Eigen::Index>(r)).maxCoeff(&pred);
            local(samples[chunks[c][r]].label, pred) += 1.0;
        }
        partial[c] = local;
    });
    for (const auto& m : partial) cm.counts += m;
    return cm;
}

ConfusionMatrix evaluate_classifier(const BranchClassifier& model,
                                    const NetworkDataset& ds, SplitTag tag) {
    std::vector<NetworkSample> samples;
    for (std::size_t i = 0; i < ds.records.size(); ++i)
        if (ds.split[i] == tag) samples.push_back(ds.records[i]);
    if (samples.empty())
        throw std::invalid_argument("evaluate_classifier: empty split");
    return evaluate_classifier(model, samples);
}

namespace {

void finish_regression(RegressionEval& ev, double pos_abs_sum, double pos_sq_sum,
                       double lvl_abs_sum, double lvl_sq_sum) {
    if (ev.n_pos > 0) {
        ev.pos_mae_samples = pos_abs_sum / static_cast<double>(ev.n_pos);
        ev.pos_rmse_samples = std::sqrt(pos_sq_sum / static_cast<double>(ev.n_pos));
    }
    if (ev.n_lvl > 0) {
        ev.lvl_mae = lvl_abs_sum / static_cast<double>(ev.n_lvl);
        ev.lvl_rmse = std::sqrt(lvl_sq_sum / static_cast<double>(ev.n_lvl));
    }
}

}  // namespace

ModelAEval evaluate_model_a(const GenericModelA& model, const WindowDataset& ds,
                            SplitTag tag, std::size_t window_len) {
    std::vector<std::size_t> idx = split_indices(ds.split, tag);
    if (idx.empty()) throw std::invalid_argument("evaluate_model_a: empty split");
    ModelAEval ev;
    ev.type_confusion.counts = Mat::Zero(3, 3);
    ev.regression.pos_hist.init(0.0, 3.0, 30);
    ev.regression.lvl_hist.init(0.0, 0.3, 30);

    double pos_abs = 0, pos_sq = 0, lvl_abs = 0, lvl_sq = 0;
    auto chunks = fixed_chunks(idx);
    // evaluation is a deterministic reduction in chunk order; keep it serial
    for (const auto& chunk : chunks) {
        WindowBatch b = window_batch(ds, chunk);
        ModelAOutput out = model.predict(b.x);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            auto ri = static_cast<Eigen::Index>(r);
            Eigen::Index pred;
            out.type_probs.row(ri).maxCoeff(&pred);
            ev.type_confusion.counts(b.count_labels[r], pred) += 1.0;
            for (int k = 0; k < 2; ++k) {
                if (!b.mask(ri, k)) continue;
                double perr = std::abs(out.positions(ri, k) - b.pos(ri, k)) *
                              static_cast<double>(window_len);
                double lerr = std::abs(out.levels(ri, k) - b.lvl(ri, k));
                pos_abs += perr;
                pos_sq += perr * perr;
                lvl_abs += lerr;
                lvl_sq += lerr * lerr;
                ++ev.regression.n_pos;
                ++ev.regression.n_lvl;
                ev.regression.pos_hist.add(perr);
                ev.regression.lvl_hist.add(lerr);
            }
        }
    }
    finish_regression(ev.regression, pos_abs, pos_sq, lvl_abs, lvl_sq);
    return ev;
}

ModelBEval evaluate_model_b(const GenericModelB& model, const WindowDataset& ds,
                            SplitTag tag, std::size_t window_len) {
    std::vector<std::size_t> idx = split_indices(ds.split, tag);
    if (idx.empty()) throw std::invalid_argument("evaluate_model_b: empty split");
    ModelBEval ev;
    ev.event_confusion.counts = Mat::Zero(kNumEventClasses, kNumEventClasses);
    ev.regression.pos_hist.init(0.0, 3.0, 30);
    ev.regression.lvl_hist.init(0.0, 0.3, 30);

    double pos_abs = 0, pos_sq = 0;
    auto chunks = fixed_chunks(idx);
    for (const auto& chunk : chunks) {
        WindowBatch b = window_batch(ds, chunk);
        ModelBOutput out = model.predict(b.x);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            auto ri = static_cast<Eigen::Index>(r);
            Eigen::Index pred;
            out.event_probs.row(ri).maxCoeff(&pred);
            ev.event_confusion.counts(b.event_labels[r], pred) += 1.0;
            for (int k = 0; k < 2; ++k) {
                if (!b.mask(ri, k)) continue;
                double perr = std::abs(out.locations(ri, k) - b.pos(ri, k)) *
                              static_cast<double>(window_len);
                pos_abs += perr;
                pos_sq += perr * perr;
                ++ev.regression.n_pos;
                ev.regression.pos_hist.add(perr);
            }
        }
    }
    finish_regression(ev.regression, pos_abs, pos_sq, 0, 0);
    return ev;
}

}  // namespace ponwatch
