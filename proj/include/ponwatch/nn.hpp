#pragma once

// Minimal deterministic recurrent-network kernel: dense/GRU/LSTM layers with
// analytic backpropagation through time, softmax/cross-entropy and masked
// MSE losses, Adam, and a central-difference gradient oracle. All math in
// 64-bit floats; batches are row-major (one sample per row).

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace ponwatch::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Activation { Identity, Tanh, Sigmoid, Relu };

Mat apply_activation(const Mat& x, Activation act);
// derivative expressed through the activated output y
Mat activation_grad_from_output(const Mat& y, Activation act);

// ---------------------------------------------------------------------------
// Parameter bundles. All weights are (out x in); a batch X is (B x in) and
// the pre-activation is X * W^T + b^T broadcast over rows.

struct DenseParams {
    Mat W;
    Vec b;
    Activation act = Activation::Identity;

    int in_dim() const { return static_cast<int>(W.cols()); }
    int out_dim() const { return static_cast<int>(W.rows()); }
};

struct GruParams {
    Mat Wz, Wr, Wh;  // (H x in)
    Mat Uz, Ur, Uh;  // (H x H)
    Vec bz, br, bh;

    int in_dim() const { return static_cast<int>(Wz.cols()); }
    int hidden_dim() const { return static_cast<int>(Wz.rows()); }
};

struct LstmParams {
    Mat Wi, Wf, Wo, Wg;  // (H x in)
    Mat Ui, Uf, Uo, Ug;  // (H x H)
    Vec bi, bf, bo, bg;

    int in_dim() const { return static_cast<int>(Wi.cols()); }
    int hidden_dim() const { return static_cast<int>(Wi.rows()); }
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases
// (LSTM forget-gate bias 1.0). Deterministic for a fixed seed.
DenseParams make_dense(int in_dim, int out_dim, Activation act,
                       std::mt19937_64& rng);
GruParams make_gru(int in_dim, int hidden_dim, std::mt19937_64& rng);
LstmParams make_lstm(int in_dim, int hidden_dim, std::mt19937_64& rng);

// Flat list of every parameter matrix in a bundle (biases as 1-col mats are
// not copied; pointers alias the bundle's storage).
std::vector<Mat*> collect_params(DenseParams& p);
std::vector<Mat*> collect_params(GruParams& p);
std::vector<Mat*> collect_params(LstmParams& p);
std::vector<Vec*> collect_biases(DenseParams& p);
std::vector<Vec*> collect_biases(GruParams& p);
std::vector<Vec*> collect_biases(LstmParams& p);

// A model's full parameter vector, mixing matrices and bias vectors.
struct ParamRefs {
    std::vector<Mat*> mats;
    std::vector<Vec*> vecs;

    void add(std::vector<Mat*> m, std::vector<Vec*> v);
    std::size_t total_size() const;
    void flatten(Vec& out) const;
    void unflatten(const Vec& in);
};

struct ParamGrads {
    std::vector<Mat> mats;
    std::vector<Vec> vecs;

    static ParamGrads zeros_like(const ParamRefs& refs);
    void add_scaled(const ParamGrads& other, double scale);
    void flatten(Vec& out) const;
    void check_finite(const std::string& context) const;
};

// ---------------------------------------------------------------------------
// Dense

struct DenseCache {
    Mat x;  // input batch
    Mat y;  // activated output
};

Mat dense_forward(const Mat& x, const DenseParams& p, DenseCache* cache = nullptr);
// returns dL/dx; accumulates dW/db into grads
Mat dense_backward(const Mat& dy, const DenseParams& p, const DenseCache& cache,
                   Mat& dW, Vec& db);

// ---------------------------------------------------------------------------
// GRU, update convention h' = (1-z) .* h + z .* h~

struct GruCache {
    std::vector<Mat> x;           // T x (B x in)
    std::vector<Mat> z, r, hc, h; // per step (B x H)
    Mat h0;
};

// single step, batch rows
Mat gru_cell_forward(const Mat& x, const Mat& h_prev, const GruParams& p);
// full sequence; h0 defaults to zeros
std::vector<Mat> gru_forward(const std::vector<Mat>& xs, const GruParams& p,
                             GruCache* cache = nullptr);
struct GruGrads {
    Mat Wz, Wr, Wh, Uz, Ur, Uh;
    Vec bz, br, bh;
    static GruGrads zeros_like(const GruParams& p);
};
// dh_out[t] is the external gradient flowing into h_t; returns dL/dx per step
std::vector<Mat> gru_backward(const std::vector<Mat>& dh_out, const GruParams& p,
                              const GruCache& cache, GruGrads& grads);

// ---------------------------------------------------------------------------
// LSTM, standard gates: c' = f.*c + i.*g, h' = o.*tanh(c')

struct LstmCache {
    std::vector<Mat> x;
    std::vector<Mat> i, f, o, g, c, h, tanh_c;
    Mat h0, c0;
};

std::pair<Mat, Mat> lstm_cell_forward(const Mat& x, const Mat& h_prev,
                                      const Mat& c_prev, const LstmParams& p);
std::vector<Mat> lstm_forward(const std::vector<Mat>& xs, const LstmParams& p,
                              LstmCache* cache = nullptr);
struct LstmGrads {
    Mat Wi, Wf, Wo, Wg, Ui, Uf, Uo, Ug;
    Vec bi, bf, bo, bg;
    static LstmGrads zeros_like(const LstmParams& p);
};
std::vector<Mat> lstm_backward(const std::vector<Mat>& dh_out, const LstmParams& p,
                               const LstmCache& cache, LstmGrads& grads);

// ---------------------------------------------------------------------------
// Losses

// row-wise, max-shifted
Mat softmax(const Mat& logits);
// mean over the batch of -ln(p[label] + eps)
double categorical_crossentropy(const Mat& probs, const std::vector<int>& labels);
// gradient of mean CCE w.r.t. logits when probs = softmax(logits)
Mat softmax_cce_grad(const Mat& probs, const std::vector<int>& labels);

// mean squared error over mask-valid entries; 0 when the mask is empty
double mse_loss(const Mat& pred, const Mat& target,
                const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);
Mat mse_grad(const Mat& pred, const Mat& target,
             const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<Mat> m_mats, v_mats;
    std::vector<Vec> m_vecs, v_vecs;

    static AdamState init(const ParamRefs& refs, double lr = 1e-3);
};

void adam_step(ParamRefs& params, const ParamGrads& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Gradient oracle: fourth-order central differences over a flattened
// parameter vector. The O(h^4) stencil keeps truncation error negligible at a
// step large enough to dominate floating-point cancellation, which matters
// for near-saturated gates whose true gradients are tiny.
Vec numeric_gradient(const std::function<double()>& loss,
                     ParamRefs& params, double step = 1e-4);

}  // namespace ponwatch::nn
