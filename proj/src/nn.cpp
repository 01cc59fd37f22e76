#include "ponwatch/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ponwatch::nn {

namespace {

constexpr double kCceFloor = 1e-12;

Mat sigmoid(const Mat& x) {
    return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

Mat uniform_mat(int rows, int cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
}

void require_finite(const Mat& m, const char* what) {
    if (!m.allFinite())
        throw std::runtime_error(std::string("non-finite value in ") + what);
}

// pre-activation = x * W^T + b^T per row
Mat affine(const Mat& x, const Mat& W, const Vec& b) {
    return (x * W.transpose()).rowwise() + b.transpose();
}

}  // namespace

Mat apply_activation(const Mat& x, Activation act) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Tanh: return x.array().tanh().matrix();
        case Activation::Sigmoid: return sigmoid(x);
        case Activation::Relu: return x.cwiseMax(0.0);
    }
    throw std::logic_error("unknown activation");
}

Mat activation_grad_from_output(const Mat& y, Activation act) {
    switch (act) {
        case Activation::Identity: return Mat::Ones(y.rows(), y.cols());
        case Activation::Tanh: return (1.0 - y.array().square()).matrix();
        case Activation::Sigmoid: return (y.array() * (1.0 - y.array())).matrix();
        case Activation::Relu:
            return (y.array() > 0.0).cast<double>().matrix();
    }
    throw std::logic_error("unknown activation");
}

DenseParams make_dense(int in_dim, int out_dim, Activation act,
                       std::mt19937_64& rng) {
    DenseParams p;
    double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    p.W = uniform_mat(out_dim, in_dim, bound, rng);
    p.b = Vec::Zero(out_dim);
    p.act = act;
    return p;
}

GruParams make_gru(int in_dim, int hidden_dim, std::mt19937_64& rng) {
    GruParams p;
    double bw = 1.0 / std::sqrt(static_cast<double>(in_dim));
    double bu = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    p.Wz = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Wr = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Wh = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Uz = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.Ur = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.Uh = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    // chrono-style update-gate bias: retention timescales log-spread up to
    // a few hundred steps, otherwise the last state forgets early inputs
    p.bz = Vec::Zero(hidden_dim);
    std::uniform_real_distribution<double> timescale(1.0, 300.0);
    for (int j = 0; j < hidden_dim; ++j) p.bz(j) = -std::log(timescale(rng));
    p.br = Vec::Zero(hidden_dim);
    p.bh = Vec::Zero(hidden_dim);
    return p;
}

LstmParams make_lstm(int in_dim, int hidden_dim, std::mt19937_64& rng) {
    LstmParams p;
    double bw = 1.0 / std::sqrt(static_cast<double>(in_dim));
    double bu = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    p.Wi = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Wf = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Wo = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Wg = uniform_mat(hidden_dim, in_dim, bw, rng);
    p.Ui = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.Uf = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.Uo = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.Ug = uniform_mat(hidden_dim, hidden_dim, bu, rng);
    p.bi = Vec::Zero(hidden_dim);
    p.bf = Vec::Constant(hidden_dim, 1.0);  // forget-gate bias
    p.bo = Vec::Zero(hidden_dim);
    p.bg = Vec::Zero(hidden_dim);
    return p;
}

std::vector<Mat*> collect_params(DenseParams& p) { return {&p.W}; }
std::vector<Mat*> collect_params(GruParams& p) {
    return {&p.Wz, &p.Wr, &p.Wh, &p.Uz, &p.Ur, &p.Uh};
}
std::vector<Mat*> collect_params(LstmParams& p) {
    return {&p.Wi, &p.Wf, &p.Wo, &p.Wg, &p.Ui, &p.Uf, &p.Uo, &p.Ug};
}
std::vector<Vec*> collect_biases(DenseParams& p) { return {&p.b}; }
std::vector<Vec*> collect_biases(GruParams& p) { return {&p.bz, &p.br, &p.bh}; }
std::vector<Vec*> collect_biases(LstmParams& p) {
    return {&p.bi, &p.bf, &p.bo, &p.bg};
}

void ParamRefs::add(std::vector<Mat*> m, std::vector<Vec*> v) {
    mats.insert(mats.end(), m.begin(), m.end());
    vecs.insert(vecs.end(), v.begin(), v.end());
}

std::size_t ParamRefs::total_size() const {
    std::size_t n = 0;
    for (auto* m : mats) n += static_cast<std::size_t>(m->size());
    for (auto* v : vecs) n += static_cast<std::size_t>(v->size());
    return n;
}

void ParamRefs::flatten(Vec& out) const {
    out.resize(static_cast<Eigen::Index>(total_size()));
    Eigen::Index at = 0;
    for (auto* m : mats) {
        out.segment(at, m->size()) = Eigen::Map<const Vec>(m->data(), m->size());
        at += m->size();
    }
    for (auto* v : vecs) {
        out.segment(at, v->size()) = *v;
        at += v->size();
    }
}

void ParamRefs::unflatten(const Vec& in) {
    Eigen::Index at = 0;
    for (auto* m : mats) {
        Eigen::Map<Vec>(m->data(), m->size()) = in.segment(at, m->size());
        at += m->size();
    }
    for (auto* v : vecs) {
        *v = in.segment(at, v->size());
        at += v->size();
    }
}

ParamGrads ParamGrads::zeros_like(const ParamRefs& refs) {
    ParamGrads g;
    for (auto* m : refs.mats) g.mats.push_back(Mat::Zero(m->rows(), m->cols()));
    for (auto* v : refs.vecs) g.vecs.push_back(Vec::Zero(v->size()));
    return g;
}

void ParamGrads::add_scaled(const ParamGrads& other, double scale) {
    for (std::size_t i = 0; i < mats.size(); ++i) mats[i] += scale * other.mats[i];
    for (std::size_t i = 0; i < vecs.size(); ++i) vecs[i] += scale * other.vecs[i];
}

void ParamGrads::flatten(Vec& out) const {
    Eigen::Index total = 0;
    for (const auto& m : mats) total += m.size();
    for (const auto& v : vecs) total += v.size();
    out.resize(total);
    Eigen::Index at = 0;
    for (const auto& m : mats) {
        out.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        at += m.size();
    }
    for (const auto& v : vecs) {
        out.segment(at, v.size()) = v;
        at += v.size();
    }
}

void ParamGrads::check_finite(const std::string& context) const {
    for (std::size_t i = 0; i < mats.size(); ++i)
        if (!mats[i].allFinite())
            throw std::runtime_error("non-finite gradient in " + context +
                                     " matrix #" + std::to_string(i));
    for (std::size_t i = 0; i < vecs.size(); ++i)
        if (!vecs[i].allFinite())
            throw std::runtime_error("non-finite gradient in " + context +
                                     " bias #" + std::to_string(i));
}

// ---------------------------------------------------------------------------
// Dense

Mat dense_forward(const Mat& x, const DenseParams& p, DenseCache* cache) {
    if (x.cols() != p.in_dim())
        throw std::invalid_argument("dense_forward: input dim mismatch");
    Mat y = apply_activation(affine(x, p.W, p.b), p.act);
    if (cache) {
        cache->x = x;
        cache->y = y;
    }
    return y;
}

Mat dense_backward(const Mat& dy, const DenseParams& p, const DenseCache& cache,
                   Mat& dW, Vec& db) {
    Mat da = dy.cwiseProduct(activation_grad_from_output(cache.y, p.act));
    dW.noalias() += da.transpose() * cache.x;
    db += da.colwise().sum().transpose();
    return da * p.W;
}

// ---------------------------------------------------------------------------
// GRU

Mat gru_cell_forward(const Mat& x, const Mat& h_prev, const GruParams& p) {
    if (x.cols() != p.in_dim() || h_prev.cols() != p.hidden_dim())
        throw std::invalid_argument("gru_cell_forward: dimension mismatch");
    Mat z = sigmoid(affine(x, p.Wz, p.bz) + h_prev * p.Uz.transpose());
    Mat r = sigmoid(affine(x, p.Wr, p.br) + h_prev * p.Ur.transpose());
    Mat hc = (affine(x, p.Wh, p.bh) + h_prev.cwiseProduct(r) * p.Uh.transpose())
                 .array()
                 .tanh()
                 .matrix();
    Mat h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(hc);
    require_finite(h, "gru_cell_forward");
    return h;
}

std::vector<Mat> gru_forward(const std::vector<Mat>& xs, const GruParams& p,
                             GruCache* cache) {
    const auto T = xs.size();
    const Eigen::Index B = xs.empty() ? 0 : xs[0].rows();
    Mat h = Mat::Zero(B, p.hidden_dim());
    if (cache) {
        cache->x = xs;
        cache->h0 = h;
        cache->z.resize(T);
        cache->r.resize(T);
        cache->hc.resize(T);
        cache->h.resize(T);
    }
    std::vector<Mat> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        Mat z = sigmoid(affine(xs[t], p.Wz, p.bz) + h * p.Uz.transpose());
        Mat r = sigmoid(affine(xs[t], p.Wr, p.br) + h * p.Ur.transpose());
        Mat hc = (affine(xs[t], p.Wh, p.bh) +
                  h.cwiseProduct(r) * p.Uh.transpose())
                     .array()
                     .tanh()
                     .matrix();
        h = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(hc);
        require_finite(h, "gru_forward");
        if (cache) {
            cache->z[t] = z;
            cache->r[t] = r;
            cache->hc[t] = hc;
            cache->h[t] = h;
        }
        out[t] = h;
    }
    return out;
}

GruGrads GruGrads::zeros_like(const GruParams& p) {
    GruGrads g;
    g.Wz = Mat::Zero(p.Wz.rows(), p.Wz.cols());
    g.Wr = Mat::Zero(p.Wr.rows(), p.Wr.cols());
    g.Wh = Mat::Zero(p.Wh.rows(), p.Wh.cols());
    g.Uz = Mat::Zero(p.Uz.rows(), p.Uz.cols());
    g.Ur = Mat::Zero(p.Ur.rows(), p.Ur.cols());
    g.Uh = Mat::Zero(p.Uh.rows(), p.Uh.cols());
    g.bz = Vec::Zero(p.bz.size());
    g.br = Vec::Zero(p.br.size());
    g.bh = Vec::Zero(p.bh.size());
    return g;
}

std::vector<Mat> gru_backward(const std::vector<Mat>& dh_out, const GruParams& p,
                              const GruCache& cache, GruGrads& grads) {
    const auto T = cache.x.size();
    if (dh_out.size() != T)
        throw std::invalid_argument("gru_backward: gradient/sequence length mismatch");
    std::vector<Mat> dxs(T);
    Mat dh_next = Mat::Zero(cache.h0.rows(), cache.h0.cols());
    for (std::size_t ti = T; ti-- > 0;) {
        const Mat& h_prev = ti == 0 ? cache.h0 : cache.h[ti - 1];
        const Mat& z = cache.z[ti];
        const Mat& r = cache.r[ti];
        const Mat& hc = cache.hc[ti];

        Mat dh = dh_out[ti] + dh_next;
        Mat dz = dh.cwiseProduct(hc - h_prev);
        Mat dhc = dh.cwiseProduct(z);
        Mat dh_prev = dh.cwiseProduct((1.0 - z.array()).matrix());

        Mat dah = dhc.cwiseProduct((1.0 - hc.array().square()).matrix());
        grads.Wh.noalias() += dah.transpose() * cache.x[ti];
        grads.Uh.noalias() += dah.transpose() * h_prev.cwiseProduct(r);
        grads.bh += dah.colwise().sum().transpose();

        Mat drh = dah * p.Uh;  // gradient into r .* h_prev
        Mat dr = drh.cwiseProduct(h_prev);
        dh_prev += drh.cwiseProduct(r);

        Mat daz = dz.cwiseProduct(z).cwiseProduct((1.0 - z.array()).matrix());
        Mat dar = dr.cwiseProduct(r).cwiseProduct((1.0 - r.array()).matrix());
        grads.Wz.noalias() += daz.transpose() * cache.x[ti];
        grads.Uz.noalias() += daz.transpose() * h_prev;
        grads.bz += daz.colwise().sum().transpose();
        grads.Wr.noalias() += dar.transpose() * cache.x[ti];
        grads.Ur.noalias() += dar.transpose() * h_prev;
        grads.br += dar.colwise().sum().transpose();

        dxs[ti] = daz * p.Wz + dar * p.Wr + dah * p.Wh;
        dh_next = dh_prev + daz * p.Uz + dar * p.Ur;
    }
    return dxs;
}

// ---------------------------------------------------------------------------
// LSTM

std::pair<Mat, Mat> lstm_cell_forward(const Mat& x, const Mat& h_prev,
                                      const Mat& c_prev, const LstmParams& p) {
    if (x.cols() != p.in_dim() || h_prev.cols() != p.hidden_dim())
        throw std::invalid_argument("lstm_cell_forward: dimension mismatch");
    Mat i = sigmoid(affine(x, p.Wi, p.bi) + h_prev * p.Ui.transpose());
    Mat f = sigmoid(affine(x, p.Wf, p.bf) + h_prev * p.Uf.transpose());
    Mat o = sigmoid(affine(x, p.Wo, p.bo) + h_prev * p.Uo.transpose());
    Mat g = (affine(x, p.Wg, p.bg) + h_prev * p.Ug.transpose()).array().tanh().matrix();
    Mat c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    Mat h = o.cwiseProduct(c.array().tanh().matrix());
    require_finite(h, "lstm_cell_forward");
    return {h, c};
}

std::vector<Mat> lstm_forward(const std::vector<Mat>& xs, const LstmParams& p,
                              LstmCache* cache) {
    const auto T = xs.size();
    const Eigen::Index B = xs.empty() ? 0 : xs[0].rows();
    Mat h = Mat::Zero(B, p.hidden_dim());
    Mat c = h;
    if (cache) {
        cache->x = xs;
        cache->h0 = h;
        cache->c0 = c;
        cache->i.resize(T);
        cache->f.resize(T);
        cache->o.resize(T);
        cache->g.resize(T);
        cache->c.resize(T);
        cache->h.resize(T);
        cache->tanh_c.resize(T);
    }
    std::vector<Mat> out(T);
    for (std::size_t t = 0; t < T; ++t) {
        Mat i = sigmoid(affine(xs[t], p.Wi, p.bi) + h * p.Ui.transpose());
        Mat f = sigmoid(affine(xs[t], p.Wf, p.bf) + h * p.Uf.transpose());
        Mat o = sigmoid(affine(xs[t], p.Wo, p.bo) + h * p.Uo.transpose());
        Mat g = (affine(xs[t], p.Wg, p.bg) + h * p.Ug.transpose()).array().tanh().matrix();
        c = f.cwiseProduct(c) + i.cwiseProduct(g);
        Mat tc = c.array().tanh().matrix();
        h = o.cwiseProduct(tc);
        require_finite(h, "lstm_forward");
        if (cache) {
            cache->i[t] = i;
            cache->f[t] = f;
            cache->o[t] = o;
            cache->g[t] = g;
            cache->c[t] = c;
            cache->h[t] = h;
            cache->tanh_c[t] = tc;
        }
        out[t] = h;
    }
    return out;
}

LstmGrads LstmGrads::zeros_like(const LstmParams& p) {
    LstmGrads g;
    auto zm = [](const Mat& m) { return Mat::Zero(m.rows(), m.cols()); };
    g.Wi = zm(p.Wi); g.Wf = zm(p.Wf); g.Wo = zm(p.Wo); g.Wg = zm(p.Wg);
    g.Ui = zm(p.Ui); g.Uf = zm(p.Uf); g.Uo = zm(p.Uo); g.Ug = zm(p.Ug);
    g.bi = Vec::Zero(p.bi.size());
    g.bf = Vec::Zero(p.bf.size());
    g.bo = Vec::Zero(p.bo.size());
    g.bg = Vec::Zero(p.bg.size());
    return g;
}

std::vector<Mat> lstm_backward(const std::vector<Mat>& dh_out, const LstmParams& p,
                               const LstmCache& cache, LstmGrads& grads) {
    const auto T = cache.x.size();
    if (dh_out.size() != T)
        throw std::invalid_argument("lstm_backward: gradient/sequence length mismatch");
    std::vector<Mat> dxs(T);
    Mat dh_next = Mat::Zero(cache.h0.rows(), cache.h0.cols());
    Mat dc_next = dh_next;
    for (std::size_t ti = T; ti-- > 0;) {
        const Mat& h_prev = ti == 0 ? cache.h0 : cache.h[ti - 1];
        const Mat& c_prev = ti == 0 ? cache.c0 : cache.c[ti - 1];
        const Mat& i = cache.i[ti];
        const Mat& f = cache.f[ti];
        const Mat& o = cache.o[ti];
        const Mat& g = cache.g[ti];
        const Mat& tc = cache.tanh_c[ti];

        Mat dh = dh_out[ti] + dh_next;
        Mat do_ = dh.cwiseProduct(tc);
        Mat dc = dc_next +
                 dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
        Mat di = dc.cwiseProduct(g);
        Mat df = dc.cwiseProduct(c_prev);
        Mat dg = dc.cwiseProduct(i);
        dc_next = dc.cwiseProduct(f);

        Mat dai = di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
        Mat daf = df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
        Mat dao = do_.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
        Mat dag = dg.cwiseProduct((1.0 - g.array().square()).matrix());

        grads.Wi.noalias() += dai.transpose() * cache.x[ti];
        grads.Wf.noalias() += daf.transpose() * cache.x[ti];
        grads.Wo.noalias() += dao.transpose() * cache.x[ti];
        grads.Wg.noalias() += dag.transpose() * cache.x[ti];
        grads.Ui.noalias() += dai.transpose() * h_prev;
        grads.Uf.noalias() += daf.transpose() * h_prev;
        grads.Uo.noalias() += dao.transpose() * h_prev;
        grads.Ug.noalias() += dag.transpose() * h_prev;
        grads.bi += dai.colwise().sum().transpose();
        grads.bf += daf.colwise().sum().transpose();
        grads.bo += dao.colwise().sum().transpose();
        grads.bg += dag.colwise().sum().transpose();

        dxs[ti] = dai * p.Wi + daf * p.Wf + dao * p.Wo + dag * p.Wg;
        dh_next = dai * p.Ui + daf * p.Uf + dao * p.Uo + dag * p.Ug;
    }
    return dxs;
}

// ---------------------------------------------------------------------------
// Losses

Mat softmax(const Mat& logits) {
    if (!logits.allFinite())
        throw std::invalid_argument("softmax: non-finite logits");
    Mat shifted = logits.colwise() - logits.rowwise().maxCoeff();
    Mat e = shifted.array().exp().matrix();
    return e.array().colwise() / e.rowwise().sum().array();
}

double categorical_crossentropy(const Mat& probs, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
        throw std::invalid_argument("cce: batch size mismatch");
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        double s = probs.row(r).sum();
        if (std::abs(s - 1.0) > 1e-6 || probs.row(r).minCoeff() < -1e-12)
            throw std::invalid_argument("cce: row is not a probability distribution");
    }
    double total = 0.0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= probs.cols())
            throw std::invalid_argument("cce: label out of range");
        total += -std::log(probs(r, y) + kCceFloor);
    }
    return total / static_cast<double>(probs.rows());
}

Mat softmax_cce_grad(const Mat& probs, const std::vector<int>& labels) {
    Mat g = probs;
    for (Eigen::Index r = 0; r < g.rows(); ++r)
        g(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    return g / static_cast<double>(g.rows());
}

double mse_loss(const Mat& pred, const Mat& target,
                const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
        pred.rows() != mask.rows() || pred.cols() != mask.cols())
        throw std::invalid_argument("mse_loss: shape mismatch");
    double sum = 0.0;
    long count = 0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
        for (Eigen::Index c = 0; c < pred.cols(); ++c)
            if (mask(r, c)) {
                double d = pred(r, c) - target(r, c);
                sum += d * d;
                ++count;
            }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Mat mse_grad(const Mat& pred, const Mat& target,
             const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    Mat g = Mat::Zero(pred.rows(), pred.cols());
    long count = 0;
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
        for (Eigen::Index c = 0; c < pred.cols(); ++c)
            if (mask(r, c)) ++count;
    if (count == 0) return g;
    for (Eigen::Index r = 0; r < pred.rows(); ++r)
        for (Eigen::Index c = 0; c < pred.cols(); ++c)
            if (mask(r, c))
                g(r, c) = 2.0 * (pred(r, c) - target(r, c)) / static_cast<double>(count);
    return g;
}

// ---------------------------------------------------------------------------
// Adam

AdamState AdamState::init(const ParamRefs& refs, double lr) {
    AdamState s;
    s.lr = lr;
    for (auto* m : refs.mats) {
        s.m_mats.push_back(Mat::Zero(m->rows(), m->cols()));
        s.v_mats.push_back(Mat::Zero(m->rows(), m->cols()));
    }
    for (auto* v : refs.vecs) {
        s.m_vecs.push_back(Vec::Zero(v->size()));
        s.v_vecs.push_back(Vec::Zero(v->size()));
    }
    return s;
}

void adam_step(ParamRefs& params, const ParamGrads& grads, AdamState& state) {
    if (params.mats.size() != grads.mats.size() ||
        params.vecs.size() != grads.vecs.size())
        throw std::invalid_argument("adam_step: parameter/gradient mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.mats.size(); ++k) {
        auto& m = state.m_mats[k];
        auto& v = state.v_mats[k];
        const Mat& g = grads.mats[k];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v.array().matrix() +
            (1.0 - state.beta2) * g.cwiseProduct(g);
        Mat mhat = m / bc1;
        Mat vhat = v / bc2;
        params.mats[k]->array() -=
            state.lr * mhat.array() / (vhat.array().sqrt() + state.eps);
    }
    for (std::size_t k = 0; k < params.vecs.size(); ++k) {
        auto& m = state.m_vecs[k];
        auto& v = state.v_vecs[k];
        const Vec& g = grads.vecs[k];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        Vec mhat = m / bc1;
        Vec vhat = v / bc2;
        params.vecs[k]->array() -=
            state.lr * mhat.array() / (vhat.array().sqrt() + state.eps);
    }
}

Vec numeric_gradient(const std::function<double()>& loss, ParamRefs& params,
                     double step) {
    Vec theta;
    params.flatten(theta);
    Vec grad(theta.size());
    auto eval_at = [&](Eigen::Index k, double value) {
        double orig = theta[k];
        theta[k] = value;
        params.unflatten(theta);
        double l = loss();
        theta[k] = orig;
        return l;
    };
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        double orig = theta[k];
        double lp2 = eval_at(k, orig + 2.0 * step);
        double lp1 = eval_at(k, orig + step);
        double lm1 = eval_at(k, orig - step);
        double lm2 = eval_at(k, orig - 2.0 * step);
        grad[k] = (-lp2 + 8.0 * lp1 - 8.0 * lm1 + lm2) / (12.0 * step);
    }
    params.unflatten(theta);
    return grad;
}

}  // namespace ponwatch::nn
