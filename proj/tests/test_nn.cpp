#include "doctest.h"
#include "ponwatch/nn.hpp"

#include <cmath>
#include <random>

using namespace ponwatch::nn;

namespace {

Mat random_mat(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
}

// scaled relative error; tolerant of near-zero gradient pairs
double rel_err(const Vec& a, const Vec& b) {
    double worst = 0.0;
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        double denom = std::max({std::abs(a[k]) + std::abs(b[k]), 1e-2});
        worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
    }
    return worst;
}

}  // namespace

TEST_CASE("dense forward examples") {
    std::mt19937_64 rng(1);
    DenseParams p = make_dense(2, 2, Activation::Identity, rng);

    p.W = Mat::Identity(2, 2);
    p.b = Vec::Zero(2);
    Mat x(1, 2);
    x << 1.0, 2.0;
    CHECK(dense_forward(x, p).isApprox(x));

    p.W = Mat::Zero(2, 2);
    p.b << 3.0, -1.0;
    Mat y = dense_forward(x, p);
    CHECK(y(0, 0) == doctest::Approx(3.0));
    CHECK(y(0, 1) == doctest::Approx(-1.0));

    p.W << 1, 1, 0, 1;
    p.b = Vec::Zero(2);
    y = dense_forward(x, p);
    CHECK(y(0, 0) == doctest::Approx(3.0));
    CHECK(y(0, 1) == doctest::Approx(2.0));

    Mat bad(1, 3);
    CHECK_THROWS(dense_forward(bad, p));
}

TEST_CASE("gru cell examples") {
    std::mt19937_64 rng(2);
    GruParams p = make_gru(3, 4, rng);

    SUBCASE("all-zero params halve the state") {
        for (auto* m : collect_params(p)) m->setZero();
        for (auto* v : collect_biases(p)) v->setZero();
        Mat x = Mat::Ones(2, 3);
        Mat h = random_mat(2, 4, rng, 0.9);
        Mat hn = gru_cell_forward(x, h, p);
        CHECK(hn.isApprox(0.5 * h, 1e-12));

        Mat h0 = Mat::Zero(2, 4);
        CHECK(gru_cell_forward(x, h0, p).isZero(1e-15));
    }

    SUBCASE("state stays inside the unit ball") {
        for (int trial = 0; trial < 50; ++trial) {
            GruParams q = make_gru(3, 4, rng);
            Mat x = random_mat(1, 3, rng, 2.0);
            Mat h = random_mat(1, 4, rng, 0.999);
            Mat hn = gru_cell_forward(x, h, q);
            CHECK(hn.array().abs().maxCoeff() < 1.0);
        }
    }
}

TEST_CASE("lstm cell examples") {
    std::mt19937_64 rng(3);
    LstmParams p = make_lstm(2, 3, rng);
    for (auto* m : collect_params(p)) m->setZero();
    for (auto* v : collect_biases(p)) v->setZero();

    Mat x = Mat::Ones(1, 2);
    Mat h = Mat::Zero(1, 3);
    Mat c(1, 3);
    c << 0.4, -0.2, 0.8;
    auto [hn, cn] = lstm_cell_forward(x, h, c, p);
    CHECK(cn.isApprox(0.5 * c, 1e-12));
    for (int j = 0; j < 3; ++j)
        CHECK(hn(0, j) == doctest::Approx(0.5 * std::tanh(0.5 * c(0, j))));

    auto [h0, c0] = lstm_cell_forward(x, Mat::Zero(1, 3), Mat::Zero(1, 3), p);
    CHECK(h0.isZero(1e-15));
    CHECK(c0.isZero(1e-15));

    // saturated gates: f -> 1, i -> 0 preserves the cell state
    p.bf.setConstant(50.0);
    p.bi.setConstant(-50.0);
    auto [h2, c2] = lstm_cell_forward(x, h, c, p);
    CHECK(c2.isApprox(c, 1e-9));
}

TEST_CASE("softmax and cce") {
    Mat l(1, 2);
    l << 0.0, 0.0;
    Mat s = softmax(l);
    CHECK(s(0, 0) == doctest::Approx(0.5));

    l << std::log(2.0), 0.0;
    s = softmax(l);
    CHECK(s(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(s(0, 1) == doctest::Approx(1.0 / 3.0));

    Mat shifted = l.array() + 123.0;
    CHECK(softmax(shifted).isApprox(s, 1e-12));

    Mat rows = softmax(Mat::Random(7, 9));
    for (int r = 0; r < rows.rows(); ++r)
        CHECK(std::abs(rows.row(r).sum() - 1.0) < 1e-12);

    Mat perfect(1, 3);
    perfect << 0.0, 1.0, 0.0;
    CHECK(categorical_crossentropy(perfect, {1}) == doctest::Approx(0.0).epsilon(1e-9));

    Mat uni9 = Mat::Constant(1, 9, 1.0 / 9.0);
    CHECK(categorical_crossentropy(uni9, {4}) == doctest::Approx(std::log(9.0)));
    Mat uni7 = Mat::Constant(1, 7, 1.0 / 7.0);
    CHECK(categorical_crossentropy(uni7, {0}) == doctest::Approx(std::log(7.0)));

    Mat invalid(1, 3);
    invalid << 0.9, 0.9, 0.9;
    CHECK_THROWS(categorical_crossentropy(invalid, {0}));
}

TEST_CASE("masked mse") {
    Mat pred(1, 2), tgt(1, 2);
    pred << 1.0, 0.0;
    tgt << 0.0, 0.0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(1, 2);
    mask << true, true;
    CHECK(mse_loss(pred, tgt, mask) == doctest::Approx(0.5));
    CHECK(mse_loss(tgt, tgt, mask) == doctest::Approx(0.0));
    mask << false, false;
    CHECK(mse_loss(pred, tgt, mask) == doctest::Approx(0.0));
    CHECK(mse_grad(pred, tgt, mask).isZero());
}

TEST_CASE("numeric gradient oracle sanity") {
    // L = theta^2 at theta = 3 -> dL = 6
    Mat theta(1, 1);
    theta << 3.0;
    ParamRefs refs;
    refs.mats.push_back(&theta);
    auto loss = [&]() { return theta(0, 0) * theta(0, 0); };
    Vec g = numeric_gradient(loss, refs);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto constant = [&]() { return 42.0; };
    Vec gc = numeric_gradient(constant, refs);
    CHECK(std::abs(gc[0]) < 1e-9);
}

TEST_CASE("dense backward matches closed form and finite differences") {
    std::mt19937_64 rng(7);
    DenseParams p = make_dense(3, 2, Activation::Identity, rng);
    Mat x = random_mat(4, 3, rng);
    Mat y = random_mat(4, 2, rng);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(4, 2, true);

    DenseCache cache;
    Mat out = dense_forward(x, p, &cache);
    Mat dW = Mat::Zero(2, 3);
    Vec db = Vec::Zero(2);
    dense_backward(mse_grad(out, y, mask), p, cache, dW, db);

    // closed form: dW = 2 (Wx + b - y)^T x / n, n = number of entries
    Mat closed = 2.0 * (out - y).transpose() * x / 8.0;
    CHECK(dW.isApprox(closed, 1e-10));

    ParamRefs refs;
    refs.add(collect_params(p), collect_biases(p));
    auto loss = [&]() { return mse_loss(dense_forward(x, p), y, mask); };
    Vec numeric = numeric_gradient(loss, refs);
    ParamGrads ana = ParamGrads::zeros_like(refs);
    ana.mats[0] = dW;
    ana.vecs[0] = db;
    Vec flat;
    ana.flatten(flat);
    CHECK(rel_err(flat, numeric) < 1e-5);
}

TEST_CASE("gru backward matches finite differences") {
    std::mt19937_64 rng(11);
    const int T = 5, B = 2, in = 3, H = 4;
    GruParams p = make_gru(in, H, rng);
    std::vector<Mat> xs;
    for (int t = 0; t < T; ++t) xs.push_back(random_mat(B, in, rng));
    Mat target = random_mat(B, H, rng, 0.5);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(B, H, true);

    auto loss = [&]() {
        auto hs = gru_forward(xs, p);
        return mse_loss(hs.back(), target, mask);
    };

    GruCache cache;
    auto hs = gru_forward(xs, p, &cache);
    std::vector<Mat> dh(T, Mat::Zero(B, H));
    dh.back() = mse_grad(hs.back(), target, mask);
    GruGrads g = GruGrads::zeros_like(p);
    gru_backward(dh, p, cache, g);

    ParamRefs refs;
    refs.add(collect_params(p), collect_biases(p));
    Vec numeric = numeric_gradient(loss, refs);
    ParamGrads ana = ParamGrads::zeros_like(refs);
    ana.mats = {g.Wz, g.Wr, g.Wh, g.Uz, g.Ur, g.Uh};
    ana.vecs = {g.bz, g.br, g.bh};
    Vec flat;
    ana.flatten(flat);
    CHECK(rel_err(flat, numeric) < 1e-5);
}

TEST_CASE("lstm backward matches finite differences, loss over all steps") {
    std::mt19937_64 rng(13);
    const int T = 4, B = 2, in = 2, H = 3;
    LstmParams p = make_lstm(in, H, rng);
    std::vector<Mat> xs;
    for (int t = 0; t < T; ++t) xs.push_back(random_mat(B, in, rng));
    std::vector<Mat> targets;
    for (int t = 0; t < T; ++t) targets.push_back(random_mat(B, H, rng, 0.5));
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(B, H, true);

    auto loss = [&]() {
        auto hs = lstm_forward(xs, p);
        double total = 0.0;
        for (int t = 0; t < T; ++t) total += mse_loss(hs[t], targets[t], mask);
        return total;
    };

    LstmCache cache;
    auto hs = lstm_forward(xs, p, &cache);
    std::vector<Mat> dh(T);
    for (int t = 0; t < T; ++t) dh[t] = mse_grad(hs[t], targets[t], mask);
    LstmGrads g = LstmGrads::zeros_like(p);
    lstm_backward(dh, p, cache, g);

    ParamRefs refs;
    refs.add(collect_params(p), collect_biases(p));
    Vec numeric = numeric_gradient(loss, refs);
    ParamGrads ana = ParamGrads::zeros_like(refs);
    ana.mats = {g.Wi, g.Wf, g.Wo, g.Wg, g.Ui, g.Uf, g.Uo, g.Ug};
    ana.vecs = {g.bi, g.bf, g.bo, g.bg};
    Vec flat;
    ana.flatten(flat);
    CHECK(rel_err(flat, numeric) < 1e-5);
}

TEST_CASE("masked targets do not influence gradients") {
    std::mt19937_64 rng(17);
    DenseParams p = make_dense(3, 2, Activation::Sigmoid, rng);
    Mat x = random_mat(4, 3, rng);
    Mat tgt = random_mat(4, 2, rng);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(4, 2);
    mask.setConstant(true);
    mask(1, 0) = false;
    mask(3, 1) = false;

    auto grad_for = [&](const Mat& t) {
        DenseCache cache;
        Mat out = dense_forward(x, p, &cache);
        Mat dW = Mat::Zero(2, 3);
        Vec db = Vec::Zero(2);
        dense_backward(mse_grad(out, t, mask), p, cache, dW, db);
        return dW;
    };
    Mat zeroed = tgt;
    zeroed(1, 0) = 0.0;
    zeroed(3, 1) = 0.0;
    CHECK(grad_for(tgt) == grad_for(zeroed));  // exact
}

TEST_CASE("adam step behavior") {
    Mat theta(1, 1);
    theta << 1.0;
    ParamRefs refs;
    refs.mats.push_back(&theta);
    AdamState st = AdamState::init(refs, 0.1);
    ParamGrads g = ParamGrads::zeros_like(refs);

    SUBCASE("zero gradient leaves params unchanged") {
        adam_step(refs, g, st);
        CHECK(theta(0, 0) == doctest::Approx(1.0));
        CHECK(st.t == 1);
    }

    SUBCASE("first step moves by ~lr in the gradient direction") {
        g.mats[0](0, 0) = 0.37;
        adam_step(refs, g, st);
        CHECK(theta(0, 0) == doctest::Approx(1.0 - 0.1).epsilon(1e-4));
    }

    SUBCASE("descends a convex quadratic") {
        double prev = 1.0;
        for (int it = 0; it < 2; ++it) {
            g.mats[0](0, 0) = theta(0, 0);  // d/dt of t^2/2
            adam_step(refs, g, st);
            CHECK(theta(0, 0) < prev);
            prev = theta(0, 0);
        }
    }
}

TEST_CASE("parameter flatten/unflatten round trip") {
    std::mt19937_64 rng(23);
    GruParams p = make_gru(3, 5, rng);
    ParamRefs refs;
    refs.add(collect_params(p), collect_biases(p));
    Vec flat;
    refs.flatten(flat);
    Vec tweaked = flat.array() + 0.125;
    refs.unflatten(tweaked);
    Vec again;
    refs.flatten(again);
    CHECK(again == tweaked);
}
