#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "mnet/error.hpp"
#include "mnet/nn.hpp"
#include "mnet/optim.hpp"
#include "mnet/rng.hpp"

using namespace mnet;

namespace {

Matrix random_input(Rng& rng, int rows, int cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

std::vector<double*> flatten(LstmParams& p) {
    std::vector<double*> out;
    visit_tensors(p, [&](const std::string&, std::vector<double>& v) {
        for (auto& x : v) out.push_back(&x);
    });
    return out;
}

std::vector<double> flatten_copy(const LstmParams& p) {
    std::vector<double> out;
    visit_tensors(p, [&](const std::string&, const std::vector<double>& v) {
        out.insert(out.end(), v.begin(), v.end());
    });
    return out;
}

// Max relative finite-difference error over every parameter of a random
// net, loss = mse(pred, target).
double gradcheck_max_rel_error(uint64_t seed) {
    const LstmDims dims{3, 4, 2, 2, 2};  // t_h = 5 -> 6 input rows
    LstmParams p = init_params(dims, seed);
    Rng rng(derive_seed(seed, 99));
    Matrix input = random_input(rng, 6, dims.d_in);
    Matrix target = random_input(rng, dims.t_out, dims.k_out);

    Forward f = forward(input, p);
    Matrix grad_pred(dims.t_out, dims.k_out);
    for (size_t i = 0; i < grad_pred.size(); ++i)
        grad_pred.data()[i] =
            2.0 * (f.pred.data()[i] - target.data()[i]) / static_cast<double>(f.pred.size());
    LstmParams analytic = backward(f.cache, grad_pred, p);
    std::vector<double> a = flatten_copy(analytic);

    auto loss_at = [&](LstmParams& q) { return mse(forward(input, q).pred, target); };
    std::vector<double*> slots = flatten(p);
    const double h = 1e-5;
    double worst = 0.0;
    for (size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + h;
        double up = loss_at(p);
        *slots[i] = saved - h;
        double down = loss_at(p);
        *slots[i] = saved;
        double numeric = (up - down) / (2.0 * h);
        double rel = std::abs(a[i] - numeric) / std::max({1.0, std::abs(a[i]), std::abs(numeric)});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("init_params determinism and bounds") {
    LstmDims dims{5, 4, 2, 3, 2};
    LstmParams a = init_params(dims, 42);
    LstmParams b = init_params(dims, 42);
    CHECK(a == b);
    LstmParams c = init_params(dims, 43);
    CHECK(flatten_copy(a) != flatten_copy(c));

    // H = 4: every draw inside [-0.5, 0.5]
    double lo = 0.0, hi = 0.0;
    for (double v : flatten_copy(a)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= -0.5);
    CHECK(hi <= 0.5);
    CHECK(lo < -0.3);  // the draws actually spread over the range
    CHECK(hi > 0.3);

    CHECK_THROWS_AS(init_params(LstmDims{3, 0, 1, 1, 1}, 0), Error);
    CHECK_THROWS_AS(init_params(LstmDims{3, 4, 0, 1, 1}, 0), Error);
}

TEST_CASE("cell_forward zero parameters") {
    LstmLayerParams lp;
    lp.w_x = Matrix(8, 3);
    lp.w_h = Matrix(8, 2);
    lp.b.assign(8, 0.0);
    std::vector<double> x = {0.7, -1.3, 2.0};
    std::vector<double> h(2, 0.0), c(2, 0.0), h_out(2), c_out(2);
    cell_forward(x, h, c, lp, h_out, c_out);
    CHECK(h_out[0] == 0.0);  // sigmoid(0)*tanh(0.5*0 + 0.5*0) = 0
    CHECK(c_out[0] == 0.0);

    // c = 1: c' = 0.5, h' = 0.5 * tanh(0.5)
    std::vector<double> c1(2, 1.0);
    cell_forward(x, h, c1, lp, h_out, c_out);
    CHECK(c_out[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h_out[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    CHECK(h_out[1] == doctest::Approx(0.231059).epsilon(1e-6));

    CHECK_THROWS_AS(cell_forward(std::vector<double>(2, 0.0), h, c, lp, h_out, c_out), Error);
}

TEST_CASE("cell_forward output bounds") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const int hidden = 3, d = 4;
        LstmLayerParams lp;
        lp.w_x = random_input(rng, 4 * hidden, d, 2.0);
        lp.w_h = random_input(rng, 4 * hidden, hidden, 2.0);
        lp.b.resize(static_cast<size_t>(4 * hidden));
        for (auto& v : lp.b) v = rng.uniform(-2, 2);
        std::vector<double> x(d), h(hidden), c(hidden), h_out(hidden), c_out(hidden);
        for (auto& v : x) v = rng.uniform(-3, 3);
        for (auto& v : h) v = rng.uniform(-1, 1);
        for (auto& v : c) v = rng.uniform(-4, 4);
        cell_forward(x, h, c, lp, h_out, c_out);
        for (int j = 0; j < hidden; ++j) {
            CHECK(std::abs(c_out[static_cast<size_t>(j)]) <= std::abs(c[static_cast<size_t>(j)]) + 1.0);
            CHECK(std::abs(h_out[static_cast<size_t>(j)]) <= 1.0);
        }
    }
}

TEST_CASE("forward with zero head weights returns head_b") {
    Rng rng(11);
    LstmDims dims{3, 5, 2, 2, 3};
    LstmParams p = init_params(dims, 5);
    p.head_w.fill(0.0);
    for (size_t i = 0; i < p.head_b.size(); ++i) p.head_b[i] = static_cast<double>(i) * 0.25;
    Matrix in1 = random_input(rng, 4, 3);
    Matrix in2 = random_input(rng, 4, 3);
    Forward f1 = forward(in1, p);
    Forward f2 = forward(in2, p);
    for (int r = 0; r < dims.t_out; ++r)
        for (int c = 0; c < dims.k_out; ++c) {
            CHECK(f1.pred.at(r, c) == p.head_b[static_cast<size_t>(r * dims.k_out + c)]);
            CHECK(f2.pred.at(r, c) == f1.pred.at(r, c));
        }
}

TEST_CASE("forward is order sensitive and pure") {
    Rng rng(13);
    LstmDims dims{4, 6, 1, 2, 2};
    LstmParams p = init_params(dims, 21);
    Matrix input = random_input(rng, 5, 4);
    Matrix swapped = input;
    for (int c = 0; c < 4; ++c) {
        std::swap(swapped.at(0, c), swapped.at(4, c));
    }
    Forward a = forward(input, p);
    Forward b = forward(swapped, p);
    double diff = 0.0;
    for (size_t i = 0; i < a.pred.size(); ++i)
        diff = std::max(diff, std::abs(a.pred.data()[i] - b.pred.data()[i]));
    CHECK(diff > 1e-9);

    Forward again = forward(input, p);
    CHECK(again.pred == a.pred);
}

TEST_CASE("reported experiment shapes") {
    LstmDims dims{17, 58, 1, 6, 6};
    LstmParams p = init_params(dims, 1);
    CHECK(p.head_w.rows() == 36);
    CHECK(p.head_w.cols() == 58);
    Matrix input(7, 17);  // t_h = 6 history plus the anchor row
    Forward f = forward(input, p);
    CHECK(f.pred.rows() == 6);
    CHECK(f.pred.cols() == 6);
}

TEST_CASE("single layer, zero recurrence, one step equals a feed-forward map") {
    Rng rng(17);
    LstmDims dims{4, 5, 1, 2, 3};
    LstmParams p = init_params(dims, 33);
    p.layers[0].w_h.fill(0.0);
    Matrix input = random_input(rng, 1, 4);

    Forward f = forward(input, p);

    // direct evaluation of the cell and head equations
    const int hidden = dims.hidden;
    std::vector<double> pred(static_cast<size_t>(dims.head_out()), 0.0);
    std::vector<double> h(static_cast<size_t>(hidden));
    for (int j = 0; j < hidden; ++j) {
        auto pre = [&](int block) {
            double acc = p.layers[0].b[static_cast<size_t>(block * hidden + j)];
            for (int d = 0; d < dims.d_in; ++d)
                acc += p.layers[0].w_x.at(block * hidden + j, d) * input.at(0, d);
            return acc;
        };
        double gi = 1.0 / (1.0 + std::exp(-pre(0)));
        double gg = std::tanh(pre(2));
        double go = 1.0 / (1.0 + std::exp(-pre(3)));
        double c = gi * gg;
        h[static_cast<size_t>(j)] = go * std::tanh(c);
    }
    for (int r = 0; r < dims.head_out(); ++r) {
        double acc = p.head_b[static_cast<size_t>(r)];
        for (int j = 0; j < hidden; ++j) acc += p.head_w.at(r, j) * h[static_cast<size_t>(j)];
        pred[static_cast<size_t>(r)] = acc;
    }
    for (int r = 0; r < dims.t_out; ++r)
        for (int c = 0; c < dims.k_out; ++c)
            CHECK(f.pred.at(r, c) ==
                  doctest::Approx(pred[static_cast<size_t>(r * dims.k_out + c)]).epsilon(1e-12));
}

TEST_CASE("backward zero gradient and bias identity") {
    Rng rng(19);
    LstmDims dims{3, 4, 2, 2, 2};
    LstmParams p = init_params(dims, 3);
    Matrix input = random_input(rng, 6, 3);
    Forward f = forward(input, p);

    Matrix zero(dims.t_out, dims.k_out);
    LstmParams g0 = backward(f.cache, zero, p);
    for (double v : flatten_copy(g0)) CHECK(v == 0.0);

    Matrix grad_pred = random_input(rng, dims.t_out, dims.k_out);
    LstmParams g = backward(f.cache, grad_pred, p);
    for (int r = 0; r < dims.head_out(); ++r)
        CHECK(g.head_b[static_cast<size_t>(r)] == grad_pred.data()[static_cast<size_t>(r)]);
}

TEST_CASE("gradients match central finite differences") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        double err = gradcheck_max_rel_error(seed);
        CAPTURE(seed);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("forward agrees with a cell_forward unroll") {
    Rng rng(37);
    LstmDims dims{3, 4, 1, 2, 2};
    LstmParams p = init_params(dims, 55);
    Matrix input = random_input(rng, 5, 3);
    Forward f = forward(input, p);

    std::vector<double> h(4, 0.0), c(4, 0.0), h_next(4), c_next(4);
    for (int t = 0; t < 5; ++t) {
        std::span<const double> x(input.row(t), 3);
        cell_forward(x, h, c, p.layers[0], h_next, c_next);
        h = h_next;
        c = c_next;
        for (int j = 0; j < 4; ++j)
            CHECK(f.cache.acts[0][static_cast<size_t>(t)].h.at(0, j) ==
                  doctest::Approx(h[static_cast<size_t>(j)]).epsilon(1e-13));
    }
    for (int r = 0; r < dims.head_out(); ++r) {
        double acc = p.head_b[static_cast<size_t>(r)];
        for (int j = 0; j < 4; ++j) acc += p.head_w.at(r, j) * h[static_cast<size_t>(j)];
        CHECK(f.pred.data()[static_cast<size_t>(r)] == doctest::Approx(acc).epsilon(1e-13));
    }
}

TEST_CASE("batched forward equals per-window forward") {
    Rng rng(23);
    LstmDims dims{3, 7, 2, 2, 3};
    LstmParams p = init_params(dims, 77);
    std::vector<Matrix> windows;
    for (int i = 0; i < 5; ++i) windows.push_back(random_input(rng, 4, 3));
    std::vector<const Matrix*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    BatchForward bf = forward_batch(ptrs, p);
    for (int i = 0; i < 5; ++i) {
        Forward f = forward(windows[static_cast<size_t>(i)], p);
        for (int j = 0; j < dims.head_out(); ++j)
            CHECK(bf.preds.at(i, j) == f.pred.data()[static_cast<size_t>(j)]);
    }
}

TEST_CASE("batched backward equals the sum of single-window gradients") {
    Rng rng(29);
    LstmDims dims{3, 5, 2, 2, 2};
    LstmParams p = init_params(dims, 101);
    std::vector<Matrix> windows;
    for (int i = 0; i < 4; ++i) windows.push_back(random_input(rng, 5, 3));
    Matrix grad_preds = random_input(rng, 4, dims.head_out());

    std::vector<const Matrix*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    BatchForward bf = forward_batch(ptrs, p);
    std::vector<double> batched = flatten_copy(backward_batch(bf.cache, grad_preds, p));

    std::vector<double> summed(batched.size(), 0.0);
    for (int i = 0; i < 4; ++i) {
        Forward f = forward(windows[static_cast<size_t>(i)], p);
        Matrix gp(dims.t_out, dims.k_out);
        for (int j = 0; j < dims.head_out(); ++j) gp.data()[static_cast<size_t>(j)] = grad_preds.at(i, j);
        std::vector<double> g = flatten_copy(backward(f.cache, gp, p));
        for (size_t k = 0; k < g.size(); ++k) summed[k] += g[k];
    }
    for (size_t k = 0; k < batched.size(); ++k)
        CHECK(std::abs(batched[k] - summed[k]) <=
              1e-12 * std::max(1.0, std::abs(summed[k])));
}

TEST_CASE("backward rejects mismatched caches and grads") {
    Rng rng(31);
    LstmDims dims{3, 4, 1, 2, 2};
    LstmParams p = init_params(dims, 7);
    Forward f = forward(random_input(rng, 3, 3), p);

    Matrix wrong_shape(1, 1);
    CHECK_THROWS_AS(backward(f.cache, wrong_shape, p), Error);

    LstmParams other = init_params(LstmDims{3, 6, 1, 2, 2}, 7);
    Matrix grad(dims.t_out, dims.k_out);
    CHECK_THROWS_AS(backward(f.cache, grad, other), Error);

    // batch cache through the single-window entry point
    std::vector<Matrix> windows = {random_input(rng, 3, 3), random_input(rng, 3, 3)};
    std::vector<const Matrix*> ptrs = {&windows[0], &windows[1]};
    BatchForward bf = forward_batch(ptrs, p);
    CHECK_THROWS_AS(backward(bf.cache, grad, p), Error);

    CHECK_THROWS_AS(forward(Matrix(3, 5), p), Error);
}

TEST_CASE("params serialize and reload bitwise") {
    LstmParams p = init_params(LstmDims{4, 6, 3, 5, 2}, 90210);
    std::ostringstream buf(std::ios::binary);
    save_params(p, buf);
    std::istringstream in(buf.str(), std::ios::binary);
    LstmParams q = load_params(in);
    CHECK(p == q);

    std::istringstream junk("definitely not a model");
    CHECK_THROWS_AS(load_params(junk), Error);

    std::string truncated = buf.str().substr(0, 40);
    std::istringstream tin(truncated, std::ios::binary);
    CHECK_THROWS_AS(load_params(tin), Error);
}
