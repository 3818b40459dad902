#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mnet/matrix.hpp"

namespace mnet {

struct LstmDims {
    int d_in = 1;    // input features per timestep
    int hidden = 1;  // hidden state width H
    int layers = 1;  // stacked LSTM layers
    int t_out = 1;   // predicted timesteps
    int k_out = 1;   // predicted series per timestep
    int head_out() const { return t_out * k_out; }
    void validate() const;
    bool operator==(const LstmDims&) const = default;
};

/// One LSTM layer. Gate blocks are packed in the row order i, f, g, o:
/// pre-activations a = w_x * x + w_h * h + b, then
/// i = sigmoid(a_i), f = sigmoid(a_f), g = tanh(a_g), o = sigmoid(a_o),
/// c' = f.c + i.g, h' = o.tanh(c').
struct LstmLayerParams {
    Matrix w_x;             // 4H x D
    Matrix w_h;             // 4H x H
    std::vector<double> b;  // 4H

    bool operator==(const LstmLayerParams&) const = default;
};

/// Full model: stacked LSTM (layer > 0 consumes the H-wide hidden state of
/// the layer below) plus a linear head applied to the final hidden state of
/// the top layer.
struct LstmParams {
    LstmDims dims;
    std::vector<LstmLayerParams> layers;
    Matrix head_w;               // (t_out*k_out) x H
    std::vector<double> head_b;  // t_out*k_out

    bool operator==(const LstmParams&) const = default;
};

/// All weights and biases i.i.d. uniform on [-1/sqrt(H), 1/sqrt(H)],
/// drawn from a seeded generator in declared field order. Same seed,
/// same bits.
LstmParams init_params(const LstmDims& dims, uint64_t seed);

LstmParams zeros_like(const LstmParams& p);

/// Visits every tensor as (name, vector<double>&) in serialization order.
template <typename Params, typename Fn>
void visit_tensors(Params&& p, Fn&& fn) {
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const std::string tag = "layers[" + std::to_string(l) + "].";
        fn(tag + "w_x", p.layers[l].w_x.data());
        fn(tag + "w_h", p.layers[l].w_h.data());
        fn(tag + "b", p.layers[l].b);
    }
    fn(std::string("head_w"), p.head_w.data());
    fn(std::string("head_b"), p.head_b);
}

/// Single LSTM cell step.
void cell_forward(std::span<const double> x, std::span<const double> h_prev,
                  std::span<const double> c_prev, const LstmLayerParams& lp,
                  std::span<double> h_out, std::span<double> c_out);

/// Stored activations needed for exact backpropagation through time.
struct ForwardCache {
    LstmDims dims;
    int batch = 0;
    int steps = 0;

    struct StepActs {
        Matrix gates;   // B x 4H, post-activation, blocks i|f|g|o
        Matrix c;       // B x H
        Matrix tanh_c;  // B x H
        Matrix h;       // B x H
    };
    std::vector<Matrix> input_steps;              // [T] each B x d_in
    std::vector<std::vector<StepActs>> acts;      // [layers][T]

    const Matrix& h_final() const { return acts.back().back().h; }
};

struct BatchForward {
    Matrix preds;  // B x (t_out*k_out)
    ForwardCache cache;
};

/// Runs a batch of equally shaped input windows through the network with
/// zero initial hidden and cell state.
BatchForward forward_batch(std::span<const Matrix* const> inputs, const LstmParams& p);

struct Forward {
    Matrix pred;  // t_out x k_out
    ForwardCache cache;
};

/// Single-window forward; pred is the head output reshaped to t_out x k_out.
Forward forward(const Matrix& input, const LstmParams& p);

/// Exact gradients of a scalar loss with respect to every parameter, given
/// d loss / d preds for the batch the cache was built from. The cache must
/// come from a forward_batch call of matching shape.
LstmParams backward_batch(const ForwardCache& cache, const Matrix& grad_preds,
                          const LstmParams& p);

/// Single-window backward; grad_pred is t_out x k_out.
LstmParams backward(const ForwardCache& cache, const Matrix& grad_pred, const LstmParams& p);

/// Flat binary container: magic, version, gate-order tag, dims, then
/// row-major little-endian 64-bit weights in visit_tensors order.
void save_params(const LstmParams& p, std::ostream& out);
LstmParams load_params(std::istream& in);
void save_params_file(const LstmParams& p, const std::string& path);
LstmParams load_params_file(const std::string& path);

}  // namespace mnet
