#include "mnet/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include "mnet/error.hpp"
#include "mnet/rng.hpp"

namespace mnet {

namespace {

constexpr char kMagic[8] = {'M', 'N', 'E', 'T', 'L', 'S', 'P', '1'};
constexpr char kGateTag[4] = {'i', 'f', 'g', 'o'};
constexpr uint32_t kVersion = 1;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void write_u32_le(std::ostream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Error("model file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& out, double v) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

double read_f64_le(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw Error("model file truncated");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

int layer_input_width(const LstmDims& d, int layer) { return layer == 0 ? d.d_in : d.hidden; }

}  // namespace

void LstmDims::validate() const {
    if (d_in < 1) throw Error("dims: d_in must be >= 1");
    if (hidden < 1) throw Error("dims: hidden must be >= 1");
    if (layers < 1) throw Error("dims: layers must be >= 1");
    if (t_out < 1) throw Error("dims: t_out must be >= 1");
    if (k_out < 1) throw Error("dims: k_out must be >= 1");
}

LstmParams init_params(const LstmDims& dims, uint64_t seed) {
    dims.validate();
    LstmParams p;
    p.dims = dims;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    Rng rng(seed);
    auto draw = [&](std::vector<double>& v) {
        for (double& x : v) x = rng.uniform(-bound, bound);
    };
    for (int l = 0; l < dims.layers; ++l) {
        LstmLayerParams lp;
        lp.w_x = Matrix(4 * dims.hidden, layer_input_width(dims, l));
        lp.w_h = Matrix(4 * dims.hidden, dims.hidden);
        lp.b.assign(static_cast<size_t>(4 * dims.hidden), 0.0);
        draw(lp.w_x.data());
        draw(lp.w_h.data());
        draw(lp.b);
        p.layers.push_back(std::move(lp));
    }
    p.head_w = Matrix(dims.head_out(), dims.hidden);
    p.head_b.assign(static_cast<size_t>(dims.head_out()), 0.0);
    draw(p.head_w.data());
    draw(p.head_b);
    return p;
}

LstmParams zeros_like(const LstmParams& p) {
    LstmParams z;
    z.dims = p.dims;
    for (const auto& lp : p.layers) {
        LstmLayerParams zl;
        zl.w_x = Matrix(lp.w_x.rows(), lp.w_x.cols());
        zl.w_h = Matrix(lp.w_h.rows(), lp.w_h.cols());
        zl.b.assign(lp.b.size(), 0.0);
        z.layers.push_back(std::move(zl));
    }
    z.head_w = Matrix(p.head_w.rows(), p.head_w.cols());
    z.head_b.assign(p.head_b.size(), 0.0);
    return z;
}

void cell_forward(std::span<const double> x, std::span<const double> h_prev,
                  std::span<const double> c_prev, const LstmLayerParams& lp,
                  std::span<double> h_out, std::span<double> c_out) {
    const int h4 = lp.w_x.rows();
    const int hidden = h4 / 4;
    const int d = lp.w_x.cols();
    if (h4 % 4 != 0 || lp.w_h.rows() != h4 || lp.w_h.cols() != hidden ||
        static_cast<int>(lp.b.size()) != h4)
        throw Error("cell_forward: inconsistent layer shapes");
    if (static_cast<int>(x.size()) != d || static_cast<int>(h_prev.size()) != hidden ||
        static_cast<int>(c_prev.size()) != hidden || static_cast<int>(h_out.size()) != hidden ||
        static_cast<int>(c_out.size()) != hidden)
        throw Error("cell_forward: shape mismatch");

    std::vector<double> a(lp.b.begin(), lp.b.end());
    for (int r = 0; r < h4; ++r) {
        const double* wx = lp.w_x.row(r);
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += wx[j] * x[static_cast<size_t>(j)];
        const double* wh = lp.w_h.row(r);
        for (int j = 0; j < hidden; ++j) acc += wh[j] * h_prev[static_cast<size_t>(j)];
        a[static_cast<size_t>(r)] += acc;
    }
    for (int j = 0; j < hidden; ++j) {
        double gi = sigmoid(a[static_cast<size_t>(j)]);
        double gf = sigmoid(a[static_cast<size_t>(hidden + j)]);
        double gg = std::tanh(a[static_cast<size_t>(2 * hidden + j)]);
        double go = sigmoid(a[static_cast<size_t>(3 * hidden + j)]);
        double c = gf * c_prev[static_cast<size_t>(j)] + gi * gg;
        c_out[static_cast<size_t>(j)] = c;
        h_out[static_cast<size_t>(j)] = go * std::tanh(c);
    }
}

BatchForward forward_batch(std::span<const Matrix* const> inputs, const LstmParams& p) {
    p.dims.validate();
    if (inputs.empty()) throw Error("forward_batch: empty batch");
    const int batch = static_cast<int>(inputs.size());
    const int steps = inputs[0]->rows();
    if (steps < 1) throw Error("forward_batch: input has no timesteps");
    for (const Matrix* m : inputs)
        if (m->rows() != steps || m->cols() != p.dims.d_in)
            throw Error("forward_batch: input shape mismatch");
    const int hidden = p.dims.hidden;

    BatchForward out;
    ForwardCache& cache = out.cache;
    cache.dims = p.dims;
    cache.batch = batch;
    cache.steps = steps;

    cache.input_steps.assign(static_cast<size_t>(steps), Matrix(batch, p.dims.d_in));
    for (int t = 0; t < steps; ++t) {
        Matrix& x = cache.input_steps[static_cast<size_t>(t)];
        for (int b = 0; b < batch; ++b)
            std::memcpy(x.row(b), inputs[static_cast<size_t>(b)]->row(t),
                        sizeof(double) * static_cast<size_t>(p.dims.d_in));
    }

    cache.acts.resize(static_cast<size_t>(p.dims.layers));
    for (int l = 0; l < p.dims.layers; ++l) {
        const LstmLayerParams& lp = p.layers[static_cast<size_t>(l)];
        const Matrix wxT = transposed(lp.w_x);  // D x 4H
        const Matrix whT = transposed(lp.w_h);  // H x 4H
        auto& layer_acts = cache.acts[static_cast<size_t>(l)];
        layer_acts.reserve(static_cast<size_t>(steps));

        const Matrix* h_prev = nullptr;
        const Matrix* c_prev = nullptr;
        for (int t = 0; t < steps; ++t) {
            const Matrix& x = l == 0 ? cache.input_steps[static_cast<size_t>(t)]
                                     : cache.acts[static_cast<size_t>(l - 1)][static_cast<size_t>(t)].h;
            ForwardCache::StepActs sa;
            sa.gates = Matrix(batch, 4 * hidden);
            for (int b = 0; b < batch; ++b)
                std::memcpy(sa.gates.row(b), lp.b.data(), sizeof(double) * lp.b.size());
            gemm_accumulate(sa.gates, x, wxT);
            if (h_prev) gemm_accumulate(sa.gates, *h_prev, whT);

            sa.c = Matrix(batch, hidden);
            sa.tanh_c = Matrix(batch, hidden);
            sa.h = Matrix(batch, hidden);
            for (int b = 0; b < batch; ++b) {
                double* g = sa.gates.row(b);
                const double* cp = c_prev ? c_prev->row(b) : nullptr;
                double* c = sa.c.row(b);
                double* tc = sa.tanh_c.row(b);
                double* h = sa.h.row(b);
                for (int j = 0; j < hidden; ++j) {
                    double gi = sigmoid(g[j]);
                    double gf = sigmoid(g[hidden + j]);
                    double gg = std::tanh(g[2 * hidden + j]);
                    double go = sigmoid(g[3 * hidden + j]);
                    g[j] = gi;
                    g[hidden + j] = gf;
                    g[2 * hidden + j] = gg;
                    g[3 * hidden + j] = go;
                    double cv = gf * (cp ? cp[j] : 0.0) + gi * gg;
                    c[j] = cv;
                    double tcv = std::tanh(cv);
                    tc[j] = tcv;
                    h[j] = go * tcv;
                }
            }
            layer_acts.push_back(std::move(sa));
            h_prev = &layer_acts.back().h;
            c_prev = &layer_acts.back().c;
        }
    }

    out.preds = Matrix(batch, p.dims.head_out());
    for (int b = 0; b < batch; ++b)
        std::memcpy(out.preds.row(b), p.head_b.data(), sizeof(double) * p.head_b.size());
    const Matrix headT = transposed(p.head_w);  // H x head_out
    gemm_accumulate(out.preds, cache.h_final(), headT);
    return out;
}

Forward forward(const Matrix& input, const LstmParams& p) {
    const Matrix* ptr = &input;
    BatchForward bf = forward_batch(std::span<const Matrix* const>(&ptr, 1), p);
    Forward f;
    f.pred = Matrix(p.dims.t_out, p.dims.k_out);
    std::memcpy(f.pred.data().data(), bf.preds.row(0),
                sizeof(double) * static_cast<size_t>(p.dims.head_out()));
    f.cache = std::move(bf.cache);
    return f;
}

LstmParams backward_batch(const ForwardCache& cache, const Matrix& grad_preds,
                          const LstmParams& p) {
    if (!(cache.dims == p.dims)) throw Error("backward: cache does not match params dims");
    if (cache.batch < 1 || cache.steps < 1 ||
        cache.acts.size() != static_cast<size_t>(p.dims.layers) ||
        cache.acts[0].size() != static_cast<size_t>(cache.steps))
        throw Error("backward: stale or malformed cache");
    if (grad_preds.rows() != cache.batch || grad_preds.cols() != p.dims.head_out())
        throw Error("backward: grad shape mismatch");

    const int batch = cache.batch;
    const int steps = cache.steps;
    const int hidden = p.dims.hidden;

    LstmParams grads = zeros_like(p);

    // Head.
    accumulate_outer(grads.head_w, grad_preds, cache.h_final());
    for (int b = 0; b < batch; ++b) {
        const double* gp = grad_preds.row(b);
        for (int r = 0; r < p.dims.head_out(); ++r) grads.head_b[static_cast<size_t>(r)] += gp[r];
    }
    Matrix dh_from_head(batch, hidden);
    gemm_accumulate(dh_from_head, grad_preds, p.head_w);

    // dX[t] built while walking layer l carries gradients into layer l-1.
    std::vector<Matrix> dx_above;
    for (int l = p.dims.layers - 1; l >= 0; --l) {
        const LstmLayerParams& lp = p.layers[static_cast<size_t>(l)];
        LstmLayerParams& gl = grads.layers[static_cast<size_t>(l)];
        const auto& layer_acts = cache.acts[static_cast<size_t>(l)];

        std::vector<Matrix> dx_below;
        if (l > 0) dx_below.assign(static_cast<size_t>(steps), Matrix(batch, hidden));

        Matrix dh(batch, hidden);
        Matrix dc(batch, hidden);
        Matrix da(batch, 4 * hidden);
        for (int t = steps - 1; t >= 0; --t) {
            const auto& sa = layer_acts[static_cast<size_t>(t)];
            if (l == p.dims.layers - 1 && t == steps - 1) {
                for (size_t i = 0; i < dh.data().size(); ++i)
                    dh.data()[i] += dh_from_head.data()[i];
            }
            if (l < p.dims.layers - 1) {
                const Matrix& up = dx_above[static_cast<size_t>(t)];
                for (size_t i = 0; i < dh.data().size(); ++i) dh.data()[i] += up.data()[i];
            }

            const Matrix* c_prev = t > 0 ? &layer_acts[static_cast<size_t>(t - 1)].c : nullptr;
            for (int b = 0; b < batch; ++b) {
                const double* g = sa.gates.row(b);
                const double* tc = sa.tanh_c.row(b);
                const double* cp = c_prev ? c_prev->row(b) : nullptr;
                double* dhb = dh.row(b);
                double* dcb = dc.row(b);
                double* dab = da.row(b);
                for (int j = 0; j < hidden; ++j) {
                    double gi = g[j], gf = g[hidden + j], gg = g[2 * hidden + j],
                           go = g[3 * hidden + j];
                    double dho = dhb[j];
                    double dcv = dcb[j] + dho * go * (1.0 - tc[j] * tc[j]);
                    double di = dcv * gg;
                    double df = dcv * (cp ? cp[j] : 0.0);
                    double dg = dcv * gi;
                    double dov = dho * tc[j];
                    dab[j] = di * gi * (1.0 - gi);
                    dab[hidden + j] = df * gf * (1.0 - gf);
                    dab[2 * hidden + j] = dg * (1.0 - gg * gg);
                    dab[3 * hidden + j] = dov * go * (1.0 - go);
                    dcb[j] = dcv * gf;  // flows to t-1
                }
            }

            const Matrix& x = l == 0 ? cache.input_steps[static_cast<size_t>(t)]
                                     : cache.acts[static_cast<size_t>(l - 1)][static_cast<size_t>(t)].h;
            accumulate_outer(gl.w_x, da, x);
            if (t > 0) accumulate_outer(gl.w_h, da, layer_acts[static_cast<size_t>(t - 1)].h);
            for (int b = 0; b < batch; ++b) {
                const double* dab = da.row(b);
                for (int r = 0; r < 4 * hidden; ++r) gl.b[static_cast<size_t>(r)] += dab[r];
            }

            if (l > 0) gemm_accumulate(dx_below[static_cast<size_t>(t)], da, lp.w_x);
            dh.fill(0.0);
            if (t > 0) gemm_accumulate(dh, da, lp.w_h);
        }
        dx_above = std::move(dx_below);
    }
    return grads;
}

LstmParams backward(const ForwardCache& cache, const Matrix& grad_pred, const LstmParams& p) {
    if (cache.batch != 1) throw Error("backward: cache holds a batch, use backward_batch");
    if (grad_pred.rows() != p.dims.t_out || grad_pred.cols() != p.dims.k_out)
        throw Error("backward: grad_pred must be t_out x k_out");
    Matrix flat(1, p.dims.head_out());
    std::memcpy(flat.row(0), grad_pred.data().data(),
                sizeof(double) * static_cast<size_t>(p.dims.head_out()));
    return backward_batch(cache, flat, p);
}

void save_params(const LstmParams& p, std::ostream& out) {
    out.write(kMagic, 8);
    write_u32_le(out, kVersion);
    out.write(kGateTag, 4);
    write_u32_le(out, static_cast<uint32_t>(p.dims.d_in));
    write_u32_le(out, static_cast<uint32_t>(p.dims.hidden));
    write_u32_le(out, static_cast<uint32_t>(p.dims.layers));
    write_u32_le(out, static_cast<uint32_t>(p.dims.t_out));
    write_u32_le(out, static_cast<uint32_t>(p.dims.k_out));
    visit_tensors(p, [&](const std::string&, const std::vector<double>& v) {
        for (double x : v) write_f64_le(out, x);
    });
    if (!out) throw Error("failed writing model");
}

LstmParams load_params(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a model file");
    uint32_t version = read_u32_le(in);
    if (version != kVersion) throw Error("unsupported model version " + std::to_string(version));
    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, kGateTag, 4) != 0) throw Error("unknown gate order tag");
    LstmDims dims;
    dims.d_in = static_cast<int>(read_u32_le(in));
    dims.hidden = static_cast<int>(read_u32_le(in));
    dims.layers = static_cast<int>(read_u32_le(in));
    dims.t_out = static_cast<int>(read_u32_le(in));
    dims.k_out = static_cast<int>(read_u32_le(in));
    dims.validate();
    LstmParams p = init_params(dims, 0);
    visit_tensors(p, [&](const std::string&, std::vector<double>& v) {
        for (double& x : v) x = read_f64_le(in);
    });
    return p;
}

void save_params_file(const LstmParams& p, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + tmp + "'");
        save_params(p, out);
    }
    std::filesystem::rename(tmp, path);
}

LstmParams load_params_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return load_params(in);
}

}  // namespace mnet
