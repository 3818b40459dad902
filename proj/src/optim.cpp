#include "mnet/optim.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "mnet/error.hpp"

namespace mnet {

double mse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw Error("mse: shape mismatch");
    if (pred.size() == 0) throw Error("mse: empty matrices");
    double sum = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred.data()[i] - target.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

AdamState AdamState::like(const LstmParams& p) {
    AdamState s;
    s.m = zeros_like(p);
    s.v = zeros_like(p);
    return s;
}

void adam_step(LstmParams& p, const LstmParams& g, AdamState& s, double lr, double wd) {
    if (!(lr > 0.0)) throw Error("adam_step: lr must be positive");
    if (wd < 0.0) throw Error("adam_step: weight decay must be non-negative");
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));

    struct Cursor {
        std::vector<double>* p;
        const std::vector<double>* g;
        std::vector<double>* m;
        std::vector<double>* v;
        std::string name;
    };
    std::vector<Cursor> cursors;
    visit_tensors(p, [&](const std::string& name, std::vector<double>& vec) {
        cursors.push_back({&vec, nullptr, nullptr, nullptr, name});
    });
    size_t i = 0;
    visit_tensors(g, [&](const std::string&, const std::vector<double>& vec) {
        cursors[i++].g = &vec;
    });
    i = 0;
    visit_tensors(s.m, [&](const std::string&, std::vector<double>& vec) { cursors[i++].m = &vec; });
    i = 0;
    visit_tensors(s.v, [&](const std::string&, std::vector<double>& vec) { cursors[i++].v = &vec; });

    for (auto& cur : cursors) {
        if (cur.p->size() != cur.g->size()) throw Error("adam_step: gradient shape mismatch");
        double* pv = cur.p->data();
        const double* gv = cur.g->data();
        double* mv = cur.m->data();
        double* vv = cur.v->data();
        const size_t n = cur.p->size();
        for (size_t k = 0; k < n; ++k) {
            double grad = gv[k];
            if (!std::isfinite(grad))
                throw NonFiniteError("adam_step: non-finite gradient in " + cur.name);
            grad += wd * pv[k];
            mv[k] = s.beta1 * mv[k] + (1.0 - s.beta1) * grad;
            vv[k] = s.beta2 * vv[k] + (1.0 - s.beta2) * grad * grad;
            double m_hat = mv[k] / bc1;
            double v_hat = vv[k] / bc2;
            pv[k] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
        }
    }
}

const char* to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::running: return "running";
        case TrialStatus::completed: return "completed";
        case TrialStatus::stopped: return "stopped";
        case TrialStatus::diverged: return "diverged";
    }
    return "unknown";
}

std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng) {
    if (n < 1) throw Error("make_batches: empty set");
    if (batch_size < 1) throw Error("make_batches: batch size must be >= 1");
    std::vector<int> order = rng.permutation(n);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batch_size) {
        int end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

namespace {

/// Batch-mean MSE and its parameter gradients, processed in fixed-order
/// chunks to bound cache memory.
double batch_loss_and_grads(const LstmParams& p, const WindowSet& ws,
                            const std::vector<int>& batch, int chunk, LstmParams& grads) {
    const int total = static_cast<int>(batch.size());
    const int head = p.dims.head_out();
    double loss_sum = 0.0;
    for (int start = 0; start < total; start += chunk) {
        const int end = std::min(total, start + chunk);
        const int b = end - start;
        std::vector<const Matrix*> inputs(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i)
            inputs[static_cast<size_t>(i)] = &ws.items[static_cast<size_t>(batch[static_cast<size_t>(start + i)])].input;
        BatchForward bf = forward_batch(inputs, p);

        Matrix grad_preds(b, head);
        const double scale = 2.0 / (static_cast<double>(head) * static_cast<double>(total));
        for (int i = 0; i < b; ++i) {
            const Matrix& target = ws.items[static_cast<size_t>(batch[static_cast<size_t>(start + i)])].target;
            const double* pr = bf.preds.row(i);
            double* gr = grad_preds.row(i);
            double wloss = 0.0;
            for (int j = 0; j < head; ++j) {
                double d = pr[j] - target.data()[static_cast<size_t>(j)];
                wloss += d * d;
                gr[j] = scale * d;
            }
            loss_sum += wloss / static_cast<double>(head);
        }
        LstmParams g = backward_batch(bf.cache, grad_preds, p);
        size_t idx = 0;
        std::vector<std::vector<double>*> dst;
        visit_tensors(grads, [&](const std::string&, std::vector<double>& v) { dst.push_back(&v); });
        visit_tensors(g, [&](const std::string&, const std::vector<double>& v) {
            std::vector<double>& d = *dst[idx++];
            for (size_t k = 0; k < v.size(); ++k) d[k] += v[k];
        });
    }
    return loss_sum / static_cast<double>(total);
}

void zero_params(LstmParams& p) {
    visit_tensors(p, [](const std::string&, std::vector<double>& v) {
        std::fill(v.begin(), v.end(), 0.0);
    });
}

}  // namespace

double evaluate_mse(const LstmParams& p, const WindowSet& ws, int chunk) {
    if (ws.empty()) throw Error("evaluate_mse: empty window set");
    const int total = static_cast<int>(ws.size());
    const int head = p.dims.head_out();
    double loss_sum = 0.0;
    for (int start = 0; start < total; start += chunk) {
        const int end = std::min(total, start + chunk);
        const int b = end - start;
        std::vector<const Matrix*> inputs(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i)
            inputs[static_cast<size_t>(i)] = &ws.items[static_cast<size_t>(start + i)].input;
        BatchForward bf = forward_batch(inputs, p);
        for (int i = 0; i < b; ++i) {
            const Matrix& target = ws.items[static_cast<size_t>(start + i)].target;
            const double* pr = bf.preds.row(i);
            double wloss = 0.0;
            for (int j = 0; j < head; ++j) {
                double d = pr[j] - target.data()[static_cast<size_t>(j)];
                wloss += d * d;
            }
            loss_sum += wloss / static_cast<double>(head);
        }
    }
    return loss_sum / static_cast<double>(total);
}

TrainResult train(LstmParams model, const WindowSet& train_set, const WindowSet& val_set,
                  const HyperParams& hp, const Stopper& stopper, Rng& rng,
                  const TrainOptions& opts) {
    if (train_set.empty() || val_set.empty()) throw Error("train: empty window set");
    if (hp.batch_size < 1) throw Error("train: batch size must be >= 1");
    if (!(hp.lr > 0.0)) throw Error("train: lr must be positive");
    if (hp.weight_decay < 0.0) throw Error("train: weight decay must be non-negative");

    TrainResult result;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    AdamState adam = AdamState::like(model);
    LstmParams grads = zeros_like(model);

    const int n = static_cast<int>(train_set.size());
    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        auto batches = make_batches(n, hp.batch_size, rng);
        double epoch_loss_sum = 0.0;
        bool finite = true;
        try {
            for (const auto& batch : batches) {
                zero_params(grads);
                double loss = batch_loss_and_grads(model, train_set, batch, opts.grad_chunk, grads);
                if (!std::isfinite(loss)) {
                    finite = false;
                    break;
                }
                epoch_loss_sum += loss * static_cast<double>(batch.size());
                adam_step(model, grads, adam, hp.lr, hp.weight_decay);
                ++result.steps;
            }
        } catch (const NonFiniteError&) {
            finite = false;
        }
        if (!finite) {
            result.status = TrialStatus::diverged;
            break;
        }
        double train_loss = epoch_loss_sum / static_cast<double>(n);
        double val_loss = evaluate_mse(model, val_set, opts.grad_chunk);
        if (!std::isfinite(val_loss)) {
            result.status = TrialStatus::diverged;
            break;
        }
        result.history.train_loss.push_back(train_loss);
        result.history.val_loss.push_back(val_loss);
        if (opts.history_csv) {
            (*opts.history_csv) << epoch << ',' << train_loss << ',' << val_loss << '\n';
            opts.history_csv->flush();
        }
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.params = model;
        }
        if (stopper && stopper(epoch, result.history)) {
            result.status = TrialStatus::stopped;
            return result;
        }
    }
    if (result.status != TrialStatus::diverged && result.status != TrialStatus::stopped)
        result.status = TrialStatus::completed;
    if (result.best_epoch == 0) {
        // Diverged before the first complete epoch; return the last state.
        result.params = std::move(model);
        result.best_val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

}  // namespace mnet
