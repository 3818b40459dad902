#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "mnet/dataset.hpp"
#include "mnet/error.hpp"
#include "mnet/hyperparams.hpp"
#include "mnet/matrix.hpp"
#include "mnet/nn.hpp"
#include "mnet/rng.hpp"

namespace mnet {

/// A gradient or loss stopped being a number; the trial diverged.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Mean over all entries of the squared difference.
double mse(const Matrix& pred, const Matrix& target);

/// Adam moment accumulators. `step` counts completed updates.
struct AdamState {
    LstmParams m;
    LstmParams v;
    int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState like(const LstmParams& p);
};

/// One Adam update with coupled L2 weight decay: the decay term wd*p is
/// added to the gradient before the moment updates, the step counter is
/// incremented before bias correction. A non-finite gradient entry raises
/// an error naming the tensor.
void adam_step(LstmParams& p, const LstmParams& g, AdamState& s, double lr, double wd);

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    size_t epochs() const { return val_loss.size(); }
};

enum class TrialStatus { running, completed, stopped, diverged };
const char* to_string(TrialStatus s);

/// Returns true to stop training after the epoch just recorded.
using Stopper = std::function<bool(int epoch, const TrainHistory& history)>;

struct TrainOptions {
    int max_epochs = 1350;
    std::ostream* history_csv = nullptr;  // streams "epoch,train_loss,val_loss" rows
    int grad_chunk = 256;                 // windows per forward/backward slab
};

struct TrainResult {
    LstmParams params;  // snapshot from the epoch with minimum validation loss
    TrainHistory history;
    TrialStatus status = TrialStatus::completed;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
    int64_t steps = 0;  // optimizer updates performed
};

/// Epoch loop: shuffle the training windows with `rng`, take one Adam step
/// per mini-batch of hp.batch_size on the batch-mean MSE (final partial
/// batch included), evaluate the full validation MSE, then consult the
/// stopper. Runs at most opts.max_epochs epochs. A non-finite loss aborts
/// the trial with diverged status.
TrainResult train(LstmParams model, const WindowSet& train_set, const WindowSet& val_set,
                  const HyperParams& hp, const Stopper& stopper, Rng& rng,
                  const TrainOptions& opts = {});

/// Shuffled batch index partition; concatenated batches are a permutation
/// of 0..n-1 and only the final batch may be short.
std::vector<std::vector<int>> make_batches(int n, int batch_size, Rng& rng);

/// Mean per-window MSE of the model over a window set.
double evaluate_mse(const LstmParams& p, const WindowSet& ws, int chunk = 256);

}  // namespace mnet
