#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mnet/dataset.hpp"
#include "mnet/hyperparams.hpp"
#include "mnet/nn.hpp"
#include "mnet/optim.hpp"
#include "mnet/rng.hpp"

namespace mnet {

/// Sampling ranges. lr and weight_decay are log-uniform, the integer
/// fields uniform inclusive. Defaults are wide enough to contain every
/// configuration the experiments report.
struct SearchSpace {
    double lr_min = 1e-6, lr_max = 1e-1;
    double wd_min = 1e-9, wd_max = 1e-1;
    int batch_min = 64, batch_max = 2048;
    int hidden_min = 16, hidden_max = 128;
    int layers_min = 1, layers_max = 3;
    void validate() const;
    bool contains(const HyperParams& hp) const;
};

/// Draws one configuration; the seed field is drawn last.
HyperParams sample_hyperparams(const SearchSpace& space, Rng& rng);

/// Seed for trial `index`, a pure function of the master seed.
uint64_t trial_seed(uint64_t master_seed, int index);

/// Per-trial record of everything the stopping rule and final selection
/// need. `running_avg[e-1]` is the mean of validation losses for epochs
/// 1..e.
struct TrialRecord {
    HyperParams hp;
    TrialStatus status = TrialStatus::running;
    std::vector<double> val_losses;
    std::vector<double> running_avg;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
};

/// Shared cross-trial state. Appends and reads are serialized; an attached
/// sink receives one JSON line per event as it happens.
class TrialLedger {
public:
    TrialLedger() : mu_(std::make_unique<std::mutex>()) {}
    explicit TrialLedger(std::ostream* sink) : mu_(std::make_unique<std::mutex>()), sink_(sink) {}
    TrialLedger(TrialLedger&&) = default;
    TrialLedger& operator=(TrialLedger&&) = default;

    void start_trial(int trial, const HyperParams& hp);
    void record_epoch(int trial, int epoch, double train_loss, double val_loss);
    void end_trial(int trial, TrialStatus status, double best_val_loss, int best_epoch);

    size_t n_trials() const;
    TrialRecord trial(int index) const;
    /// Running averages of trials other than `trial` that recorded epoch e.
    std::vector<double> other_running_averages(int trial, int epoch) const;
    /// Current trial's own running average at epoch e, when recorded.
    std::optional<double> running_average(int trial, int epoch) const;

    /// Rebuilds a ledger from a persisted JSON-lines file.
    static TrialLedger load_jsonl(const std::string& path);
    /// Applies one persisted event line.
    void apply_event_line(const std::string& line);

private:
    std::unique_ptr<std::mutex> mu_;
    std::vector<TrialRecord> records_;
    std::ostream* sink_ = nullptr;
    void emit(const std::string& line);
    TrialRecord& at(int trial);
};

/// Median early stopping: stop when at least one other trial recorded a
/// running average at this epoch and the current trial's running average
/// is strictly greater than the median of those values. Never stops
/// before `grace_epochs`.
bool median_stop_decision(const TrialLedger& ledger, int trial, int epoch, int grace_epochs = 50);

struct SearchConfig {
    int n_trials = 100;
    uint64_t seed = 0;
    int max_epochs = 1350;
    int grace_epochs = 50;
    int workers = 1;  // 1 = sequential deterministic mode
};

struct TrialOutcome {
    TrialStatus status = TrialStatus::completed;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    std::unique_ptr<LstmParams> params;  // null when the trial diverged immediately
};

/// Reports one finished epoch; returns false when the trial must stop.
using EpochGate = std::function<bool(int epoch, double train_loss, double val_loss)>;

/// Executes one trial under the given configuration and gate.
using TrialRunner = std::function<TrialOutcome(int trial, const HyperParams& hp, const EpochGate& gate)>;

struct SearchResult {
    HyperParams best_hp;
    LstmParams best_params;
    int best_trial = -1;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Random search: samples n_trials configurations (trial i from
/// trial_seed(seed, i)), runs them through the runner with median early
/// stopping, and selects the completed or stopped trial with the lowest
/// best validation loss. workers > 1 runs trials concurrently; stopping
/// decisions then depend on whatever the ledger holds at decision time.
SearchResult run_search(const SearchSpace& space, const SearchConfig& cfg, TrialLedger& ledger,
                        const TrialRunner& runner);

/// Runner that trains a real model per trial on the given window sets.
TrialRunner make_training_runner(const WindowSet& train_set, const WindowSet& val_set,
                                 const SearchConfig& cfg);

}  // namespace mnet
