#include "mnet/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <fstream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "mnet/error.hpp"

namespace mnet {

namespace {

double log_uniform(Rng& rng, double lo, double hi) {
    double e = rng.uniform(std::log10(lo), std::log10(hi));
    return std::pow(10.0, e);
}

nlohmann::json hp_to_json(const HyperParams& hp) {
    return {{"lr", hp.lr},
            {"weight_decay", hp.weight_decay},
            {"batch_size", hp.batch_size},
            {"hidden_dim", hp.hidden_dim},
            {"num_layers", hp.num_layers},
            {"seed", hp.seed}};
}

HyperParams hp_from_json(const nlohmann::json& j) {
    HyperParams hp;
    hp.lr = j.at("lr").get<double>();
    hp.weight_decay = j.at("weight_decay").get<double>();
    hp.batch_size = j.at("batch_size").get<int>();
    hp.hidden_dim = j.at("hidden_dim").get<int>();
    hp.num_layers = j.at("num_layers").get<int>();
    hp.seed = j.at("seed").get<uint64_t>();
    return hp;
}

TrialStatus status_from_string(const std::string& s) {
    if (s == "running") return TrialStatus::running;
    if (s == "completed") return TrialStatus::completed;
    if (s == "stopped") return TrialStatus::stopped;
    if (s == "diverged") return TrialStatus::diverged;
    throw Error("unknown trial status '" + s + "'");
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void SearchSpace::validate() const {
    if (!(lr_min > 0.0 && lr_min <= lr_max)) throw Error("search space: bad lr range");
    if (!(wd_min > 0.0 && wd_min <= wd_max)) throw Error("search space: bad weight decay range");
    if (!(batch_min >= 1 && batch_min <= batch_max)) throw Error("search space: bad batch range");
    if (!(hidden_min >= 1 && hidden_min <= hidden_max)) throw Error("search space: bad hidden range");
    if (!(layers_min >= 1 && layers_min <= layers_max)) throw Error("search space: bad layers range");
}

bool SearchSpace::contains(const HyperParams& hp) const {
    return hp.lr >= lr_min && hp.lr <= lr_max && hp.weight_decay >= wd_min &&
           hp.weight_decay <= wd_max && hp.batch_size >= batch_min && hp.batch_size <= batch_max &&
           hp.hidden_dim >= hidden_min && hp.hidden_dim <= hidden_max &&
           hp.num_layers >= layers_min && hp.num_layers <= layers_max;
}

HyperParams sample_hyperparams(const SearchSpace& space, Rng& rng) {
    space.validate();
    HyperParams hp;
    hp.lr = log_uniform(rng, space.lr_min, space.lr_max);
    hp.weight_decay = log_uniform(rng, space.wd_min, space.wd_max);
    hp.batch_size = static_cast<int>(rng.uniform_int(space.batch_min, space.batch_max));
    hp.hidden_dim = static_cast<int>(rng.uniform_int(space.hidden_min, space.hidden_max));
    hp.num_layers = static_cast<int>(rng.uniform_int(space.layers_min, space.layers_max));
    hp.seed = rng.next_u64();
    return hp;
}

uint64_t trial_seed(uint64_t master_seed, int index) {
    return derive_seed(master_seed, static_cast<uint64_t>(index));
}

void TrialLedger::emit(const std::string& line) {
    if (sink_) {
        (*sink_) << line << '\n';
        sink_->flush();
    }
}

TrialRecord& TrialLedger::at(int trial) {
    if (trial < 0 || static_cast<size_t>(trial) >= records_.size())
        throw Error("ledger: unknown trial " + std::to_string(trial));
    return records_[static_cast<size_t>(trial)];
}

void TrialLedger::start_trial(int trial, const HyperParams& hp) {
    std::lock_guard lock(*mu_);
    if (trial != static_cast<int>(records_.size()))
        records_.resize(std::max(records_.size(), static_cast<size_t>(trial) + 1));
    else
        records_.emplace_back();
    TrialRecord& rec = records_[static_cast<size_t>(trial)];
    rec.hp = hp;
    rec.status = TrialStatus::running;
    nlohmann::json j = {{"event", "start"}, {"trial", trial}, {"hp", hp_to_json(hp)}};
    emit(j.dump());
}

void TrialLedger::record_epoch(int trial, int epoch, double train_loss, double val_loss) {
    std::lock_guard lock(*mu_);
    TrialRecord& rec = at(trial);
    if (rec.status != TrialStatus::running)
        throw Error("ledger: trial " + std::to_string(trial) + " already finished");
    if (epoch != static_cast<int>(rec.val_losses.size()) + 1)
        throw Error("ledger: epochs must be recorded in order");
    rec.val_losses.push_back(val_loss);
    double prev = rec.running_avg.empty() ? 0.0 : rec.running_avg.back();
    double avg = prev + (val_loss - prev) / static_cast<double>(epoch);
    rec.running_avg.push_back(avg);
    if (val_loss < rec.best_val_loss) {
        rec.best_val_loss = val_loss;
        rec.best_epoch = epoch;
    }
    nlohmann::json j = {{"event", "epoch"},           {"trial", trial},
                        {"epoch", epoch},             {"train_loss", train_loss},
                        {"val_loss", val_loss},       {"avg_val_loss", avg}};
    emit(j.dump());
}

void TrialLedger::end_trial(int trial, TrialStatus status, double best_val_loss, int best_epoch) {
    std::lock_guard lock(*mu_);
    TrialRecord& rec = at(trial);
    if (rec.status != TrialStatus::running)
        throw Error("ledger: trial " + std::to_string(trial) + " already finished");
    rec.status = status;
    rec.best_val_loss = best_val_loss;
    rec.best_epoch = best_epoch;
    nlohmann::json j = {{"event", "end"},
                        {"trial", trial},
                        {"status", to_string(status)},
                        {"best_epoch", best_epoch}};
    // non-finite (a trial that diverged before its first epoch) becomes null
    if (std::isfinite(best_val_loss))
        j["best_val_loss"] = best_val_loss;
    else
        j["best_val_loss"] = nullptr;
    emit(j.dump());
}

size_t TrialLedger::n_trials() const {
    std::lock_guard lock(*mu_);
    return records_.size();
}

TrialRecord TrialLedger::trial(int index) const {
    std::lock_guard lock(*mu_);
    if (index < 0 || static_cast<size_t>(index) >= records_.size())
        throw Error("ledger: unknown trial " + std::to_string(index));
    return records_[static_cast<size_t>(index)];
}

std::vector<double> TrialLedger::other_running_averages(int trial, int epoch) const {
    std::lock_guard lock(*mu_);
    std::vector<double> out;
    for (size_t i = 0; i < records_.size(); ++i) {
        if (static_cast<int>(i) == trial) continue;
        const auto& avg = records_[i].running_avg;
        if (static_cast<int>(avg.size()) >= epoch) out.push_back(avg[static_cast<size_t>(epoch - 1)]);
    }
    return out;
}

std::optional<double> TrialLedger::running_average(int trial, int epoch) const {
    std::lock_guard lock(*mu_);
    if (trial < 0 || static_cast<size_t>(trial) >= records_.size()) return std::nullopt;
    const auto& avg = records_[static_cast<size_t>(trial)].running_avg;
    if (static_cast<int>(avg.size()) < epoch) return std::nullopt;
    return avg[static_cast<size_t>(epoch - 1)];
}

void TrialLedger::apply_event_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    const std::string event = j.at("event").get<std::string>();
    if (event == "start") {
        start_trial(j.at("trial").get<int>(), hp_from_json(j.at("hp")));
    } else if (event == "epoch") {
        record_epoch(j.at("trial").get<int>(), j.at("epoch").get<int>(),
                     j.at("train_loss").get<double>(), j.at("val_loss").get<double>());
    } else if (event == "end") {
        const auto& bv = j.at("best_val_loss");
        double best = bv.is_null() ? std::numeric_limits<double>::infinity() : bv.get<double>();
        end_trial(j.at("trial").get<int>(), status_from_string(j.at("status").get<std::string>()),
                  best, j.at("best_epoch").get<int>());
    } else {
        throw Error("ledger: unknown event '" + event + "'");
    }
}

TrialLedger TrialLedger::load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    TrialLedger ledger;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ledger.apply_event_line(line);
    }
    return ledger;
}

bool median_stop_decision(const TrialLedger& ledger, int trial, int epoch, int grace_epochs) {
    if (epoch < grace_epochs) return false;
    auto own = ledger.running_average(trial, epoch);
    if (!own) return false;
    auto others = ledger.other_running_averages(trial, epoch);
    if (others.empty()) return false;
    return *own > median_of(std::move(others));
}

SearchResult run_search(const SearchSpace& space, const SearchConfig& cfg, TrialLedger& ledger,
                        const TrialRunner& runner) {
    space.validate();
    if (cfg.n_trials < 1) throw Error("run_search: need at least one trial");

    SearchResult result;
    std::mutex best_mu;

    auto run_trial = [&](int trial) {
        Rng rng(trial_seed(cfg.seed, trial));
        HyperParams hp = sample_hyperparams(space, rng);
        ledger.start_trial(trial, hp);
        EpochGate gate = [&ledger, &cfg, trial](int epoch, double train_loss, double val_loss) {
            ledger.record_epoch(trial, epoch, train_loss, val_loss);
            return !median_stop_decision(ledger, trial, epoch, cfg.grace_epochs);
        };
        TrialOutcome outcome = runner(trial, hp, gate);
        ledger.end_trial(trial, outcome.status, outcome.best_val_loss, outcome.best_epoch);
        if (outcome.status == TrialStatus::completed || outcome.status == TrialStatus::stopped) {
            std::lock_guard lock(best_mu);
            if (outcome.params &&
                (outcome.best_val_loss < result.best_val_loss ||
                 (outcome.best_val_loss == result.best_val_loss && trial < result.best_trial))) {
                result.best_val_loss = outcome.best_val_loss;
                result.best_trial = trial;
                result.best_hp = hp;
                result.best_params = std::move(*outcome.params);
            }
        }
    };

    if (cfg.workers <= 1) {
        for (int trial = 0; trial < cfg.n_trials; ++trial) run_trial(trial);
    } else {
        std::atomic<int> next{0};
        auto worker = [&] {
            for (;;) {
                int trial = next.fetch_add(1);
                if (trial >= cfg.n_trials) return;
                run_trial(trial);
            }
        };
        std::vector<std::thread> pool;
        const int n_workers = std::min(cfg.workers, cfg.n_trials);
        pool.reserve(static_cast<size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (result.best_trial < 0) throw Error("run_search: all trials diverged");
    return result;
}

TrialRunner make_training_runner(const WindowSet& train_set, const WindowSet& val_set,
                                 const SearchConfig& cfg) {
    if (train_set.empty() || val_set.empty()) throw Error("search: empty window set");
    const int d_in = static_cast<int>(train_set.input_columns.size());
    const int k_out = static_cast<int>(train_set.target_columns.size());
    const int t_out = train_set.t_p;
    return [&train_set, &val_set, cfg, d_in, k_out, t_out](int, const HyperParams& hp,
                                                           const EpochGate& gate) {
        LstmDims dims{d_in, hp.hidden_dim, hp.num_layers, t_out, k_out};
        LstmParams model = init_params(dims, derive_seed(hp.seed, 0));
        Rng shuffle_rng(derive_seed(hp.seed, 1));
        Stopper stopper = [&gate](int epoch, const TrainHistory& h) {
            return !gate(epoch, h.train_loss.back(), h.val_loss.back());
        };
        TrainOptions opts;
        opts.max_epochs = cfg.max_epochs;
        TrainResult tr = train(std::move(model), train_set, val_set, hp, stopper, shuffle_rng, opts);
        TrialOutcome out;
        out.status = tr.status;
        out.best_val_loss = tr.best_val_loss;
        out.best_epoch = tr.best_epoch;
        if (tr.best_epoch > 0) out.params = std::make_unique<LstmParams>(std::move(tr.params));
        return out;
    };
}

}  // namespace mnet
