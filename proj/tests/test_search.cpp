#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mnet/error.hpp"
#include "mnet/search.hpp"

using namespace mnet;

namespace {

// Runner emitting a fixed validation-loss schedule; no real training.
TrialRunner schedule_runner(std::function<double(int trial, int epoch)> val_at, int max_epochs,
                            double scale = 1.0) {
    return [=](int trial, const HyperParams& hp, const EpochGate& gate) {
        TrialOutcome out;
        out.params = std::make_unique<LstmParams>(init_params(LstmDims{1, 1, 1, 1, 1}, hp.seed));
        out.status = TrialStatus::completed;
        for (int epoch = 1; epoch <= max_epochs; ++epoch) {
            double v = val_at(trial, epoch) * scale;
            if (v < out.best_val_loss) {
                out.best_val_loss = v;
                out.best_epoch = epoch;
            }
            if (!gate(epoch, v, v)) {
                out.status = TrialStatus::stopped;
                break;
            }
        }
        return out;
    };
}

}  // namespace

TEST_CASE("hyperparameter sampling stays inside the space") {
    SearchSpace space;
    Rng rng(1);
    std::vector<double> log_lrs;
    for (int i = 0; i < 10000; ++i) {
        HyperParams hp = sample_hyperparams(space, rng);
        CHECK(space.contains(hp));
        log_lrs.push_back(std::log10(hp.lr));
    }
    std::sort(log_lrs.begin(), log_lrs.end());
    double median = 0.5 * (log_lrs[4999] + log_lrs[5000]);
    CHECK(std::abs(median - (-3.5)) < 0.1);
}

TEST_CASE("published configurations lie inside the default space") {
    SearchSpace space;
    // base / sw / sdrn rows and the 20-year run
    CHECK(space.contains(HyperParams{4.73e-2, 4.21e-8, 1731, 59, 1, 0}));
    CHECK(space.contains(HyperParams{4.79e-2, 2.31e-7, 1032, 44, 1, 0}));
    CHECK(space.contains(HyperParams{2.87e-6, 4.21e-2, 1060, 48, 1, 0}));
    CHECK(space.contains(HyperParams{3.68e-3, 9.7e-8, 502, 58, 1, 0}));
}

TEST_CASE("degenerate space is a point mass") {
    SearchSpace space;
    space.lr_min = space.lr_max = 1e-3;
    space.wd_min = space.wd_max = 1e-7;
    space.batch_min = space.batch_max = 128;
    space.hidden_min = space.hidden_max = 32;
    space.layers_min = space.layers_max = 2;
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        HyperParams hp = sample_hyperparams(space, rng);
        CHECK(hp.lr == doctest::Approx(1e-3).epsilon(1e-12));
        CHECK(hp.weight_decay == doctest::Approx(1e-7).epsilon(1e-12));
        CHECK(hp.batch_size == 128);
        CHECK(hp.hidden_dim == 32);
        CHECK(hp.num_layers == 2);
    }
    SearchSpace bad;
    bad.lr_min = 1e-1;
    bad.lr_max = 1e-3;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("trial seeds are pure and distinct") {
    CHECK(trial_seed(42, 0) == trial_seed(42, 0));
    std::set<uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(trial_seed(42, i));
    CHECK(seen.size() == 1000);
    CHECK(trial_seed(42, 0) != trial_seed(43, 0));
}

TEST_CASE("median stop decision examples") {
    TrialLedger ledger;
    HyperParams hp;
    // three finished trials with flat curves 0.5 / 0.7 / 0.9, then the
    // current trial at 0.8
    for (int trial = 0; trial < 3; ++trial) {
        ledger.start_trial(trial, hp);
        double level = 0.5 + 0.2 * trial;
        for (int e = 1; e <= 60; ++e) ledger.record_epoch(trial, e, level, level);
    }
    ledger.start_trial(3, hp);
    for (int e = 1; e <= 60; ++e) ledger.record_epoch(3, e, 0.8, 0.8);

    CHECK(median_stop_decision(ledger, 3, 50) == true);   // 0.8 > median 0.7
    CHECK(median_stop_decision(ledger, 3, 49) == false);  // inside the grace period
    CHECK(median_stop_decision(ledger, 3, 50, 55) == false);  // custom grace

    // equal to the median: continue (strict inequality)
    TrialLedger tie;
    tie.start_trial(0, hp);
    for (int e = 1; e <= 50; ++e) tie.record_epoch(0, e, 0.7, 0.7);
    tie.start_trial(1, hp);
    for (int e = 1; e <= 50; ++e) tie.record_epoch(1, e, 0.7, 0.7);
    CHECK(median_stop_decision(tie, 1, 50) == false);

    // first trial has nobody to compare against
    TrialLedger solo;
    solo.start_trial(0, hp);
    for (int e = 1; e <= 80; ++e) solo.record_epoch(0, e, 2.0, 2.0);
    CHECK(median_stop_decision(solo, 0, 80) == false);
}

TEST_CASE("ledger status transitions are one-way") {
    TrialLedger ledger;
    ledger.start_trial(0, HyperParams{});
    ledger.record_epoch(0, 1, 0.5, 0.5);
    ledger.end_trial(0, TrialStatus::completed, 0.5, 1);
    CHECK_THROWS_AS(ledger.end_trial(0, TrialStatus::stopped, 0.4, 1), Error);
    CHECK_THROWS_AS(ledger.record_epoch(0, 2, 0.4, 0.4), Error);
    CHECK_THROWS_AS(ledger.record_epoch(1, 1, 0.4, 0.4), Error);  // unknown trial
}

TEST_CASE("running average matches the mean of recorded losses") {
    TrialLedger ledger;
    ledger.start_trial(0, HyperParams{});
    Rng rng(5);
    std::vector<double> losses;
    for (int e = 1; e <= 100; ++e) {
        double v = rng.uniform(0.1, 2.0);
        losses.push_back(v);
        ledger.record_epoch(0, e, v, v);
        double mean = 0.0;
        for (double x : losses) mean += x;
        mean /= static_cast<double>(losses.size());
        CHECK(*ledger.running_average(0, e) == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("search selects the lowest validation loss and is deterministic") {
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 5;
    cfg.seed = 77;
    cfg.max_epochs = 60;
    auto runner = schedule_runner(
        [](int trial, int epoch) { return 1.0 + trial * 0.1 - 0.001 * epoch; }, 60);

    TrialLedger ledger_a;
    SearchResult a = run_search(space, cfg, ledger_a, runner);
    CHECK(a.best_trial == 0);
    CHECK(a.best_val_loss == doctest::Approx(1.0 - 0.06).epsilon(1e-12));

    TrialLedger ledger_b;
    SearchResult b = run_search(space, cfg, ledger_b, runner);
    CHECK(a.best_hp == b.best_hp);
    CHECK(a.best_trial == b.best_trial);
    for (int t = 0; t < 5; ++t) {
        CHECK(ledger_a.trial(t).hp == ledger_b.trial(t).hp);
        CHECK(ledger_a.trial(t).val_losses == ledger_b.trial(t).val_losses);
    }

    // singleton search
    SearchConfig one = cfg;
    one.n_trials = 1;
    TrialLedger lone;
    SearchResult single = run_search(space, one, lone, runner);
    CHECK(single.best_trial == 0);
}

TEST_CASE("a uniformly worse trial stops early and stays selectable") {
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 3;
    cfg.seed = 13;
    cfg.max_epochs = 400;
    cfg.grace_epochs = 50;
    auto runner = schedule_runner(
        [](int trial, int epoch) {
            double base = 1.0 / (1.0 + 0.01 * epoch);
            return trial == 2 ? 2.0 * base : base;
        },
        400);
    TrialLedger ledger;
    SearchResult result = run_search(space, cfg, ledger, runner);
    TrialRecord worst = ledger.trial(2);
    CHECK(worst.status == TrialStatus::stopped);
    CHECK(static_cast<int>(worst.val_losses.size()) < 400);
    CHECK(static_cast<int>(worst.val_losses.size()) >= 50);
    CHECK(result.best_trial != 2);
    CHECK(ledger.trial(0).status == TrialStatus::completed);
}

TEST_CASE("selection is invariant to a positive rescaling of all losses") {
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 4;
    cfg.seed = 5;
    cfg.max_epochs = 80;
    auto schedule = [](int trial, int epoch) {
        return 0.5 + 0.3 * std::sin(trial * 1.7) + 1.0 / epoch;
    };
    TrialLedger l1, l2;
    SearchResult a = run_search(space, cfg, l1, schedule_runner(schedule, 80, 1.0));
    SearchResult b = run_search(space, cfg, l2, schedule_runner(schedule, 80, 37.5));
    CHECK(a.best_trial == b.best_trial);
}

TEST_CASE("all diverged is an error") {
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 2;
    cfg.seed = 3;
    TrialRunner runner = [](int, const HyperParams&, const EpochGate&) {
        TrialOutcome out;
        out.status = TrialStatus::diverged;
        return out;
    };
    TrialLedger ledger;
    CHECK_THROWS_AS(run_search(space, cfg, ledger, runner), Error);
}

TEST_CASE("ledger persists and reloads through jsonl") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "mnet_ledger_test.jsonl";
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 3;
    cfg.seed = 21;
    cfg.max_epochs = 70;
    {
        std::ofstream sink(path);
        TrialLedger ledger(&sink);
        auto runner = schedule_runner(
            [](int trial, int epoch) { return 1.0 + 0.5 * trial - 0.002 * epoch; }, 70);
        run_search(space, cfg, ledger, runner);
    }
    TrialLedger loaded = TrialLedger::load_jsonl(path.string());
    REQUIRE(loaded.n_trials() == 3);
    for (int t = 0; t < 3; ++t) {
        TrialRecord rec = loaded.trial(t);
        CHECK(rec.status != TrialStatus::running);
        CHECK(!rec.val_losses.empty());
        CHECK(rec.running_avg.size() == rec.val_losses.size());
    }

    // replaying the events reproduces every stopping decision
    std::ifstream in(path);
    TrialLedger replay;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        replay.apply_event_line(line);
        if (j.at("event") == "epoch") {
            int trial = j.at("trial").get<int>();
            int epoch = j.at("epoch").get<int>();
            bool stop = median_stop_decision(replay, trial, epoch, cfg.grace_epochs);
            // the run recorded more epochs for this trial iff it continued
            const TrialRecord full = loaded.trial(trial);
            bool continued = static_cast<int>(full.val_losses.size()) > epoch ||
                             (full.status == TrialStatus::completed && epoch == cfg.max_epochs);
            if (stop) CHECK(!continued);
        }
    }
    fs::remove(path);
}

TEST_CASE("a trial diverging before its first epoch survives ledger persistence") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "mnet_ledger_diverged.jsonl";
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 2;
    cfg.seed = 6;
    cfg.max_epochs = 30;
    TrialRunner runner = [&](int trial, const HyperParams& hp, const EpochGate& gate) {
        TrialOutcome out;
        if (trial == 0) {
            out.status = TrialStatus::diverged;  // no epochs recorded at all
            return out;
        }
        out.params = std::make_unique<LstmParams>(init_params(LstmDims{1, 1, 1, 1, 1}, hp.seed));
        for (int e = 1; e <= cfg.max_epochs; ++e) {
            double v = 1.0 / e;
            if (v < out.best_val_loss) {
                out.best_val_loss = v;
                out.best_epoch = e;
            }
            if (!gate(e, v, v)) break;
        }
        out.status = TrialStatus::completed;
        return out;
    };
    {
        std::ofstream sink(path);
        TrialLedger ledger(&sink);
        SearchResult result = run_search(space, cfg, ledger, runner);
        CHECK(result.best_trial == 1);
    }
    TrialLedger loaded = TrialLedger::load_jsonl(path.string());
    CHECK(loaded.trial(0).status == TrialStatus::diverged);
    CHECK(std::isinf(loaded.trial(0).best_val_loss));
    CHECK(loaded.trial(1).status == TrialStatus::completed);
    fs::remove(path);
}

TEST_CASE("concurrent search produces the same hyperparameters") {
    SearchSpace space;
    SearchConfig cfg;
    cfg.n_trials = 6;
    cfg.seed = 8;
    cfg.max_epochs = 30;
    cfg.grace_epochs = 10;
    auto runner = schedule_runner(
        [](int trial, int epoch) { return 2.0 - 0.1 * trial - 0.001 * epoch; }, 30);

    TrialLedger seq_ledger;
    SearchConfig seq = cfg;
    seq.workers = 1;
    SearchResult s = run_search(space, seq, seq_ledger, runner);

    TrialLedger par_ledger;
    SearchConfig par = cfg;
    par.workers = 3;
    SearchResult p = run_search(space, par, par_ledger, runner);

    for (int t = 0; t < cfg.n_trials; ++t) CHECK(seq_ledger.trial(t).hp == par_ledger.trial(t).hp);
    CHECK(s.best_trial == p.best_trial);  // schedules are monotone, stopping cannot flip the winner
}
