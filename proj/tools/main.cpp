#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mnet/dataset.hpp"
#include "mnet/error.hpp"
#include "mnet/eval.hpp"
#include "mnet/features.hpp"
#include "mnet/ingest.hpp"
#include "mnet/nn.hpp"
#include "mnet/optim.hpp"
#include "mnet/pipeline.hpp"
#include "mnet/search.hpp"
#include "mnet/timetable.hpp"

namespace fs = std::filesystem;
using namespace mnet;

namespace {

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write '" + tmp + "'");
        out << content;
    }
    fs::rename(tmp, path);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

SplitSpec parse_split(const std::string& s) {
    auto parts = split_list(s);
    if (parts.size() != 3) throw Error("--split expects three fractions, e.g. 0.6,0.1,0.3");
    SplitSpec spec{std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
    spec.validate();
    return spec;
}

FeatureSpec resolve_features(const std::string& preset, const std::string& input_cols,
                             const std::string& target_cols) {
    if (preset == "custom") {
        if (input_cols.empty() || target_cols.empty())
            throw Error("--features custom needs --input-cols and --target-cols");
        return FeatureSpec::custom(split_list(input_cols), split_list(target_cols));
    }
    FeatureSpec f = FeatureSpec::make(preset_from_string(preset));
    if (!input_cols.empty()) throw Error("--input-cols requires --features custom");
    if (!target_cols.empty()) {
        f.target_columns = split_list(target_cols);
        f.validate();
    }
    return f;
}

struct IngestArgs {
    std::string omni, colmap, sdarn, out;
    bool do_align = false;
};

void cmd_ingest(const IngestArgs& a) {
    std::vector<TimeTable> tables;
    std::vector<std::string> warnings;
    if (!a.omni.empty()) {
        if (a.colmap.empty()) throw Error("--omni requires --colmap");
        std::ifstream in(a.omni);
        if (!in) throw Error("cannot open '" + a.omni + "'");
        try {
            tables.push_back(parse_columnar(in, ColumnMap::from_json_file(a.colmap), &warnings));
        } catch (const ParseError& e) {
            throw Error(a.omni + ": " + e.what());
        }
    }
    if (!a.sdarn.empty()) {
        std::ifstream in(a.sdarn);
        if (!in) throw Error("cannot open '" + a.sdarn + "'");
        try {
            tables.push_back(resample_hourly(parse_superdarn(in, &warnings)));
        } catch (const ParseError& e) {
            throw Error(a.sdarn + ": " + e.what());
        }
    }
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    if (tables.empty()) throw Error("nothing to ingest; pass --omni and/or --sdarn");
    TimeTable result;
    if (tables.size() == 1)
        result = std::move(tables[0]);
    else if (a.do_align)
        result = align(tables);
    else
        throw Error("two sources given; pass --align to intersect them");
    write_csv_file(result, a.out);
    std::cout << "wrote " << a.out << " (" << result.rows() << " rows, " << result.n_columns()
              << " columns)\n";
}

struct SynthArgs {
    std::string out, coef_file;
    SynthConfig cfg;
};

void cmd_synth(const SynthArgs& a) {
    SynthConfig cfg = a.cfg;
    if (!a.coef_file.empty()) {
        std::ifstream in(a.coef_file);
        if (!in) throw Error("cannot open '" + a.coef_file + "'");
        nlohmann::json j = nlohmann::json::parse(in);
        cfg.coef.clear();
        for (const auto& row : j)
            for (const auto& v : row) cfg.coef.push_back(v.get<double>());
    }
    TimeTable t = generate_synthetic(cfg);
    write_csv_file(t, a.out);
    std::cout << "wrote " << a.out << " (" << t.rows() << " rows, " << t.n_columns()
              << " columns)\n";
}

struct RunArgs {
    std::string data, out_dir, config;
    std::string features = "base", input_cols, target_cols;
    int t_h = 6, t_p = 6;
    std::string split = "0.6,0.1,0.3";
    int trials = 100;
    uint64_t seed = 0;
    int workers = 1;
    int max_epochs = 1350;
    int grace_epochs = 50;
    SearchSpace space;
    std::string dump_windows;  // debug export directory
    // train-only
    HyperParams hp;
    std::string history;
};

void dump_window_sets(const std::array<WindowSet, 3>& windows, const std::string& dir) {
    fs::create_directories(dir);
    const char* names[3] = {"train", "val", "test"};
    for (size_t i = 0; i < 3; ++i) {
        std::ostringstream ss;
        write_windows_csv(windows[i], ss);
        write_text_atomic(dir + "/windows_" + names[i] + ".csv", ss.str());
    }
}

/// JSON config file values act as defaults; explicit flags win.
void apply_config_defaults(RunArgs& a, const std::string& path, CLI::App* sub) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in);
    auto absent = [&](const std::string& flag) {
        auto* opt = sub->get_option_no_throw(flag);
        return opt == nullptr || opt->count() == 0;
    };
    auto set_str = [&](const char* key, const char* flag, std::string& dst) {
        if (j.contains(key) && absent(flag)) dst = j.at(key).get<std::string>();
    };
    auto set_int = [&](const char* key, const char* flag, int& dst) {
        if (j.contains(key) && absent(flag)) dst = j.at(key).get<int>();
    };
    set_str("data", "--data", a.data);
    set_str("out_dir", "--out-dir", a.out_dir);
    set_str("features", "--features", a.features);
    set_str("input_cols", "--input-cols", a.input_cols);
    set_str("target_cols", "--target-cols", a.target_cols);
    set_str("split", "--split", a.split);
    set_int("t_h", "--t-h", a.t_h);
    set_int("t_p", "--t-p", a.t_p);
    set_int("trials", "--trials", a.trials);
    set_int("workers", "--workers", a.workers);
    set_int("max_epochs", "--max-epochs", a.max_epochs);
    set_int("grace_epochs", "--grace-epochs", a.grace_epochs);
    if (j.contains("seed") && absent("--seed")) a.seed = j.at("seed").get<uint64_t>();
    if (j.contains("space")) {
        const auto& s = j.at("space");
        auto setd = [&](const char* key, double& dst) {
            if (s.contains(key)) dst = s.at(key).get<double>();
        };
        auto seti = [&](const char* key, int& dst) {
            if (s.contains(key)) dst = s.at(key).get<int>();
        };
        setd("lr_min", a.space.lr_min);
        setd("lr_max", a.space.lr_max);
        setd("wd_min", a.space.wd_min);
        setd("wd_max", a.space.wd_max);
        seti("batch_min", a.space.batch_min);
        seti("batch_max", a.space.batch_max);
        seti("hidden_min", a.space.hidden_min);
        seti("hidden_max", a.space.hidden_max);
        seti("layers_min", a.space.layers_min);
        seti("layers_max", a.space.layers_max);
    }
}

PreparedData prepare_from_args(const RunArgs& a, FeatureSpec& features) {
    features = resolve_features(a.features, a.input_cols, a.target_cols);
    TimeTable table = read_csv_file(a.data);
    WindowConfig window{a.t_h, a.t_p};
    return prepare_datasets(table, features, window, parse_split(a.split));
}

void write_report_files(const EvalReport& report, const std::string& out_dir) {
    write_text_atomic(out_dir + "/report.csv", report.to_csv());
    write_text_atomic(out_dir + "/report.json", report.to_json_text() + "\n");
}

nlohmann::json search_manifest(const RunArgs& a, const FeatureSpec& features) {
    return {{"data", a.data},
            {"out_dir", a.out_dir},
            {"features", preset_to_string(features.preset)},
            {"input_columns", features.input_columns},
            {"target_columns", features.target_columns},
            {"t_h", a.t_h},
            {"t_p", a.t_p},
            {"split", a.split},
            {"trials", a.trials},
            {"seed", a.seed},
            {"workers", a.workers},
            {"max_epochs", a.max_epochs},
            {"grace_epochs", a.grace_epochs},
            {"space",
             {{"lr_min", a.space.lr_min},
              {"lr_max", a.space.lr_max},
              {"wd_min", a.space.wd_min},
              {"wd_max", a.space.wd_max},
              {"batch_min", a.space.batch_min},
              {"batch_max", a.space.batch_max},
              {"hidden_min", a.space.hidden_min},
              {"hidden_max", a.space.hidden_max},
              {"layers_min", a.space.layers_min},
              {"layers_max", a.space.layers_max}}}};
}

void cmd_search(const RunArgs& a) {
    if (a.data.empty() || a.out_dir.empty()) throw Error("search needs --data and --out-dir");
    fs::create_directories(a.out_dir);
    FeatureSpec features;
    PreparedData prep = prepare_from_args(a, features);
    write_text_atomic(a.out_dir + "/manifest.json", search_manifest(a, features).dump(2) + "\n");
    std::cout << "windows: train " << prep.windows[0].size() << ", val " << prep.windows[1].size()
              << ", test " << prep.windows[2].size() << '\n';
    if (!a.dump_windows.empty()) dump_window_sets(prep.windows, a.dump_windows);

    SearchConfig cfg;
    cfg.n_trials = a.trials;
    cfg.seed = a.seed;
    cfg.max_epochs = a.max_epochs;
    cfg.grace_epochs = a.grace_epochs;
    cfg.workers = a.workers;

    const std::string ledger_path = a.out_dir + "/ledger.jsonl";
    const std::string ledger_tmp = ledger_path + ".tmp";
    SearchResult result;
    TrialRecord best_record;
    {
        std::ofstream sink(ledger_tmp);
        if (!sink) throw Error("cannot write '" + ledger_tmp + "'");
        TrialLedger ledger(&sink);
        TrialRunner runner = make_training_runner(prep.windows[0], prep.windows[1], cfg);
        result = run_search(a.space, cfg, ledger, runner);
        best_record = ledger.trial(result.best_trial);
    }
    fs::rename(ledger_tmp, ledger_path);

    std::cout << "best trial " << result.best_trial << ": val loss " << result.best_val_loss
              << ", lr " << result.best_hp.lr << ", wd " << result.best_hp.weight_decay
              << ", batch " << result.best_hp.batch_size << ", hidden "
              << result.best_hp.hidden_dim << ", layers " << result.best_hp.num_layers << '\n';

    ModelBundle bundle;
    bundle.params = std::move(result.best_params);
    bundle.scaler = prep.scaler;
    bundle.features = features;
    bundle.window = WindowConfig{a.t_h, a.t_p};
    bundle.seed = result.best_hp.seed;
    bundle.best_epoch = best_record.best_epoch;
    bundle.epochs_run = static_cast<int>(best_record.val_losses.size());
    save_model_bundle(bundle, a.out_dir + "/model");

    nlohmann::json best = {{"trial", result.best_trial},
                           {"val_loss", result.best_val_loss},
                           {"lr", result.best_hp.lr},
                           {"weight_decay", result.best_hp.weight_decay},
                           {"batch_size", result.best_hp.batch_size},
                           {"hidden_dim", result.best_hp.hidden_dim},
                           {"num_layers", result.best_hp.num_layers},
                           {"seed", result.best_hp.seed}};
    write_text_atomic(a.out_dir + "/best_hp.json", best.dump(2) + "\n");

    EvalReport report = evaluate(bundle.params, prep.windows[2], prep.scaler);
    write_report_files(report, a.out_dir);
    std::cout << "report written to " << a.out_dir << "/report.csv\n";
}

void cmd_train(const RunArgs& a) {
    if (a.data.empty() || a.out_dir.empty()) throw Error("train needs --data and --out-dir");
    fs::create_directories(a.out_dir);
    FeatureSpec features;
    PreparedData prep = prepare_from_args(a, features);
    if (!a.dump_windows.empty()) dump_window_sets(prep.windows, a.dump_windows);

    LstmDims dims{static_cast<int>(features.input_columns.size()), a.hp.hidden_dim,
                  a.hp.num_layers, a.t_p, static_cast<int>(features.target_columns.size())};
    LstmParams model = init_params(dims, derive_seed(a.hp.seed, 0));
    Rng shuffle_rng(derive_seed(a.hp.seed, 1));
    TrainOptions opts;
    opts.max_epochs = a.max_epochs;
    std::ofstream history;
    if (!a.history.empty()) {
        history.open(a.history);
        if (!history) throw Error("cannot write '" + a.history + "'");
        history << "epoch,train_loss,val_loss\n";
        opts.history_csv = &history;
    }
    TrainResult tr = train(std::move(model), prep.windows[0], prep.windows[1], a.hp, nullptr,
                           shuffle_rng, opts);
    if (tr.status == TrialStatus::diverged) throw Error("training diverged");
    std::cout << "best epoch " << tr.best_epoch << " of " << tr.history.epochs() << ", val loss "
              << tr.best_val_loss << '\n';

    ModelBundle bundle;
    bundle.params = std::move(tr.params);
    bundle.scaler = prep.scaler;
    bundle.features = features;
    bundle.window = WindowConfig{a.t_h, a.t_p};
    bundle.seed = a.hp.seed;
    bundle.best_epoch = tr.best_epoch;
    bundle.epochs_run = static_cast<int>(tr.history.epochs());
    save_model_bundle(bundle, a.out_dir + "/model");

    EvalReport report = evaluate(bundle.params, prep.windows[2], prep.scaler);
    write_report_files(report, a.out_dir);
}

struct EvalArgs {
    std::string model, data, out_dir;
    std::string split = "0.6,0.1,0.3";
    std::string partition = "test";
};

void cmd_evaluate(const EvalArgs& a) {
    ModelBundle bundle = load_model_bundle(a.model);
    TimeTable table = ensure_calendar_columns(read_csv_file(a.data), bundle.features);
    TimeTable scaled = standardize(table, bundle.scaler);

    WindowSet windows;
    if (a.partition == "all") {
        windows = assemble_windows(scaled, bundle.features, bundle.window);
    } else {
        auto parts = split_then_window(scaled, bundle.features, bundle.window, parse_split(a.split));
        if (a.partition == "train")
            windows = std::move(parts[0]);
        else if (a.partition == "val")
            windows = std::move(parts[1]);
        else if (a.partition == "test")
            windows = std::move(parts[2]);
        else
            throw Error("--partition must be train, val, test or all");
    }
    if (windows.empty()) throw Error("no complete windows to evaluate");
    fs::create_directories(a.out_dir);
    EvalReport report = evaluate(bundle.params, windows, bundle.scaler);
    write_report_files(report, a.out_dir);
    std::cout << report.to_csv();
}

struct PredictArgs {
    std::string model, data, out;
};

void cmd_predict(const PredictArgs& a) {
    ModelBundle bundle = load_model_bundle(a.model);
    TimeTable table = ensure_calendar_columns(read_csv_file(a.data), bundle.features);
    TimeTable scaled = standardize(table, bundle.scaler);

    const int need = bundle.window.t_h + 1;
    if (static_cast<int>(scaled.rows()) < need)
        throw Error("insufficient history: need " + std::to_string(need) +
                    " trailing hourly rows, table has " + std::to_string(scaled.rows()));
    const size_t first = scaled.rows() - static_cast<size_t>(need);
    for (size_t r = first + 1; r < scaled.rows(); ++r)
        if (scaled.timestamps()[r].epoch_minute() - scaled.timestamps()[r - 1].epoch_minute() != 60)
            throw Error("insufficient history: trailing rows are not consecutive hours");
    Matrix input(need, static_cast<int>(bundle.features.input_columns.size()));
    for (int r = 0; r < need; ++r) {
        for (size_t c = 0; c < bundle.features.input_columns.size(); ++c) {
            const Column& col = scaled.column(bundle.features.input_columns[c]);
            if (col.missing[first + static_cast<size_t>(r)])
                throw Error("insufficient history: missing '" + col.name + "' value " +
                            std::to_string(need - r - 1) + " rows before the end");
            input.at(r, static_cast<int>(c)) = col.values[first + static_cast<size_t>(r)];
        }
    }

    Forward f = forward(input, bundle.params);
    Timestamp anchor = scaled.timestamps().back();
    std::vector<Timestamp> ts;
    std::vector<Column> cols(bundle.features.target_columns.size());
    for (size_t k = 0; k < cols.size(); ++k) {
        cols[k].name = bundle.features.target_columns[k];
        cols[k].missing.assign(static_cast<size_t>(bundle.window.t_p), 0);
    }
    for (int h = 0; h < bundle.window.t_p; ++h) {
        ts.push_back(anchor.plus_hours(h + 1));
        for (size_t k = 0; k < cols.size(); ++k) {
            const ScalerColumn* sc = nullptr;
            int idx = bundle.scaler.column_index(cols[k].name);
            if (idx >= 0) sc = &bundle.scaler.columns[static_cast<size_t>(idx)];
            double v = f.pred.at(h, static_cast<int>(k));
            cols[k].values.push_back(sc ? v * sc->stdev + sc->mean : v);
        }
    }
    write_csv_file(TimeTable(std::move(ts), std::move(cols)), a.out);
    std::cout << "wrote " << a.out << " (" << bundle.window.t_p << " rows)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geomagnetic index forecasting pipeline"};
    app.require_subcommand(1);

    IngestArgs ingest_args;
    auto* ingest_cmd = app.add_subcommand("ingest", "parse source text into canonical CSV");
    ingest_cmd->add_option("--omni", ingest_args.omni, "columnar hourly text file");
    ingest_cmd->add_option("--colmap", ingest_args.colmap, "column map JSON for --omni");
    ingest_cmd->add_option("--sdarn", ingest_args.sdarn, "5-minute cpp/pcr text file");
    ingest_cmd->add_flag("--align", ingest_args.do_align, "intersect sources on shared hours");
    ingest_cmd->add_option("--out", ingest_args.out, "output CSV path")->required();

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate a coupled synthetic dataset");
    synth_cmd->add_option("--length", synth_args.cfg.length, "rows to generate");
    synth_cmd->add_option("--inputs", synth_args.cfg.n_inputs, "input column count");
    synth_cmd->add_option("--targets", synth_args.cfg.n_targets, "target column count");
    synth_cmd->add_option("--noise-std", synth_args.cfg.noise_std, "target noise std");
    synth_cmd->add_option("--seed", synth_args.cfg.seed, "generator seed");
    synth_cmd->add_option("--coef-file", synth_args.coef_file, "JSON array of coefficient rows");
    synth_cmd->add_option("--out", synth_args.out, "output CSV path")->required();

    auto add_run_options = [](CLI::App* sub, RunArgs& a) {
        sub->add_option("--data", a.data, "canonical CSV dataset");
        sub->add_option("--out-dir", a.out_dir, "output directory");
        sub->add_option("--features", a.features, "base, sdrn, sw or custom");
        sub->add_option("--input-cols", a.input_cols, "comma list for --features custom");
        sub->add_option("--target-cols", a.target_cols, "comma list of target columns");
        sub->add_option("--t-h", a.t_h, "past samples beyond the anchor");
        sub->add_option("--t-p", a.t_p, "future samples predicted");
        sub->add_option("--split", a.split, "train,val,test fractions");
        sub->add_option("--max-epochs", a.max_epochs, "epoch cap per trial");
        sub->add_option("--dump-windows", a.dump_windows,
                        "write the assembled windows to CSVs in this directory");
    };

    RunArgs search_args;
    auto* search_cmd = app.add_subcommand("search", "random hyperparameter search");
    add_run_options(search_cmd, search_args);
    search_cmd->add_option("--config", search_args.config, "JSON config; flags override");
    search_cmd->add_option("--trials", search_args.trials, "number of trials");
    search_cmd->add_option("--seed", search_args.seed, "master seed");
    search_cmd->add_option("--workers", search_args.workers, "concurrent trials (1 = deterministic)");
    search_cmd->add_option("--grace-epochs", search_args.grace_epochs,
                           "epochs before median stopping may fire");
    search_cmd->add_option("--lr-min", search_args.space.lr_min, "");
    search_cmd->add_option("--lr-max", search_args.space.lr_max, "");
    search_cmd->add_option("--wd-min", search_args.space.wd_min, "");
    search_cmd->add_option("--wd-max", search_args.space.wd_max, "");
    search_cmd->add_option("--batch-min", search_args.space.batch_min, "");
    search_cmd->add_option("--batch-max", search_args.space.batch_max, "");
    search_cmd->add_option("--hidden-min", search_args.space.hidden_min, "");
    search_cmd->add_option("--hidden-max", search_args.space.hidden_max, "");
    search_cmd->add_option("--layers-min", search_args.space.layers_min, "");
    search_cmd->add_option("--layers-max", search_args.space.layers_max, "");

    RunArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train one configuration");
    add_run_options(train_cmd, train_args);
    train_cmd->add_option("--lr", train_args.hp.lr, "learning rate");
    train_cmd->add_option("--weight-decay", train_args.hp.weight_decay, "L2 coefficient");
    train_cmd->add_option("--batch-size", train_args.hp.batch_size, "mini-batch size");
    train_cmd->add_option("--hidden-dim", train_args.hp.hidden_dim, "LSTM hidden width");
    train_cmd->add_option("--num-layers", train_args.hp.num_layers, "stacked LSTM layers");
    train_cmd->add_option("--model-seed", train_args.hp.seed, "init and shuffle seed");
    train_cmd->add_option("--history", train_args.history, "stream per-epoch losses to this CSV");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "score a trained model");
    eval_cmd->add_option("--model", eval_args.model, "model bundle base path")->required();
    eval_cmd->add_option("--data", eval_args.data, "canonical CSV dataset")->required();
    eval_cmd->add_option("--out-dir", eval_args.out_dir, "output directory")->required();
    eval_cmd->add_option("--split", eval_args.split, "train,val,test fractions");
    eval_cmd->add_option("--partition", eval_args.partition, "train, val, test or all");

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "forecast from the latest complete window");
    predict_cmd->add_option("--model", predict_args.model, "model bundle base path")->required();
    predict_cmd->add_option("--data", predict_args.data, "canonical CSV with trailing history")
        ->required();
    predict_cmd->add_option("--out", predict_args.out, "forecast CSV path")->required();

    try {
        app.parse(argc, argv);
        if (ingest_cmd->parsed()) cmd_ingest(ingest_args);
        if (synth_cmd->parsed()) cmd_synth(synth_args);
        if (search_cmd->parsed()) {
            if (!search_args.config.empty())
                apply_config_defaults(search_args, search_args.config, search_cmd);
            cmd_search(search_args);
        }
        if (train_cmd->parsed()) cmd_train(train_args);
        if (eval_cmd->parsed()) cmd_evaluate(eval_args);
        if (predict_cmd->parsed()) cmd_predict(predict_args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
