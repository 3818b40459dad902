#include "mnet/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mnet/error.hpp"

namespace mnet {

std::vector<std::string> physical_columns(const FeatureSpec& features) {
    std::set<std::string> calendar(kCalendarColumns.begin(), kCalendarColumns.end());
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& list : {features.input_columns, features.target_columns})
        for (const auto& c : list)
            if (!calendar.count(c) && seen.insert(c).second) out.push_back(c);
    return out;
}

TimeTable ensure_calendar_columns(const TimeTable& table, const FeatureSpec& features) {
    bool needs_calendar = false;
    for (const auto& c : features.input_columns)
        if (std::find(kCalendarColumns.begin(), kCalendarColumns.end(), c) !=
                kCalendarColumns.end() &&
            !table.has_column(c))
            needs_calendar = true;
    return needs_calendar ? add_calendar_columns(table) : table;
}

PreparedData prepare_datasets(const TimeTable& table, const FeatureSpec& features,
                              const WindowConfig& window, const SplitSpec& split) {
    features.validate();
    window.validate();

    TimeTable full = ensure_calendar_columns(table, features);

    auto sizes = split_sizes(full.rows(), split);
    Timestamp train_start = full.timestamps().front();
    Timestamp train_end = full.timestamps()[sizes[0] - 1];

    PreparedData out;
    out.scaler = fit_scaler(full, physical_columns(features), train_start, train_end);
    TimeTable scaled = standardize(full, out.scaler);
    out.windows = split_then_window(scaled, features, window, split);
    return out;
}

void save_model_bundle(const ModelBundle& bundle, const std::string& base_path) {
    save_params_file(bundle.params, base_path + ".bin");
    nlohmann::json j;
    j["dims"] = {{"d_in", bundle.params.dims.d_in},
                 {"hidden", bundle.params.dims.hidden},
                 {"layers", bundle.params.dims.layers},
                 {"t_out", bundle.params.dims.t_out},
                 {"k_out", bundle.params.dims.k_out}};
    j["gate_order"] = "ifgo";
    j["seed"] = bundle.seed;
    j["input_columns"] = bundle.features.input_columns;
    j["target_columns"] = bundle.features.target_columns;
    j["preset"] = preset_to_string(bundle.features.preset);
    j["window"] = {{"t_h", bundle.window.t_h}, {"t_p", bundle.window.t_p}};
    j["scaler"] = nlohmann::json::parse(bundle.scaler.to_json_text());
    j["best_epoch"] = bundle.best_epoch;
    j["epochs_run"] = bundle.epochs_run;
    const std::string path = base_path + ".json";
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write '" + tmp + "'");
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

ModelBundle load_model_bundle(const std::string& base_path) {
    std::string base = base_path;
    if (base.size() > 4 && (base.ends_with(".bin") || base.ends_with(".json")))
        base = base.substr(0, base.rfind('.'));
    ModelBundle bundle;
    bundle.params = load_params_file(base + ".bin");
    std::ifstream in(base + ".json");
    if (!in) throw Error("cannot open '" + base + ".json'");
    nlohmann::json j = nlohmann::json::parse(in);
    bundle.seed = j.at("seed").get<uint64_t>();
    auto inputs = j.at("input_columns").get<std::vector<std::string>>();
    auto targets = j.at("target_columns").get<std::vector<std::string>>();
    bundle.features = FeatureSpec::custom(std::move(inputs), std::move(targets));
    if (j.contains("preset")) bundle.features.preset = preset_from_string(j.at("preset"));
    bundle.window.t_h = j.at("window").at("t_h").get<int>();
    bundle.window.t_p = j.at("window").at("t_p").get<int>();
    bundle.scaler = Scaler::from_json_text(j.at("scaler").dump());
    if (j.contains("best_epoch")) bundle.best_epoch = j.at("best_epoch").get<int>();
    if (j.contains("epochs_run")) bundle.epochs_run = j.at("epochs_run").get<int>();
    if (bundle.params.dims.d_in != static_cast<int>(bundle.features.input_columns.size()) ||
        bundle.params.dims.k_out != static_cast<int>(bundle.features.target_columns.size()) ||
        bundle.params.dims.t_out != bundle.window.t_p)
        throw Error("model bundle: sidecar does not match the weight file");
    return bundle;
}

}  // namespace mnet
