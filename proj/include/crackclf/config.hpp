#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackclf/adversary.hpp"
#include "crackclf/common.hpp"
#include "crackclf/metrics.hpp"
#include "crackclf/segnet.hpp"
#include "crackclf/supervision.hpp"
#include "crackclf/trainer.hpp"

namespace crackclf {

// Configuration mistakes get their own exception so the command line can map
// them to a distinct exit status before any work starts.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalOptions {
    double tolerance = 2.0;
    DistanceKind distance = DistanceKind::Euclidean;
    std::string probs_dir;  // evaluate precomputed probability dumps instead of a checkpoint
};

struct ComplexityOptions {
    int64_t height = 256;
    int64_t width = 256;
    int64_t fps_passes = 50;
    int64_t fps_warmup = 5;
};

// Union of everything the commands need. Parsed strictly: unknown keys are
// rejected with their full dotted path, and type mismatches name the field.
struct RunConfig {
    std::string manifest;
    std::string out_dir = "runs/default";
    std::string checkpoint;
    TrainConfig train;
    SegNetConfig segnet;
    CriticConfig critic;
    LossWeights loss;
    EvalOptions eval;
    ComplexityOptions complexity;
    bool augment_flips = false;
    int64_t checkpoint_every_epochs = 1;

    void validate() const {
        // sub-config contracts surface as ConfigError so the CLI maps every
        // bad-config path to the same exit code
        try {
            train.validate();
            segnet.validate();
            critic.validate();
            loss.validate();
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        if (eval.tolerance < 0.0) throw ConfigError("config field 'eval.tolerance': must be >= 0");
        if (complexity.height < 16 || complexity.width < 16 || complexity.height % 16 != 0 ||
            complexity.width % 16 != 0)
            throw ConfigError("config field 'complexity.height/width': must be multiples of 16");
        if (complexity.fps_passes < 1 || complexity.fps_warmup < 0)
            throw ConfigError("config field 'complexity.fps_passes/fps_warmup': need >= 1 passes");
        if (checkpoint_every_epochs < 1)
            throw ConfigError("config field 'train.checkpoint_every_epochs': must be >= 1");
    }
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config field '" + (path.empty() ? std::string("<root>") : path) +
                          "': expected an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown config key '" + (path.empty() ? "" : path + ".") +
                              item.key() + "'");
    }
}

inline double get_double(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError("config field '" + path + "': expected a number");
    return j.get<double>();
}

inline int64_t get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError("config field '" + path + "': expected an integer");
    return j.get<int64_t>();
}

inline bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError("config field '" + path + "': expected true or false");
    return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError("config field '" + path + "': expected a string");
    return j.get<std::string>();
}

inline std::vector<int64_t> get_int_vec(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError("config field '" + path + "': expected an array");
    std::vector<int64_t> out;
    for (const auto& e : j) out.push_back(get_int(e, path + "[]"));
    return out;
}

inline std::vector<double> get_double_vec(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError("config field '" + path + "': expected an array");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(get_double(e, path + "[]"));
    return out;
}

inline void parse_train(const json& j, RunConfig& cfg) {
    check_keys(j, "train",
               {"lr", "epochs", "batch_size", "lambda_adv", "threshold", "seed",
                "critic_steps_per_gen_step", "clf_enabled", "augment_flips",
                "checkpoint_every_epochs"});
    TrainConfig& t = cfg.train;
    if (j.contains("lr")) t.lr = get_double(j["lr"], "train.lr");
    if (j.contains("epochs")) t.epochs = get_int(j["epochs"], "train.epochs");
    if (j.contains("batch_size")) t.batch_size = get_int(j["batch_size"], "train.batch_size");
    if (j.contains("lambda_adv")) t.lambda_adv = get_double(j["lambda_adv"], "train.lambda_adv");
    if (j.contains("threshold")) t.threshold = get_double(j["threshold"], "train.threshold");
    if (j.contains("seed")) t.seed = static_cast<uint64_t>(get_int(j["seed"], "train.seed"));
    if (j.contains("critic_steps_per_gen_step"))
        t.critic_steps_per_gen_step =
            get_int(j["critic_steps_per_gen_step"], "train.critic_steps_per_gen_step");
    if (j.contains("clf_enabled")) t.clf_enabled = get_bool(j["clf_enabled"], "train.clf_enabled");
    if (j.contains("augment_flips"))
        cfg.augment_flips = get_bool(j["augment_flips"], "train.augment_flips");
    if (j.contains("checkpoint_every_epochs"))
        cfg.checkpoint_every_epochs =
            get_int(j["checkpoint_every_epochs"], "train.checkpoint_every_epochs");
}

inline void parse_segnet(const json& j, SegNetConfig& s) {
    check_keys(j, "segnet",
               {"in_channels", "stage_channels", "reduction_ratio", "side_count", "concat_fusion"});
    if (j.contains("in_channels")) s.in_channels = get_int(j["in_channels"], "segnet.in_channels");
    if (j.contains("stage_channels"))
        s.stage_channels = get_int_vec(j["stage_channels"], "segnet.stage_channels");
    if (j.contains("reduction_ratio"))
        s.reduction_ratio = get_int(j["reduction_ratio"], "segnet.reduction_ratio");
    if (j.contains("side_count")) s.side_count = get_int(j["side_count"], "segnet.side_count");
    if (j.contains("concat_fusion"))
        s.concat_fusion = get_bool(j["concat_fusion"], "segnet.concat_fusion");
}

inline void parse_critic(const json& j, CriticConfig& c) {
    // in_channels is derived from the segmentation input at build time
    check_keys(j, "critic", {"block_channels", "kernel", "stride", "leaky_slope", "tap"});
    if (j.contains("block_channels"))
        c.block_channels = get_int_vec(j["block_channels"], "critic.block_channels");
    if (j.contains("kernel")) c.kernel = get_int(j["kernel"], "critic.kernel");
    if (j.contains("stride")) c.stride = get_int(j["stride"], "critic.stride");
    if (j.contains("leaky_slope")) c.leaky_slope = get_double(j["leaky_slope"], "critic.leaky_slope");
    if (j.contains("tap")) c.tap = get_string(j["tap"], "critic.tap");
}

inline void parse_loss(const json& j, LossWeights& w) {
    check_keys(j, "loss", {"alpha", "beta", "gamma", "balance"});
    if (j.contains("alpha")) w.alpha = get_double_vec(j["alpha"], "loss.alpha");
    if (j.contains("beta")) w.beta = get_double(j["beta"], "loss.beta");
    if (j.contains("gamma")) w.gamma = get_double(j["gamma"], "loss.gamma");
    if (j.contains("balance")) {
        const std::string b = get_string(j["balance"], "loss.balance");
        if (b == "fixed")
            w.balance = LossWeights::Balance::fixed;
        else if (b == "per_batch")
            w.balance = LossWeights::Balance::per_batch;
        else
            throw ConfigError("config field 'loss.balance': expected 'fixed' or 'per_batch', got '" +
                              b + "'");
    }
}

inline void parse_eval(const json& j, EvalOptions& e) {
    check_keys(j, "eval", {"tolerance", "distance", "probs_dir"});
    if (j.contains("tolerance")) e.tolerance = get_double(j["tolerance"], "eval.tolerance");
    if (j.contains("probs_dir")) e.probs_dir = get_string(j["probs_dir"], "eval.probs_dir");
    if (j.contains("distance")) {
        const std::string d = get_string(j["distance"], "eval.distance");
        if (d == "euclidean")
            e.distance = DistanceKind::Euclidean;
        else if (d == "chebyshev")
            e.distance = DistanceKind::Chebyshev;
        else
            throw ConfigError(
                "config field 'eval.distance': expected 'euclidean' or 'chebyshev', got '" + d + "'");
    }
}

inline void parse_complexity(const json& j, ComplexityOptions& c) {
    check_keys(j, "complexity", {"height", "width", "fps_passes", "fps_warmup"});
    if (j.contains("height")) c.height = get_int(j["height"], "complexity.height");
    if (j.contains("width")) c.width = get_int(j["width"], "complexity.width");
    if (j.contains("fps_passes")) c.fps_passes = get_int(j["fps_passes"], "complexity.fps_passes");
    if (j.contains("fps_warmup")) c.fps_warmup = get_int(j["fps_warmup"], "complexity.fps_warmup");
}

}  // namespace cfgdetail

inline RunConfig run_config_from_json(const nlohmann::json& root) {
    using namespace cfgdetail;
    check_keys(root, "",
               {"manifest", "out_dir", "checkpoint", "train", "segnet", "critic", "loss", "eval",
                "complexity"});
    RunConfig cfg;
    if (root.contains("manifest")) cfg.manifest = get_string(root["manifest"], "manifest");
    if (root.contains("out_dir")) cfg.out_dir = get_string(root["out_dir"], "out_dir");
    if (root.contains("checkpoint")) cfg.checkpoint = get_string(root["checkpoint"], "checkpoint");
    if (root.contains("train")) parse_train(root["train"], cfg);
    if (root.contains("segnet")) parse_segnet(root["segnet"], cfg.segnet);
    if (root.contains("critic")) parse_critic(root["critic"], cfg.critic);
    if (root.contains("loss")) parse_loss(root["loss"], cfg.loss);
    if (root.contains("eval")) parse_eval(root["eval"], cfg.eval);
    if (root.contains("complexity")) parse_complexity(root["complexity"], cfg.complexity);
    return cfg;
}

inline nlohmann::ordered_json run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["manifest"] = cfg.manifest;
    j["out_dir"] = cfg.out_dir;
    j["checkpoint"] = cfg.checkpoint;
    j["train"] = {{"lr", cfg.train.lr},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"lambda_adv", cfg.train.lambda_adv},
                  {"threshold", cfg.train.threshold},
                  {"seed", static_cast<int64_t>(cfg.train.seed)},
                  {"critic_steps_per_gen_step", cfg.train.critic_steps_per_gen_step},
                  {"clf_enabled", cfg.train.clf_enabled},
                  {"augment_flips", cfg.augment_flips},
                  {"checkpoint_every_epochs", cfg.checkpoint_every_epochs}};
    j["segnet"] = {{"in_channels", cfg.segnet.in_channels},
                   {"stage_channels", cfg.segnet.stage_channels},
                   {"reduction_ratio", cfg.segnet.reduction_ratio},
                   {"side_count", cfg.segnet.side_count},
                   {"concat_fusion", cfg.segnet.concat_fusion}};
    j["critic"] = {{"block_channels", cfg.critic.block_channels},
                   {"kernel", cfg.critic.kernel},
                   {"stride", cfg.critic.stride},
                   {"leaky_slope", cfg.critic.leaky_slope},
                   {"tap", cfg.critic.tap}};
    j["loss"] = {{"alpha", cfg.loss.alpha},
                 {"beta", cfg.loss.beta},
                 {"gamma", cfg.loss.gamma},
                 {"balance", cfg.loss.balance == LossWeights::Balance::fixed ? "fixed" : "per_batch"}};
    j["eval"] = {{"tolerance", cfg.eval.tolerance},
                 {"distance", cfg.eval.distance == DistanceKind::Euclidean ? "euclidean" : "chebyshev"},
                 {"probs_dir", cfg.eval.probs_dir}};
    j["complexity"] = {{"height", cfg.complexity.height},
                       {"width", cfg.complexity.width},
                       {"fps_passes", cfg.complexity.fps_passes},
                       {"fps_warmup", cfg.complexity.fps_warmup}};
    return j;
}

// dotted-path override: descends through (or creates) nested objects and
// replaces the leaf; the value text is taken as JSON when it parses, else as
// a plain string, so `--train.lr 0.01` and `--manifest data/x.txt` both work
inline void apply_override(nlohmann::json& root, const std::string& dotted_key,
                           const std::string& value_text) {
    if (dotted_key.empty()) throw ConfigError("override with empty key");
    nlohmann::json* node = &root;
    std::istringstream keys(dotted_key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(keys, part, '.')) {
        if (part.empty()) throw ConfigError("override key '" + dotted_key + "' has an empty segment");
        parts.push_back(part);
    }
    for (size_t k = 0; k + 1 < parts.size(); ++k) {
        nlohmann::json& child = (*node)[parts[k]];
        if (!child.is_object() && !child.is_null())
            throw ConfigError("override key '" + dotted_key + "' descends into non-object '" +
                              parts[k] + "'");
        node = &child;
    }
    nlohmann::json value = nlohmann::json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;
    (*node)[parts.back()] = std::move(value);
}

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    for (const auto& [key, value] : overrides) apply_override(root, key, value);
    return run_config_from_json(root);
}

}  // namespace crackclf
