// Command-line front end: train, eval, infer, complexity.
//
// Every subcommand takes --config PATH (a JSON file, possibly just "{}") and
// accepts additional --dotted.key value overrides that patch the config
// before validation. CRACKCLF_OUT overrides the output directory. Exit
// status: 0 success, 2 configuration errors, 1 runtime failures.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "crackclf/crackclf.hpp"

namespace fs = std::filesystem;
using namespace crackclf;

namespace {

std::vector<std::pair<std::string, std::string>> parse_overrides(
    const std::vector<std::string>& rest) {
    std::vector<std::pair<std::string, std::string>> out;
    for (size_t i = 0; i < rest.size(); ++i) {
        const std::string& tok = rest[i];
        if (tok.rfind("--", 0) != 0)
            throw ConfigError("unexpected argument '" + tok + "' (overrides look like --key value)");
        const std::string body = tok.substr(2);
        const size_t eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else {
            if (i + 1 >= rest.size())
                throw ConfigError("override '--" + body + "' is missing a value");
            out.emplace_back(body, rest[++i]);
        }
    }
    return out;
}

struct LoadedConfig {
    nlohmann::json root;
    RunConfig cfg;
};

LoadedConfig load_config(const std::string& path,
                         std::vector<std::pair<std::string, std::string>> overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    for (const auto& [key, value] : overrides) apply_override(root, key, value);
    LoadedConfig lc;
    lc.cfg = run_config_from_json(root);
    if (const char* env_out = std::getenv("CRACKCLF_OUT"); env_out && *env_out)
        lc.cfg.out_dir = env_out;
    lc.root = std::move(root);
    return lc;
}

std::vector<TrainSample> load_split(const DatasetManifest& manifest, Split split) {
    std::vector<TrainSample> out;
    for (const auto& e : manifest.entries) {
        if (e.split != split) continue;
        out.push_back(make_sample(load_pair(e), e.image_path));
    }
    return out;
}

// reconstructs the segmentation net stored in a checkpoint; refuses when the
// caller's config explicitly asks for a different architecture
struct RestoredModel {
    Container archive;
    std::shared_ptr<SegNetBackbone> backbone;
    RunConfig stored;
};

RestoredModel load_model(const std::string& checkpoint_path, const nlohmann::json& user_root) {
    RestoredModel r;
    r.archive = Container::load(checkpoint_path);
    if (!r.archive.meta.contains("extra") || !r.archive.meta["extra"].is_object())
        throw IoError(checkpoint_path + ": checkpoint carries no embedded configuration");
    r.stored = run_config_from_json(r.archive.meta["extra"]);

    if (user_root.contains("segnet")) {
        const auto requested = run_config_to_json(run_config_from_json(user_root))["segnet"];
        const auto stored = run_config_to_json(r.stored)["segnet"];
        if (requested != stored)
            throw IoError("checkpoint/config mismatch:\n  checkpoint segnet: " + stored.dump() +
                          "\n  requested segnet:  " + requested.dump());
    }

    Rng init(0);  // values are overwritten by the restore
    r.backbone = std::make_shared<SegNetBackbone>(r.stored.segnet, init);
    restore_param_tensors(r.archive, "segmenter/", r.backbone->parameters());
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

int cmd_train(const LoadedConfig& lc) {
    RunConfig cfg = lc.cfg;
    if (cfg.manifest.empty())
        throw ConfigError("config field 'manifest': required for train");
    cfg.validate();

    const DatasetManifest manifest = load_manifest(cfg.manifest);
    std::vector<TrainSample> train = load_split(manifest, Split::Train);
    std::vector<TrainSample> val = load_split(manifest, Split::Val);
    if (train.empty()) throw IoError(cfg.manifest + ": manifest has no train entries");

    Rng seg_init = Rng(cfg.train.seed).derive(3);
    ClfModel model = wrap_with_clf(std::make_shared<SegNetBackbone>(cfg.segnet, seg_init), cfg.loss);
    Trainer trainer(std::move(model), cfg.train, cfg.critic);
    if (!cfg.checkpoint.empty()) trainer.load_checkpoint(cfg.checkpoint);  // resume epoch counter too

    fs::create_directories(cfg.out_dir);
    std::ofstream log(fs::path(cfg.out_dir) / "train_log.ndjson");
    if (!log) throw IoError("cannot write training log in " + cfg.out_dir);

    FitOptions opts;
    opts.log = &log;
    opts.checkpoint_dir = cfg.out_dir;
    opts.checkpoint_every_epochs = cfg.checkpoint_every_epochs;
    opts.checkpoint_meta = run_config_to_json(cfg);
    opts.validation = val;
    opts.augment_flips = cfg.augment_flips;
    opts.eval_tolerance = cfg.eval.tolerance;
    const FitResult res = trainer.fit(train, opts);

    write_text(fs::path(cfg.out_dir) / "config.json", run_config_to_json(cfg).dump(2) + "\n");

    std::cout << "# crackclf train\n"
              << "manifest " << cfg.manifest << "\n"
              << "images " << train.size() << " train, " << val.size() << " val\n"
              << "epochs " << res.epochs_run << "\n"
              << "segmenter_steps " << res.segmenter_steps << "\n"
              << "critic_steps " << res.critic_steps << "\n";
    if (!res.records.empty()) std::cout << "final_l_total " << res.records.back().l_total << "\n";
    if (res.best_val_f1 >= 0.0) std::cout << "best_val_f1 " << res.best_val_f1 << "\n";
    std::cout << "artifacts " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const LoadedConfig& lc) {
    const RunConfig& cfg = lc.cfg;
    const bool from_dumps = !cfg.eval.probs_dir.empty();
    if (cfg.checkpoint.empty() && !from_dumps)
        throw ConfigError("config field 'checkpoint': required for eval (or set eval.probs_dir)");
    if (cfg.manifest.empty()) throw ConfigError("config field 'manifest': required for eval");

    const DatasetManifest manifest = load_manifest(cfg.manifest);
    std::vector<TrainSample> test = load_split(manifest, Split::Test);
    if (test.empty()) throw IoError(cfg.manifest + ": manifest has no test entries");

    std::vector<Tensor> probs, gts;
    if (from_dumps) {
        // precomputed predictions: one <image stem>_probs.cclf per test entry,
        // as written by `infer --dump-probs`
        for (const auto& s : test) {
            const fs::path dump = fs::path(cfg.eval.probs_dir) /
                                  (fs::path(s.source).stem().string() + "_probs.cclf");
            const Container c = Container::load(dump.string());
            probs.push_back(c.at("prob"));
            gts.push_back(s.mask);
        }
    } else {
        RestoredModel model = load_model(cfg.checkpoint, lc.root);
        for (const auto& s : test) {
            probs.push_back(predict_prob(*model.backbone, s.image));
            gts.push_back(s.mask);
        }
    }
    const MetricsReport rep =
        evaluate_dataset(probs, gts, cfg.train.threshold, cfg.eval.tolerance, cfg.eval.distance);

    const std::string dist = cfg.eval.distance == DistanceKind::Euclidean ? "euclidean" : "chebyshev";
    std::ostringstream text;
    text << "# crackclf eval\n"
         << "predictions " << (from_dumps ? cfg.eval.probs_dir : cfg.checkpoint) << "\n"
         << "images " << test.size() << "\n"
         << "threshold " << cfg.train.threshold << "\n"
         << "tolerance " << cfg.eval.tolerance << "\n"
         << "distance " << dist << "\n"
         << "pr " << rep.pr << "\n"
         << "re " << rep.re << "\n"
         << "f1 " << rep.f1 << "\n"
         << "ods " << rep.ods << " at_t " << rep.ods_best_t << "\n"
         << "ois " << rep.ois << "\n";
    std::cout << text.str();

    fs::create_directories(cfg.out_dir);
    nlohmann::ordered_json mj;
    mj["predictions"] = from_dumps ? cfg.eval.probs_dir : cfg.checkpoint;
    mj["images"] = test.size();
    mj["threshold"] = cfg.train.threshold;
    mj["tolerance"] = cfg.eval.tolerance;
    mj["distance"] = dist;
    mj["pr"] = rep.pr;
    mj["re"] = rep.re;
    mj["f1"] = rep.f1;
    mj["ods"] = rep.ods;
    mj["ods_best_t"] = rep.ods_best_t;
    mj["ois"] = rep.ois;
    write_text(fs::path(cfg.out_dir) / "metrics.json", mj.dump(2) + "\n");

    std::ostringstream curve;
    curve << "threshold\tprecision\trecall\tf1\n";
    for (const auto& pt : rep.pr_curve) {
        const double f1 = pt.pr + pt.re > 0.0 ? 2.0 * pt.pr * pt.re / (pt.pr + pt.re) : 0.0;
        curve << pt.t << '\t' << pt.pr << '\t' << pt.re << '\t' << f1 << '\n';
    }
    write_text(fs::path(cfg.out_dir) / "pr_curve.tsv", curve.str());
    write_text(fs::path(cfg.out_dir) / "metrics.txt", text.str());
    return 0;
}

int cmd_infer(const LoadedConfig& lc, const std::vector<std::string>& images, bool dump_probs,
              bool dump_features) {
    const RunConfig& cfg = lc.cfg;
    if (cfg.checkpoint.empty()) throw ConfigError("config field 'checkpoint': required for infer");

    RestoredModel model = load_model(cfg.checkpoint, lc.root);
    fs::create_directories(cfg.out_dir);

    int failed = 0;
    for (const std::string& path : images) {
        try {
            const Tensor image = load_image(path);
            const std::string stem = fs::path(path).stem().string();
            const Tensor prob = predict_prob(*model.backbone, image);
            write_mask_png((fs::path(cfg.out_dir) / (stem + "_mask.png")).string(),
                           binarize(prob, cfg.train.threshold));

            if (dump_probs) {
                Container c;
                c.meta["source"] = path;
                c.meta["threshold"] = cfg.train.threshold;
                c.add("prob", prob, Dtype::F32);
                c.save((fs::path(cfg.out_dir) / (stem + "_probs.cclf")).string());
            }
            if (dump_features) {
                detail::GradFreeze freeze(model.backbone->parameters());
                const ModelOutputs out = model.backbone->forward(make_const(image));
                Container c;
                c.meta["source"] = path;
                for (size_t k = 0; k < out.sides.size(); ++k)
                    c.add("side" + std::to_string(k + 1), out.sides[k]->value, Dtype::F32);
                c.add("fused", out.fused->value, Dtype::F32);
                for (size_t k = 0; k < out.features.size(); ++k)
                    c.add(out.feature_names[k], out.features[k]->value, Dtype::F32);
                c.save((fs::path(cfg.out_dir) / (stem + "_features.cclf")).string());
            }
            std::cout << path << " -> " << (fs::path(cfg.out_dir) / (stem + "_mask.png")).string()
                      << "\n";
        } catch (const std::exception& e) {
            std::cerr << "failed: " << path << ": " << e.what() << "\n";
            ++failed;
        }
    }
    return failed == 0 ? 0 : 1;
}

int cmd_complexity(const LoadedConfig& lc) {
    RunConfig cfg = lc.cfg;
    cfg.validate();
    const int64_t h = cfg.complexity.height, w = cfg.complexity.width;

    CostReport seg = segnet_cost(cfg.segnet, h, w);
    Rng init(0);
    SegNet net(cfg.segnet, init);
    const int64_t counted = param_count(net.parameters());
    if (counted != seg.params)
        throw ContractViolation("complexity accounting drifted from the model: counted " +
                                std::to_string(counted) + ", walked " + std::to_string(seg.params));

    CostReport critic_rep;
    if (cfg.train.clf_enabled) {
        CriticConfig cc = cfg.critic;
        cc.in_channels = cfg.segnet.in_channels;
        critic_rep = critic_cost(cc, h, w);
    }

    Rng input_rng(1);
    Tensor input({cfg.segnet.in_channels, h, w});
    for (int64_t i = 0; i < input.numel(); ++i) input[i] = input_rng.uniform();
    ParamList params = net.parameters();
    const FpsReport fps = measure_fps(
        [&] {
            detail::GradFreeze freeze(params);
            net.forward(make_const(input));
        },
        cfg.complexity.fps_passes, cfg.complexity.fps_warmup);

    constexpr double kReferenceParams = 18.84e6;  // full-scale reference budget
    const double ratio = static_cast<double>(seg.params) / kReferenceParams;
    const bool within = ratio >= 0.75 && ratio <= 1.25;

    std::ostringstream text;
    text << "# crackclf complexity\n"
         << "convention: 2 FLOPs per multiply-accumulate; convolutions, transposed convolutions, "
            "and linear maps only; bias adds 1 FLOP per output element; activations, pooling, and "
            "interpolation excluded\n"
         << "input " << cfg.segnet.in_channels << "x" << h << "x" << w << "\n"
         << "segmenter_params " << seg.params << "\n"
         << "segmenter_flops " << seg.flops << "\n";
    if (cfg.train.clf_enabled)
        text << "critic_params " << critic_rep.params << "\n"
             << "critic_flops " << critic_rep.flops << "\n";
    text << "fps " << fps.fps << " (median of " << fps.passes << " passes after " << fps.warmups
         << " warmups, single-threaded)\n"
         << "reference_params 1.884e+07 ratio " << ratio << (within ? " (within" : " (outside")
         << " +/-25%)\n";
    std::cout << text.str();

    fs::create_directories(cfg.out_dir);
    nlohmann::ordered_json j;
    j["input"] = {cfg.segnet.in_channels, h, w};
    j["segmenter_params"] = seg.params;
    j["segmenter_flops"] = seg.flops;
    if (cfg.train.clf_enabled) {
        j["critic_params"] = critic_rep.params;
        j["critic_flops"] = critic_rep.flops;
    }
    j["fps"] = fps.fps;
    j["fps_median_ms"] = fps.median_ms;
    j["reference_params"] = kReferenceParams;
    j["reference_ratio"] = ratio;
    j["within_reference_band"] = within;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerCost& lc2 : seg.layers)
        layers.push_back({{"name", lc2.name}, {"params", lc2.params}, {"flops", lc2.flops}});
    if (cfg.train.clf_enabled)
        for (const LayerCost& lc2 : critic_rep.layers)
            layers.push_back(
                {{"name", "critic." + lc2.name}, {"params", lc2.params}, {"flops", lc2.flops}});
    j["layers"] = layers;
    write_text(fs::path(cfg.out_dir) / "complexity.json", j.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crack segmentation toolkit: closed-loop-feedback training, evaluation, inference"};
    app.require_subcommand(1);

    std::string train_config, eval_config, infer_config, complexity_config;
    std::string clf_flag;
    double threshold_flag = -1.0;
    std::string probs_dir_flag;
    std::vector<std::string> infer_images;
    bool dump_probs = false, dump_features = false;

    CLI::App* t = app.add_subcommand("train", "train on a dataset manifest");
    t->add_option("--config", train_config, "JSON config path")->required();
    t->add_option("--clf", clf_flag, "enable/disable the closed loop (true/false)");
    t->allow_extras();

    CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    e->add_option("--config", eval_config, "JSON config path")->required();
    e->add_option("--threshold", threshold_flag, "decision threshold");
    e->add_option("--probs-dir", probs_dir_flag, "evaluate prob dumps instead of a checkpoint");
    e->allow_extras();

    CLI::App* i = app.add_subcommand("infer", "segment images with a checkpoint");
    i->add_option("--config", infer_config, "JSON config path")->required();
    i->add_option("--image", infer_images, "input image (repeatable)")->required();
    i->add_option("--threshold", threshold_flag, "decision threshold");
    i->add_flag("--dump-probs", dump_probs, "write probability maps as f32 containers");
    i->add_flag("--dump-features", dump_features, "write side maps and decoder activations");
    i->allow_extras();

    CLI::App* c = app.add_subcommand("complexity", "report params, FLOP estimate, and FPS");
    c->add_option("--config", complexity_config, "JSON config path")->required();
    c->allow_extras();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        return app.exit(ex) ? 2 : 0;
    }

    CLI::App* sub = app.get_subcommands().front();
    LoadedConfig lc;
    try {
        auto overrides = parse_overrides(sub->remaining());
        if (!clf_flag.empty()) overrides.emplace_back("train.clf_enabled", clf_flag);
        if (threshold_flag >= 0.0)
            overrides.emplace_back("train.threshold", std::to_string(threshold_flag));
        if (!probs_dir_flag.empty()) overrides.emplace_back("eval.probs_dir", probs_dir_flag);
        const std::string& cfg_path = sub == t    ? train_config
                                      : sub == e  ? eval_config
                                      : sub == i  ? infer_config
                                                  : complexity_config;
        lc = load_config(cfg_path, std::move(overrides));
        if (sub == t || sub == c) lc.cfg.validate();
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    }

    try {
        if (sub == t) return cmd_train(lc);
        if (sub == e) return cmd_eval(lc);
        if (sub == i) return cmd_infer(lc, infer_images, dump_probs, dump_features);
        return cmd_complexity(lc);
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
