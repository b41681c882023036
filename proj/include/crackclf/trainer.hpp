#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "crackclf/adversary.hpp"
#include "crackclf/checkpoint.hpp"
#include "crackclf/common.hpp"
#include "crackclf/container.hpp"
#include "crackclf/data_io.hpp"
#include "crackclf/metrics.hpp"
#include "crackclf/nn.hpp"
#include "crackclf/segnet.hpp"
#include "crackclf/supervision.hpp"

namespace crackclf {

struct TrainConfig {
    double lr = 0.001;
    int64_t epochs = 500;
    int64_t batch_size = 4;
    double lambda_adv = 1.0;
    double threshold = 0.5;
    uint64_t seed = 0;
    int64_t critic_steps_per_gen_step = 1;
    bool clf_enabled = true;

    void validate() const {
        expect(lr > 0.0, "TrainConfig: lr must be positive");
        expect(epochs >= 1, "TrainConfig: epochs must be >= 1");
        expect(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
        expect(lambda_adv >= 0.0, "TrainConfig: lambda_adv must be >= 0");
        expect(threshold > 0.0 && threshold < 1.0, "TrainConfig: threshold must lie in (0,1)");
        expect(critic_steps_per_gen_step >= 1, "TrainConfig: critic steps per step must be >= 1");
    }
};

// A mask-producing segmentation model, as the training loop sees it. Side
// outputs are optional; models without deep supervision return them empty.
class SegModel {
  public:
    virtual ~SegModel() = default;
    virtual ModelOutputs forward(const VarPtr& image) = 0;
    virtual ParamList parameters() = 0;
    virtual int64_t in_channels() const = 0;
    virtual int64_t spatial_divisor() const { return 1; }
};

class SegNetBackbone final : public SegModel {
  public:
    SegNetBackbone(const SegNetConfig& cfg, Rng& rng) : net_(cfg, rng) {}
    explicit SegNetBackbone(SegNet net) : net_(std::move(net)) {}

    ModelOutputs forward(const VarPtr& image) override { return net_.forward(image); }
    ParamList parameters() override { return net_.parameters(); }
    int64_t in_channels() const override { return net_.cfg.in_channels; }
    int64_t spatial_divisor() const override { return 16; }  // four 2x2 poolings

    SegNet& net() { return net_; }
    const SegNet& net() const { return net_; }

  private:
    SegNet net_;
};

using SupervisedLossFn =
    std::function<SupervisedLossResult(const ModelOutputs&, const Tensor& gt_chw)>;

// A backbone plus its supervised loss, ready for closed-loop training.
struct ClfModel {
    std::shared_ptr<SegModel> backbone;
    SupervisedLossFn supervised;
};

namespace detail {

// restores parameter requires_grad flags on scope exit
class GradFreeze {
  public:
    explicit GradFreeze(const ParamList& params) : params_(params) {
        saved_.reserve(params_.size());
        for (const auto& p : params_) {
            saved_.push_back(p.var->requires_grad);
            p.var->requires_grad = false;
        }
    }
    ~GradFreeze() {
        for (size_t k = 0; k < params_.size(); ++k) params_[k].var->requires_grad = saved_[k];
    }
    GradFreeze(const GradFreeze&) = delete;
    GradFreeze& operator=(const GradFreeze&) = delete;

  private:
    ParamList params_;
    std::vector<bool> saved_;
};

inline Tensor hw_to_chw(const Tensor& hw) {
    expect(hw.shape().size() == 2, "expected [H,W] mask, got " + hw.shape_str());
    Tensor out({1, hw.shape()[0], hw.shape()[1]});
    for (int64_t i = 0; i < hw.numel(); ++i) out[i] = hw[i];
    return out;
}

inline Tensor chw_to_hw(const Tensor& chw) {
    expect(chw.shape().size() == 3 && chw.shape()[0] == 1,
           "expected [1,H,W] map, got " + chw.shape_str());
    Tensor out({chw.shape()[1], chw.shape()[2]});
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = chw[i];
    return out;
}

}  // namespace detail

// Validates that the backbone behaves like a probability-map model before
// training starts: probe with a dummy input, check the fused output is a
// [1,H,W] map in [0,1] with a gradient path back to the parameters.
inline ClfModel wrap_with_clf(std::shared_ptr<SegModel> backbone, LossWeights weights = {},
                              SupervisedLossFn supervised = nullptr) {
    expect(backbone != nullptr, "wrap_with_clf: null backbone");
    const ParamList params = backbone->parameters();
    expect(!params.empty(), "wrap_with_clf: backbone exposes no parameters");

    const int64_t side = std::max<int64_t>(backbone->spatial_divisor(), 8);
    const Tensor dummy({backbone->in_channels(), side, side}, 0.5);
    const ModelOutputs probe = backbone->forward(make_const(dummy));
    expect(probe.fused != nullptr, "wrap_with_clf: backbone produced no fused map");
    expect(probe.fused->value.shape() == std::vector<int64_t>{1, side, side},
           "wrap_with_clf: fused map must be [1,H,W] matching the input, got " +
               probe.fused->value.shape_str());
    for (int64_t i = 0; i < probe.fused->value.numel(); ++i)
        expect(probe.fused->value[i] >= 0.0 && probe.fused->value[i] <= 1.0,
               "wrap_with_clf: fused map values must lie in [0,1]");
    expect(probe.fused->requires_grad,
           "wrap_with_clf: no gradient path from the fused map to the parameters");

    ClfModel m;
    m.backbone = std::move(backbone);
    if (supervised) {
        m.supervised = std::move(supervised);
    } else {
        // total_loss degrades to weighted_bce on the fused map alone when the
        // backbone has no side outputs
        m.supervised = [weights](const ModelOutputs& out, const Tensor& gt) {
            return total_loss(out, gt, weights);
        };
    }
    return m;
}

// Forward without building a tape; returns the fused probability map [H,W].
inline Tensor predict_prob(SegModel& model, const Tensor& image) {
    detail::GradFreeze freeze(model.parameters());
    const ModelOutputs out = model.forward(make_const(image));
    return detail::chw_to_hw(out.fused->value);
}

struct TrainSample {
    Tensor image;  // [C,H,W]
    Tensor mask;   // [H,W] binary
    std::string source;  // file path or synthetic tag, used in error messages
};

inline TrainSample make_sample(LoadedPair pair, std::string source) {
    return {std::move(pair.image), std::move(pair.mask), std::move(source)};
}

// One training-log record; serialized as one NDJSON line. adv_loss and the
// lambda-weighted term are present only when the closed loop is active.
struct StepRecord {
    int64_t step = 0;
    int64_t epoch = 0;
    double l_side = 0.0;
    double l_fuse = 0.0;
    double l_total = 0.0;
    double adv_loss = 0.0;
    double j = 0.0;
    double wall_ms = 0.0;
    bool has_adv = false;

    nlohmann::ordered_json to_json(bool include_wall_ms = true) const {
        nlohmann::ordered_json rec;
        rec["step"] = step;
        rec["epoch"] = epoch;
        rec["l_side"] = l_side;
        rec["l_fuse"] = l_fuse;
        rec["l_total"] = l_total;
        if (has_adv) rec["adv_loss"] = adv_loss;
        rec["J"] = j;
        if (include_wall_ms) rec["wall_ms"] = wall_ms;
        return rec;
    }
};

struct FitOptions {
    std::ostream* log = nullptr;              // NDJSON records, one per segmenter step
    bool log_wall_ms = true;                  // false makes fixed-seed logs byte-identical
    std::string checkpoint_dir;               // empty disables checkpointing
    int64_t checkpoint_every_epochs = 1;
    nlohmann::json checkpoint_meta;           // embedded verbatim in every checkpoint
    std::vector<TrainSample> validation;      // non-empty enables best-F1 tracking
    bool augment_flips = false;
    double eval_tolerance = 2.0;              // matching tolerance for validation F1
};

struct FitResult {
    int64_t segmenter_steps = 0;
    int64_t critic_steps = 0;
    int64_t epochs_run = 0;
    double best_val_f1 = -1.0;
    std::vector<StepRecord> records;
};

// Alternating closed-loop training: per batch, critic ascent steps on the
// adversarial loss with the segmenter frozen, then one segmenter descent step
// on J = l_total + lambda_adv * adversarial_loss with the critic frozen.
class Trainer {
  public:
    Trainer(ClfModel model, TrainConfig cfg, CriticConfig critic_cfg = {})
        : model_(std::move(model)), cfg_(cfg) {
        cfg_.validate();
        expect(model_.backbone != nullptr && model_.supervised != nullptr,
               "Trainer: model must come from wrap_with_clf");
        seg_params_ = model_.backbone->parameters();
        seg_adam_ = Adam(cfg_.lr);
        seg_adam_.attach(seg_params_);
        rng_data_ = Rng(cfg_.seed).derive(1);

        if (cfg_.clf_enabled) {
            critic_cfg.in_channels = model_.backbone->in_channels();
            Rng critic_rng = Rng(cfg_.seed).derive(2);
            critic_ = Critic(critic_cfg, critic_rng);
            critic_params_ = critic_->parameters();
            critic_adam_ = Adam(cfg_.lr);
            critic_adam_.attach(critic_params_);
        }
    }

    const TrainConfig& config() const { return cfg_; }
    SegModel& backbone() { return *model_.backbone; }
    const Critic& critic() const {
        expect(critic_.has_value(), "Trainer: closed loop is disabled, no critic exists");
        return *critic_;
    }
    bool clf_enabled() const { return cfg_.clf_enabled; }
    int64_t step() const { return step_; }
    int64_t epoch() const { return epoch_; }

    // One critic ascent pass over the batch; the segmenter stays frozen.
    // Returns the adversarial loss measured after the update.
    double critic_step(const std::vector<TrainSample>& batch) {
        expect(cfg_.clf_enabled, "critic_step requires the closed loop to be enabled");
        expect(!batch.empty(), "critic_step: empty batch");

        std::vector<VarPtr> inputs;
        std::vector<VarPtr> preds;
        std::vector<Tensor> gts;
        {
            detail::GradFreeze freeze(seg_params_);
            for (const auto& s : batch) {
                VarPtr x = make_const(s.image);
                ModelOutputs out = model_.backbone->forward(x);
                inputs.push_back(x);
                preds.push_back(out.fused);  // tape-free under the freeze
                gts.push_back(detail::hw_to_chw(s.mask));
            }
        }

        VarPtr obj = make_const(Tensor::scalar(0.0));
        for (size_t i = 0; i < batch.size(); ++i)
            obj = add(obj, adversarial_loss(inputs[i], preds[i], gts[i], *critic_));
        obj = scale(obj, 1.0 / static_cast<double>(batch.size()));
        backward(scale(obj, -1.0));  // ascend by descending the negation
        critic_adam_.step(critic_params_);

        double post = 0.0;
        {
            detail::GradFreeze freeze(critic_params_);
            for (size_t i = 0; i < batch.size(); ++i)
                post += adversarial_loss(inputs[i], preds[i], gts[i], *critic_)->value[0];
        }
        return post / static_cast<double>(batch.size());
    }

    // One segmenter descent step on J; the critic parameters stay frozen.
    StepRecord segmenter_step(const std::vector<TrainSample>& batch) {
        expect(!batch.empty(), "segmenter_step: empty batch");
        const bool use_adv = cfg_.clf_enabled && cfg_.lambda_adv > 0.0;
        const double inv_b = 1.0 / static_cast<double>(batch.size());

        StepRecord rec;
        rec.has_adv = use_adv;
        VarPtr acc;
        // raw sums folded in graph order, so at lambda_adv = 0 the scaled
        // l_total reproduces J bit for bit
        double side_sum = 0.0, fuse_sum = 0.0, total_sum = 0.0, adv_sum = 0.0;
        for (const auto& s : batch) {
            VarPtr x = make_const(s.image);
            ModelOutputs out = model_.backbone->forward(x);
            const Tensor gt = detail::hw_to_chw(s.mask);
            SupervisedLossResult sup = model_.supervised(out, gt);
            side_sum += sup.report.l_side_total;
            fuse_sum += sup.report.l_fuse;
            total_sum += sup.report.l_total;

            VarPtr sample_loss = sup.total;
            if (use_adv) {
                VarPtr adv = adversarial_loss(x, out.fused, gt, *critic_);
                adv_sum += adv->value[0];
                sample_loss = add(sample_loss, scale(adv, cfg_.lambda_adv));
            }
            acc = acc ? add(acc, sample_loss) : sample_loss;
        }
        VarPtr j = scale(acc, inv_b);
        rec.l_side = side_sum * inv_b;
        rec.l_fuse = fuse_sum * inv_b;
        rec.l_total = total_sum * inv_b;
        rec.adv_loss = adv_sum * inv_b;
        rec.j = j->value[0];
        backward(j);
        seg_adam_.step(seg_params_);

        ++step_;
        rec.step = step_;
        rec.epoch = epoch_;
        return rec;
    }

    // Epoch loop with shuffled batches; resumes from the current epoch count,
    // so a freshly loaded checkpoint continues where it stopped.
    FitResult fit(const std::vector<TrainSample>& train, const FitOptions& opts = {}) {
        expect(!train.empty(), "fit: empty dataset");
        for (const auto& s : train) check_sample(s);
        for (const auto& s : opts.validation) check_sample(s);

        FitResult result;
        result.best_val_f1 = best_val_f1_;
        if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);
        const int64_t n = static_cast<int64_t>(train.size());
        while (epoch_ < cfg_.epochs) {
            std::vector<int64_t> order(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
            rng_data_.shuffle(order);

            for (int64_t base = 0; base < n; base += cfg_.batch_size) {
                const auto t0 = std::chrono::steady_clock::now();
                std::vector<TrainSample> batch;
                for (int64_t k = base; k < std::min(base + cfg_.batch_size, n); ++k) {
                    const TrainSample& s = train[static_cast<size_t>(order[static_cast<size_t>(k)])];
                    batch.push_back(opts.augment_flips ? augment(s) : s);
                }

                if (cfg_.clf_enabled)
                    for (int64_t c = 0; c < cfg_.critic_steps_per_gen_step; ++c) {
                        critic_step(batch);
                        ++result.critic_steps;
                    }

                StepRecord rec = segmenter_step(batch);
                const auto t1 = std::chrono::steady_clock::now();
                rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
                ++result.segmenter_steps;
                if (opts.log) *opts.log << rec.to_json(opts.log_wall_ms).dump() << "\n";
                result.records.push_back(rec);
            }

            ++epoch_;
            ++result.epochs_run;

            if (!opts.validation.empty()) {
                const double f1 = dataset_f1(opts.validation, opts.eval_tolerance);
                if (f1 > best_val_f1_) {
                    best_val_f1_ = f1;
                    if (!opts.checkpoint_dir.empty())
                        save_checkpoint(
                            (std::filesystem::path(opts.checkpoint_dir) / "ckpt_best.cclf").string(),
                            opts.checkpoint_meta);
                }
                result.best_val_f1 = best_val_f1_;
            }
            if (!opts.checkpoint_dir.empty() && opts.checkpoint_every_epochs > 0 &&
                (epoch_ % opts.checkpoint_every_epochs == 0 || epoch_ == cfg_.epochs))
                save_checkpoint((std::filesystem::path(opts.checkpoint_dir) / "ckpt_last.cclf").string(),
                                opts.checkpoint_meta);
        }
        return result;
    }

    // Fused probability map [H,W] for one image, without building a tape.
    Tensor predict_prob(const Tensor& image) { return crackclf::predict_prob(*model_.backbone, image); }

    double dataset_f1(const std::vector<TrainSample>& samples, double tol = 2.0) {
        expect(!samples.empty(), "dataset_f1: empty sample list");
        ConfusionCounts agg;
        for (const auto& s : samples) {
            const Tensor prob = predict_prob(s.image);
            agg += tolerant_confusion(binarize(prob, cfg_.threshold), s.mask, tol);
        }
        return prf(agg).f1;
    }

    void save_checkpoint(const std::string& path, const nlohmann::json& extra_meta = {}) const {
        Container c;
        c.meta["format"] = "crackclf-checkpoint";
        c.meta["step"] = step_;
        c.meta["epoch"] = epoch_;
        c.meta["clf_enabled"] = cfg_.clf_enabled;
        c.meta["lambda_adv"] = cfg_.lambda_adv;
        c.meta["lr"] = cfg_.lr;
        c.meta["seed"] = cfg_.seed;
        c.meta["rng_data"] = rng_data_.state();
        c.meta["best_val_f1"] = best_val_f1_;
        if (!extra_meta.is_null() && !extra_meta.empty()) c.meta["extra"] = extra_meta;

        add_param_tensors(c, "segmenter/", seg_params_);
        add_adam_state(c, "optim/segmenter/", seg_adam_);
        if (cfg_.clf_enabled) {
            add_param_tensors(c, "critic/", critic_params_);
            add_adam_state(c, "optim/critic/", critic_adam_);
        }
        c.save(path);
    }

    // Restores parameters, optimizer moments, data order, and progress
    // counters; training then continues bit-for-bit as if never interrupted.
    void load_checkpoint(const std::string& path) {
        const Container c = Container::load(path);
        if (!c.meta.contains("format") || c.meta["format"] != "crackclf-checkpoint")
            throw IoError(path + " is not a training checkpoint");
        expect(c.meta.at("clf_enabled").get<bool>() == cfg_.clf_enabled,
               "checkpoint closed-loop mode does not match the trainer configuration");

        step_ = c.meta.at("step").get<int64_t>();
        epoch_ = c.meta.at("epoch").get<int64_t>();
        best_val_f1_ = c.meta.value("best_val_f1", -1.0);
        rng_data_.set_state(c.meta.at("rng_data").get<std::string>());

        restore_param_tensors(c, "segmenter/", seg_params_);
        restore_adam_state(c, "optim/segmenter/", seg_adam_);
        if (cfg_.clf_enabled) {
            restore_param_tensors(c, "critic/", critic_params_);
            restore_adam_state(c, "optim/critic/", critic_adam_);
        }
    }

  private:
    ClfModel model_;
    TrainConfig cfg_;
    ParamList seg_params_;
    ParamList critic_params_;
    Adam seg_adam_;
    Adam critic_adam_;
    std::optional<Critic> critic_;
    Rng rng_data_{0};
    int64_t step_ = 0;
    int64_t epoch_ = 0;
    double best_val_f1_ = -1.0;

    void check_sample(const TrainSample& s) const {
        expect(s.image.shape().size() == 3 && s.image.shape()[0] == model_.backbone->in_channels(),
               "sample " + s.source + ": image must be [" +
                   std::to_string(model_.backbone->in_channels()) + ",H,W], got " +
                   s.image.shape_str());
        expect(s.mask.shape().size() == 2 && s.mask.shape()[0] == s.image.shape()[1] &&
                   s.mask.shape()[1] == s.image.shape()[2],
               "sample " + s.source + ": mask " + s.mask.shape_str() + " does not match image " +
                   s.image.shape_str());
        const int64_t d = model_.backbone->spatial_divisor();
        expect(s.image.shape()[1] % d == 0 && s.image.shape()[2] % d == 0,
               "sample " + s.source + ": spatial size " + s.image.shape_str() +
                   " is not divisible by " + std::to_string(d));
    }

    TrainSample augment(const TrainSample& s) {
        TrainSample out = s;
        if (rng_data_.below(2)) {
            out.image = flip_horizontal(out.image);
            out.mask = flip_horizontal(out.mask);
        }
        if (rng_data_.below(2)) {
            out.image = flip_vertical(out.image);
            out.mask = flip_vertical(out.mask);
        }
        return out;
    }
};

}  // namespace crackclf
