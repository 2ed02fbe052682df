#include "kws/training.hpp"

#include <cmath>
#include <fstream>

namespace kws {

RegimeSpec RegimeSpec::from_name(const std::string& name) {
    if (name == "locale-specific") return {Regime::LocaleSpecific, ConditioningMode::None};
    if (name == "universal") return {Regime::Universal, ConditioningMode::None};
    if (name == "concat") return {Regime::Conditioned, ConditioningMode::Concat};
    if (name == "film") return {Regime::Conditioned, ConditioningMode::FiLM};
    throw ConfigError("unknown regime '" + name + "'");
}

std::string RegimeSpec::name() const {
    switch (regime) {
        case Regime::LocaleSpecific: return "locale-specific";
        case Regime::Universal: return "universal";
        case Regime::Conditioned:
            return mode == ConditioningMode::Concat ? "concat" : "film";
    }
    throw ConfigError("unknown regime");
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lambda_enc < 0.0 || lambda_dec < 0.0) throw ConfigError("loss weights must be >= 0");
    if (lambda_enc == 0.0 && lambda_dec == 0.0)
        throw ConfigError("at least one loss weight must be positive");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

Batch sample_batch(const Corpus& corpus, Rng& rng, int batch_size,
                   std::optional<int> locale_filter, bool locale_balanced) {
    std::vector<const Utterance*> pool;
    std::vector<std::vector<const Utterance*>> by_locale;
    if (locale_balanced && !locale_filter) {
        by_locale.resize(static_cast<std::size_t>(corpus.num_locales()));
        for (const Utterance& u : corpus.utterances)
            if (u.split == Split::Train)
                by_locale[static_cast<std::size_t>(u.locale)].push_back(&u);
        for (const auto& v : by_locale)
            if (v.empty()) throw DataError("a locale has no train utterances");
    } else {
        pool = corpus.select(Split::Train, locale_filter);
        if (pool.empty()) throw DataError("no train utterances match the requested locale filter");
    }

    std::vector<const Utterance*> chosen;
    for (int i = 0; i < batch_size; ++i) {
        if (locale_balanced && !locale_filter) {
            const auto& v = by_locale[static_cast<std::size_t>(
                rng.uniform_int(0, corpus.num_locales() - 1))];
            chosen.push_back(v[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(v.size()) - 1))]);
        } else {
            chosen.push_back(pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(pool.size()) - 1))]);
        }
    }

    Batch batch;
    for (const Utterance* u : chosen) batch.frames = std::max(batch.frames, u->frames);
    const int fdim = corpus.config.feature_dim;
    for (const Utterance* u : chosen) {
        BatchItem item;
        item.locale = u->locale;
        item.valid_frames = u->frames;
        item.features = Tensor::zeros({batch.frames, fdim});
        for (int t = 0; t < u->frames; ++t)
            for (int d = 0; d < fdim; ++d)
                item.features.at(t, d) =
                    static_cast<double>(u->features[static_cast<std::size_t>(t) * fdim + d]);
        item.encoder_targets.assign(static_cast<std::size_t>(batch.frames), 0);
        item.decoder_targets.assign(static_cast<std::size_t>(batch.frames), 0);
        item.mask.assign(static_cast<std::size_t>(batch.frames), false);
        for (int t = 0; t < u->frames; ++t) {
            item.encoder_targets[static_cast<std::size_t>(t)] =
                u->labels.encoder_ids[static_cast<std::size_t>(t)];
            item.decoder_targets[static_cast<std::size_t>(t)] =
                u->labels.decoder_targets[static_cast<std::size_t>(t)];
            item.mask[static_cast<std::size_t>(t)] = true;
        }
        batch.items.push_back(std::move(item));
    }
    return batch;
}

LossBreakdown loss_and_grads(const ParameterSet& params, const Batch& batch, double lambda_enc,
                             double lambda_dec, TensorMap& grads) {
    if (batch.items.empty()) throw DataError("empty batch");
    for (const auto& [name, t] : params.tensors)
        if (grads.find(name) == grads.end()) grads[name] = Tensor::zeros(t.dims);

    const int s_enc = params.config.encoder_stride_total();
    const int s_tot = params.config.total_stride();
    const double inv_b = 1.0 / static_cast<double>(batch.items.size());

    LossBreakdown losses;
    for (const BatchItem& item : batch.items) {
        std::optional<LocaleOneHot> locale;
        if (params.mode != ConditioningMode::None)
            locale.emplace(item.locale, params.num_locales);

        ForwardCache cache;
        ForwardOutput out = forward(params, item.features, locale, &cache);

        // subsample frame labels to the model's output rates
        const int tp = out.encoder_logits.dim(0);
        std::vector<int> enc_t(static_cast<std::size_t>(tp), 0);
        std::vector<bool> enc_m(static_cast<std::size_t>(tp), false);
        for (int t = 0; t < tp; ++t) {
            const int src = t * s_enc;
            if (src < item.valid_frames) {
                enc_t[static_cast<std::size_t>(t)] = item.encoder_targets[static_cast<std::size_t>(src)];
                enc_m[static_cast<std::size_t>(t)] = true;
            }
        }
        const int td = out.decoder_logits.dim(0);
        std::vector<int> dec_t(static_cast<std::size_t>(td), 0);
        std::vector<bool> dec_m(static_cast<std::size_t>(td), false);
        for (int t = 0; t < td; ++t) {
            const int src = t * s_tot;
            if (src < item.valid_frames) {
                dec_t[static_cast<std::size_t>(t)] = item.decoder_targets[static_cast<std::size_t>(src)];
                dec_m[static_cast<std::size_t>(t)] = true;
            }
        }

        Tensor grad_p_head;  // stays rank-0 when the encoder head is off
        double ce_enc = 0.0, ce_dec = 0.0;
        if (lambda_enc > 0.0) {
            CeResult enc = softmax_cross_entropy(out.encoder_logits, enc_t, enc_m);
            ce_enc = enc.loss;
            grad_p_head = std::move(enc.grad);
            for (double& v : grad_p_head.data) v *= lambda_enc * inv_b;
        }
        CeResult dec = softmax_cross_entropy(out.decoder_logits, dec_t, dec_m);
        ce_dec = dec.loss;
        for (double& v : dec.grad.data) v *= lambda_dec * inv_b;

        model_backward(params, cache, grad_p_head, dec.grad, grads);
        losses.encoder += ce_enc * inv_b;
        losses.decoder += ce_dec * inv_b;
    }
    losses.total = lambda_enc * losses.encoder + lambda_dec * losses.decoder;
    return losses;
}

namespace {

TrainedModel run_steps(Checkpoint ckpt, const std::string& model_name, const Corpus& corpus,
                       const TrainConfig& config, std::optional<int> locale_filter) {
    TrainedModel model;
    model.name = model_name;

    AdamState& st = *ckpt.adam;
    for (std::int64_t step = st.step + 1; step <= config.steps; ++step) {
        Rng rng(config.seed, "batch/" + model_name, static_cast<std::uint64_t>(step));
        Batch batch = sample_batch(corpus, rng, config.batch_size, locale_filter,
                                   config.locale_balanced);
        TensorMap grads;
        LossBreakdown losses = loss_and_grads(ckpt.params, batch, config.lambda_enc,
                                              config.lambda_dec, grads);
        if (!std::isfinite(losses.total))
            throw TrainingError("divergent loss at step " + std::to_string(step) + " of model " +
                                model_name);
        adam_step(ckpt.params.tensors, grads, st);
        if (step % config.eval_every == 0 || step == config.steps)
            model.trace.push_back({step, losses.total, losses.encoder, losses.decoder});
    }
    model.ckpt = std::move(ckpt);
    return model;
}

Checkpoint fresh_checkpoint(const RegimeSpec& spec, const Corpus& corpus, const TrainConfig& config,
                            const std::string& model_name, std::uint64_t build_seed) {
    Checkpoint ckpt;
    ckpt.params = build(ModelConfig::preset(config.preset), corpus.num_locales(), spec.mode,
                        build_seed);
    ckpt.params.regime = model_name;
    ckpt.adam = AdamState::init(ckpt.params.tensors, config.adam);
    return ckpt;
}

}  // namespace

std::vector<TrainedModel> train(const RegimeSpec& spec, const Corpus& corpus,
                                const TrainConfig& config) {
    config.validate();
    std::vector<TrainedModel> out;
    if (spec.regime == Regime::LocaleSpecific) {
        for (int li = 0; li < corpus.num_locales(); ++li) {
            const std::string name =
                "locale-specific/" + corpus.locales[static_cast<std::size_t>(li)].name;
            Checkpoint ckpt = fresh_checkpoint(spec, corpus, config, name,
                                               config.seed + Rng::fnv1a(name));
            out.push_back(run_steps(std::move(ckpt), name, corpus, config, li));
        }
    } else {
        const std::string name = spec.name();
        Checkpoint ckpt = fresh_checkpoint(spec, corpus, config, name,
                                           config.seed + Rng::fnv1a(name));
        out.push_back(run_steps(std::move(ckpt), name, corpus, config, std::nullopt));
    }
    return out;
}

TrainedModel resume(const Checkpoint& ckpt, const Corpus& corpus, const TrainConfig& config) {
    config.validate();
    if (!ckpt.adam) throw CompatibilityError("checkpoint carries no optimizer state; cannot resume");
    if (ckpt.params.num_locales != corpus.num_locales())
        throw CompatibilityError("checkpoint locale count " +
                                 std::to_string(ckpt.params.num_locales) +
                                 " does not match corpus locale count " +
                                 std::to_string(corpus.num_locales()));
    if (ckpt.params.config.size_preset != config.preset)
        throw CompatibilityError("checkpoint preset " + preset_name(ckpt.params.config.size_preset) +
                                 " does not match configured preset " + preset_name(config.preset));
    if (ckpt.adam->step > config.steps)
        throw CompatibilityError("checkpoint is already past the configured step target");

    const std::string& name = ckpt.params.regime;
    std::optional<int> locale_filter;
    if (name.rfind("locale-specific/", 0) == 0)
        locale_filter = corpus.locale_index(name.substr(16));
    return run_steps(ckpt, name, corpus, config, locale_filter);
}

void write_loss_trace(const std::vector<TracePoint>& trace, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write loss trace '" + path + "'");
    out << "step,loss_total,loss_enc,loss_dec\n";
    char buf[160];
    for (const TracePoint& p : trace) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(p.step), p.total, p.encoder, p.decoder);
        out << buf;
    }
}

}  // namespace kws
