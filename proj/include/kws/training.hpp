#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kws/checkpoint.hpp"
#include "kws/corpus.hpp"
#include "kws/model.hpp"
#include "kws/rng.hpp"

namespace kws {

enum class Regime { LocaleSpecific, Universal, Conditioned };

struct RegimeSpec {
    Regime regime = Regime::Universal;
    ConditioningMode mode = ConditioningMode::None;  // Concat or FiLM when Conditioned

    static RegimeSpec from_name(const std::string& name);  // locale-specific|universal|concat|film
    std::string name() const;
};

struct TrainConfig {
    int steps = 10000;  // total step target (resume continues toward it)
    int batch_size = 3;
    AdamConfig adam;
    double lambda_enc = 1.0;
    double lambda_dec = 1.0;
    std::uint64_t seed = 1;
    int eval_every = 100;
    SizePreset preset = SizePreset::Desk;
    bool locale_balanced = false;  // ablation: sample locales uniformly instead of by volume

    void validate() const;
};

struct BatchItem {
    Tensor features;  // padded to the batch frame count
    std::vector<int> encoder_targets;
    std::vector<int> decoder_targets;
    std::vector<bool> mask;  // true for valid (unpadded) input frames
    int locale = 0;
    int valid_frames = 0;
};

struct Batch {
    std::vector<BatchItem> items;
    int frames = 0;  // common padded length
};

Batch sample_batch(const Corpus& corpus, Rng& rng, int batch_size,
                   std::optional<int> locale_filter = std::nullopt, bool locale_balanced = false);

struct LossBreakdown {
    double total = 0.0;
    double encoder = 0.0;
    double decoder = 0.0;
};

LossBreakdown loss_and_grads(const ParameterSet& params, const Batch& batch, double lambda_enc,
                             double lambda_dec, TensorMap& grads);

struct TracePoint {
    std::int64_t step = 0;
    double total = 0.0;
    double encoder = 0.0;
    double decoder = 0.0;
};

struct TrainedModel {
    std::string name;  // regime name, suffixed with the locale for locale-specific
    Checkpoint ckpt;
    std::vector<TracePoint> trace;
};

// LocaleSpecific returns one model per locale; the other regimes return one.
std::vector<TrainedModel> train(const RegimeSpec& spec, const Corpus& corpus,
                                const TrainConfig& config);

// Continues a checkpoint toward config.steps. A 100-step run resumed for 100
// more is bitwise identical to a straight 200-step run.
TrainedModel resume(const Checkpoint& ckpt, const Corpus& corpus, const TrainConfig& config);

void write_loss_trace(const std::vector<TracePoint>& trace, const std::string& path);

}  // namespace kws
