#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

enum class Split { Train, EvalReg, EvalChall, NegStream };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct LocaleSpec {
    std::string name;
    std::vector<int> pool;     // phoneme ids from the global pool (1-based; 0 is silence)
    std::vector<int> keyword;  // 3-6 phoneme ids drawn from the pool
    int train_pos = 0;
    int train_neg = 0;
    int eval_reg_pos = 0;
    int eval_chall_pos = 0;
    int stream_neg = 0;  // negatives feeding the pooled detection stream
    // When true, other locales embed only a corrupted copy of this locale's
    // keyword as a decoy (final phoneme swapped), never the exact sequence.
    bool decoy_protected = false;
};

struct CorpusConfig {
    int pool_size = 20;  // K phoneme classes; +1 silence class must fit the 32-wide encoder head
    int feature_dim = 40;
    int frames_per_phoneme_mean = 6;
    int frames_per_phoneme_jitter = 2;
    double prototype_spread = 0.3;  // within-phoneme feature jitter (std dev)
    double snr_regular_min = 12.0;
    double snr_regular_max = 20.0;
    double snr_challenging_lo = 0.0;
    double snr_challenging_hi = 6.0;  // exclusive
    double train_snr_lo = 3.0;
    double train_snr_hi = 18.0;
    int replica_count = 5;
    double frame_period_ms = 10.0;
    int max_shift_frames = 5;
    double max_gain_db = 3.0;
    bool noise_enabled = true;
    double decoy_prob = 0.5;  // chance a negative embeds a conflicting cross-locale keyword
    std::uint64_t master_seed = 1;

    void validate() const;
};

// Sentinel snr for utterances with no injected noise.
inline constexpr double kCleanSnrDb = 99.0;

struct FrameLabels {
    std::vector<std::uint8_t> encoder_ids;      // phoneme id per frame, 0 = silence
    std::vector<std::uint8_t> decoder_targets;  // 1 inside the final keyword phoneme segment
    // [start, end) frame indices of the keyword span, absent for negatives
    std::optional<std::pair<int, int>> keyword_span;

    bool operator==(const FrameLabels&) const = default;
};

struct Utterance {
    std::string id;
    int locale = 0;
    int frames = 0;
    std::vector<float> features;  // frames x feature_dim, row-major
    FrameLabels labels;
    bool is_positive = false;
    Split split = Split::Train;
    double snr_db = kCleanSnrDb;

    Tensor feature_tensor(int feature_dim) const;
};

struct Corpus {
    CorpusConfig config;
    std::vector<LocaleSpec> locales;
    std::vector<Utterance> utterances;

    int num_locales() const { return static_cast<int>(locales.size()); }
    std::vector<const Utterance*> select(std::optional<Split> split,
                                         std::optional<int> locale = std::nullopt) const;
    int locale_index(const std::string& name) const;
};

Corpus generate_corpus(const CorpusConfig& config, const std::vector<LocaleSpec>& locale_specs);

// One augmented replica: circular shift, additive feature-space noise at a
// sampled SNR, and a global gain offset. Labels shift with the features.
Utterance augment(const Utterance& utt, const CorpusConfig& config, int replica_index);

struct NegativeStream {
    int feature_dim = 40;
    std::int64_t total_frames = 0;
    double duration_hours = 0.0;
    struct Tile {
        int locale = 0;
        int frames = 0;
        std::vector<float> features;
        std::vector<std::uint8_t> decoder_targets;
    };
    std::vector<Tile> tiles;
};

NegativeStream build_negative_stream(const Corpus& corpus, double target_hours);

void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus read_corpus(const std::string& dir);

// The default desk-scale experiment: four locales sharing one phoneme pool,
// two high-resource, two low-resource twins, with cross-locale keyword decoys
// planted in the high-resource negatives.
std::vector<LocaleSpec> default_desk_locales();

}  // namespace kws
