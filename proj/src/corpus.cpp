#include "kws/corpus.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "kws/rng.hpp"

namespace kws {

namespace fs = std::filesystem;
using nlohmann::json;

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::EvalReg: return "eval-reg";
        case Split::EvalChall: return "eval-chall";
        case Split::NegStream: return "neg-stream";
    }
    throw ConfigError("unknown split");
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "eval-reg") return Split::EvalReg;
    if (name == "eval-chall") return Split::EvalChall;
    if (name == "neg-stream") return Split::NegStream;
    throw ConfigError("unknown split '" + name + "'");
}

void CorpusConfig::validate() const {
    if (pool_size < 1 || pool_size > 31)
        throw ConfigError("phoneme pool size must be in [1,31] so K+1 classes fit the encoder head");
    if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
    if (frames_per_phoneme_mean < 1) throw ConfigError("frames_per_phoneme_mean must be >= 1");
    if (frames_per_phoneme_jitter < 0 || frames_per_phoneme_jitter >= frames_per_phoneme_mean)
        throw ConfigError("frames_per_phoneme_jitter must be in [0, mean)");
    if (replica_count < 0) throw ConfigError("replica_count must be >= 0");
    if (snr_challenging_hi > snr_regular_min)
        throw ConfigError("SNR tiers overlap: challenging upper bound exceeds regular lower bound");
    if (frame_period_ms <= 0.0) throw ConfigError("frame_period_ms must be positive");
}

Tensor Utterance::feature_tensor(int feature_dim) const {
    Tensor t = Tensor::zeros({frames, feature_dim});
    for (std::size_t i = 0; i < features.size(); ++i) t.data[i] = static_cast<double>(features[i]);
    return t;
}

std::vector<const Utterance*> Corpus::select(std::optional<Split> split,
                                             std::optional<int> locale) const {
    std::vector<const Utterance*> out;
    for (const Utterance& u : utterances) {
        if (split && u.split != *split) continue;
        if (locale && u.locale != *locale) continue;
        out.push_back(&u);
    }
    return out;
}

int Corpus::locale_index(const std::string& name) const {
    for (int i = 0; i < num_locales(); ++i)
        if (locales[static_cast<std::size_t>(i)].name == name) return i;
    throw DataError("unknown locale '" + name + "'");
}

namespace {

std::vector<std::vector<double>> phoneme_prototypes(const CorpusConfig& cfg) {
    std::vector<std::vector<double>> protos(static_cast<std::size_t>(cfg.pool_size) + 1,
                                            std::vector<double>(static_cast<std::size_t>(cfg.feature_dim), 0.0));
    for (int p = 1; p <= cfg.pool_size; ++p) {
        Rng rng(cfg.master_seed, "prototype", static_cast<std::uint64_t>(p));
        for (double& v : protos[static_cast<std::size_t>(p)]) v = rng.normal();
    }
    return protos;  // class 0 (silence) stays at the origin
}

struct Segment {
    int phone;
    int frames;
};

int count_occurrences(const std::vector<int>& ids, const std::vector<int>& pattern) {
    if (pattern.empty() || ids.size() < pattern.size()) return 0;
    int count = 0;
    for (std::size_t i = 0; i + pattern.size() <= ids.size(); ++i) {
        if (std::equal(pattern.begin(), pattern.end(), ids.begin() + static_cast<std::ptrdiff_t>(i)))
            ++count;
    }
    return count;
}

int seg_frames(const CorpusConfig& cfg, Rng& rng) {
    int lo = cfg.frames_per_phoneme_mean - cfg.frames_per_phoneme_jitter;
    int hi = cfg.frames_per_phoneme_mean + cfg.frames_per_phoneme_jitter;
    return std::max(1, rng.uniform_int(lo, hi));
}

// Builds the segment plan for one utterance. Positives contain the keyword
// exactly once; negatives never contain it (decoys from other locales are
// allowed and deliberate).
std::vector<Segment> plan_segments(const CorpusConfig& cfg, const LocaleSpec& spec,
                                   const std::vector<LocaleSpec>& all, bool positive, Rng& rng) {
    const int silence_pad = std::max(6, cfg.max_shift_frames + 1);
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<Segment> segs;
        std::vector<int> ids;
        auto push = [&](int phone, int frames) {
            segs.push_back({phone, frames});
            ids.push_back(phone);
        };
        auto push_filler = [&](int count) {
            for (int i = 0; i < count; ++i) {
                int p = spec.pool[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<int>(spec.pool.size()) - 1))];
                push(p, seg_frames(cfg, rng));
            }
        };

        push(0, silence_pad + rng.uniform_int(0, 3));
        if (positive) {
            push_filler(rng.uniform_int(1, 3));
            for (int p : spec.keyword) push(p, seg_frames(cfg, rng));
            push_filler(rng.uniform_int(0, 2));
        } else {
            const int n_fill = rng.uniform_int(3, 7);
            int decoy_at = -1;
            std::vector<int> decoy;
            if (rng.uniform() < cfg.decoy_prob && all.size() > 1) {
                // pick a conflicting keyword from another locale
                std::vector<const LocaleSpec*> others;
                for (const LocaleSpec& o : all)
                    if (o.name != spec.name && o.keyword != spec.keyword) others.push_back(&o);
                if (!others.empty()) {
                    const LocaleSpec* victim =
                        others[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(others.size()) - 1))];
                    decoy = victim->keyword;
                    // near-decoy for protected keywords: swap the final phoneme
                    // so the decoder-target segment never collides exactly
                    bool protect = victim->decoy_protected;
                    if (protect) {
                        int repl = decoy.back();
                        while (repl == decoy.back()) {
                            repl = spec.pool[static_cast<std::size_t>(
                                rng.uniform_int(0, static_cast<int>(spec.pool.size()) - 1))];
                        }
                        decoy.back() = repl;
                    }
                    decoy_at = rng.uniform_int(0, n_fill);
                }
            }
            for (int i = 0; i <= n_fill; ++i) {
                if (i == decoy_at)
                    for (int p : decoy) push(p, seg_frames(cfg, rng));
                if (i < n_fill) {
                    int p = spec.pool[static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<int>(spec.pool.size()) - 1))];
                    push(p, seg_frames(cfg, rng));
                }
            }
        }
        push(0, silence_pad + rng.uniform_int(0, 3));

        const int occur = count_occurrences(ids, spec.keyword);
        if ((positive && occur == 1) || (!positive && occur == 0)) return segs;
    }
    throw DataError("could not synthesize a valid utterance for locale " + spec.name);
}

Utterance realize(const CorpusConfig& cfg, const std::vector<std::vector<double>>& protos,
                  const LocaleSpec& spec, int locale_idx, const std::vector<Segment>& segs,
                  const std::string& id, bool positive, Split split, Rng& rng) {
    Utterance u;
    u.id = id;
    u.locale = locale_idx;
    u.is_positive = positive;
    u.split = split;

    int total = 0;
    for (const Segment& s : segs) total += s.frames;
    u.frames = total;
    u.features.resize(static_cast<std::size_t>(total) * cfg.feature_dim);
    u.labels.encoder_ids.resize(static_cast<std::size_t>(total));
    u.labels.decoder_targets.assign(static_cast<std::size_t>(total), 0);

    // locate the keyword span and its final phoneme segment
    int kw_start = -1, kw_end = -1, kw_last_start = -1;
    if (positive) {
        // the keyword occurs exactly once as a contiguous segment run
        std::vector<int> ids;
        for (const Segment& s : segs) ids.push_back(s.phone);
        for (std::size_t i = 0; i + spec.keyword.size() <= ids.size(); ++i) {
            if (std::equal(spec.keyword.begin(), spec.keyword.end(),
                           ids.begin() + static_cast<std::ptrdiff_t>(i))) {
                int f = 0;
                for (std::size_t k = 0; k < i; ++k) f += segs[k].frames;
                kw_start = f;
                for (std::size_t k = i; k < i + spec.keyword.size(); ++k) {
                    if (k + 1 == i + spec.keyword.size()) kw_last_start = f;
                    f += segs[k].frames;
                }
                kw_end = f;
                break;
            }
        }
        u.labels.keyword_span = {kw_start, kw_end};
    }

    int frame = 0;
    for (const Segment& s : segs) {
        const std::vector<double>& proto = protos[static_cast<std::size_t>(s.phone)];
        for (int f = 0; f < s.frames; ++f, ++frame) {
            u.labels.encoder_ids[static_cast<std::size_t>(frame)] = static_cast<std::uint8_t>(s.phone);
            if (positive && frame >= kw_last_start && frame < kw_end)
                u.labels.decoder_targets[static_cast<std::size_t>(frame)] = 1;
            float* row = &u.features[static_cast<std::size_t>(frame) * cfg.feature_dim];
            for (int d = 0; d < cfg.feature_dim; ++d) {
                row[d] = static_cast<float>(proto[static_cast<std::size_t>(d)] +
                                            cfg.prototype_spread * rng.normal());
            }
        }
    }
    return u;
}

struct SnrRange {
    double lo, hi;
};

SnrRange snr_range_for(const CorpusConfig& cfg, Split split) {
    switch (split) {
        case Split::EvalReg: return {cfg.snr_regular_min + 0.3, cfg.snr_regular_max};
        case Split::EvalChall: return {cfg.snr_challenging_lo + 0.3, cfg.snr_challenging_hi - 0.3};
        default: return {cfg.train_snr_lo, cfg.train_snr_hi};
    }
}

Utterance augment_core(const Utterance& utt, const CorpusConfig& cfg, const std::string& stream_tag,
                       std::uint64_t stream_idx, const std::string& id_suffix) {
    Rng rng(cfg.master_seed, stream_tag + utt.id, stream_idx);
    Utterance out = utt;
    out.id = utt.id + id_suffix;

    const int t = utt.frames, f = cfg.feature_dim;
    const int shift =
        cfg.max_shift_frames > 0 ? rng.uniform_int(-cfg.max_shift_frames, cfg.max_shift_frames) : 0;

    std::vector<double> work(static_cast<std::size_t>(t) * f);
    for (int r = 0; r < t; ++r) {
        int src = ((r - shift) % t + t) % t;  // circular shift by `shift`
        for (int d = 0; d < f; ++d)
            work[static_cast<std::size_t>(r) * f + d] =
                static_cast<double>(utt.features[static_cast<std::size_t>(src) * f + d]);
    }
    if (shift != 0) {
        for (int r = 0; r < t; ++r) {
            int src = ((r - shift) % t + t) % t;
            out.labels.encoder_ids[static_cast<std::size_t>(r)] =
                utt.labels.encoder_ids[static_cast<std::size_t>(src)];
            out.labels.decoder_targets[static_cast<std::size_t>(r)] =
                utt.labels.decoder_targets[static_cast<std::size_t>(src)];
        }
        if (utt.labels.keyword_span) {
            out.labels.keyword_span = {utt.labels.keyword_span->first + shift,
                                       utt.labels.keyword_span->second + shift};
        }
    }

    out.snr_db = kCleanSnrDb;
    if (cfg.noise_enabled) {
        SnrRange range = snr_range_for(cfg, utt.split);
        const double target_snr = rng.uniform(range.lo, range.hi);
        double sig_power = 0.0;
        for (double v : work) sig_power += v * v;
        sig_power /= static_cast<double>(work.size());
        const double sigma = std::sqrt(sig_power / std::pow(10.0, target_snr / 10.0));
        double noise_power = 0.0;
        for (double& v : work) {
            const double n = sigma * rng.normal();
            noise_power += n * n;
            v += n;
        }
        noise_power /= static_cast<double>(work.size());
        out.snr_db = 10.0 * std::log10(sig_power / noise_power);
    }

    const double gain_db = cfg.max_gain_db > 0.0 ? rng.uniform(-cfg.max_gain_db, cfg.max_gain_db) : 0.0;
    const double scale = std::pow(10.0, gain_db / 20.0);
    for (std::size_t i = 0; i < work.size(); ++i)
        out.features[i] = static_cast<float>(work[i] * scale);
    return out;
}

std::string pad_index(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05d", i);
    return buf;
}

}  // namespace

Utterance augment(const Utterance& utt, const CorpusConfig& config, int replica_index) {
    if (replica_index < 0 || replica_index >= config.replica_count)
        throw ConfigError("replica_index " + std::to_string(replica_index) + " out of [0," +
                          std::to_string(config.replica_count) + ")");
    return augment_core(utt, config, "augment/", static_cast<std::uint64_t>(replica_index),
                        "#r" + std::to_string(replica_index));
}

Corpus generate_corpus(const CorpusConfig& config, const std::vector<LocaleSpec>& locale_specs) {
    config.validate();
    if (locale_specs.empty()) throw ConfigError("at least one locale spec required");
    for (const LocaleSpec& s : locale_specs) {
        if (s.keyword.size() < 3 || s.keyword.size() > 6)
            throw ConfigError("locale " + s.name + ": keyword must be 3-6 phonemes");
        if (s.pool.empty()) throw ConfigError("locale " + s.name + ": empty phoneme pool");
        for (int p : s.pool)
            if (p < 1 || p > config.pool_size)
                throw ConfigError("locale " + s.name + ": pool id out of range");
        for (int p : s.keyword)
            if (std::find(s.pool.begin(), s.pool.end(), p) == s.pool.end())
                throw ConfigError("locale " + s.name + ": keyword phoneme not in locale pool");
        if (s.train_pos < 0 || s.train_neg < 0 || s.eval_reg_pos < 0 || s.eval_chall_pos < 0 ||
            s.stream_neg < 0)
            throw ConfigError("locale " + s.name + ": counts must be >= 0");
    }

    Corpus corpus;
    corpus.config = config;
    corpus.locales = locale_specs;
    const auto protos = phoneme_prototypes(config);

    auto synth = [&](const LocaleSpec& spec, int li, const std::string& id, bool positive,
                     Split split) {
        Rng rng(config.master_seed, "utt/" + id);
        auto segs = plan_segments(config, spec, locale_specs, positive, rng);
        return realize(config, protos, spec, li, segs, id, positive, split, rng);
    };

    for (int li = 0; li < static_cast<int>(locale_specs.size()); ++li) {
        const LocaleSpec& spec = locale_specs[static_cast<std::size_t>(li)];
        for (int i = 0; i < spec.train_pos; ++i) {
            Utterance base =
                synth(spec, li, spec.name + "/train/pos/" + pad_index(i), true, Split::Train);
            for (int r = 0; r < config.replica_count; ++r)
                corpus.utterances.push_back(augment(base, config, r));
            corpus.utterances.push_back(std::move(base));
        }
        for (int i = 0; i < spec.train_neg; ++i) {
            Utterance base =
                synth(spec, li, spec.name + "/train/neg/" + pad_index(i), false, Split::Train);
            for (int r = 0; r < config.replica_count; ++r)
                corpus.utterances.push_back(augment(base, config, r));
            corpus.utterances.push_back(std::move(base));
        }
        for (int i = 0; i < spec.eval_reg_pos; ++i) {
            Utterance base =
                synth(spec, li, spec.name + "/eval-reg/pos/" + pad_index(i), true, Split::EvalReg);
            corpus.utterances.push_back(augment_core(base, config, "evalnoise/", 0, ""));
        }
        for (int i = 0; i < spec.eval_chall_pos; ++i) {
            Utterance base = synth(spec, li, spec.name + "/eval-chall/pos/" + pad_index(i), true,
                                   Split::EvalChall);
            corpus.utterances.push_back(augment_core(base, config, "evalnoise/", 0, ""));
        }
        for (int i = 0; i < spec.stream_neg; ++i) {
            corpus.utterances.push_back(
                synth(spec, li, spec.name + "/neg-stream/neg/" + pad_index(i), false,
                      Split::NegStream));
        }
    }
    return corpus;
}

NegativeStream build_negative_stream(const Corpus& corpus, double target_hours) {
    if (target_hours <= 0.0) throw ConfigError("negative stream target_hours must be positive");
    auto negatives = corpus.select(Split::NegStream);
    if (negatives.empty()) throw DataError("corpus has no neg-stream utterances");
    std::sort(negatives.begin(), negatives.end(),
              [](const Utterance* a, const Utterance* b) { return a->id < b->id; });

    // seeded shuffle (Fisher-Yates with the corpus master seed)
    Rng rng(corpus.config.master_seed, "stream-order");
    for (std::size_t i = negatives.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(negatives[i - 1], negatives[j]);
    }

    const double frames_per_hour = 3600.0 * 1000.0 / corpus.config.frame_period_ms;
    const auto target_frames = static_cast<std::int64_t>(std::llround(target_hours * frames_per_hour));

    NegativeStream stream;
    stream.feature_dim = corpus.config.feature_dim;
    std::int64_t tile_counter = 0;
    while (stream.total_frames < target_frames) {
        const Utterance* base = negatives[static_cast<std::size_t>(tile_counter % negatives.size())];
        Utterance aug = augment_core(*base, corpus.config, "stream/",
                                     static_cast<std::uint64_t>(tile_counter), "");
        ++tile_counter;
        NegativeStream::Tile tile;
        tile.locale = aug.locale;
        tile.frames = aug.frames;
        if (stream.total_frames + tile.frames > target_frames)
            tile.frames = static_cast<int>(target_frames - stream.total_frames);
        tile.features.assign(aug.features.begin(),
                             aug.features.begin() +
                                 static_cast<std::ptrdiff_t>(tile.frames) * stream.feature_dim);
        tile.decoder_targets.assign(aug.labels.decoder_targets.begin(),
                                    aug.labels.decoder_targets.begin() + tile.frames);
        stream.total_frames += tile.frames;
        stream.tiles.push_back(std::move(tile));
    }
    stream.duration_hours = static_cast<double>(stream.total_frames) / frames_per_hour;
    return stream;
}

// ---- binary file formats -------------------------------------------------

namespace {

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint32_t payload_crc(const std::vector<unsigned char>& payload) {
    return static_cast<std::uint32_t>(
        crc32(0L, payload.data(), static_cast<uInt>(payload.size())));
}

void write_file(const std::string& path, const char magic[4],
                const std::vector<unsigned char>& payload, bool with_version) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    out.write(magic, 4);
    if (with_version) {
        std::uint32_t version = 1;
        unsigned char v[4];
        for (int i = 0; i < 4; ++i) v[i] = static_cast<unsigned char>((version >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(v), 4);
    }
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    const std::uint32_t crc = payload_crc(payload);
    unsigned char c[4];
    for (int i = 0; i < 4; ++i) c[i] = static_cast<unsigned char>((crc >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(c), 4);
    if (!out) throw FormatError("write failed for '" + path + "'");
}

std::vector<unsigned char> read_payload(const std::string& path, const char magic[4],
                                        bool with_version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    std::vector<unsigned char> all((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    const std::size_t header = with_version ? 8 : 4;
    if (all.size() < header + 4) throw FormatError("truncated file '" + path + "'");
    if (std::memcmp(all.data(), magic, 4) != 0) throw FormatError("bad magic in '" + path + "'");
    if (with_version) {
        std::uint32_t version = 0;
        for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(all[4 + i]) << (8 * i);
        if (version != 1) throw FormatError("unsupported version in '" + path + "'");
    }
    std::vector<unsigned char> payload(all.begin() + static_cast<std::ptrdiff_t>(header),
                                       all.end() - 4);
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<std::uint32_t>(all[all.size() - 4 + i]) << (8 * i);
    if (payload_crc(payload) != stored)
        throw FormatError("CRC mismatch in '" + path + "' at offset " +
                          std::to_string(all.size() - 4));
    return payload;
}

std::string sanitize_id(const std::string& id) {
    std::string s = id;
    for (char& c : s)
        if (c == '/' || c == '#') c = '_';
    return s;
}

json config_to_json(const CorpusConfig& c) {
    return json{{"pool_size", c.pool_size},
                {"feature_dim", c.feature_dim},
                {"frames_per_phoneme_mean", c.frames_per_phoneme_mean},
                {"frames_per_phoneme_jitter", c.frames_per_phoneme_jitter},
                {"prototype_spread", c.prototype_spread},
                {"snr_regular_min", c.snr_regular_min},
                {"snr_regular_max", c.snr_regular_max},
                {"snr_challenging_lo", c.snr_challenging_lo},
                {"snr_challenging_hi", c.snr_challenging_hi},
                {"train_snr_lo", c.train_snr_lo},
                {"train_snr_hi", c.train_snr_hi},
                {"replica_count", c.replica_count},
                {"frame_period_ms", c.frame_period_ms},
                {"max_shift_frames", c.max_shift_frames},
                {"max_gain_db", c.max_gain_db},
                {"noise_enabled", c.noise_enabled},
                {"decoy_prob", c.decoy_prob},
                {"master_seed", c.master_seed}};
}

CorpusConfig config_from_json(const json& j) {
    CorpusConfig c;
    c.pool_size = j.at("pool_size");
    c.feature_dim = j.at("feature_dim");
    c.frames_per_phoneme_mean = j.at("frames_per_phoneme_mean");
    c.frames_per_phoneme_jitter = j.at("frames_per_phoneme_jitter");
    c.prototype_spread = j.at("prototype_spread");
    c.snr_regular_min = j.at("snr_regular_min");
    c.snr_regular_max = j.at("snr_regular_max");
    c.snr_challenging_lo = j.at("snr_challenging_lo");
    c.snr_challenging_hi = j.at("snr_challenging_hi");
    c.train_snr_lo = j.at("train_snr_lo");
    c.train_snr_hi = j.at("train_snr_hi");
    c.replica_count = j.at("replica_count");
    c.frame_period_ms = j.at("frame_period_ms");
    c.max_shift_frames = j.at("max_shift_frames");
    c.max_gain_db = j.at("max_gain_db");
    c.noise_enabled = j.at("noise_enabled");
    c.decoy_prob = j.at("decoy_prob");
    c.master_seed = j.at("master_seed");
    return c;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "features");
    fs::create_directories(fs::path(dir) / "labels");

    json meta;
    meta["config"] = config_to_json(corpus.config);
    json locs = json::array();
    for (const LocaleSpec& s : corpus.locales) {
        locs.push_back({{"name", s.name},
                        {"pool", s.pool},
                        {"keyword", s.keyword},
                        {"train_pos", s.train_pos},
                        {"train_neg", s.train_neg},
                        {"eval_reg_pos", s.eval_reg_pos},
                        {"eval_chall_pos", s.eval_chall_pos},
                        {"stream_neg", s.stream_neg},
                        {"decoy_protected", s.decoy_protected}});
    }
    meta["locales"] = locs;
    {
        std::ofstream out(fs::path(dir) / "corpus.json", std::ios::trunc);
        if (!out) throw FormatError("cannot write corpus.json in '" + dir + "'");
        out << meta.dump(2) << "\n";
    }

    std::ofstream manifest(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw FormatError("cannot write manifest in '" + dir + "'");

    for (const Utterance& u : corpus.utterances) {
        const std::string base = sanitize_id(u.id);
        const std::string fpath = "features/" + base + ".kwsf";
        const std::string lpath = "labels/" + base + ".kwsl";

        std::vector<unsigned char> fpay;
        put_u32(fpay, static_cast<std::uint32_t>(u.frames));
        put_u32(fpay, static_cast<std::uint32_t>(corpus.config.feature_dim));
        for (float v : u.features) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(fpay, bits);
        }
        write_file((fs::path(dir) / fpath).string(), "KWSF", fpay, true);

        std::vector<unsigned char> lpay;
        put_u32(lpay, static_cast<std::uint32_t>(u.frames));
        lpay.insert(lpay.end(), u.labels.encoder_ids.begin(), u.labels.encoder_ids.end());
        lpay.insert(lpay.end(), u.labels.decoder_targets.begin(), u.labels.decoder_targets.end());
        write_file((fs::path(dir) / lpath).string(), "KWSL", lpay, false);

        json line = {{"id", u.id},
                     {"locale", corpus.locales[static_cast<std::size_t>(u.locale)].name},
                     {"split", split_name(u.split)},
                     {"positive", u.is_positive},
                     {"snr_db", u.snr_db},
                     {"feature_path", fpath},
                     {"label_path", lpath}};
        manifest << line.dump() << "\n";
    }
}

Corpus read_corpus(const std::string& dir) {
    std::ifstream meta_in(fs::path(dir) / "corpus.json");
    if (!meta_in) throw FormatError("missing corpus.json in '" + dir + "'");
    json meta = json::parse(meta_in);

    Corpus corpus;
    corpus.config = config_from_json(meta.at("config"));
    for (const json& j : meta.at("locales")) {
        LocaleSpec s;
        s.name = j.at("name");
        s.pool = j.at("pool").get<std::vector<int>>();
        s.keyword = j.at("keyword").get<std::vector<int>>();
        s.train_pos = j.at("train_pos");
        s.train_neg = j.at("train_neg");
        s.eval_reg_pos = j.at("eval_reg_pos");
        s.eval_chall_pos = j.at("eval_chall_pos");
        s.stream_neg = j.at("stream_neg");
        s.decoy_protected = j.at("decoy_protected");
        corpus.locales.push_back(std::move(s));
    }

    std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw FormatError("missing manifest.jsonl in '" + dir + "'");
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Utterance u;
        u.id = j.at("id");
        u.locale = corpus.locale_index(j.at("locale"));
        u.split = split_from_name(j.at("split"));
        u.is_positive = j.at("positive");
        u.snr_db = j.at("snr_db");

        const std::string fpath = (fs::path(dir) / j.at("feature_path").get<std::string>()).string();
        auto fpay = read_payload(fpath, "KWSF", true);
        if (fpay.size() < 8) throw FormatError("short feature payload in '" + fpath + "'");
        auto rd_u32 = [](const std::vector<unsigned char>& b, std::size_t at) {
            std::uint32_t v = 0;
            for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
            return v;
        };
        u.frames = static_cast<int>(rd_u32(fpay, 0));
        const int fdim = static_cast<int>(rd_u32(fpay, 4));
        if (fdim != corpus.config.feature_dim)
            throw FormatError("feature dim mismatch in '" + fpath + "'");
        const std::size_t need = 8 + static_cast<std::size_t>(u.frames) * fdim * 4;
        if (fpay.size() != need) throw FormatError("feature size mismatch in '" + fpath + "'");
        u.features.resize(static_cast<std::size_t>(u.frames) * fdim);
        for (std::size_t i = 0; i < u.features.size(); ++i) {
            std::uint32_t bits = rd_u32(fpay, 8 + i * 4);
            float v;
            std::memcpy(&v, &bits, 4);
            u.features[i] = v;
        }

        const std::string lpath = (fs::path(dir) / j.at("label_path").get<std::string>()).string();
        auto lpay = read_payload(lpath, "KWSL", false);
        if (lpay.size() != 4 + 2 * static_cast<std::size_t>(u.frames))
            throw FormatError("label size mismatch in '" + lpath + "'");
        if (static_cast<int>(rd_u32(lpay, 0)) != u.frames)
            throw FormatError("label frame count mismatch in '" + lpath + "'");
        u.labels.encoder_ids.assign(lpay.begin() + 4, lpay.begin() + 4 + u.frames);
        u.labels.decoder_targets.assign(lpay.begin() + 4 + u.frames, lpay.end());

        if (u.is_positive) {
            int start = -1, end = -1;
            for (int t = 0; t < u.frames; ++t) {
                if (u.labels.decoder_targets[static_cast<std::size_t>(t)]) {
                    if (start < 0) start = t;
                    end = t + 1;
                }
            }
            if (start >= 0) u.labels.keyword_span = {start, end};
        }
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

std::vector<LocaleSpec> default_desk_locales() {
    std::vector<LocaleSpec> specs;
    auto range = [](int lo, int hi) {
        std::vector<int> v;
        for (int i = lo; i <= hi; ++i) v.push_back(i);
        return v;
    };
    // Two high-resource locales whose keywords conflict with each other's
    // negatives, and two low-resource twins sharing inventory and keyword.
    specs.push_back({"DE_DE", range(1, 12), {2, 5, 8, 11}, 2000, 1000, 100, 100, 400, false});
    specs.push_back({"ES_ES", range(5, 16), {6, 9, 12, 15}, 2000, 1000, 100, 100, 400, false});
    specs.push_back({"DA_DK", range(3, 14), {4, 7, 10, 13}, 200, 100, 100, 100, 400, true});
    specs.push_back({"SV_SE", range(3, 14), {4, 7, 10, 13}, 200, 100, 100, 100, 400, true});
    return specs;
}

}  // namespace kws
