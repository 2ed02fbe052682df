#include "kws/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace kws {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + std::string(key) + "' in " + where + ": " + e.what());
    }
}

CorpusConfig parse_corpus(const json& obj) {
    reject_unknown_keys(obj,
                        {"pool_size", "feature_dim", "frames_per_phoneme_mean",
                         "frames_per_phoneme_jitter", "prototype_spread", "snr_regular_min",
                         "snr_regular_max", "snr_challenging_lo", "snr_challenging_hi",
                         "train_snr_lo", "train_snr_hi", "replica_count", "frame_period_ms",
                         "max_shift_frames", "max_gain_db", "noise_enabled", "decoy_prob",
                         "locales"},
                        "corpus");
    CorpusConfig c;
    read_field(obj, "pool_size", c.pool_size, "corpus");
    read_field(obj, "feature_dim", c.feature_dim, "corpus");
    read_field(obj, "frames_per_phoneme_mean", c.frames_per_phoneme_mean, "corpus");
    read_field(obj, "frames_per_phoneme_jitter", c.frames_per_phoneme_jitter, "corpus");
    read_field(obj, "prototype_spread", c.prototype_spread, "corpus");
    read_field(obj, "snr_regular_min", c.snr_regular_min, "corpus");
    read_field(obj, "snr_regular_max", c.snr_regular_max, "corpus");
    read_field(obj, "snr_challenging_lo", c.snr_challenging_lo, "corpus");
    read_field(obj, "snr_challenging_hi", c.snr_challenging_hi, "corpus");
    read_field(obj, "train_snr_lo", c.train_snr_lo, "corpus");
    read_field(obj, "train_snr_hi", c.train_snr_hi, "corpus");
    read_field(obj, "replica_count", c.replica_count, "corpus");
    read_field(obj, "frame_period_ms", c.frame_period_ms, "corpus");
    read_field(obj, "max_shift_frames", c.max_shift_frames, "corpus");
    read_field(obj, "max_gain_db", c.max_gain_db, "corpus");
    read_field(obj, "noise_enabled", c.noise_enabled, "corpus");
    read_field(obj, "decoy_prob", c.decoy_prob, "corpus");
    return c;
}

std::vector<LocaleSpec> parse_locales(const json& arr) {
    if (!arr.is_array() || arr.empty())
        throw ConfigError("corpus.locales must be a non-empty array");
    std::vector<LocaleSpec> out;
    for (const json& obj : arr) {
        const std::string where = "corpus.locales[" + std::to_string(out.size()) + "]";
        reject_unknown_keys(obj,
                            {"name", "pool", "keyword", "train_pos", "train_neg", "eval_reg_pos",
                             "eval_chall_pos", "stream_neg", "decoy_protected"},
                            where);
        LocaleSpec s;
        if (!obj.contains("name")) throw ConfigError(where + " is missing 'name'");
        read_field(obj, "name", s.name, where);
        read_field(obj, "pool", s.pool, where);
        read_field(obj, "keyword", s.keyword, where);
        read_field(obj, "train_pos", s.train_pos, where);
        read_field(obj, "train_neg", s.train_neg, where);
        read_field(obj, "eval_reg_pos", s.eval_reg_pos, where);
        read_field(obj, "eval_chall_pos", s.eval_chall_pos, where);
        read_field(obj, "stream_neg", s.stream_neg, where);
        read_field(obj, "decoy_protected", s.decoy_protected, where);
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig parse_train(const json& obj) {
    reject_unknown_keys(obj,
                        {"steps", "batch_size", "lr", "beta1", "beta2", "epsilon", "lambda_enc",
                         "lambda_dec", "eval_every", "preset", "locale_balanced"},
                        "train");
    TrainConfig t;
    read_field(obj, "steps", t.steps, "train");
    read_field(obj, "batch_size", t.batch_size, "train");
    read_field(obj, "lr", t.adam.lr, "train");
    read_field(obj, "beta1", t.adam.beta1, "train");
    read_field(obj, "beta2", t.adam.beta2, "train");
    read_field(obj, "epsilon", t.adam.epsilon, "train");
    read_field(obj, "lambda_enc", t.lambda_enc, "train");
    read_field(obj, "lambda_dec", t.lambda_dec, "train");
    read_field(obj, "eval_every", t.eval_every, "train");
    read_field(obj, "locale_balanced", t.locale_balanced, "train");
    if (obj.contains("preset")) {
        std::string name;
        read_field(obj, "preset", name, "train");
        t.preset = preset_from_name(name);
    }
    return t;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + origin + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config " + origin + " must be a JSON object");
    reject_unknown_keys(root, {"corpus", "train", "target_fah", "stream_hours", "seed"}, origin);

    ExperimentConfig cfg;
    if (root.contains("corpus")) {
        cfg.corpus = parse_corpus(root["corpus"]);
        if (root["corpus"].contains("locales")) cfg.locales = parse_locales(root["corpus"]["locales"]);
    }
    if (root.contains("train")) cfg.train = parse_train(root["train"]);
    read_field(root, "target_fah", cfg.target_fah, origin);
    read_field(root, "stream_hours", cfg.stream_hours, origin);
    if (root.contains("seed")) {
        std::uint64_t s = 0;
        read_field(root, "seed", s, origin);
        cfg.seed = s;
    }
    if (cfg.stream_hours <= 0.0) throw ConfigError("stream_hours must be positive");
    cfg.corpus.validate();
    cfg.train.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str(), "'" + path + "'");
}

}  // namespace kws
