#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kws/corpus.hpp"
#include "kws/training.hpp"

namespace kws {

// One JSON document drives a whole experiment; command-line flags override
// individual fields. See docs/config-schema.md for the schema.
struct ExperimentConfig {
    CorpusConfig corpus;
    std::vector<LocaleSpec> locales;  // empty -> default desk locale set
    TrainConfig train;
    double target_fah = 0.17;
    double stream_hours = 2.0;
    std::optional<std::uint64_t> seed;  // top-level seed, feeds corpus + train
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& origin);

}  // namespace kws
