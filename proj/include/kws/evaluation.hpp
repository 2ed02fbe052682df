#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kws/corpus.hpp"
#include "kws/model.hpp"

namespace kws {

// Detection scorer conventions, shared by every model variant:
//  - per-frame keyword posterior from the decoder softmax,
//  - trailing moving average of width min(30, frames so far),
//  - utterance score = max smoothed posterior (score == threshold accepts),
//  - stream events fire where the smoothed posterior is strictly above the
//    threshold, with a 100-input-frame lockout between events.
inline constexpr int kSmoothingWindow = 30;   // posterior frames
inline constexpr int kLockoutInputFrames = 100;  // ~1 s at 10 ms/frame

struct UtteranceScore {
    std::string id;
    std::string locale;
    std::string split;
    double score = 0.0;
};

struct OperatingPoint {
    double threshold = 0.0;
    double achieved_fah = 0.0;
    double target_fah = 0.17;
};

struct RocPoint {
    double threshold = 0.0;
    double fah = 0.0;
    double frr = 0.0;
};

// Keyword posterior per decoder frame (softmax probability of the keyword class).
std::vector<double> keyword_posterior(const ParameterSet& params, const Tensor& features,
                                      const std::optional<LocaleOneHot>& locale);

std::vector<double> smooth_trailing(const std::vector<double>& trace, int window);

UtteranceScore utterance_score(const ParameterSet& params, const Utterance& utt,
                               int smoothing_window = kSmoothingWindow);

// Event start indices (posterior frames) for a smoothed trace.
std::vector<std::int64_t> detect_events(const std::vector<double>& smoothed, double threshold,
                                        int lockout_posterior_frames);

double compute_fah(std::int64_t num_events, double duration_hours);

// Fraction of positive scores strictly below the threshold.
double compute_frr(const std::vector<double>& positive_scores, double threshold);

// Smoothed posterior over the pooled negative stream, scored tile by tile so
// conditioned models see each tile's locale input.
struct StreamTrace {
    std::vector<double> smoothed;
    double duration_hours = 0.0;
    int lockout = 1;  // in posterior frames
};

StreamTrace stream_trace(const ParameterSet& params, const NegativeStream& stream,
                         int smoothing_window = kSmoothingWindow, int jobs = 1);

// Candidate thresholds: values of interior local maxima, ascending, deduplicated.
std::vector<double> candidate_thresholds(const std::vector<double>& smoothed);

OperatingPoint calibrate_threshold(const StreamTrace& trace, double target_fah);

std::vector<RocPoint> roc_curve(const StreamTrace& trace,
                                const std::vector<double>& positive_scores, double fah_max = 0.5);

// ---- Table-1-style report -------------------------------------------------

struct VariantModels {
    std::string name;
    // one entry for pooled variants; one per locale for locale-specific
    std::vector<const ParameterSet*> models;
};

struct EvalReport {
    std::vector<std::string> variants;
    std::vector<std::string> locales;
    // frr_percent[variant][condition][locale]; condition 0 = Eval-reg, 1 = Eval-chall
    std::vector<std::array<std::vector<double>, 2>> frr_percent;
    std::vector<std::array<double, 2>> averages;
    std::vector<std::vector<OperatingPoint>> operating_points;  // per variant (per locale if N)

    std::string to_csv() const;
    std::string to_text() const;
    static EvalReport from_csv(const std::string& text);
};

struct ScoreSet {
    std::vector<UtteranceScore> scores;  // sorted by utterance id
};

ScoreSet score_eval_positives(const ParameterSet& params, const Corpus& corpus,
                              std::optional<int> locale_filter, int jobs = 1);

// score_cache, when given, receives the per-utterance scores behind each FRR
// cell: one ScoreSet per variant for pooled variants, one per locale otherwise.
EvalReport build_report(const std::vector<VariantModels>& variants, const Corpus& corpus,
                        const NegativeStream& stream, double target_fah, int jobs = 1,
                        std::vector<std::vector<ScoreSet>>* score_cache = nullptr);

// N x N FiLM-row correlation matrix as CSV with locale-name headers.
std::string similarity_csv(const ParameterSet& params, const std::vector<std::string>& locale_names);

struct ReportDiff {
    // deltas[variant][condition][locale]: a - b (absolute, FRR percent)
    std::vector<std::array<std::vector<double>, 2>> abs_delta;
    std::vector<std::array<std::vector<double>, 2>> rel_delta;  // (a-b)/a where a > 0
    double avg_relative_reduction = 0.0;  // (mean(a) - mean(b)) / mean(a)
};

ReportDiff compare_reports(const EvalReport& a, const EvalReport& b);

}  // namespace kws
