#include "kws/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kws/nn.hpp"
#include "kws/parallel.hpp"

namespace kws {

std::vector<double> keyword_posterior(const ParameterSet& params, const Tensor& features,
                                      const std::optional<LocaleOneHot>& locale) {
    ForwardOutput out = forward(params, features, locale);
    Tensor probs = softmax_rows(out.decoder_logits);
    const int t = probs.dim(0);
    std::vector<double> post(static_cast<std::size_t>(t));
    for (int r = 0; r < t; ++r) post[static_cast<std::size_t>(r)] = probs.at(r, 1);
    return post;
}

std::vector<double> smooth_trailing(const std::vector<double>& trace, int window) {
    if (window < 1) throw ConfigError("smoothing window must be >= 1");
    std::vector<double> out(trace.size());
    double running = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        running += trace[i];
        if (i >= static_cast<std::size_t>(window)) running -= trace[i - static_cast<std::size_t>(window)];
        const int w = std::min<int>(window, static_cast<int>(i) + 1);
        out[i] = running / w;
    }
    return out;
}

UtteranceScore utterance_score(const ParameterSet& params, const Utterance& utt,
                               int smoothing_window) {
    std::optional<LocaleOneHot> locale;
    if (params.mode != ConditioningMode::None) locale.emplace(utt.locale, params.num_locales);
    auto post = keyword_posterior(params, utt.feature_tensor(params.config.feature_dim), locale);
    auto smoothed = smooth_trailing(post, smoothing_window);
    UtteranceScore s;
    s.id = utt.id;
    s.split = split_name(utt.split);
    s.score = smoothed.empty() ? 0.0 : *std::max_element(smoothed.begin(), smoothed.end());
    return s;
}

std::vector<std::int64_t> detect_events(const std::vector<double>& smoothed, double threshold,
                                        int lockout_posterior_frames) {
    if (lockout_posterior_frames < 1) throw ConfigError("lockout must be >= 1");
    std::vector<std::int64_t> events;
    std::int64_t next_allowed = 0;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(smoothed.size()); ++i) {
        if (i < next_allowed) continue;
        if (smoothed[static_cast<std::size_t>(i)] > threshold) {
            events.push_back(i);
            next_allowed = i + lockout_posterior_frames;
        }
    }
    return events;
}

double compute_fah(std::int64_t num_events, double duration_hours) {
    if (duration_hours <= 0.0) throw MetricError("duration_hours must be positive");
    return static_cast<double>(num_events) / duration_hours;
}

double compute_frr(const std::vector<double>& positive_scores, double threshold) {
    if (positive_scores.empty()) throw MetricError("no positive scores to evaluate");
    std::int64_t rejected = 0;
    for (double s : positive_scores)
        if (s < threshold) ++rejected;  // score == threshold counts as accepted
    return static_cast<double>(rejected) / static_cast<double>(positive_scores.size());
}

StreamTrace stream_trace(const ParameterSet& params, const NegativeStream& stream,
                         int smoothing_window, int jobs) {
    const int n = static_cast<int>(stream.tiles.size());
    std::vector<std::vector<double>> per_tile(static_cast<std::size_t>(n));
    parallel_for(n, jobs, [&](int i) {
        const auto& tile = stream.tiles[static_cast<std::size_t>(i)];
        Tensor feats = Tensor::zeros({tile.frames, stream.feature_dim});
        for (std::size_t k = 0; k < tile.features.size(); ++k)
            feats.data[k] = static_cast<double>(tile.features[k]);
        std::optional<LocaleOneHot> locale;
        if (params.mode != ConditioningMode::None) locale.emplace(tile.locale, params.num_locales);
        per_tile[static_cast<std::size_t>(i)] = keyword_posterior(params, feats, locale);
    });

    std::vector<double> raw;
    for (const auto& t : per_tile) raw.insert(raw.end(), t.begin(), t.end());

    StreamTrace trace;
    trace.smoothed = smooth_trailing(raw, smoothing_window);
    trace.duration_hours = stream.duration_hours;
    trace.lockout = std::max(1, kLockoutInputFrames / params.config.total_stride());
    return trace;
}

std::vector<double> candidate_thresholds(const std::vector<double>& smoothed) {
    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < smoothed.size(); ++i) {
        if (smoothed[i] > smoothed[i - 1] && smoothed[i] >= smoothed[i + 1]) peaks.push_back(smoothed[i]);
    }
    std::sort(peaks.begin(), peaks.end());
    peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());
    return peaks;
}

OperatingPoint calibrate_threshold(const StreamTrace& trace, double target_fah) {
    if (target_fah <= 0.0)
        throw CalibrationError("target FAh " + std::to_string(target_fah) +
                               " is unreachable; it must be positive");
    OperatingPoint op;
    op.target_fah = target_fah;

    auto fah_at = [&](double threshold) {
        return compute_fah(
            static_cast<std::int64_t>(detect_events(trace.smoothed, threshold, trace.lockout).size()),
            trace.duration_hours);
    };

    const auto candidates = candidate_thresholds(trace.smoothed);
    if (candidates.empty()) {
        op.threshold = 0.0;
        op.achieved_fah = fah_at(0.0);
        if (op.achieved_fah > target_fah)
            throw CalibrationError("no candidate threshold reaches the target FAh");
        return op;
    }

    // FAh is non-increasing in the threshold: binary search for the smallest
    // admissible candidate, i.e. the calibration is tight by construction.
    std::size_t lo = 0, hi = candidates.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (fah_at(candidates[mid]) <= target_fah)
            hi = mid;
        else
            lo = mid + 1;
    }
    if (lo == candidates.size())
        throw CalibrationError("even the largest candidate threshold exceeds the target FAh");
    op.threshold = candidates[lo];
    op.achieved_fah = fah_at(op.threshold);
    return op;
}

std::vector<RocPoint> roc_curve(const StreamTrace& trace,
                                const std::vector<double>& positive_scores, double fah_max) {
    auto fah_at = [&](double threshold) {
        return compute_fah(
            static_cast<std::int64_t>(detect_events(trace.smoothed, threshold, trace.lockout).size()),
            trace.duration_hours);
    };

    const auto candidates = candidate_thresholds(trace.smoothed);
    std::vector<RocPoint> points;
    if (candidates.empty()) {
        points.push_back({0.0, fah_at(0.0), compute_frr(positive_scores, 0.0)});
        return points;
    }
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        const double fah = fah_at(*it);
        if (fah > fah_max) break;
        points.push_back({*it, fah, compute_frr(positive_scores, *it)});
    }
    std::reverse(points.begin(), points.end());  // FAh ascending
    return points;
}

ScoreSet score_eval_positives(const ParameterSet& params, const Corpus& corpus,
                              std::optional<int> locale_filter, int jobs) {
    std::vector<const Utterance*> utts;
    for (const Utterance& u : corpus.utterances) {
        if (u.split != Split::EvalReg && u.split != Split::EvalChall) continue;
        if (!u.is_positive) continue;
        if (locale_filter && u.locale != *locale_filter) continue;
        utts.push_back(&u);
    }
    std::sort(utts.begin(), utts.end(),
              [](const Utterance* a, const Utterance* b) { return a->id < b->id; });

    ScoreSet set;
    set.scores.resize(utts.size());
    parallel_for(static_cast<int>(utts.size()), jobs, [&](int i) {
        const Utterance* u = utts[static_cast<std::size_t>(i)];
        UtteranceScore s = utterance_score(params, *u);
        s.locale = corpus.locales[static_cast<std::size_t>(u->locale)].name;
        set.scores[static_cast<std::size_t>(i)] = std::move(s);
    });
    return set;
}

namespace {

std::vector<double> scores_for(const ScoreSet& set, const std::string& locale, Split split) {
    std::vector<double> out;
    const std::string sname = split_name(split);
    for (const UtteranceScore& s : set.scores)
        if (s.locale == locale && s.split == sname) out.push_back(s.score);
    return out;
}

}  // namespace

EvalReport build_report(const std::vector<VariantModels>& variants, const Corpus& corpus,
                        const NegativeStream& stream, double target_fah, int jobs,
                        std::vector<std::vector<ScoreSet>>* score_cache) {
    EvalReport report;
    if (score_cache) score_cache->clear();
    for (const LocaleSpec& s : corpus.locales) report.locales.push_back(s.name);
    const int n = corpus.num_locales();

    for (const VariantModels& variant : variants) {
        report.variants.push_back(variant.name);
        std::array<std::vector<double>, 2> frr;
        std::vector<OperatingPoint> ops;
        std::vector<ScoreSet> cached_sets;

        const bool per_locale = variant.models.size() > 1;
        if (per_locale && static_cast<int>(variant.models.size()) != n)
            throw ReportError("variant " + variant.name + " has " +
                              std::to_string(variant.models.size()) + " models for " +
                              std::to_string(n) + " locales");

        std::optional<OperatingPoint> pooled_op;
        std::optional<ScoreSet> pooled_scores;
        if (!per_locale) {
            if (variant.models.empty() || !variant.models[0])
                throw ReportError("missing checkpoint for variant " + variant.name);
            StreamTrace trace = stream_trace(*variant.models[0], stream, kSmoothingWindow, jobs);
            pooled_op = calibrate_threshold(trace, target_fah);
            pooled_scores = score_eval_positives(*variant.models[0], corpus, std::nullopt, jobs);
            ops.push_back(*pooled_op);
            if (score_cache) cached_sets.push_back(*pooled_scores);
        }

        for (int li = 0; li < n; ++li) {
            const std::string& lname = report.locales[static_cast<std::size_t>(li)];
            OperatingPoint op;
            ScoreSet local_scores;
            if (per_locale) {
                const ParameterSet* model = variant.models[static_cast<std::size_t>(li)];
                if (!model)
                    throw ReportError("missing checkpoint for variant " + variant.name +
                                      ", locale " + lname);
                StreamTrace trace = stream_trace(*model, stream, kSmoothingWindow, jobs);
                op = calibrate_threshold(trace, target_fah);
                local_scores = score_eval_positives(*model, corpus, li, jobs);
                ops.push_back(op);
                if (score_cache) cached_sets.push_back(local_scores);
            } else {
                op = *pooled_op;
            }
            const ScoreSet& scores = per_locale ? local_scores : *pooled_scores;
            for (int cond = 0; cond < 2; ++cond) {
                const Split split = cond == 0 ? Split::EvalReg : Split::EvalChall;
                auto vals = scores_for(scores, lname, split);
                if (vals.empty())
                    throw ReportError("no eval scores for variant " + variant.name + ", locale " +
                                      lname + ", split " + split_name(split));
                frr[static_cast<std::size_t>(cond)].push_back(100.0 *
                                                              compute_frr(vals, op.threshold));
            }
        }

        std::array<double, 2> avg{0.0, 0.0};
        for (int cond = 0; cond < 2; ++cond) {
            for (double v : frr[static_cast<std::size_t>(cond)]) avg[static_cast<std::size_t>(cond)] += v;
            avg[static_cast<std::size_t>(cond)] /= n;
        }
        report.frr_percent.push_back(std::move(frr));
        report.averages.push_back(avg);
        report.operating_points.push_back(std::move(ops));
        if (score_cache) score_cache->push_back(std::move(cached_sets));
    }
    return report;
}

namespace {

const char* condition_name(int cond) { return cond == 0 ? "eval-reg" : "eval-chall"; }

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "variant,condition";
    for (const std::string& l : locales) out << "," << l;
    out << ",AVERAGE\n";
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (int cond = 0; cond < 2; ++cond) {
            out << variants[v] << "," << condition_name(cond);
            for (double x : frr_percent[v][static_cast<std::size_t>(cond)])
                out << "," << fmt_double(x);
            out << "," << fmt_double(averages[v][static_cast<std::size_t>(cond)]) << "\n";
        }
    }
    return out.str();
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    char buf[64];
    for (int cond = 0; cond < 2; ++cond) {
        out << (cond == 0 ? "Eval-reg" : "Eval-chall") << " FRR (%)\n";
        std::snprintf(buf, sizeof buf, "  %-24s", "Model");
        out << buf;
        for (const std::string& l : locales) {
            std::snprintf(buf, sizeof buf, "%10s", l.c_str());
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%10s", "AVERAGE");
        out << buf << "\n";
        for (std::size_t v = 0; v < variants.size(); ++v) {
            std::snprintf(buf, sizeof buf, "  %-24s", variants[v].c_str());
            out << buf;
            for (double x : frr_percent[v][static_cast<std::size_t>(cond)]) {
                std::snprintf(buf, sizeof buf, "%10.2f", x);
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "%10.2f", averages[v][static_cast<std::size_t>(cond)]);
            out << buf << "\n";
        }
        out << "\n";
    }
    return out.str();
}

EvalReport EvalReport::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty report CSV");

    auto split_line = [](const std::string& s) {
        std::vector<std::string> fields;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        fields.push_back(cur);
        return fields;
    };

    EvalReport report;
    auto header = split_line(line);
    if (header.size() < 4 || header[0] != "variant" || header[1] != "condition" ||
        header.back() != "AVERAGE")
        throw FormatError("malformed report CSV header");
    for (std::size_t i = 2; i + 1 < header.size(); ++i) report.locales.push_back(header[i]);

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != header.size()) throw FormatError("malformed report CSV row");
        const std::string& variant = fields[0];
        const int cond = fields[1] == "eval-reg" ? 0 : fields[1] == "eval-chall" ? 1 : -1;
        if (cond < 0) throw FormatError("unknown condition '" + fields[1] + "' in report CSV");
        if (report.variants.empty() || report.variants.back() != variant) {
            report.variants.push_back(variant);
            report.frr_percent.emplace_back();
            report.averages.push_back({0.0, 0.0});
            report.operating_points.emplace_back();
        }
        auto& row = report.frr_percent.back()[static_cast<std::size_t>(cond)];
        for (std::size_t i = 2; i + 1 < fields.size(); ++i) row.push_back(std::stod(fields[i]));
        report.averages.back()[static_cast<std::size_t>(cond)] = std::stod(fields.back());
    }
    return report;
}

std::string similarity_csv(const ParameterSet& params,
                           const std::vector<std::string>& locale_names) {
    Tensor sim = locale_similarity(params);
    const int n = sim.dim(0);
    if (static_cast<int>(locale_names.size()) != n)
        throw ShapeError("locale name count does not match similarity matrix size");
    std::ostringstream out;
    out << "locale";
    for (const std::string& l : locale_names) out << "," << l;
    out << "\n";
    for (int i = 0; i < n; ++i) {
        out << locale_names[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) out << "," << fmt_double(sim.at(i, j));
        out << "\n";
    }
    return out.str();
}

ReportDiff compare_reports(const EvalReport& a, const EvalReport& b) {
    if (a.locales != b.locales || a.variants.size() != b.variants.size())
        throw ReportError("report grids do not match");
    ReportDiff diff;
    double sum_a = 0.0, sum_b = 0.0;
    std::int64_t cells = 0;
    for (std::size_t v = 0; v < a.variants.size(); ++v) {
        std::array<std::vector<double>, 2> abs_row, rel_row;
        for (int cond = 0; cond < 2; ++cond) {
            const auto& ra = a.frr_percent[v][static_cast<std::size_t>(cond)];
            const auto& rb = b.frr_percent[v][static_cast<std::size_t>(cond)];
            if (ra.size() != rb.size() || ra.size() != a.locales.size())
                throw ReportError("report grids do not match");
            for (std::size_t i = 0; i < ra.size(); ++i) {
                abs_row[static_cast<std::size_t>(cond)].push_back(ra[i] - rb[i]);
                rel_row[static_cast<std::size_t>(cond)].push_back(
                    ra[i] > 0.0 ? (ra[i] - rb[i]) / ra[i] : 0.0);
                sum_a += ra[i];
                sum_b += rb[i];
                ++cells;
            }
        }
        diff.abs_delta.push_back(std::move(abs_row));
        diff.rel_delta.push_back(std::move(rel_row));
    }
    diff.avg_relative_reduction = sum_a > 0.0 ? (sum_a - sum_b) / sum_a : 0.0;
    return diff;
}

}  // namespace kws
