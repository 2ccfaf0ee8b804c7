#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tslab/io.hpp"

// Open-set scoring and evaluation metrics. Samples are scored by their
// maximum raw logit (no softmax, no temperature at inference); known
// samples are the positive class for detection metrics.

namespace tslab {

inline constexpr int kUnknownLabel = -1;

struct ScoredPrediction {
    int predicted_class = 0;           // index into the known-class list
    double score = 0.0;                // max logit
    int true_label = kUnknownLabel;    // known-class index, or kUnknownLabel
};

struct EvalResult {
    double accuracy = 0.0;
    double auroc = 0.0;
    double oscr = 0.0;
    std::size_t n_known = 0;
    std::size_t n_unknown = 0;
};

// Argmax with ties broken toward the lowest index.
inline std::pair<int, double> max_logit_score(std::span<const double> logits_row) {
    if (logits_row.empty()) throw std::domain_error("max_logit_score: empty logits row");
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits_row.size(); ++j) {
        if (logits_row[j] > logits_row[best]) best = j;
    }
    return {static_cast<int>(best), logits_row[best]};
}

inline double accuracy(std::span<const ScoredPrediction> known_preds) {
    if (known_preds.empty()) throw std::domain_error("accuracy: empty prediction list");
    std::size_t correct = 0;
    for (const auto& p : known_preds) {
        if (p.true_label == kUnknownLabel)
            throw std::domain_error("accuracy: unknown-labeled sample in closed-set input");
        if (p.predicted_class == p.true_label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(known_preds.size());
}

// Mann-Whitney AUROC via mid-ranks: P(known > unknown) + P(equal)/2.
// Equals the pairwise-count statistic exactly, ties included: both routes
// produce the same half-integer numerator before the single division.
inline double auroc(std::span<const double> scores_known,
                    std::span<const double> scores_unknown) {
    if (scores_known.empty() || scores_unknown.empty())
        throw std::domain_error("auroc: both score lists must be non-empty");
    const std::size_t nk = scores_known.size();
    const std::size_t nu = scores_unknown.size();
    struct Item {
        double score;
        bool known;
    };
    std::vector<Item> items;
    items.reserve(nk + nu);
    for (double s : scores_known) items.push_back({s, true});
    for (double s : scores_unknown) items.push_back({s, false});
    std::sort(items.begin(), items.end(),
              [](const Item& a, const Item& b) { return a.score < b.score; });

    double known_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        while (j < items.size() && items[j].score == items[i].score) ++j;
        // 1-based ranks i+1 .. j share the mid-rank (i+1+j)/2.
        const double mid_rank = static_cast<double>(i + 1 + j) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (items[k].known) known_rank_sum += mid_rank;
        }
        i = j;
    }
    const double u = known_rank_sum - static_cast<double>(nk) * static_cast<double>(nk + 1) / 2.0;
    return u / (static_cast<double>(nk) * static_cast<double>(nu));
}

// Area under the correct-classification-rate vs false-positive-rate curve.
// Thresholds sweep the union of observed scores descending with strict
// score > threshold; the curve is closed at (0,0) and (1, accuracy) and
// integrated by the trapezoidal rule.
inline double oscr(std::span<const ScoredPrediction> known_preds,
                   std::span<const double> unknown_scores) {
    if (known_preds.empty() || unknown_scores.empty())
        throw std::domain_error("oscr: both sides must be non-empty");
    const double nk = static_cast<double>(known_preds.size());
    const double nu = static_cast<double>(unknown_scores.size());

    std::vector<std::pair<double, bool>> known;  // (score, correct)
    known.reserve(known_preds.size());
    for (const auto& p : known_preds) {
        if (p.true_label == kUnknownLabel)
            throw std::domain_error("oscr: unknown-labeled sample in closed-set input");
        known.emplace_back(p.score, p.predicted_class == p.true_label);
    }
    std::sort(known.begin(), known.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> unknown(unknown_scores.begin(), unknown_scores.end());
    std::sort(unknown.begin(), unknown.end(), std::greater<>());

    std::vector<double> thresholds;
    thresholds.reserve(known.size() + unknown.size());
    for (const auto& [s, c] : known) thresholds.push_back(s);
    thresholds.insert(thresholds.end(), unknown.begin(), unknown.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    double area = 0.0;
    double prev_fpr = 0.0;
    double prev_ccr = 0.0;
    std::size_t ik = 0;       // known samples with score > theta
    std::size_t correct = 0;  // correctly classified among them
    std::size_t iu = 0;       // unknown samples with score > theta
    for (double theta : thresholds) {
        while (ik < known.size() && known[ik].first > theta) {
            if (known[ik].second) ++correct;
            ++ik;
        }
        while (iu < unknown.size() && unknown[iu] > theta) ++iu;
        const double fpr = static_cast<double>(iu) / nu;
        const double ccr = static_cast<double>(correct) / nk;
        area += (fpr - prev_fpr) * (prev_ccr + ccr) / 2.0;
        prev_fpr = fpr;
        prev_ccr = ccr;
    }
    // Close at theta -> -inf: everything admitted, CCR = closed-set accuracy.
    std::size_t total_correct = 0;
    for (const auto& [s, c] : known)
        if (c) ++total_correct;
    const double final_ccr = static_cast<double>(total_correct) / nk;
    area += (1.0 - prev_fpr) * (prev_ccr + final_ccr) / 2.0;
    return area;
}

// Sweep statistic: metric under the candidate schedule minus the best
// constant-temperature baseline. Negative values are meaningful.
inline double improvement(double metric_neg, std::span<const double> metric_consts) {
    if (metric_consts.empty())
        throw std::domain_error("improvement: baseline list must be non-empty");
    return metric_neg - *std::max_element(metric_consts.begin(), metric_consts.end());
}

// ---- scores file ----------------------------------------------------------

struct ScoreRow {
    long long sample_id = 0;
    int true_label = kUnknownLabel;  // original class id, -1 for unknown
    int predicted_class = 0;         // original class id of the argmax
    double score = 0.0;
};

inline constexpr const char* kScoresCsvHeader = "sample_id,true_label,predicted_class,score";

inline std::string scores_to_csv(std::span<const ScoreRow> rows) {
    std::ostringstream out;
    out << kScoresCsvHeader << "\n";
    for (const auto& r : rows) {
        out << r.sample_id << ',' << r.true_label << ',' << r.predicted_class << ','
            << format_double(r.score) << "\n";
    }
    return out.str();
}

inline std::vector<ScoreRow> scores_from_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != split_csv_line(kScoresCsvHeader))
        throw std::runtime_error("scores csv: bad header");
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 4) throw std::runtime_error("scores csv: bad row: " + line);
        ScoreRow r;
        r.sample_id = parse_int(f[0]);
        r.true_label = static_cast<int>(parse_int(f[1]));
        r.predicted_class = static_cast<int>(parse_int(f[2]));
        r.score = parse_double(f[3]);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace tslab
