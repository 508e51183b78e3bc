#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "socratic/tokenize.hpp"

namespace socratic {

// Longest common subsequence length, O(|a|*|b|) dynamic programming.
int lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// LCS-based overlap on tokenized inputs: precision = LCS/|candidate|,
// recall = LCS/|reference|. All zeros when either side is empty.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);

// Maximum-weight matching in the complete bipartite graph given by an m x n
// matrix of nonnegative weights (rectangular Kuhn-Munkres after zero
// padding). Zero-weight edges never appear in the result; among optimal
// matchings the lexicographically smallest pair list is returned.
std::vector<std::pair<int, int>> max_weight_matching(
    const std::vector<std::vector<double>>& weights);

struct MatchedPair {
    int generated = 0;
    int ground_truth = 0;
    double weight = 0.0;
};

struct MetricReport {
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;  // both input sets empty
    std::vector<MatchedPair> matched_pairs;
};

using SimilarityFn = std::function<double(std::string_view, std::string_view)>;

SimilarityFn rouge_l_f1_weight();
SimilarityFn rouge_l_precision_weight();
SimilarityFn rouge_l_recall_weight();

// Matching-based accounting for one dialogue turn: TP is the summed matched
// weight, every matched edge adds (1 - w) to FP, unmatched generated
// questions add 1 to FP each, unmatched references add 1 to FN each.
MetricReport turn_metrics(std::span<const std::string> generated,
                          std::span<const std::string> ground_truth,
                          const SimilarityFn& weight = rouge_l_f1_weight());

// Micro average: counts summed across turns, then precision/recall/F1.
MetricReport aggregate(std::span<const MetricReport> reports);

// Macro average: unweighted mean of per-turn precision/recall/F1.
MetricReport macro_average(std::span<const MetricReport> reports);

}  // namespace socratic
