#include "socratic/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "socratic/errors.hpp"

namespace socratic {

int lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    size_t m = a.size(), n = b.size();
    if (m == 0 || n == 0) return 0;
    std::vector<int> prev(n + 1, 0), curr(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            if (a[i - 1] == b[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    return prev[n];
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
    std::vector<std::string> cand = tokenize(candidate);
    std::vector<std::string> ref = tokenize(reference);
    if (cand.empty() || ref.empty()) return {};
    double lcs = static_cast<double>(lcs_length(cand, ref));
    RougeScore score;
    score.precision = lcs / static_cast<double>(cand.size());
    score.recall = lcs / static_cast<double>(ref.size());
    if (score.precision + score.recall > 0.0) {
        score.f1 = 2.0 * score.precision * score.recall / (score.precision + score.recall);
    }
    return score;
}

namespace {

constexpr double kMatchEps = 1e-9;

// Classic O(s^3) potentials algorithm for the square min-cost assignment;
// returns the minimal total cost.
double hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
    int n = static_cast<int>(cost.size());
    if (n == 0) return 0.0;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
    return total;
}

// Best achievable total weight for the given rows x cols submatrix.
double max_total_weight(const std::vector<std::vector<double>>& weights,
                        const std::vector<int>& rows, const std::vector<int>& cols) {
    if (rows.empty() || cols.empty()) return 0.0;
    int s = static_cast<int>(std::max(rows.size(), cols.size()));
    std::vector<std::vector<double>> cost(s, std::vector<double>(s, 0.0));
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < cols.size(); ++j) {
            cost[i][j] = -weights[rows[i]][cols[j]];
        }
    }
    return -hungarian_min_cost(cost);
}

}  // namespace

std::vector<std::pair<int, int>> max_weight_matching(
    const std::vector<std::vector<double>>& weights) {
    int m = static_cast<int>(weights.size());
    int n = m == 0 ? 0 : static_cast<int>(weights[0].size());
    for (const auto& row : weights) {
        if (static_cast<int>(row.size()) != n) {
            throw ContractError("max_weight_matching: ragged weight matrix");
        }
        for (double w : row) {
            if (!std::isfinite(w)) throw ContractError("max_weight_matching: non-finite weight");
            if (w < 0.0) throw ContractError("max_weight_matching: negative weight");
        }
    }
    if (m == 0 || n == 0) return {};

    std::vector<int> all_rows(m), all_cols(n);
    for (int i = 0; i < m; ++i) all_rows[i] = i;
    for (int j = 0; j < n; ++j) all_cols[j] = j;
    double remaining = max_total_weight(weights, all_rows, all_cols);

    // Fix pairs greedily in lexicographic order, keeping optimality: (i, j)
    // joins the matching iff some optimal matching extends it.
    std::vector<std::pair<int, int>> out;
    std::vector<char> col_used(n, 0);
    for (int i = 0; i < m; ++i) {
        std::vector<int> tail_rows;
        for (int r = i + 1; r < m; ++r) tail_rows.push_back(r);
        for (int j = 0; j < n; ++j) {
            if (col_used[j] || weights[i][j] <= 0.0) continue;
            std::vector<int> free_cols;
            for (int c = 0; c < n; ++c) {
                if (!col_used[c] && c != j) free_cols.push_back(c);
            }
            if (weights[i][j] + max_total_weight(weights, tail_rows, free_cols) >=
                remaining - kMatchEps) {
                out.emplace_back(i, j);
                col_used[j] = 1;
                remaining -= weights[i][j];
                break;
            }
        }
    }
    return out;
}

SimilarityFn rouge_l_f1_weight() {
    return [](std::string_view a, std::string_view b) { return rouge_l(a, b).f1; };
}

SimilarityFn rouge_l_precision_weight() {
    return [](std::string_view a, std::string_view b) { return rouge_l(a, b).precision; };
}

SimilarityFn rouge_l_recall_weight() {
    return [](std::string_view a, std::string_view b) { return rouge_l(a, b).recall; };
}

MetricReport turn_metrics(std::span<const std::string> generated,
                          std::span<const std::string> ground_truth,
                          const SimilarityFn& weight) {
    MetricReport report;
    size_t m = generated.size(), n = ground_truth.size();
    if (m == 0 && n == 0) {
        report.degenerate = true;
        return report;
    }
    std::vector<std::vector<double>> weights(m, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double w = weight(generated[i], ground_truth[j]);
            if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
                throw ContractError("turn_metrics: similarity weight outside [0, 1]");
            }
            weights[i][j] = w;
        }
    }
    std::vector<std::pair<int, int>> matching = max_weight_matching(weights);

    for (auto [i, j] : matching) {
        double w = weights[i][j];
        report.matched_pairs.push_back(MatchedPair{i, j, w});
        report.tp += w;
        report.fp += 1.0 - w;
    }
    report.fp += static_cast<double>(m - matching.size());  // unmatched generations
    report.fn = static_cast<double>(n - matching.size());   // unmatched references

    if (m > 0) report.precision = report.tp / (report.tp + report.fp);
    if (report.tp + report.fn > 0.0) report.recall = report.tp / (report.tp + report.fn);
    if (report.precision + report.recall > 0.0) {
        report.f1 =
            2.0 * report.precision * report.recall / (report.precision + report.recall);
    }
    return report;
}

MetricReport aggregate(std::span<const MetricReport> reports) {
    MetricReport out;
    out.degenerate = true;
    for (const MetricReport& r : reports) {
        out.tp += r.tp;
        out.fp += r.fp;
        out.fn += r.fn;
        out.degenerate = out.degenerate && r.degenerate;
    }
    if (reports.empty()) out.degenerate = false;
    if (reports.size() == 1) out.matched_pairs = reports[0].matched_pairs;
    if (out.tp + out.fp > 0.0) out.precision = out.tp / (out.tp + out.fp);
    if (out.tp + out.fn > 0.0) out.recall = out.tp / (out.tp + out.fn);
    if (out.precision + out.recall > 0.0) {
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    }
    return out;
}

MetricReport macro_average(std::span<const MetricReport> reports) {
    MetricReport out;
    if (reports.empty()) return out;
    for (const MetricReport& r : reports) {
        out.precision += r.precision;
        out.recall += r.recall;
        out.f1 += r.f1;
    }
    double n = static_cast<double>(reports.size());
    out.precision /= n;
    out.recall /= n;
    out.f1 /= n;
    return out;
}

}  // namespace socratic
