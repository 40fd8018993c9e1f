#pragma once

#include <array>
#include <string>
#include <vector>

namespace relcap {

struct BleuResult {
    /// bleu[n-1] is BLEU@n: brevity penalty times the geometric mean of
    /// modified precisions 1..n with uniform weights.
    std::array<double, 4> bleu{};
    std::array<double, 4> precisions{};
    double brevity_penalty = 0.0;
    long candidate_length = 0;
    long reference_length = 0; // closest-length effective total
};

/// Corpus-level BLEU over pre-tokenized sentences. Each candidate may have
/// several references; n-gram counts are clipped against the per-reference
/// maxima and the effective reference length picks the closest (shorter on
/// ties) reference per sentence. Empty candidates score nothing and warn.
BleuResult corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::vector<std::string>>>& references,
                       int max_n = 4);

} // namespace relcap
