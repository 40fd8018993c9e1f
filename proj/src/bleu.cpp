#include "relcap/bleu.hpp"

#include "relcap/common.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace relcap {

namespace {

std::map<std::string, long> ngram_counts(const std::vector<std::string>& toks, int n) {
    std::map<std::string, long> counts;
    if (int(toks.size()) < n) return counts;
    for (std::size_t i = 0; i + std::size_t(n) <= toks.size(); ++i) {
        std::string key = toks[i];
        for (int k = 1; k < n; ++k) key += '\x1f' + toks[i + std::size_t(k)];
        ++counts[key];
    }
    return counts;
}

} // namespace

BleuResult corpus_bleu(const std::vector<std::vector<std::string>>& candidates,
                       const std::vector<std::vector<std::vector<std::string>>>& references,
                       int max_n) {
    if (candidates.empty() || candidates.size() != references.size())
        throw ValidationError("bleu: need equally many candidates and reference sets, got " +
                              std::to_string(candidates.size()) + " and " +
                              std::to_string(references.size()));
    if (max_n < 1 || max_n > 4) throw ValidationError("bleu: order must be within 1..4");

    BleuResult res;
    std::array<long, 4> matched{}, total{};

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i];
        const auto& refs = references[i];
        if (refs.empty()) throw ValidationError("bleu: candidate " + std::to_string(i) +
                                                " has no references");
        if (cand.empty())
            std::cerr << "warning: bleu: empty candidate at index " << i << " scores zero\n";

        res.candidate_length += long(cand.size());
        long best_ref = long(refs[0].size());
        for (const auto& r : refs) {
            long len = long(r.size());
            long diff = std::labs(len - long(cand.size()));
            long best_diff = std::labs(best_ref - long(cand.size()));
            if (diff < best_diff || (diff == best_diff && len < best_ref)) best_ref = len;
        }
        res.reference_length += best_ref;

        for (int n = 1; n <= max_n; ++n) {
            auto cand_counts = ngram_counts(cand, n);
            std::map<std::string, long> ref_max;
            for (const auto& r : refs)
                for (const auto& [gram, cnt] : ngram_counts(r, n))
                    ref_max[gram] = std::max(ref_max[gram], cnt);
            for (const auto& [gram, cnt] : cand_counts) {
                auto it = ref_max.find(gram);
                matched[std::size_t(n - 1)] += std::min(cnt, it == ref_max.end() ? 0L : it->second);
            }
            total[std::size_t(n - 1)] += std::max(0L, long(cand.size()) - long(n) + 1L);
        }
    }

    res.brevity_penalty =
        res.candidate_length == 0
            ? 0.0
            : (res.candidate_length > res.reference_length
                   ? 1.0
                   : std::exp(1.0 - double(res.reference_length) / double(res.candidate_length)));

    for (int n = 1; n <= max_n; ++n) {
        res.precisions[std::size_t(n - 1)] =
            total[std::size_t(n - 1)] == 0
                ? 0.0
                : double(matched[std::size_t(n - 1)]) / double(total[std::size_t(n - 1)]);
        double log_sum = 0.0;
        bool zero = false;
        for (int k = 1; k <= n; ++k) {
            double p = res.precisions[std::size_t(k - 1)];
            if (p <= 0.0) {
                zero = true;
                break;
            }
            log_sum += std::log(p) / double(n);
        }
        res.bleu[std::size_t(n - 1)] = zero ? 0.0 : res.brevity_penalty * std::exp(log_sum);
    }
    return res;
}

} // namespace relcap
