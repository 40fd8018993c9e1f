#pragma once

#include "relcap/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace relcap {

/// One beam search hypothesis: generated tokens (bos excluded), their
/// cumulative log-probability, and whether <E> has been emitted.
struct BeamHypothesis {
    std::vector<int> tokens;
    double log_prob = 0.0;
    bool finished = false;
};

/// Stepper concept: copyable State, `State initial() const`, and
/// `Vector<S> advance(State&, int token) const` which consumes one token
/// and returns the distribution over the next.

template <class S, class Stepper>
BeamHypothesis greedy_decode(const Stepper& stepper, int bos, int eos, int max_steps) {
    auto state = stepper.initial();
    Vector<S> dist = stepper.advance(state, bos);
    BeamHypothesis hyp;
    for (int step = 0; step < max_steps; ++step) {
        int best = 0;
        dist.maxCoeff(&best); // lowest index wins ties
        hyp.tokens.push_back(best);
        hyp.log_prob += std::log(double(dist(best)));
        if (best == eos) {
            hyp.finished = true;
            break;
        }
        dist = stepper.advance(state, best);
    }
    return hyp;
}

/// Standard beam search over cumulative log-probability. Hypotheses that
/// emit <E> retire; the best finished hypothesis wins, falling back to
/// the best live one at the step limit. No length normalization.
template <class S, class Stepper>
BeamHypothesis beam_decode(const Stepper& stepper, int beam, int bos, int eos, int max_steps) {
    if (beam < 1) throw ValidationError("beam_decode: beam width must be at least 1");

    struct Live {
        typename Stepper::State state;
        std::vector<int> tokens;
        double log_prob = 0.0;
        Vector<S> dist; // over the next token
    };

    Live root{stepper.initial(), {}, 0.0, {}};
    root.dist = stepper.advance(root.state, bos);
    std::vector<Live> live{std::move(root)};

    BeamHypothesis best_finished;
    bool have_finished = false;

    for (int step = 0; step < max_steps && !live.empty(); ++step) {
        struct Candidate {
            std::size_t parent;
            int token;
            double log_prob;
        };
        std::vector<Candidate> cands;
        for (std::size_t p = 0; p < live.size(); ++p)
            for (int t = 0; t < live[p].dist.size(); ++t)
                cands.push_back({p, t, live[p].log_prob + std::log(double(live[p].dist(t)))});
        std::size_t keep = std::min(std::size_t(beam), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + long(keep), cands.end(),
                          [](const Candidate& a, const Candidate& b) {
                              if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                              if (a.parent != b.parent) return a.parent < b.parent;
                              return a.token < b.token;
                          });
        cands.resize(keep);

        std::vector<Live> next;
        for (const auto& c : cands) {
            if (c.token == eos) {
                BeamHypothesis done;
                done.tokens = live[c.parent].tokens;
                done.tokens.push_back(eos);
                done.log_prob = c.log_prob;
                done.finished = true;
                if (!have_finished || done.log_prob > best_finished.log_prob) {
                    best_finished = std::move(done);
                    have_finished = true;
                }
                continue;
            }
            Live child;
            child.state = live[c.parent].state;
            child.tokens = live[c.parent].tokens;
            child.tokens.push_back(c.token);
            child.log_prob = c.log_prob;
            child.dist = stepper.advance(child.state, c.token);
            next.push_back(std::move(child));
        }
        live = std::move(next);

        // log-probs only decay, so nothing live can beat a better finished one
        if (have_finished) {
            bool improvable = false;
            for (const auto& l : live)
                if (l.log_prob > best_finished.log_prob) improvable = true;
            if (!improvable) break;
        }
    }

    if (have_finished) return best_finished;
    BeamHypothesis fallback;
    for (const auto& l : live) {
        if (fallback.tokens.empty() || l.log_prob > fallback.log_prob) {
            fallback.tokens = l.tokens;
            fallback.log_prob = l.log_prob;
        }
    }
    return fallback;
}

} // namespace relcap
