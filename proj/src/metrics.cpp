#include "dermdx/metrics.hpp"

#include "dermdx/error.hpp"
#include "dermdx/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace dermdx {

std::vector<std::string> bleu_tokenize(std::string_view input) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char c : input) {
        auto u = static_cast<unsigned char>(c);
        if (text::is_space(c)) {
            flush();
        } else if (u < 0x80 && std::ispunct(u)) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
        }
    }
    flush();
    return tokens;
}

namespace {

using Counts = std::map<std::string, int>;

Counts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    Counts out;
    if (tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += tokens[i + k];
        }
        ++out[key];
    }
    return out;
}

struct OrderStats {
    double matched = 0.0;
    double total = 0.0;
};

struct Stats {
    std::vector<OrderStats> orders;
    double hyp_len = 0.0;
    double ref_len = 0.0;
};

enum class RefLength { Closest, Shortest };

Stats sentence_stats(std::string_view hypothesis, const std::vector<WeightedReference>& references,
                     const BleuOptions& options, RefLength mode) {
    if (options.max_n == 0) throw PreconditionError("max_n must be at least 1");
    if (references.empty()) throw PreconditionError("at least one reference is required");
    auto hyp = bleu_tokenize(hypothesis);
    if (hyp.empty()) throw EmptyHypothesis();
    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(bleu_tokenize(r.text));

    Stats s;
    s.hyp_len = static_cast<double>(hyp.size());
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
        auto len = r.size();
        if (mode == RefLength::Shortest) {
            best = std::min(best, len);
        } else {
            auto d = [&](std::size_t l) { return l > hyp.size() ? l - hyp.size() : hyp.size() - l; };
            if (d(len) < d(best) || (d(len) == d(best) && len < best)) best = len;
        }
    }
    s.ref_len = static_cast<double>(best);

    for (std::size_t n = 1; n <= options.max_n; ++n) {
        auto hc = ngram_counts(hyp, n);
        std::vector<Counts> rc;
        rc.reserve(refs.size());
        for (const auto& r : refs) rc.push_back(ngram_counts(r, n));
        OrderStats o;
        for (const auto& [gram, count] : hc) {
            o.total += count;
            double credit = 0.0;
            bool found = false;
            for (std::size_t j = 0; j < rc.size(); ++j) {
                auto it = rc[j].find(gram);
                if (it == rc[j].end()) continue;
                double c = references[j].weight * std::min(count, it->second);
                credit = found ? std::max(credit, c) : c;
                found = true;
            }
            o.matched += credit;
        }
        o.matched = std::max(o.matched, 0.0);
        s.orders.push_back(o);
    }
    return s;
}

double finish(const Stats& s, const BleuOptions& options) {
    double log_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < s.orders.size(); ++i) {
        const auto& o = s.orders[i];
        if (o.total <= 0.0) continue;
        double p = (options.smoothing == Smoothing::AddOne && i > 0) ? (o.matched + 1.0) / (o.total + 1.0)
                                                                    : o.matched / o.total;
        if (p <= 0.0) return 0.0;
        log_sum += std::log(p);
        ++used;
    }
    if (used == 0) return 0.0;
    double bp = s.hyp_len >= s.ref_len ? 1.0 : std::exp(1.0 - s.ref_len / s.hyp_len);
    return bp * std::exp(log_sum / static_cast<double>(used));
}

std::vector<WeightedReference> unit_weights(const std::vector<std::string>& references) {
    std::vector<WeightedReference> out;
    out.reserve(references.size());
    for (const auto& r : references) out.push_back({r, 1.0});
    return out;
}

void check_weights(const std::vector<WeightedReference>& references) {
    for (const auto& r : references) {
        if (!(r.weight >= -1.0 && r.weight <= 1.0)) throw PreconditionError("reference weight outside [-1, 1]");
    }
}

double corpus(const std::vector<std::string>& hypotheses,
              const std::vector<std::vector<WeightedReference>>& references, const BleuOptions& options,
              RefLength mode) {
    if (hypotheses.size() != references.size())
        throw PreconditionError("corpus needs one reference list per hypothesis");
    if (hypotheses.empty()) throw PreconditionError("corpus is empty");
    Stats total;
    total.orders.resize(options.max_n);
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        auto s = sentence_stats(hypotheses[i], references[i], options, mode);
        for (std::size_t n = 0; n < s.orders.size(); ++n) {
            total.orders[n].matched += s.orders[n].matched;
            total.orders[n].total += s.orders[n].total;
        }
        total.hyp_len += s.hyp_len;
        total.ref_len += s.ref_len;
    }
    return finish(total, options);
}

} // namespace

double bleu(std::string_view hypothesis, const std::vector<std::string>& references, BleuOptions options) {
    return finish(sentence_stats(hypothesis, unit_weights(references), options, RefLength::Closest), options);
}

double delta_bleu(std::string_view hypothesis, const std::vector<WeightedReference>& references,
                  BleuOptions options) {
    check_weights(references);
    return finish(sentence_stats(hypothesis, references, options, RefLength::Shortest), options);
}

double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references, BleuOptions options) {
    std::vector<std::vector<WeightedReference>> weighted;
    weighted.reserve(references.size());
    for (const auto& r : references) weighted.push_back(unit_weights(r));
    return corpus(hypotheses, weighted, options, RefLength::Closest);
}

double corpus_delta_bleu(const std::vector<std::string>& hypotheses,
                         const std::vector<std::vector<WeightedReference>>& references, BleuOptions options) {
    for (const auto& r : references) check_weights(r);
    return corpus(hypotheses, references, options, RefLength::Shortest);
}

double retrieval_accuracy(std::size_t retrieved_gt, std::size_t total_known_gt) {
    if (total_known_gt == 0) throw ZeroDenominator();
    if (retrieved_gt > total_known_gt) throw PreconditionError("retrieved_gt exceeds total_known_gt");
    return static_cast<double>(retrieved_gt) / static_cast<double>(total_known_gt);
}

} // namespace dermdx
