#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dermdx {

/// Lowercases, puts spaces around ASCII punctuation, splits on whitespace.
std::vector<std::string> bleu_tokenize(std::string_view text);

enum class Smoothing {
    None,
    AddOne ///< (m + 1) / (c + 1) for n >= 2
};

struct BleuOptions {
    std::size_t max_n = 4;
    Smoothing smoothing = Smoothing::AddOne;
};

/// Sentence BLEU in [0, 1]. Orders the hypothesis is too short to have are
/// left out of the geometric mean. Brevity penalty uses the reference length
/// closest to the hypothesis length (shorter wins ties).
/// Throws EmptyHypothesis, PreconditionError (no references or max_n == 0).
double bleu(std::string_view hypothesis, const std::vector<std::string>& references, BleuOptions options = {});

struct WeightedReference {
    std::string text;
    double weight = 1.0; ///< in [-1, 1]
};

/// BLEU where an n-gram's match credit is max over the references
/// containing it of weight * min(hyp count, ref count). Per-order credit is
/// floored at 0. Brevity penalty uses the shortest reference, so adding a
/// reference can only raise the score.
double delta_bleu(std::string_view hypothesis, const std::vector<WeightedReference>& references,
                  BleuOptions options = {});

/// Statistics pooled over all sentences before the geometric mean.
double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::vector<std::string>>& references, BleuOptions options = {});
double corpus_delta_bleu(const std::vector<std::string>& hypotheses,
                         const std::vector<std::vector<WeightedReference>>& references, BleuOptions options = {});

/// retrieved_gt / total_known_gt. Throws ZeroDenominator when
/// total_known_gt is 0 and PreconditionError when retrieved_gt exceeds it.
double retrieval_accuracy(std::size_t retrieved_gt, std::size_t total_known_gt);

} // namespace dermdx
