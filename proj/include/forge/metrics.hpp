#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge::eval {

using Tokens = std::vector<std::string>;

// Sentence BLEU-4 on a 0-100 scale: geometric mean of clipped n-gram
// precisions (n = 1..4) times the brevity penalty. A zero match count for
// n >= 2 is smoothed to 1/(candidates+1); n-gram orders the hypothesis is too
// short to contain contribute 1. Empty hypothesis or no unigram match -> 0.
double bleu4(const Tokens& hyp, const Tokens& ref);

// LCS F-measure in [0,1].
double rouge_l(const Tokens& hyp, const Tokens& ref);

// Simplified METEOR: exact then Porter-stem unigram alignment,
// F_mean = P*R / (alpha*P + (1-alpha)*R), penalty = gamma * (chunks/matches)^beta.
struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};
double meteor(const Tokens& hyp, const Tokens& ref, const MeteorParams& params = {});

struct Alignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (hyp index, ref index), ascending hyp index
    std::size_t chunks = 0;
};
Alignment meteor_align(const Tokens& hyp, const Tokens& ref);

// Porter (1980) suffix-stripping stemmer on a lowercase ASCII word.
std::string porter_stem(std::string_view word);

// Multiset token overlap F1. Both empty -> 1, one empty -> 0.
double token_f1(const Tokens& hyp, const Tokens& ref);

// Average precision of the hypothesis read as a ranked retrieval of the
// reference token multiset; 0 when nothing is retrieved.
double average_precision(const Tokens& hyp, const Tokens& ref);

// Per-token embedding source for BERTScore.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<std::vector<double>> embed(std::string_view text) = 0;
};

// POST {base_url}/embed {"text": ...} -> {"vectors": [[...], ...]}.
class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(std::string base_url, double timeout_seconds = 60);
    std::vector<std::vector<double>> embed(std::string_view text) override;

private:
    std::string base_url_;
    double timeout_;
};

struct BertScore {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

// Greedy cosine matching over token vectors; F clamped to [0,1].
BertScore bert_score_vectors(const std::vector<std::vector<double>>& hyp, const std::vector<std::vector<double>>& ref);

struct OptionalScore {
    std::optional<double> value;  // nullopt = unavailable
    std::string diagnostic;
};

OptionalScore bert_score(std::string_view hyp, std::string_view ref, Embedder* embedder);

}  // namespace forge::eval
