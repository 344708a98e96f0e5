#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace forge::dedup {

// Token normalization applied before shingling. Both lowercase; `words`
// splits on whitespace only, `code` uses the corpus code tokenizer.
enum class Normalizer { words, code };

struct ShingleSet {
    std::string doc_id;
    std::size_t k = 0;
    std::vector<std::uint64_t> shingles;  // sorted, unique
};

// The normalized token sequence that shingles are taken over.
std::vector<std::string> normalized_tokens(std::string_view text, Normalizer normalizer);

// Hash of one k-token window: FNV-1a 64 of the tokens joined by single spaces.
std::uint64_t shingle_hash(std::span<const std::string> window);

ShingleSet shingle(std::string_view text, std::size_t k, Normalizer normalizer = Normalizer::words,
                   std::string doc_id = {});

inline constexpr std::uint64_t kEmptySlot = ~std::uint64_t{0};

struct MinHashSignature {
    std::string doc_id;
    std::size_t num_hashes = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> values;
};

// Slot i holds min over shingles of mix64(a_i * x + b_i), with odd a_i and
// b_i derived from (seed, i). Empty sets give kEmptySlot everywhere.
MinHashSignature minhash_signature(const ShingleSet& s, std::size_t num_hashes, std::uint64_t seed);

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

// Exact Jaccard over the hashed shingle sets; 1.0 when both are empty.
double exact_jaccard(const ShingleSet& a, const ShingleSet& b);

struct LshParams {
    std::size_t bands = 32;
    std::size_t rows = 8;
    double threshold = 0.8;

    void validate(std::size_t num_hashes) const;
    // Probability that a pair with per-position agreement s becomes a candidate.
    double candidate_probability(double s) const;
};

using IdPair = std::pair<std::string, std::string>;  // first < second

// Pairs agreeing on every row of at least one band; sorted, no self-pairs.
std::vector<IdPair> lsh_candidates(std::span<const MinHashSignature> sigs, const LshParams& p);

struct DuplicateCluster {
    std::vector<std::string> member_ids;  // sorted
    std::string representative_id;

    nlohmann::json to_json() const;
};

struct DedupDoc {
    std::string id;
    std::string text;
    Normalizer normalizer = Normalizer::words;
};

struct DedupParams {
    std::size_t k = 5;
    std::size_t num_hashes = 256;
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
    LshParams lsh;
    // Re-check candidates with exact shingle-set Jaccard instead of the estimate.
    bool exact_verify = false;
};

struct DedupResult {
    std::vector<std::string> kept;  // sorted
    std::vector<DuplicateCluster> clusters;
    std::size_t candidate_pairs = 0;
    std::size_t verified_pairs = 0;
};

// Document ids must be unique.
DedupResult dedup_corpus(std::span<const DedupDoc> docs, const DedupParams& params);

}  // namespace forge::dedup
