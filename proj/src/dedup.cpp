#include "forge/dedup.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "forge/errors.hpp"
#include "forge/hashing.hpp"
#include "forge/parallel.hpp"
#include "forge/text.hpp"

namespace forge::dedup {

namespace {

struct Permutation {
    std::uint64_t mul;
    std::uint64_t add;
};

std::vector<Permutation> permutations(std::size_t n, std::uint64_t seed) {
    std::vector<Permutation> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].mul = mix64(seed ^ mix64(2 * i + 1)) | 1;
        out[i].add = mix64(out[i].mul + seed + i);
    }
    return out;
}

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    // The smaller index becomes the root, so roots are order-independent.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<std::string> normalized_tokens(std::string_view text, Normalizer normalizer) {
    std::string lower = text::to_lower_ascii(text);
    return normalizer == Normalizer::code ? text::code_tokens(lower) : text::split_whitespace(lower);
}

std::uint64_t shingle_hash(std::span<const std::string> window) {
    std::string joined;
    for (std::size_t i = 0; i < window.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += window[i];
    }
    return fnv1a64(joined);
}

ShingleSet shingle(std::string_view text, std::size_t k, Normalizer normalizer, std::string doc_id) {
    if (k == 0) throw ParameterError("shingle width k must be >= 1");
    ShingleSet out{std::move(doc_id), k, {}};
    auto tokens = normalized_tokens(text, normalizer);
    if (tokens.size() < k) return out;
    out.shingles.reserve(tokens.size() - k + 1);
    for (std::size_t i = 0; i + k <= tokens.size(); ++i) {
        out.shingles.push_back(shingle_hash(std::span<const std::string>(tokens).subspan(i, k)));
    }
    std::sort(out.shingles.begin(), out.shingles.end());
    out.shingles.erase(std::unique(out.shingles.begin(), out.shingles.end()), out.shingles.end());
    return out;
}

MinHashSignature minhash_signature(const ShingleSet& s, std::size_t num_hashes, std::uint64_t seed) {
    if (num_hashes == 0) throw ParameterError("num_hashes must be >= 1");
    MinHashSignature sig{s.doc_id, num_hashes, seed, std::vector<std::uint64_t>(num_hashes, kEmptySlot)};
    auto perms = permutations(num_hashes, seed);
    for (std::uint64_t x : s.shingles) {
        for (std::size_t i = 0; i < num_hashes; ++i) {
            std::uint64_t h = mix64(perms[i].mul * x + perms[i].add);
            if (h < sig.values[i]) sig.values[i] = h;
        }
    }
    return sig;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.num_hashes != b.num_hashes || a.values.size() != b.values.size()) {
        throw ParameterError("signatures have different num_hashes");
    }
    if (a.seed != b.seed) throw ParameterError("signatures were built with different seeds");
    if (a.values.empty()) return 0.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) agree += a.values[i] == b.values[i];
    return static_cast<double>(agree) / static_cast<double>(a.values.size());
}

double exact_jaccard(const ShingleSet& a, const ShingleSet& b) {
    if (a.shingles.empty() && b.shingles.empty()) return 1.0;
    std::size_t inter = 0;
    auto i = a.shingles.begin();
    auto j = b.shingles.begin();
    while (i != a.shingles.end() && j != b.shingles.end()) {
        if (*i < *j) ++i;
        else if (*j < *i) ++j;
        else ++inter, ++i, ++j;
    }
    std::size_t uni = a.shingles.size() + b.shingles.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

void LshParams::validate(std::size_t num_hashes) const {
    if (bands < 1 || rows < 1) throw ParameterError("LSH bands and rows must be >= 1");
    if (bands * rows != num_hashes) {
        throw ParameterError("LSH bands*rows (" + std::to_string(bands * rows) + ") must equal num_hashes (" +
                             std::to_string(num_hashes) + ")");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("LSH threshold must lie in (0, 1)");
}

double LshParams::candidate_probability(double s) const {
    return 1.0 - std::pow(1.0 - std::pow(s, static_cast<double>(rows)), static_cast<double>(bands));
}

std::vector<IdPair> lsh_candidates(std::span<const MinHashSignature> sigs, const LshParams& p) {
    if (sigs.empty()) return {};
    for (const auto& s : sigs) {
        if (s.values.size() != p.bands * p.rows) {
            throw ParameterError("signature of '" + s.doc_id + "' has " + std::to_string(s.values.size()) +
                                 " values, expected bands*rows = " + std::to_string(p.bands * p.rows));
        }
    }
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> per_band(p.bands);
    parallel_for(p.bands, [&](std::size_t band) {
        const std::size_t lo = band * p.rows;
        std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
        for (std::size_t idx = 0; idx < sigs.size(); ++idx) {
            std::uint64_t key = 0x84222325cbf29ce4ULL;
            for (std::size_t r = 0; r < p.rows; ++r) key = mix64(key ^ sigs[idx].values[lo + r]);
            buckets[key].push_back(idx);
        }
        auto& out = per_band[band];
        for (const auto& [key, members] : buckets) {
            for (std::size_t x = 0; x < members.size(); ++x) {
                for (std::size_t y = x + 1; y < members.size(); ++y) {
                    const auto& va = sigs[members[x]].values;
                    const auto& vb = sigs[members[y]].values;
                    if (std::equal(va.begin() + lo, va.begin() + lo + p.rows, vb.begin() + lo)) {
                        out.emplace_back(members[x], members[y]);
                    }
                }
            }
        }
    });
    std::vector<IdPair> pairs;
    for (const auto& band : per_band) {
        for (auto [a, b] : band) {
            const auto& ia = sigs[a].doc_id;
            const auto& ib = sigs[b].doc_id;
            if (ia == ib) continue;
            pairs.push_back(ia < ib ? IdPair{ia, ib} : IdPair{ib, ia});
        }
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
}

nlohmann::json DuplicateCluster::to_json() const {
    return {{"representative_id", representative_id}, {"member_ids", member_ids}};
}

DedupResult dedup_corpus(std::span<const DedupDoc> docs, const DedupParams& params) {
    params.lsh.validate(params.num_hashes);
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return docs[a].id < docs[b].id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (docs[order[i]].id == docs[order[i - 1]].id) {
            throw ParameterError("duplicate document id '" + docs[order[i]].id + "' passed to dedup");
        }
    }

    const std::size_t n = docs.size();
    std::vector<ShingleSet> shingles(n);
    std::vector<MinHashSignature> sigs(n);
    parallel_for(n, [&](std::size_t i) {
        const auto& d = docs[order[i]];
        shingles[i] = shingle(d.text, params.k, d.normalizer, d.id);
        sigs[i] = minhash_signature(shingles[i], params.num_hashes, params.seed);
    });

    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) index.emplace(sigs[i].doc_id, i);

    DedupResult result;
    auto candidates = lsh_candidates(sigs, params.lsh);
    result.candidate_pairs = candidates.size();
    UnionFind uf(n);
    for (const auto& [a, b] : candidates) {
        std::size_t ia = index.at(a), ib = index.at(b);
        double sim = params.exact_verify ? exact_jaccard(shingles[ia], shingles[ib])
                                         : estimate_jaccard(sigs[ia], sigs[ib]);
        if (sim >= params.lsh.threshold) {
            uf.unite(ia, ib);
            ++result.verified_pairs;
        }
    }

    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
    for (const auto& [root, members] : groups) {
        // Indices follow sorted id order, so members[0] is the smallest id.
        result.kept.push_back(sigs[members.front()].doc_id);
        if (members.size() < 2) continue;
        DuplicateCluster c;
        for (auto m : members) c.member_ids.push_back(sigs[m].doc_id);
        c.representative_id = c.member_ids.front();
        result.clusters.push_back(std::move(c));
    }
    std::sort(result.kept.begin(), result.kept.end());
    return result;
}

}  // namespace forge::dedup
