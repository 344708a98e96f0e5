#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "forge/dedup.hpp"
#include "forge/errors.hpp"

using namespace forge::dedup;

namespace {

std::string words(std::mt19937_64& rng, std::size_t n, std::size_t vocab = 5000) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += "w" + std::to_string(rng() % vocab) + " ";
    return s;
}

double oracle_jaccard(const std::string& a, const std::string& b, std::size_t k) {
    auto grams = [k](const std::string& t) {
        auto toks = normalized_tokens(t, Normalizer::words);
        std::set<std::string> out;
        for (std::size_t i = 0; i + k <= toks.size(); ++i) {
            std::string g;
            for (std::size_t j = i; j < i + k; ++j) g += toks[j] + " ";
            out.insert(g);
        }
        return out;
    };
    auto sa = grams(a), sb = grams(b);
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& g : sa) inter += sb.count(g);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

}  // namespace

TEST(Shingle, WindowCount) {
    auto s = shingle("a b c d e", 3);
    EXPECT_EQ(s.shingles.size(), 3u);
    std::vector<std::string> toks{"a", "b", "c", "d", "e"};
    std::set<std::uint64_t> expect;
    for (std::size_t i = 0; i < 3; ++i) expect.insert(shingle_hash(std::span<const std::string>(toks.data() + i, 3)));
    EXPECT_EQ(std::set<std::uint64_t>(s.shingles.begin(), s.shingles.end()), expect);
}

TEST(Shingle, ShortTextIsEmpty) {
    EXPECT_TRUE(shingle("a b", 5).shingles.empty());
}

TEST(Shingle, NormalizerIdempotence) {
    EXPECT_EQ(shingle("A  B", 1).shingles, shingle("a b", 1).shingles);
}

TEST(MinHash, IdenticalSetsIdenticalSignatures) {
    auto a = shingle("the quick brown fox jumps over the lazy dog", 2);
    auto sa = minhash_signature(a, 256, 42), sb = minhash_signature(a, 256, 42);
    EXPECT_EQ(sa.values, sb.values);
    EXPECT_DOUBLE_EQ(estimate_jaccard(sa, sb), 1.0);
}

TEST(MinHash, HalfOverlapFixture) {
    auto a = shingle("a b c", 1), b = shingle("b c d", 1);
    EXPECT_DOUBLE_EQ(exact_jaccard(a, b), oracle_jaccard("a b c", "b c d", 1));
    EXPECT_DOUBLE_EQ(exact_jaccard(a, b), 0.5);
    auto est = estimate_jaccard(minhash_signature(a, 256, 1), minhash_signature(b, 256, 1));
    EXPECT_LE(std::abs(est - 0.5), 0.08);
}

TEST(MinHash, DisjointSetsNearZero) {
    std::mt19937_64 rng(3);
    ShingleSet a{"a", 1, {}}, b{"b", 1, {}};
    for (int i = 0; i < 2000; ++i) a.shingles.push_back(2 * rng());
    for (int i = 0; i < 2000; ++i) b.shingles.push_back(2 * rng() + 1);
    std::sort(a.shingles.begin(), a.shingles.end());
    std::sort(b.shingles.begin(), b.shingles.end());
    EXPECT_LE(estimate_jaccard(minhash_signature(a, 256, 5), minhash_signature(b, 256, 5)), 0.05);
}

TEST(MinHash, MismatchedSignaturesRejected) {
    auto a = shingle("a b c", 1);
    EXPECT_THROW(estimate_jaccard(minhash_signature(a, 128, 1), minhash_signature(a, 256, 1)), forge::ParameterError);
    EXPECT_THROW(estimate_jaccard(minhash_signature(a, 128, 1), minhash_signature(a, 128, 2)), forge::ParameterError);
}

TEST(Lsh, IdenticalAndDisjointSignatures) {
    std::vector<MinHashSignature> sigs;
    std::vector<std::uint64_t> v(256);
    std::iota(v.begin(), v.end(), 0);
    sigs.push_back({"a", 256, 0, v});
    sigs.push_back({"b", 256, 0, v});
    auto w = v;
    for (auto& x : w) x += 1000;
    sigs.push_back({"c", 256, 0, w});
    auto pairs = lsh_candidates(sigs, {});
    ASSERT_EQ(pairs.size(), 1u);
    EXPECT_EQ(pairs[0], (IdPair{"a", "b"}));
}

TEST(Lsh, ParamValidation) {
    LshParams p{20, 5, 0.8};
    EXPECT_NO_THROW(p.validate(100));
    EXPECT_THROW(p.validate(256), forge::ParameterError);
    EXPECT_NEAR(p.candidate_probability(0.8), 1 - std::pow(1 - std::pow(0.8, 5), 20), 1e-12);
}

TEST(Dedup, AllDistinct) {
    std::mt19937_64 rng(1);
    std::vector<DedupDoc> docs;
    for (int i = 0; i < 20; ++i) docs.push_back({"d" + std::to_string(i), words(rng, 200)});
    auto r = dedup_corpus(docs, {});
    EXPECT_EQ(r.kept.size(), 20u);
    EXPECT_TRUE(r.clusters.empty());
}

TEST(Dedup, FiveCopiesOneCluster) {
    std::mt19937_64 rng(2);
    auto text = words(rng, 300);
    std::vector<DedupDoc> docs;
    for (int i = 0; i < 5; ++i) docs.push_back({"copy" + std::to_string(i), text});
    auto r = dedup_corpus(docs, {});
    ASSERT_EQ(r.clusters.size(), 1u);
    EXPECT_EQ(r.clusters[0].member_ids.size(), 5u);
    EXPECT_EQ(r.clusters[0].representative_id, "copy0");
    EXPECT_EQ(r.kept, (std::vector<std::string>{"copy0"}));
}

TEST(Dedup, DuplicateIdsRejected) {
    std::vector<DedupDoc> docs{{"x", "a b c d e f"}, {"x", "g h i j k l"}};
    EXPECT_THROW(dedup_corpus(docs, {}), forge::ParameterError);
}

namespace {

struct Planted {
    std::vector<DedupDoc> docs;
    std::vector<std::pair<std::string, std::string>> pairs;
};

Planted planted_corpus(std::size_t n_docs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Planted p;
    std::size_t i = 0;
    while (p.docs.size() < n_docs) {
        std::string id = "doc" + std::to_string(1000 + i++);
        auto base = words(rng, 400, 100000);
        p.docs.push_back({id, base});
        if (rng() % 4 == 0 && p.docs.size() < n_docs) {
            // One changed token touches at most k shingles: J >= (400-4-5)/(400-4+5).
            auto toks = normalized_tokens(base, Normalizer::words);
            toks[rng() % toks.size()] = "mutated";
            std::string near;
            for (const auto& t : toks) near += t + " ";
            std::string nid = "doc" + std::to_string(1000 + i++);
            p.docs.push_back({nid, near});
            p.pairs.emplace_back(id, nid);
        }
    }
    return p;
}

}  // namespace

TEST(Dedup, PlantedNearDuplicatesAgainstBruteForce) {
    auto corpus = planted_corpus(200, 77);
    auto r = dedup_corpus(corpus.docs, {});
    std::map<std::string, std::size_t> cluster_of;
    for (std::size_t c = 0; c < r.clusters.size(); ++c) {
        for (const auto& id : r.clusters[c].member_ids) cluster_of[id] = c;
    }
    for (const auto& [a, b] : corpus.pairs) {
        ASSERT_TRUE(cluster_of.count(a) && cluster_of.count(b)) << a << " " << b;
        EXPECT_EQ(cluster_of[a], cluster_of[b]);
    }
    std::map<std::string, const std::string*> text;
    for (const auto& d : corpus.docs) text[d.id] = &d.text;
    for (std::size_t i = 0; i < r.kept.size(); ++i) {
        for (std::size_t j = i + 1; j < r.kept.size(); ++j) {
            EXPECT_LT(oracle_jaccard(*text[r.kept[i]], *text[r.kept[j]], 5), 0.9);
        }
    }
}

TEST(Dedup, OrderIndependent) {
    auto corpus = planted_corpus(120, 5);
    auto ref = dedup_corpus(corpus.docs, {});
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 3; ++trial) {
        auto docs = corpus.docs;
        std::shuffle(docs.begin(), docs.end(), rng);
        auto r = dedup_corpus(docs, {});
        EXPECT_EQ(r.kept, ref.kept);
        ASSERT_EQ(r.clusters.size(), ref.clusters.size());
        for (std::size_t c = 0; c < r.clusters.size(); ++c) {
            EXPECT_EQ(r.clusters[c].member_ids, ref.clusters[c].member_ids);
            EXPECT_EQ(r.clusters[c].representative_id, ref.clusters[c].representative_id);
        }
    }
}

TEST(Dedup, ClusterSoundness) {
    auto corpus = planted_corpus(150, 21);
    DedupParams params;
    auto r = dedup_corpus(corpus.docs, params);
    std::map<std::string, MinHashSignature> sig;
    for (const auto& d : corpus.docs) {
        sig[d.id] = minhash_signature(shingle(d.text, params.k, d.normalizer, d.id), params.num_hashes, params.seed);
    }
    for (const auto& c : r.clusters) {
        // Every member reaches the representative through edges above threshold.
        std::set<std::string> reached{c.member_ids.front()};
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& m : c.member_ids) {
                if (reached.count(m)) continue;
                for (const auto& x : reached) {
                    if (estimate_jaccard(sig[m], sig[x]) >= params.lsh.threshold) {
                        reached.insert(m);
                        grew = true;
                        break;
                    }
                }
            }
        }
        EXPECT_EQ(reached.size(), c.member_ids.size());
        EXPECT_EQ(c.representative_id, *std::min_element(c.member_ids.begin(), c.member_ids.end()));
    }
    // Each kept id is a representative or a singleton; each non-kept id is in some cluster.
    std::set<std::string> kept(r.kept.begin(), r.kept.end());
    std::set<std::string> clustered;
    for (const auto& c : r.clusters) {
        EXPECT_TRUE(kept.count(c.representative_id));
        clustered.insert(c.member_ids.begin(), c.member_ids.end());
    }
    for (const auto& d : corpus.docs) EXPECT_TRUE(kept.count(d.id) || clustered.count(d.id)) << d.id;
}

TEST(Dedup, ExactVerifyAgreesOnPlantedPairs) {
    auto corpus = planted_corpus(100, 31);
    DedupParams p;
    p.exact_verify = true;
    auto r = dedup_corpus(corpus.docs, p);
    std::set<std::string> kept(r.kept.begin(), r.kept.end());
    for (const auto& [a, b] : corpus.pairs) EXPECT_FALSE(kept.count(a) && kept.count(b));
}
