#include "forge/metrics.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "forge/errors.hpp"
#include "http_util.hpp"

namespace forge::eval {

// --- BLEU ---

namespace {

std::map<std::vector<std::string_view>, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
    std::map<std::vector<std::string_view>, std::size_t> out;
    if (t.size() < n) return out;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
        std::vector<std::string_view> g(t.begin() + static_cast<std::ptrdiff_t>(i),
                                        t.begin() + static_cast<std::ptrdiff_t>(i + n));
        ++out[g];
    }
    return out;
}

}  // namespace

double bleu4(const Tokens& hyp, const Tokens& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto h = ngram_counts(hyp, n);
        const auto r = ngram_counts(ref, n);
        std::size_t candidates = hyp.size() >= n ? hyp.size() - n + 1 : 0;
        std::size_t matched = 0;
        for (const auto& [g, c] : h) {
            auto it = r.find(g);
            if (it != r.end()) matched += std::min(c, it->second);
        }
        double p;
        if (candidates == 0) {
            p = 1.0;
        } else if (matched == 0) {
            if (n == 1) return 0.0;
            p = 1.0 / static_cast<double>(candidates + 1);
        } else {
            p = static_cast<double>(matched) / static_cast<double>(candidates);
        }
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(hyp.size());
    const double r = static_cast<double>(ref.size());
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

// --- ROUGE-L ---

namespace {

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double f_measure(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

double rouge_l(const Tokens& hyp, const Tokens& ref) {
    if (hyp.empty() || ref.empty()) return hyp.empty() && ref.empty() ? 1.0 : 0.0;
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    return f_measure(lcs / static_cast<double>(hyp.size()), lcs / static_cast<double>(ref.size()));
}

// --- Porter stemmer ---

namespace {

class Porter {
public:
    explicit Porter(std::string w) : b_(std::move(w)) {}

    std::string run() {
        k_ = static_cast<int>(b_.size()) - 1;
        if (k_ <= 1) return b_;
        step1ab();
        if (k_ > 0) {
            step1c();
            step2();
            step3();
            step4();
            step5();
        }
        return b_.substr(0, static_cast<std::size_t>(k_ + 1));
    }

private:
    char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

    bool cons(int i) const {
        switch (at(i)) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 ? true : !cons(i - 1);
            default: return true;
        }
    }

    // Number of vowel-consonant sequences in b[0..j].
    int m() const {
        int n = 0;
        int i = 0;
        for (;; ++i) {
            if (i > j_) return n;
            if (!cons(i)) break;
        }
        ++i;
        for (;;) {
            for (;; ++i) {
                if (i > j_) return n;
                if (cons(i)) break;
            }
            ++i;
            ++n;
            for (;; ++i) {
                if (i > j_) return n;
                if (!cons(i)) break;
            }
            ++i;
        }
    }

    bool vowel_in_stem() const {
        for (int i = 0; i <= j_; ++i) {
            if (!cons(i)) return true;
        }
        return false;
    }

    bool doublec(int j) const { return j >= 1 && at(j) == at(j - 1) && cons(j); }

    bool cvc(int i) const {
        if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
        char c = at(i);
        return c != 'w' && c != 'x' && c != 'y';
    }

    bool ends(std::string_view s) {
        const int len = static_cast<int>(s.size());
        if (len > k_ + 1) return false;
        if (b_.compare(static_cast<std::size_t>(k_ + 1 - len), s.size(), s) != 0) return false;
        j_ = k_ - len;
        return true;
    }

    void setto(std::string_view s) {
        b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
        k_ = j_ + static_cast<int>(s.size());
    }

    void r(std::string_view s) {
        if (m() > 0) setto(s);
    }

    void step1ab() {
        if (at(k_) == 's') {
            if (ends("sses")) k_ -= 2;
            else if (ends("ies")) setto("i");
            else if (at(k_ - 1) != 's') --k_;
        }
        if (ends("eed")) {
            if (m() > 0) --k_;
        } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            k_ = j_;
            if (ends("at")) setto("ate");
            else if (ends("bl")) setto("ble");
            else if (ends("iz")) setto("ize");
            else if (doublec(k_)) {
                --k_;
                char c = at(k_);
                if (c == 'l' || c == 's' || c == 'z') ++k_;
            } else {
                j_ = k_;
                if (m() == 1 && cvc(k_)) setto("e");
            }
        }
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
    }

    void step2() {
        switch (at(k_ - 1)) {
            case 'a':
                if (ends("ational")) { r("ate"); break; }
                if (ends("tional")) { r("tion"); break; }
                break;
            case 'c':
                if (ends("enci")) { r("ence"); break; }
                if (ends("anci")) { r("ance"); break; }
                break;
            case 'e':
                if (ends("izer")) { r("ize"); break; }
                break;
            case 'l':
                if (ends("bli")) { r("ble"); break; }
                if (ends("alli")) { r("al"); break; }
                if (ends("entli")) { r("ent"); break; }
                if (ends("eli")) { r("e"); break; }
                if (ends("ousli")) { r("ous"); break; }
                break;
            case 'o':
                if (ends("ization")) { r("ize"); break; }
                if (ends("ation")) { r("ate"); break; }
                if (ends("ator")) { r("ate"); break; }
                break;
            case 's':
                if (ends("alism")) { r("al"); break; }
                if (ends("iveness")) { r("ive"); break; }
                if (ends("fulness")) { r("ful"); break; }
                if (ends("ousness")) { r("ous"); break; }
                break;
            case 't':
                if (ends("aliti")) { r("al"); break; }
                if (ends("iviti")) { r("ive"); break; }
                if (ends("biliti")) { r("ble"); break; }
                break;
            case 'g':
                if (ends("logi")) { r("log"); break; }
                break;
            default:
                break;
        }
    }

    void step3() {
        switch (at(k_)) {
            case 'e':
                if (ends("icate")) { r("ic"); break; }
                if (ends("ative")) { r(""); break; }
                if (ends("alize")) { r("al"); break; }
                break;
            case 'i':
                if (ends("iciti")) { r("ic"); break; }
                break;
            case 'l':
                if (ends("ical")) { r("ic"); break; }
                if (ends("ful")) { r(""); break; }
                break;
            case 's':
                if (ends("ness")) { r(""); break; }
                break;
            default:
                break;
        }
    }

    void step4() {
        switch (at(k_ - 1)) {
            case 'a':
                if (ends("al")) break;
                return;
            case 'c':
                if (ends("ance")) break;
                if (ends("ence")) break;
                return;
            case 'e':
                if (ends("er")) break;
                return;
            case 'i':
                if (ends("ic")) break;
                return;
            case 'l':
                if (ends("able")) break;
                if (ends("ible")) break;
                return;
            case 'n':
                if (ends("ant")) break;
                if (ends("ement")) break;
                if (ends("ment")) break;
                if (ends("ent")) break;
                return;
            case 'o':
                if (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) break;
                if (ends("ou")) break;
                return;
            case 's':
                if (ends("ism")) break;
                return;
            case 't':
                if (ends("ate")) break;
                if (ends("iti")) break;
                return;
            case 'u':
                if (ends("ous")) break;
                return;
            case 'v':
                if (ends("ive")) break;
                return;
            case 'z':
                if (ends("ize")) break;
                return;
            default:
                return;
        }
        if (m() > 1) k_ = j_;
    }

    void step5() {
        j_ = k_;
        if (at(k_) == 'e') {
            int a = m();
            if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
        }
        if (at(k_) == 'l' && doublec(k_) && m() > 1) --k_;
    }

    std::string b_;
    int k_ = 0;
    int j_ = 0;
};

}  // namespace

std::string porter_stem(std::string_view word) {
    for (char c : word) {
        if (c < 'a' || c > 'z') return std::string(word);
    }
    return Porter(std::string(word)).run();
}

// --- METEOR ---

Alignment meteor_align(const Tokens& hyp, const Tokens& ref) {
    std::vector<std::optional<std::size_t>> hyp_to_ref(hyp.size());
    std::vector<bool> ref_used(ref.size(), false);

    auto stage = [&](const std::vector<std::string>& h, const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (hyp_to_ref[i]) continue;
            // Prefer extending the previous match so runs stay contiguous.
            std::optional<std::size_t> prev;
            if (i > 0 && hyp_to_ref[i - 1]) prev = *hyp_to_ref[i - 1];
            std::optional<std::size_t> pick;
            if (prev && *prev + 1 < r.size() && !ref_used[*prev + 1] && r[*prev + 1] == h[i]) {
                pick = *prev + 1;
            } else {
                for (std::size_t j = 0; j < r.size(); ++j) {
                    if (!ref_used[j] && r[j] == h[i]) {
                        pick = j;
                        break;
                    }
                }
            }
            if (pick) {
                hyp_to_ref[i] = *pick;
                ref_used[*pick] = true;
            }
        }
    };
    stage(hyp, ref);
    std::vector<std::string> hs, rs;
    hs.reserve(hyp.size());
    rs.reserve(ref.size());
    for (const auto& t : hyp) hs.push_back(porter_stem(t));
    for (const auto& t : ref) rs.push_back(porter_stem(t));
    stage(hs, rs);

    Alignment a;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
        if (hyp_to_ref[i]) a.pairs.emplace_back(i, *hyp_to_ref[i]);
    }
    for (std::size_t k = 0; k < a.pairs.size(); ++k) {
        bool continues = k > 0 && a.pairs[k].first == a.pairs[k - 1].first + 1 &&
                         a.pairs[k].second == a.pairs[k - 1].second + 1;
        if (!continues) ++a.chunks;
    }
    return a;
}

double meteor(const Tokens& hyp, const Tokens& ref, const MeteorParams& params) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const auto a = meteor_align(hyp, ref);
    const double matches = static_cast<double>(a.pairs.size());
    if (matches == 0) return 0.0;
    const double p = matches / static_cast<double>(hyp.size());
    const double r = matches / static_cast<double>(ref.size());
    const double fmean = p * r / (params.alpha * p + (1 - params.alpha) * r);
    const double penalty = params.gamma * std::pow(static_cast<double>(a.chunks) / matches, params.beta);
    return fmean * (1 - penalty);
}

// --- token F1 / MAP ---

double token_f1(const Tokens& hyp, const Tokens& ref) {
    if (hyp.empty() && ref.empty()) return 1.0;
    if (hyp.empty() || ref.empty()) return 0.0;
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : ref) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : hyp) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return f_measure(static_cast<double>(overlap) / static_cast<double>(hyp.size()),
                     static_cast<double>(overlap) / static_cast<double>(ref.size()));
}

double average_precision(const Tokens& hyp, const Tokens& ref) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : ref) ++counts[t];
    double sum = 0;
    std::size_t relevant = 0;
    for (std::size_t k = 0; k < hyp.size(); ++k) {
        auto it = counts.find(hyp[k]);
        if (it == counts.end() || it->second == 0) continue;
        --it->second;
        ++relevant;
        sum += static_cast<double>(relevant) / static_cast<double>(k + 1);
    }
    return relevant ? sum / static_cast<double>(relevant) : 0.0;
}

// --- BERTScore ---

HttpEmbedder::HttpEmbedder(std::string base_url, double timeout_seconds)
    : base_url_(std::move(base_url)), timeout_(timeout_seconds) {}

std::vector<std::vector<double>> HttpEmbedder::embed(std::string_view text) {
    const auto [origin, prefix] = detail::split_url(base_url_);
    httplib::Client cli(origin);
    cli.set_read_timeout(static_cast<time_t>(timeout_));
    cli.set_connection_timeout(static_cast<time_t>(std::min(timeout_, 10.0)));
    auto res = cli.Post(prefix + "/embed", nlohmann::json{{"text", text}}.dump(), "application/json");
    if (!res) throw ProviderError("embedding endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw ProviderError("embedding endpoint returned HTTP " + std::to_string(res->status), res->status);
    try {
        return nlohmann::json::parse(res->body).at("vectors").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed embedding reply: ") + e.what());
    }
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ProviderError("embedding vectors differ in dimension");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double greedy_mean(const std::vector<std::vector<double>>& from, const std::vector<std::vector<double>>& to) {
    double sum = 0;
    for (const auto& u : from) {
        double best = -1.0;
        for (const auto& v : to) best = std::max(best, cosine(u, v));
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

}  // namespace

BertScore bert_score_vectors(const std::vector<std::vector<double>>& hyp, const std::vector<std::vector<double>>& ref) {
    if (hyp.empty() && ref.empty()) return {1.0, 1.0, 1.0};
    if (hyp.empty() || ref.empty()) return {};
    BertScore s;
    s.precision = greedy_mean(hyp, ref);
    s.recall = greedy_mean(ref, hyp);
    s.f1 = std::clamp(f_measure(s.precision, s.recall), 0.0, 1.0);
    return s;
}

OptionalScore bert_score(std::string_view hyp, std::string_view ref, Embedder* embedder) {
    if (!embedder) return {std::nullopt, "no embedding endpoint configured"};
    try {
        return {bert_score_vectors(embedder->embed(hyp), embedder->embed(ref)).f1, ""};
    } catch (const std::exception& e) {
        return {std::nullopt, e.what()};
    }
}

}  // namespace forge::eval
