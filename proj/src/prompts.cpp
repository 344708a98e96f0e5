#include "forge/prompts.hpp"

#include <fstream>
#include <sstream>

#include "forge/errors.hpp"

namespace forge::prompts {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kBuiltinPrompts[];
extern const std::size_t kBuiltinPromptCount;
}  // namespace detail

std::string_view builtin(std::string_view name) {
    for (std::size_t i = 0; i < detail::kBuiltinPromptCount; ++i) {
        if (detail::kBuiltinPrompts[i].first == name) return detail::kBuiltinPrompts[i].second;
    }
    throw NotFoundError("no prompt template named '" + std::string(name) + "'");
}

std::vector<std::string> builtin_names() {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < detail::kBuiltinPromptCount; ++i) out.emplace_back(detail::kBuiltinPrompts[i].first);
    return out;
}

PromptSet::PromptSet(std::optional<std::filesystem::path> override_dir) : dir_(std::move(override_dir)) {}

std::string PromptSet::get(std::string_view name) const {
    if (dir_) {
        auto p = *dir_ / (std::string(name) + ".txt");
        if (std::ifstream in(p); in) {
            std::ostringstream ss;
            ss << in.rdbuf();
            auto s = ss.str();
            while (!s.empty() && s.back() == '\n') s.pop_back();
            return s;
        }
    }
    return std::string(builtin(name));
}

std::string fill(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
    // Single pass, so substituted text is never rescanned for placeholders.
    std::string out;
    out.reserve(tmpl.size());
    for (std::size_t i = 0; i < tmpl.size();) {
        bool replaced = false;
        for (const auto& [key, value] : values) {
            if (!key.empty() && tmpl.compare(i, key.size(), key) == 0) {
                out += value;
                i += key.size();
                replaced = true;
                break;
            }
        }
        if (!replaced) out.push_back(tmpl[i++]);
    }
    return out;
}

}  // namespace forge::prompts
