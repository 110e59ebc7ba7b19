#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace dermdx {

struct PromptTemplate {
    std::string name; ///< file stem, e.g. "rerank_naive"
    int version = 0;
    std::string body;
};

/// Parses a template file: leading `#! key: value` header lines, then the
/// body. Only `version` is interpreted.
PromptTemplate parse_prompt_file(std::string name, std::string_view content);

/// Named prompt templates. Starts from the templates compiled into the
/// library; a directory of `<name>.txt` files overrides them one by one.
class PromptLibrary {
public:
    static PromptLibrary bundled();
    /// Throws ConfigError if `dir` is not a readable directory.
    static PromptLibrary with_overrides(const std::filesystem::path& dir);

    /// Throws ConfigError for unknown names.
    const PromptTemplate& get(std::string_view name) const;
    std::string render(std::string_view name, const std::map<std::string, std::string>& vars) const;

    void set(PromptTemplate tmpl);
    const std::map<std::string, PromptTemplate, std::less<>>& all() const noexcept { return templates_; }

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// JSON text of the rule set shipped with the library.
std::string_view bundled_rules_json();

} // namespace dermdx
