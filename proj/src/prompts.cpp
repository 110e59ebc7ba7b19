#include "dermdx/prompts.hpp"

#include "dermdx/error.hpp"
#include "dermdx/resources.hpp"
#include "dermdx/text.hpp"

#include <fstream>
#include <sstream>

namespace dermdx {

PromptTemplate parse_prompt_file(std::string name, std::string_view content) {
    PromptTemplate t;
    t.name = std::move(name);
    auto lines = text::split_lines(content);
    std::size_t i = 0;
    for (; i < lines.size() && lines[i].starts_with("#!"); ++i) {
        auto header = text::trim(std::string_view(lines[i]).substr(2));
        auto colon = header.find(':');
        if (colon == std::string::npos) continue;
        if (text::trim(header.substr(0, colon)) == "version") {
            try {
                t.version = std::stoi(text::trim(header.substr(colon + 1)));
            } catch (const std::exception&) {
                throw ConfigError("prompt '" + t.name + "' has a bad version header");
            }
        }
    }
    std::string body;
    for (; i < lines.size(); ++i) {
        body += lines[i];
        body += '\n';
    }
    while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) body.pop_back();
    t.body = std::move(body);
    return t;
}

PromptLibrary PromptLibrary::bundled() {
    PromptLibrary lib;
    for (const auto& r : resources::all()) {
        if (!r.name.ends_with(".txt")) continue;
        auto stem = std::string(r.name.substr(0, r.name.size() - 4));
        lib.set(parse_prompt_file(stem, r.content));
    }
    return lib;
}

PromptLibrary PromptLibrary::with_overrides(const std::filesystem::path& dir) {
    auto lib = bundled();
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec))
        throw ConfigError("prompts directory '" + dir.string() + "' not found");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        if (!in) throw ConfigError("cannot read prompt '" + entry.path().string() + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        lib.set(parse_prompt_file(entry.path().stem().string(), buf.str()));
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + std::string(name) + "'");
    return it->second;
}

std::string PromptLibrary::render(std::string_view name,
                                  const std::map<std::string, std::string>& vars) const {
    return text::render(get(name).body, vars);
}

void PromptLibrary::set(PromptTemplate tmpl) {
    auto key = tmpl.name;
    templates_.insert_or_assign(std::move(key), std::move(tmpl));
}

std::string_view bundled_rules_json() {
    for (const auto& r : resources::all()) {
        if (r.name == "apo_rules.json") return r.content;
    }
    return "{}";
}

} // namespace dermdx
