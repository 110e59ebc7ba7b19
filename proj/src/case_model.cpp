#include "dermdx/case_model.hpp"

#include "dermdx/digest.hpp"
#include "dermdx/error.hpp"
#include "dermdx/text.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dermdx {

using json = nlohmann::json;

namespace {

bool is_terminal_punct(char c) {
    return c == '.' || c == ',' || c == ';' || c == '!' || c == '?';
}

} // namespace

std::string normalized_form(std::string_view raw) {
    std::string collapsed;
    collapsed.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (text::is_space(c)) {
            pending_space = !collapsed.empty();
            continue;
        }
        if (pending_space) collapsed.push_back(' ');
        pending_space = false;
        collapsed.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
    // Stripping punctuation can expose more trailing space, and vice versa.
    while (!collapsed.empty() &&
           (is_terminal_punct(collapsed.back()) || collapsed.back() == ' ')) {
        collapsed.pop_back();
    }
    bool has_letter = false;
    for (char c : collapsed) has_letter = has_letter || text::is_alpha(c);
    return has_letter ? collapsed : std::string{};
}

ConditionName ConditionName::parse(std::string_view raw) {
    auto norm = normalized_form(raw);
    if (norm.empty()) throw EmptyName(std::string(raw));
    return ConditionName(std::string(raw), std::move(norm));
}

ConditionName normalize_condition(std::string_view raw) { return ConditionName::parse(raw); }

std::string_view to_string(MediaType t) noexcept { return t == MediaType::jpeg ? "jpeg" : "png"; }

MediaType media_type_from_string(std::string_view s) {
    if (s == "jpeg" || s == "jpg") return MediaType::jpeg;
    if (s == "png") return MediaType::png;
    throw ImageError("unknown media type '" + std::string(s) + "'");
}

std::optional<MediaType> sniff_media_type(std::string_view bytes) noexcept {
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
        return MediaType::jpeg;
    }
    static constexpr std::string_view png_magic{"\x89PNG\r\n\x1a\n", 8};
    if (bytes.substr(0, png_magic.size()) == png_magic) return MediaType::png;
    return std::nullopt;
}

ImagePayload ImagePayload::from_bytes(std::string source_path, std::string bytes) {
    auto type = sniff_media_type(bytes);
    if (!type) throw ImageError("'" + source_path + "' is neither JPEG nor PNG");
    ImagePayload p;
    p.source_path_ = std::move(source_path);
    p.media_type_ = *type;
    p.sha256_ = digest::sha256_hex(bytes);
    p.bytes_ = std::move(bytes);
    p.has_bytes_ = true;
    return p;
}

ImagePayload ImagePayload::from_file(const std::filesystem::path& file, std::string source_path) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ImageError("cannot read image '" + file.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_bytes(std::move(source_path), std::move(buf).str());
}

ImagePayload ImagePayload::from_encoded(std::string source_path, std::string_view base64) {
    return from_bytes(std::move(source_path), digest::base64_decode(base64));
}

ImagePayload ImagePayload::reference(std::string source_path, MediaType type, std::string sha256) {
    ImagePayload p;
    p.source_path_ = std::move(source_path);
    p.media_type_ = type;
    p.sha256_ = std::move(sha256);
    return p;
}

std::string ImagePayload::encoded() const { return digest::base64_encode(bytes_); }

std::string ImagePayload::data_uri() const {
    return "data:image/" + std::string(to_string(media_type_)) + ";base64," + encoded();
}

std::string_view to_string(Split s) noexcept {
    switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "validation";
}

bool operator==(const DermCase& a, const DermCase& b) {
    auto gt = [](const DermCase& c) {
        return c.ground_truth ? std::optional<std::string>(c.ground_truth->raw()) : std::nullopt;
    };
    return a.case_id == b.case_id && a.query == b.query && a.images == b.images &&
           gt(a) == gt(b) && a.split == b.split && a.reference_response == b.reference_response;
}

Dataset::Dataset(std::vector<DermCase> cases) : cases_(std::move(cases)) {
    for (std::size_t i = 0; i < cases_.size(); ++i) {
        const auto& c = cases_[i];
        if (c.images.empty()) throw PreconditionError("case '" + c.case_id + "' has no images");
        if (!index_.emplace(c.case_id, i).second) throw DuplicateCaseId(c.case_id);
        if (c.ground_truth) ++with_ground_truth_;
    }
}

const DermCase* Dataset::find(std::string_view case_id) const {
    auto it = index_.find(std::string(case_id));
    return it == index_.end() ? nullptr : &cases_[it->second];
}

namespace {

Split parse_split(const json& j, std::size_t line) {
    if (j.is_null()) return Split::validation;
    if (!j.is_string()) throw ParseError(line, "split must be a string");
    auto s = j.get<std::string>();
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw ParseError(line, "unknown split '" + s + "'");
}

DermCase parse_case(const json& j, std::size_t line, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
    DermCase c;

    auto id = j.value("case_id", json());
    if (!id.is_string() || id.get<std::string>().empty())
        throw ParseError(line, "case_id must be a non-empty string");
    c.case_id = id.get<std::string>();

    auto query = j.value("query", json());
    if (!query.is_null() && !query.is_string()) throw ParseError(line, "query must be a string");
    c.query = query.is_string() ? query.get<std::string>() : std::string{};

    auto paths = j.value("image_paths", json());
    if (!paths.is_array() || paths.empty())
        throw ParseError(line, "image_paths must be a non-empty array");
    for (const auto& p : paths) {
        if (!p.is_string()) throw ParseError(line, "image path must be a string");
        auto rel = p.get<std::string>();
        try {
            c.images.push_back(ImagePayload::from_file(base_dir / rel, rel));
        } catch (const ImageError& e) {
            throw ParseError(line, e.what());
        }
    }

    auto gt = j.value("ground_truth", json());
    if (gt.is_string()) {
        try {
            c.ground_truth = ConditionName::parse(gt.get<std::string>());
        } catch (const EmptyName& e) {
            throw ParseError(line, e.what());
        }
    } else if (!gt.is_null()) {
        throw ParseError(line, "ground_truth must be a string or null");
    }

    c.split = parse_split(j.value("split", json()), line);

    auto ref = j.value("reference_response", json());
    if (ref.is_string()) c.reference_response = ref.get<std::string>();
    return c;
}

} // namespace

Dataset parse_dataset(std::string_view jsonl, const std::filesystem::path& base_dir) {
    std::vector<DermCase> cases;
    std::unordered_map<std::string, std::size_t> seen;
    auto lines = text::split_lines(jsonl);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw ParseError(i + 1, std::string("malformed JSON: ") + e.what());
        }
        auto c = parse_case(j, i + 1, base_dir);
        if (!seen.emplace(c.case_id, i).second) throw DuplicateCaseId(c.case_id);
        cases.push_back(std::move(c));
    }
    return Dataset(std::move(cases));
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), path.parent_path());
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    for (const auto& c : dataset.cases()) {
        json j;
        j["case_id"] = c.case_id;
        j["query"] = c.query;
        j["image_paths"] = json::array();
        for (const auto& img : c.images) j["image_paths"].push_back(img.source_path());
        j["ground_truth"] = c.ground_truth ? json(c.ground_truth->raw()) : json();
        j["split"] = std::string(to_string(c.split));
        if (c.reference_response) j["reference_response"] = *c.reference_response;
        out += j.dump();
        out += '\n';
    }
    return out;
}

} // namespace dermdx
