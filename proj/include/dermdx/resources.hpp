#pragma once

#include <span>
#include <string_view>

namespace dermdx::resources {

/// A file from prompts/ or rules/ compiled into the library.
struct Resource {
    std::string_view name;
    std::string_view content;
};

std::span<const Resource> all() noexcept;

} // namespace dermdx::resources
