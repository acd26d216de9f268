#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dovis {

/// Bijection between opaque wire identifiers and dense indices [0, n).
class IdIndex {
public:
    IdIndex() = default;
    /// Order of `ids` defines the index. Throws InvalidArgument on duplicates.
    explicit IdIndex(std::vector<std::string> ids);

    std::optional<std::size_t> find(std::string_view id) const;
    /// Throws ValidationError for an unknown id.
    std::size_t at(std::string_view id) const;
    const std::string &name(std::size_t index) const { return ids_.at(index); }
    const std::vector<std::string> &names() const noexcept { return ids_; }
    std::size_t size() const noexcept { return ids_.size(); }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

} // namespace dovis
