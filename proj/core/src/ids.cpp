#include "dovis/ids.hpp"

#include "dovis/error.hpp"

namespace dovis {

IdIndex::IdIndex(std::vector<std::string> ids) : ids_(std::move(ids)) {
    lookup_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!lookup_.emplace(ids_[i], i).second) {
            throw InvalidArgument("duplicate id '" + ids_[i] + "'");
        }
    }
}

std::optional<std::size_t> IdIndex::find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t IdIndex::at(std::string_view id) const {
    if (auto idx = find(id)) {
        return *idx;
    }
    throw ValidationError("unknown id '" + std::string(id) + "'");
}

} // namespace dovis
