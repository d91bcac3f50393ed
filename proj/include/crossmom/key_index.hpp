#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "crossmom/errors.hpp"

namespace crossmom {

namespace detail {

struct TransparentStringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

template <class Key>
struct KeyMapTraits {
    using hash = std::hash<Key>;
    using equal = std::equal_to<Key>;
};

template <>
struct KeyMapTraits<std::string> {
    using hash = TransparentStringHash;
    using equal = std::equal_to<>;
};

}  // namespace detail

/// Interns opaque keys into dense indices 0..size()-1 in first-seen order.
template <class Key>
class KeyIndex {
public:
    using index_type = std::uint32_t;

    index_type intern(const Key& key) {
        auto it = map_.find(key);
        if (it != map_.end()) {
            return it->second;
        }
        return insert(key);
    }

    /// Interning from a view avoids building a std::string for keys already
    /// present.
    template <class K = Key, class = std::enable_if_t<std::is_same_v<K, std::string>>>
    index_type intern(std::string_view key) {
        auto it = map_.find(key);
        if (it != map_.end()) {
            return it->second;
        }
        return insert(std::string(key));
    }

    std::optional<index_type> find(const Key& key) const {
        auto it = map_.find(key);
        if (it == map_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    template <class K = Key, class = std::enable_if_t<std::is_same_v<K, std::string>>>
    std::optional<index_type> find(std::string_view key) const {
        auto it = map_.find(key);
        if (it == map_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    const Key& key(index_type i) const { return keys_[i]; }
    const std::vector<Key>& keys() const noexcept { return keys_; }
    std::size_t size() const noexcept { return keys_.size(); }

    std::size_t memory_bytes() const noexcept {
        std::size_t bytes = keys_.capacity() * sizeof(Key) + map_.bucket_count() * sizeof(void*) +
                            map_.size() * (sizeof(Key) + sizeof(index_type) + 2 * sizeof(void*));
        if constexpr (std::is_same_v<Key, std::string>) {
            for (const auto& k : keys_) {
                bytes += 2 * k.capacity();
            }
        }
        return bytes;
    }

private:
    index_type insert(Key key) {
        if (keys_.size() >= std::numeric_limits<index_type>::max()) {
            throw InvalidArgument("too many distinct keys");
        }
        const auto idx = static_cast<index_type>(keys_.size());
        map_.emplace(key, idx);
        keys_.push_back(std::move(key));
        return idx;
    }

    std::unordered_map<Key, index_type, typename detail::KeyMapTraits<Key>::hash,
                       typename detail::KeyMapTraits<Key>::equal>
        map_;
    std::vector<Key> keys_;
};

template <class Key>
std::string key_to_string(const Key& key) {
    if constexpr (std::is_convertible_v<const Key&, std::string_view>) {
        return std::string(std::string_view(key));
    } else {
        return std::to_string(key);
    }
}

}  // namespace crossmom
