#pragma once

#include <map>
#include <string>
#include <vector>

#include "mdt/common.hpp"

namespace mdt {

// Ordered tag dimensions. Tags render as "<NAME=value>" and are prepended to
// source sentences in declaration order.
struct TagDimension {
    std::string name;
    std::vector<std::string> values;
};

struct TagSchema {
    std::vector<TagDimension> dimensions;

    static TagSchema checked(std::vector<TagDimension> dims);

    // Default two-dimensional schema: SYNTHETIC in {0,1} first, then DOMAIN.
    static TagSchema default_schema(const std::vector<std::string> &domains);

    const TagDimension *find(const std::string &name) const;
    bool value_allowed(const std::string &dim, const std::string &value) const;

    // All rendered tag tokens, in schema order. These must be reserved
    // atomically in every BPE model used with tagged data.
    std::vector<std::string> all_tokens() const;
};

struct TagSet {
    std::map<std::string, std::string> assignments; // dimension name -> value

    bool empty() const { return assignments.empty(); }
    bool operator==(const TagSet &o) const = default;
};

std::string render_tag(const std::string &dim, const std::string &value);

std::string inject_tags(const std::string &text, const TagSet &tags, const TagSchema &schema);

// Removes one leading run of valid schema tags. Reading is order-insensitive;
// a head token matching "<NAME=" for a schema dimension but carrying an
// illegal value is an error.
std::pair<std::string, TagSet> strip_tags(const std::string &text, const TagSchema &schema);

} // namespace mdt
