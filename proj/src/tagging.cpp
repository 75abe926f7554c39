#include "mdt/tagging.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace mdt {

namespace {

bool has_ws(const std::string &s) {
    return std::any_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

} // namespace

TagSchema TagSchema::checked(std::vector<TagDimension> dims) {
    std::set<std::string> names;
    for (const auto &d : dims) {
        if (d.name.empty() || has_ws(d.name))
            throw Error("tag dimension name must be non-empty without whitespace");
        if (!names.insert(d.name).second)
            throw Error("duplicate tag dimension: " + d.name);
        std::set<std::string> vals;
        for (const auto &v : d.values) {
            if (v.empty() || has_ws(v))
                throw Error("tag value must be non-empty without whitespace: dimension " + d.name);
            if (!vals.insert(v).second)
                throw Error("duplicate value \"" + v + "\" in dimension " + d.name);
        }
        if (d.values.empty()) throw Error("tag dimension " + d.name + " has no values");
    }
    return TagSchema{std::move(dims)};
}

TagSchema TagSchema::default_schema(const std::vector<std::string> &domains) {
    return checked({{"SYNTHETIC", {"0", "1"}}, {"DOMAIN", domains}});
}

const TagDimension *TagSchema::find(const std::string &name) const {
    for (const auto &d : dimensions)
        if (d.name == name) return &d;
    return nullptr;
}

bool TagSchema::value_allowed(const std::string &dim, const std::string &value) const {
    const TagDimension *d = find(dim);
    return d && std::find(d->values.begin(), d->values.end(), value) != d->values.end();
}

std::vector<std::string> TagSchema::all_tokens() const {
    std::vector<std::string> out;
    for (const auto &d : dimensions)
        for (const auto &v : d.values) out.push_back(render_tag(d.name, v));
    return out;
}

std::string render_tag(const std::string &dim, const std::string &value) {
    return "<" + dim + "=" + value + ">";
}

std::string inject_tags(const std::string &text, const TagSet &tags, const TagSchema &schema) {
    std::string prefix;
    for (const auto &d : schema.dimensions) {
        auto it = tags.assignments.find(d.name);
        if (it == tags.assignments.end())
            throw Error("inject_tags: missing dimension \"" + d.name + "\"");
        if (!schema.value_allowed(d.name, it->second))
            throw Error("inject_tags: illegal value \"" + it->second + "\" for dimension \"" +
                        d.name + "\"");
        if (!prefix.empty()) prefix += ' ';
        prefix += render_tag(d.name, it->second);
    }
    for (const auto &[name, value] : tags.assignments)
        if (!schema.find(name))
            throw Error("inject_tags: unknown dimension \"" + name + "\"");
    return prefix + " " + text;
}

std::pair<std::string, TagSet> strip_tags(const std::string &text, const TagSchema &schema) {
    TagSet tags;
    std::size_t pos = 0;
    while (true) {
        std::size_t start = pos;
        while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;
        std::size_t end = start;
        while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
        if (end == start) break;
        std::string token = text.substr(start, end - start);

        bool matched = false;
        for (const auto &d : schema.dimensions) {
            std::string head = "<" + d.name + "=";
            if (token.rfind(head, 0) != 0) continue;
            if (token.size() <= head.size() || token.back() != '>')
                throw Error("strip_tags: malformed tag token \"" + token + "\"");
            std::string value = token.substr(head.size(), token.size() - head.size() - 1);
            if (!schema.value_allowed(d.name, value))
                throw Error("strip_tags: illegal value \"" + value + "\" for dimension \"" +
                            d.name + "\"");
            // a second tag for an already-assigned dimension starts a new run
            if (tags.assignments.count(d.name)) return {trim(text.substr(start)), tags};
            tags.assignments[d.name] = value;
            matched = true;
            break;
        }
        if (!matched) break;
        pos = end;
    }
    return {trim(text.substr(pos)), tags};
}

} // namespace mdt
