#include "mdt/toml.hpp"

#include <cctype>
#include <sstream>

#include "mdt/common.hpp"

namespace mdt {

using nlohmann::json;

namespace {

struct Parser {
    const std::string &origin;
    std::size_t line_no = 0;

    [[noreturn]] void fail(const std::string &what) const {
        throw Error(origin + ":" + std::to_string(line_no) + ": " + what);
    }

    static std::string strip_comment(const std::string &line) {
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
            if (c == '#' && !in_string) return line.substr(0, i);
        }
        return line;
    }

    std::vector<std::string> split_key_path(const std::string &s) const {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : s) {
            if (c == '.') {
                if (trim(cur).empty()) fail("empty key segment in \"" + s + "\"");
                parts.push_back(trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (trim(cur).empty()) fail("empty key segment in \"" + s + "\"");
        parts.push_back(trim(cur));
        return parts;
    }

    std::string parse_string(const std::string &s) const {
        if (s.size() < 2 || s.front() != '"' || s.back() != '"')
            fail("expected quoted string: " + s);
        std::string out;
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            char c = s[i];
            if (c == '\\') {
                if (i + 2 >= s.size()) fail("dangling escape in string");
                char e = s[++i];
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                out += c;
            }
        }
        return out;
    }

    json parse_value(const std::string &raw) const {
        std::string s = trim(raw);
        if (s.empty()) fail("missing value");
        if (s.front() == '"') return parse_string(s);
        if (s == "true") return true;
        if (s == "false") return false;
        if (s.front() == '[') {
            if (s.back() != ']') fail("unterminated array: " + s);
            json arr = json::array();
            std::string inner = s.substr(1, s.size() - 2);
            std::string cur;
            bool in_string = false;
            int depth = 0;
            for (char c : inner) {
                if (c == '"') in_string = !in_string;
                if (!in_string && c == '[') ++depth;
                if (!in_string && c == ']') --depth;
                if (c == ',' && !in_string && depth == 0) {
                    if (!trim(cur).empty()) arr.push_back(parse_value(cur));
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            if (!trim(cur).empty()) arr.push_back(parse_value(cur));
            return arr;
        }
        // number
        try {
            std::size_t used = 0;
            if (s.find_first_of(".eE") == std::string::npos ||
                (s.size() > 1 && (s.rfind("0x", 0) == 0))) {
                long long v = std::stoll(s, &used);
                if (used == s.size()) return v;
            }
            double d = std::stod(s, &used);
            if (used == s.size()) return d;
        } catch (const std::exception &) {
        }
        fail("cannot parse value: " + s);
    }
};

json *descend(json &root, const std::vector<std::string> &path) {
    json *node = &root;
    for (const auto &key : path) {
        if (node->is_array()) node = &node->back();
        node = &(*node)[key];
        if (node->is_null()) *node = json::object();
    }
    if (node->is_array()) node = &node->back();
    return node;
}

} // namespace

json parse_toml(const std::string &text, const std::string &origin) {
    json root = json::object();
    json *current = &root;
    Parser p{origin};

    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++p.line_no;
        std::string s = trim(Parser::strip_comment(line));
        if (s.empty()) continue;

        if (s.size() >= 4 && s.rfind("[[", 0) == 0 && s.substr(s.size() - 2) == "]]") {
            auto path = p.split_key_path(s.substr(2, s.size() - 4));
            json *parent = &root;
            for (std::size_t i = 0; i + 1 < path.size(); ++i)
                parent = descend(*parent, {path[i]});
            json &arr = (*parent)[path.back()];
            if (arr.is_null()) arr = json::array();
            if (!arr.is_array()) p.fail("redefining key as array of tables: " + s);
            arr.push_back(json::object());
            current = &arr.back();
        } else if (s.front() == '[' && s.back() == ']') {
            auto path = p.split_key_path(s.substr(1, s.size() - 2));
            current = descend(root, path);
        } else {
            std::size_t eq = std::string::npos;
            bool in_string = false;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i] == '"') in_string = !in_string;
                if (s[i] == '=' && !in_string) {
                    eq = i;
                    break;
                }
            }
            if (eq == std::string::npos) p.fail("expected key = value: " + s);
            std::string key = trim(s.substr(0, eq));
            if (key.empty()) p.fail("empty key");
            if (key.front() == '"') key = p.parse_string(key);
            if (current->contains(key)) p.fail("duplicate key: " + key);
            (*current)[key] = p.parse_value(s.substr(eq + 1));
        }
    }
    return root;
}

json load_toml(const std::filesystem::path &path) {
    return parse_toml(read_file(path), path.string());
}

} // namespace mdt
