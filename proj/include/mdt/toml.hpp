#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace mdt {

// Minimal TOML reader covering the subset the experiment configs use:
// comments, [tables], [[arrays of tables]], dotted table headers, and
// key = value with strings, integers, floats, booleans and single-line
// arrays. Returns the document as a JSON tree.
nlohmann::json parse_toml(const std::string &text, const std::string &origin = "<toml>");
nlohmann::json load_toml(const std::filesystem::path &path);

} // namespace mdt
