#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

namespace cpnn {

/// Serialises like json::dump but prints every floating-point value with 17
/// significant digits.
std::string dump_json(const nlohmann::json& j, int indent = -1);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = 2);
/// Throws ParseError naming the file on I/O or syntax errors.
nlohmann::json read_json_file(const std::filesystem::path& path);

} // namespace cpnn
