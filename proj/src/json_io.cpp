#include "cpnn/json_io.hpp"

#include "cpnn/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cpnn {
namespace {

void write(std::string& out, const nlohmann::json& j, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
  case nlohmann::json::value_t::object: {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += '{';
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!first) out += ',';
      first = false;
      newline(depth + 1);
      out += nlohmann::json(it.key()).dump();
      out += indent < 0 ? ":" : ": ";
      write(out, it.value(), indent, depth + 1);
    }
    newline(depth);
    out += '}';
    return;
  }
  case nlohmann::json::value_t::array: {
    if (j.empty()) {
      out += "[]";
      return;
    }
    // Numeric arrays stay on one line.
    bool scalars = true;
    for (const auto& v : j) scalars = scalars && v.is_primitive();
    out += '[';
    bool first = true;
    for (const auto& v : j) {
      if (!first) out += ",";
      if (!scalars) newline(depth + 1);
      else if (!first && indent >= 0) out += ' ';
      first = false;
      write(out, v, indent, depth + 1);
    }
    if (!scalars) newline(depth);
    out += ']';
    return;
  }
  case nlohmann::json::value_t::number_float: {
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
      out += "null";
      return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
    return;
  }
  default:
    out += j.dump();
  }
}

} // namespace

std::string dump_json(const nlohmann::json& j, int indent) {
  std::string out;
  write(out, j, indent, 0);
  return out;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << dump_json(j, indent) << '\n';
  if (!f) throw Error("write failed: " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

} // namespace cpnn
