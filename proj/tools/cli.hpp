#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cpnn::cli {

constexpr int kSchemaVersion = 1;

/// Runs one command line (args excludes the program name). The result JSON goes
/// to `out` as a single line; progress and tables go to `err`. Returns 0 (ok),
/// 1 (validation: bad flags, inputs or parameters) or 2 (runtime failure).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace cpnn::cli
