#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smrag::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kBackend = 4, kInternal = 5 };

/// Parses and runs one command. Normal output goes to `out`; failures print
/// a single JSON line {"error": kind, "message": ...} to `err`.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

/// Markdown flag reference built from the parser itself.
std::string flag_reference();

}  // namespace smrag::cli
