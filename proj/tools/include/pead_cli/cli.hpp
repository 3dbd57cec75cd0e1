#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pead::cli {

/// Runs one subcommand. `args` excludes the program name. Returns the
/// process exit status; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, used for the config hash stamped into outputs.
std::uint64_t fnv1a(std::string_view text);

}  // namespace pead::cli
