#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sevalign {

/// Bad command line; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "7", "1..5" or "1,4,9".
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Runs one command. `args` excludes the program name, e.g.
/// {"gen-data", "--seed", "7", "--out", "d"}. Returns 0 on success, 2 on a
/// usage error and 1 on any other failure; failures print one `error:` line
/// to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sevalign
