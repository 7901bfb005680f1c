#pragma once

#include <iosfwd>

namespace smpcl {

/// The `smpcl` command line. Returns the process exit code: 0 on success,
/// 1 on invalid input or flags, 2 on runtime failure (including failed
/// gradient checks). Messages go to `err`, results and CSV to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smpcl
