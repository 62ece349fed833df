#pragma once

#include <ostream>

namespace gridforge {

/// Entry point of the gridforge command line. Returns the process exit code:
/// 0 success, 1 failed check, 2 usage error, 3 learning did not converge,
/// 4-8 data errors (see error.hpp).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gridforge
