#pragma once

#include <ostream>

namespace assr::tools {

/// Quick invariant checks over every module. One line per check; returns
/// true when all pass.
bool run_selftest(std::ostream& os);

}  // namespace assr::tools
