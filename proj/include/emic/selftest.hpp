#pragma once

#include <ostream>

namespace emic {

// Runs the module invariant suites (index algebra, decay sampling,
// attention oracles, coder round trips, container/params IO, end-to-end
// bit-exactness, gradient spot checks). Prints one line per suite; returns
// 0 iff everything passed.
int run_selftest(std::ostream& out);

}  // namespace emic
