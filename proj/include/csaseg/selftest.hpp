#pragma once

#include <ostream>

namespace csaseg {

// runs the engine invariants on a generated tiny model, printing one
// PASS/FAIL line per check; returns the number of failures
int run_selftest(std::ostream& out);

} // namespace csaseg
