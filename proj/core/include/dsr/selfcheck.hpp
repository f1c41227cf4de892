#pragma once

#include <ostream>

namespace dsr {

// Runtime verification battery behind the `check` subcommand: gradient
// checks, interpolation and attention identities, regularizer closed forms,
// dependency constraints, the cost-model anchors and generator round-trips.
// Prints one line per check; returns the number of failures.
int run_selfcheck(std::ostream& os);

}  // namespace dsr
