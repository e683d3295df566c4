#pragma once

namespace gsr::cli {

/// Exit codes: 0 success, 1 input or validation error, 2 numerical failure
/// (non-convergence, lost plasma, divergent λ, every replicate failed).
int run(int argc, const char* const* argv);

}  // namespace gsr::cli
