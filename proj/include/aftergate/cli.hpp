#pragma once

namespace aftergate {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
/// 3 sweep in which no cell admitted a feasible attack.
int run_cli(int argc, char** argv);

}  // namespace aftergate
