#pragma once

namespace csqr {

// Full command surface (simulate / fit / sqte / eval / report).  Returns
// the process exit code: 0 success, 2 usage or configuration error,
// 3 data or schema error, 4 numeric failure.  Exposed as a function so
// tests can drive the CLI in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace csqr
