#pragma once

namespace docpipe::cli {

// Entry point for the docpipe executable. Returns the process exit code:
// 0 success, 1 I/O trouble, 2 malformed input, 3 bad flags.
int run(int argc, char** argv);

} // namespace docpipe::cli
