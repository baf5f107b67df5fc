#pragma once

namespace jscc {

// Parses and runs one CLI invocation. Throws ConfigError / CodecUnavailable /
// Error; the binary entry point maps exceptions to exit codes.
int run_cli(int argc, char** argv);

}  // namespace jscc
