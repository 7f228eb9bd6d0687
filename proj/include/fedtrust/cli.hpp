#pragma once

namespace fedtrust {

// Full command-line entry point (run / grid / shapley-check / gradcheck /
// report). Returns 0 on success, 1 on usage errors, 2 on runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace fedtrust
