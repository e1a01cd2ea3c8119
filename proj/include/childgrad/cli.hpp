#pragma once

namespace childgrad {

// Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure.
int cli_main(int argc, char** argv);

}  // namespace childgrad
