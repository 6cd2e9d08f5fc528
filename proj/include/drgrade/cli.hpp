#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace drgrade {

/// Entry point of the drgrade executable. Returns 0 on success, 1 on an
/// operational error (I/O, bad data) and 2 on a usage error. Each
/// successful subcommand ends its stdout with one JSON summary line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace drgrade
