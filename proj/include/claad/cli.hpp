#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace claad {

// claad <prep|synth|train|eval|report> --config <path> [--out <dir>] [--seed <u64>]
// Returns 0 on success, 1 config error, 2 data error, 3 numerical failure.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_run(int argc, char** argv);

}  // namespace claad
