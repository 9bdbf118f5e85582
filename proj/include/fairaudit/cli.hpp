#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fairaudit {

// Exit codes: 0 success, 1 usage or validation error, 2 runtime error.
int cli_main(int argc, char** argv);
// args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fairaudit
