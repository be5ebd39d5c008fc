#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sift::service {

// Command-line entry point. Subcommands: model gen, data gen, tagger train,
// eval run, eval sweep, serve, repl. Returns 0 on success, 1 on a domain
// error (bad artifact, infeasible request, solver overflow), 2 on a usage
// error. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace sift::service
