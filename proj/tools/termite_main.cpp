// Command-line front end: runs a session script from a file, from -c, or
// interactively from stdin.  An optional trace file captures every engine
// event as one JSON object per line.
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "termite/script.hpp"

namespace {

int usage(std::ostream& out) {
  out << "usage: termite [--trace FILE] [--script FILE | -c 'CMD; CMD...']\n"
         "\n"
         "Runs belief-network session commands.  Without --script or -c the\n"
         "commands are read from stdin, one per line.\n"
         "\n"
         "commands:\n"
         "  load FILE                     load a network\n"
         "  skew                          skewness report\n"
         "  query VAR [VAR...]            register a query\n"
         "  pull QUERY N                  pull N terms, print interval report\n"
         "  step QUERY N                  pull N terms, print each term\n"
         "  bound QUERY                   bound on the next term's mass\n"
         "  mlch QUERY BUDGET             most likely assignment (0 = no budget)\n"
         "  evidence VAR VALUE            observe a value\n"
         "  add-node NAME VALS PARENTS R..  extend: new variable ('-' = no parents)\n"
         "  add-arc PARENT CHILD ROW...   extend: new arc with the child's table\n"
         "  bench GATES FAULTS BUDGET [SEED]  circuit diagnosis benchmark\n"
         "  fixture worked-example        three-factor demonstration session\n"
         "  dump | validate | stats       introspection\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  std::string script_path;
  std::string inline_cmds;
  std::string trace_path;

  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--help" || a == "-h") return usage(std::cout), 0;
    if (a == "--trace") {
      if (i + 1 >= args.size()) return usage(std::cerr);
      trace_path = args[++i];
    } else if (a == "--script") {
      if (i + 1 >= args.size()) return usage(std::cerr);
      script_path = args[++i];
    } else if (a == "-c") {
      if (i + 1 >= args.size()) return usage(std::cerr);
      inline_cmds = args[++i];
    } else {
      std::cerr << "unknown argument '" << a << "'\n";
      return usage(std::cerr);
    }
  }

  std::unique_ptr<std::ofstream> trace;
  if (!trace_path.empty()) {
    trace = std::make_unique<std::ofstream>(trace_path);
    if (!*trace) {
      std::cerr << "cannot open trace file '" << trace_path << "'\n";
      return 1;
    }
  }

  termite::ScriptRunner runner(std::cout, trace.get());
  int failures = 0;
  if (!script_path.empty()) {
    std::ifstream in(script_path);
    if (!in) {
      std::cerr << "cannot open script '" << script_path << "'\n";
      return 1;
    }
    failures = runner.run(in);
  } else if (!inline_cmds.empty()) {
    std::string lines = inline_cmds;
    for (auto& c : lines)
      if (c == ';') c = '\n';
    std::istringstream in(lines);
    failures = runner.run(in);
  } else {
    failures = runner.run(std::cin);
  }
  return failures == 0 ? 0 : 1;
}
