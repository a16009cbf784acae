#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace smolder {

inline constexpr const char* kCommands[] = {"label-ir", "synth", "build-dataset", "train", "infer", "eval", "report"};

std::string usage_text();

/// Runs one command. args excludes the program name. Returns the process exit status:
/// 0 on success, 1 on a failed command, 2 on a usage error.
int dispatch_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smolder
