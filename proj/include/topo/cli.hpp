#pragma once

#include <string>
#include <vector>

namespace topo {

// Entry point shared by the topoens binary and the CLI tests. `args` excludes
// the program name. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numerical failure (non-convergence or divergence).
int run_cli(const std::vector<std::string>& args);

}  // namespace topo
