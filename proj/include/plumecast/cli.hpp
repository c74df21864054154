#ifndef PLUMECAST_CLI_HPP
#define PLUMECAST_CLI_HPP

namespace plumecast {

/// Entry point of the plumecast tool. Returns the process exit code: 0 on
/// success, 2 for usage and configuration errors, 1 for everything else.
int run_cli(int argc, char** argv);

}  // namespace plumecast

#endif
