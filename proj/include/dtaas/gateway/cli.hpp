#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace dtaas::gateway {

/// The `dtaas` command line without process globals: `args` excludes the
/// program name, `env` supplies DTAAS_ADDR / DTAAS_TOKEN. Returns the exit
/// code; API failures print `<CODE>: <message>` on `err` and return 1.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::map<std::string, std::string>& env);

}  // namespace dtaas::gateway
