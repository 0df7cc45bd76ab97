#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dtaas/gateway/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::map<std::string, std::string> env;
  for (const char* key : {"DTAAS_ADDR", "DTAAS_TOKEN"}) {
    if (const char* v = std::getenv(key)) env.emplace(key, v);
  }
  return dtaas::gateway::run_cli(args, std::cout, std::cerr, env);
}
