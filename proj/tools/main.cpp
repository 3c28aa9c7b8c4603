#include <iostream>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("stts"));
  spdlog::set_pattern("[%l] %v");
  std::vector<std::string> args(argv + 1, argv + argc);
  return stts::cli::run_cli(args, std::cout, std::cerr);
}
