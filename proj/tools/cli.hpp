#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace ecglab::cli {

/// Parsed flags of every subcommand.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::size_t workers = 1;

  std::string record;      // render
  std::string image;       // augment
  std::size_t instances = 10;  // grad-check
  std::size_t steps = 0;   // train
  std::string data;        // train, eval, snr-report
  std::string mode;        // eval
  std::string checkpoint;  // eval, inspect-checkpoint
  double fraction = 1.0;   // eval
  std::vector<std::string> records;  // snr-report
};

/// The full command tree, bound to `flags`.
std::unique_ptr<CLI::App> make_app(Flags& flags);

/// Runs one invocation. JSON results go to `out`, log lines to `err`.
/// Exit codes: 0 ok, 2 validation error, 3 numeric divergence, 4 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ecglab::cli
