#pragma once

#include <set>
#include <string>
#include <vector>

#include "e2vts/autolabel.hpp"
#include "e2vts/config.hpp"

namespace e2vts::cli {

enum ExitCode { kOk = 0, kInvalidInput = 1, kRuntimeFailure = 2 };

/// Runs one subcommand (process, label, train-ood, eval, bench, serve).
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

/// Keys accepted in a config file; anything else is rejected.
const std::set<std::string>& known_config_keys();

/// label.* keys; the RANSAC seed comes from `seed`.
autolabel::PropagationOptions propagation_options_from(const Config& c);

}  // namespace e2vts::cli
