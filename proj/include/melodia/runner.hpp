#pragma once

#include <string>

namespace melodia::run {

// Batch entry points behind the C API. Each takes a JSON options object and
// returns a JSON report; artifacts land under the options' output directory.
std::string run_synth(const std::string& options_json);
std::string run_train(const std::string& options_json);
std::string run_probe(const std::string& options_json);
std::string run_eval(const std::string& options_json);
std::string run_sweep(const std::string& options_json);

}  // namespace melodia::run
