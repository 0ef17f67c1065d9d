#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "melodia/denoiser.hpp"
#include "melodia/spectra.hpp"

namespace fixtures {

// build-tree scratch space, wiped per name on first use in a run
std::filesystem::path scratch_dir(const std::string& name);

// small three-axis dataset, synthesized once per test run
const std::vector<melodia::ManifestEntry>& dataset();
std::filesystem::path dataset_dir();

// briefly trained checkpoint shared by the mechanics tests; quality-bearing
// thresholds live in the acceptance suite with a properly trained model
const melodia::Checkpoint& tiny_model();

// simple local onset oracle: frames of local maxima above half the global max
std::vector<int> onset_peak_frames(const melodia::MelSpectrogram& spec);

}  // namespace fixtures
