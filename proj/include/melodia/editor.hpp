#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "melodia/denoiser.hpp"
#include "melodia/metrics.hpp"
#include "melodia/repository.hpp"
#include "melodia/sampler.hpp"

namespace melodia {

// One edit, fully specified. Layer indices are 1-based throughout, matching
// the window phrasing "8-14".
struct EditConfig {
    int t_start = 700;
    std::set<int> layer_window = {8, 9, 10, 11, 12, 13, 14};
    float cfg_w = 5.5f;
    int steps = 50;
    uint64_t seed = 0;

    void validate(int layers_total) const;
    std::string window_name() const;  // "8-14", "none", "3,5,9"
};

// "8-14", "1-16", "none", or a comma list "3,5,9"
std::set<int> parse_layer_window(const std::string& text);

struct CaptureResult {
    Latent z_start;
    AttentionRepository repo;
    int t_start_effective = 0;
};

// Encode + partial inversion, recording SA queries/keys for every visited
// step into a fresh repository.
CaptureResult capture(const Checkpoint& ckpt, const MelSpectrogram& source,
                      const EditConfig& config);

struct EditResult {
    MelSpectrogram edited;
    MelSpectrogram reconstruction;  // no-override, null-prompt reference
    EditConfig config;
    int t_start_effective = 0;
    double capture_seconds = 0.0;
    double edit_seconds = 0.0;
    std::string repository_path;                    // set when the repo was persisted
    std::map<int, int> override_queries_per_layer;  // instrumentation

    std::string to_json() const;
};

// The full pipeline: capture, then a guided reverse pass with the stored
// source maps injected into the window layers, plus the reference
// reconstruction from the same prior.
EditResult edit(const Checkpoint& ckpt, const MelSpectrogram& source,
                const std::string& target_prompt, const EditConfig& config);

// Reverse pass from an existing capture; lets harnesses reuse one capture
// across many windows. `meta` carries the output spectrogram geometry.
MelSpectrogram edit_from_capture(const Checkpoint& ckpt, const CaptureResult& cap,
                                 const std::string& target_prompt, const EditConfig& config,
                                 const SpectrogramParams& meta,
                                 std::map<int, int>* override_queries = nullptr);

// ---------------------------------------------------------------------------
// harnesses

struct EditTask {
    MelSpectrogram source;
    std::string target_prompt;
    std::string target_class;
    std::string source_class;
};

struct AblationRow {
    std::string window_name;
    double adherence = 0.0;
    double structure_distance = 0.0;
    double chroma_similarity = 0.0;
    double fad = 0.0;
    double asb = 0.0;
    double amb = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    std::string to_json() const;
    std::string to_text() const;
};

// Edits every task once per window (captures and reconstructions shared),
// scores each window over the set, then composes ASB/AMB across the window
// cohort.
AblationTable layer_ablation_sweep(const Checkpoint& ckpt, const std::vector<EditTask>& tasks,
                                   const std::vector<std::set<int>>& windows,
                                   const EditConfig& base_config,
                                   const AttributeClassifier& classifier);

std::vector<std::set<int>> default_ablation_windows();

struct SweepPoint {
    int t_start = 0;
    double adherence = 0.0;
    double structure_distance = 0.0;
};

struct SweepCurve {
    std::vector<SweepPoint> points;
    std::string window_name;
    std::string to_json() const;
};

SweepCurve t_start_sweep(const Checkpoint& ckpt, const std::vector<EditTask>& tasks,
                         const std::vector<int>& t_starts, const EditConfig& base_config,
                         const AttributeClassifier& classifier);

// simple deterministic SVG scatter/line plot of one or more curves
std::string sweep_plot_svg(const std::vector<SweepCurve>& curves);

}  // namespace melodia
