#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "melodia/common.hpp"

namespace melodia {

// Desk-scale defaults: 64 frames x 64 mel bins at 16 kHz / hop 256 keep every
// clip ~1 s and every test seconds-fast.
struct SpectrogramParams {
    int frames = 64;
    int bins = 64;
    int sample_rate_hz = 16000;
    int hop_samples = 256;
    float mel_lo_hz = 60.0f;
    float mel_hi_hz = 7800.0f;
};

struct MelSpectrogram {
    Eigen::MatrixXf data;  // frames x bins, nonnegative magnitudes
    int sample_rate_hz = 16000;
    int hop_samples = 256;
    float mel_lo_hz = 60.0f;
    float mel_hi_hz = 7800.0f;

    int frames() const { return static_cast<int>(data.rows()); }
    int bins() const { return static_cast<int>(data.cols()); }

    void validate() const;
};

struct NoteOnset {
    int frame = 0;
    int duration = 1;  // frames
};

// The note-level description of a clip: what plays and when. Two clips with
// the same content share onset frames and pitch classes no matter the style.
struct ContentSpec {
    std::vector<NoteOnset> onsets;  // strictly increasing frame indices
    std::vector<int> pitches;       // MIDI note numbers, aligned with onsets
    float tempo_bpm = 120.0f;

    void validate() const;
};

// Timbre: harmonic recipe, tilt and attack. `label` names the attribute class
// the recipe was drawn from (instrument / style / mood).
struct StyleSpec {
    std::vector<float> harmonic_amplitudes;  // >= 4 entries in [0,1]
    float spectral_tilt_db_per_octave = 0.0f;
    int attack_frames = 0;
    std::string label;

    void validate() const;
};

struct ChromaMatrix {
    Eigen::MatrixXf data;  // frames x 12, rows unit-norm or zero
};

struct OnsetEnvelope {
    std::vector<float> values;  // length = frames, nonnegative, values[0] = 0
};

// mel scale (HTK variant)
float hz_to_mel(float hz);
float mel_to_hz(float mel);
// fractional mel-bin position of a frequency under the given axis
float mel_bin_position(float hz, int bins, float mel_lo_hz, float mel_hi_hz);
// center frequency of a mel bin
float mel_bin_center_hz(int bin, int bins, float mel_lo_hz, float mel_hi_hz);
float midi_to_hz(int midi_note);

// Renders content through a style: additive harmonic stacks with attack/decay
// envelopes, deposited as narrow bumps on the mel axis. Deterministic.
MelSpectrogram render_clip(const ContentSpec& content, const StyleSpec& style,
                           int frames, int bins,
                           const SpectrogramParams& params = SpectrogramParams{});

// Folds mel-bin energy onto 12 pitch classes by bin center frequency
// (C=0 ... B=11); rows are L2-normalized, silent frames stay zero.
ChromaMatrix chroma(const MelSpectrogram& spec);

// Half-wave-rectified log spectral flux; values[0] = 0.
OnsetEnvelope onset_envelope(const MelSpectrogram& spec);

struct WavData {
    std::vector<float> samples;  // mono, [-1, 1]
    int sample_rate_hz = 0;
};

struct WavToMelParams {
    int window_samples = 1024;
    int hop_samples = 256;
    int bins = 64;
    float mel_lo_hz = 60.0f;
    float mel_hi_hz = 7800.0f;
};

WavData load_wav(const std::filesystem::path& path);  // 16-bit PCM mono only
MelSpectrogram wav_to_mel(const std::vector<float>& samples, int sample_rate_hz,
                          const WavToMelParams& params = WavToMelParams{});

// MSPC container: "MSPC", u32 header length, JSON header, row-major f32 data.
void save_mspc(const MelSpectrogram& spec, const std::filesystem::path& path);
MelSpectrogram load_mspc(const std::filesystem::path& path);

// 8-bit PGM, log-compressed, time on x, low mel bins at the bottom.
void save_pgm(const MelSpectrogram& spec, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic dataset generation

struct AttributeAxis {
    std::string name;                     // "instrument" | "style" | "mood"
    std::string prompt_template;          // e.g. "a solo {} music"
    std::vector<std::string> classes;
};

struct DatasetConfig {
    std::vector<AttributeAxis> axes;
    int clips_per_class = 10;
    SpectrogramParams spec;

    static DatasetConfig defaults();
};

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest location
    std::string attribute_axis;
    std::string class_label;
    std::string prompt;
    ContentSpec content;
    StyleSpec style;
};

struct BenchEntry {
    ManifestEntry source;
    std::string target_class;
    std::string target_prompt;
    std::string edit_type;  // axis being edited
};

// Class-conditioned style recipes. The mapping is fixed so labels stay
// meaningful across runs: harmonic recipe <- instrument, tilt/texture <-
// style, tempo/mode <- mood.
StyleSpec style_for_class(const std::string& axis, const std::string& class_label);
std::string prompt_for(const AttributeAxis& axis, const std::string& class_label);

// Draws random content for one clip of the given axis/class. Content varies
// freely within a class; only style is tied to the label.
ContentSpec sample_content(const std::string& axis, const std::string& class_label,
                           int frames, Rng& rng);

// Writes one spectrogram file per clip plus manifest.json; returns entries.
std::vector<ManifestEntry> gen_dataset(const DatasetConfig& config, uint64_t seed,
                                       const std::filesystem::path& out_dir);

// Edit benchmark on top of gen_dataset: each entry pairs a source clip with a
// target class drawn from the same axis.
std::vector<BenchEntry> gen_benchmark(const DatasetConfig& config, uint64_t seed,
                                      const std::filesystem::path& out_dir);

std::string manifest_to_json(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> manifest_from_json(const std::string& json_text);
std::string benchmark_to_json(const std::vector<BenchEntry>& entries);
std::vector<BenchEntry> benchmark_from_json(const std::string& json_text);

}  // namespace melodia
