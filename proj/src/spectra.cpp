#include "melodia/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <nlohmann/json.hpp>

#include "melodia/io.hpp"

namespace melodia {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// validation

void MelSpectrogram::validate() const {
    require(data.rows() >= 1 && data.cols() >= 1, ErrorCode::invalid_argument,
            "spectrogram must have at least one frame and one bin");
    require(sample_rate_hz > 0 && hop_samples > 0, ErrorCode::invalid_argument,
            "spectrogram metadata must be positive");
    require(mel_lo_hz > 0.0f && mel_hi_hz > mel_lo_hz, ErrorCode::invalid_argument,
            "mel range must satisfy 0 < lo < hi");
    require((data.array() >= 0.0f).all(), ErrorCode::invalid_argument,
            "spectrogram magnitudes must be nonnegative");
}

void ContentSpec::validate() const {
    require(onsets.size() == pitches.size(), ErrorCode::invalid_argument,
            "onsets and pitches must be aligned");
    require(tempo_bpm > 0.0f, ErrorCode::invalid_argument, "tempo must be positive");
    for (size_t i = 0; i < onsets.size(); ++i) {
        require(onsets[i].duration >= 1, ErrorCode::invalid_argument,
                "onset " + std::to_string(i) + " has non-positive duration");
        if (i > 0) {
            require(onsets[i].frame > onsets[i - 1].frame, ErrorCode::invalid_argument,
                    "onset frames must be strictly increasing (index " + std::to_string(i) + ")");
        }
        require(pitches[i] >= 21 && pitches[i] <= 108, ErrorCode::invalid_argument,
                "pitch " + std::to_string(pitches[i]) + " outside MIDI range [21,108]");
    }
}

void StyleSpec::validate() const {
    require(harmonic_amplitudes.size() >= 4, ErrorCode::invalid_argument,
            "style needs at least 4 harmonic amplitudes");
    bool any = false;
    for (float a : harmonic_amplitudes) {
        require(a >= 0.0f && a <= 1.0f, ErrorCode::invalid_argument,
                "harmonic amplitudes must lie in [0,1]");
        any = any || a > 0.0f;
    }
    require(any, ErrorCode::invalid_argument, "at least one harmonic amplitude must be > 0");
    require(attack_frames >= 0, ErrorCode::invalid_argument, "attack_frames must be >= 0");
}

// ---------------------------------------------------------------------------
// mel scale

float hz_to_mel(float hz) { return 2595.0f * std::log10(1.0f + hz / 700.0f); }

float mel_to_hz(float mel) { return 700.0f * (std::pow(10.0f, mel / 2595.0f) - 1.0f); }

float mel_bin_position(float hz, int bins, float mel_lo_hz, float mel_hi_hz) {
    const float lo = hz_to_mel(mel_lo_hz);
    const float hi = hz_to_mel(mel_hi_hz);
    return (hz_to_mel(hz) - lo) / (hi - lo) * static_cast<float>(bins) - 0.5f;
}

float mel_bin_center_hz(int bin, int bins, float mel_lo_hz, float mel_hi_hz) {
    const float lo = hz_to_mel(mel_lo_hz);
    const float hi = hz_to_mel(mel_hi_hz);
    const float mel = lo + (static_cast<float>(bin) + 0.5f) * (hi - lo) / static_cast<float>(bins);
    return mel_to_hz(mel);
}

float midi_to_hz(int midi_note) {
    return 440.0f * std::pow(2.0f, static_cast<float>(midi_note - 69) / 12.0f);
}

// ---------------------------------------------------------------------------
// rendering

namespace {

constexpr float kBumpSigmaBins = 0.6f;
constexpr int kBumpRadiusBins = 3;
constexpr float kDecayFrames = 20.0f;

// note envelope: linear attack over `attack` frames, then exponential decay
float note_envelope(int frames_since_onset, int attack) {
    if (frames_since_onset < attack) {
        return static_cast<float>(frames_since_onset + 1) / static_cast<float>(attack + 1);
    }
    return std::exp(-static_cast<float>(frames_since_onset - attack) / kDecayFrames);
}

void deposit_tone(Eigen::MatrixXf& row_view, int frame, float hz, float amplitude, int bins,
                  float mel_lo, float mel_hi) {
    const float pos = mel_bin_position(hz, bins, mel_lo, mel_hi);
    const int lo = std::max(0, static_cast<int>(std::floor(pos)) - kBumpRadiusBins);
    const int hi = std::min(bins - 1, static_cast<int>(std::ceil(pos)) + kBumpRadiusBins);
    for (int b = lo; b <= hi; ++b) {
        const float d = static_cast<float>(b) - pos;
        row_view(frame, b) += amplitude * std::exp(-d * d / (2.0f * kBumpSigmaBins * kBumpSigmaBins));
    }
}

}  // namespace

MelSpectrogram render_clip(const ContentSpec& content, const StyleSpec& style, int frames,
                           int bins, const SpectrogramParams& params) {
    content.validate();
    style.validate();
    require(frames >= 1 && frames <= 4096 && bins >= 1 && bins <= 1024,
            ErrorCode::invalid_argument, "frames/bins outside supported bounds");
    for (size_t i = 0; i < content.onsets.size(); ++i) {
        if (content.onsets[i].frame >= frames || content.onsets[i].frame < 0) {
            fail(ErrorCode::out_of_range,
                 "onset " + std::to_string(i) + " at frame " +
                     std::to_string(content.onsets[i].frame) + " beyond clip length " +
                     std::to_string(frames));
        }
    }

    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Zero(frames, bins);
    spec.sample_rate_hz = params.sample_rate_hz;
    spec.hop_samples = params.hop_samples;
    spec.mel_lo_hz = params.mel_lo_hz;
    spec.mel_hi_hz = params.mel_hi_hz;

    const float nyquist_cap = std::min(params.mel_hi_hz, 0.5f * static_cast<float>(params.sample_rate_hz));
    for (size_t n = 0; n < content.onsets.size(); ++n) {
        const NoteOnset& onset = content.onsets[n];
        const float f0 = midi_to_hz(content.pitches[n]);
        const int end = std::min(frames, onset.frame + onset.duration);
        for (int f = onset.frame; f < end; ++f) {
            const float env = note_envelope(f - onset.frame, style.attack_frames);
            for (size_t k = 0; k < style.harmonic_amplitudes.size(); ++k) {
                const float amp = style.harmonic_amplitudes[k];
                if (amp <= 0.0f) continue;
                const float hz = f0 * static_cast<float>(k + 1);
                if (hz < params.mel_lo_hz || hz > nyquist_cap) continue;
                const float tilt_gain =
                    std::pow(10.0f, style.spectral_tilt_db_per_octave *
                                        std::log2(static_cast<float>(k + 1)) / 20.0f);
                deposit_tone(spec.data, f, hz, env * amp * tilt_gain, bins, params.mel_lo_hz,
                             params.mel_hi_hz);
            }
        }
    }
    return spec;
}

// ---------------------------------------------------------------------------
// features

namespace {

// Fractional mel-bin position of a spectral peak at `bin`, refined by a
// quadratic fit of log energies over the three-bin neighborhood. Mel bins
// span more than a semitone in the melody register, so raw bin centers
// quantize pitch classes too coarsely; peak interpolation recovers the
// sub-bin tone position.
float refine_peak_position(const Eigen::MatrixXf& row_frame, int frame, int bin, int bins) {
    if (bin == 0 || bin == bins - 1) return static_cast<float>(bin);
    const float e0 = row_frame(frame, bin - 1);
    const float e1 = row_frame(frame, bin);
    const float e2 = row_frame(frame, bin + 1);
    const float floor_e = 1e-12f;
    const float l0 = std::log(std::max(e0, floor_e));
    const float l1 = std::log(std::max(e1, floor_e));
    const float l2 = std::log(std::max(e2, floor_e));
    const float denom = l0 - 2.0f * l1 + l2;
    if (denom >= -1e-9f) return static_cast<float>(bin);
    const float offset = std::clamp(0.5f * (l0 - l2) / denom, -1.0f, 1.0f);
    return static_cast<float>(bin) + offset;
}

}  // namespace

ChromaMatrix chroma(const MelSpectrogram& spec) {
    spec.validate();
    const int frames = spec.frames();
    const int bins = spec.bins();
    const float mel_lo = hz_to_mel(spec.mel_lo_hz);
    const float mel_hi = hz_to_mel(spec.mel_hi_hz);

    ChromaMatrix out;
    out.data = Eigen::MatrixXf::Zero(frames, 12);
    for (int f = 0; f < frames; ++f) {
        const float frame_peak = spec.data.row(f).maxCoeff();
        if (frame_peak <= 0.0f) continue;
        const float floor_e = 1e-4f * frame_peak;
        for (int b = 0; b < bins; ++b) {
            const float e = spec.data(f, b);
            if (e <= floor_e) continue;
            const float left = b > 0 ? spec.data(f, b - 1) : 0.0f;
            const float right = b < bins - 1 ? spec.data(f, b + 1) : 0.0f;
            if (e < left || e <= right) continue;  // local maxima only

            const float pos = refine_peak_position(spec.data, f, b, bins);
            const float mel = mel_lo + (pos + 0.5f) * (mel_hi - mel_lo) / static_cast<float>(bins);
            const float hz = mel_to_hz(mel);
            const double midi = 12.0 * std::log2(static_cast<double>(hz) / 440.0) + 69.0;
            const double lo = std::floor(midi);
            const int pc_lo = ((static_cast<int>(lo) % 12) + 12) % 12;
            const float w_hi = static_cast<float>(midi - lo);

            // the peak's mass: own bin plus the flanks that are not
            // themselves stronger peaks
            float mass = e;
            if (left < e) mass += left;
            if (right < e) mass += right;
            out.data(f, pc_lo) += mass * (1.0f - w_hi);
            out.data(f, (pc_lo + 1) % 12) += mass * w_hi;
        }
        const float norm = out.data.row(f).norm();
        if (norm > 0.0f) out.data.row(f) /= norm;
    }
    return out;
}

OnsetEnvelope onset_envelope(const MelSpectrogram& spec) {
    spec.validate();
    const int frames = spec.frames();
    const int bins = spec.bins();
    OnsetEnvelope env;
    env.values.assign(static_cast<size_t>(frames), 0.0f);
    for (int f = 1; f < frames; ++f) {
        float flux = 0.0f;
        for (int b = 0; b < bins; ++b) {
            const float d = std::log1p(spec.data(f, b)) - std::log1p(spec.data(f - 1, b));
            if (d > 0.0f) flux += d;
        }
        env.values[static_cast<size_t>(f)] = flux;
    }
    return env;
}

// ---------------------------------------------------------------------------
// WAV ingestion

WavData load_wav(const fs::path& path) {
    auto raw = io::read_file(path);
    io::Reader r(std::move(raw));
    r.expect_tag("RIFF", "wav");
    r.u32();  // riff size
    r.expect_tag("WAVE", "wav");

    uint16_t channels = 0;
    uint16_t bits = 0;
    uint32_t rate = 0;
    bool got_fmt = false;
    std::vector<float> samples;

    while (r.remaining() >= 8) {
        const std::string id = r.str(4);
        const uint32_t size = r.u32();
        if (id == "fmt ") {
            require(size >= 16, ErrorCode::format_error, "wav: short fmt chunk");
            uint8_t buf[16];
            r.bytes(buf, 16);
            const uint16_t format = static_cast<uint16_t>(buf[0] | buf[1] << 8);
            channels = static_cast<uint16_t>(buf[2] | buf[3] << 8);
            rate = static_cast<uint32_t>(buf[4]) | static_cast<uint32_t>(buf[5]) << 8 |
                   static_cast<uint32_t>(buf[6]) << 16 | static_cast<uint32_t>(buf[7]) << 24;
            bits = static_cast<uint16_t>(buf[14] | buf[15] << 8);
            require(format == 1, ErrorCode::format_error, "wav: only PCM supported");
            if (size > 16) r.str(size - 16);
            got_fmt = true;
        } else if (id == "data") {
            require(got_fmt, ErrorCode::format_error, "wav: data before fmt");
            require(bits == 16, ErrorCode::format_error, "wav: only 16-bit PCM supported");
            if (channels != 1) {
                fail(ErrorCode::format_error, "wav: expected 1 channel, got " +
                                                  std::to_string(channels));
            }
            const size_t count = size / 2;
            samples.resize(count);
            for (size_t i = 0; i < count; ++i) {
                uint8_t b[2];
                r.bytes(b, 2);
                const auto v = static_cast<int16_t>(uint16_t(b[0]) | uint16_t(b[1]) << 8);
                samples[i] = static_cast<float>(v) / 32768.0f;
            }
        } else {
            r.str(size);  // skip unknown chunk
        }
        if (size % 2 == 1 && r.remaining() > 0) r.str(1);  // chunk padding
    }
    require(got_fmt, ErrorCode::format_error, "wav: missing fmt chunk");
    require(!samples.empty(), ErrorCode::format_error, "wav: missing or empty data chunk");
    WavData out;
    out.samples = std::move(samples);
    out.sample_rate_hz = static_cast<int>(rate);
    return out;
}

namespace {

// iterative radix-2 FFT, in place
void fft_radix2(std::vector<std::complex<float>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const float ang = -2.0f * 3.14159265358979323846f / static_cast<float>(len);
        const std::complex<float> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<float> w(1.0f, 0.0f);
            for (size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace

MelSpectrogram wav_to_mel(const std::vector<float>& samples, int sample_rate_hz,
                          const WavToMelParams& params) {
    require(!samples.empty(), ErrorCode::invalid_argument, "wav_to_mel: empty input");
    require(params.hop_samples >= 1 && params.hop_samples <= params.window_samples,
            ErrorCode::invalid_argument, "wav_to_mel: hop must satisfy 1 <= hop <= window");
    require((params.window_samples & (params.window_samples - 1)) == 0,
            ErrorCode::invalid_argument, "wav_to_mel: window must be a power of two");
    require(sample_rate_hz > 0, ErrorCode::invalid_argument, "wav_to_mel: bad sample rate");

    const int win = params.window_samples;
    const int hop = params.hop_samples;
    const int half = win / 2;

    std::vector<float> padded = samples;
    if (static_cast<int>(padded.size()) < win) padded.resize(static_cast<size_t>(win), 0.0f);
    const int frames = 1 + static_cast<int>((padded.size() - static_cast<size_t>(win)) /
                                            static_cast<size_t>(hop));

    std::vector<float> hann(static_cast<size_t>(win));
    for (int i = 0; i < win; ++i) {
        hann[static_cast<size_t>(i)] =
            0.5f - 0.5f * std::cos(2.0f * 3.14159265358979323846f * static_cast<float>(i) /
                                   static_cast<float>(win));
    }

    // triangular mel filterbank over FFT bins; filter b spans neighbor centers
    const int bins = params.bins;
    Eigen::MatrixXf fb = Eigen::MatrixXf::Zero(bins, half + 1);
    auto center_mel = [&](int b) {
        const float lo = hz_to_mel(params.mel_lo_hz);
        const float hi = hz_to_mel(params.mel_hi_hz);
        return lo + (static_cast<float>(b) + 0.5f) * (hi - lo) / static_cast<float>(bins);
    };
    for (int b = 0; b < bins; ++b) {
        const float c_prev = center_mel(b - 1);
        const float c = center_mel(b);
        const float c_next = center_mel(b + 1);
        for (int k = 0; k <= half; ++k) {
            const float hz = static_cast<float>(k) * static_cast<float>(sample_rate_hz) /
                             static_cast<float>(win);
            const float mel = hz_to_mel(std::max(hz, 1e-3f));
            float w = 0.0f;
            if (mel >= c_prev && mel <= c) {
                w = (mel - c_prev) / (c - c_prev);
            } else if (mel > c && mel <= c_next) {
                w = (c_next - mel) / (c_next - c);
            }
            fb(b, k) = w;
        }
    }

    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Zero(frames, bins);
    spec.sample_rate_hz = sample_rate_hz;
    spec.hop_samples = hop;
    spec.mel_lo_hz = params.mel_lo_hz;
    spec.mel_hi_hz = params.mel_hi_hz;

    std::vector<std::complex<float>> buf(static_cast<size_t>(win));
    Eigen::VectorXf mag(half + 1);
    for (int f = 0; f < frames; ++f) {
        const size_t off = static_cast<size_t>(f) * static_cast<size_t>(hop);
        for (int i = 0; i < win; ++i) {
            buf[static_cast<size_t>(i)] = {padded[off + static_cast<size_t>(i)] *
                                               hann[static_cast<size_t>(i)],
                                           0.0f};
        }
        fft_radix2(buf);
        for (int k = 0; k <= half; ++k) mag(k) = std::abs(buf[static_cast<size_t>(k)]);
        spec.data.row(f) = (fb * mag).transpose();
    }
    return spec;
}

// ---------------------------------------------------------------------------
// MSPC container + PGM render

void save_mspc(const MelSpectrogram& spec, const fs::path& path) {
    spec.validate();
    json header = {
        {"rows", spec.frames()},         {"cols", spec.bins()},
        {"sample_rate_hz", spec.sample_rate_hz}, {"hop_samples", spec.hop_samples},
        {"mel_lo_hz", spec.mel_lo_hz},   {"mel_hi_hz", spec.mel_hi_hz},
    };
    const std::string htext = header.dump();
    io::Writer w;
    w.tag("MSPC");
    w.u32(static_cast<uint32_t>(htext.size()));
    w.bytes(htext.data(), htext.size());
    w.matrix(spec.data);
    io::write_file_atomic(path, w.buffer());
}

MelSpectrogram load_mspc(const fs::path& path) {
    io::Reader r(io::read_file(path));
    r.expect_tag("MSPC", path.string());
    const uint32_t hlen = r.u32();
    const json header = json::parse(r.str(hlen));
    MelSpectrogram spec;
    const int rows = header.at("rows").get<int>();
    const int cols = header.at("cols").get<int>();
    spec.sample_rate_hz = header.at("sample_rate_hz").get<int>();
    spec.hop_samples = header.at("hop_samples").get<int>();
    spec.mel_lo_hz = header.at("mel_lo_hz").get<float>();
    spec.mel_hi_hz = header.at("mel_hi_hz").get<float>();
    require(rows >= 1 && cols >= 1, ErrorCode::format_error, "mspc: bad shape");
    spec.data = r.matrix(rows, cols);
    spec.validate();
    return spec;
}

void save_pgm(const MelSpectrogram& spec, const fs::path& path) {
    const int frames = spec.frames();
    const int bins = spec.bins();
    const float maxv = spec.data.maxCoeff();
    const float denom = maxv > 0.0f ? std::log1p(maxv) : 1.0f;

    std::string out = "P5\n" + std::to_string(frames) + " " + std::to_string(bins) + "\n255\n";
    out.reserve(out.size() + static_cast<size_t>(frames) * static_cast<size_t>(bins));
    for (int row = 0; row < bins; ++row) {
        const int b = bins - 1 - row;  // low mel bins at the bottom
        for (int f = 0; f < frames; ++f) {
            const float v = std::log1p(spec.data(f, b)) / denom;
            out.push_back(static_cast<char>(
                std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255)));
        }
    }
    io::write_file_atomic(path, out.data(), out.size());
}

// ---------------------------------------------------------------------------
// dataset synthesis

DatasetConfig DatasetConfig::defaults() {
    DatasetConfig c;
    c.axes = {
        {"instrument", "a solo {} music", {"piano", "violin", "flute", "accordion"}},
        {"style", "a typical {} music", {"jazz", "country", "electronic"}},
        {"mood", "a {} music", {"happy", "sad"}},
    };
    c.clips_per_class = 10;
    return c;
}

StyleSpec style_for_class(const std::string& axis, const std::string& class_label) {
    StyleSpec s;
    s.label = class_label;
    if (class_label == "piano") {
        s.harmonic_amplitudes = {1.0f, 0.55f, 0.32f, 0.20f, 0.12f, 0.07f};
        s.spectral_tilt_db_per_octave = -2.0f;
        s.attack_frames = 0;
    } else if (class_label == "violin") {
        s.harmonic_amplitudes = {0.55f, 1.0f, 0.80f, 0.62f, 0.45f, 0.30f};
        s.spectral_tilt_db_per_octave = 1.0f;
        s.attack_frames = 3;
    } else if (class_label == "flute") {
        s.harmonic_amplitudes = {1.0f, 0.12f, 0.05f, 0.02f};
        s.spectral_tilt_db_per_octave = -5.0f;
        s.attack_frames = 2;
    } else if (class_label == "accordion") {
        s.harmonic_amplitudes = {0.90f, 0.10f, 1.0f, 0.12f, 0.85f, 0.10f};
        s.spectral_tilt_db_per_octave = -0.5f;
        s.attack_frames = 1;
    } else if (class_label == "jazz") {
        s.harmonic_amplitudes = {1.0f, 0.70f, 0.50f, 0.35f, 0.25f, 0.15f};
        s.spectral_tilt_db_per_octave = -1.0f;
        s.attack_frames = 1;
    } else if (class_label == "country") {
        s.harmonic_amplitudes = {1.0f, 0.40f, 0.60f, 0.25f, 0.35f, 0.15f};
        s.spectral_tilt_db_per_octave = -3.0f;
        s.attack_frames = 0;
    } else if (class_label == "electronic") {
        s.harmonic_amplitudes = {1.0f, 0.02f, 0.80f, 0.02f, 0.60f, 0.02f};
        s.spectral_tilt_db_per_octave = 2.0f;
        s.attack_frames = 0;
    } else if (class_label == "happy") {
        s.harmonic_amplitudes = {1.0f, 0.50f, 0.30f, 0.15f};
        s.spectral_tilt_db_per_octave = -1.5f;
        s.attack_frames = 0;
    } else if (class_label == "sad") {
        s.harmonic_amplitudes = {1.0f, 0.35f, 0.15f, 0.08f};
        s.spectral_tilt_db_per_octave = -4.0f;
        s.attack_frames = 4;
    } else {
        fail(ErrorCode::not_found, "no style recipe for class '" + class_label + "'");
    }
    (void)axis;
    return s;
}

std::string prompt_for(const AttributeAxis& axis, const std::string& class_label) {
    const auto pos = axis.prompt_template.find("{}");
    require(pos != std::string::npos, ErrorCode::invalid_argument,
            "prompt template must contain {}");
    std::string prompt = axis.prompt_template;
    prompt.replace(pos, 2, class_label);
    return prompt;
}

ContentSpec sample_content(const std::string& axis, const std::string& class_label, int frames,
                           Rng& rng) {
    static const int kMajor[7] = {0, 2, 4, 5, 7, 9, 11};
    static const int kMinor[7] = {0, 2, 3, 5, 7, 8, 10};

    float tempo = 0.0f;
    bool minor = false;
    if (axis == "mood" && class_label == "sad") {
        tempo = static_cast<float>(rng.uniform(64.0, 80.0));
        minor = true;
    } else if (axis == "mood" && class_label == "happy") {
        tempo = static_cast<float>(rng.uniform(140.0, 165.0));
    } else {
        tempo = static_cast<float>(rng.uniform(96.0, 132.0));
        minor = rng.bernoulli(0.3);
    }

    // eighth-note grid in frames at 16 kHz / hop 256 (62.5 frames per second)
    const float frames_per_second = 62.5f;
    const int spacing =
        std::max(5, static_cast<int>(std::lround(60.0f / tempo * frames_per_second / 2.0f)));
    const int root = static_cast<int>(rng.uniform_int(55, 67));
    const int start = static_cast<int>(rng.uniform_int(1, 3));

    ContentSpec c;
    c.tempo_bpm = tempo;
    int frame = start;
    while (frame < frames - 2) {
        const int degree = static_cast<int>(rng.uniform_int(0, 6));
        const int octave = static_cast<int>(rng.uniform_int(-1, 1));
        int pitch = root + (minor ? kMinor[degree] : kMajor[degree]) + 12 * octave;
        pitch = std::clamp(pitch, 36, 96);
        const int dur = std::min(spacing - 1, frames - frame);
        c.onsets.push_back({frame, std::max(1, dur)});
        c.pitches.push_back(pitch);
        frame += spacing + static_cast<int>(rng.uniform_int(0, 1));
    }
    if (c.onsets.empty()) {
        c.onsets.push_back({start, std::max(1, frames - start - 1)});
        c.pitches.push_back(root);
    }
    return c;
}

namespace {

json content_to_json(const ContentSpec& c) {
    json onsets = json::array();
    for (const auto& o : c.onsets) onsets.push_back({o.frame, o.duration});
    return {{"onsets", onsets}, {"pitches", c.pitches}, {"tempo_bpm", c.tempo_bpm}};
}

ContentSpec content_from_json(const json& j) {
    ContentSpec c;
    for (const auto& o : j.at("onsets")) c.onsets.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
    c.pitches = j.at("pitches").get<std::vector<int>>();
    c.tempo_bpm = j.at("tempo_bpm").get<float>();
    return c;
}

json style_to_json(const StyleSpec& s) {
    return {{"harmonic_amplitudes", s.harmonic_amplitudes},
            {"spectral_tilt_db_per_octave", s.spectral_tilt_db_per_octave},
            {"attack_frames", s.attack_frames},
            {"label", s.label}};
}

StyleSpec style_from_json(const json& j) {
    StyleSpec s;
    s.harmonic_amplitudes = j.at("harmonic_amplitudes").get<std::vector<float>>();
    s.spectral_tilt_db_per_octave = j.at("spectral_tilt_db_per_octave").get<float>();
    s.attack_frames = j.at("attack_frames").get<int>();
    s.label = j.at("label").get<std::string>();
    return s;
}

json entry_to_json(const ManifestEntry& e) {
    return {{"id", e.id},
            {"path", e.path},
            {"attribute_axis", e.attribute_axis},
            {"class_label", e.class_label},
            {"prompt", e.prompt},
            {"content", content_to_json(e.content)},
            {"style", style_to_json(e.style)}};
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.attribute_axis = j.at("attribute_axis").get<std::string>();
    e.class_label = j.at("class_label").get<std::string>();
    e.prompt = j.at("prompt").get<std::string>();
    e.content = content_from_json(j.at("content"));
    e.style = style_from_json(j.at("style"));
    return e;
}

}  // namespace

std::string manifest_to_json(const std::vector<ManifestEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) arr.push_back(entry_to_json(e));
    return arr.dump(2) + "\n";
}

std::vector<ManifestEntry> manifest_from_json(const std::string& json_text) {
    std::vector<ManifestEntry> out;
    for (const auto& j : json::parse(json_text)) out.push_back(entry_from_json(j));
    return out;
}

std::string benchmark_to_json(const std::vector<BenchEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) {
        json j = entry_to_json(e.source);
        j["target_class"] = e.target_class;
        j["target_prompt"] = e.target_prompt;
        j["edit_type"] = e.edit_type;
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

std::vector<BenchEntry> benchmark_from_json(const std::string& json_text) {
    std::vector<BenchEntry> out;
    for (const auto& j : json::parse(json_text)) {
        BenchEntry e;
        e.source = entry_from_json(j);
        e.target_class = j.at("target_class").get<std::string>();
        e.target_prompt = j.at("target_prompt").get<std::string>();
        e.edit_type = j.at("edit_type").get<std::string>();
        out.push_back(e);
    }
    return out;
}

std::vector<ManifestEntry> gen_dataset(const DatasetConfig& config, uint64_t seed,
                                       const fs::path& out_dir) {
    require(!config.axes.empty(), ErrorCode::invalid_argument, "dataset needs at least one axis");
    require(config.clips_per_class >= 1, ErrorCode::invalid_argument, "count must be >= 1");
    for (const auto& axis : config.axes) {
        require(axis.classes.size() >= 2, ErrorCode::invalid_argument,
                "axis '" + axis.name + "' needs at least 2 classes");
    }
    fs::create_directories(out_dir);

    std::vector<ManifestEntry> entries;
    uint64_t clip_counter = 0;
    for (const auto& axis : config.axes) {
        for (const auto& cls : axis.classes) {
            for (int i = 0; i < config.clips_per_class; ++i) {
                Rng rng(mix_seed(seed, clip_counter));
                ManifestEntry e;
                e.id = axis.name + "_" + cls + "_" + std::to_string(i);
                e.path = e.id + ".mspc";
                e.attribute_axis = axis.name;
                e.class_label = cls;
                e.prompt = prompt_for(axis, cls);
                e.style = style_for_class(axis.name, cls);
                e.content = sample_content(axis.name, cls, config.spec.frames, rng);
                const MelSpectrogram spec =
                    render_clip(e.content, e.style, config.spec.frames, config.spec.bins,
                                config.spec);
                save_mspc(spec, out_dir / e.path);
                entries.push_back(std::move(e));
                ++clip_counter;
            }
        }
    }
    io::write_text_atomic(out_dir / "manifest.json", manifest_to_json(entries));
    return entries;
}

std::vector<BenchEntry> gen_benchmark(const DatasetConfig& config, uint64_t seed,
                                      const fs::path& out_dir) {
    const auto entries = gen_dataset(config, seed, out_dir);
    std::vector<BenchEntry> bench;
    for (const auto& e : entries) {
        const auto axis_it =
            std::find_if(config.axes.begin(), config.axes.end(),
                         [&](const AttributeAxis& a) { return a.name == e.attribute_axis; });
        const auto& classes = axis_it->classes;
        const auto cls_it = std::find(classes.begin(), classes.end(), e.class_label);
        const size_t idx = static_cast<size_t>(cls_it - classes.begin());
        BenchEntry b;
        b.source = e;
        b.target_class = classes[(idx + 1) % classes.size()];
        b.target_prompt = prompt_for(*axis_it, b.target_class);
        b.edit_type = e.attribute_axis;
        bench.push_back(std::move(b));
    }
    io::write_text_atomic(out_dir / "benchmark.json", benchmark_to_json(bench));
    return bench;
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::out_of_range: return "out_of_range";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::format_error: return "format_error";
        case ErrorCode::mismatch: return "mismatch";
        case ErrorCode::numeric_error: return "numeric_error";
    }
    return "unknown";
}

}  // namespace melodia
