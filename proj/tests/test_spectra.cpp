#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "melodia/io.hpp"
#include "melodia/spectra.hpp"

using namespace melodia;
namespace fs = std::filesystem;

namespace {

ContentSpec single_note(int midi, int frame = 0, int duration = 32) {
    ContentSpec c;
    c.onsets = {{frame, duration}};
    c.pitches = {midi};
    c.tempo_bpm = 120.0f;
    return c;
}

StyleSpec pure_tone_style() {
    StyleSpec s;
    s.harmonic_amplitudes = {1.0f, 0.0f, 0.0f, 0.0f};
    s.label = "tone";
    return s;
}

int chroma_argmax(const ChromaMatrix& cm, int frame) {
    Eigen::Index idx = 0;
    cm.data.row(frame).maxCoeff(&idx);
    return static_cast<int>(idx);
}

}  // namespace

TEST_CASE("render_clip: single A4 peaks at the mel bin of 440 Hz") {
    const SpectrogramParams p;
    const MelSpectrogram spec = render_clip(single_note(69), pure_tone_style(), 64, 64, p);
    // closed-form oracle: fractional mel position of 440 Hz, rounded
    const int expected_bin =
        static_cast<int>(std::lround(mel_bin_position(440.0f, 64, p.mel_lo_hz, p.mel_hi_hz)));
    for (int f = 0; f < 24; ++f) {
        Eigen::Index argmax = 0;
        spec.data.row(f).maxCoeff(&argmax);
        CHECK(argmax == expected_bin);
    }
}

TEST_CASE("render_clip: empty onsets give a silent clip") {
    ContentSpec c;
    c.tempo_bpm = 100.0f;
    const MelSpectrogram spec = render_clip(c, pure_tone_style(), 64, 64);
    CHECK(spec.data.maxCoeff() == 0.0f);
}

TEST_CASE("render_clip: onset frames are style-invariant") {
    Rng rng(5);
    const ContentSpec content = sample_content("instrument", "piano", 64, rng);
    const MelSpectrogram a =
        render_clip(content, style_for_class("instrument", "piano"), 64, 64);
    const MelSpectrogram b =
        render_clip(content, style_for_class("instrument", "violin"), 64, 64);
    CHECK(fixtures::onset_peak_frames(a) == fixtures::onset_peak_frames(b));
}

TEST_CASE("render_clip: onset fidelity within one frame") {
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        Rng rng(seed);
        const ContentSpec content = sample_content("style", "jazz", 64, rng);
        const MelSpectrogram spec =
            render_clip(content, style_for_class("style", "jazz"), 64, 64);
        const auto peaks = fixtures::onset_peak_frames(spec);
        for (int peak : peaks) {
            bool near = false;
            for (const auto& onset : content.onsets) {
                if (std::abs(onset.frame - peak) <= 1) near = true;
            }
            CHECK(near);
        }
    }
}

TEST_CASE("render_clip: onset beyond clip length is rejected with its index") {
    ContentSpec c;
    c.onsets = {{2, 4}, {80, 4}};
    c.pitches = {60, 62};
    CHECK_THROWS_WITH_AS(render_clip(c, pure_tone_style(), 64, 64),
                         doctest::Contains("onset 1"), Error);
}

TEST_CASE("chroma: pure 440 Hz maps to pitch class 9") {
    const MelSpectrogram spec = render_clip(single_note(69), pure_tone_style(), 64, 64);
    const ChromaMatrix cm = chroma(spec);
    for (int f = 0; f < 24; ++f) CHECK(chroma_argmax(cm, f) == 9);
}

TEST_CASE("chroma: silence stays zero") {
    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Zero(16, 64);
    const ChromaMatrix cm = chroma(spec);
    CHECK(cm.data.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("chroma: octave apart shares the argmax pitch class") {
    const MelSpectrogram a = render_clip(single_note(69), pure_tone_style(), 64, 64);
    const MelSpectrogram b = render_clip(single_note(81), pure_tone_style(), 64, 64);
    CHECK(chroma_argmax(chroma(a), 4) == chroma_argmax(chroma(b), 4));
}

TEST_CASE("chroma: transposing content by an octave keeps per-frame argmax") {
    Rng rng(17);
    ContentSpec content = sample_content("instrument", "flute", 64, rng);
    for (auto& p : content.pitches) p = std::clamp(p, 45, 70);
    ContentSpec up = content;
    for (auto& p : up.pitches) p += 12;
    const StyleSpec style = style_for_class("instrument", "flute");
    const ChromaMatrix ca = chroma(render_clip(content, style, 64, 64));
    const ChromaMatrix cb = chroma(render_clip(up, style, 64, 64));
    for (int f = 0; f < 64; ++f) {
        if (ca.data.row(f).norm() == 0.0f) continue;
        CHECK(chroma_argmax(ca, f) == chroma_argmax(cb, f));
    }
}

TEST_CASE("chroma: rows are unit norm or zero") {
    const auto& entries = fixtures::dataset();
    const MelSpectrogram spec = load_mspc(fixtures::dataset_dir() / entries[0].path);
    const ChromaMatrix cm = chroma(spec);
    for (int f = 0; f < cm.data.rows(); ++f) {
        const float n = cm.data.row(f).norm();
        CHECK((std::abs(n - 1.0f) < 1e-5f || n == 0.0f));
    }
}

TEST_CASE("onset_envelope: constant spectrogram has zero flux") {
    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Constant(20, 64, 0.7f);
    const OnsetEnvelope env = onset_envelope(spec);
    for (float v : env.values) CHECK(v == 0.0f);
}

TEST_CASE("onset_envelope: single impulse frame yields a single peak there") {
    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Zero(32, 64);
    spec.data.row(11).setConstant(1.0f);
    const OnsetEnvelope env = onset_envelope(spec);
    CHECK(env.values[0] == 0.0f);
    for (size_t f = 0; f < env.values.size(); ++f) {
        if (f == 11) {
            CHECK(env.values[f] > 0.0f);
        } else {
            CHECK(env.values[f] == 0.0f);
        }
    }
}

TEST_CASE("onset_envelope: four onsets give exactly four strong local maxima") {
    ContentSpec c;
    c.onsets = {{2, 10}, {18, 10}, {34, 10}, {50, 10}};
    c.pitches = {60, 64, 67, 72};
    c.tempo_bpm = 110.0f;
    const MelSpectrogram spec = render_clip(c, style_for_class("instrument", "piano"), 64, 64);
    CHECK(fixtures::onset_peak_frames(spec).size() == 4);
}

TEST_CASE("wav_to_mel: digital silence maps to zeros") {
    std::vector<float> pcm(4096, 0.0f);
    const MelSpectrogram spec = wav_to_mel(pcm, 16000);
    CHECK(spec.data.maxCoeff() == 0.0f);
}

TEST_CASE("wav_to_mel: 440 Hz sine lands on pitch class 9 end to end") {
    std::vector<float> pcm(16000);
    for (size_t i = 0; i < pcm.size(); ++i) {
        pcm[i] = 0.5f * std::sin(2.0f * 3.14159265f * 440.0f * static_cast<float>(i) / 16000.0f);
    }
    const MelSpectrogram spec = wav_to_mel(pcm, 16000);
    const ChromaMatrix cm = chroma(spec);
    CHECK(chroma_argmax(cm, spec.frames() / 2) == 9);
}

TEST_CASE("load_wav: wrong channel count is a structured error") {
    // minimal 2-channel PCM wav
    const auto dir = fixtures::scratch_dir("wav");
    io::Writer w;
    w.tag("RIFF");
    w.u32(36 + 8);
    w.tag("WAVE");
    w.tag("fmt ");
    w.u32(16);
    const uint16_t fmt = 1, channels = 2, block = 4, bits = 16;
    const uint32_t rate = 16000, byte_rate = rate * block;
    w.bytes(&fmt, 2);
    w.bytes(&channels, 2);
    w.bytes(&rate, 4);
    w.bytes(&byte_rate, 4);
    w.bytes(&block, 2);
    w.bytes(&bits, 2);
    w.tag("data");
    w.u32(8);
    w.u64(0);
    io::write_file_atomic(dir / "stereo.wav", w.buffer());
    CHECK_THROWS_WITH_AS(load_wav(dir / "stereo.wav"), doctest::Contains("1 channel"), Error);
}

TEST_CASE("mspc: save/load round trip preserves data and metadata") {
    const auto dir = fixtures::scratch_dir("mspc");
    const MelSpectrogram spec = render_clip(single_note(60), pure_tone_style(), 64, 64);
    save_mspc(spec, dir / "clip.mspc");
    const MelSpectrogram back = load_mspc(dir / "clip.mspc");
    CHECK(back.data == spec.data);
    CHECK(back.sample_rate_hz == spec.sample_rate_hz);
    CHECK(back.hop_samples == spec.hop_samples);
}

TEST_CASE("gen_dataset: counts, determinism, label round trip") {
    const auto dir_a = fixtures::scratch_dir("ds_a");
    const auto dir_b = fixtures::scratch_dir("ds_b");
    DatasetConfig config;
    config.axes = {{"instrument", "a solo {} music", {"piano", "violin"}}};
    config.clips_per_class = 10;

    const auto entries = gen_dataset(config, 42, dir_a);
    CHECK(entries.size() == 20);
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir_a)) {
        if (e.path().extension() == ".mspc") ++files;
    }
    CHECK(files == 20);

    gen_dataset(config, 42, dir_b);
    CHECK(io::read_text(dir_a / "manifest.json") == io::read_text(dir_b / "manifest.json"));

    // labels round-trip and the stored clip re-renders bit-identically
    const auto parsed = manifest_from_json(io::read_text(dir_a / "manifest.json"));
    for (size_t i = 0; i < parsed.size(); i += 5) {
        const auto& e = parsed[i];
        CHECK(e.style.label == e.class_label);
        const MelSpectrogram stored = load_mspc(dir_a / e.path);
        const MelSpectrogram again =
            render_clip(e.content, e.style, stored.frames(), stored.bins());
        CHECK((stored.data - again.data).cwiseAbs().maxCoeff() == 0.0f);
    }
}

TEST_CASE("gen_dataset: rejects single-class axes") {
    DatasetConfig config;
    config.axes = {{"instrument", "a solo {} music", {"piano"}}};
    CHECK_THROWS_AS(gen_dataset(config, 1, fixtures::scratch_dir("ds_bad")), Error);
}

TEST_CASE("save_pgm: zero spectrogram renders all black") {
    const auto dir = fixtures::scratch_dir("pgm");
    MelSpectrogram spec;
    spec.data = Eigen::MatrixXf::Zero(8, 8);
    save_pgm(spec, dir / "zero.pgm");
    const auto bytes = io::read_file(dir / "zero.pgm");
    // P5 header then 64 zero pixels
    const std::string header(bytes.begin(), bytes.begin() + 3);
    CHECK(header == "P5\n");
    for (size_t i = bytes.size() - 64; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}
