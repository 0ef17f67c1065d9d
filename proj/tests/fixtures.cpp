#include "fixtures.hpp"

#include "melodia/io.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace melodia;

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::path("test_scratch") / name;
    static std::vector<std::string> cleaned;
    if (std::find(cleaned.begin(), cleaned.end(), name) == cleaned.end()) {
        fs::remove_all(dir);
        cleaned.push_back(name);
    }
    fs::create_directories(dir);
    return dir;
}

fs::path dataset_dir() { return fs::path("test_scratch") / "dataset"; }

const std::vector<ManifestEntry>& dataset() {
    static const std::vector<ManifestEntry> entries = [] {
        fs::remove_all(dataset_dir());
        DatasetConfig config = DatasetConfig::defaults();
        config.clips_per_class = 6;
        return gen_dataset(config, 7, dataset_dir());
    }();
    return entries;
}

const Checkpoint& tiny_model() {
    static const Checkpoint ckpt = [] {
        TrainOptions options;
        options.steps = 700;
        options.seed = 11;
        return train(dataset(), dataset_dir(), DenoiserConfig{}, options);
    }();
    return ckpt;
}

std::vector<int> onset_peak_frames(const MelSpectrogram& spec) {
    const OnsetEnvelope env = onset_envelope(spec);
    float peak = 0.0f;
    for (float v : env.values) peak = std::max(peak, v);
    std::vector<int> frames;
    for (size_t f = 0; f < env.values.size(); ++f) {
        const float v = env.values[f];
        if (v <= 0.5f * peak || v <= 0.0f) continue;
        const float prev = f > 0 ? env.values[f - 1] : 0.0f;
        const float next = f + 1 < env.values.size() ? env.values[f + 1] : 0.0f;
        if (v >= prev && v > next) frames.push_back(static_cast<int>(f));
    }
    return frames;
}

}  // namespace fixtures
