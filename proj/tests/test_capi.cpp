// Exercises the shared library exactly as an embedder would: only melodia.h,
// no core internals. Builds its own dataset and model through the run API.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "melodia.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char* text) {
    std::string out = text ? text : "";
    melodia_string_free(text);
    return out;
}

std::vector<char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in),
                             std::istreambuf_iterator<char>());
}

struct Workspace {
    fs::path root;
    fs::path dataset;
    fs::path model;
    fs::path first_clip;
};

const Workspace& workspace() {
    static const Workspace ws = [] {
        Workspace w;
        w.root = fs::path("test_scratch") / "capi";
        fs::remove_all(w.root);
        fs::create_directories(w.root);
        w.dataset = w.root / "data";
        w.model = w.root / "model.mldm";

        const json synth_opts = {
            {"out", w.dataset.string()},
            {"seed", 4},
            {"clips_per_class", 4},
            {"bench", true},
            {"axes", json::array({{{"name", "instrument"},
                                   {"template", "a solo {} music"},
                                   {"classes", {"piano", "violin"}}}})},
        };
        char* report = nullptr;
        REQUIRE(melodia_run_synth(synth_opts.dump().c_str(), &report) == MELODIA_OK);
        const json synth_report = json::parse(take(report));
        REQUIRE(synth_report.at("clips").get<int>() == 8);

        const json train_opts = {{"manifest", (w.dataset / "manifest.json").string()},
                                 {"out", w.model.string()},
                                 {"steps", 120},
                                 {"seed", 6}};
        REQUIRE(melodia_run_train(train_opts.dump().c_str(), &report) == MELODIA_OK);
        const json train_report = json::parse(take(report));
        REQUIRE(train_report.at("final_loss").get<double>() <
                train_report.at("initial_loss").get<double>());

        w.first_clip = w.dataset / "instrument_piano_0.mspc";
        REQUIRE(fs::exists(w.first_clip));
        return w;
    }();
    return ws;
}

}  // namespace

TEST_CASE("capi: version and status names") {
    CHECK(std::strlen(melodia_version()) > 0);
    CHECK(std::string(melodia_status_name(MELODIA_OK)) == "ok");
    CHECK(std::string(melodia_status_name(MELODIA_ERR_MISMATCH)) == "mismatch");
}

TEST_CASE("capi: null arguments and missing files produce errors with messages") {
    melodia_spectrogram* spec = nullptr;
    CHECK(melodia_spectrogram_load(nullptr, &spec) == MELODIA_ERR_INVALID_ARGUMENT);
    CHECK(melodia_spectrogram_load("/nonexistent/clip.mspc", &spec) == MELODIA_ERR_IO);
    CHECK(std::strlen(melodia_last_error()) > 0);

    melodia_model* model = nullptr;
    CHECK(melodia_model_load("/nonexistent/model.mldm", &model) == MELODIA_ERR_IO);
}

TEST_CASE("capi: bad options json is reported, not fatal") {
    char* report = nullptr;
    CHECK(melodia_run_synth("{not json", &report) == MELODIA_ERR_RUNTIME);
    CHECK(std::strlen(melodia_last_error()) > 0);
}

TEST_CASE("capi: spectrogram round trip and shape access") {
    const Workspace& ws = workspace();
    melodia_spectrogram* spec = nullptr;
    REQUIRE(melodia_spectrogram_load(ws.first_clip.string().c_str(), &spec) == MELODIA_OK);
    uint32_t frames = 0, bins = 0;
    CHECK(melodia_spectrogram_shape(spec, &frames, &bins) == MELODIA_OK);
    CHECK(frames == 64);
    CHECK(bins == 64);

    std::vector<float> buffer(static_cast<size_t>(frames) * bins);
    CHECK(melodia_spectrogram_copy_data(spec, buffer.data(), buffer.size()) == MELODIA_OK);
    CHECK(melodia_spectrogram_copy_data(spec, buffer.data(), 10) ==
          MELODIA_ERR_INVALID_ARGUMENT);

    const fs::path copy = ws.root / "copy.mspc";
    CHECK(melodia_spectrogram_save(spec, copy.string().c_str()) == MELODIA_OK);
    CHECK(slurp(copy) == slurp(ws.first_clip));
    CHECK(melodia_spectrogram_render_pgm(spec, (ws.root / "copy.pgm").string().c_str()) ==
          MELODIA_OK);
    melodia_spectrogram_free(spec);
}

TEST_CASE("capi: model info reports config and training state") {
    const Workspace& ws = workspace();
    melodia_model* model = nullptr;
    REQUIRE(melodia_model_load(ws.model.string().c_str(), &model) == MELODIA_OK);
    char* info = nullptr;
    REQUIRE(melodia_model_info_json(model, &info) == MELODIA_OK);
    const json parsed = json::parse(take(info));
    CHECK(parsed.at("config").at("layers").get<int>() == 16);
    CHECK(parsed.at("trained_steps").get<int>() == 120);
    CHECK(parsed.at("model_hash").get<uint64_t>() != 0);
    melodia_model_free(model);
}

TEST_CASE("capi: edit pipeline with repository round trip") {
    const Workspace& ws = workspace();
    melodia_model* model = nullptr;
    REQUIRE(melodia_model_load(ws.model.string().c_str(), &model) == MELODIA_OK);
    melodia_spectrogram* source = nullptr;
    REQUIRE(melodia_spectrogram_load(ws.first_clip.string().c_str(), &source) == MELODIA_OK);

    melodia_edit_options options;
    REQUIRE(melodia_edit_options_init(&options) == MELODIA_OK);
    CHECK(options.cfg_strength == 5.5);
    CHECK(options.layer_count == 7);
    options.steps = 20;
    options.t_start = 500;

    melodia_edit_result* result = nullptr;
    REQUIRE(melodia_edit(model, source, "a solo violin music", &options, &result) ==
            MELODIA_OK);
    melodia_spectrogram* edited = nullptr;
    REQUIRE(melodia_edit_result_spectrogram(result, 0, &edited) == MELODIA_OK);
    uint32_t frames = 0, bins = 0;
    CHECK(melodia_spectrogram_shape(edited, &frames, &bins) == MELODIA_OK);
    CHECK(frames == 64);

    char* result_json = nullptr;
    REQUIRE(melodia_edit_result_json(result, &result_json) == MELODIA_OK);
    const json parsed = json::parse(take(result_json));
    CHECK(parsed.at("t_start_effective").get<int>() == 500);
    CHECK(parsed.at("window_name").get<std::string>() == "8-14");

    melodia_repository* repo = nullptr;
    REQUIRE(melodia_capture(model, source, &options, &repo) == MELODIA_OK);
    uint64_t count = 0, bytes = 0;
    CHECK(melodia_repository_record_count(repo, &count) == MELODIA_OK);
    CHECK(count == 11ull * 16ull * 4ull);  // steps 0,50,...,500 x layers x heads
    CHECK(melodia_repository_footprint(repo, &bytes) == MELODIA_OK);
    CHECK(bytes == count * (2 * 64 * 16 * 4 + 12));

    const fs::path repo_path = ws.root / "repo.mrep";
    REQUIRE(melodia_repository_save(repo, repo_path.string().c_str()) == MELODIA_OK);
    melodia_repository* back = nullptr;
    REQUIRE(melodia_repository_load(repo_path.string().c_str(), model, &back) == MELODIA_OK);
    melodia_repository_free(back);
    melodia_repository_free(repo);

    melodia_spectrogram_free(edited);
    melodia_edit_result_free(result);
    melodia_spectrogram_free(source);
    melodia_model_free(model);
}

TEST_CASE("capi: generate produces a clip deterministically") {
    const Workspace& ws = workspace();
    melodia_model* model = nullptr;
    REQUIRE(melodia_model_load(ws.model.string().c_str(), &model) == MELODIA_OK);
    melodia_spectrogram* a = nullptr;
    melodia_spectrogram* b = nullptr;
    REQUIRE(melodia_generate(model, "a solo piano music", 3.0, 20, 9, &a) == MELODIA_OK);
    REQUIRE(melodia_generate(model, "a solo piano music", 3.0, 20, 9, &b) == MELODIA_OK);
    uint32_t frames = 0, bins = 0;
    CHECK(melodia_spectrogram_shape(a, &frames, &bins) == MELODIA_OK);
    std::vector<float> da(static_cast<size_t>(frames) * bins), db(da.size());
    CHECK(melodia_spectrogram_copy_data(a, da.data(), da.size()) == MELODIA_OK);
    CHECK(melodia_spectrogram_copy_data(b, db.data(), db.size()) == MELODIA_OK);
    CHECK(da == db);
    melodia_spectrogram_free(a);
    melodia_spectrogram_free(b);
    melodia_model_free(model);
}

TEST_CASE("capi: repository loaded against the wrong model is refused") {
    const Workspace& ws = workspace();
    // train a second model with a different seed
    const fs::path other_model = ws.root / "other.mldm";
    const json train_opts = {{"manifest", (ws.dataset / "manifest.json").string()},
                             {"out", other_model.string()},
                             {"steps", 40},
                             {"seed", 777}};
    char* report = nullptr;
    REQUIRE(melodia_run_train(train_opts.dump().c_str(), &report) == MELODIA_OK);
    take(report);

    melodia_model* model = nullptr;
    melodia_model* other = nullptr;
    REQUIRE(melodia_model_load(ws.model.string().c_str(), &model) == MELODIA_OK);
    REQUIRE(melodia_model_load(other_model.string().c_str(), &other) == MELODIA_OK);

    melodia_spectrogram* source = nullptr;
    REQUIRE(melodia_spectrogram_load(ws.first_clip.string().c_str(), &source) == MELODIA_OK);
    melodia_edit_options options;
    REQUIRE(melodia_edit_options_init(&options) == MELODIA_OK);
    options.steps = 10;
    options.t_start = 300;
    melodia_repository* repo = nullptr;
    REQUIRE(melodia_capture(model, source, &options, &repo) == MELODIA_OK);
    const fs::path repo_path = ws.root / "mismatch.mrep";
    REQUIRE(melodia_repository_save(repo, repo_path.string().c_str()) == MELODIA_OK);

    melodia_repository* back = nullptr;
    CHECK(melodia_repository_load(repo_path.string().c_str(), other, &back) ==
          MELODIA_ERR_MISMATCH);
    CHECK(std::string(melodia_last_error()).find("different checkpoint") != std::string::npos);

    melodia_repository_free(repo);
    melodia_spectrogram_free(source);
    melodia_model_free(model);
    melodia_model_free(other);
}
