#include "melodia.h"

#include <cstdlib>
#include <cstring>
#include <nlohmann/json.hpp>
#include <string>

#include "melodia/editor.hpp"
#include "melodia/runner.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

melodia_status status_of(melodia::ErrorCode code) {
    using melodia::ErrorCode;
    switch (code) {
        case ErrorCode::invalid_argument: return MELODIA_ERR_INVALID_ARGUMENT;
        case ErrorCode::out_of_range: return MELODIA_ERR_OUT_OF_RANGE;
        case ErrorCode::not_found: return MELODIA_ERR_NOT_FOUND;
        case ErrorCode::io_error: return MELODIA_ERR_IO;
        case ErrorCode::format_error: return MELODIA_ERR_FORMAT;
        case ErrorCode::mismatch: return MELODIA_ERR_MISMATCH;
        case ErrorCode::numeric_error: return MELODIA_ERR_NUMERIC;
    }
    return MELODIA_ERR_RUNTIME;
}

template <class Fn>
melodia_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return MELODIA_OK;
    } catch (const melodia::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MELODIA_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return MELODIA_ERR_RUNTIME;
    }
}

melodia_status require_arg(bool ok, const char* message) {
    if (ok) return MELODIA_OK;
    g_last_error = message;
    return MELODIA_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

melodia::EditConfig config_of(const melodia_edit_options* options) {
    melodia::EditConfig config;
    if (options == nullptr) return config;
    config.t_start = static_cast<int>(options->t_start);
    config.layer_window.clear();
    for (size_t i = 0; i < options->layer_count; ++i) {
        config.layer_window.insert(options->layers[i]);
    }
    config.cfg_w = static_cast<float>(options->cfg_strength);
    config.steps = static_cast<int>(options->steps);
    config.seed = options->seed;
    return config;
}

}  // namespace

struct melodia_model {
    melodia::Checkpoint ckpt;
};

struct melodia_spectrogram {
    melodia::MelSpectrogram spec;
};

struct melodia_repository {
    melodia::AttentionRepository repo;
};

struct melodia_edit_result {
    melodia::EditResult result;
};

extern "C" {

const char* melodia_version(void) { return "0.1.0"; }

const char* melodia_status_name(melodia_status status) {
    switch (status) {
        case MELODIA_OK: return "ok";
        case MELODIA_ERR_INVALID_ARGUMENT: return "invalid_argument";
        case MELODIA_ERR_OUT_OF_RANGE: return "out_of_range";
        case MELODIA_ERR_NOT_FOUND: return "not_found";
        case MELODIA_ERR_IO: return "io_error";
        case MELODIA_ERR_FORMAT: return "format_error";
        case MELODIA_ERR_MISMATCH: return "mismatch";
        case MELODIA_ERR_NUMERIC: return "numeric_error";
        case MELODIA_ERR_RUNTIME: return "runtime_error";
    }
    return "unknown";
}

const char* melodia_last_error(void) { return g_last_error.c_str(); }

void melodia_string_free(char* text) { std::free(text); }

/* ------------------------------------------------------------------ */

melodia_status melodia_spectrogram_load(const char* path, melodia_spectrogram** out) {
    if (auto s = require_arg(path && out, "null argument")) return s;
    return guarded([&] { *out = new melodia_spectrogram{melodia::load_mspc(path)}; });
}

melodia_status melodia_spectrogram_save(const melodia_spectrogram* spec, const char* path) {
    if (auto s = require_arg(spec && path, "null argument")) return s;
    return guarded([&] { melodia::save_mspc(spec->spec, path); });
}

melodia_status melodia_spectrogram_from_wav(const char* wav_path, melodia_spectrogram** out) {
    if (auto s = require_arg(wav_path && out, "null argument")) return s;
    return guarded([&] {
        const melodia::WavData wav = melodia::load_wav(wav_path);
        *out = new melodia_spectrogram{
            melodia::wav_to_mel(wav.samples, wav.sample_rate_hz)};
    });
}

melodia_status melodia_spectrogram_shape(const melodia_spectrogram* spec, uint32_t* frames,
                                         uint32_t* bins) {
    if (auto s = require_arg(spec && frames && bins, "null argument")) return s;
    *frames = static_cast<uint32_t>(spec->spec.frames());
    *bins = static_cast<uint32_t>(spec->spec.bins());
    return MELODIA_OK;
}

melodia_status melodia_spectrogram_copy_data(const melodia_spectrogram* spec, float* dst,
                                             size_t capacity) {
    if (auto s = require_arg(spec && dst, "null argument")) return s;
    const auto& m = spec->spec.data;
    const size_t needed = static_cast<size_t>(m.size());
    if (capacity < needed) {
        g_last_error = "buffer too small: need " + std::to_string(needed) + " floats";
        return MELODIA_ERR_INVALID_ARGUMENT;
    }
    for (Eigen::Index f = 0; f < m.rows(); ++f)
        for (Eigen::Index b = 0; b < m.cols(); ++b)
            dst[static_cast<size_t>(f * m.cols() + b)] = m(f, b);
    return MELODIA_OK;
}

melodia_status melodia_spectrogram_render_pgm(const melodia_spectrogram* spec,
                                              const char* path) {
    if (auto s = require_arg(spec && path, "null argument")) return s;
    return guarded([&] { melodia::save_pgm(spec->spec, path); });
}

void melodia_spectrogram_free(melodia_spectrogram* spec) { delete spec; }

/* ------------------------------------------------------------------ */

melodia_status melodia_model_load(const char* path, melodia_model** out) {
    if (auto s = require_arg(path && out, "null argument")) return s;
    return guarded([&] { *out = new melodia_model{melodia::load_checkpoint(path)}; });
}

melodia_status melodia_model_info_json(const melodia_model* model, char** json_out) {
    if (auto s = require_arg(model && json_out, "null argument")) return s;
    return guarded([&] {
        json info = {
            {"config", json::parse(model->ckpt.config.to_json())},
            {"trained_steps", model->ckpt.trained_steps},
            {"training_seed", model->ckpt.training_seed},
            {"training_recipe", model->ckpt.training_recipe.empty()
                                    ? json()
                                    : json::parse(model->ckpt.training_recipe)},
            {"model_hash", model->ckpt.model_hash()},
            {"vocabulary", model->ckpt.vocab.words()},
            {"final_loss",
             model->ckpt.loss_curve.empty() ? json() : json(model->ckpt.loss_curve.back())},
        };
        *json_out = dup_string(info.dump(2));
    });
}

void melodia_model_free(melodia_model* model) { delete model; }

/* ------------------------------------------------------------------ */

melodia_status melodia_edit_options_init(melodia_edit_options* options) {
    if (auto s = require_arg(options != nullptr, "null argument")) return s;
    static const int32_t kDefaultLayers[] = {8, 9, 10, 11, 12, 13, 14};
    options->t_start = 700;
    options->layers = kDefaultLayers;
    options->layer_count = sizeof(kDefaultLayers) / sizeof(kDefaultLayers[0]);
    options->cfg_strength = 5.5;
    options->steps = 50;
    options->seed = 0;
    return MELODIA_OK;
}

melodia_status melodia_generate(const melodia_model* model, const char* prompt,
                                double cfg_strength, uint32_t steps, uint64_t seed,
                                melodia_spectrogram** out) {
    if (auto s = require_arg(model && prompt && out, "null argument")) return s;
    return guarded([&] {
        const auto schedule = melodia::build_schedule_for(model->ckpt, static_cast<int>(steps));
        const melodia::Latent latent = melodia::sample(
            model->ckpt, prompt, static_cast<float>(cfg_strength), schedule, seed);
        *out = new melodia_spectrogram{
            model->ckpt.codec.decode(latent, melodia::SpectrogramParams{}).clamped};
    });
}

melodia_status melodia_edit(const melodia_model* model, const melodia_spectrogram* source,
                            const char* target_prompt, const melodia_edit_options* options,
                            melodia_edit_result** out) {
    if (auto s = require_arg(model && source && target_prompt && out, "null argument")) return s;
    return guarded([&] {
        *out = new melodia_edit_result{
            melodia::edit(model->ckpt, source->spec, target_prompt, config_of(options))};
    });
}

melodia_status melodia_edit_result_spectrogram(const melodia_edit_result* result, int which,
                                               melodia_spectrogram** out) {
    if (auto s = require_arg(result && out, "null argument")) return s;
    if (which != 0 && which != 1) {
        g_last_error = "which must be 0 (edited) or 1 (reconstruction)";
        return MELODIA_ERR_INVALID_ARGUMENT;
    }
    *out = new melodia_spectrogram{which == 0 ? result->result.edited
                                              : result->result.reconstruction};
    return MELODIA_OK;
}

melodia_status melodia_edit_result_json(const melodia_edit_result* result, char** json_out) {
    if (auto s = require_arg(result && json_out, "null argument")) return s;
    return guarded([&] { *json_out = dup_string(result->result.to_json()); });
}

void melodia_edit_result_free(melodia_edit_result* result) { delete result; }

/* ------------------------------------------------------------------ */

melodia_status melodia_capture(const melodia_model* model, const melodia_spectrogram* source,
                               const melodia_edit_options* options, melodia_repository** out) {
    if (auto s = require_arg(model && source && out, "null argument")) return s;
    return guarded([&] {
        melodia::CaptureResult cap =
            melodia::capture(model->ckpt, source->spec, config_of(options));
        *out = new melodia_repository{std::move(cap.repo)};
    });
}

melodia_status melodia_repository_save(const melodia_repository* repo, const char* path) {
    if (auto s = require_arg(repo && path, "null argument")) return s;
    return guarded([&] { repo->repo.save(path); });
}

melodia_status melodia_repository_load(const char* path, const melodia_model* model,
                                       melodia_repository** out) {
    if (auto s = require_arg(path && out, "null argument")) return s;
    return guarded([&] {
        melodia::AttentionRepository repo = melodia::AttentionRepository::load(path);
        if (model != nullptr) {
            melodia::require(repo.model_hash() == model->ckpt.model_hash(),
                             melodia::ErrorCode::mismatch,
                             "repository was captured with a different checkpoint");
            melodia::require(repo.codec_id() == model->ckpt.codec.id(),
                             melodia::ErrorCode::mismatch,
                             "repository was captured under a different codec");
        }
        *out = new melodia_repository{std::move(repo)};
    });
}

melodia_status melodia_repository_footprint(const melodia_repository* repo, uint64_t* bytes) {
    if (auto s = require_arg(repo && bytes, "null argument")) return s;
    *bytes = repo->repo.memory_footprint();
    return MELODIA_OK;
}

melodia_status melodia_repository_record_count(const melodia_repository* repo, uint64_t* count) {
    if (auto s = require_arg(repo && count, "null argument")) return s;
    *count = repo->repo.record_count();
    return MELODIA_OK;
}

void melodia_repository_free(melodia_repository* repo) { delete repo; }

/* ------------------------------------------------------------------ */

static melodia_status run_wrapper(const char* options_json, char** report_json,
                                  std::string (*fn)(const std::string&)) {
    if (auto s = require_arg(options_json && report_json, "null argument")) return s;
    return guarded([&] { *report_json = dup_string(fn(options_json)); });
}

melodia_status melodia_run_synth(const char* options_json, char** report_json) {
    return run_wrapper(options_json, report_json, melodia::run::run_synth);
}

melodia_status melodia_run_train(const char* options_json, char** report_json) {
    return run_wrapper(options_json, report_json, melodia::run::run_train);
}

melodia_status melodia_run_probe(const char* options_json, char** report_json) {
    return run_wrapper(options_json, report_json, melodia::run::run_probe);
}

melodia_status melodia_run_eval(const char* options_json, char** report_json) {
    return run_wrapper(options_json, report_json, melodia::run::run_eval);
}

melodia_status melodia_run_sweep(const char* options_json, char** report_json) {
    return run_wrapper(options_json, report_json, melodia::run::run_sweep);
}

}  // extern "C"
