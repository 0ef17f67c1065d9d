#include "melodia/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <thread>

#include "melodia/editor.hpp"
#include "melodia/io.hpp"
#include "melodia/metrics.hpp"
#include "melodia/probing.hpp"

namespace melodia::run {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// deterministic regardless of worker count: results land by index
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& body) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> workers;
    const int n_workers = std::min<int>(jobs, static_cast<int>(count));
    for (int w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

DatasetConfig dataset_config_from(const json& opts) {
    DatasetConfig config = DatasetConfig::defaults();
    if (opts.contains("clips_per_class")) {
        config.clips_per_class = opts.at("clips_per_class").get<int>();
    }
    if (opts.contains("axes")) {
        config.axes.clear();
        for (const auto& a : opts.at("axes")) {
            AttributeAxis axis;
            axis.name = a.at("name").get<std::string>();
            axis.prompt_template = a.at("template").get<std::string>();
            axis.classes = a.at("classes").get<std::vector<std::string>>();
            config.axes.push_back(std::move(axis));
        }
    }
    return config;
}

const AttributeAxis& find_axis(const DatasetConfig& config, const std::string& name) {
    for (const auto& axis : config.axes) {
        if (axis.name == name) return axis;
    }
    fail(ErrorCode::not_found, "no attribute axis named '" + name + "'");
}

// Classifier training set: freshly rendered clips per class, independent of
// whatever benchmark is being scored.
AttributeClassifier classifier_for_axis(const AttributeAxis& axis, uint64_t seed,
                                        int clips_per_class = 24) {
    std::vector<MelSpectrogram> clips;
    std::vector<std::string> labels;
    SpectrogramParams params;
    uint64_t counter = 0;
    for (const auto& cls : axis.classes) {
        const StyleSpec style = style_for_class(axis.name, cls);
        for (int i = 0; i < clips_per_class; ++i) {
            Rng rng(mix_seed(mix_seed(seed, 0x636c6970), counter++));
            const ContentSpec content = sample_content(axis.name, cls, params.frames, rng);
            clips.push_back(render_clip(content, style, params.frames, params.bins, params));
            labels.push_back(cls);
        }
    }
    return train_attribute_classifier(clips, labels, mix_seed(seed, 0x636c6673));
}

EditConfig edit_config_from(const json& opts) {
    EditConfig config;
    if (opts.contains("t_start")) config.t_start = opts.at("t_start").get<int>();
    if (opts.contains("layers")) {
        config.layer_window = parse_layer_window(opts.at("layers").get<std::string>());
    }
    if (opts.contains("cfg")) config.cfg_w = opts.at("cfg").get<float>();
    if (opts.contains("steps")) config.steps = opts.at("steps").get<int>();
    if (opts.contains("seed")) config.seed = opts.at("seed").get<uint64_t>();
    return config;
}

std::vector<EditTask> load_tasks(const std::vector<BenchEntry>& bench, const fs::path& dir) {
    std::vector<EditTask> tasks;
    for (const auto& entry : bench) {
        EditTask task;
        task.source = load_mspc(dir / entry.source.path);
        task.target_prompt = entry.target_prompt;
        task.target_class = entry.target_class;
        task.source_class = entry.source.class_label;
        tasks.push_back(std::move(task));
    }
    return tasks;
}

}  // namespace

std::string run_synth(const std::string& options_json) {
    const json opts = json::parse(options_json);
    const fs::path out_dir = opts.at("out").get<std::string>();
    const uint64_t seed = opts.value("seed", 0ull);
    const DatasetConfig config = dataset_config_from(opts);

    json report;
    const auto entries = gen_dataset(config, seed, out_dir);
    report["clips"] = entries.size();
    report["manifest"] = (out_dir / "manifest.json").string();
    if (opts.value("bench", false)) {
        const auto bench = gen_benchmark(config, mix_seed(seed, 0x62656e63), out_dir / "bench");
        report["bench_entries"] = bench.size();
        report["benchmark"] = (out_dir / "bench" / "benchmark.json").string();
    }
    return report.dump(2);
}

std::string run_train(const std::string& options_json) {
    const json opts = json::parse(options_json);
    const fs::path manifest_path = opts.at("manifest").get<std::string>();
    const fs::path out_path = opts.at("out").get<std::string>();

    TrainOptions train_opts;
    train_opts.seed = opts.value("seed", 1ull);
    if (opts.contains("steps")) train_opts.steps = opts.at("steps").get<int>();
    if (opts.contains("batch_size")) train_opts.batch_size = opts.at("batch_size").get<int>();
    if (opts.contains("learning_rate")) {
        train_opts.learning_rate = opts.at("learning_rate").get<float>();
    }
    if (opts.contains("cond_dropout")) {
        train_opts.cond_dropout = opts.at("cond_dropout").get<float>();
    }

    DenoiserConfig config;
    if (opts.contains("layers")) config.layers = opts.at("layers").get<int>();
    if (opts.contains("hidden_dim")) config.hidden_dim = opts.at("hidden_dim").get<int>();

    const auto manifest = manifest_from_json(io::read_text(manifest_path));
    const Checkpoint ckpt = train(manifest, manifest_path.parent_path(), config, train_opts);
    save_checkpoint(ckpt, out_path);

    json report;
    report["model"] = out_path.string();
    report["steps"] = ckpt.trained_steps;
    report["initial_loss"] = ckpt.loss_curve.front();
    report["final_loss"] = ckpt.loss_curve.back();
    report["model_hash"] = ckpt.model_hash();
    return report.dump(2);
}

std::string run_probe(const std::string& options_json) {
    const json opts = json::parse(options_json);
    const Checkpoint ckpt = load_checkpoint(opts.at("model").get<std::string>());
    const fs::path out_dir = opts.at("out").get<std::string>();
    const DatasetConfig dataset = dataset_config_from(opts);
    const AttributeAxis& axis = find_axis(dataset, opts.value("axis", std::string("instrument")));

    ProbeOptions probe_opts;
    probe_opts.seed = opts.value("seed", 0ull);
    if (opts.contains("steps")) probe_opts.steps = opts.at("steps").get<int>();
    if (opts.contains("cfg")) probe_opts.cfg_w = opts.at("cfg").get<float>();
    const int per_class = opts.value("prompts_per_class", 20);

    const ProbeReportPair reports = probe_all_layers(ckpt, axis, probe_opts, per_class);
    fs::create_directories(out_dir);
    io::write_text_atomic(out_dir / "probe_ca.json", reports.ca.to_json() + "\n");
    io::write_text_atomic(out_dir / "probe_sa.json", reports.sa.to_json() + "\n");
    io::write_text_atomic(out_dir / "probe_tables.txt",
                          reports.ca.to_text() + "\n" + reports.sa.to_text());

    json report;
    report["axis"] = axis.name;
    report["ca_mean_accuracy"] = reports.ca.mean_accuracy;
    report["sa_mean_accuracy"] = reports.sa.mean_accuracy;
    report["gap"] = reports.ca.mean_accuracy - reports.sa.mean_accuracy;
    report["tables"] = (out_dir / "probe_tables.txt").string();
    return report.dump(2);
}

std::string run_eval(const std::string& options_json) {
    const json opts = json::parse(options_json);
    const Checkpoint ckpt = load_checkpoint(opts.at("model").get<std::string>());
    const fs::path manifest_path = opts.at("manifest").get<std::string>();
    const fs::path report_path = opts.at("report").get<std::string>();
    const int jobs = opts.value("jobs", 1);
    const uint64_t seed = opts.value("seed", 0ull);

    std::vector<std::string> methods = {"melodia", "ddim_baseline"};
    if (opts.contains("methods")) methods = opts.at("methods").get<std::vector<std::string>>();
    require(methods.size() >= 2, ErrorCode::invalid_argument,
            "eval needs at least 2 methods for cohort composites");

    const auto bench = benchmark_from_json(io::read_text(manifest_path));
    require(!bench.empty(), ErrorCode::invalid_argument, "benchmark manifest is empty");
    const auto tasks = load_tasks(bench, manifest_path.parent_path());

    // one classifier per attribute axis present in the benchmark
    const DatasetConfig dataset = dataset_config_from(opts);
    std::map<std::string, AttributeClassifier> classifiers;
    for (const auto& entry : bench) {
        if (!classifiers.count(entry.edit_type)) {
            classifiers.emplace(entry.edit_type,
                                classifier_for_axis(find_axis(dataset, entry.edit_type), seed));
        }
    }

    const EditConfig base_config = edit_config_from(opts);

    MetricCohort cohort;
    json method_reports = json::array();
    for (const auto& method : methods) {
        EditConfig config = base_config;
        if (method == "melodia") {
            // keep configured window
        } else if (method == "ddim_baseline") {
            config.layer_window.clear();
        } else {
            fail(ErrorCode::not_found, "unknown method '" + method + "'");
        }

        std::vector<MelSpectrogram> edited(tasks.size());
        parallel_for(tasks.size(), jobs, [&](size_t i) {
            edited[i] = edit(ckpt, tasks[i].source, tasks[i].target_prompt, config).edited;
        });

        double adh = 0.0, sd = 0.0, cs = 0.0;
        std::vector<Eigen::VectorXf> source_emb, edited_emb;
        for (size_t i = 0; i < tasks.size(); ++i) {
            adh += adherence_score(edited[i], tasks[i].target_class,
                                   classifiers.at(bench[i].edit_type));
            sd += structure_distance(tasks[i].source, edited[i]);
            cs += chroma_similarity(tasks[i].source, edited[i]);
            source_emb.push_back(clip_embedding(tasks[i].source));
            edited_emb.push_back(clip_embedding(edited[i]));
        }
        const double n = static_cast<double>(tasks.size());
        adh /= n;
        sd /= n;
        cs /= n;
        const double fad = frechet_feature_distance(feature_stats(source_emb),
                                                    feature_stats(edited_emb));

        cohort.methods.push_back(method);
        cohort.adherence.push_back(adh);
        cohort.structure_distance.push_back(sd);
        cohort.chroma_similarity.push_back(cs);
        cohort.fad.push_back(fad);
        method_reports.push_back({{"name", method},
                                  {"raw",
                                   {{"adherence", adh},
                                    {"structure_distance", sd},
                                    {"chroma_similarity", cs},
                                    {"fad", fad}}}});
    }

    const auto asb_scores = asb(cohort);
    const auto amb_scores = amb(cohort);
    for (size_t i = 0; i < cohort.methods.size(); ++i) {
        method_reports[i]["asb"] = asb_scores[i];
        method_reports[i]["amb"] = amb_scores[i];
    }

    auto trace_of = [](const std::vector<double>& values) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        return json{{"min", *std::min_element(values.begin(), values.end())},
                    {"max", *std::max_element(values.begin(), values.end())},
                    {"mean", mean},
                    {"std", std::sqrt(var)}};
    };
    std::vector<double> neg_sd;
    for (double v : cohort.structure_distance) neg_sd.push_back(-v);
    json report = {
        {"dataset", manifest_path.string()},
        {"methods", method_reports},
        {"normalization_trace",
         {{"adherence", trace_of(cohort.adherence)},
          {"neg_structure_distance", trace_of(neg_sd)},
          {"chroma_similarity", trace_of(cohort.chroma_similarity)}}},
    };
    const std::string text = report.dump(2) + "\n";
    io::write_text_atomic(report_path, text);
    return text;
}

std::string run_sweep(const std::string& options_json) {
    const json opts = json::parse(options_json);
    const Checkpoint ckpt = load_checkpoint(opts.at("model").get<std::string>());
    const fs::path manifest_path = opts.at("manifest").get<std::string>();
    const fs::path out_dir = opts.at("out").get<std::string>();
    const std::string mode = opts.value("mode", std::string("tstart"));
    const uint64_t seed = opts.value("seed", 0ull);

    const auto bench = benchmark_from_json(io::read_text(manifest_path));
    auto tasks = load_tasks(bench, manifest_path.parent_path());
    if (opts.contains("max_clips")) {
        const size_t cap = opts.at("max_clips").get<size_t>();
        if (tasks.size() > cap) tasks.resize(cap);
    }
    require(!tasks.empty(), ErrorCode::invalid_argument, "sweep has no tasks");

    const DatasetConfig dataset = dataset_config_from(opts);
    const AttributeClassifier classifier =
        classifier_for_axis(find_axis(dataset, bench.front().edit_type), seed);
    const EditConfig base_config = edit_config_from(opts);
    fs::create_directories(out_dir);

    json report;
    if (mode == "layers") {
        std::vector<std::set<int>> windows = default_ablation_windows();
        if (opts.contains("windows")) {
            windows.clear();
            for (const auto& w : opts.at("windows")) {
                windows.push_back(parse_layer_window(w.get<std::string>()));
            }
        }
        const AblationTable table =
            layer_ablation_sweep(ckpt, tasks, windows, base_config, classifier);
        io::write_text_atomic(out_dir / "ablation.json", table.to_json() + "\n");
        io::write_text_atomic(out_dir / "ablation.txt", table.to_text());
        report["table"] = (out_dir / "ablation.json").string();
        report["rows"] = table.rows.size();
    } else if (mode == "tstart") {
        std::vector<int> t_starts = {300, 500, 700, 1000};
        if (opts.contains("t_starts")) t_starts = opts.at("t_starts").get<std::vector<int>>();

        const SweepCurve curve = t_start_sweep(ckpt, tasks, t_starts, base_config, classifier);
        EditConfig baseline = base_config;
        baseline.layer_window.clear();
        const SweepCurve base_curve = t_start_sweep(ckpt, tasks, t_starts, baseline, classifier);

        io::write_text_atomic(out_dir / "sweep.json",
                              json{{"asr", json::parse(curve.to_json())},
                                   {"baseline", json::parse(base_curve.to_json())}}
                                      .dump(2) +
                                  "\n");
        io::write_text_atomic(out_dir / "sweep.svg", sweep_plot_svg({curve, base_curve}));
        report["curve"] = (out_dir / "sweep.json").string();
        report["plot"] = (out_dir / "sweep.svg").string();
        report["points"] = curve.points.size();
    } else {
        fail(ErrorCode::invalid_argument, "sweep mode must be 'layers' or 'tstart'");
    }
    return report.dump(2);
}

}  // namespace melodia::run
