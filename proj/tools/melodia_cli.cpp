// melodia command line. Thin shell over the C API: flags are collected into
// a JSON options object, the same object is written as the config echo, and
// `replay` re-dispatches a previously written echo verbatim.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "melodia.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

[[noreturn]] void die(const std::string& message) {
    std::fprintf(stderr, "error: %s\n", message.c_str());
    std::exit(kExitRuntime);
}

void check(melodia_status status) {
    if (status != MELODIA_OK) {
        die(std::string(melodia_status_name(status)) + ": " + melodia_last_error());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out.good()) die("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

void write_config_echo(const fs::path& path, const std::string& command, const json& options) {
    const json echo = {{"command", command}, {"options", options}};
    write_text(path, echo.dump(2) + "\n");
}

std::string owned(char* text) {
    std::string out = text != nullptr ? text : "";
    melodia_string_free(text);
    return out;
}

std::string model_or_env(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("MELODIA_MODEL")) return env;
    die("no model given (use --model or set MELODIA_MODEL)");
}

std::vector<int32_t> parse_layer_flag(const std::string& text) {
    std::vector<int32_t> out;
    if (text == "none" || text.empty()) return out;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        const auto dash = part.find('-');
        if (dash != std::string::npos && dash > 0) {
            const int lo = std::stoi(part.substr(0, dash));
            const int hi = std::stoi(part.substr(dash + 1));
            if (lo > hi) die("bad layer range '" + part + "'");
            for (int l = lo; l <= hi; ++l) out.push_back(l);
        } else {
            out.push_back(std::stoi(part));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// command bodies (dispatched from flags or from a config echo)

void cmd_synth(const json& opts) {
    char* report = nullptr;
    check(melodia_run_synth(opts.dump().c_str(), &report));
    std::printf("%s\n", owned(report).c_str());
    write_config_echo(fs::path(opts.at("out").get<std::string>()) / "config_echo.json", "synth",
                      opts);
}

void cmd_train(const json& opts) {
    char* report = nullptr;
    check(melodia_run_train(opts.dump().c_str(), &report));
    std::printf("%s\n", owned(report).c_str());
    const fs::path out = opts.at("out").get<std::string>();
    write_config_echo(out.string() + ".config.json", "train", opts);
}

void cmd_generate(const json& opts) {
    melodia_model* model = nullptr;
    check(melodia_model_load(opts.at("model").get<std::string>().c_str(), &model));
    melodia_spectrogram* spec = nullptr;
    const melodia_status status = melodia_generate(
        model, opts.at("prompt").get<std::string>().c_str(), opts.value("cfg", 5.5),
        opts.value("steps", 50u), opts.value("seed", 0ull), &spec);
    if (status != MELODIA_OK) {
        melodia_model_free(model);
        check(status);
    }
    const fs::path out_dir = opts.at("out").get<std::string>();
    fs::create_directories(out_dir);
    check(melodia_spectrogram_save(spec, (out_dir / "generated.mspc").string().c_str()));
    check(melodia_spectrogram_render_pgm(spec, (out_dir / "generated.pgm").string().c_str()));
    melodia_spectrogram_free(spec);
    melodia_model_free(model);
    write_config_echo(out_dir / "config_echo.json", "generate", opts);
    std::printf("%s\n", (out_dir / "generated.mspc").string().c_str());
}

void cmd_edit(const json& opts) {
    melodia_model* model = nullptr;
    check(melodia_model_load(opts.at("model").get<std::string>().c_str(), &model));
    melodia_spectrogram* source = nullptr;
    check(melodia_spectrogram_load(opts.at("source").get<std::string>().c_str(), &source));

    melodia_edit_options options;
    check(melodia_edit_options_init(&options));
    const std::vector<int32_t> layers = parse_layer_flag(opts.value("layers", "8-14"));
    options.t_start = opts.value("t_start", 700u);
    options.layers = layers.empty() ? nullptr : layers.data();
    options.layer_count = layers.size();
    options.cfg_strength = opts.value("cfg", 5.5);
    options.steps = opts.value("steps", 50u);
    options.seed = opts.value("seed", 0ull);

    melodia_edit_result* result = nullptr;
    check(melodia_edit(model, source, opts.at("prompt").get<std::string>().c_str(), &options,
                       &result));

    const fs::path out_dir = opts.at("out").get<std::string>();
    fs::create_directories(out_dir);
    melodia_spectrogram* edited = nullptr;
    melodia_spectrogram* recon = nullptr;
    check(melodia_edit_result_spectrogram(result, 0, &edited));
    check(melodia_edit_result_spectrogram(result, 1, &recon));
    check(melodia_spectrogram_save(edited, (out_dir / "edited.mspc").string().c_str()));
    check(melodia_spectrogram_render_pgm(edited, (out_dir / "edited.pgm").string().c_str()));
    check(melodia_spectrogram_save(recon, (out_dir / "reconstruction.mspc").string().c_str()));

    char* result_json = nullptr;
    check(melodia_edit_result_json(result, &result_json));
    json result_obj = json::parse(owned(result_json));

    if (opts.value("save_repo", false)) {
        melodia_repository* repo = nullptr;
        check(melodia_capture(model, source, &options, &repo));
        const fs::path repo_path = out_dir / "repository.mrep";
        check(melodia_repository_save(repo, repo_path.string().c_str()));
        uint64_t footprint = 0;
        check(melodia_repository_footprint(repo, &footprint));
        result_obj["repository_path"] = repo_path.string();
        result_obj["repository_bytes"] = footprint;
        melodia_repository_free(repo);
    }
    write_text(out_dir / "result.json", result_obj.dump(2) + "\n");

    melodia_spectrogram_free(edited);
    melodia_spectrogram_free(recon);
    melodia_edit_result_free(result);
    melodia_spectrogram_free(source);
    melodia_model_free(model);
    write_config_echo(out_dir / "config_echo.json", "edit", opts);
    std::printf("%s\n", (out_dir / "edited.mspc").string().c_str());
}

void cmd_probe(const json& opts) {
    char* report = nullptr;
    check(melodia_run_probe(opts.dump().c_str(), &report));
    std::printf("%s\n", owned(report).c_str());
    write_config_echo(fs::path(opts.at("out").get<std::string>()) / "config_echo.json", "probe",
                      opts);
}

void cmd_eval(const json& opts) {
    char* report = nullptr;
    check(melodia_run_eval(opts.dump().c_str(), &report));
    std::printf("%s\n", owned(report).c_str());
    const fs::path report_path = opts.at("report").get<std::string>();
    write_config_echo(report_path.string() + ".config.json", "eval", opts);
}

void cmd_sweep(const json& opts) {
    char* report = nullptr;
    check(melodia_run_sweep(opts.dump().c_str(), &report));
    std::printf("%s\n", owned(report).c_str());
    write_config_echo(fs::path(opts.at("out").get<std::string>()) / "config_echo.json", "sweep",
                      opts);
}

void cmd_render(const json& opts) {
    melodia_spectrogram* spec = nullptr;
    check(melodia_spectrogram_load(opts.at("in").get<std::string>().c_str(), &spec));
    const fs::path out = opts.at("out").get<std::string>();
    check(melodia_spectrogram_render_pgm(spec, out.string().c_str()));
    melodia_spectrogram_free(spec);
    write_config_echo(out.string() + ".config.json", "render", opts);
    std::printf("%s\n", out.string().c_str());
}

void dispatch(const std::string& command, const json& opts) {
    if (command == "synth") return cmd_synth(opts);
    if (command == "train") return cmd_train(opts);
    if (command == "generate") return cmd_generate(opts);
    if (command == "edit") return cmd_edit(opts);
    if (command == "probe") return cmd_probe(opts);
    if (command == "eval") return cmd_eval(opts);
    if (command == "sweep") return cmd_sweep(opts);
    if (command == "render") return cmd_render(opts);
    die("unknown command '" + command + "' in config echo");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"melodia: attention-guided spectrogram editing"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    std::string synth_out;
    uint64_t synth_seed = 0;
    int synth_count = 10;
    bool synth_bench = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "dataset seed");
    synth->add_option("--clips-per-class", synth_count, "clips per attribute class");
    synth->add_flag("--bench", synth_bench, "also emit an edit benchmark");

    // train
    auto* train = app.add_subcommand("train", "train a denoiser checkpoint");
    std::string train_manifest, train_out;
    uint64_t train_seed = 1;
    int train_steps = 2500, train_batch = 8;
    double train_lr = 3e-4, train_dropout = 0.1;
    train->add_option("--manifest", train_manifest, "dataset manifest")->required();
    train->add_option("--out", train_out, "checkpoint path")->required();
    train->add_option("--steps", train_steps, "optimization steps");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--batch-size", train_batch, "batch size");
    train->add_option("--lr", train_lr, "learning rate");
    train->add_option("--cond-dropout", train_dropout, "conditioning dropout");

    // generate
    auto* gen = app.add_subcommand("generate", "sample a clip from a prompt");
    std::string gen_model, gen_prompt, gen_out;
    double gen_cfg = 5.5;
    unsigned gen_steps = 50;
    uint64_t gen_seed = 0;
    gen->add_option("--model", gen_model, "checkpoint (or MELODIA_MODEL)");
    gen->add_option("--prompt", gen_prompt, "target prompt")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--cfg", gen_cfg, "guidance strength");
    gen->add_option("--steps", gen_steps, "inference steps");
    gen->add_option("--seed", gen_seed, "sampling seed");

    // edit
    auto* edit = app.add_subcommand("edit", "edit a clip toward a target prompt");
    std::string edit_model, edit_source, edit_prompt, edit_out, edit_layers = "8-14";
    unsigned edit_tstart = 700, edit_steps = 50;
    double edit_cfg = 5.5;
    uint64_t edit_seed = 0;
    bool edit_save_repo = false;
    edit->add_option("--model", edit_model, "checkpoint (or MELODIA_MODEL)");
    edit->add_option("--source", edit_source, "source clip (.mspc)")->required();
    edit->add_option("--prompt", edit_prompt, "target prompt")->required();
    edit->add_option("--out", edit_out, "output directory")->required();
    edit->add_option("--t-start", edit_tstart, "inversion depth in [0,1000]");
    edit->add_option("--layers", edit_layers, "injection window: 8-14, 1-16, none, or 3,5,9");
    edit->add_option("--cfg", edit_cfg, "guidance strength");
    edit->add_option("--steps", edit_steps, "inference steps");
    edit->add_option("--seed", edit_seed, "seed (recorded)");
    edit->add_flag("--save-repo", edit_save_repo, "persist the attention repository");

    // probe
    auto* probe = app.add_subcommand("probe", "attention-map probing tables");
    std::string probe_model, probe_out, probe_axis = "instrument";
    uint64_t probe_seed = 0;
    int probe_per_class = 20, probe_steps = 50;
    probe->add_option("--model", probe_model, "checkpoint (or MELODIA_MODEL)");
    probe->add_option("--out", probe_out, "output directory")->required();
    probe->add_option("--axis", probe_axis, "attribute axis to probe");
    probe->add_option("--seed", probe_seed, "probe seed");
    probe->add_option("--prompts-per-class", probe_per_class, "generations per class");
    probe->add_option("--steps", probe_steps, "generation steps");

    // eval
    auto* eval = app.add_subcommand("eval", "score methods over a benchmark");
    std::string eval_model, eval_manifest, eval_report, eval_methods = "melodia,ddim_baseline";
    std::string eval_layers = "8-14";
    unsigned eval_tstart = 700, eval_steps = 50;
    double eval_cfg = 5.5;
    uint64_t eval_seed = 0;
    int eval_jobs = 1;
    eval->add_option("--model", eval_model, "checkpoint (or MELODIA_MODEL)");
    eval->add_option("--manifest", eval_manifest, "benchmark manifest")->required();
    eval->add_option("--report", eval_report, "report path (JSON)")->required();
    eval->add_option("--methods", eval_methods, "comma list: melodia,ddim_baseline");
    eval->add_option("--t-start", eval_tstart, "inversion depth");
    eval->add_option("--layers", eval_layers, "melodia injection window");
    eval->add_option("--cfg", eval_cfg, "guidance strength");
    eval->add_option("--steps", eval_steps, "inference steps");
    eval->add_option("--seed", eval_seed, "classifier seed");
    eval->add_option("--jobs", eval_jobs, "parallel clips");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "layer-ablation or t-start sweep");
    std::string sweep_model, sweep_manifest, sweep_out, sweep_mode = "tstart";
    std::string sweep_tstarts = "300,500,700,1000", sweep_layers = "8-14";
    uint64_t sweep_seed = 0;
    int sweep_max_clips = 0, sweep_steps = 50;
    double sweep_cfg = 5.5;
    unsigned sweep_tstart = 700;
    sweep->add_option("--model", sweep_model, "checkpoint (or MELODIA_MODEL)");
    sweep->add_option("--manifest", sweep_manifest, "benchmark manifest")->required();
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep->add_option("--mode", sweep_mode, "layers | tstart");
    sweep->add_option("--t-starts", sweep_tstarts, "comma list for tstart mode");
    sweep->add_option("--t-start", sweep_tstart, "depth for layers mode");
    sweep->add_option("--layers", sweep_layers, "window for tstart mode");
    sweep->add_option("--cfg", sweep_cfg, "guidance strength");
    sweep->add_option("--steps", sweep_steps, "inference steps");
    sweep->add_option("--seed", sweep_seed, "classifier seed");
    sweep->add_option("--max-clips", sweep_max_clips, "cap benchmark size");

    // render
    auto* render = app.add_subcommand("render", "render a spectrogram to PGM");
    std::string render_in, render_out;
    render->add_option("--in", render_in, "input .mspc")->required();
    render->add_option("--out", render_out, "output .pgm")->required();

    // replay
    auto* replay = app.add_subcommand("replay", "re-run a command from its config echo");
    std::string replay_config;
    replay->add_option("config", replay_config, "config_echo.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (synth->parsed()) {
            json opts = {{"out", synth_out}, {"seed", synth_seed},
                         {"clips_per_class", synth_count}, {"bench", synth_bench}};
            cmd_synth(opts);
        } else if (train->parsed()) {
            json opts = {{"manifest", train_manifest}, {"out", train_out},
                         {"steps", train_steps},       {"seed", train_seed},
                         {"batch_size", train_batch},  {"learning_rate", train_lr},
                         {"cond_dropout", train_dropout}};
            cmd_train(opts);
        } else if (gen->parsed()) {
            json opts = {{"model", model_or_env(gen_model)}, {"prompt", gen_prompt},
                         {"out", gen_out},                   {"cfg", gen_cfg},
                         {"steps", gen_steps},               {"seed", gen_seed}};
            cmd_generate(opts);
        } else if (edit->parsed()) {
            json opts = {{"model", model_or_env(edit_model)},
                         {"source", edit_source},
                         {"prompt", edit_prompt},
                         {"out", edit_out},
                         {"t_start", edit_tstart},
                         {"layers", edit_layers},
                         {"cfg", edit_cfg},
                         {"steps", edit_steps},
                         {"seed", edit_seed},
                         {"save_repo", edit_save_repo}};
            cmd_edit(opts);
        } else if (probe->parsed()) {
            json opts = {{"model", model_or_env(probe_model)},
                         {"out", probe_out},
                         {"axis", probe_axis},
                         {"seed", probe_seed},
                         {"prompts_per_class", probe_per_class},
                         {"steps", probe_steps}};
            cmd_probe(opts);
        } else if (eval->parsed()) {
            std::vector<std::string> methods;
            std::stringstream in(eval_methods);
            std::string m;
            while (std::getline(in, m, ',')) methods.push_back(m);
            json opts = {{"model", model_or_env(eval_model)},
                         {"manifest", eval_manifest},
                         {"report", eval_report},
                         {"methods", methods},
                         {"t_start", eval_tstart},
                         {"layers", eval_layers},
                         {"cfg", eval_cfg},
                         {"steps", eval_steps},
                         {"seed", eval_seed},
                         {"jobs", eval_jobs}};
            cmd_eval(opts);
        } else if (sweep->parsed()) {
            std::vector<int> t_starts;
            std::stringstream in(sweep_tstarts);
            std::string t;
            while (std::getline(in, t, ',')) t_starts.push_back(std::stoi(t));
            json opts = {{"model", model_or_env(sweep_model)},
                         {"manifest", sweep_manifest},
                         {"out", sweep_out},
                         {"mode", sweep_mode},
                         {"t_starts", t_starts},
                         {"t_start", sweep_tstart},
                         {"layers", sweep_layers},
                         {"cfg", sweep_cfg},
                         {"steps", sweep_steps},
                         {"seed", sweep_seed}};
            if (sweep_max_clips > 0) opts["max_clips"] = sweep_max_clips;
            cmd_sweep(opts);
        } else if (render->parsed()) {
            json opts = {{"in", render_in}, {"out", render_out}};
            cmd_render(opts);
        } else if (replay->parsed()) {
            std::ifstream in(replay_config);
            if (!in.good()) die("cannot open " + replay_config);
            json echo;
            in >> echo;
            dispatch(echo.at("command").get<std::string>(), echo.at("options"));
        }
    } catch (const std::exception& e) {
        die(e.what());
    }
    return kExitOk;
}
