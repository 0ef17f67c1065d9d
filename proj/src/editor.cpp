#include "melodia/editor.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

namespace melodia {

using nlohmann::json;

void EditConfig::validate(int layers_total) const {
    require(t_start >= 0, ErrorCode::out_of_range, "t_start must be >= 0");
    require(cfg_w >= 0.0f, ErrorCode::invalid_argument, "cfg_w must be >= 0");
    require(steps >= 1, ErrorCode::invalid_argument, "steps must be >= 1");
    for (int l : layer_window) {
        require(l >= 1 && l <= layers_total, ErrorCode::out_of_range,
                "layer " + std::to_string(l) + " outside [1," + std::to_string(layers_total) + "]");
    }
}

std::string EditConfig::window_name() const {
    if (layer_window.empty()) return "none";
    // contiguous ranges print as "a-b"
    const int lo = *layer_window.begin();
    const int hi = *layer_window.rbegin();
    if (static_cast<int>(layer_window.size()) == hi - lo + 1) {
        return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
    }
    std::string out;
    for (int l : layer_window) out += (out.empty() ? "" : ",") + std::to_string(l);
    return out;
}

std::set<int> parse_layer_window(const std::string& text) {
    std::set<int> out;
    if (text == "none" || text.empty()) return out;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        const auto dash = part.find('-');
        if (dash != std::string::npos && dash > 0) {
            const int lo = std::stoi(part.substr(0, dash));
            const int hi = std::stoi(part.substr(dash + 1));
            require(lo <= hi, ErrorCode::invalid_argument,
                    "bad layer range '" + part + "'");
            for (int l = lo; l <= hi; ++l) out.insert(l);
        } else {
            out.insert(std::stoi(part));
        }
    }
    return out;
}

namespace {

SpectrogramParams params_of(const MelSpectrogram& spec) {
    SpectrogramParams p;
    p.frames = spec.frames();
    p.bins = spec.bins();
    p.sample_rate_hz = spec.sample_rate_hz;
    p.hop_samples = spec.hop_samples;
    p.mel_lo_hz = spec.mel_lo_hz;
    p.mel_hi_hz = spec.mel_hi_hz;
    return p;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

CaptureResult capture(const Checkpoint& ckpt, const MelSpectrogram& source,
                      const EditConfig& config) {
    config.validate(ckpt.config.layers);
    const ScheduleBundle schedule = build_schedule_for(ckpt, config.steps);
    const Latent z0 = ckpt.codec.encode(source);

    const int t_eff = schedule.timesteps.round_down(config.t_start);
    RepoGeometry geom;
    geom.tokens = ckpt.config.tokens;
    geom.head_dim = ckpt.config.sa_dim / ckpt.config.heads;
    geom.layers = ckpt.config.layers;
    geom.heads = ckpt.config.heads;
    std::vector<int> expected =
        t_eff == 0 ? std::vector<int>{} : schedule.timesteps.steps_up_to(t_eff);

    CaptureResult result{
        Latent{},
        AttentionRepository(geom, schedule.timesteps.schedule_hash, ckpt.codec.id(),
                            ckpt.model_hash(), t_eff, std::move(expected)),
        t_eff};

    HookSet hooks;
    hooks.add_capture_all_layers(AttentionKind::self_attn, make_repository_sink(result.repo));
    InversionResult inv = invert_partial(ckpt, z0, config.t_start, schedule, &hooks);
    result.z_start = std::move(inv.z);
    require(result.repo.complete(), ErrorCode::numeric_error,
            "capture produced an incomplete repository");
    return result;
}

MelSpectrogram edit_from_capture(const Checkpoint& ckpt, const CaptureResult& cap,
                                 const std::string& target_prompt, const EditConfig& config,
                                 const SpectrogramParams& meta,
                                 std::map<int, int>* override_queries) {
    config.validate(ckpt.config.layers);
    const ScheduleBundle schedule = build_schedule_for(ckpt, config.steps);
    require(cap.repo.schedule_hash() == schedule.timesteps.schedule_hash, ErrorCode::mismatch,
            "capture was made under a different timestep schedule");
    require(cap.repo.model_hash() == ckpt.model_hash(), ErrorCode::mismatch,
            "capture was made with a different checkpoint");

    HookSet hooks;
    const auto supplier = make_repository_supplier(cap.repo);
    for (int layer : config.layer_window) {
        hooks.set_override(layer, [supplier, override_queries](int l, int ts) {
            if (override_queries != nullptr) (*override_queries)[l] += 1;
            return supplier(l, ts);
        });
    }

    const Latent z_edit = reverse_from(ckpt, cap.z_start, cap.t_start_effective, target_prompt,
                                       config.cfg_w, schedule,
                                       config.layer_window.empty() ? nullptr : &hooks);
    return ckpt.codec.decode(z_edit, meta).clamped;
}

EditResult edit(const Checkpoint& ckpt, const MelSpectrogram& source,
                const std::string& target_prompt, const EditConfig& config) {
    config.validate(ckpt.config.layers);
    (void)ckpt.vocab.tokenize(target_prompt);  // fail fast on unknown words
    const ScheduleBundle schedule = build_schedule_for(ckpt, config.steps);
    const SpectrogramParams meta = params_of(source);

    EditResult result;
    result.config = config;

    const auto t0 = std::chrono::steady_clock::now();
    CaptureResult cap = capture(ckpt, source, config);
    result.t_start_effective = cap.t_start_effective;
    result.capture_seconds = seconds_since(t0);

    const auto t1 = std::chrono::steady_clock::now();

    // reference reconstruction: same prior, no overrides, null prompt
    const Latent z_rec =
        reverse_from(ckpt, cap.z_start, cap.t_start_effective, "", 1.0f, schedule, nullptr);
    result.reconstruction = ckpt.codec.decode(z_rec, meta).clamped;

    HookSet hooks;
    const auto supplier = make_repository_supplier(cap.repo);
    for (int layer : config.layer_window) {
        hooks.set_override(layer, [&result, supplier](int l, int ts) {
            result.override_queries_per_layer[l] += 1;
            return supplier(l, ts);
        });
    }
    const Latent z_edit = reverse_from(ckpt, cap.z_start, cap.t_start_effective, target_prompt,
                                       config.cfg_w, schedule,
                                       config.layer_window.empty() ? nullptr : &hooks);
    result.edited = ckpt.codec.decode(z_edit, meta).clamped;
    result.edit_seconds = seconds_since(t1);
    return result;
}

std::string EditResult::to_json() const {
    json window = json::array();
    for (int l : config.layer_window) window.push_back(l);
    json queries = json::object();
    for (const auto& [layer, count] : override_queries_per_layer) {
        queries[std::to_string(layer)] = count;
    }
    json j = {
        {"t_start", config.t_start},
        {"t_start_effective", t_start_effective},
        {"layer_window", window},
        {"window_name", config.window_name()},
        {"cfg_w", config.cfg_w},
        {"steps", config.steps},
        {"seed", config.seed},
        {"capture_seconds", capture_seconds},
        {"edit_seconds", edit_seconds},
        {"override_queries_per_layer", queries},
    };
    if (!repository_path.empty()) j["repository_path"] = repository_path;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// harnesses

std::vector<std::set<int>> default_ablation_windows() {
    return {parse_layer_window("none"), parse_layer_window("1-16"), parse_layer_window("6-16"),
            parse_layer_window("10-12"), parse_layer_window("1-7"), parse_layer_window("8-14")};
}

AblationTable layer_ablation_sweep(const Checkpoint& ckpt, const std::vector<EditTask>& tasks,
                                   const std::vector<std::set<int>>& windows,
                                   const EditConfig& base_config,
                                   const AttributeClassifier& classifier) {
    require(!windows.empty() && !tasks.empty(), ErrorCode::invalid_argument,
            "ablation sweep needs tasks and windows");

    // one capture per task, shared across windows
    std::vector<CaptureResult> captures;
    captures.reserve(tasks.size());
    for (const auto& task : tasks) captures.push_back(capture(ckpt, task.source, base_config));

    std::vector<Eigen::VectorXf> source_embeddings;
    for (const auto& task : tasks) source_embeddings.push_back(clip_embedding(task.source));
    const FeatureStats source_stats = feature_stats(source_embeddings);

    AblationTable table;
    for (const auto& window : windows) {
        EditConfig config = base_config;
        config.layer_window = window;
        AblationRow row;
        row.window_name = config.window_name();
        std::vector<Eigen::VectorXf> edited_embeddings;
        for (size_t i = 0; i < tasks.size(); ++i) {
            const MelSpectrogram edited = edit_from_capture(
                ckpt, captures[i], tasks[i].target_prompt, config, params_of(tasks[i].source));
            row.adherence += adherence_score(edited, tasks[i].target_class, classifier);
            row.structure_distance += structure_distance(tasks[i].source, edited);
            row.chroma_similarity += chroma_similarity(tasks[i].source, edited);
            edited_embeddings.push_back(clip_embedding(edited));
        }
        const double n = static_cast<double>(tasks.size());
        row.adherence /= n;
        row.structure_distance /= n;
        row.chroma_similarity /= n;
        row.fad = frechet_feature_distance(source_stats, feature_stats(edited_embeddings));
        table.rows.push_back(std::move(row));
    }

    // composites across the window cohort
    MetricCohort cohort;
    for (const auto& row : table.rows) {
        cohort.methods.push_back(row.window_name);
        cohort.adherence.push_back(row.adherence);
        cohort.structure_distance.push_back(row.structure_distance);
        cohort.chroma_similarity.push_back(row.chroma_similarity);
        cohort.fad.push_back(row.fad);
    }
    const auto asb_scores = asb(cohort);
    const auto amb_scores = amb(cohort);
    for (size_t i = 0; i < table.rows.size(); ++i) {
        table.rows[i].asb = asb_scores[i];
        table.rows[i].amb = amb_scores[i];
    }
    return table;
}

std::string AblationTable::to_json() const {
    json arr = json::array();
    for (const auto& row : rows) {
        arr.push_back({{"layers", row.window_name},
                       {"adherence", row.adherence},
                       {"structure_distance", row.structure_distance},
                       {"chroma_similarity", row.chroma_similarity},
                       {"fad", row.fad},
                       {"asb", row.asb},
                       {"amb", row.amb}});
    }
    return json{{"rows", arr}}.dump(2);
}

std::string AblationTable::to_text() const {
    std::ostringstream out;
    out << std::left << std::setw(10) << "Layers" << std::right << std::setw(11) << "Adherence"
        << std::setw(11) << "Structure" << std::setw(9) << "Chroma" << std::setw(9) << "FAD"
        << std::setw(8) << "ASB" << std::setw(8) << "AMB" << "\n";
    out << std::fixed << std::setprecision(3);
    for (const auto& row : rows) {
        out << std::left << std::setw(10) << row.window_name << std::right << std::setw(11)
            << row.adherence << std::setw(11) << row.structure_distance << std::setw(9)
            << row.chroma_similarity << std::setw(9) << row.fad << std::setw(8) << row.asb
            << std::setw(8) << row.amb << "\n";
    }
    return out.str();
}

SweepCurve t_start_sweep(const Checkpoint& ckpt, const std::vector<EditTask>& tasks,
                         const std::vector<int>& t_starts, const EditConfig& base_config,
                         const AttributeClassifier& classifier) {
    require(!t_starts.empty() && !tasks.empty(), ErrorCode::invalid_argument,
            "t_start sweep needs tasks and t_starts");
    SweepCurve curve;
    curve.window_name = base_config.window_name();
    for (int t_start : t_starts) {
        require(t_start >= 0 && t_start <= ckpt.config.total_timesteps, ErrorCode::out_of_range,
                "t_start " + std::to_string(t_start) + " outside [0,T]");
        EditConfig config = base_config;
        config.t_start = t_start;
        SweepPoint point;
        point.t_start = t_start;
        for (const auto& task : tasks) {
            const EditResult result = edit(ckpt, task.source, task.target_prompt, config);
            point.adherence += adherence_score(result.edited, task.target_class, classifier);
            point.structure_distance += structure_distance(task.source, result.edited);
        }
        point.adherence /= static_cast<double>(tasks.size());
        point.structure_distance /= static_cast<double>(tasks.size());
        curve.points.push_back(point);
    }
    return curve;
}

std::string SweepCurve::to_json() const {
    json arr = json::array();
    for (const auto& p : points) {
        arr.push_back({{"t_start", p.t_start},
                       {"adherence", p.adherence},
                       {"structure_distance", p.structure_distance}});
    }
    return json{{"window", window_name}, {"points", arr}}.dump(2);
}

std::string sweep_plot_svg(const std::vector<SweepCurve>& curves) {
    // fixed 640x480 frame; x = adherence, y = structure distance
    double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
    for (const auto& c : curves) {
        for (const auto& p : c.points) {
            min_x = std::min(min_x, p.adherence);
            max_x = std::max(max_x, p.adherence);
            min_y = std::min(min_y, p.structure_distance);
            max_y = std::max(max_y, p.structure_distance);
        }
    }
    if (max_x <= min_x) max_x = min_x + 1.0;
    if (max_y <= min_y) max_y = min_y + 1.0;
    const auto sx = [&](double v) { return 60.0 + 540.0 * (v - min_x) / (max_x - min_x); };
    const auto sy = [&](double v) { return 420.0 - 380.0 * (v - min_y) / (max_y - min_y); };

    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='480'>\n";
    out << "<rect width='640' height='480' fill='white'/>\n";
    out << "<line x1='60' y1='420' x2='600' y2='420' stroke='black'/>\n";
    out << "<line x1='60' y1='40' x2='60' y2='420' stroke='black'/>\n";
    out << "<text x='300' y='460' font-size='14'>adherence</text>\n";
    out << "<text x='15' y='230' font-size='14' transform='rotate(-90 15 230)'>structure</text>\n";
    for (size_t ci = 0; ci < curves.size(); ++ci) {
        const char* color = kColors[ci % 4];
        std::string path;
        for (size_t i = 0; i < curves[ci].points.size(); ++i) {
            const auto& p = curves[ci].points[i];
            path += (i == 0 ? "M" : " L") + std::to_string(sx(p.adherence)) + " " +
                    std::to_string(sy(p.structure_distance));
            out << "<circle cx='" << sx(p.adherence) << "' cy='" << sy(p.structure_distance)
                << "' r='4' fill='" << color << "'/>\n";
            out << "<text x='" << sx(p.adherence) + 6 << "' y='" << sy(p.structure_distance) - 6
                << "' font-size='10'>" << p.t_start << "</text>\n";
        }
        out << "<path d='" << path << "' stroke='" << color << "' fill='none'/>\n";
        out << "<text x='70' y='" << 55 + 16 * ci << "' font-size='12' fill='" << color
            << "'>window " << curves[ci].window_name << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace melodia
