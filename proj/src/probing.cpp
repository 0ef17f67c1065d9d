#include "melodia/probing.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace melodia {

using nlohmann::json;

// ---------------------------------------------------------------------------
// MLP

namespace {

Eigen::VectorXf softmax_vec(const Eigen::VectorXf& logits) {
    const float m = logits.maxCoeff();
    Eigen::VectorXf e = (logits.array() - m).exp();
    return e / e.sum();
}

}  // namespace

Eigen::VectorXf MlpProbe::probabilities(const Eigen::VectorXf& x) const {
    const Eigen::VectorXf h = ((w1 * x) + b1.transpose()).array().tanh();
    const Eigen::VectorXf logits = (w2 * h) + b2.transpose();
    return softmax_vec(logits);
}

int MlpProbe::predict(const Eigen::VectorXf& x) const {
    Eigen::Index idx = 0;
    probabilities(x).maxCoeff(&idx);
    return static_cast<int>(idx);
}

MlpProbe train_mlp(const Eigen::MatrixXf& features, const Eigen::MatrixXf& targets,
                   const MlpTrainOptions& options) {
    const int n = static_cast<int>(features.rows());
    const int in_dim = static_cast<int>(features.cols());
    const int classes = static_cast<int>(targets.cols());
    require(n >= 1 && targets.rows() == n, ErrorCode::invalid_argument,
            "train_mlp: features/targets misaligned");
    require(classes >= 2, ErrorCode::invalid_argument, "train_mlp: need at least 2 classes");

    Rng rng(mix_seed(options.seed, 0x6d6c7030));
    MlpProbe net;
    net.training_seed = options.seed;
    const float s1 = 1.0f / std::sqrt(static_cast<float>(in_dim));
    const float s2 = 1.0f / std::sqrt(static_cast<float>(options.hidden));
    net.w1.resize(options.hidden, in_dim);
    for (int r = 0; r < options.hidden; ++r)
        for (int c = 0; c < in_dim; ++c) net.w1(r, c) = s1 * static_cast<float>(rng.normal());
    net.b1 = Eigen::MatrixXf::Zero(1, options.hidden);
    net.w2.resize(classes, options.hidden);
    for (int r = 0; r < classes; ++r)
        for (int c = 0; c < options.hidden; ++c) net.w2(r, c) = s2 * static_cast<float>(rng.normal());
    net.b2 = Eigen::MatrixXf::Zero(1, classes);

    Eigen::MatrixXf m_w1 = Eigen::MatrixXf::Zero(options.hidden, in_dim), v_w1 = m_w1;
    Eigen::MatrixXf m_b1 = Eigen::MatrixXf::Zero(1, options.hidden), v_b1 = m_b1;
    Eigen::MatrixXf m_w2 = Eigen::MatrixXf::Zero(classes, options.hidden), v_w2 = m_w2;
    Eigen::MatrixXf m_b2 = Eigen::MatrixXf::Zero(1, classes), v_b2 = m_b2;

    const float b1c = 0.9f, b2c = 0.999f, eps = 1e-8f;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        // forward (full batch)
        Eigen::MatrixXf h_pre = (features * net.w1.transpose()).rowwise() + net.b1.row(0);
        Eigen::MatrixXf h = h_pre.array().tanh();
        Eigen::MatrixXf logits = (h * net.w2.transpose()).rowwise() + net.b2.row(0);
        Eigen::MatrixXf probs(n, classes);
        for (int r = 0; r < n; ++r) {
            probs.row(r) = softmax_vec(logits.row(r).transpose()).transpose();
        }

        // backward
        Eigen::MatrixXf d_logits = (probs - targets) / static_cast<float>(n);
        Eigen::MatrixXf g_w2 = d_logits.transpose() * h + options.weight_decay * net.w2;
        Eigen::MatrixXf g_b2 = d_logits.colwise().sum();
        Eigen::MatrixXf d_h = d_logits * net.w2;
        Eigen::MatrixXf d_pre = d_h.array() * (1.0f - h.array().square());
        Eigen::MatrixXf g_w1 = d_pre.transpose() * features + options.weight_decay * net.w1;
        Eigen::MatrixXf g_b1 = d_pre.colwise().sum();

        const float bc1 = 1.0f - std::pow(b1c, static_cast<float>(epoch + 1));
        const float bc2 = 1.0f - std::pow(b2c, static_cast<float>(epoch + 1));
        auto adam = [&](Eigen::MatrixXf& w, Eigen::MatrixXf& mw, Eigen::MatrixXf& vw,
                        const Eigen::MatrixXf& g) {
            mw = b1c * mw + (1.0f - b1c) * g;
            vw = b2c * vw + (1.0f - b2c) * g.cwiseProduct(g);
            w.array() -= options.learning_rate * (mw.array() / bc1) /
                         ((vw.array() / bc2).sqrt() + eps);
        };
        adam(net.w1, m_w1, v_w1, g_w1);
        adam(net.b1, m_b1, v_b1, g_b1);
        adam(net.w2, m_w2, v_w2, g_w2);
        adam(net.b2, m_b2, v_b2, g_b2);
    }
    return net;
}

// ---------------------------------------------------------------------------
// pooling

Eigen::VectorXf pool_sa_map(const Eigen::MatrixXf& mean_map) {
    const int n = static_cast<int>(mean_map.rows());
    require(mean_map.cols() == n, ErrorCode::invalid_argument, "pool_sa_map: map must be square");
    require(n >= 16, ErrorCode::invalid_argument, "pool_sa_map: need at least 16 tokens");
    const int blocks = 16;
    Eigen::VectorXf out(blocks * blocks);
    for (int br = 0; br < blocks; ++br) {
        const int r0 = br * n / blocks;
        const int r1 = std::max(r0 + 1, (br + 1) * n / blocks);
        for (int bc = 0; bc < blocks; ++bc) {
            const int c0 = bc * n / blocks;
            const int c1 = std::max(c0 + 1, (bc + 1) * n / blocks);
            out(br * blocks + bc) = mean_map.block(r0, c0, r1 - r0, c1 - c0).mean();
        }
    }
    return out;
}

Eigen::VectorXf pool_ca_map(const Eigen::MatrixXf& mean_map, int span_begin, int span_end) {
    require(span_begin >= 0 && span_end > span_begin && span_end <= mean_map.cols(),
            ErrorCode::out_of_range, "pool_ca_map: span outside map");
    return mean_map.middleCols(span_begin, span_end - span_begin).rowwise().mean();
}

// ---------------------------------------------------------------------------
// collection

std::vector<ProbeSample> collect_maps(const Checkpoint& ckpt,
                                      const std::vector<ProbePrompt>& prompts,
                                      const std::vector<int>& layers, AttentionKind kind,
                                      const ProbeOptions& options) {
    require(!prompts.empty() && !layers.empty(), ErrorCode::invalid_argument,
            "collect_maps: prompts and layers must be nonempty");
    const ScheduleBundle schedule = build_schedule_for(ckpt, options.steps);

    // evaluation timesteps of the generation pass, in visit order: the first
    // evaluation happens at T-1, the final scheduled step (0) is never one
    std::vector<int> eval_steps;
    eval_steps.push_back(ckpt.config.total_timesteps - 1);
    for (size_t i = 0; i + 1 < schedule.timesteps.steps.size(); ++i) {
        eval_steps.push_back(schedule.timesteps.steps[i]);
    }
    std::set<int> chosen;
    const int count = std::min<int>(options.sampled_steps, static_cast<int>(eval_steps.size()));
    for (int j = 0; j < count; ++j) {
        const size_t idx = count == 1 ? 0
                                      : static_cast<size_t>(std::llround(
                                            static_cast<double>(j) *
                                            static_cast<double>(eval_steps.size() - 1) /
                                            static_cast<double>(count - 1)));
        chosen.insert(eval_steps[idx]);
    }

    std::vector<ProbeSample> samples;
    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        const ProbePrompt& prompt = prompts[pi];
        const PromptEmbedding emb = ckpt.vocab.embed(prompt.text);
        const auto [span_b, span_e] = emb.span_of(prompt.keyword);

        // per layer: running sum over sampled steps of head-averaged maps
        std::map<int, Eigen::MatrixXf> sums;
        std::map<int, int> counts;
        HookSet hooks;
        for (int layer : layers) {
            hooks.add_capture(layer, kind, [&, layer](const AttentionEvent& event) {
                if (!chosen.count(event.timestep)) return;
                Eigen::MatrixXf head_mean = event.map->head_maps[0];
                for (size_t h = 1; h < event.map->head_maps.size(); ++h) {
                    head_mean += event.map->head_maps[h];
                }
                head_mean /= static_cast<float>(event.map->head_maps.size());
                auto it = sums.find(layer);
                if (it == sums.end()) {
                    sums.emplace(layer, std::move(head_mean));
                } else {
                    it->second += head_mean;
                }
                counts[layer] += 1;
            });
        }

        (void)sample(ckpt, prompt.text, options.cfg_w, schedule,
                     mix_seed(options.seed, 0x70726f62 + pi), &hooks);

        for (int layer : layers) {
            const auto it = sums.find(layer);
            require(it != sums.end(), ErrorCode::not_found,
                    "collect_maps: no events captured for layer " + std::to_string(layer));
            const Eigen::MatrixXf mean_map = it->second / static_cast<float>(counts[layer]);
            ProbeSample s;
            s.label = prompt.label;
            s.layer = layer;
            s.kind = kind;
            s.features = kind == AttentionKind::cross_attn
                             ? pool_ca_map(mean_map, span_b, span_e)
                             : pool_sa_map(mean_map);
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

// ---------------------------------------------------------------------------
// probe training

std::pair<MlpProbe, ProbeEval> train_probe(const std::vector<ProbeSample>& samples,
                                           int num_classes, double split, uint64_t seed) {
    require(num_classes >= 2, ErrorCode::invalid_argument, "train_probe: need >= 2 classes");
    std::map<int, std::vector<size_t>> by_label;
    for (size_t i = 0; i < samples.size(); ++i) by_label[samples[i].label].push_back(i);
    require(static_cast<int>(by_label.size()) == num_classes, ErrorCode::invalid_argument,
            "train_probe: some classes have no samples");
    for (const auto& [label, idx] : by_label) {
        require(idx.size() >= 10, ErrorCode::invalid_argument,
                "train_probe: class " + std::to_string(label) + " has fewer than 10 samples");
    }

    Rng rng(mix_seed(seed, 0x73706c69));
    std::vector<size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_label) {
        (void)label;
        // seeded Fisher-Yates
        for (size_t i = idx.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(idx[i - 1], idx[j]);
        }
        const size_t n_train = static_cast<size_t>(
            std::lround(split * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < n_train ? train_idx : test_idx).push_back(idx[i]);
        }
    }

    const int in_dim = static_cast<int>(samples[0].features.size());
    Eigen::MatrixXf x(static_cast<int>(train_idx.size()), in_dim);
    Eigen::MatrixXf y = Eigen::MatrixXf::Zero(static_cast<int>(train_idx.size()), num_classes);
    for (size_t i = 0; i < train_idx.size(); ++i) {
        x.row(static_cast<int>(i)) = samples[train_idx[i]].features.transpose();
        y(static_cast<int>(i), samples[train_idx[i]].label) = 1.0f;
    }

    MlpTrainOptions opts;
    opts.seed = seed;
    MlpProbe probe = train_mlp(x, y, opts);

    ProbeEval eval;
    eval.per_class_recall.assign(static_cast<size_t>(num_classes), 0.0);
    std::vector<int> class_totals(static_cast<size_t>(num_classes), 0);
    int correct = 0;
    for (size_t i : test_idx) {
        const int pred = probe.predict(samples[i].features);
        class_totals[static_cast<size_t>(samples[i].label)] += 1;
        if (pred == samples[i].label) {
            correct += 1;
            eval.per_class_recall[static_cast<size_t>(samples[i].label)] += 1.0;
        }
    }
    eval.test_count = static_cast<int>(test_idx.size());
    eval.overall_accuracy = eval.test_count > 0
                                ? static_cast<double>(correct) / eval.test_count
                                : 0.0;
    for (int c = 0; c < num_classes; ++c) {
        if (class_totals[static_cast<size_t>(c)] > 0) {
            eval.per_class_recall[static_cast<size_t>(c)] /= class_totals[static_cast<size_t>(c)];
        }
    }
    return {std::move(probe), std::move(eval)};
}

// ---------------------------------------------------------------------------
// full protocol

namespace {

ProbeReport build_report(const Checkpoint& ckpt, const AttributeAxis& axis, AttentionKind kind,
                         const std::vector<ProbeSample>& samples, const ProbeOptions& options) {
    ProbeReport report;
    report.axis = axis.name;
    report.kind = kind;
    report.classes = axis.classes;
    for (int l = 1; l <= ckpt.config.layers; ++l) report.layers.push_back(l);
    report.recall.assign(axis.classes.size(),
                         std::vector<double>(report.layers.size(), 0.0));

    for (size_t li = 0; li < report.layers.size(); ++li) {
        std::vector<ProbeSample> layer_samples;
        for (const auto& s : samples) {
            if (s.layer == report.layers[li]) layer_samples.push_back(s);
        }
        const auto [probe, eval] =
            train_probe(layer_samples, static_cast<int>(axis.classes.size()), options.split,
                        mix_seed(options.seed, 0x6c617972 + static_cast<uint64_t>(li)));
        (void)probe;
        report.layer_accuracy.push_back(eval.overall_accuracy);
        for (size_t c = 0; c < axis.classes.size(); ++c) {
            report.recall[c][li] = eval.per_class_recall[c];
        }
    }

    for (size_t c = 0; c < axis.classes.size(); ++c) {
        double acc = 0.0;
        for (double v : report.recall[c]) acc += v;
        report.class_average.push_back(acc / static_cast<double>(report.layers.size()));
    }
    double mean = 0.0;
    for (double v : report.layer_accuracy) mean += v;
    report.mean_accuracy = mean / static_cast<double>(report.layer_accuracy.size());
    return report;
}

}  // namespace

ProbeReportPair probe_all_layers(const Checkpoint& ckpt, const AttributeAxis& axis,
                                 const ProbeOptions& options, int prompts_per_class) {
    require(axis.classes.size() >= 2, ErrorCode::invalid_argument,
            "probe_all_layers: axis needs >= 2 classes");
    std::vector<ProbePrompt> prompts;
    for (size_t c = 0; c < axis.classes.size(); ++c) {
        for (int j = 0; j < prompts_per_class; ++j) {
            prompts.push_back({prompt_for(axis, axis.classes[c]), axis.classes[c],
                               static_cast<int>(c)});
        }
    }
    std::vector<int> layers;
    for (int l = 1; l <= ckpt.config.layers; ++l) layers.push_back(l);

    const auto ca_samples = collect_maps(ckpt, prompts, layers, AttentionKind::cross_attn, options);
    const auto sa_samples = collect_maps(ckpt, prompts, layers, AttentionKind::self_attn, options);

    ProbeReportPair pair;
    pair.ca = build_report(ckpt, axis, AttentionKind::cross_attn, ca_samples, options);
    pair.sa = build_report(ckpt, axis, AttentionKind::self_attn, sa_samples, options);
    return pair;
}

// ---------------------------------------------------------------------------
// report rendering

std::string ProbeReport::to_json() const {
    json j = {{"axis", axis},
              {"kind", attention_kind_name(kind)},
              {"classes", classes},
              {"layers", layers},
              {"recall", recall},
              {"class_average", class_average},
              {"layer_accuracy", layer_accuracy},
              {"mean_accuracy", mean_accuracy}};
    return j.dump(2);
}

std::string ProbeReport::to_text() const {
    static const int kHighlight[] = {1, 4, 6, 10, 13, 16};
    std::ostringstream out;
    out << "Probing accuracy of " << (kind == AttentionKind::cross_attn ? "CA" : "SA")
        << " map, axis '" << axis << "'\n";
    out << std::left << std::setw(12) << "Class";
    std::vector<size_t> cols;
    for (int hl : kHighlight) {
        for (size_t li = 0; li < layers.size(); ++li) {
            if (layers[li] == hl) {
                out << std::right << std::setw(9) << ("Layer " + std::to_string(hl));
                cols.push_back(li);
            }
        }
    }
    out << std::right << std::setw(9) << "Avg." << "\n";
    out << std::fixed << std::setprecision(2);
    for (size_t c = 0; c < classes.size(); ++c) {
        out << std::left << std::setw(12) << classes[c];
        for (size_t li : cols) out << std::right << std::setw(9) << recall[c][li];
        out << std::right << std::setw(9) << class_average[c] << "\n";
    }
    return out.str();
}

}  // namespace melodia
