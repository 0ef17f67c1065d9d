#include <doctest.h>

#include "fixtures.hpp"
#include "melodia/probing.hpp"

using namespace melodia;

namespace {

// two shifted Gaussian blobs, linearly separable
std::vector<ProbeSample> gaussian_samples(int per_class, uint64_t seed, bool shuffle_labels) {
    Rng rng(seed);
    std::vector<ProbeSample> samples;
    for (int label = 0; label < 2; ++label) {
        for (int i = 0; i < per_class; ++i) {
            ProbeSample s;
            s.features.resize(8);
            for (int d = 0; d < 8; ++d) {
                s.features(d) = static_cast<float>(rng.normal()) +
                                (label == 0 ? -2.0f : 2.0f) * (d < 4 ? 1.0f : 0.0f);
            }
            s.label = label;
            samples.push_back(std::move(s));
        }
    }
    if (shuffle_labels) {
        for (auto& s : samples) s.label = static_cast<int>(rng.uniform_int(0, 1));
    }
    return samples;
}

}  // namespace

TEST_CASE("pool_sa_map: uniform map pools to a constant vector") {
    const Eigen::MatrixXf map = Eigen::MatrixXf::Constant(64, 64, 1.0f / 64.0f);
    const Eigen::VectorXf feature = pool_sa_map(map);
    CHECK(feature.size() == 256);
    CHECK((feature.array() - 1.0f / 64.0f).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("pool_sa_map: swapping block rows changes the feature") {
    Rng rng(8);
    Eigen::MatrixXf map(64, 64);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) map(r, c) = static_cast<float>(rng.uniform());
    Eigen::MatrixXf swapped = map;
    swapped.middleRows(0, 4) = map.middleRows(4, 4);
    swapped.middleRows(4, 4) = map.middleRows(0, 4);
    CHECK((pool_sa_map(map) - pool_sa_map(swapped)).cwiseAbs().maxCoeff() > 1e-6f);
}

TEST_CASE("pool maps: zero in, zero out") {
    CHECK(pool_sa_map(Eigen::MatrixXf::Zero(64, 64)).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(pool_ca_map(Eigen::MatrixXf::Zero(64, 4), 2, 3).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("pool_ca_map: keyword span column mean has length N") {
    Rng rng(9);
    Eigen::MatrixXf map(64, 4);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 4; ++c) map(r, c) = static_cast<float>(rng.uniform());
    const Eigen::VectorXf feature = pool_ca_map(map, 2, 3);
    CHECK(feature.size() == 64);
    CHECK(feature(0) == doctest::Approx(map(0, 2)));
}

TEST_CASE("train_probe: separable blobs reach high held-out accuracy") {
    const auto samples = gaussian_samples(30, 5, false);
    const auto [probe, eval] = train_probe(samples, 2, 0.7, 1);
    (void)probe;
    CHECK(eval.overall_accuracy > 0.95);
    CHECK(eval.test_count == 18);
}

TEST_CASE("train_probe: shuffled labels land near chance") {
    double total = 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto samples = gaussian_samples(30, 50 + seed, true);
        const auto [probe, eval] = train_probe(samples, 2, 0.7, seed);
        (void)probe;
        total += eval.overall_accuracy;
    }
    CHECK(std::abs(total / 5.0 - 0.5) < 0.15);
}

TEST_CASE("train_probe: deterministic per seed") {
    const auto samples = gaussian_samples(20, 6, false);
    const auto [pa, ea] = train_probe(samples, 2, 0.7, 9);
    const auto [pb, eb] = train_probe(samples, 2, 0.7, 9);
    CHECK(ea.overall_accuracy == eb.overall_accuracy);
    CHECK(pa.w1 == pb.w1);
    CHECK(pa.w2 == pb.w2);
}

TEST_CASE("train_probe: probabilities form a simplex and survive rescaling") {
    const auto samples = gaussian_samples(20, 7, false);
    const auto [probe, eval] = train_probe(samples, 2, 0.7, 2);
    (void)eval;
    const Eigen::VectorXf p = probe.probabilities(samples[0].features);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(p.minCoeff() >= 0.0f);
    CHECK(probe.predict(samples[0].features) ==
          probe.predict(samples[0].features * 1.0f));
}

TEST_CASE("train_probe: classes need at least 10 samples") {
    const auto samples = gaussian_samples(5, 3, false);
    CHECK_THROWS_AS(train_probe(samples, 2, 0.7, 1), Error);
}

TEST_CASE("collect_maps: sample accounting and determinism") {
    const Checkpoint& ckpt = fixtures::tiny_model();
    std::vector<ProbePrompt> prompts;
    for (int j = 0; j < 20; ++j) {
        prompts.push_back({"a solo piano music", "piano", 0});
        prompts.push_back({"a solo violin music", "violin", 1});
    }
    ProbeOptions options;
    options.steps = 10;
    options.sampled_steps = 4;
    options.seed = 13;

    const std::vector<int> layers = {1, 8, 16};
    const auto ca = collect_maps(ckpt, prompts, layers, AttentionKind::cross_attn, options);
    CHECK(ca.size() == 120);  // 2 classes x 20 prompts x 3 layers
    CHECK(ca[0].features.size() == 64);

    const auto sa = collect_maps(ckpt, prompts, layers, AttentionKind::self_attn, options);
    CHECK(sa.size() == 120);
    CHECK(sa[0].features.size() == 256);

    const auto ca2 = collect_maps(ckpt, prompts, layers, AttentionKind::cross_attn, options);
    for (size_t i = 0; i < ca.size(); ++i) CHECK(ca[i].features == ca2[i].features);
}

TEST_CASE("probe report: renders highlighted layer table") {
    ProbeReport report;
    report.axis = "instrument";
    report.kind = AttentionKind::cross_attn;
    report.classes = {"piano", "violin"};
    for (int l = 1; l <= 16; ++l) report.layers.push_back(l);
    report.recall.assign(2, std::vector<double>(16, 0.5));
    report.class_average = {0.5, 0.5};
    report.layer_accuracy.assign(16, 0.5);
    report.mean_accuracy = 0.5;
    const std::string text = report.to_text();
    CHECK(text.find("Layer 1") != std::string::npos);
    CHECK(text.find("Layer 13") != std::string::npos);
    CHECK(text.find("Avg.") != std::string::npos);
    CHECK(report.to_json().find("mean_accuracy") != std::string::npos);
}
