#include <doctest.h>

#include "fixtures.hpp"
#include "melodia/metrics.hpp"

using namespace melodia;

namespace {

MelSpectrogram render_class(const std::string& axis, const std::string& cls, uint64_t seed) {
    Rng rng(seed);
    return render_clip(sample_content(axis, cls, 64, rng), style_for_class(axis, cls), 64, 64);
}

AttributeClassifier instrument_classifier(uint64_t seed = 1) {
    std::vector<MelSpectrogram> clips;
    std::vector<std::string> labels;
    for (const std::string cls : {"piano", "violin", "flute", "accordion"}) {
        for (uint64_t i = 0; i < 20; ++i) {
            clips.push_back(render_class("instrument", cls, fnv1a_str(cls) + i));
            labels.push_back(cls);
        }
    }
    return train_attribute_classifier(clips, labels, seed);
}

// Table 3 cohorts: raw per-method scores for six methods on three datasets,
// printed alongside the composites they should recompute to.
struct ReferenceCohort {
    const char* dataset;
    std::vector<double> clap, lpaps, chroma_col;
    std::vector<double> printed_asb, printed_amb;
};

const std::vector<ReferenceCohort>& reference_cohorts() {
    static const std::vector<ReferenceCohort> cohorts = {
        {"MusicDelta",
         {0.17, 0.22, 0.20, 0.35, 0.30, 0.34},
         {6.82, 6.27, 5.06, 5.66, 5.93, 4.01},
         {0.20, 0.24, 0.29, 0.27, 0.26, 0.32},
         {0.00, 0.24, 0.28, 0.58, 0.45, 1.00},
         {0.00, 0.31, 0.29, 0.74, 0.60, 1.00}},
        {"ZoME-Bench",
         {0.12, 0.29, 0.22, 0.23, 0.22, 0.29},
         {6.85, 6.42, 4.82, 5.70, 5.82, 3.90},
         {0.19, 0.22, 0.26, 0.27, 0.25, 0.29},
         {0.00, 0.25, 0.63, 0.49, 0.44, 1.00},
         {0.00, 0.46, 0.64, 0.72, 0.59, 1.00}},
        {"MelodiaEdit",
         {0.34, 0.36, 0.27, 0.34, 0.35, 0.39},
         {5.46, 5.11, 3.32, 4.06, 4.58, 3.11},
         {0.49, 0.59, 0.73, 0.70, 0.65, 0.68},
         {0.29, 0.25, 0.00, 0.59, 0.48, 1.00},
         {0.29, 0.54, 0.00, 0.70, 0.67, 0.88}},
    };
    return cohorts;
}

MetricCohort cohort_of(const ReferenceCohort& ref) {
    MetricCohort c;
    c.methods = {"SDEdit", "MusicGen", "MusicMagus", "DDPM-Friendly", "DDIM Inversion",
                 "Melodia"};
    c.adherence = ref.clap;
    c.structure_distance = ref.lpaps;
    c.chroma_similarity = ref.chroma_col;
    c.fad.assign(6, 0.0);
    return c;
}

}  // namespace

TEST_CASE("adherence: rendered target class scores above chance") {
    const AttributeClassifier clf = instrument_classifier();
    double mean = 0.0;
    for (uint64_t i = 0; i < 32; ++i) {
        mean += adherence_score(render_class("instrument", "violin", 900 + i), "violin", clf);
    }
    mean /= 32.0;
    CHECK(mean > 0.25);  // chance for 4 classes
    CHECK(mean <= 1.0);
}

TEST_CASE("adherence: uniform noise scores near chance") {
    const AttributeClassifier clf = instrument_classifier();
    Rng rng(555);
    double mean = 0.0;
    for (int i = 0; i < 32; ++i) {
        MelSpectrogram noise;
        noise.data.resize(64, 64);
        for (int r = 0; r < 64; ++r)
            for (int c = 0; c < 64; ++c)
                noise.data(r, c) = static_cast<float>(rng.uniform()) * 1.2f;
        mean += adherence_score(noise, "piano", clf);
    }
    mean /= 32.0;
    CHECK(std::abs(mean - 0.25) < 0.2);
}

TEST_CASE("adherence: unknown class is an error, known classes stay in range") {
    const AttributeClassifier clf = instrument_classifier();
    const MelSpectrogram clip = render_class("instrument", "piano", 42);
    CHECK_THROWS_AS(adherence_score(clip, "harp", clf), Error);
    const double p = adherence_score(clip, "piano", clf);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
}

TEST_CASE("structure_distance: identical clips score zero") {
    const MelSpectrogram clip = render_class("style", "jazz", 7);
    CHECK(structure_distance(clip, clip) < 1e-6);
}

TEST_CASE("structure_distance: style changes cost less than content changes") {
    // content-style factorial over the synthetic grid
    int wins = 0, total = 0;
    for (uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(seed);
        Rng rng_b = rng.fork(1);
        const ContentSpec content_a = sample_content("instrument", "piano", 64, rng);
        const ContentSpec content_b = sample_content("instrument", "piano", 64, rng_b);
        const StyleSpec style_a = style_for_class("instrument", "piano");
        const StyleSpec style_b = style_for_class("instrument", "violin");

        const MelSpectrogram base = render_clip(content_a, style_a, 64, 64);
        const MelSpectrogram same_content = render_clip(content_a, style_b, 64, 64);
        const MelSpectrogram diff_content = render_clip(content_b, style_b, 64, 64);
        if (structure_distance(base, same_content) < structure_distance(base, diff_content)) {
            ++wins;
        }
        ++total;
    }
    CHECK(wins == total);
}

TEST_CASE("structure_distance: symmetric") {
    const MelSpectrogram a = render_class("mood", "happy", 1);
    const MelSpectrogram b = render_class("mood", "sad", 2);
    CHECK(structure_distance(a, b) == doctest::Approx(structure_distance(b, a)).epsilon(1e-6));
    CHECK_THROWS_AS(structure_distance(a, MelSpectrogram{Eigen::MatrixXf::Zero(32, 64)}), Error);
}

TEST_CASE("chroma_similarity: identity, transposition and silence") {
    // a clip with every frame sounding; silent frames contribute zero terms
    ContentSpec sustained;
    sustained.onsets = {{0, 64}};
    sustained.pitches = {64};
    sustained.tempo_bpm = 100.0f;
    const MelSpectrogram clip =
        render_clip(sustained, style_for_class("instrument", "piano"), 64, 64);
    CHECK(chroma_similarity(clip, clip) == doctest::Approx(1.0).epsilon(1e-6));

    // tritone transposition scores below the same-key pairing
    Rng rng(5);
    ContentSpec content = sample_content("instrument", "piano", 64, rng);
    for (auto& p : content.pitches) p = std::clamp(p, 48, 80);
    ContentSpec tritone = content;
    for (auto& p : tritone.pitches) p += 6;
    const StyleSpec style = style_for_class("instrument", "piano");
    const MelSpectrogram base = render_clip(content, style, 64, 64);
    const MelSpectrogram same = render_clip(content, style_for_class("instrument", "flute"), 64, 64);
    const MelSpectrogram shifted = render_clip(tritone, style, 64, 64);
    CHECK(chroma_similarity(base, shifted) < chroma_similarity(base, same));

    MelSpectrogram silence;
    silence.data = Eigen::MatrixXf::Zero(64, 64);
    CHECK(chroma_similarity(silence, clip) == 0.0);
}

TEST_CASE("frechet: identity, closed form and symmetry") {
    Rng rng(31);
    std::vector<Eigen::VectorXf> set_a, set_b;
    for (int i = 0; i < 40; ++i) {
        Eigen::VectorXf v(6);
        for (int d = 0; d < 6; ++d) v(d) = static_cast<float>(rng.normal());
        set_a.push_back(v);
        set_b.push_back(v * 0.8f + Eigen::VectorXf::Constant(6, 0.3f));
    }
    const FeatureStats a = feature_stats(set_a);
    const FeatureStats b = feature_stats(set_b);
    CHECK(frechet_feature_distance(a, a) < 1e-6);
    CHECK(frechet_feature_distance(a, b) ==
          doctest::Approx(frechet_feature_distance(b, a)).epsilon(1e-6));

    // isotropic case: identical unit covariances, mean distance 2 -> 4
    FeatureStats iso_a, iso_b;
    iso_a.mean = Eigen::VectorXd::Zero(4);
    iso_b.mean = Eigen::VectorXd::Zero(4);
    iso_b.mean(0) = 2.0;
    iso_a.cov = Eigen::MatrixXd::Identity(4, 4);
    iso_b.cov = Eigen::MatrixXd::Identity(4, 4);
    CHECK(frechet_feature_distance(iso_a, iso_b) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("frechet: non-PSD covariance is rejected") {
    FeatureStats a, b;
    a.mean = Eigen::VectorXd::Zero(2);
    b.mean = Eigen::VectorXd::Zero(2);
    a.cov = Eigen::MatrixXd::Identity(2, 2);
    b.cov = Eigen::MatrixXd::Identity(2, 2);
    b.cov(0, 0) = -1.0;
    CHECK_THROWS_AS(frechet_feature_distance(a, b), Error);
}

TEST_CASE("zscore_minmax: reference column, degenerate cohort, monotonicity") {
    const std::vector<double> clap = {0.17, 0.22, 0.20, 0.35, 0.30, 0.34};
    const auto scaled = zscore_minmax(clap);
    CHECK(scaled[0] == doctest::Approx(0.0));
    CHECK(scaled[3] == doctest::Approx(1.0));
    for (size_t i = 0; i < clap.size(); ++i) {
        for (size_t j = 0; j < clap.size(); ++j) {
            if (clap[i] < clap[j]) CHECK(scaled[i] < scaled[j]);
        }
    }

    const auto flat = zscore_minmax({5.0, 5.0, 5.0});
    for (double v : flat) CHECK(v == 0.5);

    // invariant to positive affine rescaling of the whole cohort
    std::vector<double> rescaled;
    for (double v : clap) rescaled.push_back(3.0 * v + 10.0);
    const auto scaled2 = zscore_minmax(rescaled);
    for (size_t i = 0; i < clap.size(); ++i) {
        CHECK(scaled[i] == doctest::Approx(scaled2[i]).epsilon(1e-9));
    }
}

TEST_CASE("asb: recomputes the reference composites") {
    // frozen recomputation of the first reference cohort
    const auto& ref = reference_cohorts()[0];
    const auto scores = asb(cohort_of(ref));
    const std::vector<double> expected = {0.0, 0.2296, 0.2633, 0.5844, 0.4404, 0.9714};
    for (size_t i = 0; i < scores.size(); ++i) {
        CHECK(scores[i] == doctest::Approx(expected[i]).epsilon(1e-3));
    }
    // against the printed table: +-0.03, last row (the paper's own method) +-0.04
    for (size_t i = 0; i + 1 < scores.size(); ++i) {
        CHECK(std::abs(scores[i] - ref.printed_asb[i]) <= 0.03);
    }
    CHECK(std::abs(scores[5] - ref.printed_asb[5]) <= 0.04);
}

TEST_CASE("asb: worst on either axis is exactly zero") {
    MetricCohort c;
    c.methods = {"a", "b", "c"};
    c.adherence = {0.1, 0.5, 0.9};
    c.structure_distance = {1.0, 2.0, 3.0};  // c is best adherence, worst structure
    c.chroma_similarity = {0.1, 0.2, 0.3};
    const auto scores = asb(c);
    CHECK(scores[0] == 0.0);  // worst adherence
    CHECK(scores[2] == 0.0);  // worst structure
    CHECK(scores[1] > 0.0);
}

TEST_CASE("asb/amb: permuting methods permutes outputs identically") {
    const auto& ref = reference_cohorts()[1];
    MetricCohort base = cohort_of(ref);
    MetricCohort rotated = base;
    std::rotate(rotated.methods.begin(), rotated.methods.begin() + 2, rotated.methods.end());
    std::rotate(rotated.adherence.begin(), rotated.adherence.begin() + 2, rotated.adherence.end());
    std::rotate(rotated.structure_distance.begin(), rotated.structure_distance.begin() + 2,
                rotated.structure_distance.end());
    std::rotate(rotated.chroma_similarity.begin(), rotated.chroma_similarity.begin() + 2,
                rotated.chroma_similarity.end());
    const auto a = asb(base);
    const auto b = asb(rotated);
    const auto ma = amb(base);
    const auto mb = amb(rotated);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[(i + 2) % a.size()] == doctest::Approx(b[i]).epsilon(1e-12));
        CHECK(ma[(i + 2) % a.size()] == doctest::Approx(mb[i]).epsilon(1e-12));
    }
}

TEST_CASE("amb: reference anchor and bounds") {
    const auto& ref = reference_cohorts()[0];
    const auto scores = amb(cohort_of(ref));
    // fourth method is the AMB spot anchor: prints 0.74, recomputes to 0.737
    CHECK(scores[3] == doctest::Approx(0.7368).epsilon(1e-3));
    CHECK(std::abs(scores[3] - ref.printed_amb[3]) <= 0.03);
    for (double v : scores) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // a method best on both axes composes to exactly 1
    MetricCohort c;
    c.methods = {"a", "b"};
    c.adherence = {0.1, 0.9};
    c.structure_distance = {2.0, 1.0};
    c.chroma_similarity = {0.1, 0.9};
    CHECK(amb(c)[1] == 1.0);
    CHECK(asb(c)[1] == 1.0);
}

TEST_CASE("cohort: fewer than two methods is rejected") {
    MetricCohort c;
    c.methods = {"solo"};
    c.adherence = {0.5};
    c.structure_distance = {1.0};
    c.chroma_similarity = {0.5};
    CHECK_THROWS_AS(asb(c), Error);
}

TEST_CASE("log_mel_pearson: perfect correlation on identical clips") {
    const MelSpectrogram clip = render_class("instrument", "accordion", 12);
    CHECK(log_mel_pearson(clip, clip) == doctest::Approx(1.0).epsilon(1e-9));
}
