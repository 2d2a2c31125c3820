#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "annoembed/analysis.hpp"
#include "annoembed/synthgen.hpp"
#include "annoembed/trainer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace annoembed;
using testutil::make_dataset;

namespace {

using Rows = std::vector<std::tuple<std::string, std::string, std::size_t>>;

// Two annotators labelling the same example ids.
Dataset paired(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
               std::vector<std::string> labels = {"A", "B"}) {
    Rows rows;
    for (std::size_t i = 0; i < a.size(); ++i) {
        rows.emplace_back("t" + std::to_string(i), "x", a[i]);
        rows.emplace_back("t" + std::to_string(i), "y", b[i]);
    }
    return make_dataset(rows, std::move(labels));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i], sy += y[i];
        sxx += x[i] * x[i], syy += y[i] * y[i], sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

double dist(const Array2& p, std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t c = 0; c < p.cols; ++c) s += (p(i, c) - p(j, c)) * (p(i, c) - p(j, c));
    return std::sqrt(s);
}

Array2 two_blobs(std::size_t per_blob, Rng& rng, std::vector<std::size_t>& truth) {
    Array2 p(2 * per_blob, 3);
    truth.clear();
    for (std::size_t i = 0; i < 2 * per_blob; ++i) {
        const std::size_t blob = i % 2;
        truth.push_back(blob);
        for (std::size_t c = 0; c < 3; ++c) p(i, c) = (blob ? 10.0 : -10.0) + rng.normal();
    }
    return p;
}

Dataset with_demographics(const std::vector<std::map<std::string, std::string>>& demo) {
    std::vector<AnnotatedExample> ex;
    for (std::size_t a = 0; a < demo.size(); ++a)
        ex.push_back({"t0", "text", "a" + std::to_string(a), 0, demo[a]});
    return Dataset("demo", {"A", "B"}, std::move(ex));
}

ClusterResult fixed_clusters(std::vector<std::size_t> assignments, std::size_t k) {
    ClusterResult c;
    c.assignments = std::move(assignments);
    c.centroids = Array2(k, 1);
    return c;
}

}  // namespace

TEST_CASE("cohen kappa on hand-checked sequences") {
    const std::vector<std::size_t> s = {0, 1, 1, 0, 1};
    CHECK(cohen_kappa(s, s, 2) == 1.0);
    CHECK(cohen_kappa(std::vector<std::size_t>{0, 0, 1, 1}, std::vector<std::size_t>{1, 1, 0, 0}, 2) == -1.0);
    // Both always pick the same single label: chance agreement is 1, kappa defined as 1.
    CHECK(cohen_kappa(std::vector<std::size_t>{1, 1, 1}, std::vector<std::size_t>{1, 1, 1}, 2) == 1.0);
    // p_o = 3/4, p_e = 1/2.
    CHECK(cohen_kappa(std::vector<std::size_t>{0, 0, 1, 1}, std::vector<std::size_t>{0, 1, 1, 1}, 2) ==
          doctest::Approx(0.5));
}

TEST_CASE("kappa matrix: identical, opposite, and independent annotators") {
    SUBCASE("identical") {
        const std::vector<std::size_t> s = {0, 1, 1, 0, 1, 0, 0, 1, 1, 1};
        const KappaMatrix k = cohen_kappa_matrix(paired(s, s));
        REQUIRE(k.size() == 2);
        CHECK(k.at(0, 1) == 1.0);
        CHECK(k.overlap(0, 1) == 10);
    }
    SUBCASE("opposite") {
        const KappaMatrix k = cohen_kappa_matrix(paired({0, 0, 1, 1}, {1, 1, 0, 0}), 1);
        CHECK(k.at(0, 1) == -1.0);
        CHECK(k.at(1, 0) == -1.0);
    }
    SUBCASE("independent uniform labels") {
        Rng rng(1);
        std::vector<std::size_t> a(10000), b(10000);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform_index(2), b[i] = rng.uniform_index(2);
        const KappaMatrix k = cohen_kappa_matrix(paired(a, b));
        CHECK(std::abs(k.at(0, 1)) < 0.05);
        CHECK(k.overlap(0, 1) == 10000);
    }
}

TEST_CASE("kappa matrix flags pairs below the minimum overlap") {
    Rows rows;
    for (std::size_t i = 0; i < 12; ++i) {
        rows.emplace_back("t" + std::to_string(i), "a", i % 2);
        if (i < 5) rows.emplace_back("t" + std::to_string(i), "b", i % 2);
        if (i >= 2) rows.emplace_back("t" + std::to_string(i), "c", (i / 2) % 2);
    }
    const KappaMatrix k = cohen_kappa_matrix(make_dataset(rows), 6);
    REQUIRE(k.size() == 3);
    CHECK(k.overlap(0, 1) == 5);
    CHECK_FALSE(k.defined(0, 1));
    CHECK(std::isnan(k.at(0, 1)));
    CHECK(k.overlap(0, 2) == 10);
    CHECK(k.defined(0, 2));
    CHECK(k.overlap(1, 2) == 3);
    CHECK_FALSE(k.defined(1, 2));
    CHECK(cohen_kappa_matrix(make_dataset(rows), 3).defined(1, 2));
    CHECK_THROWS_AS(cohen_kappa_matrix(make_dataset(rows), 0), std::invalid_argument);
}

TEST_CASE("kappa matrix is symmetric with unit diagonal and bounded entries") {
    PopulationConfig cfg;
    cfg.n_texts = 80;
    cfg.annotations_per_text = 5;
    cfg.groups = 3;
    cfg.bias_strength = 0.6;
    const KappaMatrix k = cohen_kappa_matrix(generate_population(cfg).dataset, 5);
    for (std::size_t i = 0; i < k.size(); ++i) {
        CHECK(k.at(i, i) == 1.0);
        for (std::size_t j = 0; j < k.size(); ++j) {
            CHECK(k.overlap(i, j) == k.overlap(j, i));
            CHECK(k.defined(i, j) == k.defined(j, i));
            if (!k.defined(i, j)) continue;
            CHECK(k.at(i, j) == k.at(j, i));
            CHECK(k.at(i, j) >= -1.0);
            CHECK(k.at(i, j) <= 1.0);
        }
    }
}

TEST_CASE("label correlation") {
    SUBCASE("complementary usage is perfectly anti-correlated") {
        Rows rows;
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t i = 0; i < 10; ++i) rows.emplace_back("t" + std::to_string(i), "a" + std::to_string(a), i < 2 + 2 * a);
        const LabelCorrelation c = label_pearson(make_dataset(rows), 10);
        CHECK(c.annotators_used.size() == 4);
        CHECK(c.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(c.at(0, 0) == 1.0);
    }
    SUBCASE("a label used identically by everyone is undefined") {
        Rows rows;
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t i = 0; i < 6; ++i)
                rows.emplace_back("t" + std::to_string(i), "a" + std::to_string(a), i < 2 ? 2 : (i < 2 + a ? 0 : 1));
        const LabelCorrelation c = label_pearson(make_dataset(rows, {"x", "y", "z"}), 1);
        CHECK(c.defined(0, 1));
        CHECK_FALSE(c.defined(0, 2));
        CHECK_FALSE(c.defined(2, 1));
        CHECK(std::isnan(c.at(2, 0)));
    }
    SUBCASE("annotators below the minimum are ignored") {
        Rows rows;
        for (std::size_t i = 0; i < 5; ++i) rows.emplace_back("t" + std::to_string(i), "busy", i % 2);
        rows.emplace_back("t0", "idle", 0);
        CHECK(label_pearson(make_dataset(rows), 5).annotators_used == std::vector<std::string>{"busy"});
        CHECK_FALSE(label_pearson(make_dataset(rows), 5).defined(0, 1));
    }
    SUBCASE("groups that swap labels 0 and 2 anti-correlate them") {
        PopulationConfig cfg;
        cfg.groups = 2;
        cfg.bias_strength = 1.0;
        cfg.n_texts = 150;
        cfg.annotations_per_text = 6;
        cfg.seed = 4;
        const Population pop =
            generate_population(cfg, {Array2::identity(3), Array2(3, 3, {0, 0, 1, 0, 1, 0, 1, 0, 0})});
        const LabelCorrelation c = label_pearson(pop.dataset, 1);
        std::map<std::string, std::vector<double>> freq;
        std::map<std::string, double> total;
        for (const auto& ex : pop.dataset.examples()) {
            freq[ex.annotator_id].resize(3, 0.0);
            freq[ex.annotator_id][ex.label] += 1;
            total[ex.annotator_id] += 1;
        }
        std::vector<std::vector<double>> cols(3);
        for (const auto& [id, f] : freq)
            for (std::size_t m = 0; m < 3; ++m) cols[m].push_back(f[m] / total[id]);
        CHECK(c.at(0, 2) < -0.5);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                REQUIRE(c.defined(i, j));
                CHECK(c.at(i, j) == c.at(j, i));
                if (i != j) CHECK(std::abs(c.at(i, j) - pearson(cols[i], cols[j])) < 1e-10);
            }
    }
}

TEST_CASE("kmeans with k = N puts every point in its own cluster") {
    Rng rng(2);
    const Array2 p = Array2::random_normal(6, 3, 1.0, rng);
    const ClusterResult r = kmeans(p, 6, 1);
    CHECK(r.sse == 0.0);
    CHECK(std::set<std::size_t>(r.assignments.begin(), r.assignments.end()).size() == 6);
    CHECK_THROWS_AS(kmeans(p, 7, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(p, 0, 1), std::invalid_argument);
}

TEST_CASE("kmeans recovers two separated blobs on every seed") {
    Rng rng(3);
    std::vector<std::size_t> truth;
    const Array2 p = two_blobs(20, rng, truth);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ClusterResult r = kmeans(p, 2, seed);
        CAPTURE(seed);
        CHECK(adjusted_rand_index(r.assignments, truth) == 1.0);
    }
}

TEST_CASE("kmeans: monotone SSE, reproducible, SSE matches recomputation") {
    Rng rng(4);
    const Array2 p = Array2::random_normal(60, 4, 1.0, rng);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const ClusterResult r = kmeans(p, 5, seed);
        REQUIRE(!r.sse_history.empty());
        for (std::size_t i = 1; i < r.sse_history.size(); ++i) CHECK(r.sse_history[i] <= r.sse_history[i - 1] + 1e-12);
        CHECK(r.sse <= r.sse_history.front());
        CHECK(r.assignments.size() == 60);
        CHECK(std::abs(r.sse - sum_squared_error(p, r.centroids, r.assignments)) < 1e-9);
        double direct = 0;
        for (std::size_t i = 0; i < 60; ++i)
            for (std::size_t c = 0; c < 4; ++c) {
                const double d = p(i, c) - r.centroids(r.assignments[i], c);
                direct += d * d;
            }
        CHECK(std::abs(r.sse - direct) < 1e-9);
        const ClusterResult again = kmeans(p, 5, seed);
        CHECK(again.assignments == r.assignments);
        CHECK(again.centroids == r.centroids);
    }
}

TEST_CASE("kmeans never returns an empty cluster on duplicate points") {
    Array2 p(8, 2);
    for (std::size_t i = 0; i < 8; ++i) p(i, 0) = i < 6 ? 0.0 : 5.0;
    const ClusterResult r = kmeans(p, 3, 0);
    std::vector<std::size_t> size(3, 0);
    for (auto a : r.assignments) ++size[a];
    for (auto s : size) CHECK(s > 0);
}

TEST_CASE("adjusted rand index") {
    const std::vector<std::size_t> a = {0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == 1.0);
    CHECK(adjusted_rand_index(a, {5, 5, 3, 3, 9, 9}) == 1.0);
    // Contingency [[1,1],[1,1]] over 4 items: index 0, expected 1/3, max 2.
    CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(-0.5));
    CHECK_THROWS(adjusted_rand_index({0, 1}, {0}));
}

TEST_CASE("PCA keeps centred 2-D points up to an isometry") {
    Rng rng(5);
    Array2 p = Array2::random_normal(15, 2, 3.0, rng);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0;
        for (std::size_t i = 0; i < 15; ++i) mean += p(i, c) / 15;
        for (std::size_t i = 0; i < 15; ++i) p(i, c) -= mean;
    }
    const Projection proj = pca_project(p, 2);
    CHECK_FALSE(proj.rank_deficient);
    for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t j = i + 1; j < 15; ++j) CHECK(std::abs(dist(p, i, j) - dist(proj.coordinates, i, j)) < 1e-9);
}

TEST_CASE("PCA reconstructs points on a plane in 3-D") {
    Rng rng(6);
    const Array2 u(1, 3, {1, 2, -1}), v(1, 3, {0, 1, 3});
    Array2 p(20, 3);
    for (std::size_t i = 0; i < 20; ++i) {
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t c = 0; c < 3; ++c) p(i, c) = 4.0 + a * u(0, c) + b * v(0, c);
    }
    const Projection proj = pca_project(p, 2);
    double mean[3] = {0, 0, 0};
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t c = 0; c < 3; ++c) mean[c] += p(i, c) / 20;
    const Array2 back = matmul(proj.coordinates, proj.components);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(back(i, c) + mean[c] - p(i, c)) < 1e-9);
}

TEST_CASE("PCA variances match an independent eigensolver; components orthonormal") {
    Rng rng(7);
    const Array2 p = Array2::random_normal(20, 8, 1.0, rng);
    const Projection proj = pca_project(p, 8);

    Eigen::MatrixXd x(20, 8);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t c = 0; c < 8; ++c) x(i, c) = p(i, c);
    const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / 19.0;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    REQUIRE(proj.variances.size() >= 8);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(proj.variances[k] - solver.eigenvalues()(7 - k)) < 1e-8);
    for (std::size_t k = 1; k < proj.variances.size(); ++k) CHECK(proj.variances[k] <= proj.variances[k - 1]);

    const Array2 gram = matmul(proj.components, transpose(proj.components));
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-9);
    for (std::size_t k = 0; k < 8; ++k) {
        const auto row = proj.components.row(k);
        const auto biggest = std::max_element(row.begin(), row.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
        CHECK(*biggest > 0.0);
    }
}

TEST_CASE("symmetric eigen-decomposition satisfies A v = lambda v") {
    Rng rng(8);
    Array2 a = Array2::random_normal(6, 6, 1.0, rng);
    a = matmul(a, transpose(a));
    std::vector<double> values;
    Array2 vectors;
    symmetric_eigen(a, values, vectors);
    for (std::size_t k = 0; k < 6; ++k) {
        const auto v = vectors.row(k);
        for (std::size_t i = 0; i < 6; ++i) {
            double av = 0;
            for (std::size_t j = 0; j < 6; ++j) av += a(i, j) * v[j];
            CHECK(std::abs(av - values[k] * v[i]) < 1e-9);
        }
    }
}

TEST_CASE("PCA flags rank deficiency and pads with zeros") {
    Array2 p(5, 3);
    for (std::size_t i = 0; i < 5; ++i) p(i, 0) = p(i, 1) = static_cast<double>(i);
    const Projection proj = pca_project(p, 2);
    CHECK(proj.rank_deficient);
    for (std::size_t i = 0; i < 5; ++i) CHECK(proj.coordinates(i, 1) == 0.0);
    CHECK_THROWS(pca_project(Array2(1, 3), 2));
}

TEST_CASE("demographic alignment multipliers and weighted frequencies") {
    std::vector<std::map<std::string, std::string>> demo;
    for (std::size_t a = 0; a < 10; ++a) demo.push_back({{"gender", a < 4 ? "female" : "male"}});
    const Dataset d = with_demographics(demo);
    // Annotators 0 and 1 (both female) form cluster 0.
    const ClusterResult c = fixed_clusters({0, 0, 1, 1, 1, 1, 1, 1, 2, 2}, 3);
    const DemographicAlignment al = demographic_alignment(c, d.annotator_ids(), d);
    REQUIRE(al.dimensions.size() == 1);
    const DimensionAlignment& g = al.dimensions[0];
    CHECK(g.annotators == 10);
    CHECK(g.values == std::vector<std::string>{"female", "male"});
    CHECK(g.multiplier[0] == 2.5);
    CHECK(g.multiplier[1] == doctest::Approx(10.0 / 6.0));
    CHECK(g.frequency[0][0] == 5.0);
    CHECK(g.top[0] == std::vector<std::string>{"female"});
    // Cluster 1 holds two female and four male annotators: 5.0 vs 6.67.
    CHECK(g.top[1] == std::vector<std::string>{"male"});
}

TEST_CASE("demographic alignment reports ties and exclusions") {
    const Dataset d = with_demographics({{{"age", "young"}, {"region", "n"}},
                                         {{"age", "old"}, {"region", "n"}},
                                         {{"region", "s"}},
                                         {{"age", "young"}, {"region", "s"}},
                                         {{"age", "old"}}});
    const ClusterResult c = fixed_clusters({0, 0, 1, 1, 1}, 2);
    const DemographicAlignment al = demographic_alignment(c, d.annotator_ids(), d);
    REQUIRE(al.dimensions.size() == 2);
    const DimensionAlignment& age = al.dimensions[0];
    CHECK(age.dimension == "age");
    CHECK(age.excluded == 1);
    CHECK(age.annotators == 4);
    CHECK(age.top[0] == std::vector<std::string>{"old", "young"});
    const DimensionAlignment& region = al.dimensions[1];
    CHECK(region.excluded == 1);
    CHECK_THROWS(demographic_alignment(fixed_clusters({0, 1}, 2), d.annotator_ids(), d));
}

TEST_CASE("demographic alignment sizes clusters from assignments when centroids are absent") {
    const Dataset d = with_demographics({{{"age", "young"}}, {{"age", "old"}}, {{"age", "old"}}});
    ClusterResult c;
    c.assignments = {2, 0, 2};
    const DemographicAlignment al = demographic_alignment(c, d.annotator_ids(), d);
    CHECK(al.clusters == 3);
    REQUIRE(al.dimensions.size() == 1);
    CHECK(al.dimensions[0].frequency.size() == 3);
    CHECK(al.dimensions[0].top[1].empty());
}

TEST_CASE("weighted frequency mass per value sums to the annotator count") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng.uniform_index(30), k = 1 + rng.uniform_index(4);
        std::vector<std::map<std::string, std::string>> demo(n);
        std::vector<std::size_t> assign(n);
        for (std::size_t a = 0; a < n; ++a) {
            assign[a] = rng.uniform_index(k);
            demo[a]["colour"] = std::string(1, static_cast<char>('a' + rng.uniform_index(4)));
            if (rng.uniform_index(3)) demo[a]["size"] = std::to_string(rng.uniform_index(3));
        }
        const Dataset d = with_demographics(demo);
        for (const auto& dim : demographic_alignment(fixed_clusters(assign, k), d.annotator_ids(), d).dimensions)
            for (std::size_t v = 0; v < dim.values.size(); ++v) {
                double mass = 0;
                for (std::size_t c = 0; c < k; ++c) mass += dim.frequency[c][v];
                CHECK(std::abs(mass - static_cast<double>(dim.annotators)) < 1e-9);
            }
    }
}

TEST_CASE("embedding points from a checkpoint") {
    PopulationConfig cfg;
    cfg.n_annotators = 6;
    cfg.annotations_per_text = 3;
    cfg.n_texts = 10;
    const Population pop = generate_population(cfg);
    EncoderConfig e;
    e.hidden = 8;
    e.layers = 1;
    e.max_len = 16;
    TrainConfig t;
    t.mode = CombinationMode::TextPlusBoth;
    const ModelCheckpoint m = initialize_model(pop.dataset, e, t);
    const Array2 ann = annotation_embedding_points(m);
    CHECK(ann.rows == 6);
    CHECK(ann.cols == 8);
    for (std::size_t a = 0; a < 6; ++a) {
        const Array2 want = annotation_embedding_test(m.params, m.bank, m.index, a);
        for (std::size_t h = 0; h < 8; ++h) CHECK(ann(a, h) == want(0, h));
    }
    CHECK(annotator_embedding_points(m) == m.params[*m.bank.annotator_table].value);

    t.mode = CombinationMode::TextOnly;
    const ModelCheckpoint text = initialize_model(pop.dataset, e, t);
    CHECK_THROWS(annotation_embedding_points(text));
    CHECK_THROWS(annotator_embedding_points(text));
}
