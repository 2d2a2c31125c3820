#include <algorithm>
#include <cmath>
#include <map>

#include "annoembed/checkpoint.hpp"
#include "annoembed/synthgen.hpp"
#include "annoembed/trainer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace annoembed;
using testutil::make_dataset;

namespace {

EncoderConfig small_encoder() {
    EncoderConfig e;
    e.hidden = 16;
    e.layers = 1;
    e.heads = 2;
    e.max_len = 16;
    e.dropout = 0.0;
    return e;
}

TrainConfig fast_config(CombinationMode mode, std::uint64_t seed = 0, std::size_t epochs = 3) {
    TrainConfig t;
    t.mode = mode;
    t.seed = seed;
    t.epochs = epochs;
    t.batch_size = 16;
    t.learning_rate = 3e-3;
    return t;
}

Population population(std::uint64_t seed, std::size_t groups = 3, double bias = 0.8, std::size_t texts = 30) {
    PopulationConfig cfg;
    cfg.n_annotators = 6;
    cfg.annotations_per_text = 6;
    cfg.n_texts = texts;
    cfg.groups = groups;
    cfg.bias_strength = bias;
    cfg.vocab_size = 24;
    cfg.seed = seed;
    return generate_population(cfg);
}

// Per-class F1 straight from the label lists.
double brute_macro_f1(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, std::size_t m) {
    double total = 0;
    for (std::size_t c = 0; c < m; ++c) {
        double tp = 0, gold_c = 0, pred_c = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            tp += gold[i] == c && pred[i] == c;
            gold_c += gold[i] == c;
            pred_c += pred[i] == c;
        }
        if (gold_c == 0 && pred_c == 0) continue;
        const double precision = pred_c ? tp / pred_c : 0.0;
        const double recall = gold_c ? tp / gold_c : 0.0;
        total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    }
    return total / static_cast<double>(m);
}

Dataset labelled(std::size_t count_a, std::size_t count_b) {
    std::vector<std::tuple<std::string, std::string, std::size_t>> rows;
    for (std::size_t i = 0; i < count_a + count_b; ++i)
        rows.emplace_back("t" + std::to_string(i / 2), "a" + std::to_string(i % 2), i < count_a ? 0 : 1);
    return make_dataset(rows);
}

}  // namespace

TEST_CASE("confusion metrics") {
    SUBCASE("perfect predictions") {
        const std::vector<std::size_t> gold = {0, 1, 2, 2, 1};
        const ConfusionMatrix cm = confusion_from(gold, gold, 3);
        CHECK(cm.em_accuracy() == 1.0);
        CHECK(cm.macro_f1() == 1.0);
    }
    SUBCASE("hand-computed macro F1") {
        // Confusion [[2,0,0],[0,0,1],[0,0,1]]: F1 = 1, 0, 2/3.
        const ConfusionMatrix cm = confusion_from(std::vector<std::size_t>{0, 0, 1, 2}, std::vector<std::size_t>{0, 0, 2, 2}, 3);
        CHECK(cm.at(1, 2) == 1);
        CHECK(cm.f1(0) == 1.0);
        CHECK(cm.f1(1) == 0.0);
        CHECK(cm.f1(2) == doctest::Approx(2.0 / 3.0));
        CHECK(cm.macro_f1() == doctest::Approx(0.5556).epsilon(1e-4));
        CHECK(cm.em_accuracy() == 0.75);
    }
    SUBCASE("a class absent from gold and predictions scores zero") {
        const ConfusionMatrix cm = confusion_from(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{0, 1}, 3);
        CHECK(cm.macro_f1() == doctest::Approx(2.0 / 3.0));
    }
    CHECK_THROWS(confusion_from(std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}, 2));
}

TEST_CASE("macro F1 matches a brute-force oracle on random small problems") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 2 + rng.uniform_index(4);
        const std::size_t n = 1 + rng.uniform_index(100);
        std::vector<std::size_t> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = rng.uniform_index(m);
            pred[i] = rng.uniform_index(2) ? gold[i] : rng.uniform_index(m);
        }
        const ConfusionMatrix cm = confusion_from(gold, pred, m);
        CHECK(std::abs(cm.macro_f1() - brute_macro_f1(gold, pred, m)) < 1e-12);
        CHECK(cm.macro_f1() >= 0.0);
        CHECK(cm.macro_f1() <= 1.0);
        CHECK(cm.total() == n);
    }
}

TEST_CASE("mean and sample standard deviation") {
    const std::vector<double> v = {1, 2, 3};
    CHECK(mean_std(v).mean == 2.0);
    CHECK(mean_std(v).stddev == 1.0);
    CHECK(mean_std(std::vector<double>{4}).stddev == 0.0);
}

TEST_CASE("baselines") {
    SUBCASE("balanced binary labels: random near one half") {
        const Baselines b = baselines(labelled(500, 500), 3);
        CHECK(b.random_em == doctest::Approx(0.5).epsilon(0.04));
        CHECK(b.random_stddev > 0.0);
        CHECK(b.majority_em == 0.5);
    }
    SUBCASE("876 of 1008 annotations share a label") {
        const Baselines b = baselines(labelled(876, 132), 1);
        CHECK(b.majority_label == 0);
        CHECK(b.majority_em == doctest::Approx(0.8690).epsilon(1e-4));
    }
    SUBCASE("counts 5/3/2") {
        std::vector<std::tuple<std::string, std::string, std::size_t>> rows;
        for (std::size_t i = 0; i < 10; ++i) rows.emplace_back("t" + std::to_string(i), "a", i < 5 ? 2 : i < 8 ? 0 : 1);
        const Dataset d = make_dataset(rows, {"x", "y", "z"});
        CHECK(baselines(d, 0).majority_em == 0.5);
        CHECK(baselines(d, 0).majority_label == 2);
    }
    SUBCASE("majority is taken from the reference counts") {
        CHECK(majority_baseline(std::vector<std::size_t>{1, 9}, labelled(3, 1)) == 0.25);
        CHECK(majority_label(std::vector<std::size_t>{4, 4, 1}) == 0);
    }
    SUBCASE("random baseline is seeded") {
        const Dataset d = labelled(30, 20);
        CHECK(random_baseline(d, 5).mean == random_baseline(d, 5).mean);
    }
}

TEST_CASE("train config validation") {
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    };
    CHECK_NOTHROW(TrainConfig{}.validate());
    bad([](auto& c) { c.epochs = 0; });
    bad([](auto& c) { c.batch_size = 0; });
    bad([](auto& c) { c.learning_rate = 0.0; });
    bad([](auto& c) { c.beta1 = 1.0; });
    bad([](auto& c) { c.beta2 = 0.0; });
    bad([](auto& c) { c.adam_eps = 0.0; });
}

TEST_CASE("a single example is memorized") {
    const Dataset one = make_dataset({{"t0", "a", 1}});
    TrainConfig t = fast_config(CombinationMode::TextOnly, 0, 150);
    t.learning_rate = 1e-2;
    const TrainResult r = train(one, std::nullopt, small_encoder(), t);
    CHECK(r.loss_trace.size() == 150);
    CHECK(r.loss_trace.back() < 1e-3);
    CHECK(predict(r.checkpoint, one) == std::vector<std::size_t>{1});
}

TEST_CASE("training is deterministic for a seed") {
    const Population pop = population(1);
    EncoderConfig e = small_encoder();
    e.dropout = 0.1;
    const TrainResult a = train(pop.dataset, std::nullopt, e, fast_config(CombinationMode::TextPlusBoth, 4, 2));
    const TrainResult b = train(pop.dataset, std::nullopt, e, fast_config(CombinationMode::TextPlusBoth, 4, 2));
    const TrainResult c = train(pop.dataset, std::nullopt, e, fast_config(CombinationMode::TextPlusBoth, 5, 2));
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.loss_trace != c.loss_trace);
    CHECK(a.epoch_loss.size() == 2);
    CHECK(a.loss_trace.size() == 2 * ((pop.dataset.size() + 15) / 16));
    for (double l : a.loss_trace) CHECK(std::isfinite(l));
}

TEST_CASE("annotator embeddings fit idiosyncratic annotators better than text alone") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Population pop = population(100 + seed, 0, 0.8, 40);
        const TrainResult text = train(pop.dataset, std::nullopt, small_encoder(), fast_config(CombinationMode::TextOnly, seed, 12));
        const TrainResult annot =
            train(pop.dataset, std::nullopt, small_encoder(), fast_config(CombinationMode::TextPlusAnnotator, seed, 12));
        CAPTURE(seed);
        CAPTURE(text.epoch_loss.back());
        CAPTURE(annot.epoch_loss.back());
        CHECK(annot.epoch_loss.back() < text.epoch_loss.back());
        wins += annot.epoch_loss.back() < text.epoch_loss.back();
    }
    CHECK(wins == 5);
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(train(Dataset("empty", {"A", "B"}, {}), std::nullopt, small_encoder(), fast_config(CombinationMode::TextOnly)),
                    TrainingError);
    TrainConfig wild = fast_config(CombinationMode::TextOnly, 0, 5);
    wild.learning_rate = 1e300;
    const Dataset d = make_dataset({{"t0", "a", 0}, {"t1", "a", 1}});
    try {
        train(d, std::nullopt, small_encoder(), wild);
        FAIL("divergent training did not abort");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("non-finite loss") != std::string::npos);
    }
}

TEST_CASE("evaluate: each annotation is its own example") {
    const Dataset d = make_dataset({{"t0", "a", 0}, {"t0", "b", 1}, {"t1", "a", 1}});
    const TrainResult r = train(d, std::nullopt, small_encoder(), fast_config(CombinationMode::TextOnly, 0, 1));
    const EvalReport rep = evaluate(r.checkpoint, d);
    CHECK(rep.annotations == 3);
    CHECK(rep.confusion.total() == 3);
    const auto pred = predict(r.checkpoint, d);
    // Same text, same prediction: exactly one of the two t0 annotations can match.
    CHECK(pred[0] == pred[1]);
    CHECK(rep.em_accuracy == doctest::Approx(((pred[0] == 0) + (pred[1] == 1) + (pred[2] == 1)) / 3.0));
    CHECK(rep.per_annotator_em.size() == 2);
    CHECK(rep.predicted_histogram[0] + rep.predicted_histogram[1] == 3);

    const Dataset other_labels = make_dataset({{"t0", "a", 0}}, {"X", "Y"});
    CHECK_THROWS_AS(evaluate(r.checkpoint, other_labels), std::invalid_argument);
}

TEST_CASE("evaluate is invariant to dataset order") {
    const Population pop = population(2);
    const Split split = make_annotation_split(pop.dataset, 0.7, 1);
    const TrainResult r = train(split, small_encoder(), fast_config(CombinationMode::TextPlusBoth, 1, 2));
    auto shuffled = split.test.examples();
    Rng(9).shuffle(std::span(shuffled));
    const EvalReport a = evaluate(r.checkpoint, split.test);
    const EvalReport b = evaluate(r.checkpoint, split.test.with_examples(shuffled));
    CHECK(a.em_accuracy == b.em_accuracy);
    CHECK(a.macro_f1 == b.macro_f1);
    CHECK(a.confusion == b.confusion);
    std::map<std::string, double> pa(a.per_annotator_em.begin(), a.per_annotator_em.end());
    std::map<std::string, double> pb(b.per_annotator_em.begin(), b.per_annotator_em.end());
    CHECK(pa == pb);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const Population pop = population(3);
    const Split split = make_annotation_split(pop.dataset, 0.7, 2);
    for (auto mode : {CombinationMode::TextOnly, CombinationMode::TextPlusBoth, CombinationMode::TextPlusAnnotation}) {
        const TrainResult r = train(split, small_encoder(), fast_config(mode, 7, 1));
        testutil::TempDir dir;
        save_checkpoint(r.checkpoint, dir / "ckpt");
        const ModelCheckpoint loaded = load_checkpoint(dir / "ckpt");
        REQUIRE(loaded.params.size() == r.checkpoint.params.size());
        for (std::size_t i = 0; i < loaded.params.size(); ++i) {
            CHECK(loaded.params[i].name == r.checkpoint.params[i].name);
            CHECK(loaded.params[i].value == r.checkpoint.params[i].value);
        }
        CHECK(loaded.vocab == r.checkpoint.vocab);
        CHECK(loaded.annotator_ids == r.checkpoint.annotator_ids);
        CHECK(loaded.mode() == mode);
        CHECK(loaded.seed() == 7);
        const EvalReport a = evaluate(r.checkpoint, split.test);
        const EvalReport b = evaluate(loaded, split.test);
        CHECK(a.em_accuracy == b.em_accuracy);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(to_json(a).dump() == to_json(b).dump());

        save_checkpoint(loaded, dir / "again");
        CHECK(testutil::slurp(dir / "ckpt" / "params.bin") == testutil::slurp(dir / "again" / "params.bin"));
        CHECK(testutil::slurp(dir / "ckpt" / "manifest.json") == testutil::slurp(dir / "again" / "manifest.json"));
    }
    CHECK_THROWS(load_checkpoint("/nonexistent/checkpoint"));
}

TEST_CASE("unseen annotators are scored with fallbacks") {
    const Population pop = population(4);
    const Split split = make_annotator_split(pop.dataset, 0.5, 3);
    const TrainResult r = train(split, small_encoder(), fast_config(CombinationMode::TextPlusBoth, 2, 1));
    const EvalReport rep = evaluate(r.checkpoint, split.test);
    CHECK(rep.unseen_annotations == split.test.size());
    CHECK(rep.annotations == split.test.size());
    CHECK(fresh_annotator_row(2, "x", 4) == fresh_annotator_row(2, "x", 4));
    CHECK(fresh_annotator_row(2, "x", 4) != fresh_annotator_row(2, "y", 4));
}

TEST_CASE("dev selection keeps the best dev epoch") {
    const Population pop = population(5);
    const Split split = make_annotation_split(pop.dataset, 0.8, 4, 0.25);
    REQUIRE(split.dev);
    TrainConfig t = fast_config(CombinationMode::TextPlusBoth, 3, 4);
    t.select_on_dev = true;
    const TrainResult r = train(split, small_encoder(), t);
    REQUIRE(r.dev_em.size() == 4);
    REQUIRE(r.selected_epoch);
    double best = -1;
    std::size_t best_epoch = 0;
    for (const auto& [epoch, em] : r.dev_em)
        if (em > best) best = em, best_epoch = epoch;
    CHECK(*r.selected_epoch == best_epoch);
    CHECK(evaluate(r.checkpoint, *split.dev).em_accuracy == best);

    TrainConfig periodic = fast_config(CombinationMode::TextOnly, 3, 4);
    periodic.eval_every = 2;
    const TrainResult p = train(split, small_encoder(), periodic);
    CHECK(p.dev_em.size() == 2);
    CHECK(p.dev_em[1].first == 4);
    CHECK_FALSE(p.selected_epoch);
}

TEST_CASE("ablation variants") {
    // 80% of the texts carry label A.
    std::vector<std::tuple<std::string, std::string, std::size_t>> rows;
    for (std::size_t t = 0; t < 40; ++t)
        for (std::size_t a = 0; a < 3; ++a) rows.emplace_back("t" + std::to_string(t), "a" + std::to_string(a), t % 5 == 0 ? 1 : 0);
    const Dataset d = make_dataset(rows);
    const TrainResult both = train(d, std::nullopt, small_encoder(), fast_config(CombinationMode::TextPlusBoth, 0, 5));

    const EvalReport full = evaluate(both.checkpoint, d);
    CHECK(to_json(ablation_eval(both.checkpoint, d, Variant::Combination)).dump() == to_json(full).dump());
    CHECK(ablation_eval(both.checkpoint, d, Variant::EmbeddingOnly).variant == "embedding_only");

    // Without the text, predictions lean to the majority label on most seeds.
    int majority_mode = 0;
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const TrainResult m = train(d, std::nullopt, small_encoder(), fast_config(CombinationMode::TextPlusBoth, seed, 10));
        const auto hist = ablation_eval(m.checkpoint, d, Variant::EmbeddingOnly).predicted_histogram;
        CAPTURE(seed);
        CAPTURE(hist[0]);
        CAPTURE(hist[1]);
        majority_mode += hist[0] >= hist[1];
    }
    CHECK(majority_mode >= 3);

    const TrainResult text = train(d, std::nullopt, small_encoder(), fast_config(CombinationMode::TextOnly, 0, 1));
    const EvalReport plain = evaluate(text.checkpoint, d);
    const EvalReport dropped = ablation_eval(text.checkpoint, d, Variant::TextOnly);
    CHECK(dropped.em_accuracy == plain.em_accuracy);
    CHECK(dropped.confusion == plain.confusion);
    CHECK_THROWS_AS(ablation_eval(text.checkpoint, d, Variant::EmbeddingOnly), std::invalid_argument);

    for (auto v : {Variant::Combination, Variant::EmbeddingOnly, Variant::TextOnly}) CHECK(parse_variant(to_string(v)) == v);
    CHECK_THROWS(parse_variant("everything"));
}

TEST_CASE("report serialization") {
    const Dataset d = labelled(6, 4);
    const TrainResult r = train(d, std::nullopt, small_encoder(), fast_config(CombinationMode::TextOnly, 0, 1));
    const EvalReport rep = evaluate(r.checkpoint, d);
    const auto j = to_json(rep);
    CHECK(j["em_accuracy"].get<double>() == rep.em_accuracy);
    CHECK(j["macro_f1"].get<double>() == rep.macro_f1);
    CHECK(j["annotations"].get<std::size_t>() == 10);
    CHECK(j["baseline_majority"].get<double>() == 0.6);
    CHECK(to_table(rep).find("EM accuracy") != std::string::npos);
}
