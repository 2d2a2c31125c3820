#include "annoembed/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "annoembed/rng.hpp"
#include "json.hpp"

namespace annoembed {

using nlohmann::json;
using nlohmann::ordered_json;

Dataset::Dataset(std::string name, std::vector<std::string> label_names, std::vector<AnnotatedExample> examples)
    : name_(std::move(name)), label_names_(std::move(label_names)), examples_(std::move(examples)) {
    std::set<std::pair<std::string, std::string>> seen;
    annotator_rows_.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        const auto& ex = examples_[i];
        if (ex.label >= label_names_.size())
            throw DataError("label index " + std::to_string(ex.label) + " out of range for " +
                            std::to_string(label_names_.size()) + " labels (example " + ex.example_id + ")");
        if (!seen.emplace(ex.example_id, ex.annotator_id).second)
            throw DataError("duplicate annotation of example " + ex.example_id + " by annotator " + ex.annotator_id);
        auto [it, inserted] = annotator_lookup_.emplace(ex.annotator_id, annotator_ids_.size());
        if (inserted) annotator_ids_.push_back(ex.annotator_id);
        annotator_rows_.push_back(it->second);
    }
}

std::optional<std::size_t> Dataset::annotator_index(std::string_view id) const {
    auto it = annotator_lookup_.find(std::string(id));
    if (it == annotator_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Dataset::label_index(std::string_view name) const {
    for (std::size_t i = 0; i < label_names_.size(); ++i)
        if (label_names_[i] == name) return i;
    return std::nullopt;
}

Dataset Dataset::with_examples(std::vector<AnnotatedExample> examples) const {
    return Dataset(name_, label_names_, std::move(examples));
}

// ---------------------------------------------------------------------------

std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl) {
    auto p = jsonl;
    if (p.extension() == ".jsonl") p.replace_extension();
    p += ".manifest.json";
    return p;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.name = j.value("name", std::string{});
        m.label_names = j.at("label_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    if (m.label_names.empty()) throw DataError("manifest " + path.string() + " declares no labels");
    std::unordered_set<std::string> uniq(m.label_names.begin(), m.label_names.end());
    if (uniq.size() != m.label_names.size()) throw DataError("manifest " + path.string() + " repeats a label name");
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    ordered_json j;
    j["name"] = manifest.name;
    j["label_names"] = manifest.label_names;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path, const DatasetManifest& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::unordered_map<std::string, std::size_t> label_lookup;
    for (std::size_t i = 0; i < schema.label_names.size(); ++i) label_lookup.emplace(schema.label_names[i], i);

    std::vector<AnnotatedExample> examples;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(std::string("malformed JSON: ") + e.what(), line_no);
        }
        if (!j.is_object()) throw DataError("record is not a JSON object", line_no);
        AnnotatedExample ex;
        try {
            ex.example_id = j.at("example_id").get<std::string>();
            ex.text = j.at("text").get<std::string>();
            ex.annotator_id = j.at("annotator_id").get<std::string>();
            const auto label = j.at("label").get<std::string>();
            auto it = label_lookup.find(label);
            if (it == label_lookup.end()) throw DataError("unknown label \"" + label + "\"", line_no);
            ex.label = it->second;
            if (auto d = j.find("demographics"); d != j.end() && !d->is_null())
                ex.demographics = d->get<std::map<std::string, std::string>>();
        } catch (const json::exception& e) {
            throw DataError(std::string("bad record: ") + e.what(), line_no);
        }
        if (!seen.emplace(ex.example_id, ex.annotator_id).second)
            throw DataError("duplicate annotation of example " + ex.example_id + " by annotator " + ex.annotator_id,
                            line_no);
        examples.push_back(std::move(ex));
    }
    std::string name = schema.name.empty() ? path.stem().string() : schema.name;
    return Dataset(std::move(name), schema.label_names, std::move(examples));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return load_dataset(path, load_manifest(manifest_path_for(path)));
}

std::string to_jsonl(const Dataset& d) {
    std::ostringstream out;
    for (const auto& ex : d.examples()) {
        ordered_json j;
        j["example_id"] = ex.example_id;
        j["text"] = ex.text;
        j["annotator_id"] = ex.annotator_id;
        j["label"] = d.label_names()[ex.label];
        if (!ex.demographics.empty()) j["demographics"] = ex.demographics;
        out << j.dump() << '\n';
    }
    return out.str();
}

void write_dataset(const Dataset& d, const std::filesystem::path& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << to_jsonl(d);
    }
    write_manifest({d.name(), d.label_names()}, manifest_path_for(path));
}

// ---------------------------------------------------------------------------

std::string to_string(SplitKind kind) {
    return kind == SplitKind::Annotation ? "annotation" : "annotator";
}

SplitKind parse_split_kind(std::string_view s) {
    if (s == "annotation") return SplitKind::Annotation;
    if (s == "annotator") return SplitKind::Annotator;
    throw std::invalid_argument("unknown split kind: " + std::string(s));
}

std::size_t train_share(double train_frac, std::size_t n) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("train fraction must be in (0, 1), got " + std::to_string(train_frac));
    // The epsilon keeps products like 0.7 * 10 from rounding up to 8.
    auto k = static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n - 1);
}

namespace {

std::vector<AnnotatedExample> pick(const Dataset& d, std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<AnnotatedExample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(d.examples()[i]);
    return out;
}

}  // namespace

Split make_annotation_split(const Dataset& d, double train_frac, std::uint64_t seed, double dev_frac) {
    if (!(dev_frac >= 0.0 && dev_frac < 1.0))
        throw std::invalid_argument("dev fraction must be in [0, 1), got " + std::to_string(dev_frac));
    std::vector<std::vector<std::size_t>> per_annotator(d.annotator_count());
    for (std::size_t i = 0; i < d.size(); ++i) per_annotator[d.annotator_of(i)].push_back(i);
    for (std::size_t a = 0; a < per_annotator.size(); ++a)
        if (per_annotator[a].size() < 2)
            throw DataError("annotator " + d.annotator_ids()[a] +
                            " has a single annotation; annotation split needs at least 2 per annotator");

    Rng rng(seed);
    std::vector<std::size_t> train, dev, test;
    for (auto& items : per_annotator) {
        rng.shuffle(std::span(items));
        const std::size_t n_train = train_share(train_frac, items.size());
        const std::size_t n_dev =
            std::min(static_cast<std::size_t>(std::floor(dev_frac * static_cast<double>(n_train))), n_train - 1);
        train.insert(train.end(), items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train - n_dev));
        dev.insert(dev.end(), items.begin() + static_cast<std::ptrdiff_t>(n_train - n_dev),
                   items.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
    }
    Split s;
    s.kind = SplitKind::Annotation;
    s.seed = seed;
    s.train = d.with_examples(pick(d, std::move(train)));
    s.test = d.with_examples(pick(d, std::move(test)));
    if (dev_frac > 0.0) s.dev = d.with_examples(pick(d, std::move(dev)));
    return s;
}

Split make_annotator_split(const Dataset& d, double train_frac, std::uint64_t seed) {
    const std::size_t n = d.annotator_count();
    if (n < 2) throw DataError("annotator split needs at least 2 annotators, dataset has " + std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span(order));
    const std::size_t n_train = train_share(train_frac, n);
    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < d.size(); ++i) (in_train[d.annotator_of(i)] ? train : test).push_back(i);
    Split s;
    s.kind = SplitKind::Annotator;
    s.seed = seed;
    s.train = d.with_examples(pick(d, std::move(train)));
    s.test = d.with_examples(pick(d, std::move(test)));
    return s;
}

UnseenFilterResult drop_unseen_annotators(const Dataset& test, const Dataset& train) {
    std::vector<AnnotatedExample> kept;
    std::size_t dropped = 0;
    for (const auto& ex : test.examples()) {
        if (train.annotator_index(ex.annotator_id))
            kept.push_back(ex);
        else
            ++dropped;
    }
    return {test.with_examples(std::move(kept)), dropped};
}

StatisticsReport dataset_statistics(const Dataset& d) {
    StatisticsReport r;
    r.annotations_per_annotator.assign(d.annotator_count(), 0);
    r.label_counts.assign(d.label_count(), 0);
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::set<std::size_t>> labels_seen;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& ex = d.examples()[i];
        ++r.annotations_per_annotator[d.annotator_of(i)];
        ++r.label_counts[ex.label];
        auto [it, inserted] = slot.emplace(ex.example_id, labels_seen.size());
        if (inserted) {
            labels_seen.emplace_back();
            r.distinct_labels_per_example.emplace_back(ex.example_id, 0);
        }
        labels_seen[it->second].insert(ex.label);
    }
    r.distinct_examples = labels_seen.size();
    r.distinct_label_histogram.assign(d.label_count() + 1, 0);
    for (std::size_t s = 0; s < labels_seen.size(); ++s) {
        const std::size_t k = labels_seen[s].size();
        r.distinct_labels_per_example[s].second = k;
        ++r.distinct_label_histogram[k];
    }
    return r;
}

}  // namespace annoembed
