#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace annoembed {

// Raised for malformed or inconsistent corpus input. `line` is 1-based, 0 when
// the problem is not tied to a specific line.
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// One (text, annotator, label) triple. Every annotation is its own training
// and evaluation unit; the same text usually appears once per annotator.
struct AnnotatedExample {
    std::string example_id;
    std::string text;
    std::string annotator_id;
    std::size_t label = 0;
    std::map<std::string, std::string> demographics;

    bool operator==(const AnnotatedExample&) const = default;
};

// Validated collection of annotations with annotator and label registries.
// The annotator registry is ordered by first appearance, so row i of the
// annotator embedding table always refers to the same annotator for a given file.
class Dataset {
public:
    Dataset() = default;
    // Throws DataError on out-of-range labels or duplicate (example_id, annotator_id).
    Dataset(std::string name, std::vector<std::string> label_names, std::vector<AnnotatedExample> examples);

    const std::string& name() const { return name_; }
    const std::vector<std::string>& label_names() const { return label_names_; }
    const std::vector<std::string>& annotator_ids() const { return annotator_ids_; }
    const std::vector<AnnotatedExample>& examples() const { return examples_; }

    std::size_t size() const { return examples_.size(); }
    bool empty() const { return examples_.empty(); }
    std::size_t label_count() const { return label_names_.size(); }
    std::size_t annotator_count() const { return annotator_ids_.size(); }

    std::optional<std::size_t> annotator_index(std::string_view id) const;
    std::optional<std::size_t> label_index(std::string_view name) const;
    // Registry index of example i's annotator.
    std::size_t annotator_of(std::size_t i) const { return annotator_rows_[i]; }

    // Same name and label schema, different annotations.
    Dataset with_examples(std::vector<AnnotatedExample> examples) const;

private:
    std::string name_;
    std::vector<std::string> label_names_;
    std::vector<std::string> annotator_ids_;
    std::vector<AnnotatedExample> examples_;
    std::vector<std::size_t> annotator_rows_;
    std::unordered_map<std::string, std::size_t> annotator_lookup_;
};

// JSON header shipped next to every JSONL file.
struct DatasetManifest {
    std::string name;
    std::vector<std::string> label_names;
};

// foo.jsonl -> foo.manifest.json
std::filesystem::path manifest_path_for(const std::filesystem::path& jsonl);

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Reads one annotation per line:
//   {"example_id": str, "text": str, "annotator_id": str, "label": str,
//    "demographics": {str: str}?}
// Blank lines are skipped. Errors carry the offending line number.
Dataset load_dataset(const std::filesystem::path& path, const DatasetManifest& schema);
// Uses the sidecar manifest from manifest_path_for(path).
Dataset load_dataset(const std::filesystem::path& path);

// Writes the JSONL file and its sidecar manifest.
void write_dataset(const Dataset& d, const std::filesystem::path& path);
std::string to_jsonl(const Dataset& d);

enum class SplitKind { Annotation, Annotator };

std::string to_string(SplitKind kind);
SplitKind parse_split_kind(std::string_view s);

struct Split {
    Dataset train;
    std::optional<Dataset> dev;
    Dataset test;
    SplitKind kind = SplitKind::Annotation;
    std::uint64_t seed = 0;
};

// Number of items that go to train out of n: ceil(frac * n), clamped to
// [1, n - 1] so both sides stay non-empty.
std::size_t train_share(double train_frac, std::size_t n);

// Per annotator: shuffle that annotator's annotations (registry order, one
// generator for the whole split) and send the first train_share() to train.
// With dev_frac > 0, floor(dev_frac * n_train) of each annotator's train
// share (taken from its end, at least one train item kept) becomes dev.
// Each side keeps the original file order.
Split make_annotation_split(const Dataset& d, double train_frac, std::uint64_t seed, double dev_frac = 0.0);

// Shuffle the annotator registry and send the annotations of the first
// train_share(train_frac, N) annotators to train, the rest to test.
Split make_annotator_split(const Dataset& d, double train_frac, std::uint64_t seed);

// Removes test annotations whose annotator never appears in `train`.
struct UnseenFilterResult {
    Dataset kept;
    std::size_t dropped = 0;
};
UnseenFilterResult drop_unseen_annotators(const Dataset& test, const Dataset& train);

struct StatisticsReport {
    // Annotation count per annotator, registry order.
    std::vector<std::size_t> annotations_per_annotator;
    // Annotation count per label.
    std::vector<std::size_t> label_counts;
    // Distinct labels per example_id, first-appearance order.
    std::vector<std::pair<std::string, std::size_t>> distinct_labels_per_example;
    // distinct_label_histogram[k] = number of example_ids with exactly k distinct labels.
    std::vector<std::size_t> distinct_label_histogram;
    std::size_t distinct_examples = 0;
};

StatisticsReport dataset_statistics(const Dataset& d);

}  // namespace annoembed
