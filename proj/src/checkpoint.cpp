#include "annoembed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace annoembed {

namespace {

constexpr int kFormatVersion = 1;

std::uint64_t to_little_endian(std::uint64_t x) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xFF) << (8 * (7 - i));
        return r;
    }
    return x;
}

}  // namespace

nlohmann::ordered_json to_json(const EncoderConfig& c) {
    return {{"hidden", c.hidden},     {"layers", c.layers},   {"heads", c.heads},          {"max_len", c.max_len},
            {"ffn_mult", c.ffn_mult}, {"dropout", c.dropout}, {"vocab_size", c.vocab_size}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.hidden = j.at("hidden").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.ffn_mult = j.at("ffn_mult").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.vocab_size = j.value("vocab_size", std::size_t{0});
    return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"seed", c.seed},
            {"eval_every", c.eval_every},
            {"select_on_dev", c.select_on_dev}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.value("eval_every", std::size_t{0});
    c.select_on_dev = j.value("select_on_dev", false);
    return c;
}

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["format_version"] = kFormatVersion;
    j["encoder_config"] = to_json(model.encoder_config);
    j["train_config"] = to_json(model.train_config);
    j["label_names"] = model.label_names;
    j["annotator_ids"] = model.annotator_ids;
    j["train_label_counts"] = model.train_label_counts;
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < model.index.annotator_count(); ++a)
        index.push_back({{"annotator_id", model.annotator_ids[a]},
                         {"example_ids", model.index.example_ids(a)},
                         {"labels", model.index.labels(a)}});
    j["annotation_index"] = index;
    j["vocabulary"] = model.vocab.to_json();

    nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
    for (const auto& p : model.params) {
        shapes.push_back({{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols}, {"offset", offset}});
        for (double v : p.value.data) {
            const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
            bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
        offset += p.value.size();
    }
    j["parameters"] = shapes;
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("no checkpoint manifest in " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
    }
    if (j.value("format_version", 0) != kFormatVersion) throw std::runtime_error("unsupported checkpoint format");

    ModelCheckpoint m;
    m.encoder_config = encoder_config_from_json(j.at("encoder_config"));
    m.train_config = train_config_from_json(j.at("train_config"));
    m.label_names = j.at("label_names").get<std::vector<std::string>>();
    m.annotator_ids = j.at("annotator_ids").get<std::vector<std::string>>();
    m.train_label_counts = j.at("train_label_counts").get<std::vector<std::size_t>>();
    m.vocab = Vocabulary::from_json(j.at("vocabulary"));
    if (m.vocab.size() != m.encoder_config.vocab_size)
        throw std::runtime_error("checkpoint vocabulary size does not match the encoder config");

    std::vector<std::vector<std::size_t>> labels;
    std::vector<std::vector<std::string>> ids;
    for (const auto& entry : j.at("annotation_index")) {
        labels.push_back(entry.at("labels").get<std::vector<std::size_t>>());
        ids.push_back(entry.at("example_ids").get<std::vector<std::string>>());
    }
    if (labels.size() != m.annotator_ids.size()) throw std::runtime_error("annotation index does not match registry");
    m.index = AnnotationIndex(m.label_names.size(), std::move(labels), std::move(ids));

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("no params.bin in " + dir.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    const std::size_t total = bytes.size() / 8;
    for (const auto& s : j.at("parameters")) {
        Array2 value(s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>());
        const auto offset = s.at("offset").get<std::size_t>();
        if (offset + value.size() > total) throw std::runtime_error("params.bin is truncated");
        for (std::size_t k = 0; k < value.size(); ++k) {
            std::uint64_t bits;
            std::memcpy(&bits, bytes.data() + 8 * (offset + k), sizeof bits);
            value.data[k] = std::bit_cast<double>(to_little_endian(bits));
        }
        m.params.add(s.at("name").get<std::string>(), std::move(value));
    }
    m.encoder = Encoder::bind(m.params, m.encoder_config, m.label_names.size());
    m.bank = EmbeddingBank::bind(m.params, m.annotator_ids.size(), m.label_names.size(), m.encoder_config.hidden);
    if (!m.bank.supports(m.mode())) throw std::runtime_error("checkpoint lacks embedding parameters for its mode");
    return m;
}

}  // namespace annoembed
