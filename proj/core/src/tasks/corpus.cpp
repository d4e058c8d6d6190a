#include "gatescope/tasks/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/common/hash.hpp"
#include "gatescope/common/io.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::tasks {

using nlohmann::json;

namespace {

constexpr double kFractionTolerance = 1e-9;
constexpr std::uint64_t kLayoutStream = 0x1a7;
constexpr std::uint64_t kPairStream = 0x9a1;
constexpr std::uint64_t kProbeStream = 0x9b0;

std::uint64_t document_seed(std::uint64_t seed, std::size_t cls, std::size_t sample) {
    return derive_seed(seed, cls + 1, sample);
}

/// Largest-remainder apportionment of `n` slots to the three layouts,
/// shuffled with the class seed.
std::vector<Layout> layout_plan(const RegimeMix& mix, std::size_t n, std::uint64_t seed) {
    const std::array<double, 3> w = {mix.classification, mix.image_first, mix.caption_first};
    const std::array<Layout, 3> kinds = {Layout::ClassificationPrompt, Layout::ImageFirstCaption,
                                         Layout::CaptionFirstImage};
    std::array<std::size_t, 3> count{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = w[k] * static_cast<double>(n);
        count[k] = static_cast<std::size_t>(std::floor(exact));
        rem[k] = exact - static_cast<double>(count[k]);
        assigned += count[k];
    }
    while (assigned < n) {
        const auto k = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
        ++count[k];
        rem[k] = -1.0;
        ++assigned;
    }
    std::vector<Layout> plan;
    plan.reserve(n);
    for (std::size_t k = 0; k < 3; ++k) plan.insert(plan.end(), count[k], kinds[k]);
    Rng rng(seed);
    std::shuffle(plan.begin(), plan.end(), rng);
    return plan;
}

}  // namespace

void DatasetConfig::validate() const {
    require(n_classes >= 1, "n_classes must be at least 1");
    require(n_per_class >= 1, "n_per_class must be at least 1");
    require(noise_eps >= 0.0 && noise_eps < 0.5, "noise_eps must lie in [0, 0.5)");
    require(mix.classification >= 0 && mix.image_first >= 0 && mix.caption_first >= 0,
            "regime mix weights must be non-negative");
    require(std::abs(mix.classification + mix.image_first + mix.caption_first - 1.0) < kFractionTolerance,
            "regime mix must sum to 1");
    require(train_fraction >= 0 && test_fraction >= 0, "split fractions must be non-negative");
    require(std::abs(train_fraction + test_fraction - 1.0) < kFractionTolerance, "split fractions must sum to 1");
    require(!(n_per_class < 2 && test_fraction > 0), "n_per_class must be at least 2 when the test fraction is nonzero");
    require(image_length + 8 <= max_seq_len, "image_length + 8 must fit in max_seq_len");
    Vocabulary(n_image_codes, n_classes);
}

std::string DatasetConfig::hash() const { return hash_hex(json(*this).dump()); }

void to_json(json& j, const DatasetConfig& c) {
    j = json{{"n_classes", c.n_classes},
             {"n_per_class", c.n_per_class},
             {"n_image_codes", c.n_image_codes},
             {"image_length", c.image_length},
             {"noise_eps", c.noise_eps},
             {"max_seq_len", c.max_seq_len},
             {"mix",
              {{"classification_prompt", c.mix.classification},
               {"image_first_caption", c.mix.image_first},
               {"caption_first_image", c.mix.caption_first}}},
             {"train_fraction", c.train_fraction},
             {"test_fraction", c.test_fraction},
             {"loss_regime", std::string(to_string(c.loss_regime))},
             {"seed", c.seed}};
}

void from_json(const json& j, DatasetConfig& c) {
    io::require_known_keys(j,
                           {"n_classes", "n_per_class", "n_image_codes", "image_length", "noise_eps", "max_seq_len",
                            "mix", "train_fraction", "test_fraction", "loss_regime", "seed"},
                           "dataset config");
    const DatasetConfig d;
    c.n_classes = j.value("n_classes", d.n_classes);
    c.n_per_class = j.value("n_per_class", d.n_per_class);
    c.n_image_codes = j.value("n_image_codes", d.n_image_codes);
    c.image_length = j.value("image_length", d.image_length);
    c.noise_eps = j.value("noise_eps", d.noise_eps);
    c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
    c.mix = d.mix;
    if (j.contains("mix")) {
        const auto& m = j.at("mix");
        io::require_known_keys(m, {"classification_prompt", "image_first_caption", "caption_first_image"},
                               "dataset mix");
        c.mix.classification = m.value("classification_prompt", d.mix.classification);
        c.mix.image_first = m.value("image_first_caption", d.mix.image_first);
        c.mix.caption_first = m.value("caption_first_image", d.mix.caption_first);
    }
    c.train_fraction = j.value("train_fraction", d.train_fraction);
    c.test_fraction = j.value("test_fraction", d.test_fraction);
    c.loss_regime = loss_regime_from_string(j.value("loss_regime", std::string(to_string(d.loss_regime))));
    c.seed = j.value("seed", d.seed);
}

std::vector<ClassPair> make_class_pairs(std::size_t n_classes, std::uint64_t seed) {
    std::vector<std::size_t> order(n_classes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, kPairStream));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<ClassPair> pairs;
    for (std::size_t i = 0; i + 1 < n_classes; i += 2) pairs.emplace_back(order[i], order[i + 1]);
    return pairs;
}

Dataset make_dataset(const DatasetConfig& config) {
    config.validate();
    Dataset ds{config, Vocabulary(config.n_image_codes, config.n_classes), {}, {}, {}, {}};
    ds.classes = make_class_specs(ds.vocab, config.image_length, config.seed);
    ds.class_pairs = make_class_pairs(config.n_classes, config.seed);

    const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * config.n_per_class));
    const std::size_t n_train = config.n_per_class - n_test;
    const RenderOptions render{config.noise_eps, config.max_seq_len};

    std::vector<std::vector<Layout>> train_plan, test_plan;
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        train_plan.push_back(layout_plan(config.mix, n_train, derive_seed(config.seed, kLayoutStream, 2 * c)));
        test_plan.push_back(layout_plan(config.mix, n_test, derive_seed(config.seed, kLayoutStream, 2 * c + 1)));
    }
    // Sample-major order interleaves classes, so any prefix of a split stays roughly stratified.
    for (std::size_t s = 0; s < config.n_per_class; ++s) {
        for (std::size_t c = 0; c < config.n_classes; ++c) {
            const bool is_train = s < n_train;
            const Layout layout = is_train ? train_plan[c][s] : test_plan[c][s - n_train];
            auto doc = build_document(ds.classes[c], layout, config.loss_regime, ds.vocab,
                                      document_seed(config.seed, c, s), render);
            (is_train ? ds.train : ds.test).push_back(std::move(doc));
        }
    }
    return ds;
}

std::vector<Document> classification_documents(const Dataset& dataset, std::size_t per_class, std::uint64_t seed) {
    const RenderOptions render{dataset.config.noise_eps, dataset.config.max_seq_len};
    std::vector<Document> docs;
    docs.reserve(per_class * dataset.classes.size());
    for (std::size_t s = 0; s < per_class; ++s)
        for (const auto& cls : dataset.classes)
            docs.push_back(build_document(cls, Layout::ClassificationPrompt, dataset.config.loss_regime,
                                          dataset.vocab, derive_seed(seed, kProbeStream, document_seed(seed, cls.class_id, s)),
                                          render));
    return docs;
}

json document_to_json(const Document& doc) {
    json modality = json::array();
    for (auto m : doc.tokens.modality) modality.push_back(std::string(transformer::to_string(m)));
    json mask = json::array();
    for (auto b : doc.loss_mask) mask.push_back(b != 0);
    json j{{"ids", doc.tokens.ids},
           {"modality", modality},
           {"n_eoi", doc.tokens.n_eoi},
           {"class", doc.class_id},
           {"regime", std::string(to_string(doc.layout))},
           {"loss_mask", mask}};
    j["answer_position"] = doc.answer_position ? json(*doc.answer_position) : json(nullptr);
    return j;
}

Document document_from_json(const json& j) {
    Document doc;
    doc.tokens.ids = j.at("ids").get<std::vector<TokenId>>();
    for (const auto& m : j.at("modality")) doc.tokens.modality.push_back(transformer::modality_from_string(m.get<std::string>()));
    doc.tokens.n_eoi = j.at("n_eoi").get<std::size_t>();
    doc.class_id = j.at("class").get<std::size_t>();
    doc.layout = layout_from_string(j.at("regime").get<std::string>());
    for (const auto& b : j.at("loss_mask")) doc.loss_mask.push_back(b.get<bool>() ? 1 : 0);
    if (j.contains("answer_position") && !j.at("answer_position").is_null())
        doc.answer_position = j.at("answer_position").get<std::size_t>();
    require(doc.loss_mask.size() == doc.tokens.size(), "corpus record: loss mask length mismatch");
    return doc;
}

namespace {

std::string to_jsonl(const std::vector<Document>& docs) {
    std::string out;
    for (const auto& d : docs) {
        out += document_to_json(d).dump();
        out += '\n';
    }
    return out;
}

std::vector<Document> from_jsonl(const std::string& text, const std::string& name) {
    std::vector<Document> docs;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            docs.push_back(document_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw IoError(name + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
        }
    }
    return docs;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const Dataset& ds) {
    io::ensure_directory(dir);
    const std::string train = to_jsonl(ds.train);
    const std::string test = to_jsonl(ds.test);
    io::write_text(dir / "train.jsonl", train);
    io::write_text(dir / "test.jsonl", test);

    json classes = json::array();
    for (const auto& c : ds.classes)
        classes.push_back({{"class", c.class_id}, {"name_token", c.name_token}, {"base_pattern", c.base_pattern}});
    json pairs = json::array();
    for (const auto& [a, b] : ds.class_pairs) pairs.push_back({a, b});
    json manifest{{"format", "gatescope-corpus"},
                  {"version", 1},
                  {"config", ds.config},
                  {"config_hash", ds.config.hash()},
                  {"vocab_size", ds.vocab.size()},
                  {"classes", classes},
                  {"class_pairs", pairs},
                  {"files",
                   {{"train.jsonl", {{"records", ds.train.size()}, {"hash", hash_hex(train)}}},
                    {"test.jsonl", {{"records", ds.test.size()}, {"hash", hash_hex(test)}}}}}};
    io::write_json(dir / "manifest.json", manifest);
}

Dataset load_corpus(const std::filesystem::path& dir) {
    const json manifest = io::read_json(dir / "manifest.json");
    if (manifest.value("format", "") != "gatescope-corpus")
        throw IoError(dir.string() + " does not contain a gatescope corpus manifest");
    DatasetConfig config = manifest.at("config").get<DatasetConfig>();
    config.validate();
    if (manifest.at("config_hash").get<std::string>() != config.hash())
        throw IoError("corpus manifest config hash does not match its config");

    Dataset ds{config, Vocabulary(config.n_image_codes, config.n_classes), {}, {}, {}, {}};
    ds.classes = make_class_specs(ds.vocab, config.image_length, config.seed);
    for (const auto& c : manifest.at("classes")) {
        const auto id = c.at("class").get<std::size_t>();
        if (id >= ds.classes.size() || c.at("base_pattern").get<std::vector<TokenId>>() != ds.classes[id].base_pattern)
            throw IoError("corpus class patterns do not match the generator for this config");
    }
    for (const auto& p : manifest.at("class_pairs")) ds.class_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());

    for (const char* name : {"train.jsonl", "test.jsonl"}) {
        const std::string text = io::read_text(dir / name);
        const auto& entry = manifest.at("files").at(name);
        if (hash_hex(text) != entry.at("hash").get<std::string>())
            throw IoError(std::string(name) + " does not match the hash recorded in the corpus manifest");
        auto docs = from_jsonl(text, name);
        if (docs.size() != entry.at("records").get<std::size_t>())
            throw IoError(std::string(name) + " record count does not match the manifest");
        for (const auto& d : docs) ds.vocab.validate(d.tokens, config.max_seq_len);
        (std::string(name) == "train.jsonl" ? ds.train : ds.test) = std::move(docs);
    }
    return ds;
}

}  // namespace gatescope::tasks
