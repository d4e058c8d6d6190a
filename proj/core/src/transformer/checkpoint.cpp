#include "gatescope/transformer/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "gatescope/common/error.hpp"
#include "gatescope/common/io.hpp"

namespace gatescope::transformer {

namespace {

std::filesystem::path sibling(const std::filesystem::path& header, const std::string& extension) {
    auto p = header;
    p.replace_extension(extension);
    return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& header, const Checkpoint& checkpoint) {
    const auto& w = checkpoint.weights;
    const ParameterLayout layout(w.config);
    require(w.values.size() == layout.total(), "checkpoint weights do not match their config");

    const auto payload = sibling(header, ".bin");
    io::write_f32(payload, w.values);

    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& t : layout.tensors()) {
        manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}, {"count", t.size}});
    }
    nlohmann::json h;
    h["format"] = "gatescope-checkpoint";
    h["version"] = 1;
    h["config"] = w.config;
    h["step"] = checkpoint.step;
    h["seed"] = checkpoint.seed;
    h["dtype"] = "f32";
    h["endianness"] = "little";
    h["payload"] = payload.filename().string();
    h["tensors"] = manifest;
    h["weights_hash"] = w.fingerprint();
    if (!checkpoint.optimizer.empty()) {
        require(checkpoint.optimizer.first_moment.size() == layout.total() &&
                    checkpoint.optimizer.second_moment.size() == layout.total(),
                "optimizer state does not match the parameter count");
        const auto opt = sibling(header, ".optim.bin");
        std::vector<float> both = checkpoint.optimizer.first_moment;
        both.insert(both.end(), checkpoint.optimizer.second_moment.begin(), checkpoint.optimizer.second_moment.end());
        io::write_f32(opt, both);
        h["optimizer_payload"] = opt.filename().string();
    }
    io::write_json(header, h);
}

Checkpoint load_checkpoint(const std::filesystem::path& header, bool with_optimizer) {
    const auto h = io::read_json(header);
    Checkpoint ck;
    try {
        require(h.at("format").get<std::string>() == "gatescope-checkpoint", "not a gatescope checkpoint");
        require(h.at("dtype").get<std::string>() == "f32", "only f32 checkpoints are supported");
        ck.weights.config = h.at("config").get<ModelConfig>();
        ck.step = h.at("step").get<std::size_t>();
        ck.seed = h.at("seed").get<std::uint64_t>();
        const ParameterLayout layout(ck.weights.config);
        const auto& manifest = h.at("tensors");
        require(manifest.size() == layout.tensors().size(), "checkpoint manifest does not match its config");
        for (std::size_t t = 0; t < manifest.size(); ++t) {
            const auto& expect = layout.tensors()[t];
            require(manifest[t].at("name").get<std::string>() == expect.name &&
                        manifest[t].at("shape").get<std::vector<std::size_t>>() == expect.shape,
                    "checkpoint tensor " + expect.name + " has an unexpected name or shape");
        }
        ck.weights.values = io::read_f32(header.parent_path() / h.at("payload").get<std::string>(), layout.total());
        if (with_optimizer && h.contains("optimizer_payload")) {
            auto both = io::read_f32(header.parent_path() / h.at("optimizer_payload").get<std::string>(),
                                     2 * layout.total());
            ck.optimizer.first_moment.assign(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(layout.total()));
            ck.optimizer.second_moment.assign(both.begin() + static_cast<std::ptrdiff_t>(layout.total()), both.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid checkpoint header " + header.string() + ": " + e.what());
    }
    return ck;
}

}  // namespace gatescope::transformer
