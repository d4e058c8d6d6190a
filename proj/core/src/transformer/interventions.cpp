#include "gatescope/transformer/interventions.hpp"

#include <cmath>
#include <numeric>

#include "gatescope/common/error.hpp"

namespace gatescope::transformer {

void KnockoutSpec::validate(std::size_t n_layers, std::size_t seq_len) const {
    (void)layer_masks(n_layers, seq_len);
}

std::vector<std::vector<unsigned char>> KnockoutSpec::layer_masks(std::size_t n_layers, std::size_t seq_len) const {
    std::vector<std::vector<unsigned char>> masks(n_layers);
    for (const auto& edge : edges) {
        for (std::size_t l : edge.layers) {
            require(l < n_layers, "knockout layer " + std::to_string(l) + " is outside the model depth");
            auto& m = masks[l];
            if (m.empty()) m.assign(seq_len * seq_len, 0);
            for (std::size_t q : edge.queries) {
                require(q < seq_len, "knockout query position out of range");
                for (std::size_t k : edge.keys) {
                    require(k < seq_len, "knockout key position out of range");
                    m[q * seq_len + k] = 1;
                }
            }
        }
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& m = masks[l];
        if (m.empty()) continue;
        for (std::size_t q = 0; q < seq_len; ++q) {
            bool open = false;
            for (std::size_t k = 0; k <= q && !open; ++k) open = m[q * seq_len + k] == 0;
            require(open, "knockout masks every admissible key of query " + std::to_string(q) + " at layer " +
                              std::to_string(l));
        }
    }
    return masks;
}

void PatchSpec::validate(std::size_t n_layers, std::size_t seq_len, std::size_t d_model) const {
    for (const auto& e : entries) {
        require(e.layer <= n_layers, "patch layer out of range");
        require(e.position < seq_len, "patch position out of range");
        require(e.vector.size() == d_model, "patch vector has the wrong width");
        for (double v : e.vector) require(std::isfinite(v), "patch vector is not finite");
    }
}

KnockoutRule KnockoutRule::parse(const std::string& name) {
    if (name == "none") return none();
    if (name == "text-to-eoi") return text_to_eoi();
    if (name == "text-to-img") return text_to_image();
    if (name == "text-to-img+eoi") return text_to_image_and_eoi();
    const std::string prefix = "text-to-token:";
    if (name.starts_with(prefix)) {
        const std::string digits = name.substr(prefix.size());
        if (!digits.empty() && digits.find_first_not_of("0123456789") == std::string::npos) {
            return text_to_token(std::stoul(digits));
        }
    }
    std::string valid;
    for (const auto& v : valid_names()) valid += (valid.empty() ? "" : ", ") + v;
    throw ConfigError("unknown knockout '" + name + "'; valid names: " + valid);
}

std::vector<std::string> KnockoutRule::valid_names() {
    return {"none", "text-to-eoi", "text-to-img", "text-to-img+eoi", "text-to-token:<position>"};
}

std::string KnockoutRule::name() const {
    switch (kind) {
        case Kind::None: return "none";
        case Kind::TextToEoi: return "text-to-eoi";
        case Kind::TextToImage: return "text-to-img";
        case Kind::TextToImageAndEoi: return "text-to-img+eoi";
        case Kind::TextToToken: return "text-to-token:" + std::to_string(position);
    }
    return "none";
}

KnockoutSpec KnockoutRule::resolve(std::size_t seq_len, std::size_t n_eoi, std::size_t n_layers) const {
    KnockoutSpec spec;
    if (kind == Kind::None || n_eoi + 1 >= seq_len) return spec;
    KnockoutEdge edge;
    edge.layers.resize(n_layers);
    std::iota(edge.layers.begin(), edge.layers.end(), 0);
    for (std::size_t q = n_eoi + 1; q < seq_len; ++q) edge.queries.push_back(q);
    switch (kind) {
        case Kind::TextToEoi:
            edge.keys = {n_eoi};
            break;
        case Kind::TextToImage:
            for (std::size_t k = 1; k < n_eoi; ++k) edge.keys.push_back(k);
            break;
        case Kind::TextToImageAndEoi:
            for (std::size_t k = 1; k <= n_eoi; ++k) edge.keys.push_back(k);
            break;
        case Kind::TextToToken:
            require(position < seq_len, "text-to-token position outside the sequence");
            edge.keys = {position};
            break;
        case Kind::None:
            break;
    }
    if (!edge.keys.empty()) spec.edges.push_back(std::move(edge));
    return spec;
}

}  // namespace gatescope::transformer
