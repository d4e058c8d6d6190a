#include "gatescope/tasks/documents.hpp"

#include "gatescope/common/error.hpp"
#include "gatescope/common/rng.hpp"

namespace gatescope::tasks {

std::size_t hamming_distance(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
    require(a.size() == b.size(), "hamming distance needs equal lengths");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

std::vector<ClassSpec> make_class_specs(const Vocabulary& vocab, std::size_t image_length, std::uint64_t seed) {
    require(image_length >= 1, "image length must be positive");
    const std::size_t min_distance = (image_length + 1) / 2;
    Rng rng(derive_seed(seed, 0x5ea5));
    std::vector<ClassSpec> specs;
    specs.reserve(vocab.n_classes());
    constexpr std::size_t kMaxAttempts = 100000;
    for (std::size_t c = 0; c < vocab.n_classes(); ++c) {
        ClassSpec spec{c, std::vector<TokenId>(image_length), vocab.class_name(c)};
        std::size_t attempts = 0;
        for (;;) {
            require(++attempts <= kMaxAttempts, "could not draw Hamming-separated base patterns; "
                                                "increase n_image_codes or image_length");
            for (auto& t : spec.base_pattern) t = vocab.image_code(uniform_index(rng, vocab.n_image_codes()));
            bool separated = true;
            for (const auto& other : specs)
                if (hamming_distance(other.base_pattern, spec.base_pattern) < min_distance) {
                    separated = false;
                    break;
                }
            if (separated) break;
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::vector<TokenId> render_image(const ClassSpec& cls, const Vocabulary& vocab, double noise_eps,
                                  std::uint64_t seed) {
    require(noise_eps >= 0.0 && noise_eps < 0.5, "noise_eps must lie in [0, 0.5)");
    Rng rng(seed);
    std::vector<TokenId> img = cls.base_pattern;
    for (auto& t : img) {
        const bool corrupt = uniform01(rng) < noise_eps;
        const std::size_t code = uniform_index(rng, vocab.n_image_codes());
        if (corrupt) t = vocab.image_code(code);
    }
    return img;
}

std::string_view to_string(Layout l) {
    switch (l) {
        case Layout::ClassificationPrompt: return "classification_prompt";
        case Layout::ImageFirstCaption: return "image_first_caption";
        case Layout::CaptionFirstImage: return "caption_first_image";
    }
    return "?";
}

Layout layout_from_string(std::string_view s) {
    if (s == "classification_prompt") return Layout::ClassificationPrompt;
    if (s == "image_first_caption") return Layout::ImageFirstCaption;
    if (s == "caption_first_image") return Layout::CaptionFirstImage;
    throw ConfigError("unknown document layout: " + std::string(s));
}

std::string_view to_string(LossRegime r) { return r == LossRegime::Native ? "native" : "text_only"; }

LossRegime loss_regime_from_string(std::string_view s) {
    if (s == "native") return LossRegime::Native;
    if (s == "text_only" || s == "text-only") return LossRegime::TextOnly;
    throw ConfigError("unknown loss regime: " + std::string(s) + " (expected native or text_only)");
}

TokenSequence Document::prompt() const {
    require(answer_position.has_value(), "document layout has no answer slot");
    return tokens.prefix(*answer_position);
}

std::vector<unsigned char> loss_mask_for(const TokenSequence& tokens, const Vocabulary& vocab, LossRegime regime) {
    std::vector<unsigned char> mask(tokens.size(), 0);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
        if (regime == LossRegime::Native)
            mask[t] = tokens.ids[t] != vocab.pad();
        else
            mask[t] = tokens.modality[t] == Modality::Text;
    }
    return mask;
}

namespace {

void push(TokenSequence& seq, const Vocabulary& vocab, TokenId id) {
    seq.ids.push_back(id);
    seq.modality.push_back(vocab.modality(id));
}

void push_caption(TokenSequence& seq, const Vocabulary& vocab, const ClassSpec& cls) {
    for (auto w : kTemplateWords) push(seq, vocab, vocab.word(w));
    push(seq, vocab, cls.name_token);
}

void push_image(TokenSequence& seq, const Vocabulary& vocab, const std::vector<TokenId>& img) {
    push(seq, vocab, vocab.boi());
    for (auto t : img) push(seq, vocab, t);
    seq.n_eoi = seq.size();
    push(seq, vocab, vocab.eoi());
}

}  // namespace

Document build_document(const ClassSpec& cls, Layout layout, LossRegime regime, const Vocabulary& vocab,
                        std::uint64_t seed, RenderOptions options) {
    const auto img = render_image(cls, vocab, options.noise_eps, seed);
    Document doc;
    doc.layout = layout;
    doc.class_id = cls.class_id;
    auto& seq = doc.tokens;
    push(seq, vocab, vocab.bos());
    if (layout == Layout::CaptionFirstImage) {
        push_caption(seq, vocab, cls);
        push_image(seq, vocab, img);
    } else {
        push_image(seq, vocab, img);
        push_caption(seq, vocab, cls);
        doc.answer_position = seq.size() - 1;
    }
    push(seq, vocab, vocab.eos());
    if (seq.size() > options.max_seq_len)
        throw ConfigError("document length " + std::to_string(seq.size()) + " exceeds max_seq_len " +
                          std::to_string(options.max_seq_len));
    vocab.validate(seq, options.max_seq_len);
    doc.loss_mask = loss_mask_for(seq, vocab, regime);
    return doc;
}

}  // namespace gatescope::tasks
