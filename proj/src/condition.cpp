#include "melodia/condition.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace melodia {

std::pair<int, int> PromptEmbedding::span_of(const std::string& word) const {
    for (const auto& s : spans) {
        if (s.word == word) return {s.begin, s.end};
    }
    fail(ErrorCode::not_found, "word '" + word + "' not present in prompt");
}

PromptVocabulary::PromptVocabulary(std::vector<std::string> words, int dim, uint64_t init_seed)
    : words_(std::move(words)) {
    require(dim >= 1, ErrorCode::invalid_argument, "embedding dim must be positive");
    for (size_t i = 0; i < words_.size(); ++i) {
        const bool inserted = index_.emplace(words_[i], static_cast<int>(i)).second;
        require(inserted, ErrorCode::invalid_argument, "duplicate vocabulary word '" + words_[i] + "'");
    }
    Rng rng(mix_seed(init_seed, 0x766f6361));
    const float scale = 0.5f;
    table_.resize(static_cast<Eigen::Index>(words_.size()), dim);
    for (Eigen::Index r = 0; r < table_.rows(); ++r)
        for (Eigen::Index c = 0; c < table_.cols(); ++c)
            table_(r, c) = scale * static_cast<float>(rng.normal());
    null_.resize(1, dim);
    for (Eigen::Index c = 0; c < dim; ++c) null_(0, c) = scale * static_cast<float>(rng.normal());
}

int PromptVocabulary::index_of(const std::string& word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? -1 : it->second;
}

std::vector<int> PromptVocabulary::tokenize(const std::string& text) const {
    std::vector<int> ids;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        const int idx = index_of(word);
        if (idx < 0) fail(ErrorCode::not_found, "token '" + word + "' not in vocabulary");
        ids.push_back(idx);
    }
    return ids;
}

PromptEmbedding PromptVocabulary::embed_ids(const std::vector<int>& ids,
                                            const std::vector<std::string>& words) const {
    if (ids.empty()) return null_prompt();
    PromptEmbedding out;
    out.rows.resize(static_cast<Eigen::Index>(ids.size()), dim());
    out.token_ids = ids;
    for (size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= -1 && ids[i] < size(), ErrorCode::out_of_range,
                "token id out of range");
        // -1 selects the trainable null row (unconditional branch / dropout)
        out.rows.row(static_cast<Eigen::Index>(i)) =
            ids[i] < 0 ? null_.row(0) : table_.row(ids[i]);
        out.spans.push_back({words[i], static_cast<int>(i), static_cast<int>(i) + 1});
    }
    return out;
}

PromptEmbedding PromptVocabulary::embed(const std::string& text) const {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        std::transform(word.begin(), word.end(), word.begin(),
                       [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
        words.push_back(word);
    }
    if (words.empty()) return null_prompt();
    return embed_ids(tokenize(text), words);
}

PromptEmbedding PromptVocabulary::null_prompt() const {
    PromptEmbedding out;
    out.rows = null_;
    out.token_ids = {-1};
    out.spans.push_back({"<null>", 0, 1});
    return out;
}

Eigen::MatrixXf cfg_combine(const Eigen::MatrixXf& eps_cond, const Eigen::MatrixXf& eps_uncond,
                            float w) {
    require(eps_cond.rows() == eps_uncond.rows() && eps_cond.cols() == eps_uncond.cols(),
            ErrorCode::mismatch, "cfg_combine: shape mismatch");
    require(w >= 0.0f, ErrorCode::invalid_argument, "cfg strength must be >= 0");
    return eps_uncond + w * (eps_cond - eps_uncond);
}

}  // namespace melodia
