#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "melodia/common.hpp"

namespace melodia {

struct TokenSpan {
    std::string word;
    int begin = 0;  // row range [begin, end)
    int end = 0;
};

struct PromptEmbedding {
    Eigen::MatrixXf rows;          // M x d_tau
    std::vector<TokenSpan> spans;  // tiles [0, M) in order
    std::vector<int> token_ids;    // -1 marks the null token (trainable row)

    int length() const { return static_cast<int>(rows.rows()); }

    // row range of the first occurrence of `word`
    std::pair<int, int> span_of(const std::string& word) const;
};

// Word-level vocabulary with a trainable embedding table plus a dedicated
// null row for the unconditional branch. The table is owned by the denoiser
// checkpoint; this class holds references to current values at embed time.
class PromptVocabulary {
public:
    PromptVocabulary() = default;
    PromptVocabulary(std::vector<std::string> words, int dim, uint64_t init_seed);

    int size() const { return static_cast<int>(words_.size()); }
    int dim() const { return static_cast<int>(table_.cols()); }
    const std::vector<std::string>& words() const { return words_; }
    int index_of(const std::string& word) const;  // -1 if absent

    Eigen::MatrixXf& table() { return table_; }
    const Eigen::MatrixXf& table() const { return table_; }
    Eigen::MatrixXf& null_embedding() { return null_; }
    const Eigen::MatrixXf& null_embedding() const { return null_; }

    PromptEmbedding embed(const std::string& text) const;
    PromptEmbedding null_prompt() const;

    // tokenization only; used by training to re-gather rows as the table moves
    std::vector<int> tokenize(const std::string& text) const;
    PromptEmbedding embed_ids(const std::vector<int>& ids,
                              const std::vector<std::string>& words) const;

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
    Eigen::MatrixXf table_;  // V x d_tau
    Eigen::MatrixXf null_;   // 1 x d_tau
};

// eps_uncond + w * (eps_cond - eps_uncond)
Eigen::MatrixXf cfg_combine(const Eigen::MatrixXf& eps_cond, const Eigen::MatrixXf& eps_uncond,
                            float w);

}  // namespace melodia
