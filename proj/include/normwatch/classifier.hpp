#pragma once

// Per-stratum removal classifiers: embedding -> average pooling -> dense ReLU
// -> dense sigmoid, trained with plain mini-batch gradient descent on binary
// cross-entropy. Model files are described in docs/MODEL_FORMAT.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "normwatch/corpus.hpp"

namespace normwatch {

struct HyperParams {
    int vocab_size = 10000;
    int max_len = 256;
    int epochs = 30;
    int relu_nodes = 16;
    int embedding_dim = 16;
    double learning_rate = 0.01;
    int batch_size = 32;

    bool operator==(const HyperParams&) const = default;
};

std::string to_string(const HyperParams& hp);

class VocabIndex {
public:
    static constexpr int kPadding = 0;
    static constexpr int kOutOfVocabulary = 1;

    VocabIndex() = default;

    // Most frequent training tokens first, ties broken alphabetically; at most
    // max_size ids including the two reserved ones.
    static VocabIndex build(std::span<const LabeledText> training, int max_size);
    static VocabIndex from_tokens(std::vector<std::string> tokens);

    int id(std::string_view token) const;
    int size() const { return static_cast<int>(tokens_.size()) + 2; }
    // Tokens for ids 2, 3, ...
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

struct EncodedComment {
    std::vector<std::int32_t> ids;
};

// Keeps the last max_len tokens; right-pads with the padding id.
EncodedComment encode(const VocabIndex& vocab, const TokenSequence& tokens, int max_len);

struct LabeledEncoded {
    EncodedComment input;
    bool moderated = false;
};

std::vector<LabeledEncoded> encode_all(const VocabIndex& vocab, std::span<const LabeledText> items,
                                       int max_len);

struct StratumClassifier {
    std::string stratum_id;
    VocabIndex vocab;
    HyperParams hyperparams;
    Eigen::MatrixXd embedding;       // vocab.size() x embedding_dim
    Eigen::MatrixXd dense_weights;   // embedding_dim x relu_nodes
    Eigen::VectorXd dense_bias;      // relu_nodes
    Eigen::VectorXd output_weights;  // relu_nodes
    double output_bias = 0.0;
    double validation_f1 = 0.0;
};

// Zero-initialized model with the right shapes.
StratumClassifier make_classifier(std::string stratum_id, VocabIndex vocab, const HyperParams& hp);

// Probability that the comment would be removed.
double forward(const StratumClassifier& model, const EncodedComment& x);

// Pre-sigmoid output.
double logit(const StratumClassifier& model, const EncodedComment& x);

struct Gradients {
    Eigen::MatrixXd embedding;
    Eigen::MatrixXd dense_weights;
    Eigen::VectorXd dense_bias;
    Eigen::VectorXd output_weights;
    double output_bias = 0.0;
};

// Mean binary cross-entropy over the batch and its gradient with respect to
// every weight tensor.
double loss_and_gradients(const StratumClassifier& model, std::span<const LabeledEncoded> batch,
                          Gradients& grads);

double mean_loss(const StratumClassifier& model, std::span<const LabeledEncoded> batch);

StratumClassifier train(std::string stratum_id, const VocabIndex& vocab,
                        std::span<const LabeledEncoded> training,
                        std::span<const LabeledEncoded> validation, const HyperParams& hp,
                        std::uint64_t seed);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Zero denominators yield 0 for the affected quantity.
Metrics metrics_from_counts(std::int64_t true_pos, std::int64_t false_pos, std::int64_t false_neg);

// Positive class = moderated, decision threshold 0.5 inclusive.
Metrics evaluate(const StratumClassifier& model, std::span<const LabeledEncoded> test);

struct CandidateGrid {
    std::vector<int> vocab_sizes{10000, 44000};
    std::vector<int> max_lens{256, 512};
    std::vector<int> epochs{30, 40, 50};
    std::vector<int> relu_nodes{16, 32};
    int embedding_dim = 16;
    double learning_rate = 0.01;
    int batch_size = 32;

    // Enumeration order: vocab size, then max length, then epochs, then ReLU nodes.
    std::vector<HyperParams> cells() const;
};

struct GridCellResult {
    HyperParams hyperparams;
    double validation_f1 = 0.0;
};

struct GridSearchResult {
    HyperParams best;
    StratumClassifier model;
    std::vector<GridCellResult> cells;
};

// Trains every grid cell and keeps the highest validation F1; the earliest cell
// wins ties.
GridSearchResult grid_search(std::string stratum_id, std::span<const LabeledText> training,
                             std::span<const LabeledText> validation, const CandidateGrid& grid,
                             std::uint64_t seed);

// Number of models whose output is >= 0.5 for the comment body.
int agreement_score(std::span<const StratumClassifier> ensemble, std::string_view body);

inline constexpr int kDefaultFlagThreshold = 80;

bool flag(int agreement, int ensemble_size, int threshold = kDefaultFlagThreshold);

void save_model(const std::filesystem::path& path, const StratumClassifier& model);
StratumClassifier load_model(const std::filesystem::path& path);

}  // namespace normwatch
