#include "normwatch/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "normwatch/rng.hpp"
#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

constexpr std::string_view kModelMagic = "normwatch-model";
constexpr int kModelVersion = 1;
constexpr double kEmbeddingInitScale = 0.05;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Activations {
    Eigen::VectorXd pooled;
    Eigen::VectorXd pre_relu;
    Eigen::VectorXd hidden;
    double logit = 0.0;
    int tokens = 0;
};

void run_forward(const StratumClassifier& m, const EncodedComment& x, Activations& a) {
    if (static_cast<int>(x.ids.size()) != m.hyperparams.max_len)
        throw std::invalid_argument("encoded length " + std::to_string(x.ids.size()) +
                                    " does not match max_len " +
                                    std::to_string(m.hyperparams.max_len));
    a.pooled.setZero(m.embedding.cols());
    a.tokens = 0;
    for (auto id : x.ids) {
        if (id == VocabIndex::kPadding) continue;
        if (id < 0 || id >= m.embedding.rows())
            throw std::invalid_argument("token id " + std::to_string(id) + " outside embedding table");
        a.pooled += m.embedding.row(id).transpose();
        ++a.tokens;
    }
    if (a.tokens > 0) a.pooled /= static_cast<double>(a.tokens);
    a.pre_relu.noalias() = m.dense_weights.transpose() * a.pooled;
    a.pre_relu += m.dense_bias;
    a.hidden = a.pre_relu.cwiseMax(0.0);
    a.logit = m.output_weights.dot(a.hidden) + m.output_bias;
}

// Accumulates d(loss)/d(weights) for one example scaled by `scale`. Embedding
// rows are accumulated into `embedding_grad`; touched rows are appended to
// `touched` when `seen` marks them fresh.
double backprop_one(const StratumClassifier& m, const LabeledEncoded& ex, double scale,
                    Activations& a, Gradients& g, std::vector<char>* seen,
                    std::vector<int>* touched) {
    run_forward(m, ex.input, a);
    const double y = ex.moderated ? 1.0 : 0.0;
    const double loss = softplus(a.logit) - y * a.logit;
    const double dlogit = (sigmoid(a.logit) - y) * scale;

    g.output_weights += dlogit * a.hidden;
    g.output_bias += dlogit;
    Eigen::VectorXd dpre = dlogit * m.output_weights;
    for (Eigen::Index i = 0; i < dpre.size(); ++i)
        if (a.pre_relu(i) <= 0.0) dpre(i) = 0.0;
    g.dense_weights.noalias() += a.pooled * dpre.transpose();
    g.dense_bias += dpre;
    if (a.tokens > 0) {
        const Eigen::RowVectorXd dpooled =
            (m.dense_weights * dpre).transpose() / static_cast<double>(a.tokens);
        for (auto id : ex.input.ids) {
            if (id == VocabIndex::kPadding) continue;
            g.embedding.row(id) += dpooled;
            if (seen && !(*seen)[id]) {
                (*seen)[id] = 1;
                touched->push_back(id);
            }
        }
    }
    return loss;
}

Gradients zero_gradients(const StratumClassifier& m) {
    Gradients g;
    g.embedding = Eigen::MatrixXd::Zero(m.embedding.rows(), m.embedding.cols());
    g.dense_weights = Eigen::MatrixXd::Zero(m.dense_weights.rows(), m.dense_weights.cols());
    g.dense_bias = Eigen::VectorXd::Zero(m.dense_bias.size());
    g.output_weights = Eigen::VectorXd::Zero(m.output_weights.size());
    g.output_bias = 0.0;
    return g;
}

void validate_hyperparams(const HyperParams& hp) {
    if (hp.vocab_size < 3 || hp.max_len < 1 || hp.epochs < 1 || hp.relu_nodes < 1 ||
        hp.embedding_dim < 1 || !(hp.learning_rate > 0.0) || hp.batch_size < 1)
        throw std::invalid_argument("invalid hyperparameters: " + to_string(hp));
}

void write_matrix(std::ostream& out, std::string_view name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ' ';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, std::string_view name, Eigen::Index rows,
                            Eigen::Index cols) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("model file truncated before " + std::string(name));
    auto head = split(line, ' ');
    if (head.size() != 3 || head[0] != name || parse_int(head[1]) != rows || parse_int(head[2]) != cols)
        throw std::invalid_argument("model file: bad block header '" + line + "'");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw std::invalid_argument("model file truncated in " + std::string(name));
        auto fields = split(line, ' ');
        if (static_cast<Eigen::Index>(fields.size()) != cols)
            throw std::invalid_argument("model file: wrong row width in " + std::string(name));
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_double(fields[c]);
    }
    return m;
}

}  // namespace

std::string to_string(const HyperParams& hp) {
    std::ostringstream ss;
    ss << "vocab_size=" << hp.vocab_size << " max_len=" << hp.max_len << " epochs=" << hp.epochs
       << " relu_nodes=" << hp.relu_nodes << " embedding_dim=" << hp.embedding_dim
       << " learning_rate=" << format_double(hp.learning_rate) << " batch_size=" << hp.batch_size;
    return ss.str();
}

VocabIndex VocabIndex::build(std::span<const LabeledText> training, int max_size) {
    if (max_size < 2) throw std::invalid_argument("vocabulary needs room for reserved ids");
    std::map<std::string, std::int64_t> freq;
    for (const auto& item : training)
        for (const auto& t : item.tokens.tokens) ++freq[t];
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    const auto keep = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(max_size - 2));
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
    return from_tokens(std::move(tokens));
}

VocabIndex VocabIndex::from_tokens(std::vector<std::string> tokens) {
    VocabIndex v;
    v.tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        if (!v.ids_.emplace(v.tokens_[i], static_cast<int>(i) + 2).second)
            throw std::invalid_argument("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
    return v;
}

int VocabIndex::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kOutOfVocabulary : it->second;
}

EncodedComment encode(const VocabIndex& vocab, const TokenSequence& tokens, int max_len) {
    if (max_len < 1) throw std::invalid_argument("max_len must be positive");
    EncodedComment out;
    out.ids.assign(static_cast<std::size_t>(max_len), VocabIndex::kPadding);
    const auto& t = tokens.tokens;
    const std::size_t start = t.size() > static_cast<std::size_t>(max_len) ? t.size() - max_len : 0;
    for (std::size_t i = start; i < t.size(); ++i) out.ids[i - start] = vocab.id(t[i]);
    return out;
}

std::vector<LabeledEncoded> encode_all(const VocabIndex& vocab, std::span<const LabeledText> items,
                                       int max_len) {
    std::vector<LabeledEncoded> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back({encode(vocab, item.tokens, max_len), item.moderated});
    return out;
}

StratumClassifier make_classifier(std::string stratum_id, VocabIndex vocab, const HyperParams& hp) {
    validate_hyperparams(hp);
    StratumClassifier m;
    m.stratum_id = std::move(stratum_id);
    m.hyperparams = hp;
    m.embedding = Eigen::MatrixXd::Zero(vocab.size(), hp.embedding_dim);
    m.dense_weights = Eigen::MatrixXd::Zero(hp.embedding_dim, hp.relu_nodes);
    m.dense_bias = Eigen::VectorXd::Zero(hp.relu_nodes);
    m.output_weights = Eigen::VectorXd::Zero(hp.relu_nodes);
    m.vocab = std::move(vocab);
    return m;
}

double logit(const StratumClassifier& model, const EncodedComment& x) {
    Activations a;
    run_forward(model, x, a);
    return a.logit;
}

double forward(const StratumClassifier& model, const EncodedComment& x) {
    return sigmoid(logit(model, x));
}

double loss_and_gradients(const StratumClassifier& model, std::span<const LabeledEncoded> batch,
                          Gradients& grads) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    grads = zero_gradients(model);
    Activations a;
    const double scale = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& ex : batch) total += backprop_one(model, ex, scale, a, grads, nullptr, nullptr);
    return total * scale;
}

double mean_loss(const StratumClassifier& model, std::span<const LabeledEncoded> batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    double total = 0.0;
    for (const auto& ex : batch) {
        const double z = logit(model, ex.input);
        total += softplus(z) - (ex.moderated ? z : 0.0);
    }
    return total / static_cast<double>(batch.size());
}

StratumClassifier train(std::string stratum_id, const VocabIndex& vocab,
                        std::span<const LabeledEncoded> training,
                        std::span<const LabeledEncoded> validation, const HyperParams& hp,
                        std::uint64_t seed) {
    if (training.empty()) throw std::invalid_argument("training set is empty");
    auto model = make_classifier(std::move(stratum_id), vocab, hp);

    auto init = Rng::stream(seed, {stable_hash("init")});
    auto fill = [&init](auto& m, double scale) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                m(r, c) = (2.0 * init.uniform() - 1.0) * scale;
    };
    // Dense layers use Glorot-uniform limits sqrt(6 / (fan_in + fan_out)).
    const double dim = hp.embedding_dim;
    const double relu = hp.relu_nodes;
    fill(model.embedding, kEmbeddingInitScale);
    fill(model.dense_weights, std::sqrt(6.0 / (dim + relu)));
    fill(model.output_weights, std::sqrt(6.0 / (relu + 1.0)));

    Gradients g = zero_gradients(model);
    std::vector<char> seen(static_cast<std::size_t>(model.embedding.rows()), 0);
    std::vector<int> touched;
    std::vector<std::size_t> order(training.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Activations a;
    const double lr = hp.learning_rate;
    const auto batch_size = static_cast<std::size_t>(hp.batch_size);

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        auto shuffle_rng = Rng::stream(seed, {stable_hash("epoch"), static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t end = std::min(order.size(), start + batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);
            g.dense_weights.setZero();
            g.dense_bias.setZero();
            g.output_weights.setZero();
            g.output_bias = 0.0;
            for (std::size_t k = start; k < end; ++k)
                epoch_loss += backprop_one(model, training[order[k]], scale, a, g, &seen, &touched);

            model.output_weights -= lr * g.output_weights;
            model.output_bias -= lr * g.output_bias;
            model.dense_weights -= lr * g.dense_weights;
            model.dense_bias -= lr * g.dense_bias;
            for (int row : touched) {
                model.embedding.row(row) -= lr * g.embedding.row(row);
                g.embedding.row(row).setZero();
                seen[row] = 0;
            }
            touched.clear();
        }
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("non-finite training loss in epoch " + std::to_string(epoch) +
                                     " for stratum '" + model.stratum_id + "'");
    }
    model.validation_f1 = validation.empty() ? 0.0 : evaluate(model, validation).f1;
    return model;
}

Metrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    Metrics m;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

Metrics evaluate(const StratumClassifier& model, std::span<const LabeledEncoded> test) {
    if (test.empty()) throw std::invalid_argument("evaluation set is empty");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& ex : test) {
        const bool predicted = forward(model, ex.input) >= 0.5;
        if (predicted && ex.moderated) ++tp;
        else if (predicted) ++fp;
        else if (ex.moderated) ++fn;
    }
    return metrics_from_counts(tp, fp, fn);
}

std::vector<HyperParams> CandidateGrid::cells() const {
    std::vector<HyperParams> out;
    for (int v : vocab_sizes)
        for (int len : max_lens)
            for (int ep : epochs)
                for (int relu : relu_nodes)
                    out.push_back({v, len, ep, relu, embedding_dim, learning_rate, batch_size});
    return out;
}

GridSearchResult grid_search(std::string stratum_id, std::span<const LabeledText> training,
                             std::span<const LabeledText> validation, const CandidateGrid& grid,
                             std::uint64_t seed) {
    const auto cells = grid.cells();
    if (cells.empty()) throw std::invalid_argument("grid search needs at least one candidate");
    if (validation.empty()) throw std::invalid_argument("grid search needs a validation set");

    GridSearchResult result;
    double best_f1 = -1.0;
    std::map<int, VocabIndex> vocabularies;
    for (const auto& hp : cells) {
        auto it = vocabularies.find(hp.vocab_size);
        if (it == vocabularies.end())
            it = vocabularies.emplace(hp.vocab_size, VocabIndex::build(training, hp.vocab_size)).first;
        const auto& vocab = it->second;
        const auto train_enc = encode_all(vocab, training, hp.max_len);
        const auto val_enc = encode_all(vocab, validation, hp.max_len);
        auto model = train(stratum_id, vocab, train_enc, val_enc, hp, seed);
        result.cells.push_back({hp, model.validation_f1});
        if (model.validation_f1 > best_f1) {
            best_f1 = model.validation_f1;
            result.best = hp;
            result.model = std::move(model);
        }
    }
    return result;
}

int agreement_score(std::span<const StratumClassifier> ensemble, std::string_view body) {
    if (ensemble.empty()) throw std::invalid_argument("agreement_score: empty ensemble");
    const auto tokens = preprocess(body);
    int votes = 0;
    for (const auto& model : ensemble) {
        const auto x = encode(model.vocab, tokens, model.hyperparams.max_len);
        if (forward(model, x) >= 0.5) ++votes;
    }
    return votes;
}

bool flag(int agreement, int ensemble_size, int threshold) {
    if (threshold > ensemble_size)
        throw std::invalid_argument("flag threshold " + std::to_string(threshold) +
                                    " exceeds ensemble size " + std::to_string(ensemble_size));
    if (agreement < 0 || agreement > ensemble_size)
        throw std::invalid_argument("agreement " + std::to_string(agreement) + " outside [0, " +
                                    std::to_string(ensemble_size) + "]");
    return agreement >= threshold;
}

void save_model(const std::filesystem::path& path, const StratumClassifier& m) {
    if (m.stratum_id.empty() || m.stratum_id.find_first_of(" \t\r\n") != std::string::npos)
        throw std::invalid_argument("stratum id '" + m.stratum_id + "' cannot be stored in a model file");
    std::ostringstream out;
    const auto& hp = m.hyperparams;
    out << kModelMagic << ' ' << kModelVersion << ' ' << m.stratum_id << ' ' << to_string(hp)
        << " validation_f1=" << format_double(m.validation_f1) << '\n';
    out << "vocab " << m.vocab.tokens().size() << '\n';
    for (const auto& t : m.vocab.tokens()) out << t << '\n';
    write_matrix(out, "embedding", m.embedding);
    write_matrix(out, "dense_weights", m.dense_weights);
    write_matrix(out, "dense_bias", m.dense_bias.transpose());
    write_matrix(out, "output_weights", m.output_weights.transpose());
    write_matrix(out, "output_bias", Eigen::MatrixXd::Constant(1, 1, m.output_bias));
    write_file(path, out.str());
}

StratumClassifier load_model(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": empty model file");
    auto fields = split(line, ' ');
    if (fields.size() != 11 || fields[0] != kModelMagic)
        throw std::invalid_argument(path.string() + ": not a model file");
    if (parse_int(fields[1]) != kModelVersion)
        throw std::invalid_argument(path.string() + ": unsupported model version " + fields[1]);
    std::map<std::string, std::string> kv;
    for (std::size_t i = 3; i < fields.size(); ++i) {
        const auto eq = fields[i].find('=');
        if (eq == std::string::npos) throw std::invalid_argument(path.string() + ": bad header field");
        kv[fields[i].substr(0, eq)] = fields[i].substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::invalid_argument(path.string() + ": header lacks " + key);
        return it->second;
    };
    HyperParams hp;
    hp.vocab_size = static_cast<int>(parse_int(get("vocab_size")));
    hp.max_len = static_cast<int>(parse_int(get("max_len")));
    hp.epochs = static_cast<int>(parse_int(get("epochs")));
    hp.relu_nodes = static_cast<int>(parse_int(get("relu_nodes")));
    hp.embedding_dim = static_cast<int>(parse_int(get("embedding_dim")));
    hp.learning_rate = parse_double(get("learning_rate"));
    hp.batch_size = static_cast<int>(parse_int(get("batch_size")));

    if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": missing vocab block");
    auto vhead = split(line, ' ');
    if (vhead.size() != 2 || vhead[0] != "vocab") throw std::invalid_argument(path.string() + ": bad vocab block");
    const auto n_tokens = parse_int(vhead[1]);
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<std::size_t>(n_tokens));
    for (std::int64_t i = 0; i < n_tokens; ++i) {
        if (!std::getline(in, line)) throw std::invalid_argument(path.string() + ": truncated vocab");
        tokens.push_back(line);
    }
    auto m = make_classifier(fields[2], VocabIndex::from_tokens(std::move(tokens)), hp);
    m.validation_f1 = parse_double(get("validation_f1"));
    m.embedding = read_matrix(in, "embedding", m.vocab.size(), hp.embedding_dim);
    m.dense_weights = read_matrix(in, "dense_weights", hp.embedding_dim, hp.relu_nodes);
    m.dense_bias = read_matrix(in, "dense_bias", 1, hp.relu_nodes).transpose();
    m.output_weights = read_matrix(in, "output_weights", 1, hp.relu_nodes).transpose();
    m.output_bias = read_matrix(in, "output_bias", 1, 1)(0, 0);
    return m;
}

}  // namespace normwatch
