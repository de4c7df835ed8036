#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "normwatch/classifier.hpp"
#include "normwatch/rng.hpp"
#include "synthetic.hpp"

using namespace normwatch;

namespace {

StratumClassifier toy_model(int dim, int relu, int max_len = 4) {
    HyperParams hp;
    hp.embedding_dim = dim;
    hp.relu_nodes = relu;
    hp.max_len = max_len;
    return make_classifier("toy", VocabIndex::from_tokens({"x", "y"}), hp);
}

EncodedComment ids(std::vector<std::int32_t> v) { return EncodedComment{std::move(v)}; }

}  // namespace

TEST_CASE("vocabulary and encoding") {
    std::vector<LabeledText> train{{"1", {{"b", "a", "b", "c"}}, true}, {"2", {{"a", "b", "d"}}, false}};
    const auto vocab = VocabIndex::build(train, 4);
    CHECK(vocab.size() == 4);
    CHECK(vocab.id("b") == 2);  // most frequent
    CHECK(vocab.id("a") == 3);
    CHECK(vocab.id("c") == VocabIndex::kOutOfVocabulary);
    CHECK(vocab.id("zzz") == VocabIndex::kOutOfVocabulary);

    const auto padded = encode(vocab, TokenSequence{{"a", "b"}}, 4);
    CHECK(padded.ids == std::vector<std::int32_t>{3, 2, 0, 0});
    const auto truncated = encode(vocab, TokenSequence{{"c", "a", "b", "a", "b"}}, 3);
    CHECK(truncated.ids == std::vector<std::int32_t>{2, 3, 2});
}

TEST_CASE("forward pass") {
    SUBCASE("zero weights give 0.5") {
        const auto m = toy_model(4, 3);
        CHECK(forward(m, ids({2, 3, 1, 0})) == 0.5);
        CHECK(forward(m, ids({0, 0, 0, 0})) == 0.5);
    }
    SUBCASE("hand-evaluated one-dimensional model") {
        auto m = toy_model(1, 1);
        m.embedding << 0.0, 0.0, 1.0, 1.0;
        m.dense_weights << 2.0;
        m.dense_bias << -0.5;
        m.output_weights << 3.0;
        m.output_bias = -1.0;
        // pooled 1, pre-ReLU 1.5, logit 3.5
        CHECK(forward(m, ids({2, 3, 0, 0})) == doctest::Approx(0.9706877692486436).epsilon(1e-12));
        m.embedding << 0.0, 0.0, 0.5, -1.5;
        // pooled -2.5/3, ReLU clamps to zero, logit -1
        CHECK(forward(m, ids({2, 3, 3, 0})) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
        // all padding pools to zero: pre-ReLU -0.5 -> 0, logit -1
        CHECK(forward(m, ids({0, 0, 0, 0})) == doctest::Approx(0.2689414213699951).epsilon(1e-12));
    }
    SUBCASE("all padding with zero output bias is 0.5") {
        auto m = toy_model(2, 2);
        m.dense_bias << 0.3, -0.2;
        m.output_weights << 0.0, 0.0;
        CHECK(forward(m, ids({0, 0, 0, 0})) == 0.5);
    }
    SUBCASE("length mismatch is an error") {
        const auto m = toy_model(2, 2);
        CHECK_THROWS_AS(forward(m, ids({1, 2})), std::invalid_argument);
    }
    SUBCASE("output is monotone in the output bias") {
        auto m = toy_model(3, 4);
        Rng rng(1);
        for (Eigen::Index i = 0; i < m.embedding.size(); ++i) m.embedding.data()[i] = rng.uniform() - 0.5;
        for (Eigen::Index i = 0; i < m.dense_weights.size(); ++i) m.dense_weights.data()[i] = rng.uniform() - 0.5;
        m.output_weights.setConstant(0.7);
        double previous = -1.0;
        for (double b = -5.0; b <= 5.0; b += 0.25) {
            m.output_bias = b;
            const double p = forward(m, ids({2, 3, 1, 0}));
            CHECK(p > previous);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            previous = p;
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    for (auto [dim, relu] : {std::pair{1, 1}, std::pair{3, 4}}) {
        auto m = toy_model(dim, relu, 5);
        Rng rng(static_cast<std::uint64_t>(dim * 10 + relu));
        auto randomize = [&](auto& t) {
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform() * 1.6 - 0.8;
        };
        randomize(m.embedding);
        randomize(m.dense_weights);
        randomize(m.dense_bias);
        m.dense_bias.array() += 0.9;  // keep units away from the ReLU kink
        m.dense_weights = m.dense_weights.cwiseAbs();
        m.embedding = m.embedding.cwiseAbs();
        randomize(m.output_weights);
        m.output_bias = 0.2;
        std::vector<LabeledEncoded> batch{{ids({2, 3, 3, 0, 0}), true},
                                          {ids({3, 1, 0, 0, 0}), false},
                                          {ids({2, 2, 2, 1, 3}), true},
                                          {ids({0, 0, 0, 0, 0}), false}};
        Gradients g;
        mean_loss(m, batch);
        loss_and_gradients(m, batch, g);

        const double h = 1e-6;
        auto check_tensor = [&](auto& weights, const auto& grad, const char* name) {
            for (Eigen::Index i = 0; i < weights.size(); ++i) {
                const double saved = weights.data()[i];
                weights.data()[i] = saved + h;
                const double up = mean_loss(m, batch);
                weights.data()[i] = saved - h;
                const double down = mean_loss(m, batch);
                weights.data()[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = grad.data()[i];
                const double rel = std::abs(numeric - analytic) /
                                   std::max(1e-7, std::abs(numeric) + std::abs(analytic));
                INFO(name << "[" << i << "] analytic=" << analytic << " numeric=" << numeric);
                CHECK(rel < 1e-4);
            }
        };
        check_tensor(m.embedding, g.embedding, "embedding");
        check_tensor(m.dense_weights, g.dense_weights, "dense_weights");
        check_tensor(m.dense_bias, g.dense_bias, "dense_bias");
        check_tensor(m.output_weights, g.output_weights, "output_weights");
        Eigen::Matrix<double, 1, 1> bias;
        bias << m.output_bias;
        Eigen::Matrix<double, 1, 1> bias_grad;
        bias_grad << g.output_bias;
        const double saved = m.output_bias;
        m.output_bias = saved + h;
        const double up = mean_loss(m, batch);
        m.output_bias = saved - h;
        const double down = mean_loss(m, batch);
        m.output_bias = saved;
        CHECK((up - down) / (2 * h) == doctest::Approx(g.output_bias).epsilon(1e-4));
    }
}

TEST_CASE("metrics") {
    const auto m = metrics_from_counts(1, 1, 1);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == 0.5);
    CHECK(metrics_from_counts(5, 0, 0).f1 == 1.0);
    const auto none = metrics_from_counts(0, 0, 0);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    // All-negative predictions on a mixed set: negative output bias.
    auto model = toy_model(2, 2);
    model.output_bias = -3.0;
    std::vector<LabeledEncoded> test{{ids({2, 0, 0, 0}), true}, {ids({3, 0, 0, 0}), false}};
    const auto e = evaluate(model, test);
    CHECK(e.recall == 0.0);
    CHECK(e.f1 == 0.0);
    CHECK_THROWS(evaluate(model, std::span<const LabeledEncoded>{}));
}

TEST_CASE("training") {
    const auto data = testing::separable_dataset(500, 8, 21);
    SUBCASE("token-frequency oracle separates the synthetic data perfectly") {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (const auto& item : data.validation) {
            int a = 0, b = 0;
            for (const auto& t : item.tokens.tokens) (t[0] == 'a' ? a : b) += 1;
            const bool predicted = a > b;
            if (predicted && item.moderated) ++tp;
            else if (predicted) ++fp;
            else if (item.moderated) ++fn;
        }
        CHECK(metrics_from_counts(tp, fp, fn).f1 == 1.0);
    }
    HyperParams hp;
    hp.epochs = 30;
    const auto vocab = VocabIndex::build(data.train, hp.vocab_size);
    const auto train_set = encode_all(vocab, data.train, hp.max_len);
    const auto val_set = encode_all(vocab, data.validation, hp.max_len);
    SUBCASE("separable data reaches validation F1 >= 0.95") {
        const auto model = train("syn", vocab, train_set, val_set, hp, 1);
        CHECK(model.validation_f1 >= 0.95);
        CHECK(model.embedding.allFinite());
    }
    SUBCASE("identical seed and data give bit-identical weights") {
        HyperParams quick = hp;
        quick.epochs = 3;
        const auto a = train("syn", vocab, train_set, val_set, quick, 5);
        const auto b = train("syn", vocab, train_set, val_set, quick, 5);
        CHECK(a.embedding == b.embedding);
        CHECK(a.dense_weights == b.dense_weights);
        CHECK(a.dense_bias == b.dense_bias);
        CHECK(a.output_weights == b.output_weights);
        CHECK(a.output_bias == b.output_bias);
    }
    SUBCASE("empty training set is an error") {
        CHECK_THROWS_AS(train("syn", vocab, {}, val_set, hp, 1), std::invalid_argument);
    }
}

TEST_CASE("random labels stay near chance") {
    // A single run's F1 depends on its positive-prediction rate, so the chance
    // level is checked as the mean over independent datasets and seeds.
    double total = 0.0;
    const int runs = 10;
    for (int r = 1; r <= runs; ++r) {
        const auto data = testing::random_label_dataset(500, 8, static_cast<std::uint64_t>(100 + r));
        HyperParams hp;
        const auto vocab = VocabIndex::build(data.train, hp.vocab_size);
        total += train("rnd", vocab, encode_all(vocab, data.train, hp.max_len),
                       encode_all(vocab, data.validation, hp.max_len), hp, static_cast<std::uint64_t>(r))
                     .validation_f1;
    }
    CHECK(total / runs > 0.4);
    CHECK(total / runs < 0.6);
}

TEST_CASE("one full-batch epoch is one gradient step from the initial weights") {
    const auto data = testing::separable_dataset(20, 5, 6);
    HyperParams hp;
    hp.epochs = 1;
    hp.batch_size = 1000;
    hp.learning_rate = 1e-300;  // leaves the initial weights unchanged in double precision
    const auto vocab = VocabIndex::build(data.train, hp.vocab_size);
    const auto set = encode_all(vocab, data.train, hp.max_len);
    const auto initial = train("s", vocab, set, {}, hp, 9);
    hp.learning_rate = 0.5;
    const auto stepped = train("s", vocab, set, {}, hp, 9);
    Gradients g;
    loss_and_gradients(initial, set, g);
    CHECK((initial.embedding - hp.learning_rate * g.embedding - stepped.embedding).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((initial.dense_weights - hp.learning_rate * g.dense_weights - stepped.dense_weights)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK((initial.output_weights - hp.learning_rate * g.output_weights - stepped.output_weights)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK(initial.output_bias - hp.learning_rate * g.output_bias == doctest::Approx(stepped.output_bias));
}

TEST_CASE("grid search") {
    const auto data = testing::separable_dataset(40, 6, 4);
    SUBCASE("the full candidate grid has 24 cells, all evaluated") {
        CandidateGrid grid;
        CHECK(grid.cells().size() == 24);
        const auto result = grid_search("syn", data.train, data.validation, grid, 3);
        CHECK(result.cells.size() == 24);
        CHECK(result.cells.front().hyperparams == HyperParams{10000, 256, 30, 16, 16, 0.01, 32});
        CHECK(result.cells.back().hyperparams == HyperParams{44000, 512, 50, 32, 16, 0.01, 32});
        for (const auto& cell : result.cells) CHECK(result.model.validation_f1 >= cell.validation_f1);
    }
    SUBCASE("singleton grid returns its only cell") {
        CandidateGrid grid{{10000}, {256}, {30}, {16}};
        const auto result = grid_search("syn", data.train, data.validation, grid, 3);
        CHECK(result.best == grid.cells().front());
        CHECK(result.model.hyperparams == result.best);
    }
    SUBCASE("ties go to the first cell in enumeration order") {
        CandidateGrid grid{{10000}, {256, 512}, {30}, {16}};
        const auto result = grid_search("syn", data.train, data.validation, grid, 3);
        REQUIRE(result.cells.size() == 2);
        // Right padding does not change pooled embeddings, so both cells train identically.
        CHECK(result.cells[0].validation_f1 == result.cells[1].validation_f1);
        CHECK(result.best.max_len == 256);
    }
    SUBCASE("empty grid is an error") {
        CandidateGrid grid{{}, {256}, {30}, {16}};
        CHECK_THROWS_AS(grid_search("syn", data.train, data.validation, grid, 3), std::invalid_argument);
    }
}

namespace {

StratumClassifier biased_model(const std::string& id, double bias) {
    auto m = toy_model(2, 2, 8);
    m.stratum_id = id;
    m.output_bias = bias;
    return m;
}

}  // namespace

TEST_CASE("agreement score and flag threshold") {
    std::vector<StratumClassifier> ensemble{biased_model("a", 1.0), biased_model("b", 0.5),
                                            biased_model("c", -1.0)};
    CHECK(agreement_score(ensemble, "any text at all") == 2);
    std::reverse(ensemble.begin(), ensemble.end());
    CHECK(agreement_score(ensemble, "any text at all") == 2);
    std::vector<StratumClassifier> none{biased_model("a", -1.0), biased_model("b", -0.1)};
    CHECK(agreement_score(none, "text") == 0);
    CHECK_THROWS_AS(agreement_score(std::span<const StratumClassifier>{}, "x"), std::invalid_argument);

    CHECK(flag(80, 97));
    CHECK_FALSE(flag(79, 97));
    CHECK(flag(97, 97));
    CHECK_THROWS_AS(flag(3, 5, 6), std::invalid_argument);
    CHECK(flag(4, 5, 4));
}

TEST_CASE("model files round-trip bit-exactly") {
    const auto data = testing::separable_dataset(30, 5, 8);
    HyperParams hp;
    hp.epochs = 2;
    const auto vocab = VocabIndex::build(data.train, hp.vocab_size);
    const auto model = train("s1", vocab, encode_all(vocab, data.train, hp.max_len),
                             encode_all(vocab, data.validation, hp.max_len), hp, 4);
    const auto path = std::filesystem::temp_directory_path() / "normwatch_model_rt.model";
    save_model(path, model);
    const auto loaded = load_model(path);
    CHECK(loaded.hyperparams == model.hyperparams);
    CHECK(loaded.vocab.tokens() == model.vocab.tokens());
    CHECK(loaded.validation_f1 == model.validation_f1);
    for (const auto& item : data.validation) {
        const auto x = encode(loaded.vocab, item.tokens, hp.max_len);
        CHECK(forward(loaded, x) == forward(model, x));
    }
    auto bad = model;
    bad.stratum_id = "has space";
    CHECK_THROWS_AS(save_model(path, bad), std::invalid_argument);
}
