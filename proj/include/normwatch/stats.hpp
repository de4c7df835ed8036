#pragma once

// Measurement statistics: Poisson rate regression with an offset, incidence
// rate ratios, Welch's t-test, Flesch Reading Ease and lexicon emotionality.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace normwatch {

inline constexpr std::string_view kBaselineTopic = "general content";

// One stratum's regression inputs.
struct RegressionRow {
    std::string stratum_id;
    double violating = 0.0;           // response count (may be a bootstrap median)
    std::int64_t total_comments = 0;  // offset, before the log
    std::int64_t moderator_count = 0;
    std::string topic;
};

struct RegressionSpec {
    std::vector<std::string> names;  // column names of design
    Eigen::MatrixXd design;
    Eigen::VectorXd response;
    Eigen::VectorXd offset;
    std::vector<std::string> stratum_ids;
};

// Columns: intercept, log(moderators / comments), one indicator per topic other
// than the baseline (sorted by name). Offsets are log(total_comments). Zero
// moderator or comment counts are rejected.
RegressionSpec build_regression_spec(std::span<const RegressionRow> rows,
                                     std::string_view baseline = kBaselineTopic);

class RegressionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PoissonFit {
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd z_scores;
    Eigen::VectorXd p_values;  // two-sided, normal approximation
    double log_likelihood = 0.0;
    double max_abs_score = 0.0;  // largest entry of X'(y - mu) at the returned coefficients
    bool converged = false;
    int iterations = 0;
};

// Poisson GLM with log link and offset, fit by iteratively reweighted least
// squares. Converged when the largest coefficient change is <= tol; one more
// Newton step is then taken so the score sits at rounding level. Throws
// RegressionError for a rank-deficient design (naming the dependent columns),
// an all-zero response, or invalid inputs.
PoissonFit fit_poisson(const Eigen::Ref<const Eigen::MatrixXd>& design, const Eigen::Ref<const Eigen::VectorXd>& response,
                       const Eigen::Ref<const Eigen::VectorXd>& offset, std::span<const std::string> names,
                       double tol = 1e-8, int max_iter = 100);
PoissonFit fit_poisson(const RegressionSpec& spec, double tol = 1e-8, int max_iter = 100);

// Poisson log-likelihood of coefficients beta.
double poisson_log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& design,
                              const Eigen::Ref<const Eigen::VectorXd>& response,
                              const Eigen::Ref<const Eigen::VectorXd>& offset,
                              const Eigen::Ref<const Eigen::VectorXd>& beta);

// Incidence rate ratio e^coefficient.
inline double irr(double coefficient) { return std::exp(coefficient); }

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
};

// Two-sample t-test without the equal-variance assumption, two-sided p from
// Student's t with Welch-Satterthwaite df. Both samples constant with equal
// means give t = 0, p = 1; constant samples with different means throw
// std::domain_error.
WelchResult welch_t(std::span<const double> a, std::span<const double> b);

struct ReadabilityCounts {
    int words = 0;
    int sentences = 0;
    int syllables = 0;
};

// Vowel groups (a e i o u y), minus a terminal silent 'e' unless the word ends
// in "le", at least one.
int count_syllables(std::string_view word);

// Words are runs of ASCII letters, digits and apostrophes containing a letter
// or digit. A sentence ends at each run of '.', '!' or '?' that follows a
// word; trailing words without a terminator form one more sentence.
ReadabilityCounts readability_counts(std::string_view text);

// Flesch Reading Ease: 206.835 - 1.015 words/sentences - 84.6 syllables/words.
// Throws std::invalid_argument when the text has no words.
double flesch(std::string_view text);

class Lexicon {
public:
    Lexicon() = default;
    // Throws std::invalid_argument on duplicate words or non-finite scores.
    void add(std::string word, double score);
    std::optional<double> score(std::string_view word) const;
    std::size_t size() const { return scores_.size(); }
    bool empty() const { return scores_.empty(); }

private:
    std::unordered_map<std::string, double> scores_;
};

// `word,score` per line; '#' starts a comment line; blank lines are skipped.
// Words are lowercased.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon(std::string_view text);

// Small built-in lexicon for demos and tests.
const Lexicon& demo_lexicon();

// Mean score over the text's tokens found in the lexicon (corpus
// preprocessing), or nullopt when no token matches.
std::optional<double> emotionality(std::string_view text, const Lexicon& lexicon);

struct GroupEmotionality {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t matched = 0;    // texts with at least one lexicon token
    std::size_t unmatched = 0;  // excluded from the mean
};

// Per-text scores averaged over matched texts.
GroupEmotionality group_emotionality(std::span<const std::string> texts, const Lexicon& lexicon);

}  // namespace normwatch
