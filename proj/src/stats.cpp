#include "normwatch/stats.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <set>

#include "normwatch/corpus.hpp"
#include "normwatch/special.hpp"
#include "normwatch/textio.hpp"

namespace normwatch {

namespace {

// Names of the columns that take part in an exact linear dependence.
std::vector<std::string> collinear_columns(const Eigen::MatrixXd& x, std::span<const std::string> names) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(x);
    lu.setThreshold(1e-10);
    const Eigen::MatrixXd kernel = lu.kernel();
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < kernel.rows(); ++j) {
        if (kernel.row(j).cwiseAbs().maxCoeff() > 1e-8)
            out.push_back(static_cast<std::size_t>(j) < names.size() ? names[j] : "column " + std::to_string(j));
    }
    return out;
}

std::string joined(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ", ") + p;
    return out;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '\''; }

}  // namespace

RegressionSpec build_regression_spec(std::span<const RegressionRow> rows, std::string_view baseline) {
    if (rows.empty()) throw std::invalid_argument("regression needs at least one stratum");
    std::set<std::string> topics;
    for (const auto& r : rows) {
        if (r.total_comments <= 0)
            throw std::invalid_argument("stratum " + r.stratum_id + ": total comment count must be positive");
        if (r.moderator_count <= 0)
            throw std::invalid_argument("stratum " + r.stratum_id + ": moderator count must be positive");
        if (!(r.violating >= 0.0) || !std::isfinite(r.violating))
            throw std::invalid_argument("stratum " + r.stratum_id + ": violating count must be finite and >= 0");
        if (r.topic != baseline) topics.insert(r.topic);
    }
    RegressionSpec spec;
    spec.names = {"intercept", "log(mod to comment ratio)"};
    for (const auto& t : topics) spec.names.push_back("topic: " + t);
    const auto n = static_cast<Eigen::Index>(rows.size());
    spec.design = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(spec.names.size()));
    spec.response.resize(n);
    spec.offset.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        spec.design(i, 0) = 1.0;
        spec.design(i, 1) =
            std::log(static_cast<double>(r.moderator_count) / static_cast<double>(r.total_comments));
        if (r.topic != baseline) {
            const auto pos = std::distance(topics.begin(), topics.find(r.topic));
            spec.design(i, 2 + pos) = 1.0;
        }
        spec.response(i) = r.violating;
        spec.offset(i) = std::log(static_cast<double>(r.total_comments));
        spec.stratum_ids.push_back(r.stratum_id);
    }
    return spec;
}

double poisson_log_likelihood(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                              const Eigen::Ref<const Eigen::VectorXd>& offset,
                              const Eigen::Ref<const Eigen::VectorXd>& beta) {
    const Eigen::VectorXd eta = x * beta + offset;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - std::exp(eta(i)) - std::lgamma(y(i) + 1.0);
    return ll;
}

PoissonFit fit_poisson(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                       const Eigen::Ref<const Eigen::VectorXd>& offset, std::span<const std::string> names,
                       double tol, int max_iter) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (y.size() != n || offset.size() != n) throw RegressionError("design, response and offset sizes differ");
    if (!names.empty() && static_cast<Eigen::Index>(names.size()) != p)
        throw RegressionError("column names do not match the design");
    if (max_iter < 1) throw RegressionError("max_iter must be at least 1");
    if (!(tol > 0.0)) throw RegressionError("tol must be positive");
    if (p == 0 || n < p) throw RegressionError("need at least as many rows as columns");
    if (!x.allFinite() || !offset.allFinite()) throw RegressionError("design and offsets must be finite");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(y(i) >= 0.0) || !std::isfinite(y(i))) throw RegressionError("counts must be finite and >= 0");
    if (y.sum() == 0.0)
        throw RegressionError("degenerate fit: every count is zero, so the rate estimate diverges to -infinity");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < p)
        throw RegressionError("design matrix is rank deficient; collinear columns: " +
                              joined(collinear_columns(x, names)));

    PoissonFit fit;
    fit.names.assign(names.begin(), names.end());

    // Start from mu = y + 0.1, as in the usual GLM initialization.
    Eigen::VectorXd mu = (y.array() + 0.1).matrix();
    Eigen::VectorXd eta = mu.array().log().matrix();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd xtwx(p, p);
    bool have_beta = false;
    double ll = -std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= max_iter + 1; ++iter) {
        if (iter > max_iter && !fit.converged) break;
        const Eigen::VectorXd z = (eta - offset).array() + (y - mu).array() / mu.array();
        xtwx.noalias() = x.transpose() * mu.asDiagonal() * x;
        const Eigen::VectorXd rhs = x.transpose() * (mu.array() * z.array()).matrix();
        Eigen::VectorXd next = xtwx.ldlt().solve(rhs);
        double next_ll = poisson_log_likelihood(x, y, offset, next);
        // Step halving guards against overshooting from a poor start.
        for (int h = 0; have_beta && h < 40 && !(next_ll >= ll - 1e-12 * std::abs(ll)); ++h) {
            next = 0.5 * (next + beta);
            next_ll = poisson_log_likelihood(x, y, offset, next);
        }
        const double change = have_beta ? (next - beta).cwiseAbs().maxCoeff() : std::numeric_limits<double>::infinity();
        beta = next;
        ll = next_ll;
        have_beta = true;
        eta = x * beta + offset;
        mu = eta.array().exp().matrix();
        fit.iterations = iter;
        if (!mu.allFinite()) break;
        // One Newton step past the tolerance drives the score to rounding
        // level, which matters when counts are large.
        if (fit.converged) break;
        if (change <= tol) fit.converged = true;
    }

    xtwx.noalias() = x.transpose() * mu.asDiagonal() * x;
    const Eigen::MatrixXd cov = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.coefficients = beta;
    fit.standard_errors = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.z_scores = beta.cwiseQuotient(fit.standard_errors);
    fit.p_values.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) fit.p_values(j) = normal_two_sided_p(fit.z_scores(j));
    fit.log_likelihood = ll;
    fit.max_abs_score = (x.transpose() * (y - mu)).cwiseAbs().maxCoeff();
    return fit;
}

PoissonFit fit_poisson(const RegressionSpec& spec, double tol, int max_iter) {
    return fit_poisson(spec.design, spec.response, spec.offset, spec.names, tol, max_iter);
}

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t needs at least two values per sample");
    auto moments = [](std::span<const double> v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
    };
    const auto [ma, sa] = moments(a);
    const auto [mb, sb] = moments(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = sa / na;
    const double vb = sb / nb;
    WelchResult r;
    r.mean_a = ma;
    r.mean_b = mb;
    if (va + vb == 0.0) {
        if (ma != mb) throw std::domain_error("welch_t: both samples are constant with different means");
        r.df = na + nb - 2.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = students_t_two_sided_p(r.t, r.df);
    return r;
}

int count_syllables(std::string_view word) {
    std::string w;
    for (char ch : word) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalpha(c)) w.push_back(static_cast<char>(std::tolower(c)));
    }
    auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y'; };
    int groups = 0;
    bool in_group = false;
    for (char c : w) {
        const bool v = vowel(c);
        if (v && !in_group) ++groups;
        in_group = v;
    }
    const bool ends_le = w.size() >= 2 && w.compare(w.size() - 2, 2, "le") == 0;
    if (!w.empty() && w.back() == 'e' && !ends_le) --groups;
    return std::max(groups, 1);
}

ReadabilityCounts readability_counts(std::string_view text) {
    ReadabilityCounts r;
    bool open_sentence = false;  // words seen since the last terminator
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_word_char(c)) {
            std::size_t j = i;
            bool has_alnum = false;
            while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) {
                has_alnum |= std::isalnum(static_cast<unsigned char>(text[j])) != 0;
                ++j;
            }
            if (has_alnum) {
                ++r.words;
                r.syllables += count_syllables(text.substr(i, j - i));
                open_sentence = true;
            }
            i = j;
        } else if (c == '.' || c == '!' || c == '?') {
            if (open_sentence) ++r.sentences;
            open_sentence = false;
            while (i < text.size() && (text[i] == '.' || text[i] == '!' || text[i] == '?')) ++i;
        } else {
            ++i;
        }
    }
    if (open_sentence) ++r.sentences;
    return r;
}

double flesch(std::string_view text) {
    const auto r = readability_counts(text);
    if (r.words == 0) throw std::invalid_argument("flesch: text has no words");
    const double words = r.words;
    return 206.835 - 1.015 * (words / r.sentences) - 84.6 * (r.syllables / words);
}

void Lexicon::add(std::string word, double score) {
    if (word.empty()) throw std::invalid_argument("lexicon word is empty");
    if (!std::isfinite(score)) throw std::invalid_argument("lexicon score for '" + word + "' is not finite");
    for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (!scores_.emplace(word, score).second) throw std::invalid_argument("duplicate lexicon word '" + word + "'");
}

std::optional<double> Lexicon::score(std::string_view word) const {
    auto it = scores_.find(std::string(word));
    if (it == scores_.end()) return std::nullopt;
    return it->second;
}

Lexicon parse_lexicon(std::string_view text) {
    Lexicon lex;
    int line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto parts = split(line, ',');
        try {
            if (parts.size() != 2) throw std::invalid_argument("expected word,score");
            lex.add(parts[0], parse_double(parts[1]));
        } catch (const std::exception& e) {
            throw std::invalid_argument("lexicon line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file(path)); }

const Lexicon& demo_lexicon() {
    // Illustrative scores on a 0-9 style scale; not taken from any published lexicon.
    static const Lexicon lex = parse_lexicon(
        "amazing,7.4\nawful,6.9\nhate,7.0\nlove,7.5\nstupid,5.8\ndisgusting,7.2\nterrible,6.5\n"
        "wonderful,6.9\npathetic,6.0\nidiot,5.5\ngreat,5.1\nbad,3.9\ngood,3.2\nhelpful,2.3\n"
        "useful,2.1\nbeneficial,1.6\naccurate,1.4\npractical,1.3\nreasonable,1.2\ncorrect,1.0\n");
    return lex;
}

std::optional<double> emotionality(std::string_view text, const Lexicon& lexicon) {
    if (lexicon.empty()) throw std::invalid_argument("emotionality needs a non-empty lexicon");
    double sum = 0.0;
    int matched = 0;
    for (const auto& token : preprocess(text).tokens) {
        if (auto s = lexicon.score(token)) {
            sum += *s;
            ++matched;
        }
    }
    if (matched == 0) return std::nullopt;
    return sum / matched;
}

GroupEmotionality group_emotionality(std::span<const std::string> texts, const Lexicon& lexicon) {
    GroupEmotionality g;
    std::vector<double> scores;
    for (const auto& t : texts) {
        if (auto s = emotionality(t, lexicon))
            scores.push_back(*s);
        else
            ++g.unmatched;
    }
    g.matched = scores.size();
    if (scores.empty()) return g;
    for (double s : scores) g.mean += s;
    g.mean /= static_cast<double>(scores.size());
    if (scores.size() > 1) {
        double ss = 0.0;
        for (double s : scores) ss += (s - g.mean) * (s - g.mean);
        g.sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
    }
    return g;
}

}  // namespace normwatch
