#include <doctest.h>

#include <array>
#include <numeric>
#include <vector>

#include "gof.hpp"
#include "normwatch/rng.hpp"
#include "normwatch/special.hpp"

using namespace normwatch;

TEST_CASE("streams are deterministic and distinct") {
    auto a = Rng::stream(42, {1, 2});
    auto b = Rng::stream(42, {1, 2});
    auto c = Rng::stream(42, {2, 1});
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs |= x != c.next();
    }
    CHECK(differs);
}

TEST_CASE("generator output is pinned") {
    // Any change here breaks cross-run reproducibility of stored results.
    Rng rng(0);
    const auto first = rng.next();
    Rng again(0);
    CHECK(again.next() == first);
    CHECK(stable_hash("") == 0xcbf29ce484222325ULL);
    CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("uniform and below stay in range") {
    Rng rng(7);
    std::array<int, 7> hist{};
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const auto k = rng.below(7);
        REQUIRE(k < 7);
        ++hist[k];
    }
    std::vector<std::int64_t> observed(hist.begin(), hist.end());
    const auto gof = testing::chi_square_gof(observed, std::vector<double>(7, 1.0 / 7));
    CHECK(gof.p_value > 0.001);
    CHECK_THROWS(rng.below(0));
}

namespace {

void check_binomial(std::int64_t n, double p, std::uint64_t seed) {
    Rng rng(seed);
    const int draws = 20000;
    std::vector<std::int64_t> observed(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < draws; ++i) {
        const auto k = rng.binomial(n, p);
        REQUIRE(k >= 0);
        REQUIRE(k <= n);
        ++observed[static_cast<std::size_t>(k)];
    }
    std::vector<double> probs(static_cast<std::size_t>(n) + 1);
    for (std::int64_t k = 0; k <= n; ++k) probs[static_cast<std::size_t>(k)] = testing::binomial_pmf(n, p, k);
    const auto gof = testing::chi_square_gof(observed, probs);
    INFO("n=" << n << " p=" << p << " chi2=" << gof.statistic << " df=" << gof.df);
    CHECK(gof.p_value > 0.001);
}

}  // namespace

TEST_CASE("binomial matches the exact pmf in both sampling regimes") {
    check_binomial(50, 0.05, 1);    // inversion
    check_binomial(32, 6.0 / 32, 2);
    check_binomial(1000, 0.3, 3);   // transformed rejection
    check_binomial(200, 0.25, 4);
    check_binomial(60, 0.9, 5);     // reflected
}

TEST_CASE("binomial edge cases and large-n moments") {
    Rng rng(11);
    CHECK(rng.binomial(0, 0.3) == 0);
    CHECK(rng.binomial(10, 0.0) == 0);
    CHECK(rng.binomial(10, 1.0) == 10);
    CHECK_THROWS(rng.binomial(-1, 0.5));
    CHECK_THROWS(rng.binomial(5, 1.5));

    const std::int64_t n = 5296900;
    const double p = 0.0595;
    double sum = 0.0, sumsq = 0.0;
    const int draws = 4000;
    for (int i = 0; i < draws; ++i) {
        const double k = static_cast<double>(rng.binomial(n, p));
        sum += k;
        sumsq += k * k;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    const double expected_var = n * p * (1 - p);
    CHECK(std::abs(mean - n * p) < 5 * std::sqrt(expected_var / draws));
    CHECK(var == doctest::Approx(expected_var).epsilon(0.1));
}

TEST_CASE("multinomial counts sum to n and follow the weights") {
    Rng rng(5);
    const std::vector<std::int64_t> weights{1, 0, 3, 6};
    std::vector<std::int64_t> counts(4);
    std::vector<double> totals(4, 0.0);
    for (int i = 0; i < 2000; ++i) {
        rng.multinomial(100, weights, counts);
        CHECK(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}) == 100);
        CHECK(counts[1] == 0);
        for (int j = 0; j < 4; ++j) totals[j] += static_cast<double>(counts[j]);
    }
    CHECK(totals[0] / 2000 == doctest::Approx(10).epsilon(0.05));
    CHECK(totals[2] / 2000 == doctest::Approx(30).epsilon(0.03));
    CHECK(totals[3] / 2000 == doctest::Approx(60).epsilon(0.02));
}

TEST_CASE("special functions match reference values") {
    // Reference values from scipy.special / scipy.stats.
    CHECK(incomplete_beta(2, 3, 0.4) == doctest::Approx(0.52479999999999993).epsilon(1e-12));
    CHECK(incomplete_beta(0.5, 0.5, 0.9) == doctest::Approx(0.79516723530086653).epsilon(1e-12));
    CHECK(incomplete_beta(10, 20, 0.2) == doctest::Approx(0.049263517304212585).epsilon(1e-12));
    CHECK(incomplete_gamma_p(3, 2) == doctest::Approx(0.32332358381693654).epsilon(1e-12));
    CHECK(incomplete_gamma_q(7.5, 12) == doctest::Approx(0.065093486398830544).epsilon(1e-12));
    CHECK(students_t_two_sided_p(2.1, 5) == doctest::Approx(0.089753249884598679).epsilon(1e-10));
    CHECK(students_t_two_sided_p(-1.224744871391589, 4) ==
          doctest::Approx(0.28786413472669081).epsilon(1e-10));
    CHECK(chi_square_sf(15.3, 7) == doctest::Approx(0.03234045934430721).epsilon(1e-10));
    CHECK(normal_two_sided_p(1.96) == doctest::Approx(0.04999579029644087).epsilon(1e-12));
    CHECK(students_t_two_sided_p(0.0, 3) == doctest::Approx(1.0));
}
