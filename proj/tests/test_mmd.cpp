#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include "mia/mmd.hpp"

using namespace mia;

namespace {

ProbVector random_prob_vector(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    ProbVector p(dim);
    double sum = 0.0;
    for (double& x : p) {
        x = u(rng);
        sum += x;
    }
    for (double& x : p) x /= sum;
    return p;
}

Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    Batch b;
    b.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.push_back(random_prob_vector(rng, dim));
    return b;
}

MmdConfig cfg_with(double sigma, NormMode mode = NormMode::UnsquaredNorm) {
    MmdConfig c;
    c.sigma = sigma;
    c.norm_mode = mode;
    return c;
}

} // namespace

TEST_CASE("gaussian kernel at zero distance is one") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 20; ++i) {
        const auto p = random_prob_vector(rng, 5);
        CHECK(gaussian_kernel(p, p, cfg_with(0.3 + i * 0.1)) == doctest::Approx(1.0));
    }
}

TEST_CASE("gaussian kernel hand-evaluated closed form") {
    // ||(1,0)-(0,1)|| = sqrt(2); exp(-sqrt(2)/2) with sigma = 1.
    const ProbVector p{1.0, 0.0}, q{0.0, 1.0};
    const double expected = std::exp(-std::sqrt(2.0) / 2.0);
    CHECK(gaussian_kernel(p, q, cfg_with(1.0)) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(gaussian_kernel(p, q, cfg_with(1.0)) == doctest::Approx(0.49306869).epsilon(1e-6));
    // Squared-norm variant: exp(-2/2) = 1/e.
    CHECK(gaussian_kernel(p, q, cfg_with(1.0, NormMode::SquaredNorm)) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("gaussian kernel symmetry on random pairs") {
    std::mt19937_64 rng(2);
    const auto cfg = cfg_with(0.7);
    for (int i = 0; i < 100; ++i) {
        const auto p = random_prob_vector(rng, 6);
        const auto q = random_prob_vector(rng, 6);
        CHECK(gaussian_kernel(p, q, cfg) == gaussian_kernel(q, p, cfg));
    }
}

TEST_CASE("gaussian kernel bounds and equality condition") {
    std::mt19937_64 rng(3);
    const auto cfg = cfg_with(0.5);
    for (int i = 0; i < 100; ++i) {
        const auto p = random_prob_vector(rng, 4);
        const auto q = random_prob_vector(rng, 4);
        const double k = gaussian_kernel(p, q, cfg);
        CHECK(k > 0.0);
        CHECK(k <= 1.0);
        if (p != q) CHECK(k < 1.0);
    }
}

TEST_CASE("gaussian kernel dimension mismatch") {
    CHECK_THROWS_AS(gaussian_kernel({0.5, 0.5}, {0.2, 0.3, 0.5}, cfg_with(1.0)),
                    DimensionError);
    CHECK_THROWS_AS(vector_distance({0.5, 0.5}, {1.0, 0.0, 0.0}), DimensionError);
}

TEST_CASE("gaussian kernel requires positive sigma") {
    CHECK_THROWS_AS(gaussian_kernel({0.5, 0.5}, {1.0, 0.0}, MmdConfig{}), ConfigError);
    CHECK_THROWS_AS(gaussian_kernel({0.5, 0.5}, {1.0, 0.0}, cfg_with(-1.0)), ConfigError);
}

TEST_CASE("mmd of identical batches is zero") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i) {
        const auto a = random_batch(rng, 3 + i, 4);
        CHECK(mmd(a, a, cfg_with(0.8)) <= 1e-9);
        CHECK(mmd_brute_oracle(a, a, cfg_with(0.8)) <= 1e-9);
    }
}

TEST_CASE("mmd symmetry on random batch pairs") {
    std::mt19937_64 rng(5);
    const auto cfg = cfg_with(0.6);
    for (int i = 0; i < 50; ++i) {
        const auto a = random_batch(rng, 2 + i % 7, 5);
        const auto b = random_batch(rng, 3 + i % 5, 5);
        CHECK(mmd(a, b, cfg) == doctest::Approx(mmd(b, a, cfg)).epsilon(1e-12));
    }
}

TEST_CASE("mmd equals the brute oracle on random batches, both norm modes") {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<std::size_t> size_d(1, 20), dim_d(2, 10);
    for (int i = 0; i < 200; ++i) {
        const std::size_t dim = dim_d(rng);
        const auto a = random_batch(rng, size_d(rng), dim);
        const auto b = random_batch(rng, size_d(rng), dim);
        const auto mode = i % 2 == 0 ? NormMode::UnsquaredNorm : NormMode::SquaredNorm;
        auto cfg = cfg_with(0.2 + 0.01 * i, mode);
        CHECK(std::abs(mmd(a, b, cfg) - mmd_brute_oracle(a, b, cfg)) <= 1e-9);
        // Median-heuristic path must agree too.
        MmdConfig heur;
        heur.norm_mode = mode;
        CHECK(std::abs(mmd(a, b, heur) - mmd_brute_oracle(a, b, heur)) <= 1e-9);
    }
}

TEST_CASE("mmd is nonnegative") {
    std::mt19937_64 rng(7);
    const auto cfg = cfg_with(1.1);
    for (int i = 0; i < 50; ++i)
        CHECK(mmd(random_batch(rng, 4, 3), random_batch(rng, 6, 3), cfg) >= 0.0);
}

TEST_CASE("brute oracle closed form for single-element batches") {
    std::mt19937_64 rng(8);
    const auto cfg = cfg_with(0.9);
    for (int i = 0; i < 20; ++i) {
        const auto p = random_prob_vector(rng, 5);
        const auto q = random_prob_vector(rng, 5);
        const double k = gaussian_kernel(p, q, cfg);
        const double expected = std::sqrt(2.0 - 2.0 * k);
        CHECK(mmd_brute_oracle({p}, {q}, cfg) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("mmd errors") {
    const auto cfg = cfg_with(1.0);
    CHECK_THROWS_AS(mmd({}, {{0.5, 0.5}}, cfg), EmptyBatchError);
    CHECK_THROWS_AS(mmd({{0.5, 0.5}}, {}, cfg), EmptyBatchError);
    CHECK_THROWS_AS(mmd({{0.5, 0.5}}, {{0.2, 0.3, 0.5}}, cfg), DimensionError);
}

TEST_CASE("embedding sum distance equals n times mmd for balanced batches") {
    std::mt19937_64 rng(9);
    const auto cfg = cfg_with(0.8);
    for (std::size_t n : {1, 4, 10}) {
        const auto a = random_batch(rng, n, 4);
        const auto b = random_batch(rng, n, 4);
        CHECK(embedding_sum_distance(a, b, cfg) ==
              doctest::Approx(static_cast<double>(n) * mmd(a, b, cfg)).epsilon(1e-9));
    }
}

TEST_CASE("group_mmds counts and block pairing") {
    std::mt19937_64 rng(10);
    const auto cfg = cfg_with(0.7);

    SUBCASE("n=40, eta=10 gives exactly 2 groups") {
        const auto high = random_batch(rng, 20, 3);
        const auto low = random_batch(rng, 20, 3);
        CHECK(group_mmds(high, low, 10, cfg).size() == 2);
    }
    SUBCASE("identical blocks give zero everywhere") {
        const auto high = random_batch(rng, 30, 3);
        const auto vals = group_mmds(high, high, 10, cfg);
        for (double v : vals) CHECK(v <= 1e-9);
    }
    SUBCASE("eta must divide the side size") {
        const auto high = random_batch(rng, 20, 3);
        const auto low = random_batch(rng, 20, 3);
        CHECK_THROWS_AS(group_mmds(high, low, 7, cfg), PartitionError);
        CHECK_THROWS_AS(group_mmds(high, random_batch(rng, 10, 3), 5, cfg), PartitionError);
    }
    SUBCASE("each group equals an independent brute-oracle recomputation") {
        const std::size_t eta = 5;
        const auto high = random_batch(rng, 25, 4);
        const auto low = random_batch(rng, 25, 4);
        const auto vals = group_mmds(high, low, eta, cfg);
        REQUIRE(vals.size() == 5);
        for (std::size_t g = 0; g < vals.size(); ++g) {
            Batch h(high.begin() + static_cast<std::ptrdiff_t>(g * eta),
                    high.begin() + static_cast<std::ptrdiff_t>((g + 1) * eta));
            Batch l(low.begin() + static_cast<std::ptrdiff_t>(g * eta),
                    low.begin() + static_cast<std::ptrdiff_t>((g + 1) * eta));
            CHECK(std::abs(vals[g] - mmd_brute_oracle(h, l, cfg)) <= 1e-9);
        }
    }
    SUBCASE("deterministic for fixed input order") {
        const auto high = random_batch(rng, 20, 3);
        const auto low = random_batch(rng, 20, 3);
        CHECK(group_mmds(high, low, 10, cfg) == group_mmds(high, low, 10, cfg));
    }
}

TEST_CASE("median heuristic is positive and scale-sensible") {
    std::mt19937_64 rng(11);
    const auto a = random_batch(rng, 10, 4);
    const auto b = random_batch(rng, 10, 4);
    const double med = median_heuristic_sigma(a, b, NormMode::UnsquaredNorm);
    CHECK(med > 0.0);
    // Degenerate union of identical points falls back to 1.
    const Batch same(8, a.front());
    CHECK(median_heuristic_sigma(same, same, NormMode::UnsquaredNorm) == 1.0);
}

TEST_CASE("validate_prob_vector") {
    CHECK_NOTHROW(validate_prob_vector({0.25, 0.25, 0.5}));
    CHECK_THROWS(validate_prob_vector({0.5, 0.6}));
    CHECK_THROWS(validate_prob_vector({-0.1, 1.1}));
    CHECK_THROWS_AS(validate_prob_vector({}), DimensionError);
}

TEST_CASE("mmd is safe to call concurrently") {
    std::mt19937_64 rng(12);
    const auto a = random_batch(rng, 8, 4);
    const auto b = random_batch(rng, 8, 4);
    const auto cfg = cfg_with(0.8);
    const double expected = mmd(a, b, cfg);
    std::vector<std::thread> threads;
    std::vector<double> results(8, -1.0);
    for (std::size_t t = 0; t < results.size(); ++t)
        threads.emplace_back([&, t] { results[t] = mmd(a, b, cfg); });
    for (auto& th : threads) th.join();
    for (double r : results) CHECK(r == expected);
}
