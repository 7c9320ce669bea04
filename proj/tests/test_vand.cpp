#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vand/error.hpp"
#include "vand/vand.hpp"

using namespace vand;

TEST_CASE("transform_scale value and straight-through gradient") {
    Tape tape;
    Value s = tape.variable(Tensor({4}, {0.0, -20.0, 1.5, -0.3}));
    Value sigma = transform_scale(s);

    CHECK(sigma.val()[0] == doctest::Approx(0.6931471805599453).epsilon(1e-16));
    CHECK(sigma.val()[1] == doctest::Approx(2.0611536181902037e-9).epsilon(1e-12));
    // forward equals softplus of the raw parameter to the last bit
    for (int j = 0; j < 4; ++j) {
        const double x = s.val()[j];
        const double sp = (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
        CHECK(std::fabs(sigma.val()[j] - sp) <= 1e-15);
    }

    auto grads = tape.backward(reduce_sum(sigma));
    for (int j = 0; j < 4; ++j) CHECK(grads.at(s.id())[j] == 1.0);
}

TEST_CASE("transform_ratio value and straight-through gradient") {
    Tape tape;
    Value b = tape.variable(Tensor({3}, {0.0, 10.0, -2.0}));
    Value beta = transform_ratio(b);

    CHECK(beta.val()[0] == 0.5);
    CHECK(beta.val()[1] == doctest::Approx(0.9999546021312976).epsilon(1e-14));
    for (int j = 0; j < 3; ++j) {
        CHECK(beta.val()[j] > 0.0);
        CHECK(beta.val()[j] < 1.0);
    }

    auto grads = tape.backward(reduce_sum(beta));
    for (int j = 0; j < 3; ++j) CHECK(grads.at(b.id())[j] == 1.0);
}

TEST_CASE("sample_noise basics") {
    SUBCASE("zero scale gives exactly zero noise") {
        Tape tape;
        RandomStream rng(3);
        Value sigma = tape.constant(Tensor::zeros({4}));
        Value eps = sample_noise(sigma, 16, rng);
        for (int64_t i = 0; i < eps.val().numel(); ++i) CHECK(eps.val()[i] == 0.0);
    }
    SUBCASE("same seed reproduces the draw") {
        Tape tape;
        Value sigma = tape.constant(Tensor::full({4}, 0.3));
        RandomStream r1(11), r2(11);
        Value e1 = sample_noise(sigma, 8, r1);
        Value e2 = sample_noise(sigma, 8, r2);
        CHECK(test_util::bitwise_equal(e1.val(), e2.val()));
    }
    SUBCASE("scaling sigma by 2 scales the noise exactly") {
        Tape tape;
        Value s1 = tape.constant(Tensor::full({4}, 0.3));
        Value s2 = tape.constant(Tensor::full({4}, 0.6));
        RandomStream r1(11), r2(11);
        Value e1 = sample_noise(s1, 8, r1);
        Value e2 = sample_noise(s2, 8, r2);
        for (int64_t i = 0; i < e1.val().numel(); ++i) CHECK(e2.val()[i] == 2.0 * e1.val()[i]);
    }
}

TEST_CASE("sample_noise empirical stddev within the chi-distribution interval") {
    const int n = 100000;
    const double sigma_true = 0.3;
    Tape tape;
    RandomStream rng(17);
    Value sigma = tape.constant(Tensor::full({4}, sigma_true));
    Value eps = sample_noise(sigma, n, rng);
    const double tol = 3.0 * sigma_true / std::sqrt(2.0 * n);
    for (int j = 0; j < 4; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = eps.val().at(i, j);
            acc += v * v;
        }
        const double sd = std::sqrt(acc / n);
        CHECK(std::fabs(sd - sigma_true) < tol);
    }
}

TEST_CASE("sample_noise gradient matches finite differences on frozen draws") {
    // the draw is re-created from a fixed seed inside f, so central differences
    // see the same zeta on every evaluation
    const Tensor sigma0({3}, {0.2, 0.5, 0.9});
    const double rel = grad_check(
        [](Tape&, Value s) {
            RandomStream rng(1234);
            return reduce_sum(square(sample_noise(s, 6, rng)));
        },
        sigma0, 1e-6);
    CHECK(rel < 1e-6);
}

TEST_CASE("sample_mask forward values and degenerate limits") {
    Tape tape;
    RandomStream rng(7);
    SUBCASE("values are exactly zero or one") {
        Value beta = tape.constant(Tensor::full({5}, 0.4));
        Value m = sample_mask(beta, 32, rng);
        for (int64_t i = 0; i < m.val().numel(); ++i) {
            CHECK((m.val()[i] == 0.0 || m.val()[i] == 1.0));
        }
    }
    SUBCASE("beta = 0 never drops") {
        Value beta = tape.constant(Tensor::zeros({5}));
        Value m = sample_mask(beta, 64, rng);
        for (int64_t i = 0; i < m.val().numel(); ++i) CHECK(m.val()[i] == 0.0);
    }
    SUBCASE("beta = 1 always resets") {
        Value beta = tape.constant(Tensor::full({5}, 1.0));
        Value m = sample_mask(beta, 64, rng);
        for (int64_t i = 0; i < m.val().numel(); ++i) CHECK(m.val()[i] == 1.0);
    }
}

TEST_CASE("sample_mask empirical rate within the binomial interval") {
    const int n = 10000;
    const double beta_true = 0.25;
    Tape tape;
    RandomStream rng(23);
    Value beta = tape.constant(Tensor::full({4}, beta_true));
    Value m = sample_mask(beta, n, rng);
    const double tol = 3.0 * std::sqrt(beta_true * (1.0 - beta_true) / n);
    for (int j = 0; j < 4; ++j) {
        double ones = 0.0;
        for (int i = 0; i < n; ++i) ones += m.val().at(i, j);
        CHECK(std::fabs(ones / n - beta_true) < tol);
    }
}

TEST_CASE("straight-through gradient equals the m := beta substitution") {
    // linear toy loss: L = sum(w ⊙ m). Substituting m := beta and
    // differentiating analytically gives dL/dbeta_j = sum over rows of w.
    const int rows = 6, h = 3;
    RandomStream wrng(31);
    Tensor w({rows, h});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = 2.0 * wrng.uniform() - 1.0;

    Tape tape;
    RandomStream rng(5);
    Value beta = tape.variable(Tensor({h}, {0.2, 0.5, 0.8}));
    Value m = sample_mask(beta, rows, rng);
    Value loss = reduce_sum(mul(m, tape.constant(w)));
    auto grads = tape.backward(loss);
    for (int j = 0; j < h; ++j) {
        double expected = 0.0;
        for (int i = 0; i < rows; ++i) expected += w.at(i, j);
        CHECK(grads.at(beta.id())[j] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("effective_params condition matrix") {
    const int h = 4;
    VandLayerParams params = make_vand_params(h, "test");

    auto eff_for = [&](VandKind kind, Tape& tape) {
        VandModeSpec spec;
        spec.kind = kind;
        return effective_params(tape, params, spec, Phase::train);
    };

    SUBCASE("vanilla: zeros, nothing learnable, no sampling") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::vanilla, tape);
        for (int j = 0; j < h; ++j) {
            CHECK(eff.sigma_eff.val()[j] == 0.0);
            CHECK(eff.beta_eff.val()[j] == 0.0);
        }
        CHECK_FALSE(eff.sigma_learnable);
        CHECK_FALSE(eff.beta_learnable);
        CHECK_FALSE(eff.has_noise);
        CHECK_FALSE(eff.has_mask);
    }
    SUBCASE("const_noise: fixed 1e-2 scale, beta zero") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::const_noise, tape);
        for (int j = 0; j < h; ++j) {
            CHECK(eff.sigma_eff.val()[j] == 1e-2);
            CHECK(eff.beta_eff.val()[j] == 0.0);
        }
        CHECK(eff.has_noise);
        CHECK_FALSE(eff.has_mask);
        CHECK_FALSE(eff.sigma_learnable);
    }
    SUBCASE("const_dropout: fixed 1e-2 ratio") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::const_dropout, tape);
        for (int j = 0; j < h; ++j) CHECK(eff.beta_eff.val()[j] == 1e-2);
        CHECK(eff.has_mask);
        CHECK_FALSE(eff.has_noise);
    }
    SUBCASE("var_noise: transformed sigma is learnable, mask absent") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::var_noise, tape);
        CHECK(eff.sigma_learnable);
        CHECK_FALSE(eff.beta_learnable);
        CHECK(eff.has_noise);
        CHECK_FALSE(eff.has_mask);
        CHECK(eff.sigma_eff.val()[0] == doctest::Approx(0.6931471805599453));
    }
    SUBCASE("var_dropout: transformed beta is learnable, noise absent") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::var_dropout, tape);
        CHECK_FALSE(eff.sigma_learnable);
        CHECK(eff.beta_learnable);
        CHECK(eff.beta_eff.val()[0] == 0.5);
    }
    SUBCASE("vand at initialization: softplus(0) and sigmoid(0)") {
        Tape tape;
        EffectiveVand eff = eff_for(VandKind::vand, tape);
        CHECK(eff.sigma_learnable);
        CHECK(eff.beta_learnable);
        CHECK(eff.has_noise);
        CHECK(eff.has_mask);
        for (int j = 0; j < h; ++j) {
            CHECK(eff.sigma_eff.val()[j] == doctest::Approx(0.6931471805599453).epsilon(1e-15));
            CHECK(eff.beta_eff.val()[j] == 0.5);
        }
    }
}

TEST_CASE("mode names round-trip and reject junk") {
    CHECK(mode_from_string("vand") == VandKind::vand);
    CHECK(mode_from_string("const_dropout") == VandKind::const_dropout);
    CHECK_THROWS_AS((void)mode_from_string("Vand"), ValueError);
    CHECK(std::string(to_string(VandKind::var_noise)) == "var_noise");
}
