#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "emorank/error.h"
#include "emorank/graph.h"
#include "emorank/losses.h"
#include "emorank/mixup.h"
#include "support.h"

using namespace emorank;
using testing::random_tensor;

TEST_CASE("lambda draws are uniform on (0,1)") {
    std::mt19937_64 rng(21);
    const std::size_t n = 100000;
    std::vector<double> xs;
    xs.reserve(n);
    for (std::size_t i = 0; i < n / 2; ++i) {
        const auto [a, b] = sample_lambdas(rng);
        CHECK(a > 0.0);
        CHECK(a < 1.0);
        CHECK(b > 0.0);
        CHECK(b < 1.0);
        xs.push_back(a);
        xs.push_back(b);
    }
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= n;
    CHECK(std::abs(mean - 0.5) < 0.01);
    std::sort(xs.begin(), xs.end());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ks = std::max({ks, std::abs(double(i + 1) / n - xs[i]), std::abs(xs[i] - double(i) / n)});
    }
    CHECK(ks < 0.01);
}

TEST_CASE("lambda_diff mapping") {
    CHECK(lambda_diff(0.8, 0.3) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(lambda_diff(0.4, 0.4) == 0.5);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = u(rng), b = u(rng);
        CHECK(lambda_diff(a, b) + lambda_diff(b, a) == doctest::Approx(1.0).epsilon(1e-15));
        if (a > b) CHECK(lambda_diff(a, b) > 0.5);
        if (a < b) CHECK(lambda_diff(a, b) < 0.5);
    }
}

TEST_CASE("align_lengths crops contiguous windows") {
    std::mt19937_64 rng(2);
    const Tensor a = random_tensor({100, 4}, rng), b = random_tensor({60, 4}, rng);
    const AlignedPair p = align_lengths(a, b, rng);
    CHECK(p.emo.rows() == 60);
    CHECK(p.neu.rows() == 60);
    CHECK(p.neu_offset == 0);
    for (std::size_t t = 0; t < 60; ++t)
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(p.emo.at(t, c) == a.at(t + p.emo_offset, c));
            CHECK(p.neu.at(t, c) == b.at(t, c));
        }
    const Tensor c = random_tensor({30, 4}, rng);
    const AlignedPair q = align_lengths(c, c, rng);
    CHECK(q.emo.data == c.data);
    CHECK(q.emo_offset == 0);
}

TEST_CASE("mixup endpoints are exact and mixtures are convex") {
    std::mt19937_64 rng(3);
    const Tensor emo = random_tensor({12, 5}, rng), neu = random_tensor({12, 5}, rng);
    const AlignedPair ap{emo, neu, 0, 0};
    const MixPair p = make_mix_pair(ap, 1.0, 0.0, 2, 0);
    CHECK(p.x_mix_i.data == emo.data);
    CHECK(p.x_mix_j.data == neu.data);
    CHECK(p.lambda_diff == 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double l = u(rng);
        const Tensor m = mix(emo, neu, l);
        for (std::size_t k = 0; k < m.data.size(); ++k) {
            CHECK(m.data[k] >= std::min(emo.data[k], neu.data[k]));
            CHECK(m.data[k] <= std::max(emo.data[k], neu.data[k]));
        }
    }
}

TEST_CASE("make_mix_pair checks labels and is seed deterministic") {
    std::mt19937_64 rng(4);
    const Tensor emo = random_tensor({9, 3}, rng), neu = random_tensor({7, 3}, rng);
    CHECK_THROWS_AS(make_mix_pair(emo, 0, neu, 0, 0, rng), Error);
    CHECK_THROWS_AS(make_mix_pair(emo, 1, neu, 2, 0, rng), Error);
    std::mt19937_64 r1(8), r2(8);
    const MixPair a = make_mix_pair(emo, 1, neu, 0, 0, r1);
    const MixPair b = make_mix_pair(emo, 1, neu, 0, 0, r2);
    CHECK(a.x_mix_i.data == b.x_mix_i.data);
    CHECK(a.lambda_i == b.lambda_i);
    CHECK(a.x_mix_i.rows() == 7);
    CHECK(a.lambda_diff == doctest::Approx((a.lambda_i - a.lambda_j + 1.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("mixup cross entropy") {
    const std::vector<double> uniform(5, 0.3);
    CHECK(mixup_ce(uniform, uniform, 0.2, 0.9, 1, 0) == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-12));
    const std::vector<double> li{1.0, 0.0, 0.0}, lj{0.2, -0.4, 0.9};
    CHECK(mixup_ce(li, lj, 1.0, 1.0, 0, 1) ==
          doctest::Approx(cross_entropy(li, 0) + cross_entropy(lj, 0)).epsilon(1e-12));
    const double ce0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
    const double ce1 = -std::log(1.0 / (std::exp(1.0) + 2.0));
    CHECK(ce0 == doctest::Approx(0.5514).epsilon(1e-4));
    const double term_i = 0.6 * ce0 + 0.4 * ce1;
    CHECK(term_i == doctest::Approx(0.9514).epsilon(1e-4));
    const double full = mixup_ce(li, lj, 0.6, 0.3, 0, 1);
    CHECK(full == doctest::Approx(term_i + 0.3 * cross_entropy(lj, 0) + 0.7 * cross_entropy(lj, 1)).epsilon(1e-12));
    std::vector<double> si = li, sj = lj;
    for (auto& v : si) v += 37.5;
    for (auto& v : sj) v -= 12.25;
    CHECK(std::abs(mixup_ce(si, sj, 0.6, 0.3, 0, 1) - full) < 1e-6);
}

TEST_CASE("pair probability and rank loss") {
    CHECK(pair_probability(1.3, 1.3) == 0.5);
    CHECK(pair_probability(std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(pair_probability(800.0, -800.0) == 1.0);
    CHECK(std::isfinite(rank_loss(pair_probability(800.0, -800.0), 0.0)));
    CHECK(std::abs(rank_loss(0.5, 0.5) - std::log(2.0)) < 1e-9);
    CHECK(rank_loss(1.0 - 1e-12, 1.0) < 1e-6);
    double best = 1e9, best_p = 0.0;
    for (int k = 2; k <= 18; ++k) {
        const double l = rank_loss(k * 0.05, 0.75);
        if (l < best) best = l, best_p = k * 0.05;
    }
    CHECK(best_p == doctest::Approx(0.75).epsilon(1e-12));
    for (int k = 1; k < 100; ++k) CHECK(rank_loss(k / 100.0, 0.75) >= rank_loss(0.75, 0.75) - 1e-15);
    CHECK(rank_loss(0.75, 0.75) < rank_loss(0.7, 0.75));
    CHECK(rank_loss(0.75, 0.75) < rank_loss(0.8, 0.75));
}

TEST_CASE("rank loss gradient sign follows p - lambda_diff") {
    for (double d : {-2.0, -0.3, 0.0, 0.4, 1.5}) {
        for (double t : {0.1, 0.5, 0.9}) {
            Graph g;
            const Tensor ri = Tensor::scalar(d), rj = Tensor::scalar(0.0);
            const Var vi = g.param(ri);
            const Var vj = g.param(rj);
            g.backward(graph_loss::rank_loss(g, graph_loss::pair_probability(g, vi, vj), t));
            const double p = pair_probability(d, 0.0);
            const double gi = g.grad(vi).data[0];
            CHECK(gi == doctest::Approx(p - t).epsilon(1e-9));
            CHECK(g.grad(vj).data[0] == doctest::Approx(t - p).epsilon(1e-9));
        }
    }
}

TEST_CASE("total loss") {
    const LossWeights w;
    CHECK(total_loss(2.0, 0.5, w) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(total_loss(2.0, 0.5, LossWeights{0.0, 1.0}) == 0.5);
    CHECK(total_loss(2.0, 1.0, w) - total_loss(2.0, 0.5, w) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(LossWeights({0.0, 0.0}).validate(), Error);
    CHECK_THROWS_AS(LossWeights({-1.0, 1.0}).validate(), Error);
}

TEST_CASE("graph losses agree with scalar losses") {
    std::mt19937_64 rng(6);
    const Tensor li = random_tensor({4}, rng), lj = random_tensor({4}, rng);
    Graph g;
    const Var m = graph_loss::mixup_ce(g, g.constant(li), g.constant(lj), 0.3, 0.8, 2, 0);
    CHECK(g.value(m).data[0] == doctest::Approx(mixup_ce(li.data, lj.data, 0.3, 0.8, 2, 0)).epsilon(1e-12));
    const Var p = graph_loss::pair_probability(g, g.constant(Tensor::scalar(0.7)), g.constant(Tensor::scalar(-0.2)));
    CHECK(g.value(p).data[0] == doctest::Approx(pair_probability(0.7, -0.2)).epsilon(1e-15));
    const Var r = graph_loss::rank_loss(g, p, 0.35);
    CHECK(g.value(r).data[0] == doctest::Approx(rank_loss(pair_probability(0.7, -0.2), 0.35)).epsilon(1e-12));
}
