#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "lad/core/io.hpp"
#include "lad/core/nn.hpp"
#include "lad/core/rng.hpp"
#include "lad/core/tape.hpp"

using namespace lad;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& x : t.v) x = static_cast<float>(rng.normal() * scale);
    return t;
}

// Central finite differences on the scalar loss built by `build`, probed at a
// subset of indices of p. Forward passes run with recording off so the check
// exercises exactly the inference path the backward pass must match.
void check_grad(const std::function<Var(Tape&)>& build, const Var& p, double h = 1e-2, double tol = 2e-2,
                int max_probes = 24) {
    p->zero_grad();  // leaf grads persist across tapes (batch accumulation), clear before measuring
    Tape tp;
    Var loss = build(tp);
    tp.backward(loss);
    ASSERT_TRUE(p->has_grad());
    Tensor grad = p->grad;

    const i64 n = p->val.numel();
    const i64 step = std::max<i64>(1, n / max_probes);
    for (i64 idx = 0; idx < n; idx += step) {
        const float orig = p->val.v[static_cast<size_t>(idx)];
        Tape t1;
        t1.recording = false;
        p->val.v[static_cast<size_t>(idx)] = orig + static_cast<float>(h);
        const double fp = build(t1)->val.v[0];
        Tape t2;
        t2.recording = false;
        p->val.v[static_cast<size_t>(idx)] = orig - static_cast<float>(h);
        const double fm = build(t2)->val.v[0];
        p->val.v[static_cast<size_t>(idx)] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double got = grad.v[static_cast<size_t>(idx)];
        EXPECT_NEAR(got, fd, tol * std::max(1.0, std::fabs(fd))) << "index " << idx;
    }
}

}  // namespace

TEST(Rng, DeterministicAndSerializable) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

    Rng c(7);
    for (int i = 0; i < 10; ++i) c.normal();
    auto st = c.state();
    std::string s = io::rng_state_str(c);
    Rng d = io::rng_from_state_str(s);
    EXPECT_EQ(d.state(), st);
    for (int i = 0; i < 20; ++i) EXPECT_DOUBLE_EQ(c.normal(), d.normal());
}

TEST(Rng, SubstreamsAreIndependent) {
    EXPECT_NE(substream_seed(1, "codec"), substream_seed(1, "diffusion"));
    EXPECT_NE(substream_seed(1, "codec"), substream_seed(2, "codec"));
    EXPECT_EQ(substream_seed(1, "codec"), substream_seed(1, "codec"));
    EXPECT_NE(substream_seed(1, "aug", 0), substream_seed(1, "aug", 1));
}

TEST(Rng, NormalMoments) {
    Rng r(3);
    double sum = 0, sum2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        sum += x;
        sum2 += x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sum2 / n, 1.0, 0.02);
}

TEST(Autograd, ElementwiseOps) {
    Rng rng(1);
    Var a = make_leaf(random_tensor({3, 2, 2, 2}, rng), true);
    Var b = make_leaf(random_tensor({3, 2, 2, 2}, rng), true);

    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::mul(tp, a, b)); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::mul(tp, a, b)); }, b);
    check_grad([&](Tape& tp) { return ops::sum_all(tp, ops::square(tp, ops::sub(tp, a, b))); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::silu(tp, a)); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::sigmoid(tp, a)); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::tanh_op(tp, a)); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::leaky_relu(tp, a)); }, a);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::affine(tp, a, 2.5f, -1.0f)); }, a);
    check_grad([&](Tape& tp) { return ops::mse(tp, a, b); }, a);
}

TEST(Autograd, AbsAwayFromKink) {
    Rng rng(2);
    Tensor av = random_tensor({4, 2, 2, 2}, rng);
    for (auto& x : av.v) x += (x >= 0 ? 0.5f : -0.5f);  // keep |x| > 0.4 so FD never crosses the kink
    Var a = make_leaf(av, true);
    check_grad([&](Tape& tp) { return ops::mean_all(tp, ops::abs_op(tp, a)); }, a, 1e-3, 1e-2);
}

TEST(Autograd, DetachBlocksGradient) {
    Rng rng(3);
    Var a = make_leaf(random_tensor({2, 2, 2, 2}, rng), true);
    Tape tp;
    Var loss = ops::mean_all(tp, ops::mul(tp, ops::detach(tp, a), a));
    tp.backward(loss);
    // grad should be exactly a's values / n (one factor detached), not 2a/n
    const float n = static_cast<float>(a->val.numel());
    for (i64 i = 0; i < a->val.numel(); ++i)
        EXPECT_FLOAT_EQ(a->grad.v[static_cast<size_t>(i)], a->val.v[static_cast<size_t>(i)] / n);
}

TEST(Autograd, Conv3dGradients) {
    Rng rng(4);
    Var x = make_leaf(random_tensor({2, 4, 5, 6}, rng), true);
    Var w = make_leaf(random_tensor({3, 2, 3, 3, 3}, rng, 0.3), true);
    Var b = make_leaf(random_tensor({3}, rng, 0.1), true);

    auto build_s1 = [&](Tape& tp) { return ops::mean_all(tp, ops::square(tp, ops::conv3d(tp, x, w, b, 1, 1))); };
    check_grad(build_s1, x);
    check_grad(build_s1, w);
    check_grad(build_s1, b);

    auto build_s2 = [&](Tape& tp) { return ops::mean_all(tp, ops::square(tp, ops::conv3d(tp, x, w, b, 2, 1))); };
    check_grad(build_s2, x);
    check_grad(build_s2, w);
    check_grad(build_s2, b);
}

TEST(Autograd, ConvT3dGradients) {
    Rng rng(5);
    Var x = make_leaf(random_tensor({3, 3, 4, 4}, rng), true);
    Var w = make_leaf(random_tensor({3, 2, 4, 4, 4}, rng, 0.2), true);
    Var b = make_leaf(random_tensor({2}, rng, 0.1), true);

    auto build = [&](Tape& tp) { return ops::mean_all(tp, ops::square(tp, ops::convT3d(tp, x, w, b, 2, 1))); };
    check_grad(build, x);
    check_grad(build, w);
    check_grad(build, b);
}

TEST(Autograd, ConvT3dUpsamplesShape) {
    Rng rng(6);
    Var x = make_leaf(random_tensor({3, 4, 8, 8}, rng), false);
    Var w = make_leaf(random_tensor({3, 2, 4, 4, 4}, rng, 0.2), false);
    Tape tp;
    Var y = ops::convT3d(tp, x, w, nullptr, 2, 1);
    EXPECT_EQ(y->val.shape, (std::vector<int>{2, 8, 16, 16}));
}

TEST(Autograd, LinearGradients) {
    Rng rng(7);
    Var x = make_leaf(random_tensor({6}, rng), true);
    Var w = make_leaf(random_tensor({4, 6}, rng, 0.4), true);
    Var b = make_leaf(random_tensor({4}, rng, 0.1), true);
    auto build = [&](Tape& tp) { return ops::mean_all(tp, ops::square(tp, ops::linear(tp, x, w, b))); };
    check_grad(build, x);
    check_grad(build, w);
    check_grad(build, b);
}

TEST(Autograd, GroupNormGradients) {
    Rng rng(8);
    Var x = make_leaf(random_tensor({4, 2, 3, 3}, rng), true);
    Var gamma = make_leaf(random_tensor({4}, rng, 0.3), true);
    Var beta = make_leaf(random_tensor({4}, rng, 0.3), true);
    for (auto& g : gamma->val.v) g += 1.0f;

    Var target = make_leaf(random_tensor({4, 2, 3, 3}, rng), false);
    auto build = [&](Tape& tp) { return ops::mse(tp, ops::group_norm(tp, x, gamma, beta, 2), target); };
    check_grad(build, x, 1e-2, 4e-2);
    check_grad(build, gamma, 1e-2, 4e-2);
    check_grad(build, beta, 1e-2, 4e-2);
}

TEST(Autograd, ConcatAndCropGradients) {
    Rng rng(9);
    Var a = make_leaf(random_tensor({2, 3, 4, 4}, rng), true);
    Var b = make_leaf(random_tensor({3, 3, 4, 4}, rng), true);
    auto build = [&](Tape& tp) {
        Var c = ops::concat_channels(tp, a, b);
        Var cr = ops::crop3d(tp, c, 1, 3, 0, 3, 1, 4);
        return ops::mean_all(tp, ops::square(tp, cr));
    };
    check_grad(build, a);
    check_grad(build, b);
}

TEST(Autograd, ChannelBiasAndPoolGradients) {
    Rng rng(10);
    Var x = make_leaf(random_tensor({3, 2, 2, 2}, rng), true);
    Var v = make_leaf(random_tensor({3}, rng), true);
    auto build = [&](Tape& tp) {
        return ops::mean_all(tp, ops::square(tp, ops::global_avg_pool(tp, ops::add_channel_bias(tp, x, v))));
    };
    check_grad(build, x);
    check_grad(build, v);
}

TEST(Autograd, CodebookLookupScattersGrads) {
    Rng rng(11);
    Var cb = make_leaf(random_tensor({5, 3}, rng), true);
    std::vector<int> idx = {0, 2, 2, 4, 1, 0, 3, 2};  // 2x2x2 grid
    auto build = [&](Tape& tp) { return ops::mean_all(tp, ops::square(tp, ops::codebook_lookup(tp, cb, idx, 2, 2, 2))); };
    check_grad(build, cb, 1e-2, 2e-2, 15);
}

TEST(Autograd, StraightThroughEstimator) {
    // value equals q bit-exactly, gradient passes to z unchanged and never to q
    Rng rng(12);
    Var z = make_leaf(random_tensor({2, 2, 2, 2}, rng), true);
    Var q = make_leaf(random_tensor({2, 2, 2, 2}, rng), true);
    Tape tp;
    Var st = ops::straight_through(tp, z, q);
    for (i64 i = 0; i < st->val.numel(); ++i)
        EXPECT_EQ(st->val.v[static_cast<size_t>(i)], q->val.v[static_cast<size_t>(i)]);
    Var loss = ops::sum_all(tp, st);
    tp.backward(loss);
    for (i64 i = 0; i < z->val.numel(); ++i) EXPECT_FLOAT_EQ(z->grad.v[static_cast<size_t>(i)], 1.0f);
    EXPECT_FALSE(q->has_grad());
}

TEST(Autograd, NoGradRecordsNothing) {
    Rng rng(13);
    Var x = make_leaf(random_tensor({2, 2, 2, 2}, rng), true);
    Tape tp;
    {
        NoGrad ng(tp);
        Var y = ops::mean_all(tp, ops::square(tp, x));
        EXPECT_FALSE(y->requires_grad);
    }
    EXPECT_TRUE(tp.order.empty());
    EXPECT_TRUE(tp.recording);
}

TEST(Adam, ConvergesOnQuadratic) {
    Var p = make_leaf(Tensor({4}, 5.0f), true);
    nn::Adam opt({p}, 0.1);
    for (int it = 0; it < 400; ++it) {
        Tape tp;
        Var loss = ops::mean_all(tp, ops::square(tp, p));
        tp.backward(loss);
        opt.step();
        opt.zero_grad();
    }
    for (float x : p->val.v) EXPECT_NEAR(x, 0.0f, 1e-2);
}

TEST(ParamIo, RoundTripAndMismatchDetection) {
    Rng rng(14);
    nn::Conv3d conv(2, 3, 3, 1, 1, rng);
    nn::Linear lin(4, 2, rng);
    nn::NamedParams ps;
    conv.collect("conv", ps);
    lin.collect("lin", ps);

    std::string blob = io::serialize_params(ps);

    Rng rng2(99);
    nn::Conv3d conv2(2, 3, 3, 1, 1, rng2);
    nn::Linear lin2(4, 2, rng2);
    nn::NamedParams ps2;
    conv2.collect("conv", ps2);
    lin2.collect("lin", ps2);
    io::deserialize_params(blob, ps2);
    for (size_t i = 0; i < ps.size(); ++i) EXPECT_EQ(ps[i].second->val.v, ps2[i].second->val.v);

    nn::NamedParams wrong;
    lin2.collect("other", wrong);
    EXPECT_THROW(io::deserialize_params(blob, wrong), IoError);
}

TEST(KvIo, ParseAndSerialize) {
    auto kv = io::kv_parse("a=1\n# comment\nshape=32x64x64\n");
    EXPECT_EQ(io::kv_get(kv, "a"), "1");
    auto sh = io::parse_shape(io::kv_get(kv, "shape"));
    EXPECT_EQ(sh, (std::array<int, 3>{32, 64, 64}));
    EXPECT_THROW(io::parse_shape("32.64"), ConfigError);
}
