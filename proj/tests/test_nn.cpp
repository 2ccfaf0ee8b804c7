#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "tslab/losses.hpp"
#include "tslab/nn.hpp"
#include "tslab/optimizer.hpp"

using namespace tslab;

namespace {

// Pulls the flat parameter buffer apart into per-layer weight matrices for
// the straight-line oracle.
std::vector<oracles::PlainLayer> unpack_layers(const Network& net,
                                               oracles::PlainLayer& head_out) {
    std::vector<std::size_t> dims;
    dims.push_back(net.input_dim());
    for (std::size_t d : net.encoder_dims()) dims.push_back(d);
    auto params = net.params();
    std::size_t off = 0;
    std::vector<oracles::PlainLayer> encoder;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        oracles::PlainLayer layer;
        layer.w.assign(dims[l], std::vector<double>(dims[l + 1]));
        for (std::size_t i = 0; i < dims[l]; ++i)
            for (std::size_t j = 0; j < dims[l + 1]; ++j) layer.w[i][j] = params[off++];
        layer.b.assign(params.begin() + static_cast<long>(off),
                       params.begin() + static_cast<long>(off + dims[l + 1]));
        off += dims[l + 1];
        encoder.push_back(std::move(layer));
    }
    const std::size_t rdim = dims.back();
    head_out.w.assign(rdim, std::vector<double>(net.output_dim()));
    for (std::size_t i = 0; i < rdim; ++i)
        for (std::size_t j = 0; j < net.output_dim(); ++j) head_out.w[i][j] = params[off++];
    head_out.b.assign(params.begin() + static_cast<long>(off),
                      params.begin() + static_cast<long>(off + net.output_dim()));
    return encoder;
}

}  // namespace

TEST_CASE("zero-weight classifier maps any input to zero logits") {
    Network net = Network::make(3, {4}, HeadKind::Classifier, 2, 1);
    std::fill(net.params().begin(), net.params().end(), 0.0);
    net.note_params_changed();
    Tensor2 x = Tensor2::from_rows({{1.0, -2.0, 3.0}, {0.5, 0.5, 0.5}});
    auto fwd = net.forward(x);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) REQUIRE(fwd.outputs(r, c) == 0.0);
}

TEST_CASE("identity encoder plus identity classifier is the identity") {
    Network net = Network::make(2, {2}, HeadKind::Classifier, 2, 1);
    std::fill(net.params().begin(), net.params().end(), 0.0);
    auto p = net.params();
    // encoder weight block is 2x2 row-major at offset 0, head at 2*2+2
    p[0] = 1.0;
    p[3] = 1.0;
    p[6] = 1.0;
    p[9] = 1.0;
    net.note_params_changed();
    Tensor2 x = Tensor2::from_rows({{1.0, 2.0}});
    auto fwd = net.forward(x);
    CHECK(fwd.outputs(0, 0) == 1.0);
    CHECK(fwd.outputs(0, 1) == 2.0);
    CHECK(fwd.representations(0, 0) == 1.0);  // single encoder layer: no ReLU on output
}

TEST_CASE("seeded forward matches a straight-line re-evaluation") {
    for (HeadKind head : {HeadKind::Classifier, HeadKind::Projection}) {
        Network net = Network::make(5, {6, 4}, head, 3, 99);
        oracles::PlainLayer plain_head;
        auto encoder = unpack_layers(net, plain_head);
        Rng rng(5);
        Tensor2 x(7, 5);
        for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
        auto fwd = net.forward(x);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            std::vector<double> row(x.row(r).begin(), x.row(r).end());
            auto want = oracles::plain_forward(encoder, plain_head,
                                               head == HeadKind::Projection, row);
            for (std::size_t c = 0; c < want.size(); ++c)
                REQUIRE_THAT(fwd.outputs(r, c), Catch::Matchers::WithinAbs(want[c], 1e-12));
        }
    }
}

TEST_CASE("zero cotangent produces zero gradients") {
    Network net = Network::make(4, {5, 3}, HeadKind::Classifier, 2, 7);
    Tensor2 x(3, 4, 0.25);
    auto fwd = net.forward(x);
    net.backward(fwd.cache, Tensor2(3, 2, 0.0));
    for (double g : net.grads()) REQUIRE(g == 0.0);
}

TEST_CASE("single affine layer: weight gradient equals the input row") {
    Network net = Network::make(3, {}, HeadKind::Classifier, 1, 1);
    Tensor2 x = Tensor2::from_rows({{2.0, -1.0, 0.5}});
    auto fwd = net.forward(x);
    Tensor2 d(1, 1, 1.0);
    net.backward(fwd.cache, d);
    auto g = net.grads();
    CHECK(g[0] == 2.0);
    CHECK(g[1] == -1.0);
    CHECK(g[2] == 0.5);
    CHECK(g[3] == 1.0);  // bias gradient
}

TEST_CASE("projection head rows are unit norm and scale invariant") {
    Network net = Network::make(4, {8, 6}, HeadKind::Projection, 5, 3);
    Rng rng(11);
    Tensor2 x(10, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
    auto fwd = net.forward(x);
    for (std::size_t r = 0; r < fwd.outputs.rows(); ++r) {
        double n = 0.0;
        for (double v : fwd.outputs.row(r)) n += v * v;
        REQUIRE_THAT(std::sqrt(n), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    // scaling every head parameter scales the pre-normalization rows by the
    // same factor, so the normalized outputs must not move
    Network net2 = net;
    auto p2 = net2.params();
    for (std::size_t i = net2.head_params_begin(); i < p2.size(); ++i) p2[i] *= 2.5;
    net2.note_params_changed();
    auto fwd2 = net2.forward(x);
    for (std::size_t r = 0; r < fwd.outputs.rows(); ++r)
        for (std::size_t c = 0; c < fwd.outputs.cols(); ++c)
            REQUIRE_THAT(fwd2.outputs(r, c),
                         Catch::Matchers::WithinAbs(fwd.outputs(r, c), 1e-9));
}

TEST_CASE("network parameter gradients match finite differences under each loss") {
    Rng rng(2024);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t d = 3 + rng.below(3);
        const std::size_t c = 2 + rng.below(3);
        const int loss_pick = trial % 3;
        const HeadKind head = loss_pick == 0 ? HeadKind::Classifier : HeadKind::Projection;
        const std::size_t head_dim = loss_pick == 0 ? c : 4;

        // FD only makes sense at differentiable points: resample instances
        // whose projection rows have (near-)zero norm, where the row
        // normalization has no derivative (an all-dead ReLU layer can
        // produce exact zeros in nets this small).
        const std::size_t rows = loss_pick == 0 ? 5 : 6;  // contrastive needs 2B rows
        Network net = Network::make(d, {5, 4}, head, head_dim, rng.next_u64());
        Tensor2 x(rows, d);
        for (int attempt = 0;; ++attempt) {
            REQUIRE(attempt < 100);
            net = Network::make(d, {5, 4}, head, head_dim, rng.next_u64());
            for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
            if (head != HeadKind::Projection) break;
            auto probe = net.forward(x);
            double min_norm = 1e300;
            for (double n : probe.cache.row_norms) min_norm = std::min(min_norm, n);
            if (min_norm > 0.05) break;
        }
        std::vector<int> labels(rows);
        for (std::size_t i = 0; i < rows; ++i)
            labels[i] = loss_pick == 0 ? static_cast<int>(rng.below(c))
                                       : static_cast<int>(i / 2 % 2);
        const double tau = 0.4;

        auto loss_value = [&](const Tensor2& outputs) {
            switch (loss_pick) {
                case 0: return ce_loss(outputs, labels, tau).value;
                case 1: return supcon_loss(outputs, labels, tau).value;
                default: return supcon_ls_loss(outputs, labels, tau, 0.2, 4).value;
            }
        };
        auto loss_grad = [&](const Tensor2& outputs) {
            switch (loss_pick) {
                case 0: return ce_loss(outputs, labels, tau);
                case 1: return supcon_loss(outputs, labels, tau);
                default: return supcon_ls_loss(outputs, labels, tau, 0.2, 4);
            }
        };

        auto fwd = net.forward(x);
        auto lo = loss_grad(fwd.outputs);
        net.zero_grads();
        net.backward(fwd.cache, lo.d_outputs);
        std::vector<double> analytic(net.grads().begin(), net.grads().end());

        std::vector<double> theta(net.params().begin(), net.params().end());
        auto f = [&](const std::vector<double>& p) {
            Network probe = net;
            probe.set_params(p);
            return loss_value(probe.forward(x).outputs);
        };
        auto fd = oracles::fd_gradient(f, theta, 1e-5);
        REQUIRE(oracles::max_rel_error(analytic, fd) < 1e-5);
    }
}

TEST_CASE("forward rejects inputs with the wrong width") {
    Network net = Network::make(3, {4}, HeadKind::Classifier, 2, 5);
    CHECK_THROWS_AS(net.forward(Tensor2(2, 4, 0.0)), std::invalid_argument);
}

TEST_CASE("backward rejects a stale cache") {
    Network net = Network::make(3, {4}, HeadKind::Classifier, 2, 5);
    Tensor2 x(2, 3, 0.1);
    auto fwd = net.forward(x);
    OptimizerState opt;
    net.grads()[0] = 1.0;
    sgd_step(net, opt, 0.01);
    CHECK_THROWS_AS(net.backward(fwd.cache, Tensor2(2, 2, 0.0)), std::logic_error);
}

TEST_CASE("vanilla sgd takes a plain gradient step") {
    Network net = Network::make(2, {}, HeadKind::Classifier, 1, 0);
    std::fill(net.params().begin(), net.params().end(), 1.0);
    net.note_params_changed();
    OptimizerState opt;
    opt.momentum = 0.0;
    opt.weight_decay = 0.0;
    net.grads()[0] = 0.5;
    sgd_step(net, opt, 0.1);
    CHECK_THAT(net.params()[0], Catch::Matchers::WithinAbs(1.0 - 0.1 * 0.5, 1e-15));
    CHECK(net.params()[1] == 1.0);
    CHECK(net.grads()[0] == 0.0);  // cleared
}

TEST_CASE("zero gradient with weight decay shrinks weights, not biases") {
    Network net = Network::make(2, {}, HeadKind::Classifier, 1, 0);
    std::fill(net.params().begin(), net.params().end(), 1.0);
    net.note_params_changed();
    OptimizerState opt;
    opt.momentum = 0.0;
    opt.weight_decay = 0.01;
    sgd_step(net, opt, 0.5);
    CHECK_THAT(net.params()[0], Catch::Matchers::WithinAbs(1.0 - 0.5 * 0.01, 1e-15));
    CHECK(net.params()[2] == 1.0);  // bias untouched by decay
}

TEST_CASE("two momentum steps reproduce the hand-unrolled recurrence") {
    Network net = Network::make(1, {}, HeadKind::Classifier, 1, 0);
    std::fill(net.params().begin(), net.params().end(), 0.0);
    auto p = net.params();
    p[0] = 2.0;
    net.note_params_changed();
    OptimizerState opt;
    opt.momentum = 0.9;
    opt.weight_decay = 0.0;
    const double lr = 0.1;
    const double g1 = 0.3, g2 = -0.2;

    net.grads()[0] = g1;
    sgd_step(net, opt, lr);
    net.grads()[0] = g2;
    sgd_step(net, opt, lr);

    // v1 = g1, w1 = 2 - lr*v1;  v2 = 0.9*v1 + g2, w2 = w1 - lr*v2
    const double v1 = g1;
    const double w1 = 2.0 - lr * v1;
    const double v2 = 0.9 * v1 + g2;
    const double w2 = w1 - lr * v2;
    CHECK_THAT(net.params()[0], Catch::Matchers::WithinAbs(w2, 1e-12));
    CHECK_THAT(opt.velocity[0], Catch::Matchers::WithinAbs(v2, 1e-12));
}

TEST_CASE("non-finite gradient aborts with the parameter index") {
    Network net = Network::make(2, {}, HeadKind::Classifier, 1, 0);
    OptimizerState opt;
    net.grads()[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH(sgd_step(net, opt, 0.1), Catch::Matchers::ContainsSubstring("parameter 1"));
}

TEST_CASE("cosine learning rate with warm restarts") {
    OptimizerState opt;
    opt.learning_rate_base = 0.1;
    opt.restart_epochs = {200, 400};
    opt.warmup_epochs = 0;

    SECTION("cycle starts return the base rate") {
        CHECK(lr_at(opt, 1, 600) == 0.1);
        CHECK(lr_at(opt, 200, 600) == 0.1);
        CHECK(lr_at(opt, 400, 600) == 0.1);
    }
    SECTION("mid-cycle is half the base rate") {
        CHECK_THAT(lr_at(opt, 300, 600), Catch::Matchers::WithinAbs(0.05, 1e-12));
    }
    SECTION("cycle ends approach zero") {
        CHECK(lr_at(opt, 199, 600) < 0.1 * 0.01);
        CHECK(lr_at(opt, 399, 600) < 0.1 * 0.01);
        CHECK(lr_at(opt, 600, 600) < 0.1 * 0.01);
    }
    SECTION("warmup ramps toward base") {
        OptimizerState w = opt;
        w.warmup_epochs = 1;
        CHECK_THAT(lr_at(w, 1, 600), Catch::Matchers::WithinAbs(0.05, 1e-12));
        CHECK(lr_at(w, 2, 600) == 0.1);
        CHECK_THAT(lr_at(w, 200, 600), Catch::Matchers::WithinAbs(0.05, 1e-12));
    }
    SECTION("epoch range is checked") {
        CHECK_THROWS_AS(lr_at(opt, 0, 600), std::domain_error);
        CHECK_THROWS_AS(lr_at(opt, 601, 600), std::domain_error);
    }
}

TEST_CASE("head replacement keeps encoder parameters") {
    Network net = Network::make(4, {5, 3}, HeadKind::Projection, 6, 17);
    std::vector<double> encoder_before(net.params().begin(),
                                       net.params().begin() + static_cast<long>(net.head_params_begin()));
    net.replace_head(HeadKind::Classifier, 7, 99);
    CHECK(net.output_dim() == 7);
    CHECK(net.head_kind() == HeadKind::Classifier);
    std::vector<double> encoder_after(net.params().begin(),
                                      net.params().begin() + static_cast<long>(net.head_params_begin()));
    CHECK(encoder_before == encoder_after);
}

TEST_CASE("deterministic init: same seed gives identical networks") {
    Network a = Network::make(6, {8, 4}, HeadKind::Classifier, 3, 12345);
    Network b = Network::make(6, {8, 4}, HeadKind::Classifier, 3, 12345);
    REQUIRE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
    Network c = Network::make(6, {8, 4}, HeadKind::Classifier, 3, 54321);
    CHECK(!std::equal(a.params().begin(), a.params().end(), c.params().begin()));
}
