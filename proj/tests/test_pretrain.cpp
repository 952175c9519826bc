#include <doctest.h>

#include <complex>
#include <cstdlib>
#include <numbers>

#include "nopt/generate.hpp"
#include "nopt/pretrain.hpp"

using namespace nopt;

namespace {

Tensor<double> random_tensor3(std::size_t c, std::size_t h, std::size_t w,
                              std::uint64_t seed) {
    Tensor<double> x({c, h, w});
    Rng rng(seed);
    for (auto& v : x.data) v = rng.gaussian();
    return x;
}

std::size_t count_masked(const std::vector<bool>& m) {
    std::size_t n = 0;
    for (bool b : m) n += b;
    return n;
}

struct ThreadGuard {
    std::string saved;
    bool had;
    explicit ThreadGuard(const char* v) {
        const char* old = std::getenv("NOPT_THREADS");
        had = old != nullptr;
        if (had) saved = old;
        setenv("NOPT_THREADS", v, 1);
    }
    ~ThreadGuard() {
        if (had)
            setenv("NOPT_THREADS", saved.c_str(), 1);
        else
            unsetenv("NOPT_THREADS");
    }
};

}  // namespace

TEST_CASE("mask count is exact") {
    MaskSpec spec;
    spec.ratio = 0.7;
    auto [out, mask] = apply_mask(random_tensor3(2, 64, 64, 1), spec, 5);
    CHECK(count_masked(mask) == 2867);  // round(0.7 * 4096)
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        CHECK(out[i] == 0.0);
        CHECK(out[64 * 64 + i] == 0.0);  // same pattern on channel 2
    }
}

TEST_CASE("mask count is exact for every ratio and granularity (small grids)") {
    for (std::size_t grid : {8ul, 16ul})
        for (std::size_t patch : {1ul, 2ul, 4ul})
            for (int pct = 0; pct <= 100; pct += 5) {
                MaskSpec spec;
                spec.ratio = pct / 100.0;
                spec.patch = patch;
                auto x = random_tensor3(1, grid, grid, 9);
                auto [out, mask] = apply_mask(x, spec, 77);
                const std::size_t units = (grid / patch) * (grid / patch);
                const std::size_t want =
                    std::size_t(std::llround(spec.ratio * double(units)));
                CHECK(count_masked(mask) == want * patch * patch);
            }
}

TEST_CASE("patch masking masks whole aligned squares") {
    MaskSpec spec;
    spec.ratio = 0.25;
    spec.patch = 4;
    auto [out, mask] = apply_mask(random_tensor3(1, 16, 16, 3), spec, 11);
    for (std::size_t uy = 0; uy < 4; ++uy)
        for (std::size_t ux = 0; ux < 4; ++ux) {
            bool first = mask[(uy * 4) * 16 + ux * 4];
            for (std::size_t py = 0; py < 4; ++py)
                for (std::size_t px = 0; px < 4; ++px)
                    CHECK(mask[(uy * 4 + py) * 16 + ux * 4 + px] == first);
        }
}

TEST_CASE("mask determinism and seed sensitivity") {
    MaskSpec spec;
    spec.ratio = 0.5;
    auto x = random_tensor3(1, 32, 32, 4);
    auto a = apply_mask(x, spec, 123);
    auto b = apply_mask(x, spec, 123);
    auto c = apply_mask(x, spec, 124);
    CHECK(a.second == b.second);
    CHECK(a.first.data == b.first.data);
    CHECK(a.second != c.second);
}

TEST_CASE("ratio 0 is the identity; invalid specs throw") {
    MaskSpec spec;
    auto x = random_tensor3(2, 16, 16, 6);
    auto [out, mask] = apply_mask(x, spec, 1);
    CHECK(out.data == x.data);
    CHECK(count_masked(mask) == 0);
    MaskSpec bad;
    bad.ratio = 1.5;
    CHECK_THROWS_AS(apply_mask(x, bad, 1), std::invalid_argument);
    MaskSpec odd;
    odd.patch = 3;  // does not divide 16
    CHECK_THROWS_AS(apply_mask(x, odd, 1), std::invalid_argument);
}

TEST_CASE("blur: identity, constant invariance, mean preservation") {
    auto x = random_tensor3(2, 16, 16, 8);
    CHECK(apply_blur(x, 0.0).data == x.data);

    Tensor<double> c({1, 16, 16});
    c.data.assign(c.data.size(), 3.5);
    auto bc = apply_blur(c, 2.0);
    for (double v : bc.data) CHECK(v == doctest::Approx(3.5).epsilon(1e-12));

    auto bx = apply_blur(x, 1.3);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < 256; ++i) {
        m0 += x[i];
        m1 += bx[i];
    }
    CHECK(std::abs(m0 - m1) / 256.0 < 1e-10);
}

TEST_CASE("blur transfer function matches the DFT-of-kernel oracle") {
    const std::size_t w = 64;
    for (double sigma : {0.5, 1.0, 2.0, 4.0})
        for (int m : {1, 3, 7}) {
            Tensor<double> x({1, w, w});
            for (std::size_t y = 0; y < w; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    x[y * w + xx] = std::sin(2 * std::numbers::pi * m *
                                             double(xx) / double(w));
            auto bx = apply_blur(x, sigma);
            // oracle: real DFT of the symmetric kernel at frequency m
            auto k = gaussian_kernel(sigma);
            const long r = long(k.size() / 2);
            double transfer = 0.0;
            for (long j = -r; j <= r; ++j)
                transfer += k[std::size_t(j + r)] *
                            std::cos(2 * std::numbers::pi * m * double(j) /
                                     double(w));
            for (std::size_t i = 0; i < x.data.size(); ++i)
                CHECK(std::abs(bx[i] - transfer * x[i]) < 1e-6);
        }
}

TEST_CASE("blur is linear") {
    auto a = random_tensor3(1, 16, 16, 10);
    auto b = random_tensor3(1, 16, 16, 11);
    Tensor<double> comb({1, 16, 16});
    for (std::size_t i = 0; i < comb.data.size(); ++i)
        comb[i] = 2.0 * a[i] - 0.7 * b[i];
    auto lhs = apply_blur(comb, 1.5);
    auto ra = apply_blur(a, 1.5), rb = apply_blur(b, 1.5);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(std::abs(lhs[i] - (2.0 * ra[i] - 0.7 * rb[i])) < 1e-12);
}

TEST_CASE("pretrain_step with no perturbation equals autoencoding bit-for-bit") {
    ThreadGuard tg("1");
    FnoConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 1;
    cfg.width = 4;
    cfg.modes1 = cfg.modes2 = 2;
    cfg.layers = 1;
    FnoModel<double> m(cfg, 1, /*with_decoder=*/true);
    auto ref = m.clone();

    std::vector<Tensor<double>> batch{random_tensor3(2, 16, 16, 20),
                                      random_tensor3(2, 16, 16, 21)};
    const double loss = pretrain_step(m, batch, MaskSpec{}, BlurSpec{}, 5);

    // manual autoencoding pass over the same batch, same order
    double ref_loss = 0.0;
    for (const auto& x : batch) {
        Tape<double> tape;
        auto recon = ref.decode_pretrain(
            tape, ref.encode(tape, tape.input(ref.prepare_input(x))));
        auto l = tape.rel_l2(recon, tape.input(x));
        ref_loss += tape.value(l)[0];
        tape.backward(l, 0.5);
    }
    ref_loss /= 2.0;
    CHECK(loss == ref_loss);
    auto pm = m.parameters();
    auto pr = ref.parameters();
    for (std::size_t p = 0; p < pm.size(); ++p)
        CHECK(pm[p]->grad.data == pr[p]->grad.data);
}

TEST_CASE("untrained loss is near 1 when the model outputs near zero") {
    FnoConfig cfg;
    cfg.in_channels = 1;
    cfg.out_channels = 1;
    cfg.width = 2;
    cfg.modes1 = cfg.modes2 = 2;
    cfg.layers = 1;
    FnoModel<double> m(cfg, 3, true);
    for (auto* p : m.parameters())
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
    std::vector<Tensor<double>> batch{random_tensor3(1, 16, 16, 30)};
    const double loss = pretrain_step(m, batch, MaskSpec{}, BlurSpec{}, 1);
    CHECK(loss == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("step without a decoder throws") {
    FnoConfig cfg;
    cfg.in_channels = 1;
    cfg.width = 2;
    cfg.modes1 = cfg.modes2 = 2;
    cfg.layers = 1;
    FnoModel<double> m(cfg, 1);  // no decoder
    std::vector<Tensor<double>> batch{random_tensor3(1, 16, 16, 1)};
    CHECK_THROWS_AS(pretrain_step(m, batch, MaskSpec{}, BlurSpec{}, 1),
                    std::logic_error);
}

TEST_CASE("train_pretrain converges at reduced scale and tags the model") {
    GenOptions opt;
    opt.H = opt.W = 16;
    auto ds = generate(Pde::Poisson, 24, {1, 20, {}}, false, 9, opt);

    FnoConfig cfg;
    cfg.in_channels = 4;
    cfg.out_channels = 1;
    cfg.width = 8;
    cfg.modes1 = cfg.modes2 = 4;
    cfg.layers = 2;
    FnoModel<double> m(cfg, 11, true);

    PretrainConfig pc;
    pc.epochs = 12;
    pc.batch = 8;
    pc.seed = 2;
    pc.blur.sigma_max = 1.0;
    pc.mask.ratio = 0.3;
    auto curve = train_pretrain(ds, m, pc);
    REQUIRE(curve.size() == 12);
    CHECK(curve.back().second < 0.8 * curve.front().second);
    CHECK(m.stage == "pretrained");
    CHECK(m.epochs == 12);
    CHECK(m.dataset_fingerprint == dataset_fingerprint(ds));
}

TEST_CASE("zero epochs leaves the model at initialization") {
    GenOptions opt;
    opt.H = opt.W = 16;
    auto ds = generate(Pde::Poisson, 4, {1, 20, {}}, false, 9, opt);
    FnoConfig cfg;
    cfg.in_channels = 4;
    cfg.width = 4;
    cfg.modes1 = cfg.modes2 = 2;
    cfg.layers = 1;
    FnoModel<double> m(cfg, 5, true);
    auto before = m.clone();
    PretrainConfig pc;
    pc.epochs = 0;
    auto curve = train_pretrain(ds, m, pc);
    CHECK(curve.empty());
    auto pa = m.parameters();
    auto pb = before.parameters();
    for (std::size_t p = 0; p < pa.size(); ++p)
        CHECK(pa[p]->value.data == pb[p]->value.data);
}

TEST_CASE("different seeds give different initializations, same shapes") {
    FnoConfig cfg;
    cfg.in_channels = 1;
    cfg.width = 2;
    cfg.modes1 = cfg.modes2 = 2;
    cfg.layers = 1;
    FnoModel<double> a(cfg, 1), b(cfg, 2);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t p = 0; p < pa.size(); ++p) {
        CHECK(pa[p]->value.shape == pb[p]->value.shape);
        if (pa[p]->value.shape.size() > 1)  // biases start at zero everywhere
            CHECK(pa[p]->value.data != pb[p]->value.data);
    }
}
