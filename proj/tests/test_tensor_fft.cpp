#include <doctest.h>

#include <complex>
#include <vector>

#include "nopt/fft.hpp"
#include "nopt/rng.hpp"
#include "nopt/tensor.hpp"

using namespace nopt;

TEST_CASE("tensor basics") {
    Tensor<double> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.size() == 6);
    Tensor<double> c({2, 3}, true);
    CHECK(c.size() == 12);
    auto s = Tensor<float>::scalar(2.5f);
    CHECK(s.is_scalar());
    CHECK(s[0] == 2.5f);
}

TEST_CASE("fft inversion") {
    Rng rng(7);
    for (std::size_t n : {8u, 16u, 64u, 12u}) {
        std::vector<std::complex<double>> a(n), orig;
        for (auto& v : a) v = {rng.gaussian(), rng.gaussian()};
        orig = a;
        fft(a.data(), n, false);
        fft(a.data(), n, true);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(std::abs(a[i] - orig[i]) < 1e-12);
    }
}

TEST_CASE("fft matches naive DFT on power-of-two sizes") {
    Rng rng(3);
    const std::size_t n = 16;
    std::vector<std::complex<double>> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = {rng.gaussian(), rng.gaussian()};
        b[i] = a[i];
    }
    fft(a.data(), n, false);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s = 0;
        for (std::size_t j = 0; j < n; ++j)
            s += b[j] * std::exp(std::complex<double>(
                            0, -2.0 * 3.14159265358979323846 *
                                   double(j * k) / double(n)));
        CHECK(std::abs(a[k] - s) < 1e-10);
    }
}

TEST_CASE("parseval on a random 8x8 field, unnormalized forward") {
    // sum |coef|^2 == N * sum x^2, both sides computed independently
    Rng rng(11);
    const std::size_t h = 8, w = 8;
    std::vector<std::complex<double>> buf(h * w);
    double direct = 0.0;
    for (auto& v : buf) {
        double x = rng.gaussian();
        v = x;
        direct += x * x;
    }
    fft2(buf.data(), h, w, false);
    double spectral = 0.0;
    for (const auto& v : buf) spectral += std::norm(v);
    CHECK(spectral == doctest::Approx(double(h * w) * direct).epsilon(1e-12));
}

TEST_CASE("fft2 inversion on 2d grid") {
    Rng rng(5);
    const std::size_t h = 16, w = 8;
    std::vector<std::complex<double>> a(h * w), orig;
    for (auto& v : a) v = {rng.gaussian(), 0.0};
    orig = a;
    fft2(a.data(), h, w, false);
    fft2(a.data(), h, w, true);
    for (std::size_t i = 0; i < h * w; ++i)
        CHECK(std::abs(a[i] - orig[i]) <
              1e-10 * std::max(1.0, std::abs(orig[i])));
}

TEST_CASE("rng determinism and shuffle") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.gaussian() == b.gaussian());
    std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
    auto w = v;
    Rng r1(9), r2(9);
    r1.shuffle(v.begin(), v.end());
    r2.shuffle(w.begin(), w.end());
    CHECK(v == w);
}

TEST_CASE("uniform_int covers its range") {
    Rng rng(1);
    std::vector<int> seen(11, 0);
    for (int i = 0; i < 10000; ++i) ++seen[std::size_t(rng.uniform_int(5, 15)) - 5];
    for (int c : seen) CHECK(c > 0);
}
