#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nopt/dataset.hpp"
#include "nopt/generate.hpp"

using namespace nopt;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    TmpDir() {
        path = fs::temp_directory_path() /
               ("nopt_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string base(const std::string& name) const {
        return (path / name).string();
    }
};

Dataset tiny_poisson(std::size_t n, std::uint64_t seed = 1) {
    GenOptions opt;
    opt.H = opt.W = 16;
    return generate(Pde::Poisson, n, {5, 15, {}}, true, seed, opt);
}

std::vector<char> slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("poisson samples round-trip bit-exactly") {
    TmpDir tmp;
    auto ds = tiny_poisson(3);
    write_dataset(ds, tmp.base("a"));
    auto back = read_dataset(tmp.base("a"));
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.samples[i].input.frames[0].values ==
              ds.samples[i].input.frames[0].values);
        CHECK(back.samples[i].solution->frames[0].values ==
              ds.samples[i].solution->frames[0].values);
        CHECK(back.samples[i].params == ds.samples[i].params);
    }
    // re-writing the read copy reproduces the payload byte-for-byte
    write_dataset(back, tmp.base("b"));
    CHECK(slurp(tmp.base("a") + ".bin") == slurp(tmp.base("b") + ".bin"));
}

TEST_CASE("empty dataset") {
    TmpDir tmp;
    Dataset ds;
    ds.pde = "poisson";
    auto man = write_dataset(ds, tmp.base("e"));
    CHECK(man["n"] == 0);
    CHECK(fs::file_size(tmp.base("e") + ".bin") == 0);
    auto back = read_dataset(tmp.base("e"));
    CHECK(back.size() == 0);
}

TEST_CASE("corrupt byte-order tag is rejected") {
    TmpDir tmp;
    write_dataset(tiny_poisson(2), tmp.base("c"));
    auto j = nlohmann::json::parse(std::ifstream(tmp.base("c") + ".json"));
    j["dtype"] = "f32be";
    std::ofstream(tmp.base("c") + ".json") << j.dump();
    CHECK_THROWS_WITH_AS(read_dataset(tmp.base("c")),
                         doctest::Contains("dtype"), std::runtime_error);
}

TEST_CASE("truncated payload is rejected") {
    TmpDir tmp;
    write_dataset(tiny_poisson(2), tmp.base("t"));
    fs::resize_file(tmp.base("t") + ".bin",
                    fs::file_size(tmp.base("t") + ".bin") / 2);
    CHECK_THROWS_WITH_AS(read_dataset(tmp.base("t")),
                         doctest::Contains("truncated"), std::runtime_error);
}

TEST_CASE("future manifest versions are rejected, unknown keys ignored") {
    TmpDir tmp;
    write_dataset(tiny_poisson(1), tmp.base("v"));
    auto j = nlohmann::json::parse(std::ifstream(tmp.base("v") + ".json"));
    j["some_future_key"] = {{"x", 1}};
    std::ofstream(tmp.base("v") + ".json") << j.dump();
    CHECK_NOTHROW(read_dataset(tmp.base("v")));
    j["version"] = kDatasetVersion + 1;
    std::ofstream(tmp.base("v") + ".json") << j.dump();
    CHECK_THROWS_AS(read_dataset(tmp.base("v")), std::runtime_error);
}

TEST_CASE("dataset_union pads channels with zeros") {
    GenOptions opt;
    opt.H = opt.W = 16;
    auto pois = generate(Pde::Poisson, 10, {1, 20, {}}, false, 1, opt);
    auto helm = generate(Pde::Helmholtz, 5, {1, 20, {}}, false, 2, opt);
    auto u = dataset_union({pois, helm});
    CHECK(u.size() == 15);
    CHECK(u.C == 4);
    for (std::size_t i = 10; i < 15; ++i)
        for (std::size_t c = 2; c < 4; ++c)
            for (std::size_t k = 0; k < 16 * 16; ++k)
                CHECK(u.samples[i].input.frames[0].values[c * 256 + k] == 0.f);
}

TEST_CASE("dataset_union with itself doubles the count") {
    auto ds = tiny_poisson(4);
    auto u = dataset_union({ds, ds});
    CHECK(u.size() == 8);
    CHECK(u.C == ds.C);
}

TEST_CASE("dataset_union of one dataset is the identity on samples") {
    auto ds = tiny_poisson(4);
    auto u = dataset_union({ds});
    REQUIRE(u.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(u.samples[i].input.frames[0].values ==
              ds.samples[i].input.frames[0].values);
}

TEST_CASE("union resolution mismatch raises") {
    GenOptions a, b;
    a.H = a.W = 16;
    b.H = b.W = 32;
    auto d1 = generate(Pde::Poisson, 2, {1, 5, {}}, false, 1, a);
    auto d2 = generate(Pde::Poisson, 2, {1, 5, {}}, false, 1, b);
    CHECK_THROWS_AS(dataset_union({d1, d2}), std::invalid_argument);
}

TEST_CASE("split sizes and determinism") {
    auto ds = tiny_poisson(10);
    auto s1 = split(ds, 0.8, 0.1, 0.1, 7);
    auto s2 = split(ds, 0.8, 0.1, 0.1, 7);
    CHECK(s1[0].size() == 8);
    CHECK(s1[1].size() == 1);
    CHECK(s1[2].size() == 1);
    for (int p = 0; p < 3; ++p)
        for (std::size_t i = 0; i < s1[p].size(); ++i)
            CHECK(s1[p].samples[i].input.frames[0].values ==
                  s2[p].samples[i].input.frames[0].values);
    auto s3 = split(ds, 0.8, 0.1, 0.1, 8);
    CHECK(s3[0].size() == 8);  // sizes stable across seeds
}

TEST_CASE("degenerate fractions") {
    auto ds = tiny_poisson(6);
    auto s = split(ds, 1.0, 0.0, 0.0, 3);
    CHECK(s[0].size() == 6);
    CHECK(s[1].size() == 0);
    CHECK(s[2].size() == 0);
    CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 3), std::invalid_argument);
    CHECK_THROWS_AS(split(ds, 1.5, -0.3, -0.2, 3), std::invalid_argument);
}

TEST_CASE("split partitions are disjoint and exhaustive (property)") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = std::size_t(rng.uniform_int(1, 40));
        double a = rng.uniform(0.1, 0.8);
        double b = rng.uniform(0.0, 1.0 - a);
        Dataset ds;
        ds.pde = "synthetic";
        Grid2D g{8, 8};
        for (std::size_t i = 0; i < n; ++i) {
            SampleRecord s;
            Field f(1, g);
            f.values[0] = float(i);  // identity marker
            s.input = Trajectory(f);
            s.params["id"] = double(i);
            ds.samples.push_back(s);
        }
        ds.infer_shape();
        auto parts = split(ds, a, b, 1.0 - a - b,
                           std::uint64_t(rng.uniform_int(0, 1 << 30)));
        std::vector<int> seen(n, 0);
        for (const auto& p : parts)
            for (const auto& s : p.samples)
                ++seen[std::size_t(s.params.at("id"))];
        for (int c : seen) CHECK(c == 1);
    }
}

TEST_CASE("channel stats and normalization round-trip") {
    auto ds = tiny_poisson(8);
    auto st = channel_stats(ds);
    // constant channels (K broadcasts differ per sample but vary) -- check f
    Dataset norm = ds;
    for (auto& s : norm.samples)
        for (auto& f : s.input.frames) normalize(f, st);
    auto st2 = channel_stats(norm);
    for (std::size_t c = 0; c < norm.C; ++c) {
        if (st.degenerate[c]) continue;
        CHECK(std::abs(st2.mean[c]) < 1e-5);
        CHECK(st2.std[c] == doctest::Approx(1.0).epsilon(1e-4));
    }
    // round trip
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Field f = norm.samples[i].input.frames[0];
        denormalize(f, st);
        const auto& orig = ds.samples[i].input.frames[0];
        for (std::size_t k = 0; k < f.values.size(); ++k)
            CHECK(std::abs(f.values[k] - orig.values[k]) < 1e-4);
    }
}

TEST_CASE("constant channel is flagged and passed through") {
    Dataset ds;
    Grid2D g{8, 8};
    for (int i = 0; i < 3; ++i) {
        SampleRecord s;
        Field f(2, g);
        for (std::size_t k = 0; k < 64; ++k) {
            f.values[k] = 3.f;                 // constant channel
            f.values[64 + k] = float(i + k);   // varying channel
        }
        s.input = Trajectory(f);
        s.params["i"] = i;
        ds.samples.push_back(s);
    }
    ds.infer_shape();
    auto st = channel_stats(ds);
    CHECK(st.degenerate[0]);
    CHECK_FALSE(st.degenerate[1]);
    Field f = ds.samples[0].input.frames[0];
    normalize(f, st);
    for (std::size_t k = 0; k < 64; ++k) CHECK(f.values[k] == 3.f);
}

TEST_CASE("import_raw ingests and re-exports bit-identically") {
    TmpDir tmp;
    std::vector<float> raw(2 * 1 * 8 * 8);
    Rng rng(4);
    for (auto& v : raw) v = float(rng.gaussian());
    const std::string rawp = tmp.base("raw.bin");
    std::ofstream(rawp, std::ios::binary)
        .write(reinterpret_cast<const char*>(raw.data()),
               std::streamsize(raw.size() * sizeof(float)));

    auto ds = import_raw(rawp, 2, 1, 1, 8, 8);
    CHECK(ds.size() == 2);
    write_dataset(ds, tmp.base("imported"));
    CHECK(slurp(tmp.base("imported") + ".bin") == slurp(rawp));

    // wrong byte length
    std::ofstream(tmp.base("short.bin"), std::ios::binary)
        .write(reinterpret_cast<const char*>(raw.data()), 100);
    CHECK_THROWS_AS(import_raw(tmp.base("short.bin"), 2, 1, 1, 8, 8),
                    std::runtime_error);
}
