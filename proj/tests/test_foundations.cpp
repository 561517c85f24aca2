#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <set>

#include "elsa/param_set.hpp"
#include "elsa/rng.hpp"
#include "elsa/sha256.hpp"
#include "elsa/tensor.hpp"

using namespace elsa;

TEST_CASE("rng is deterministic and splittable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());

    Rng c(43);
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 10; ++i) differs = differs || (a2.next() != c.next());
    REQUIRE(differs);

    REQUIRE(Rng::derive(1, "train") != Rng::derive(1, "densify"));
    REQUIRE(Rng::derive(1, "densify", 1) != Rng::derive(1, "densify", 2));
    REQUIRE(Rng::derive(1, "train") == Rng::derive(1, "train"));
}

TEST_CASE("rng uniform stays in range and fills the interval") {
    Rng rng(7);
    float lo = 1.0f, hi = 0.0f;
    for (int i = 0; i < 20000; ++i) {
        const float u = rng.uniform();
        REQUIRE(u >= 0.0f);
        REQUIRE(u < 1.0f);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    REQUIRE(lo < 0.01f);
    REQUIRE(hi > 0.99f);
}

TEST_CASE("rng normal has sane first moments") {
    Rng rng(11);
    double s = 0.0, s2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("shuffle is a permutation and reproduces from seed") {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    auto w = v;
    Rng r1(3), r2(3);
    r1.shuffle(v);
    r2.shuffle(w);
    REQUIRE(v == w);
    std::set<int> seen(v.begin(), v.end());
    REQUIRE(seen.size() == 100);
}

TEST_CASE("tensor validates shape against values") {
    Tensor t({2, 3});
    REQUIRE(t.size() == 6);
    REQUIRE(t.innermost_dim() == 3);
    REQUIRE_THROWS_AS(Tensor({0, 3}), DimensionError);
    t.values.pop_back();
    REQUIRE_THROWS_AS(t.check(), DimensionError);
}

TEST_CASE("param set flat index space covers exactly the prunable scalars") {
    ParamSet ps;
    ps.add("a.weight", Tensor({2, 3}, 1.0f), true);
    ps.add("a.bias", Tensor({2}, 0.5f), false);
    ps.add("b.weight", Tensor({4}, 2.0f), true);
    REQUIRE(ps.prunable_count() == 10);
    REQUIRE(ps.total_count() == 12);

    // bijection onto the prunable scalars, in entry order
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(ps.get_flat(i) == 1.0f);
    for (std::size_t i = 6; i < 10; ++i) REQUIRE(ps.get_flat(i) == 2.0f);

    ps.set_flat(7, -3.0f);
    REQUIRE(ps.tensor("b.weight").values[1] == -3.0f);

    std::size_t visited = 0;
    ps.for_each_prunable([&](std::size_t i, float v) {
        REQUIRE(ps.get_flat(i) == v);
        ++visited;
    });
    REQUIRE(visited == 10);

    const auto [lo, hi] = ps.flat_range(ps.entry_index("b.weight"));
    REQUIRE(lo == 6);
    REQUIRE(hi == 10);
}

TEST_CASE("param set rejects duplicate names") {
    ParamSet ps;
    ps.add("w", Tensor({1}), true);
    REQUIRE_THROWS_AS(ps.add("w", Tensor({1}), false), Error);
}

TEST_CASE("bit access round-trips the exact pattern") {
    ParamSet ps;
    ps.add("w", Tensor({2}), true);
    ps.set_bits_flat(0, 0x3f800003u);
    REQUIRE(ps.bits_flat(0) == 0x3f800003u);
    REQUIRE(ps.bits_flat(1) == 0u);
}

TEST_CASE("sha256 matches known vectors") {
    REQUIRE(Sha256::hex(Sha256::digest("", 0)) ==
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    REQUIRE(Sha256::hex(Sha256::digest("abc", 3)) ==
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const char* s = "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
    REQUIRE(Sha256::hex(Sha256::digest(s, std::strlen(s))) ==
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 incremental equals one-shot") {
    std::vector<std::uint8_t> data(1000);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::uint8_t>(i * 31 + 7);
    Sha256 h;
    for (std::size_t i = 0; i < data.size(); i += 17)
        h.update(data.data() + i, std::min<std::size_t>(17, data.size() - i));
    REQUIRE(Sha256::hex(h.finish()) ==
            Sha256::hex(Sha256::digest(data.data(), data.size())));
}

TEST_CASE("fnv64 detects any single bit flip") {
    std::vector<std::uint8_t> data(256);
    for (std::size_t i = 0; i < data.size(); ++i)
        data[i] = static_cast<std::uint8_t>(i);
    Fnv64 base;
    base.update(data.data(), data.size());
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto copy = data;
        const std::size_t byte = rng.below(copy.size());
        copy[byte] ^= static_cast<std::uint8_t>(1u << rng.below(8));
        Fnv64 f;
        f.update(copy.data(), copy.size());
        REQUIRE(f.value() != base.value());
    }
}
