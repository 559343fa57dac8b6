#include <cstring>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "streamprobe/dataset_io.hpp"
#include "streamprobe/errors.hpp"
#include "support.hpp"

using namespace streamprobe;
using testsupport::layers_of;
using testsupport::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<LabeledExchange> three_exchanges(const LayerMap& layers) {
    std::mt19937_64 rng(5);
    std::vector<LabeledExchange> xs;
    xs.push_back(testsupport::random_exchange(rng, layers, 7, 3, 0.0, "first"));
    xs.push_back(testsupport::random_exchange(rng, layers, 1, 0, 1.0, "second"));
    xs.push_back(testsupport::random_exchange(rng, layers, 12, 12, 0.1 + 0.2, "third"));
    xs[1].source = Source::extracted;
    return xs;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("write then read is the identity") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    const auto layers = layers_of({4, 3});
    const auto xs = three_exchanges(layers);
    write_dataset(path, xs);

    DatasetReader reader(path);
    CHECK(reader.manifest().feature_dim == 7);
    CHECK(reader.manifest().layer_map == layers);
    REQUIRE(reader.size() == 3);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto back = reader.read(i);
        CHECK(back.id == xs[i].id);
        CHECK(back.label == xs[i].label);  // exact, including 0.1 + 0.2
        CHECK(back.source == xs[i].source);
        CHECK(back.sequence.n_tokens == xs[i].sequence.n_tokens);
        CHECK(back.sequence.prompt_end == xs[i].sequence.prompt_end);
        CHECK(back.sequence.roles == xs[i].sequence.roles);
        REQUIRE(back.sequence.features.size() == xs[i].sequence.features.size());
        CHECK(std::memcmp(back.sequence.features.data(), xs[i].sequence.features.data(),
                          xs[i].sequence.features.size() * sizeof(float)) == 0);
    }
    const auto& entries = reader.manifest().entries;
    CHECK(entries[0].offset < entries[1].offset);
    CHECK(entries[1].offset < entries[2].offset);
}

TEST_CASE("concurrent readers see the same records") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    const auto xs = three_exchanges(layers_of({5}));
    write_dataset(path, xs);
    DatasetReader reader(path);
    std::vector<std::thread> threads;
    std::vector<int> ok(8, 0);
    for (int k = 0; k < 8; ++k) {
        threads.emplace_back([&, k] {
            bool good = true;
            for (int rep = 0; rep < 20; ++rep)
                for (std::size_t i = 0; i < reader.size(); ++i)
                    good = good && reader.read(i).sequence.features == xs[i].sequence.features;
            ok[k] = good;
        });
    }
    for (auto& t : threads) t.join();
    for (int v : ok) CHECK(v == 1);
}

TEST_CASE("wrong magic is a format error naming the field") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    write_dataset(path, three_exchanges(layers_of({2})));
    auto bytes = slurp(path);
    bytes[0] = 'X';
    spit(path, bytes);
    try {
        DatasetReader reader(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "magic");
    }
}

TEST_CASE("unsupported version and inconsistent widths are format errors") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    write_dataset(path, three_exchanges(layers_of({2})));
    const auto original = slurp(path);

    auto bytes = original;
    bytes[6] = 9;  // format_version
    spit(path, bytes);
    try {
        DatasetReader reader(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "format_version");
    }

    bytes = original;
    bytes[10] = 3;  // feature_dim no longer equals the layer width
    spit(path, bytes);
    try {
        DatasetReader reader(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.field() == "feature_dim");
    }
}

TEST_CASE("header claiming 8 features over 9-column records is an integrity error") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    write_dataset(path, three_exchanges(layers_of({9})));
    auto bytes = slurp(path);
    // Header: magic(6) version(4) feature_dim(4) n_layers(2) layer_index(4) width(4).
    REQUIRE(bytes[10] == 9);
    REQUIRE(bytes[20] == 9);
    bytes[10] = 8;
    bytes[20] = 8;
    spit(path, bytes);

    DatasetReader reader(path);  // the header itself is consistent
    CHECK(reader.manifest().feature_dim == 8);
    try {
        (void)reader.read(0);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(e.record_id() == "first");
        CHECK(std::string(e.what()).find("9 columns") != std::string::npos);
    }
}

TEST_CASE("truncated final record is an integrity error with its id") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    write_dataset(path, three_exchanges(layers_of({4})));
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 5);
    spit(path, bytes);
    DatasetReader reader(path);
    CHECK_NOTHROW((void)reader.read(0));
    try {
        (void)reader.read(2);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        CHECK(e.record_id() == "third");
    }
}

TEST_CASE("index problems are rejected on open") {
    TempDir dir;
    const auto path = dir / "data.astrm";
    write_dataset(path, three_exchanges(layers_of({2})));
    const auto idx = index_path_for(path);
    std::ifstream in(idx);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    in.close();
    auto rewrite = [&](const std::vector<std::string>& ls) {
        std::ofstream out(idx, std::ios::trunc);
        for (const auto& l : ls) out << l << '\n';
    };

    SUBCASE("duplicate id") {
        auto ls = lines;
        ls.back().replace(0, ls.back().find('\t'), "second");
        rewrite(ls);
        CHECK_THROWS_AS(DatasetReader{path}, FormatError);
    }
    SUBCASE("offsets out of order") {
        auto ls = lines;
        std::swap(ls[ls.size() - 1], ls[ls.size() - 2]);
        rewrite(ls);
        CHECK_THROWS_AS(DatasetReader{path}, FormatError);
    }
    SUBCASE("label out of range") {
        auto ls = lines;
        auto& l = ls.back();
        const auto a = l.find('\t', l.find('\t') + 1);
        const auto b = l.find('\t', a + 1);
        l.replace(a + 1, b - a - 1, "1.5");
        rewrite(ls);
        CHECK_THROWS_AS(DatasetReader{path}, IntegrityError);
    }
    SUBCASE("three-column lines default to imported") {
        std::vector<std::string> ls;
        for (auto l : lines) ls.push_back(l[0] == '#' ? l : l.substr(0, l.rfind('\t')));
        rewrite(ls);
        DatasetReader reader(path);
        for (const auto& e : reader.manifest().entries) CHECK(e.source == Source::imported);
    }
}

TEST_CASE("writer rejects invalid input") {
    TempDir dir;
    const auto layers = layers_of({3});
    auto xs = three_exchanges(layers);
    SUBCASE("duplicate id") {
        xs[1].id = xs[0].id;
        CHECK_THROWS_AS(write_dataset(dir / "a", xs), DataError);
    }
    SUBCASE("label outside [0,1]") {
        xs[2].label = -0.1;
        CHECK_THROWS_AS(write_dataset(dir / "b", xs), IntegrityError);
    }
    SUBCASE("invalid sequence") {
        xs[0].sequence.features[2] = std::nanf("");
        CHECK_THROWS_AS(write_dataset(dir / "c", xs), IntegrityError);
    }
    SUBCASE("layer map differs") {
        std::mt19937_64 rng(1);
        xs.push_back(testsupport::random_exchange(rng, layers_of({2, 1}), 3, 1, 0.0, "odd"));
        CHECK_THROWS_AS(write_dataset(dir / "d", xs), IntegrityError);
    }
}

TEST_CASE("missing file") {
    CHECK_THROWS_AS(DatasetReader{"/nonexistent/data.astrm"}, DataError);
}
