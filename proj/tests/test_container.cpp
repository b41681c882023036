#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackclf/container.hpp"
#include "crackclf/nn.hpp"

using namespace crackclf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("crackclf_container_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Tensor random_tensor(Rng& rng, std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, 3.0);
    return t;
}

}  // namespace

TEST_CASE("f64 tensors survive a save/load round trip bit for bit", "[container]") {
    const fs::path dir = temp_dir("f64");
    Rng rng(411);

    Container c;
    c.meta["purpose"] = "round-trip";
    c.add("weights/conv1", random_tensor(rng, {8, 3, 3, 3}));
    c.add("weights/bias", random_tensor(rng, {8}));
    c.add("odd_payload", random_tensor(rng, {3, 5}));  // 15 doubles, exercises padding
    c.add("scalar", Tensor::scalar(-0.0));
    const std::string path = (dir / "pack.cclf").string();
    c.save(path);

    const Container back = Container::load(path);
    REQUIRE(back.tensors().size() == 4);
    REQUIRE(back.meta.at("purpose") == "round-trip");
    for (const auto& nt : c.tensors()) {
        const Tensor& orig = nt.value;
        const Tensor& got = back.at(nt.name);
        REQUIRE(got.same_shape(orig));
        for (int64_t i = 0; i < orig.numel(); ++i) {
            const double ov = orig[i], gv = got[i];
            uint64_t a = 0, b = 0;
            std::memcpy(&a, &ov, 8);
            std::memcpy(&b, &gv, 8);
            REQUIRE(a == b);
        }
    }
}

TEST_CASE("f32 storage narrows values to float precision", "[container]") {
    const fs::path dir = temp_dir("f32");
    Container c;
    Tensor t({3}, {1.0 / 3.0, -2.5, 1e-40});
    c.add("probs", t, Dtype::F32);
    const std::string path = (dir / "pack.cclf").string();
    c.save(path);

    const Container back = Container::load(path);
    const Tensor& got = back.at("probs");
    for (int64_t i = 0; i < t.numel(); ++i)
        REQUIRE(got[i] == static_cast<double>(static_cast<float>(t[i])));
}

TEST_CASE("u8 storage rounds and clamps to the byte range", "[container]") {
    const fs::path dir = temp_dir("u8");
    Container c;
    Tensor t({6}, {-3.0, 0.0, 0.49, 0.51, 254.7, 300.0});
    c.add("mask", t, Dtype::U8);
    const std::string path = (dir / "pack.cclf").string();
    c.save(path);

    const Container back = Container::load(path);
    const Tensor& got = back.at("mask");
    const std::vector<double> want{0.0, 0.0, 0.0, 1.0, 255.0, 255.0};
    for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got[i] == want[static_cast<size_t>(i)]);
}

TEST_CASE("payload offsets are 8-aligned regardless of dtype mix", "[container]") {
    const fs::path dir = temp_dir("align");
    Container c;
    Rng rng(7);
    c.add("a", random_tensor(rng, {5}), Dtype::U8);      // 5 bytes
    c.add("b", random_tensor(rng, {3}), Dtype::F32);     // 12 bytes
    c.add("c", random_tensor(rng, {2, 2}));              // 32 bytes
    const std::string path = (dir / "pack.cclf").string();
    c.save(path);

    // parse the header by hand: magic(8) version(4) reserved(4) json_len(8)
    std::ifstream in(path, std::ios::binary);
    in.seekg(16);
    uint64_t json_len = 0;
    unsigned char raw[8];
    in.read(reinterpret_cast<char*>(raw), 8);
    for (int k = 7; k >= 0; --k) json_len = (json_len << 8) | raw[k];
    std::string header(json_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(json_len));
    const auto j = nlohmann::json::parse(header);
    for (const auto& entry : j.at("tensors")) {
        REQUIRE(entry.at("offset").get<int64_t>() % 8 == 0);
    }

    const Container back = Container::load(path);
    REQUIRE(back.at("c").numel() == 4);
}

TEST_CASE("empty and duplicate tensor names are rejected", "[container]") {
    Container c;
    REQUIRE_THROWS_AS(c.add("", Tensor::scalar(1.0)), ContractViolation);
    c.add("x", Tensor::scalar(1.0));
    REQUIRE_THROWS_AS(c.add("x", Tensor::scalar(2.0)), ContractViolation);
    REQUIRE(c.find("missing") == nullptr);
    REQUIRE_THROWS_AS(c.at("missing"), IoError);
}

TEST_CASE("corrupt archives fail with IoError, not garbage tensors", "[container]") {
    const fs::path dir = temp_dir("corrupt");
    Container c;
    Rng rng(99);
    c.add("w", random_tensor(rng, {4, 4}));
    const std::string path = (dir / "pack.cclf").string();
    c.save(path);

    SECTION("missing file") {
        REQUIRE_THROWS_AS(Container::load((dir / "nope.cclf").string()), IoError);
    }
    SECTION("bad magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("WRONGMAG", 8);
        f.close();
        REQUIRE_THROWS_AS(Container::load(path), IoError);
    }
    SECTION("truncated payload") {
        const auto full = fs::file_size(path);
        fs::resize_file(path, full - 16);
        REQUIRE_THROWS_AS(Container::load(path), IoError);
    }
}
