#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cpl/errors.hpp"
#include "cpl/manifest.hpp"

using namespace cpl;
namespace fs = std::filesystem;

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // exercise the block boundary
    CHECK(sha256_hex(std::string(64, 'a')) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
}

TEST_CASE("sha256_file hashes the file content") {
    const auto path = fs::temp_directory_path() / "cpl_sha_test.bin";
    std::ofstream(path, std::ios::binary) << "abc";
    CHECK(sha256_file(path) == sha256_hex("abc"));
}

TEST_CASE("manifest save/load round-trip") {
    Manifest m;
    m.command = "prepare";
    m.config["rho"] = 0.5;
    m.seed = 42;
    m.inputs.push_back({"in", "path/in.jsonl", sha256_hex("x")});
    m.outputs.push_back({"out", "path/out.jsonl", sha256_hex("y")});
    m.timestamp = "2021-01-01T00:00:00Z";
    const auto path = fs::temp_directory_path() / "cpl_manifest_test.json";
    m.save(path);
    const auto loaded = Manifest::load(path);
    CHECK(loaded.command == "prepare");
    CHECK(loaded.seed == 42);
    CHECK(loaded.config.at("rho").get<double>() == 0.5);
    REQUIRE(loaded.inputs.size() == 1);
    CHECK(loaded.outputs[0].sha256 == sha256_hex("y"));
    CHECK(loaded.output_hash("out") == sha256_hex("y"));
    CHECK(loaded.output_hash("absent").empty());
}

TEST_CASE("require_artifact verifies recorded hashes") {
    const auto dir = fs::temp_directory_path() / "cpl_artifact_test";
    fs::create_directories(dir);
    std::ofstream(dir / "data.txt", std::ios::binary) << "payload";

    Manifest m;
    m.command = "stage";
    m.outputs.push_back({"data.txt", (dir / "data.txt").string(), sha256_file(dir / "data.txt")});
    m.timestamp = manifest_timestamp();
    m.save(dir / "manifest.json");

    CHECK(require_artifact(dir, "data.txt") == dir / "data.txt");

    SUBCASE("stale content is detected") {
        std::ofstream(dir / "data.txt", std::ios::binary) << "tampered";
        CHECK_THROWS_AS(require_artifact(dir, "data.txt"), StaleArtifactError);
    }
    SUBCASE("missing files are reported") {
        CHECK_THROWS_AS(require_artifact(dir, "nope.txt"), ConfigError);
    }
}

TEST_CASE("manifest timestamp honors SOURCE_DATE_EPOCH") {
    setenv("SOURCE_DATE_EPOCH", "0", 1);
    CHECK(manifest_timestamp() == "1970-01-01T00:00:00Z");
    unsetenv("SOURCE_DATE_EPOCH");
}
