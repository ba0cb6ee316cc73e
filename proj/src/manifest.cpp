#include "cpl/manifest.hpp"

#include <array>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>

#include "cpl/errors.hpp"

namespace cpl {

namespace {

// Compact SHA-256 (FIPS 180-4).
struct Sha256 {
    std::array<std::uint32_t, 8> state = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                                          0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    std::uint64_t total = 0;
    std::array<unsigned char, 64> buffer{};
    std::size_t buffered = 0;

    static constexpr std::array<std::uint32_t, 64> k = {
        0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u, 0x923f82a4u, 0xab1c5ed5u,
        0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u, 0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u,
        0xe49b69c1u, 0xefbe4786u, 0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
        0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u, 0x06ca6351u, 0x14292967u,
        0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u, 0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u,
        0xa2bfe8a1u, 0xa81a664bu, 0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
        0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au, 0x5b9cca4fu, 0x682e6ff3u,
        0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u, 0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};

    static std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

    void process(const unsigned char* block) {
        std::array<std::uint32_t, 64> w{};
        for (int i = 0; i < 16; ++i) {
            w[i] = (std::uint32_t(block[4 * i]) << 24) | (std::uint32_t(block[4 * i + 1]) << 16) |
                   (std::uint32_t(block[4 * i + 2]) << 8) | std::uint32_t(block[4 * i + 3]);
        }
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        auto [a, b, c, d, e, f, g, h] = state;
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state[0] += a;
        state[1] += b;
        state[2] += c;
        state[3] += d;
        state[4] += e;
        state[5] += f;
        state[6] += g;
        state[7] += h;
    }

    void update(const unsigned char* data, std::size_t len) {
        total += len;
        while (len > 0) {
            const std::size_t take = std::min(len, buffer.size() - buffered);
            std::memcpy(buffer.data() + buffered, data, take);
            buffered += take;
            data += take;
            len -= take;
            if (buffered == buffer.size()) {
                process(buffer.data());
                buffered = 0;
            }
        }
    }

    std::string finish() {
        const std::uint64_t bit_len = total * 8;
        const unsigned char pad = 0x80;
        update(&pad, 1);
        const unsigned char zero = 0x00;
        while (buffered != 56) update(&zero, 1);
        unsigned char len_bytes[8];
        for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(bit_len >> (56 - 8 * i));
        update(len_bytes, 8);

        static const char* hex = "0123456789abcdef";
        std::string out;
        out.reserve(64);
        for (std::uint32_t word : state) {
            for (int shift = 28; shift >= 0; shift -= 4) out.push_back(hex[(word >> shift) & 0xf]);
        }
        return out;
    }
};

using ojson = nlohmann::ordered_json;

ojson artifact_json(const ArtifactRef& ref) {
    ojson j;
    j["name"] = ref.name;
    j["path"] = ref.path;
    j["sha256"] = ref.sha256;
    return j;
}

ArtifactRef artifact_from_json(const ojson& j) {
    return {j.at("name").get<std::string>(), j.at("path").get<std::string>(),
            j.at("sha256").get<std::string>()};
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return h.finish();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("sha256: cannot read " + path.string());
    Sha256 h;
    std::array<char, 1 << 16> chunk;
    while (is) {
        is.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
        h.update(reinterpret_cast<const unsigned char*>(chunk.data()), static_cast<std::size_t>(is.gcount()));
    }
    return h.finish();
}

std::string manifest_timestamp() {
    std::time_t t;
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void Manifest::save(const std::filesystem::path& path) const {
    ojson j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    ojson ins = ojson::array();
    for (const auto& ref : inputs) ins.push_back(artifact_json(ref));
    j["inputs"] = std::move(ins);
    ojson outs = ojson::array();
    for (const auto& ref : outputs) outs.push_back(artifact_json(ref));
    j["outputs"] = std::move(outs);
    j["timestamp"] = timestamp;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("manifest: cannot write " + path.string());
    os << j.dump(2) << '\n';
}

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("manifest: cannot read " + path.string());
    ojson j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw UsageError("manifest: bad JSON in " + path.string() + " (" + e.what() + ")");
    }
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& ref : j.at("inputs")) m.inputs.push_back(artifact_from_json(ref));
    for (const auto& ref : j.at("outputs")) m.outputs.push_back(artifact_from_json(ref));
    m.timestamp = j.value("timestamp", "");
    return m;
}

std::string Manifest::output_hash(std::string_view name) const {
    for (const auto& ref : outputs) {
        if (ref.name == name) return ref.sha256;
    }
    return {};
}

std::filesystem::path require_artifact(const std::filesystem::path& dir, std::string_view file) {
    const auto path = dir / file;
    if (!std::filesystem::exists(path)) {
        throw ConfigError("missing artifact " + path.string());
    }
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        const auto manifest = Manifest::load(manifest_path);
        const auto recorded = manifest.output_hash(file);
        if (!recorded.empty()) {
            const auto actual = sha256_file(path);
            if (actual != recorded) throw StaleArtifactError(path.string(), recorded, actual);
        }
    }
    return path;
}

}  // namespace cpl
