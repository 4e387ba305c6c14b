#include "prunetree/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "prunetree/error.hpp"

namespace prunetree {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[at + i]) << (8 * i);
    return v;
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

float get_f32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= std::uint32_t(b[at + i]) << (8 * i);
    return std::bit_cast<float>(u);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& model) {
    check_parameter_shapes(model.spec, model.params);
    std::string text = to_canonical_text(model.spec);
    text += "state " + std::to_string(model.rng_seed) + " " + std::to_string(model.epoch_counter) + "\n";

    std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for_each_tensor(model.params, [&](const std::vector<float>& v) {
        for (float f : v) put_f32(out, f);
    });
    put_u64(out, fnv1a64(out));
    return out;
}

ModelState deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t magic_len = sizeof(kCheckpointMagic);
    if (bytes.size() < magic_len + 16 || std::memcmp(bytes.data(), kCheckpointMagic, magic_len) != 0)
        throw IoError("checkpoint: bad magic");
    const std::size_t body = bytes.size() - 8;
    if (fnv1a64(bytes.first(body)) != get_u64(bytes, body)) throw IoError("checkpoint: checksum mismatch");

    const std::uint64_t text_len = get_u64(bytes, magic_len);
    const std::size_t text_at = magic_len + 8;
    if (text_len > body - text_at) throw IoError("checkpoint: text block overruns file");
    const std::string text(reinterpret_cast<const char*>(bytes.data() + text_at), text_len);

    const auto state_pos = text.rfind("state ");
    if (state_pos == std::string::npos) throw IoError("checkpoint: missing state line");
    ModelState m;
    m.spec = parse_spec_text(text.substr(0, state_pos));
    std::istringstream st(text.substr(state_pos + 6));
    if (!(st >> m.rng_seed >> m.epoch_counter)) throw IoError("checkpoint: malformed state line");

    m.params = zero_parameters<float>(m.spec);
    std::size_t at = text_at + text_len;
    const std::size_t expected = parameter_count(m.spec) * 4;
    if (body - at != expected)
        throw IoError("checkpoint: parameter payload has " + std::to_string(body - at) + " bytes, spec needs " +
                      std::to_string(expected));
    for_each_tensor(m.params, [&](std::vector<float>& v) {
        for (float& f : v) {
            f = get_f32(bytes, at);
            at += 4;
        }
    });
    return m;
}

void save_checkpoint(const ModelState& model, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(path.string() + ": cannot open checkpoint for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!os) throw IoError(path.string() + ": write failed");
}

ModelState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(path.string() + ": cannot open checkpoint");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(bytes);
    } catch (const Error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

}  // namespace prunetree
