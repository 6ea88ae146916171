#include "resdecomp/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "resdecomp/errors.hpp"

namespace resdecomp {

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

std::uint32_t get_u32_le(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

void put_f32_le(std::string& out, float f) {
    put_u32_le(out, std::bit_cast<std::uint32_t>(f));
}

std::uint64_t element_count(const std::vector<std::uint64_t>& shape) {
    std::uint64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

}  // namespace

const ContainerTensor& Container::tensor(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw FormatError("container: missing tensor '" + std::string(name) + "'");
}

std::string encode_container(std::string_view magic, const Container& container) {
    if (magic.size() != 4) {
        throw InputError("container magic must be 4 bytes");
    }
    nlohmann::json header = container.header;
    nlohmann::json table = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& t : container.tensors) {
        if (element_count(t.shape) != t.data.size()) {
            throw DimensionError("container: tensor '" + t.name + "' shape does not match data");
        }
        table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += t.data.size() * sizeof(float);
    }
    header["tensors"] = std::move(table);
    const std::string header_text = header.dump();

    std::string out;
    out.reserve(8 + header_text.size() + offset);
    out.append(magic);
    put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.append(header_text);
    for (const auto& t : container.tensors) {
        for (float f : t.data) put_f32_le(out, f);
    }
    return out;
}

Container decode_container(std::string_view magic, std::string_view bytes) {
    if (bytes.size() < 8 || bytes.substr(0, 4) != magic) {
        throw FormatError("container: bad magic, expected '" + std::string(magic) + "'");
    }
    const std::uint32_t header_len = get_u32_le(bytes, 4);
    if (8ull + header_len > bytes.size()) {
        throw FormatError("container: truncated header");
    }
    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.substr(8, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container: header is not valid JSON: ") + e.what());
    }
    if (!c.header.contains("tensors") || !c.header["tensors"].is_array()) {
        throw FormatError("container: header has no tensor table");
    }
    const std::string_view payload = bytes.substr(8 + header_len);
    for (const auto& entry : c.header["tensors"]) {
        ContainerTensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t n = element_count(t.shape);
        if (offset + n * sizeof(float) > payload.size()) {
            throw FormatError("container: tensor '" + t.name + "' runs past end of payload");
        }
        t.data.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            t.data[i] = std::bit_cast<float>(get_u32_le(payload, offset + i * sizeof(float)));
        }
        c.tensors.push_back(std::move(t));
    }
    c.header.erase("tensors");
    return c;
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace resdecomp
