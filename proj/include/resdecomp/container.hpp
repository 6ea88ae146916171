#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace resdecomp {

// Binary tensor container shared by weight files ("TDW1") and contribution
// caches ("TDC1"):
//
//   magic[4] | u32 little-endian header length | JSON header | float32 LE payload
//
// The header carries a "tensors" table of {name, shape, offset}; offsets are
// byte offsets into the payload, which starts right after the header.
struct ContainerTensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> data;
};

struct Container {
    nlohmann::json header = nlohmann::json::object();  // without the "tensors" table
    std::vector<ContainerTensor> tensors;

    const ContainerTensor& tensor(std::string_view name) const;
};

std::string encode_container(std::string_view magic, const Container& container);
Container decode_container(std::string_view magic, std::string_view bytes);

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace resdecomp
