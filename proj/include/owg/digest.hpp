#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace owg {

std::string sha256_hex(const void* data, size_t n);
std::string sha256_hex(const std::string& s);
std::string sha256_hex(const std::vector<uint8_t>& bytes);

std::string base64_encode(const std::vector<uint8_t>& bytes);

}  // namespace owg
