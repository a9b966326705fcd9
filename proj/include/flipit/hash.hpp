#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace flipit {

// FIPS 180-4 SHA-256; returns the lowercase hex digest. Used for config
// hashes embedded in result files and for byte-identity checks, not for
// anything security sensitive.
std::string sha256_hex(std::string_view data);

std::string sha256_file_hex(const std::string& path);

}  // namespace flipit
