#pragma once

#include <string>
#include <string_view>

namespace obk {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);
// Strict RFC 4648 with padding; throws Error(InvalidValue) on bad input.
std::string base64_decode(std::string_view text);

// Equal-length-independent comparison whose runtime does not depend on where
// the inputs differ.
bool constant_time_equals(std::string_view a, std::string_view b);

}  // namespace obk
