#pragma once

#include "squashfix/bytes.hpp"

#include <string>

namespace squashfix {

/// Lower-case hex digest.
std::string sha256_hex(ByteView data);

} // namespace squashfix
