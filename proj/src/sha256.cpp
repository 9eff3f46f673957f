#include "squashfix/sha256.hpp"

#include <openssl/evp.h>

namespace squashfix {

std::string sha256_hex(ByteView data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_Digest(data.data(), data.size(), digest, &n, EVP_sha256(), nullptr);
    return to_hex(ByteView(digest, n));
}

} // namespace squashfix
