#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "dmsbl/types.hpp"

namespace dmsbl::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError(std::string("truncated file while reading ") + what);
    return v;
}

}  // namespace dmsbl::binio
