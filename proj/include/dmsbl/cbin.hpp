#pragma once

#include <string>

#include "dmsbl/types.hpp"

namespace dmsbl {

// "CSIG", u32 version = 1, u64 length, length x (f32 re, f32 im), little-endian.
void write_cbin(const std::string& path, const CVector& x);
CVector read_cbin(const std::string& path);

}  // namespace dmsbl
