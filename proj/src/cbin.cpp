#include "dmsbl/cbin.hpp"

#include <fstream>

#include "dmsbl/binio.hpp"

namespace dmsbl {

void write_cbin(const std::string& path, const CVector& x) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write("CSIG", 4);
    binio::put<std::uint32_t>(os, 1);
    binio::put<std::uint64_t>(os, static_cast<std::uint64_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        binio::put<float>(os, static_cast<float>(x(i).real()));
        binio::put<float>(os, static_cast<float>(x(i).imag()));
    }
    if (!os) throw IoError("write failed: " + path);
}

CVector read_cbin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CSIG", 4) != 0) throw IoError(path + ": bad magic, expected CSIG");
    auto version = binio::get<std::uint32_t>(is, "version");
    if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version));
    auto n = binio::get<std::uint64_t>(is, "length");
    CVector x(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        float re = binio::get<float>(is, "samples");
        float im = binio::get<float>(is, "samples");
        x(static_cast<Eigen::Index>(i)) = cd(re, im);
    }
    return x;
}

}  // namespace dmsbl
