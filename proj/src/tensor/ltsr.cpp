#include "lvdiag/tensor/ltsr.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace lvdiag {
namespace {

constexpr std::array<char, 4> kMagic{'L', 'T', 'S', 'R'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

template <typename U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> buf;
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = char((v >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf;
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) throw LtsrError("ltsr: truncated stream");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= U(buf[i]) << (8 * i);
    return v;
}

} // namespace

void write_ltsr(std::ostream& os, const Tensor& t) {
    if (t.rank() > 255) throw LtsrError("ltsr: rank exceeds 255");
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint8_t>(os, kVersion);
    put_le<std::uint8_t>(os, kDtypeF64);
    put_le<std::uint8_t>(os, std::uint8_t(t.rank()));
    for (auto d : t.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw LtsrError("ltsr: dimension exceeds u32");
        put_le<std::uint32_t>(os, std::uint32_t(d));
    }
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw LtsrError("ltsr: write failed");
}

Tensor read_ltsr(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw LtsrError("ltsr: bad magic");
    const auto version = get_le<std::uint8_t>(is);
    if (version != kVersion) throw LtsrError("ltsr: unsupported version " + std::to_string(version));
    const auto dtype = get_le<std::uint8_t>(is);
    if (dtype != kDtypeF64) throw LtsrError("ltsr: unsupported dtype code " + std::to_string(dtype));
    const auto ndim = get_le<std::uint8_t>(is);
    if (ndim == 0) throw LtsrError("ltsr: zero-rank tensor");
    Shape shape(ndim);
    for (auto& d : shape) {
        d = get_le<std::uint32_t>(is);
        if (d == 0) throw LtsrError("ltsr: zero dimension");
    }
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    return Tensor(std::move(shape), std::move(data));
}

void save_ltsr(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw LtsrError("ltsr: cannot open " + path.string() + " for writing");
    write_ltsr(os, t);
}

Tensor load_ltsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LtsrError("ltsr: cannot open " + path.string());
    try {
        return read_ltsr(is);
    } catch (const LtsrError& e) {
        throw LtsrError(std::string(e.what()) + " (" + path.string() + ")");
    }
}

} // namespace lvdiag
