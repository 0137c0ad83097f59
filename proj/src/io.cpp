#include "tomo/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <cctype>
#include <fstream>
#include <sstream>
#include <vector>

#include "tomo/error.hpp"

namespace tomo {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put_le(std::string& out, T value)
{
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    std::array<char, 8> buf;
    for (int i = 0; i < 8; ++i)
        buf[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    out.append(buf.data(), 8);
}

template <class T>
T get_le(const char* p)
{
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

struct Header {
    std::vector<std::string> fields;
    std::size_t payload_offset = 0;
};

Header split_header(const std::string& bytes, const std::string& magic)
{
    constexpr std::size_t max_header = 1024;
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos || nl > max_header)
        throw IoError("missing header line");
    Header h;
    std::istringstream ls(bytes.substr(0, nl));
    for (std::string tok; ls >> tok;)
        h.fields.push_back(tok);
    if (h.fields.empty() || h.fields[0] != magic)
        throw IoError("bad magic, expected " + magic);
    if (h.fields.size() < 2 || h.fields[1] != "1")
        throw IoError("unsupported " + magic + " version");
    h.payload_offset = nl + 1;
    return h;
}

long long parse_count(const std::string& s)
{
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw IoError("bad integer in header: " + s);
    }
    if (pos != s.size() || v < 0)
        throw IoError("bad integer in header: " + s);
    return v;
}

double parse_real(const std::string& s)
{
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw IoError("bad number in header: " + s);
    }
    if (pos != s.size())
        throw IoError("bad number in header: " + s);
    return v;
}

void expect_payload(const std::string& bytes, std::size_t offset, std::size_t needed)
{
    if (bytes.size() < offset + needed)
        throw IoError("truncated payload");
    if (bytes.size() > offset + needed)
        throw IoError("trailing bytes after payload");
}

Eigen::VectorXd read_doubles(const std::string& bytes, std::size_t offset, std::size_t n)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double x = get_le<double>(bytes.data() + offset + 8 * i);
        if (!std::isfinite(x))
            throw IoError("non-finite value in payload");
        v[static_cast<Eigen::Index>(i)] = x;
    }
    return v;
}

template <class Fn>
auto rethrow_as_io(Fn&& fn)
{
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw IoError(e.what());
    }
}

} // namespace

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string encode_image(const Image& img)
{
    std::string out = "TOMO-IMG 1 " + std::to_string(img.grid.nx) + " " + std::to_string(img.grid.ny) + " " +
                      format_double(img.grid.dx) + " " + format_double(img.grid.dy) + "\n";
    out.reserve(out.size() + 8 * img.grid.size());
    for (double v : img.values)
        put_le(out, v);
    return out;
}

Image decode_image(const std::string& bytes)
{
    const Header h = split_header(bytes, "TOMO-IMG");
    if (h.fields.size() != 6)
        throw IoError("malformed TOMO-IMG header");
    const GridSpec grid{static_cast<int>(parse_count(h.fields[2])), static_cast<int>(parse_count(h.fields[3])),
                        parse_real(h.fields[4]), parse_real(h.fields[5])};
    rethrow_as_io([&] { grid.validate(); return 0; });
    expect_payload(bytes, h.payload_offset, 8 * grid.size());
    return rethrow_as_io([&] { return Image(grid, read_doubles(bytes, h.payload_offset, grid.size())); });
}

std::string encode_sinogram(const Sinogram& sino)
{
    std::string out = "TOMO-SIN 1 " + std::to_string(sino.n_angles()) + " " + std::to_string(sino.nbins) + "\n";
    for (double a : sino.angles)
        put_le(out, a);
    for (double v : sino.values)
        put_le(out, v);
    return out;
}

Sinogram decode_sinogram(const std::string& bytes)
{
    const Header h = split_header(bytes, "TOMO-SIN");
    if (h.fields.size() != 4)
        throw IoError("malformed TOMO-SIN header");
    const auto na = static_cast<std::size_t>(parse_count(h.fields[2]));
    const auto nb = static_cast<std::size_t>(parse_count(h.fields[3]));
    expect_payload(bytes, h.payload_offset, 8 * na + 8 * na * nb);
    const Eigen::VectorXd angles = read_doubles(bytes, h.payload_offset, na);
    Eigen::VectorXd values = read_doubles(bytes, h.payload_offset + 8 * na, na * nb);
    return rethrow_as_io([&] {
        return Sinogram(std::vector<double>(angles.begin(), angles.end()), static_cast<int>(nb), std::move(values));
    });
}

std::string encode_mask(const RegionMask& mask)
{
    if (mask.label.empty() || std::any_of(mask.label.begin(), mask.label.end(), [](unsigned char c) { return std::isspace(c); }))
        throw ConfigError("mask label must be a non-empty word");
    std::string out = "TOMO-MSK 1 " + std::to_string(mask.grid.nx) + " " + std::to_string(mask.grid.ny) + " " + mask.label + "\n";
    for (bool b : mask.membership)
        out.push_back(b ? '\1' : '\0');
    return out;
}

RegionMask decode_mask(const std::string& bytes)
{
    const Header h = split_header(bytes, "TOMO-MSK");
    if (h.fields.size() != 5)
        throw IoError("malformed TOMO-MSK header");
    const GridSpec grid{static_cast<int>(parse_count(h.fields[2])), static_cast<int>(parse_count(h.fields[3])), 1.0, 1.0};
    rethrow_as_io([&] { grid.validate(); return 0; });
    expect_payload(bytes, h.payload_offset, grid.size());
    std::vector<bool> m(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const char c = bytes[h.payload_offset + i];
        if (c != '\0' && c != '\1')
            throw IoError("mask bytes must be 0 or 1");
        m[i] = c == '\1';
    }
    return RegionMask(grid, std::move(m), h.fields[4]);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("write failed for " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_image(img)); }
Image read_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }
void write_sinogram(const std::filesystem::path& path, const Sinogram& sino) { write_file(path, encode_sinogram(sino)); }
Sinogram read_sinogram(const std::filesystem::path& path) { return decode_sinogram(read_file(path)); }
void write_mask(const std::filesystem::path& path, const RegionMask& mask) { write_file(path, encode_mask(mask)); }
RegionMask read_mask(const std::filesystem::path& path) { return decode_mask(read_file(path)); }

void write_csr(const std::filesystem::path& path, const CsrMatrix& m_in)
{
    CsrMatrix m = m_in;
    m.makeCompressed();
    std::string out = "TOMO-CSR 1 " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " + std::to_string(m.nonZeros()) + "\n";
    for (Eigen::Index r = 0; r <= m.rows(); ++r)
        put_le<std::int64_t>(out, m.outerIndexPtr()[r]);
    for (Eigen::Index k = 0; k < m.nonZeros(); ++k)
        put_le<std::int64_t>(out, m.innerIndexPtr()[k]);
    for (Eigen::Index k = 0; k < m.nonZeros(); ++k)
        put_le(out, m.valuePtr()[k]);
    write_file(path, out);
}

CsrMatrix read_csr(const std::filesystem::path& path)
{
    const std::string bytes = read_file(path);
    const Header h = split_header(bytes, "TOMO-CSR");
    if (h.fields.size() != 5)
        throw IoError("malformed TOMO-CSR header");
    const auto nrows = parse_count(h.fields[2]);
    const auto ncols = parse_count(h.fields[3]);
    const auto nnz = parse_count(h.fields[4]);
    expect_payload(bytes, h.payload_offset, static_cast<std::size_t>(8 * (nrows + 1) + 16 * nnz));
    const char* p = bytes.data() + h.payload_offset;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nnz));
    const char* idx = p + 8 * (nrows + 1);
    const char* val = idx + 8 * nnz;
    for (long long r = 0; r < nrows; ++r) {
        const auto lo = get_le<std::int64_t>(p + 8 * r);
        const auto hi = get_le<std::int64_t>(p + 8 * (r + 1));
        if (lo < 0 || hi < lo || hi > nnz)
            throw IoError("bad CSR offsets");
        for (auto k = lo; k < hi; ++k) {
            const auto c = get_le<std::int64_t>(idx + 8 * k);
            if (c < 0 || c >= ncols)
                throw IoError("CSR column index out of range");
            trips.emplace_back(static_cast<int>(r), static_cast<int>(c), get_le<double>(val + 8 * k));
        }
    }
    CsrMatrix m(nrows, ncols);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

void write_pgm(const std::filesystem::path& path, const Image& img)
{
    const double lo = img.values.minCoeff();
    const double hi = img.values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    std::string out = "P5\n" + std::to_string(img.grid.nx) + " " + std::to_string(img.grid.ny) + "\n65535\n";
    for (int iy = img.grid.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < img.grid.nx; ++ix) {
            const double t = (img.at(ix, iy) - lo) / span;
            const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
            out.push_back(static_cast<char>(q >> 8));
            out.push_back(static_cast<char>(q & 0xffu));
        }
    }
    write_file(path, out);
    write_file(path.string() + ".scale.txt", "min=" + format_double(lo) + "\nmax=" + format_double(hi) + "\n");
}

KeyValues parse_key_values(const std::string& text)
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            return std::string{};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError("duplicate key '" + key + "'");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string format_key_values(const KeyValues& kv)
{
    std::string out;
    for (const auto& [k, v] : kv)
        out += k + "=" + v + "\n";
    return out;
}

} // namespace tomo
