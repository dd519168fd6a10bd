#include "dva/weights_io.hpp"

#include <cstring>
#include <fstream>

#include "dva/errors.hpp"

namespace dva {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'W', '1'};

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw ParseError(path + ": truncated NTW1 file while reading " + what);
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos]) |
                                            (static_cast<unsigned char>(buf[pos + 1]) << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
};

}  // namespace

void WeightFile::add(std::string name, std::vector<int> shape, std::vector<float> data) {
    if (index_.count(name)) throw ContractError("NTW1: duplicate entry name '" + name + "'");
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("NTW1: non-positive dim in entry '" + name + "'");
        n *= d;
    }
    if (n != static_cast<std::int64_t>(data.size())) {
        throw DimensionError("NTW1: entry '" + name + "' data length does not match shape");
    }
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(shape), std::move(data)});
}

bool WeightFile::contains(const std::string& name) const { return index_.count(name) != 0; }

const WeightEntry& WeightFile::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("NTW1: no entry named '" + name + "'");
    return entries_[it->second];
}

void WeightFile::write(const std::string& path) const {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        if (e.name.size() > 0xffff) throw ContractError("NTW1: entry name too long");
        if (e.shape.size() > 0xff) throw ContractError("NTW1: entry rank too large");
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.shape.size()));
        for (int d : e.shape) put_u32(out, static_cast<std::uint32_t>(d));
        const std::size_t bytes = e.data.size() * sizeof(float);
        std::size_t off = out.size();
        out.resize(off + bytes);
        std::memcpy(out.data() + off, e.data.data(), bytes);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for '" + path + "'");
}

WeightFile WeightFile::read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf, 0, path};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw ParseError(path + ": bad magic, not an NTW1 file");
    }
    r.pos = 4;
    const std::uint32_t count = r.u32("entry count");
    WeightFile wf;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        std::string name = buf.substr(r.pos, name_len);
        r.pos += name_len;
        const std::uint8_t rank = r.u8("rank");
        std::vector<int> shape(rank);
        std::int64_t n = 1;
        for (int k = 0; k < rank; ++k) {
            std::uint32_t d = r.u32("dim");
            if (d == 0 || d > 0x7fffffff) throw ParseError(path + ": invalid dim in entry '" + name + "'");
            shape[k] = static_cast<int>(d);
            n *= d;
        }
        const std::size_t bytes = static_cast<std::size_t>(n) * sizeof(float);
        r.need(bytes, "tensor data");
        std::vector<float> data(static_cast<std::size_t>(n));
        std::memcpy(data.data(), buf.data() + r.pos, bytes);
        r.pos += bytes;
        wf.add(std::move(name), std::move(shape), std::move(data));
    }
    if (r.pos != buf.size()) {
        throw ParseError(path + ": trailing bytes after last entry");
    }
    return wf;
}

}  // namespace dva
